mod common;

use bsdb::ensemble::{pretrain_ensemble, Ensemble, EnsembleConfig, EnsembleManifest};
use bsdb::harness::{emit_report, evaluate_pretrained, pretrain_models, Variant};
use bsdb::nn::TrainConfig;
use bsdb::par::Exec;
use bsdb::Error;

fn small() -> (EnsembleConfig, TrainConfig) {
    (
        EnsembleConfig {
            branches: 3,
            hidden: vec![16, 8],
            share_backbone: false,
        },
        TrainConfig {
            epochs: 4,
            ..Default::default()
        },
    )
}

#[test]
fn pretraining_is_reproducible_and_schedule_independent() {
    let d = common::easy_domains(1);
    let (ens, train) = small();
    let labels = d.source.labels().unwrap();
    let run = |exec| pretrain_ensemble(&d.source.instances, labels, 10, &ens, &train, 3, exec).unwrap();
    let (a, ta) = run(Exec::Sequential);
    let (b, tb) = run(Exec::Parallel { workers: Some(2) });
    let (c, _) = run(Exec::Auto);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(ta, tb);
}

#[test]
fn shared_backbone_stays_shared() {
    let d = common::easy_domains(2);
    let (mut ens, train) = small();
    ens.share_backbone = true;
    let (e, traces) = pretrain_ensemble(&d.source.instances, d.source.labels().unwrap(), 10, &ens, &train, 4, Exec::Auto).unwrap();
    assert_eq!(traces.len(), 1);
    assert!(e.branches.iter().all(|b| b.backbone == e.branches[0].backbone));
    assert_ne!(e.branches[0].basis, e.branches[1].basis);
}

#[test]
fn unregularized_flag_matches_zero_lambda_run() {
    let d = common::easy_domains(3);
    let mut cfg = common::easy_config(5);
    cfg.ensemble.hidden = vec![16, 8];
    cfg.train.epochs = 3;
    cfg.variants = vec![Variant::preset("finetune").unwrap()];
    let (_, traces) = pretrain_models(&cfg, &d.source, Exec::Auto).unwrap();
    let (ens, mut train) = (cfg.ensemble.clone(), cfg.train.clone());
    train.lambda = 0.0;
    let ens = EnsembleConfig { branches: 1, ..ens };
    let (_, direct) = pretrain_ensemble(&d.source.instances, d.source.labels().unwrap(), 10, &ens, &train, 5, Exec::Auto).unwrap();
    assert_eq!(traces[0].0, 0.0);
    assert_eq!(traces[0].1, direct);
}

#[test]
fn evaluation_is_schedule_independent() {
    let d = common::easy_domains(4);
    let mut cfg = common::easy_config(6);
    cfg.ensemble.hidden = vec![16, 8];
    cfg.ensemble.branches = 2;
    cfg.train.epochs = 3;
    cfg.n_episodes = 4;
    cfg.blend.finetune_epochs = 10;
    let (models, _) = pretrain_models(&cfg, &d.source, Exec::Auto).unwrap();
    let seq = evaluate_pretrained(&cfg, &models, &d.target, &d.target_unlabeled, Exec::Sequential).unwrap();
    let par = evaluate_pretrained(&cfg, &models, &d.target, &d.target_unlabeled, Exec::Parallel { workers: Some(3) }).unwrap();
    assert_eq!(seq, par);
    assert_eq!(emit_report(&seq), emit_report(&par));
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let d = common::easy_domains(5);
    let (ens, train) = small();
    let (e, _) = pretrain_ensemble(&d.source.instances, d.source.labels().unwrap(), 10, &ens, &train, 7, Exec::Auto).unwrap();
    let dir = tempfile::tempdir().unwrap();
    e.save(dir.path()).unwrap();
    let back = Ensemble::load(dir.path()).unwrap();
    assert_eq!(back, e);

    let again = tempfile::tempdir().unwrap();
    back.save(again.path()).unwrap();
    for i in 0..3 {
        let f = EnsembleManifest::branch_file(i);
        assert_eq!(
            std::fs::read(dir.path().join(&f)).unwrap(),
            std::fs::read(again.path().join(&f)).unwrap()
        );
    }
}

#[test]
fn corrupt_checkpoint_names_the_file() {
    let d = common::easy_domains(6);
    let (ens, train) = small();
    let (e, _) = pretrain_ensemble(&d.source.instances, d.source.labels().unwrap(), 10, &ens, &train, 8, Exec::Auto).unwrap();
    let dir = tempfile::tempdir().unwrap();
    e.save(dir.path()).unwrap();
    let bad = dir.path().join(EnsembleManifest::branch_file(1));
    std::fs::write(&bad, "bsdb-tensors v1\ntensor basis 2 2\n1 x\n").unwrap();
    match Ensemble::load(dir.path()) {
        Err(Error::Data(msg)) => assert!(msg.contains("branch_01.txt"), "{msg}"),
        other => panic!("expected data error, got {other:?}"),
    }
}
