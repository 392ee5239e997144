use std::hint::black_box;

use bsdb::ensemble::{pretrain_ensemble, EnsembleConfig};
use bsdb::episodic::{make_synthetic_domains, BlendConfig, EpisodeSpec, SyntheticConfig};
use bsdb::harness::{evaluate_pretrained, pretrain_models, ExperimentConfig, Variant};
use bsdb::labelprop::LpConfig;
use bsdb::linalg::RngStream;
use bsdb::nn::TrainConfig;
use bsdb::par::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel { workers: None })]
}

fn domains() -> bsdb::episodic::SyntheticDomains {
    let g = SyntheticConfig {
        source_classes: 10,
        source_per_class: 30,
        target_classes: 6,
        target_per_class: 30,
        target_unlabeled: 100,
        dim: 16,
        ..Default::default()
    };
    make_synthetic_domains(&g, &mut RngStream::new(1)).expect("synthetic data")
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        ensemble: EnsembleConfig {
            branches: 4,
            hidden: vec![64, 32],
            share_backbone: false,
        },
        train: TrainConfig {
            epochs: 5,
            ..Default::default()
        },
        blend: BlendConfig {
            finetune_epochs: 30,
            ..Default::default()
        },
        lp: LpConfig::default(),
        episode: EpisodeSpec {
            ways: 5,
            shots: 5,
            queries: 15,
            unlabeled: 50,
        },
        n_episodes: 8,
        seed: 2,
        variants: Variant::all_presets(),
    }
}

fn bench_pretrain(c: &mut Criterion) {
    let data = domains();
    let cfg = config();
    let labels = data.source.labels().expect("labels");
    let mut group = c.benchmark_group("pretrain_ensemble");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pretrain_ensemble(&data.source.instances, labels, 10, &cfg.ensemble, &cfg.train, cfg.seed, exec)
                    .expect("pretrain")
            })
        });
    }
    group.finish();
}

fn bench_episodes(c: &mut Criterion) {
    let data = domains();
    let cfg = config();
    let (models, _) = pretrain_models(&cfg, &data.source, Exec::Auto).expect("pretrain");
    let mut group = c.benchmark_group("evaluate_episodes");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                evaluate_pretrained(black_box(&cfg), &models, &data.target, &data.target_unlabeled, exec)
                    .expect("evaluate")
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pretrain, bench_episodes);
criterion_main!(benches);
