use std::path::{Path, PathBuf};

use bsdb::ensemble::{pretrain_ensemble, Ensemble, EnsembleConfig, TrainTrace};
use bsdb::fsio::write_atomic;
use bsdb::harness::{check_data, evaluate_pretrained, manifest_diff, write_reports, ModelSpec, PretrainedModels, ResultsTable};
use bsdb::nn::TrainConfig;
use bsdb::par::Exec;

use crate::config::CliConfig;
use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const GENERATED_FILES: [&str; 3] = ["source.csv", "target.csv", "target_unlabeled.csv"];

fn prepare_out(dir: &Path, cfg: &CliConfig) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    write_atomic(&dir.join(RESOLVED_CONFIG), cfg.to_json())?;
    Ok(())
}

fn print_traces(traces: &[TrainTrace]) {
    for (b, t) in traces.iter().enumerate() {
        for (e, loss) in t.epoch_losses.iter().enumerate() {
            println!("branch {b} epoch {} loss {loss:.6}", e + 1);
        }
    }
}

/// Pre-trains `ensemble.branches` branches on the source data and writes the
/// checkpoint to `out`.
pub fn pretrain(cfg: &CliConfig, out: &Path, no_bsr: bool) -> CliResult<()> {
    let data = cfg.load_data(false)?;
    prepare_out(out, cfg)?;
    let train = TrainConfig {
        lambda: if no_bsr { 0.0 } else { cfg.train.lambda },
        ..cfg.train.clone()
    };
    let (ens, traces) = pretrain_ensemble(
        &data.source.instances,
        data.source.labels()?,
        data.source.num_classes(),
        &cfg.ensemble,
        &train,
        cfg.seed,
        Exec::from_workers(cfg.workers),
    )?;
    print_traces(&traces);
    ens.save(out)?;
    log::info!("wrote {} branch checkpoint(s) to {}", ens.branches.len(), out.display());
    Ok(())
}

/// Loads matching checkpoints, pre-trains whatever is missing, evaluates all
/// variants and writes the reports to `out`.
pub fn evaluate(cfg: &CliConfig, checkpoints: &[PathBuf], out: &Path) -> CliResult<ResultsTable> {
    let exp = cfg.experiment();
    let exec = Exec::from_workers(cfg.workers);
    let data = cfg.load_data(true)?;
    let input_dim = data.source.dim();
    let num_classes = data.source.num_classes();
    check_data(&exp, &data.target, &data.target_unlabeled, input_dim)?;
    let plan = exp.model_plan();

    let mut models = PretrainedModels::default();
    for dir in checkpoints {
        let manifest = Ensemble::load_manifest(dir)?;
        let Some(spec) = plan.iter().find(|s| s.lambda.to_bits() == manifest.lambda.to_bits()) else {
            log::warn!("{}: lambda = {} is not used by any variant; skipped", dir.display(), manifest.lambda);
            continue;
        };
        let expected = exp.expected_manifest(
            &ModelSpec {
                lambda: manifest.lambda,
                branches: manifest.branches,
            },
            input_dim,
            num_classes,
        );
        let mut diff = manifest_diff(&expected, &manifest);
        if manifest.branches < spec.branches {
            diff.insert(0, format!("branches: expected at least {}, found {}", spec.branches, manifest.branches));
        }
        if !diff.is_empty() {
            return Err(CliError::config(format!(
                "{} does not match the config: {}",
                dir.display(),
                diff.join("; ")
            )));
        }
        if models.for_lambda(manifest.lambda).is_some() {
            log::warn!("{}: another checkpoint already covers lambda = {}; skipped", dir.display(), manifest.lambda);
            continue;
        }
        models.ensembles.push(Ensemble::load(dir)?);
    }

    prepare_out(out, cfg)?;
    for spec in &plan {
        if models.for_lambda(spec.lambda).is_some() {
            continue;
        }
        log::info!("no checkpoint for lambda = {}; pre-training {} branch(es)", spec.lambda, spec.branches);
        let ens_cfg = EnsembleConfig {
            branches: spec.branches,
            ..cfg.ensemble.clone()
        };
        let train = TrainConfig {
            lambda: spec.lambda,
            ..cfg.train.clone()
        };
        let (ens, _) = pretrain_ensemble(
            &data.source.instances,
            data.source.labels()?,
            num_classes,
            &ens_cfg,
            &train,
            cfg.seed,
            exec,
        )?;
        models.ensembles.push(ens);
    }

    let table = evaluate_pretrained(&exp, &models, &data.target, &data.target_unlabeled, exec)?;
    let report = write_reports(out, &table)?;
    print!("{}", report.markdown);
    Ok(table)
}

/// Writes the three synthetic CSV tables, each headed by a metadata comment.
pub fn gen_data(cfg: &CliConfig, out: &Path) -> CliResult<()> {
    if cfg.data.source.is_some() {
        log::warn!("gen-data ignores data.source/target paths");
    }
    let d = cfg.synthetic_domains()?;
    prepare_out(out, cfg)?;
    let meta = cfg.data.synthetic.metadata_line(cfg.generator_seed());
    for (name, table) in GENERATED_FILES.iter().zip([&d.source, &d.target, &d.target_unlabeled]) {
        write_atomic(&out.join(name), format!("{meta}\n{}", table.to_csv_string()))?;
    }
    log::info!("wrote {} to {}", GENERATED_FILES.join(", "), out.display());
    Ok(())
}
