//! train: supervised from scratch for baselines, fine-tuning from a
//! pretraining checkpoint for the d2v-* methods.

use std::path::Path;

use kws_core::train::{run_supervised, DataPolicy, FinetuneSource};

use super::assemble;
use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let source = match cfg.method.pretrain_variant() {
        Some(_) => {
            let path = cfg.checkpoint.clone().ok_or_else(|| {
                CliError::Config(format!(
                    "method '{}' fine-tunes pretrained weights; set checkpoint = <file>",
                    cfg.method.name()
                ))
            })?;
            FinetuneSource::FromCheckpoint(path)
        }
        None => {
            if cfg.checkpoint.is_some() {
                return Err(CliError::Config(format!(
                    "method '{}' trains from scratch; remove the checkpoint setting",
                    cfg.method.name()
                )));
            }
            FinetuneSource::Fresh
        }
    };
    let policy = cfg.method.finetune_policy();
    let bundle = assemble(cfg, false, policy == DataPolicy::Mtr)?;

    let mut train_cfg = cfg.train.clone();
    train_cfg.data_policy = policy;
    let model_cfg = cfg.model.config().with_classes(bundle.manifest.n_classes());

    let outcome = run_supervised(
        &train_cfg,
        &model_cfg,
        &source,
        &bundle.manifest,
        &bundle.store,
        &bundle.noise,
        &cfg.mfcc,
        cfg.seed,
        cfg.method.name(),
        Some(dir),
    )?;
    println!(
        "trained {} [{}]: {} steps, best val accuracy {:.4} (epoch {})",
        cfg.model.name(),
        cfg.method.name(),
        outcome.total_steps,
        outcome.best_val_accuracy,
        outcome.best_epoch
    );
    if let Some(path) = &outcome.best_checkpoint {
        println!("checkpoint: {}", path.display());
    }
    println!("run dir: {}", dir.display());
    Ok(())
}
