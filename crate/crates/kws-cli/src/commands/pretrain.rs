//! pretrain: the self-supervised stage for the d2v-* methods.

use std::path::Path;

use kws_core::pretrain::{run_pretraining, PretrainVariant};

use super::assemble;
use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let variant = cfg.method.pretrain_variant().ok_or_else(|| {
        CliError::Config(format!(
            "method '{}' has no pretraining stage; pick one of the d2v-* methods",
            cfg.method.name()
        ))
    })?;
    let needs_noise = variant != PretrainVariant::Clean;
    let bundle = assemble(cfg, false, needs_noise)?;

    let mut pretrain_cfg = cfg.pretrain.clone();
    pretrain_cfg.variant = variant;
    let model_cfg = cfg.model.config().with_classes(bundle.manifest.n_classes());

    let outcome = run_pretraining(
        &pretrain_cfg,
        &model_cfg,
        &bundle.manifest,
        &bundle.store,
        &bundle.noise,
        &cfg.mfcc,
        cfg.seed,
        Some(dir),
    )?;
    println!(
        "pretrained {} [{}]: {} steps, final loss {:.6}",
        cfg.model.name(),
        variant.name(),
        outcome.total_steps,
        outcome.losses.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(path) = &outcome.final_checkpoint {
        println!("checkpoint: {}", path.display());
    }
    println!("run dir: {}", dir.display());
    Ok(())
}
