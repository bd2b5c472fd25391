//! evaluate: score one checkpoint on every prepared test suite.

use std::path::Path;

use kws_core::data::Split;
use kws_core::eval::report::render_csv;
use kws_core::eval::{aggregate, evaluate_all_suites};
use kws_core::model::load_checkpoint;
use kws_core::train::noise_map;

use super::{assemble, write_file};
use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    let ckpt_path = cfg.checkpoint.as_ref().ok_or_else(|| {
        CliError::Config("evaluate needs a model; set checkpoint = <file>".into())
    })?;
    let (meta, params) = load_checkpoint(ckpt_path)?;
    let requested = cfg.model.config();
    if meta.config.variant != requested.variant {
        return Err(CliError::Config(format!(
            "checkpoint {} holds a '{}' model but '{}' was requested",
            ckpt_path.display(),
            meta.config.variant,
            requested.variant
        )));
    }

    let bundle = assemble(cfg, true, true)?;
    if meta.config.n_classes != bundle.manifest.n_classes() {
        return Err(CliError::Config(format!(
            "checkpoint classifies {} classes but the dataset has {}",
            meta.config.n_classes,
            bundle.manifest.n_classes()
        )));
    }
    let suites = bundle.suites.as_ref().expect("suites requested");
    let entries = bundle.manifest.split_entries(Split::Test);
    let noise = noise_map(&bundle.noise);

    let records = evaluate_all_suites(
        &meta.config,
        &params,
        suites,
        &entries,
        &bundle.store,
        &noise,
        &cfg.mfcc,
        bundle.target_samples(),
        cfg.eval.batch_size,
    )?;
    let result = aggregate(&meta.method, &records)?;

    write_file(&dir.join("results.csv"), render_csv(&[result.clone()]).as_bytes(), force)?;
    let json = serde_json::to_string_pretty(&[&result])
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&dir.join("results.json"), json.as_bytes(), force)?;

    println!(
        "evaluated {} on {} suites ({} test items each)",
        result.method,
        records.len(),
        records.first().map_or(0, |r| r.n_items)
    );
    if let Some(clean) = result.clean {
        println!("clean accuracy: {clean:.4}");
    }
    if let (Some(seen), Some(unseen)) = (result.overall_seen, result.overall_unseen) {
        println!("overall accuracy: seen {seen:.4}, unseen {unseen:.4}");
    }
    println!("run dir: {}", dir.display());
    Ok(())
}
