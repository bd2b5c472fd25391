//! prepare-data: manifest, splits, and the 43 test suites.

use std::path::Path;

use kws_core::data::Split;

use super::{assemble, write_file};
use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    if cfg.dataset.prepared.is_some() {
        return Err(CliError::Config(
            "prepare-data builds a dataset from scratch; remove dataset.prepared".into(),
        ));
    }
    let bundle = assemble(cfg, true, true)?;
    let manifest = &bundle.manifest;
    let suites = bundle.suites.as_ref().expect("suites requested");

    write_file(&dir.join("manifest.jsonl"), manifest.to_jsonl()?.as_bytes(), force)?;
    let suites_json = serde_json::to_string_pretty(suites)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&dir.join("suites.json"), suites_json.as_bytes(), force)?;

    println!(
        "prepared {} classes: {} pretrain / {} train / {} validation / {} test items, {} suites",
        manifest.n_classes(),
        manifest.split_len(Split::Pretrain),
        manifest.split_len(Split::Train),
        manifest.split_len(Split::Validation),
        manifest.split_len(Split::Test),
        suites.len()
    );
    println!("run dir: {}", dir.display());
    Ok(())
}
