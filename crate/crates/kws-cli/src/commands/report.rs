//! report: merge evaluate outputs into CSV, JSON, markdown, and SVG.

use std::path::Path;

use kws_core::eval::report::{render_csv, render_markdown, render_svg};
use kws_core::eval::{parse_csv, EvalResult};

use super::write_file;
use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    if cfg.report.inputs.is_empty() {
        return Err(CliError::Config(
            "report.inputs must list at least one results.csv from an evaluate run".into(),
        ));
    }
    let mut results: Vec<EvalResult> = Vec::new();
    for path in &cfg.report.inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut parsed = parse_csv(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        results.append(&mut parsed);
    }

    write_file(&dir.join("report.csv"), render_csv(&results).as_bytes(), force)?;
    let json =
        serde_json::to_string_pretty(&results).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&dir.join("report.json"), json.as_bytes(), force)?;
    write_file(&dir.join("report.md"), render_markdown(&results).as_bytes(), force)?;
    write_file(&dir.join("report.svg"), render_svg(&results).as_bytes(), force)?;

    println!(
        "report over {} method(s): {}",
        results.len(),
        results.iter().map(|r| r.method.as_str()).collect::<Vec<_>>().join(", ")
    );
    println!("run dir: {}", dir.display());
    Ok(())
}
