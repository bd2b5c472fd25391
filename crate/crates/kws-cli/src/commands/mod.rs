//! Command dispatch, run-directory management, and shared data assembly.

mod evaluate;
mod prepare;
mod pretrain;
mod report;
mod selfcheck;
mod train;

pub use selfcheck::{grad_check_cross_entropy, grad_check_masked_mse, selfcheck_report};

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use kws_core::data::{
    build_test_suites, ingest_speech_commands, load_noise_dir, split_pretrain_train, synth_corpus,
    synth_noise_bank, AudioStore, DatasetManifest, NoiseClip, TestSuite,
};

use crate::args::{Cli, Command};
use crate::config::{resolve, DataSource, RunConfig};
use crate::errors::CliError;

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    init_thread_pool(&cfg);
    let dir = create_run_dir(&cfg, cli, cli.command.name())?;
    echo_config(&cfg, &dir, cli.force)?;
    match cli.command {
        Command::PrepareData => prepare::run(&cfg, &dir, cli.force),
        Command::Pretrain => pretrain::run(&cfg, &dir),
        Command::Train => train::run(&cfg, &dir),
        Command::Evaluate => evaluate::run(&cfg, &dir, cli.force),
        Command::Report => report::run(&cfg, &dir, cli.force),
        Command::Selfcheck => selfcheck::run(&cfg, &dir, cli.force),
    }
}

fn init_thread_pool(cfg: &RunConfig) {
    let workers = if cfg.deterministic { 1 } else { cfg.threads };
    if workers > 0 {
        // A second init in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

/// `--out` names the run directory exactly; otherwise a fresh timestamped
/// directory is created under `out_root`.
fn create_run_dir(cfg: &RunConfig, cli: &Cli, command: &str) -> Result<PathBuf, CliError> {
    let dir = match &cli.out {
        Some(path) => path.clone(),
        None => {
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let mut candidate = cfg.out_root.join(format!("{command}-{stamp}"));
            let mut n = 1;
            while candidate.exists() {
                n += 1;
                candidate = cfg.out_root.join(format!("{command}-{stamp}-{n}"));
            }
            candidate
        }
    };
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes one artifact, honoring the append-only rule.
pub fn write_file(path: &Path, bytes: &[u8], force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Io(format!(
            "refusing to overwrite {} (run directories are append-only; pass --force)",
            path.display()
        )));
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Every command records its fully resolved config for provenance. An
/// existing config.toml marks a previously used run directory.
fn echo_config(cfg: &RunConfig, dir: &Path, force: bool) -> Result<(), CliError> {
    write_file(&dir.join("config.toml"), cfg.to_toml()?.as_bytes(), force)
}

pub struct DataBundle {
    pub manifest: DatasetManifest,
    pub store: AudioStore,
    pub noise: Vec<NoiseClip>,
    pub suites: Option<Vec<TestSuite>>,
}

impl DataBundle {
    /// 1-second clips at the dataset rate: the pipeline's fixed input length.
    pub fn target_samples(&self) -> usize {
        self.manifest.sample_rate as usize
    }
}

pub fn noise_span(noise: &[NoiseClip]) -> usize {
    noise.iter().map(|c| c.wave.len()).min().unwrap_or(0)
}

fn load_noise(cfg: &RunConfig, sample_rate: u32, data_seed: u64) -> Result<Vec<NoiseClip>, CliError> {
    match cfg.dataset.source {
        DataSource::Synthetic => {
            Ok(synth_noise_bank(cfg.dataset.noise_seconds, sample_rate, data_seed)?)
        }
        DataSource::SpeechCommands => {
            let dir = cfg.dataset.noise_dir.as_ref().ok_or_else(|| {
                CliError::Config(
                    "this step mixes noise; set dataset.noise_dir to a directory with \
                     bus/ped/str/ssn/bbl/caf.wav"
                        .into(),
                )
            })?;
            Ok(load_noise_dir(dir)?)
        }
    }
}

fn make_store(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<AudioStore, CliError> {
    match cfg.dataset.source {
        DataSource::Synthetic => {
            Ok(AudioStore::synthetic(manifest.seed, manifest.sample_rate))
        }
        DataSource::SpeechCommands => {
            let root = cfg.dataset.root.as_ref().ok_or_else(|| {
                CliError::Config("dataset.root is required to read speech-commands audio".into())
            })?;
            Ok(AudioStore::wav_dir(root.clone()))
        }
    }
}

/// Loads a prepared run directory when configured, or rebuilds the dataset
/// from the seed. Noise and suites are only materialized when requested.
pub fn assemble(cfg: &RunConfig, want_suites: bool, want_noise: bool) -> Result<DataBundle, CliError> {
    if let Some(prepared) = &cfg.dataset.prepared {
        let manifest = DatasetManifest::load(prepared.join("manifest.jsonl"))?;
        let store = make_store(cfg, &manifest)?;
        let noise = if want_noise || want_suites {
            load_noise(cfg, manifest.sample_rate, manifest.seed)?
        } else {
            Vec::new()
        };
        let suites = if want_suites {
            let path = prepared.join("suites.json");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
            )
        } else {
            None
        };
        return Ok(DataBundle { manifest, store, noise, suites });
    }

    let manifest = match cfg.dataset.source {
        DataSource::Synthetic => {
            let core_cfg = cfg.dataset.synthetic.to_core(cfg.dataset.sample_rate);
            synth_corpus(&core_cfg, cfg.seed)?
        }
        DataSource::SpeechCommands => {
            let root = cfg.dataset.root.as_ref().ok_or_else(|| {
                CliError::Config("dataset.root is required for the speech-commands source".into())
            })?;
            let mut manifest = ingest_speech_commands(root, cfg.dataset.sample_rate, cfg.seed)?;
            split_pretrain_train(&mut manifest, cfg.dataset.pretrain_fraction, cfg.seed)?;
            manifest
        }
    };
    let store = make_store(cfg, &manifest)?;
    let noise = if want_noise || want_suites {
        load_noise(cfg, manifest.sample_rate, manifest.seed)?
    } else {
        Vec::new()
    };
    let suites = if want_suites {
        Some(build_test_suites(
            &manifest,
            noise_span(&noise),
            manifest.sample_rate as usize,
            manifest.seed,
        )?)
    } else {
        None
    };
    Ok(DataBundle { manifest, store, noise, suites })
}
