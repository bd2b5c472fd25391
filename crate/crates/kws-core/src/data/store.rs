//! Audio sources behind the manifest.
//!
//! A store resolves a manifest entry to its clean waveform: either by
//! regenerating a synthetic clip or by reading a WAV file under a root
//! directory. All clips are length-normalized to the target duration.

use std::path::PathBuf;

use super::{synth_wave, DataError, ManifestEntry};
use crate::dsp::{read_wav, Waveform};

#[derive(Debug, Clone)]
pub enum AudioStore {
    /// Clips regenerated from (seed, id); always `sample_rate` Hz.
    Synthetic { seed: u64, sample_rate: u32 },
    /// Clips read from `root.join(entry.path)`.
    WavDir { root: PathBuf },
}

impl AudioStore {
    pub fn synthetic(seed: u64, sample_rate: u32) -> Self {
        AudioStore::Synthetic { seed, sample_rate }
    }

    pub fn wav_dir(root: impl Into<PathBuf>) -> Self {
        AudioStore::WavDir { root: root.into() }
    }

    /// Loads the clean clip, padded or truncated to `target_samples`.
    pub fn load(
        &self,
        entry: &ManifestEntry,
        target_samples: usize,
    ) -> Result<Waveform, DataError> {
        let wave = match self {
            AudioStore::Synthetic { seed, sample_rate } => {
                synth_wave(*seed, &entry.id, *sample_rate)?
            }
            AudioStore::WavDir { root } => read_wav(root.join(&entry.path))?,
        };
        Ok(wave.fit_length(target_samples))
    }
}
