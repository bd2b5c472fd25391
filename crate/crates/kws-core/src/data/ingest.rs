//! Ingestion of on-disk corpora.
//!
//! Expects the common keyword-corpus layout: one folder per keyword holding
//! WAV files, plus `validation_list.txt` and `testing_list.txt` naming the
//! held-out items as `keyword/file.wav`. Everything else lands in the train
//! pool. A sibling noise directory supplies one WAV per noise type.

use std::collections::BTreeMap;
use std::path::Path;

use super::{DataError, DatasetManifest, ManifestEntry, NoiseClip, Split, ALL_NOISE_TYPES};
use crate::dsp::read_wav;

const BACKGROUND_DIR: &str = "_background_noise_";

fn read_list(path: &Path) -> Result<Vec<String>, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingListFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Scans `root` and builds a manifest with train/validation/test splits.
/// The pretrain split is carved out of the train pool separately.
pub fn ingest_speech_commands(
    root: impl AsRef<Path>,
    sample_rate: u32,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    let root = root.as_ref();
    let mut labels = Vec::new();
    for dir in std::fs::read_dir(root)? {
        let dir = dir?;
        if !dir.file_type()?.is_dir() {
            continue;
        }
        let name = dir.file_name().to_string_lossy().to_string();
        if name == BACKGROUND_DIR || name.starts_with('.') {
            continue;
        }
        labels.push(name);
    }
    labels.sort();
    if labels.is_empty() {
        return Err(DataError::NoKeywords(root.to_path_buf()));
    }

    // id -> split overrides from the two list files
    let mut overrides: BTreeMap<String, Split> = BTreeMap::new();
    for (file, split) in [
        ("validation_list.txt", Split::Validation),
        ("testing_list.txt", Split::Test),
    ] {
        for id in read_list(&root.join(file))? {
            if overrides.insert(id.clone(), split).is_some() {
                return Err(DataError::DuplicateListEntry(id));
            }
        }
    }

    let mut entries = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (label_idx, keyword) in labels.iter().enumerate() {
        let dir = root.join(keyword);
        let mut files: Vec<String> = std::fs::read_dir(&dir)?
            .filter_map(|f| f.ok())
            .filter(|f| f.path().extension().map(|e| e == "wav").unwrap_or(false))
            .map(|f| f.file_name().to_string_lossy().to_string())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(DataError::EmptyKeywordFolder(keyword.clone()));
        }
        for file in files {
            let id = format!("{keyword}/{file}");
            let split = overrides.remove(&id).unwrap_or(Split::Train);
            seen_ids.insert(id.clone());
            entries.push(ManifestEntry {
                path: id.clone(),
                id,
                label: label_idx,
                split,
                mix: None,
            });
        }
    }
    // any override left points at a file that does not exist
    if let Some((id, _)) = overrides.into_iter().next() {
        return Err(DataError::DanglingListEntry(id));
    }

    let manifest = DatasetManifest {
        seed,
        sample_rate,
        labels,
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Loads one clip per noise type from `dir` (`bus.wav`, `ped.wav`, ...).
/// All six types are required.
pub fn load_noise_dir(dir: impl AsRef<Path>) -> Result<Vec<NoiseClip>, DataError> {
    let dir = dir.as_ref();
    ALL_NOISE_TYPES
        .into_iter()
        .map(|noise_type| {
            let path = dir.join(format!("{}.wav", noise_type.name().to_lowercase()));
            if !path.is_file() {
                return Err(DataError::MissingNoise(noise_type));
            }
            Ok(NoiseClip {
                noise_type,
                wave: read_wav(path)?,
            })
        })
        .collect()
}
