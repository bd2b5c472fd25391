//! Synthetic keyword corpus.
//!
//! Each class is a tonal motif (fundamental + overtone with class-specific
//! ratio and vibrato) rendered into a one-second clip with random onset,
//! amplitude, and pitch jitter. Clips are regenerated on demand from
//! (corpus seed, item id), so the corpus needs no storage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{split_pretrain_train, DataError, DatasetManifest, ManifestEntry, Split};
use crate::dsp::Waveform;
use crate::rng::{derive_seed_str, gaussian, rng_from};

/// Clips are exactly one second long.
pub const SYNTH_CLIP_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthCorpusConfig {
    pub n_classes: usize,
    /// Pool size per class; the pool is split into pretrain and train.
    pub n_per_class: usize,
    pub n_val_per_class: usize,
    pub n_test_per_class: usize,
    pub pretrain_fraction: f64,
    pub sample_rate: u32,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_per_class: 100,
            n_val_per_class: 10,
            n_test_per_class: 20,
            pretrain_fraction: 0.8,
            sample_rate: 16000,
        }
    }
}

impl SynthCorpusConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_classes == 0
            || self.n_classes > 99
            || self.n_per_class == 0
            || self.n_test_per_class == 0
            || self.sample_rate == 0
        {
            return Err(DataError::BadManifest(format!(
                "degenerate synthetic corpus config: {self:?}"
            )));
        }
        if !(self.pretrain_fraction > 0.0 && self.pretrain_fraction < 1.0) {
            return Err(DataError::BadFraction(self.pretrain_fraction));
        }
        Ok(())
    }
}

pub fn synth_item_id(class: usize, item: usize) -> String {
    format!("c{class:02}-i{item:04}")
}

/// Recovers the class index from a synthetic item id.
pub fn class_from_id(id: &str) -> Result<usize, DataError> {
    let bad = || DataError::BadSyntheticId(id.to_string());
    let rest = id.strip_prefix('c').ok_or_else(bad)?;
    let (class_str, _) = rest.split_once("-i").ok_or_else(bad)?;
    class_str.parse::<usize>().map_err(|_| bad())
}

/// Builds the manifest: per class, a pool (pretrain + train after the ranked
/// split), then validation and test items with continuing indices.
pub fn synth_corpus(cfg: &SynthCorpusConfig, seed: u64) -> Result<DatasetManifest, DataError> {
    cfg.validate()?;
    let labels: Vec<String> = (0..cfg.n_classes).map(|c| format!("kw{c:02}")).collect();
    let mut entries = Vec::new();
    for class in 0..cfg.n_classes {
        let mut item = 0usize;
        let mut push = |split: Split, entries: &mut Vec<ManifestEntry>| {
            let id = synth_item_id(class, item);
            entries.push(ManifestEntry {
                path: format!("{id}.wav"),
                id,
                label: class,
                split,
                mix: None,
            });
            item += 1;
        };
        for _ in 0..cfg.n_per_class {
            push(Split::Train, &mut entries);
        }
        for _ in 0..cfg.n_val_per_class {
            push(Split::Validation, &mut entries);
        }
        for _ in 0..cfg.n_test_per_class {
            push(Split::Test, &mut entries);
        }
    }
    let mut manifest = DatasetManifest {
        seed,
        sample_rate: cfg.sample_rate,
        labels,
        entries,
    };
    split_pretrain_train(&mut manifest, cfg.pretrain_fraction, seed)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Renders the clip for one synthetic item.
pub fn synth_wave(corpus_seed: u64, id: &str, sample_rate: u32) -> Result<Waveform, DataError> {
    let class = class_from_id(id)?;
    let mut rng = rng_from(derive_seed_str(corpus_seed, "synth", id));
    let n = (SYNTH_CLIP_SECONDS * sample_rate as f64).round() as usize;
    let sr = sample_rate as f64;

    let f0 = (300.0 + 150.0 * class as f64) * (1.0 + rng.gen_range(-0.03..0.03));
    let overtone_ratio = 1.5 + 0.06 * class as f64;
    let vib_rate = 3.0 + 0.5 * class as f64;
    let vib_depth = 0.015;
    let amp = rng.gen_range(0.2..0.5);
    let onset = rng.gen_range(0.0..0.2);
    let dur = (0.45 + 0.02 * class as f64 + rng.gen_range(0.0..0.1))
        .min(SYNTH_CLIP_SECONDS - onset);
    let phase1 = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase2 = rng.gen_range(0.0..std::f64::consts::TAU);

    let ramp = 0.03f64.min(dur / 4.0);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let mut v = 0.003 * gaussian(&mut rng); // faint noise floor
        let rel = t - onset;
        if rel >= 0.0 && rel < dur {
            let env = if rel < ramp {
                0.5 * (1.0 - (std::f64::consts::PI * rel / ramp).cos())
            } else if rel > dur - ramp {
                0.5 * (1.0 - (std::f64::consts::PI * (dur - rel) / ramp).cos())
            } else {
                1.0
            };
            let vib = 1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * rel).sin();
            let tone = (std::f64::consts::TAU * f0 * vib * rel + phase1).sin()
                + 0.5 * (std::f64::consts::TAU * f0 * overtone_ratio * rel + phase2).sin();
            v += amp * env * tone / 1.5;
        }
        samples.push(v as f32);
    }
    Ok(Waveform::new(samples, sample_rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{compute_features, MfccConfig};

    fn small() -> SynthCorpusConfig {
        SynthCorpusConfig {
            n_classes: 4,
            n_per_class: 10,
            n_val_per_class: 3,
            n_test_per_class: 3,
            pretrain_fraction: 0.8,
            sample_rate: 16000,
        }
    }

    #[test]
    fn corpus_counts_per_split() {
        let m = synth_corpus(&small(), 7).unwrap();
        assert_eq!(m.split_len(Split::Pretrain), 32); // round(0.8 * 40)
        assert_eq!(m.split_len(Split::Train), 8);
        assert_eq!(m.split_len(Split::Validation), 12);
        assert_eq!(m.split_len(Split::Test), 12);
        assert_eq!(m.labels.len(), 4);
        m.validate().unwrap();
    }

    #[test]
    fn smoke_scale_counts() {
        let cfg = SynthCorpusConfig::default();
        let m = synth_corpus(&cfg, 1).unwrap();
        assert_eq!(m.split_len(Split::Pretrain), 800);
        assert_eq!(m.split_len(Split::Train), 200);
        assert_eq!(m.split_len(Split::Test), 200);
    }

    #[test]
    fn ids_encode_labels() {
        let m = synth_corpus(&small(), 7).unwrap();
        for e in &m.entries {
            assert_eq!(class_from_id(&e.id).unwrap(), e.label);
        }
        assert!(class_from_id("garbage").is_err());
        assert!(class_from_id("cXX-i0001").is_err());
    }

    #[test]
    fn corpus_and_waves_are_deterministic() {
        let a = synth_corpus(&small(), 7).unwrap();
        let b = synth_corpus(&small(), 7).unwrap();
        assert_eq!(a, b);
        let wa = synth_wave(7, "c01-i0003", 16000).unwrap();
        let wb = synth_wave(7, "c01-i0003", 16000).unwrap();
        assert_eq!(wa, wb);
        let wc = synth_wave(8, "c01-i0003", 16000).unwrap();
        assert_ne!(wa, wc);
    }

    #[test]
    fn waves_are_one_second_and_bounded() {
        for class in 0..4 {
            let id = synth_item_id(class, 0);
            let w = synth_wave(3, &id, 16000).unwrap();
            assert_eq!(w.len(), 16000);
            let peak = w.samples().iter().fold(0.0f32, |m, &v| m.max(v.abs()));
            assert!(peak > 0.05 && peak <= 1.0, "class {class}: peak {peak}");
        }
    }

    #[test]
    fn classes_are_separable_by_mean_mfcc() {
        let cfg = MfccConfig::default();
        let n_classes = 4;
        let per_class = 12;
        let mean_vec = |class: usize, item: usize| -> Vec<f64> {
            let id = synth_item_id(class, item);
            let w = synth_wave(11, &id, 16000).unwrap();
            let feats = compute_features(&w, &cfg).unwrap();
            let mut mean = vec![0.0f64; feats.dim()];
            for t in 0..feats.frames() {
                for (d, m) in mean.iter_mut().enumerate() {
                    *m += feats.frame(t)[d] as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= feats.frames() as f64);
            mean
        };
        let mut centroids = Vec::new();
        for class in 0..n_classes {
            let mut c = vec![0.0f64; 40];
            for item in 0..per_class / 2 {
                let v = mean_vec(class, item);
                for (a, b) in c.iter_mut().zip(&v) {
                    *a += b;
                }
            }
            c.iter_mut().for_each(|a| *a /= (per_class / 2) as f64);
            centroids.push(c);
        }
        let mut correct = 0;
        let mut total = 0;
        for class in 0..n_classes {
            for item in per_class / 2..per_class {
                let v = mean_vec(class, item);
                let best = centroids
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da: f64 = a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum();
                        let db: f64 = b.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                if best == class {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.9, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small();
        cfg.n_classes = 0;
        assert!(synth_corpus(&cfg, 1).is_err());
        let mut cfg = small();
        cfg.pretrain_fraction = 1.0;
        assert!(synth_corpus(&cfg, 1).is_err());
    }
}
