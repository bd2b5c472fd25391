//! Independent reference implementation of the MFCC front-end.
//!
//! Everything here is rebuilt from first principles — a brute-force O(n^2)
//! DFT, explicit mel and DCT matrices applied as plain matrix products — and
//! the oracle is validated against its own mathematical invariants (Parseval,
//! orthonormality, partition of unity) before the production pipeline is
//! compared against it.

use kws_core::dsp::mfcc::{dct_matrix, hann_window, mel_filterbank};
use kws_core::dsp::{compute_features, power_spectrogram, MfccConfig, Waveform};
use kws_core::rng::{gaussian, rng_from};

// ---------------------------------------------------------------------------
// The reference implementation.
// ---------------------------------------------------------------------------

/// One-sided power spectrum of `x` by direct summation.
fn naive_power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (j, &v) in x.iter().enumerate() {
            let angle = -std::f64::consts::TAU * ((j * k) % n) as f64 / n as f64;
            re += v * angle.cos();
            im += v * angle.sin();
        }
        out.push(re * re + im * im);
    }
    out
}

fn ref_hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn ref_mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with peaks equally spaced on the mel scale,
/// unnormalized, evaluated at the DFT bin centres.
fn ref_mel_matrix(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (ref_hz_to_mel(fmin), ref_hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| ref_mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    let rising = (f - edges[m]) / (edges[m + 1] - edges[m]);
                    let falling = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II as an explicit matrix.
fn ref_dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|j| {
                    scale
                        * (std::f64::consts::PI * i as f64 * (2.0 * j as f64 + 1.0)
                            / (2.0 * n_in as f64))
                            .cos()
                })
                .collect()
        })
        .collect()
}

/// Full reference MFCC of one frame of raw samples (window length, not yet
/// windowed or padded).
fn reference_frame(samples: &[f64], cfg: &MfccConfig, sample_rate: u32) -> Vec<f64> {
    let n = samples.len();
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let mut padded = vec![0.0f64; cfg.n_fft];
    for i in 0..n {
        padded[i] = samples[i] * window[i];
    }
    let power = naive_power_spectrum(&padded);
    let mel = ref_mel_matrix(cfg.n_mels, cfg.n_fft, sample_rate, cfg.mel_fmin, cfg.mel_fmax);
    let dct = ref_dct_matrix(cfg.n_mfcc, cfg.n_mels);
    let log_mel: Vec<f64> = mel
        .iter()
        .map(|row| {
            let e: f64 = row.iter().zip(&power).map(|(&w, &p)| w * p).sum();
            e.max(cfg.log_floor).ln()
        })
        .collect();
    dct.iter()
        .map(|row| row.iter().zip(&log_mel).map(|(&d, &l)| d * l).sum())
        .collect()
}

/// Sup-norm relative distance between two coefficient vectors.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1e-6);
    diff / scale
}

fn random_wave(seed: u64, n: usize, sample_rate: u32) -> Waveform {
    let mut rng = rng_from(seed);
    let samples: Vec<f32> = (0..n).map(|_| (0.3 * gaussian(&mut rng)) as f32).collect();
    Waveform::new(samples, sample_rate).unwrap()
}

// ---------------------------------------------------------------------------
// The oracle validates itself first.
// ---------------------------------------------------------------------------

#[test]
fn oracle_dft_satisfies_parseval() {
    let mut rng = rng_from(41);
    let x: Vec<f64> = (0..64).map(|_| gaussian(&mut rng)).collect();
    let power = naive_power_spectrum(&x);
    // One-sided spectrum: interior bins stand in for their conjugates.
    let mut spectral = power[0] + power[64 / 2];
    for &p in &power[1..32] {
        spectral += 2.0 * p;
    }
    spectral /= 64.0;
    let time: f64 = x.iter().map(|v| v * v).sum();
    assert!((spectral - time).abs() < 1e-9 * time.max(1.0), "{spectral} vs {time}");
}

#[test]
fn oracle_dft_localizes_a_pure_tone() {
    let n = 128;
    let k0 = 9;
    let amp = 0.7;
    let x: Vec<f64> = (0..n)
        .map(|j| amp * (std::f64::consts::TAU * k0 as f64 * j as f64 / n as f64).cos())
        .collect();
    let power = naive_power_spectrum(&x);
    let expect = (amp * n as f64 / 2.0) * (amp * n as f64 / 2.0);
    assert!((power[k0] - expect).abs() < 1e-6 * expect);
    for (k, &p) in power.iter().enumerate() {
        if k != k0 {
            assert!(p < 1e-12 * expect, "leakage {p} at bin {k}");
        }
    }
}

#[test]
fn oracle_dct_rows_are_orthonormal() {
    let d = ref_dct_matrix(40, 64);
    for i in 0..40 {
        for j in 0..40 {
            let dot: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expect).abs() < 1e-12, "row {i}.row {j} = {dot}");
        }
    }
}

#[test]
fn oracle_mel_filters_partition_the_interior() {
    let cfg = MfccConfig::default();
    let mel = ref_mel_matrix(cfg.n_mels, cfg.n_fft, 16000, cfg.mel_fmin, cfg.mel_fmax);
    let (lo, hi) = (ref_hz_to_mel(cfg.mel_fmin), ref_hz_to_mel(cfg.mel_fmax));
    let first_peak = ref_mel_to_hz(lo + (hi - lo) / (cfg.n_mels + 1) as f64);
    let last_peak = ref_mel_to_hz(lo + (hi - lo) * cfg.n_mels as f64 / (cfg.n_mels + 1) as f64);
    let bins = cfg.n_fft / 2 + 1;
    let mut interior = 0;
    for k in 0..bins {
        let f = k as f64 * 16000.0 / cfg.n_fft as f64;
        if f > first_peak && f < last_peak {
            let total: f64 = mel.iter().map(|row| row[k]).sum();
            assert!((total - 1.0).abs() < 1e-9, "column {k} sums to {total}");
            interior += 1;
        }
    }
    assert!(interior > 200, "only {interior} interior bins checked");
}

// ---------------------------------------------------------------------------
// Production pipeline against the oracle.
// ---------------------------------------------------------------------------

#[test]
fn production_mel_and_dct_matrices_match_reference() {
    let cfg = MfccConfig::default();
    let bins = cfg.n_fft / 2 + 1;
    let bank = mel_filterbank(&cfg, 16000);
    let mel = ref_mel_matrix(cfg.n_mels, cfg.n_fft, 16000, cfg.mel_fmin, cfg.mel_fmax);
    for m in 0..cfg.n_mels {
        for k in 0..bins {
            assert!(
                (bank[m * bins + k] - mel[m][k]).abs() < 1e-12,
                "mel[{m}][{k}]: {} vs {}",
                bank[m * bins + k],
                mel[m][k]
            );
        }
    }
    let dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);
    let rdct = ref_dct_matrix(cfg.n_mfcc, cfg.n_mels);
    for i in 0..cfg.n_mfcc {
        for j in 0..cfg.n_mels {
            assert!((dct[i * cfg.n_mels + j] - rdct[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn production_window_matches_reference() {
    let w = hann_window(480);
    for (i, &v) in w.iter().enumerate() {
        let expect = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / 480.0).cos();
        assert!((v - expect).abs() < 1e-15);
    }
}

#[test]
fn fft_power_matches_brute_force_dft() {
    let cfg = MfccConfig::default();
    let sr = 16000;
    let win = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let wave = random_wave(7, win + 4 * hop, sr);
    let spec = power_spectrogram(&wave, &cfg).unwrap();
    assert_eq!(spec.frames, 5);

    let window = hann_window(win);
    for t in 0..spec.frames {
        let mut padded = vec![0.0f64; cfg.n_fft];
        for i in 0..win {
            padded[i] = wave.samples()[t * hop + i] as f64 * window[i];
        }
        let reference = naive_power_spectrum(&padded);
        let got = spec.frame(t);
        assert_eq!(got.len(), reference.len());
        let scale = reference.iter().cloned().fold(0.0f64, f64::max).max(1e-6);
        for (k, (&g, &r)) in got.iter().zip(&reference).enumerate() {
            assert!((g - r).abs() < 1e-9 * scale, "frame {t} bin {k}: {g} vs {r}");
        }
    }
}

#[test]
fn full_mfcc_frames_match_reference_on_random_signals() {
    let cfg = MfccConfig::default();
    let sr = 16000;
    let win = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let wave = random_wave(100 + seed, win + 3 * hop, sr);
        let feats = compute_features(&wave, &cfg).unwrap();
        assert_eq!(feats.frames(), 4);
        assert_eq!(feats.dim(), cfg.n_mfcc);
        for t in 0..feats.frames() {
            let raw: Vec<f64> = wave.samples()[t * hop..t * hop + win]
                .iter()
                .map(|&s| s as f64)
                .collect();
            let reference = reference_frame(&raw, &cfg, sr);
            let got: Vec<f64> = feats.frame(t).iter().map(|&v| v as f64).collect();
            worst = worst.max(rel_err(&got, &reference));
        }
    }
    assert!(worst < 1e-4, "worst frame error {worst:.3e}");
}

#[test]
fn full_mfcc_matches_reference_on_structured_signals() {
    let cfg = MfccConfig::default();
    let sr = 16000;
    let win = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let n = win + 2 * hop;
    // A chirp plus a steady tone: energy moves across the mel bands.
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let chirp = (std::f64::consts::TAU * (200.0 + 8000.0 * t) * t).sin();
            let tone = (std::f64::consts::TAU * 1500.0 * t).sin();
            (0.4 * chirp + 0.2 * tone) as f32
        })
        .collect();
    let wave = Waveform::new(samples, sr).unwrap();
    let feats = compute_features(&wave, &cfg).unwrap();
    for t in 0..feats.frames() {
        let raw: Vec<f64> = wave.samples()[t * hop..t * hop + win]
            .iter()
            .map(|&s| s as f64)
            .collect();
        let reference = reference_frame(&raw, &cfg, sr);
        let got: Vec<f64> = feats.frame(t).iter().map(|&v| v as f64).collect();
        let err = rel_err(&got, &reference);
        assert!(err < 1e-4, "frame {t} error {err:.3e}");
    }
}

#[test]
fn one_second_clip_shapes_and_determinism() {
    let cfg = MfccConfig::default();
    let wave = random_wave(55, 16000, 16000);
    let a = compute_features(&wave, &cfg).unwrap();
    assert_eq!((a.frames(), a.dim()), (98, 40));
    let b = compute_features(&wave, &cfg).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn too_short_signal_is_rejected() {
    let cfg = MfccConfig::default();
    let wave = random_wave(1, 100, 16000);
    assert!(compute_features(&wave, &cfg).is_err());
}
