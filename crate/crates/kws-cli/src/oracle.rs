//! Independent MFCC reference: brute-force DFT plus explicit mel and DCT
//! matrices, kept deliberately naive. `selfcheck` and the acceptance suite
//! compare the production front-end against this implementation.

use kws_core::dsp::MfccConfig;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank as an explicit (n_mels × n_bins) matrix over
/// the one-sided FFT bins, unnormalized.
pub fn mel_matrix(cfg: &MfccConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = cfg.n_fft / 2 + 1;
    let (m_lo, m_hi) = (hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|j| mel_to_hz(m_lo + (m_hi - m_lo) * j as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
    (0..cfg.n_mels)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - lo) / (mid - lo);
                    let falling = (hi - f) / (hi - mid);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II as an explicit (n_mfcc × n_mels) matrix.
pub fn dct_matrix(n_mfcc: usize, n_mels: usize) -> Vec<Vec<f64>> {
    (0..n_mfcc)
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / n_mels as f64).sqrt()
            } else {
                (2.0 / n_mels as f64).sqrt()
            };
            (0..n_mels)
                .map(|j| {
                    scale
                        * (std::f64::consts::PI * i as f64 * (2 * j + 1) as f64
                            / (2 * n_mels) as f64)
                            .cos()
                })
                .collect()
        })
        .collect()
}

/// One-sided power spectrum of a frame via the O(n²) DFT definition.
pub fn naive_power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let mut padded = frame.to_vec();
    padded.resize(n_fft, 0.0);
    (0..n_fft / 2 + 1)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (n, &x) in padded.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * n) as f64 / n_fft as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// MFCC coefficients for a single raw frame of exactly one window length:
/// periodic Hann, zero-padded DFT power, mel matrix, ln with floor, DCT.
pub fn reference_frame(raw: &[f64], cfg: &MfccConfig, sample_rate: u32) -> Vec<f64> {
    let n = raw.len();
    assert_eq!(n, cfg.window_samples(sample_rate), "frame must be one window long");
    let windowed: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
            x * w
        })
        .collect();
    let power = naive_power_spectrum(&windowed, cfg.n_fft);
    let mel = mel_matrix(cfg, sample_rate);
    let log_energies: Vec<f64> = mel
        .iter()
        .map(|row| {
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            e.max(cfg.log_floor).ln()
        })
        .collect();
    dct_matrix(cfg.n_mfcc, cfg.n_mels)
        .iter()
        .map(|row| row.iter().zip(&log_energies).map(|(d, e)| d * e).sum())
        .collect()
}

/// Sup-norm relative distance between two coefficient vectors, floored so
/// near-zero frames cannot inflate the ratio.
pub fn frame_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let scale = a
        .iter()
        .chain(b)
        .map(|x| x.abs())
        .fold(0.0f64, f64::max)
        .max(1e-6);
    diff / scale
}
