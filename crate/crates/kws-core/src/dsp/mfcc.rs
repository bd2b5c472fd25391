//! MFCC front-end: Hann-windowed power spectrogram, HTK mel filterbank,
//! log compression, orthonormal DCT-II.
//!
//! All intermediate arithmetic is f64; only the final coefficients are
//! narrowed to f32.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DspError, FeatureMatrix, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub window_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_ms: 30,
            hop_ms: 10,
            n_fft: 512,
            n_mels: 64,
            n_mfcc: 40,
            mel_fmin: 20.0,
            mel_fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.window_ms as u64 / 1000) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    /// Frame count for a signal of `n` samples: 1 + floor((n - window)/hop).
    pub fn frame_count(&self, n: usize, sample_rate: u32) -> Result<usize, DspError> {
        let win = self.window_samples(sample_rate);
        if n < win {
            return Err(DspError::SignalTooShort { samples: n, window: win });
        }
        Ok(1 + (n - win) / self.hop_samples(sample_rate))
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        let win = self.window_samples(sample_rate);
        let bad = |msg: String| Err(DspError::InvalidConfig(msg));
        if win == 0 || self.hop_samples(sample_rate) == 0 {
            return bad("window and hop must be at least one sample".into());
        }
        if win > self.n_fft {
            return bad(format!("window of {win} samples exceeds n_fft {}", self.n_fft));
        }
        if !self.n_fft.is_power_of_two() {
            return bad(format!("n_fft {} is not a power of two", self.n_fft));
        }
        if self.n_mfcc > self.n_mels {
            return bad(format!("n_mfcc {} exceeds n_mels {}", self.n_mfcc, self.n_mels));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 {
            return bad("n_mels and n_mfcc must be positive".into());
        }
        if !(self.mel_fmin >= 0.0 && self.mel_fmin < self.mel_fmax) {
            return bad(format!("need 0 <= fmin < fmax, got {} / {}", self.mel_fmin, self.mel_fmax));
        }
        if self.mel_fmax > sample_rate as f64 / 2.0 {
            return bad(format!("fmax {} exceeds Nyquist {}", self.mel_fmax, sample_rate / 2));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }
}

/// T x (n_fft/2 + 1) power spectrogram, row-major, f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / len)).
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / len as f64).cos()))
        .collect()
}

pub fn power_spectrogram(w: &Waveform, cfg: &MfccConfig) -> Result<Spectrogram, DspError> {
    cfg.validate(w.sample_rate())?;
    let win = cfg.window_samples(w.sample_rate());
    let hop = cfg.hop_samples(w.sample_rate());
    let frames = cfg.frame_count(w.len(), w.sample_rate())?;
    let bins = cfg.n_fft / 2 + 1;
    let window = hann_window(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);

    let mut values = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for t in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, c) in buf.iter_mut().take(win).enumerate() {
            c.re = w.samples()[t * hop + i] as f64 * window[i];
        }
        fft.process(&mut buf);
        values.extend(buf.iter().take(bins).map(|c| c.norm_sqr()));
    }
    Ok(Spectrogram { values, frames, bins })
}

/// Triangular HTK mel filterbank as an n_mels x bins row-major matrix.
pub fn mel_filterbank(cfg: &MfccConfig, sample_rate: u32) -> Vec<f64> {
    let bins = cfg.n_fft / 2 + 1;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (mel_lo, mel_hi) = (mel(cfg.mel_fmin), mel(cfg.mel_fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let mut bank = vec![0.0; cfg.n_mels * bins];
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / cfg.n_fft as f64;
            let weight = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            bank[m * bins + k] = weight;
        }
    }
    bank
}

/// Orthonormal DCT-II matrix, n_mfcc x n_mels row-major.
pub fn dct_matrix(n_mfcc: usize, n_mels: usize) -> Vec<f64> {
    let mut mat = vec![0.0; n_mfcc * n_mels];
    for i in 0..n_mfcc {
        let scale = if i == 0 { (1.0 / n_mels as f64).sqrt() } else { (2.0 / n_mels as f64).sqrt() };
        for j in 0..n_mels {
            mat[i * n_mels + j] = scale
                * (std::f64::consts::PI * i as f64 * (2.0 * j as f64 + 1.0)
                    / (2.0 * n_mels as f64))
                    .cos();
        }
    }
    mat
}

pub fn mfcc_from_power(
    spec: &Spectrogram,
    cfg: &MfccConfig,
    sample_rate: u32,
) -> Result<FeatureMatrix, DspError> {
    cfg.validate(sample_rate)?;
    let bins = cfg.n_fft / 2 + 1;
    if spec.bins != bins {
        return Err(DspError::InvalidConfig(format!(
            "spectrogram has {} bins, config expects {bins}",
            spec.bins
        )));
    }
    let bank = mel_filterbank(cfg, sample_rate);
    let dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);

    let mut out = Vec::with_capacity(spec.frames * cfg.n_mfcc);
    let mut log_mel = vec![0.0f64; cfg.n_mels];
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        for m in 0..cfg.n_mels {
            let energy: f64 = bank[m * bins..(m + 1) * bins]
                .iter()
                .zip(frame)
                .map(|(&w, &p)| w * p)
                .sum();
            log_mel[m] = energy.max(cfg.log_floor).ln();
        }
        for i in 0..cfg.n_mfcc {
            let coeff: f64 = dct[i * cfg.n_mels..(i + 1) * cfg.n_mels]
                .iter()
                .zip(&log_mel)
                .map(|(&d, &l)| d * l)
                .sum();
            out.push(coeff as f32);
        }
    }
    FeatureMatrix::new(out, spec.frames, cfg.n_mfcc)
}

pub fn compute_features(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix, DspError> {
    let spec = power_spectrogram(w, cfg)?;
    mfcc_from_power(&spec, cfg, w.sample_rate())
}
