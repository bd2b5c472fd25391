//! Deterministic synthetic noise generators.
//!
//! Six types with deliberately different spectral and temporal statistics so
//! that a classifier (or a band-energy test) can tell them apart:
//! - SSN: speech-shaped stationary noise, flat to 500 Hz then -6 dB/octave
//! - BUS: heavy low-frequency rumble with a slow amplitude wobble
//! - STR: mildly low-weighted broadband with traffic-like modulation
//! - PED: white impulsive bursts (footsteps) over a quiet pink bed
//! - CAF: 1.5-4 kHz clatter bursts over a pink bed with gentle modulation
//! - BBL: eight band-limited, syllabically modulated voices

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{DataError, NoiseClip, NoiseType};
use crate::dsp::Waveform;
use crate::rng::{derive_seed, gaussian, rng_from};

/// White gaussian vector.
fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Filters `signal` by a magnitude envelope given in Hz. DC is removed.
fn shape_spectrum(signal: &[f64], sr: u32, envelope: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = signal.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fft.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        let f = bin as f64 * sr as f64 / n as f64;
        let h = if k == 0 { 0.0 } else { envelope(f) };
        *c *= h;
    }
    ifft.process(&mut buf);
    buf.into_iter().map(|c| c.re / n as f64).collect()
}

fn band_passed(rng: &mut ChaCha8Rng, n: usize, sr: u32, lo: f64, hi: f64) -> Vec<f64> {
    let base = white(rng, n);
    shape_spectrum(&base, sr, |f| if f >= lo && f <= hi { 1.0 } else { 0.0 })
}

fn rms(signal: &[f64]) -> f64 {
    (signal.iter().map(|&s| s * s).sum::<f64>() / signal.len() as f64).sqrt()
}

fn normalize_rms(signal: &mut [f64], target: f64) {
    let r = rms(signal);
    if r > 0.0 {
        let g = target / r;
        signal.iter_mut().for_each(|s| *s *= g);
    }
}

/// Multiplies in a sinusoidal amplitude wobble (mean 1, depth < 1).
fn amplitude_modulate(signal: &mut [f64], sr: u32, rate_hz: f64, depth: f64, phase: f64) {
    for (i, s) in signal.iter_mut().enumerate() {
        let t = i as f64 / sr as f64;
        *s *= 1.0 + depth * (std::f64::consts::TAU * rate_hz * t + phase).sin();
    }
}

/// Adds windowed bursts cut from `source` at random positions.
fn add_bursts(
    out: &mut [f64],
    source: &[f64],
    rng: &mut ChaCha8Rng,
    sr: u32,
    rate_per_s: f64,
    len_ms: (u64, u64),
    gain: f64,
) {
    let n = out.len();
    let n_bursts = ((n as f64 / sr as f64) * rate_per_s).round().max(2.0) as usize;
    for _ in 0..n_bursts {
        let len = (rng.gen_range(len_ms.0..=len_ms.1) * sr as u64 / 1000) as usize;
        if len == 0 || len >= n {
            continue;
        }
        let start = rng.gen_range(0..n - len);
        for i in 0..len {
            // raised-cosine window keeps bursts click-free
            let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / len as f64).cos());
            out[start + i] += gain * w * source[start + i];
        }
    }
}

fn pink_bed(rng: &mut ChaCha8Rng, n: usize, sr: u32, level: f64) -> Vec<f64> {
    let base = white(rng, n);
    let mut bed = shape_spectrum(&base, sr, |f| 1.0 / f.max(40.0).sqrt());
    normalize_rms(&mut bed, level);
    bed
}

/// Generates `duration_s` seconds of the given noise type. Deterministic in
/// (type, duration, sample_rate, seed).
pub fn synth_noise(
    noise_type: NoiseType,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<NoiseClip, DataError> {
    if !(duration_s > 0.0) || sample_rate == 0 {
        return Err(DataError::BadManifest(format!(
            "invalid noise request: {duration_s} s at {sample_rate} Hz"
        )));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let sr = sample_rate;
    let mut rng = rng_from(derive_seed(seed, "noise", noise_type as u64));

    let mut out = match noise_type {
        NoiseType::Ssn => {
            let base = white(&mut rng, n);
            shape_spectrum(&base, sr, |f| if f <= 500.0 { 1.0 } else { 500.0 / f })
        }
        NoiseType::Bus => {
            let base = white(&mut rng, n);
            let mut low = shape_spectrum(&base, sr, |f| 1.0 / (1.0 + (f / 100.0).powi(2)));
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            amplitude_modulate(&mut low, sr, 0.4, 0.35, phase);
            low
        }
        NoiseType::Str => {
            let base = white(&mut rng, n);
            let mut broad = shape_spectrum(&base, sr, |f| 1.0 / f.max(40.0).powf(0.25));
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            amplitude_modulate(&mut broad, sr, 1.3, 0.3, phase);
            broad
        }
        NoiseType::Ped => {
            let mut bed = pink_bed(&mut rng, n, sr, 0.03);
            let steps = white(&mut rng, n);
            add_bursts(&mut bed, &steps, &mut rng, sr, 4.0, (30, 80), 0.35);
            bed
        }
        NoiseType::Caf => {
            let mut bed = pink_bed(&mut rng, n, sr, 0.04);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            amplitude_modulate(&mut bed, sr, 0.5, 0.2, phase);
            let clatter = band_passed(&mut rng, n, sr, 1500.0, 4000.0);
            add_bursts(&mut bed, &clatter, &mut rng, sr, 5.0, (20, 60), 1.6);
            bed
        }
        NoiseType::Bbl => {
            let mut sum = vec![0.0f64; n];
            for v in 0..8 {
                // centers log-spaced over the speech band
                let center = 300.0 * (2800.0f64 / 300.0).powf(v as f64 / 7.0);
                let mut voice = band_passed(&mut rng, n, sr, center * 0.7, center * 1.4);
                let syllable_rate = rng.gen_range(2.0..6.0);
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let gain = rng.gen_range(0.7..1.3);
                for (i, s) in voice.iter_mut().enumerate() {
                    let t = i as f64 / sr as f64;
                    let env = 0.5
                        + 0.5 * (std::f64::consts::TAU * syllable_rate * t + phase).sin();
                    *s *= gain * env.powf(1.5);
                }
                for (acc, s) in sum.iter_mut().zip(&voice) {
                    *acc += s;
                }
            }
            sum
        }
    };

    normalize_rms(&mut out, 0.1);
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.995 {
        let g = 0.995 / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    let wave = Waveform::new(out.into_iter().map(|v| v as f32).collect(), sr)?;
    Ok(NoiseClip { noise_type, wave })
}

/// One clip of every type, sharing a base seed.
pub fn synth_noise_bank(
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<NoiseClip>, DataError> {
    super::ALL_NOISE_TYPES
        .into_iter()
        .map(|t| synth_noise(t, duration_s, sample_rate, seed))
        .collect()
}

/// Fractions of spectral energy in the bands 0-500, 500-1500, 1500-4000,
/// and 4000-8000 Hz. Used to verify the generators stay distinguishable.
pub fn band_fractions(wave: &Waveform) -> [f64; 4] {
    let n = wave.len();
    let sr = wave.sample_rate() as f64;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> =
        wave.samples().iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    fft.process(&mut buf);
    let mut bands = [0.0f64; 4];
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let f = k as f64 * sr / n as f64;
        let idx = match f {
            f if f < 500.0 => 0,
            f if f < 1500.0 => 1,
            f if f < 4000.0 => 2,
            _ => 3,
        };
        bands[idx] += c.norm_sqr();
    }
    let total: f64 = bands.iter().sum();
    if total > 0.0 {
        bands.iter_mut().for_each(|b| *b /= total);
    }
    bands
}
