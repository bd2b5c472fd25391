//! Exact-SNR additive noise mixing.
//!
//! Power is the mean squared amplitude over the full clip, measured in f64.
//! The mixture is clean + g * noise_segment with g chosen so that the
//! requested SNR holds exactly; no clipping is applied.

use super::{DataError, MixSpec, NoiseClip};
use crate::dsp::Waveform;

/// Gain that puts `noise` at `snr_db` below (or above) `clean`.
fn snr_gain(p_signal: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes `clean` with the segment of `noise` selected by `spec`.
/// `peak_normalize` rescales the mixture to peak 1.0 only when it would
/// otherwise exceed it; this preserves the SNR (both terms scale together).
pub fn mix_at_snr(
    clean: &Waveform,
    noise: &NoiseClip,
    spec: &MixSpec,
    peak_normalize: bool,
) -> Result<Waveform, DataError> {
    let n = clean.len();
    let have = noise.wave.len();
    if spec.noise_offset + n > have {
        return Err(DataError::OffsetOutOfRange { offset: spec.noise_offset, need: n, have });
    }
    let segment = &noise.wave.samples()[spec.noise_offset..spec.noise_offset + n];

    let p_signal = clean.power();
    if p_signal <= 0.0 {
        return Err(DataError::ZeroPower("clean"));
    }
    let p_noise = segment.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / n as f64;
    if p_noise <= 0.0 {
        return Err(DataError::ZeroPower("noise"));
    }

    let g = snr_gain(p_signal, p_noise, spec.snr_db as f64);
    let mut mixed: Vec<f64> = clean
        .samples()
        .iter()
        .zip(segment)
        .map(|(&c, &v)| c as f64 + g * v as f64)
        .collect();
    if peak_normalize {
        let peak = mixed.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if peak > 1.0 {
            mixed.iter_mut().for_each(|v| *v /= peak);
        }
    }
    Waveform::new(mixed.into_iter().map(|v| v as f32).collect(), clean.sample_rate())
        .map_err(DataError::from)
}

/// Re-measures the SNR of `mixture` against the known `clean` component:
/// 10 log10(P_clean / P_residual).
pub fn measure_snr(clean: &Waveform, mixture: &Waveform) -> f64 {
    let p_signal = clean.power();
    let p_noise = clean
        .samples()
        .iter()
        .zip(mixture.samples())
        .map(|(&c, &m)| {
            let r = m as f64 - c as f64;
            r * r
        })
        .sum::<f64>()
        / clean.len() as f64;
    10.0 * (p_signal / p_noise).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NoiseType, SNR_GRID};
    use crate::rng::{gaussian, rng_from};

    fn wave(data: Vec<f32>) -> Waveform {
        Waveform::new(data, 16000).unwrap()
    }

    fn random_wave(n: usize, seed: u64, scale: f32) -> Waveform {
        let mut rng = rng_from(seed);
        wave((0..n).map(|_| gaussian(&mut rng) as f32 * scale).collect())
    }

    fn clip(noise_type: NoiseType, w: Waveform) -> NoiseClip {
        NoiseClip { noise_type, wave: w }
    }

    fn spec(snr_db: i32, offset: usize) -> MixSpec {
        MixSpec { noise_type: NoiseType::Ssn, snr_db, noise_offset: offset, rng_seed: 0 }
    }

    #[test]
    fn equal_power_at_zero_db_uses_unit_gain() {
        let clean = wave(vec![0.5, -0.5, 0.5, -0.5]);
        let noise = clip(NoiseType::Ssn, wave(vec![0.5, 0.5, -0.5, -0.5]));
        let mixed = mix_at_snr(&clean, &noise, &spec(0, 0), false).unwrap();
        // g = 1, so mixture = clean + noise elementwise
        assert_eq!(mixed.samples(), &[1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn twenty_db_at_equal_power_scales_noise_by_tenth() {
        let clean = wave(vec![0.5; 8]);
        let noise = clip(NoiseType::Bus, wave(vec![-0.5; 8]));
        let mixed = mix_at_snr(&clean, &noise, &spec(20, 0), false).unwrap();
        for &s in mixed.samples() {
            assert!((s - 0.45).abs() < 1e-7);
        }
    }

    #[test]
    fn remeasured_snr_matches_request_over_grid() {
        for (i, &snr) in SNR_GRID.iter().enumerate() {
            let clean = random_wave(16000, 100 + i as u64, 0.2);
            let noise = clip(NoiseType::Caf, random_wave(20000, 200 + i as u64, 0.7));
            let mixed = mix_at_snr(&clean, &noise, &spec(snr, 512), false).unwrap();
            let measured = measure_snr(&clean, &mixed);
            assert!(
                (measured - snr as f64).abs() < 1e-3,
                "snr {snr}: measured {measured}"
            );
        }
    }

    #[test]
    fn scale_invariance_of_the_snr_definition() {
        let clean = random_wave(4000, 7, 0.1);
        let noise_wave = random_wave(4000, 8, 0.3);
        let mixed = mix_at_snr(&clean, &clip(NoiseType::Str, noise_wave.clone()), &spec(5, 0), false)
            .unwrap();

        let scale = |w: &Waveform, g: f32| {
            wave(w.samples().iter().map(|&s| s * g).collect())
        };
        let mixed_scaled = mix_at_snr(
            &scale(&clean, 0.25),
            &clip(NoiseType::Str, scale(&noise_wave, 0.25)),
            &spec(5, 0),
            false,
        )
        .unwrap();
        for (&a, &b) in mixed.samples().iter().zip(mixed_scaled.samples()) {
            assert!((a * 0.25 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_power_inputs_are_rejected() {
        let silent = wave(vec![0.0; 100]);
        let tone = random_wave(100, 1, 0.5);
        assert!(matches!(
            mix_at_snr(&silent, &clip(NoiseType::Bus, tone.clone()), &spec(0, 0), false),
            Err(DataError::ZeroPower("clean"))
        ));
        assert!(matches!(
            mix_at_snr(&tone, &clip(NoiseType::Bus, silent), &spec(0, 0), false),
            Err(DataError::ZeroPower("noise"))
        ));
    }

    #[test]
    fn offset_past_the_end_is_rejected() {
        let clean = random_wave(1000, 2, 0.5);
        let noise = clip(NoiseType::Ped, random_wave(1200, 3, 0.5));
        assert!(mix_at_snr(&clean, &noise, &spec(0, 200), false).is_ok());
        assert!(matches!(
            mix_at_snr(&clean, &noise, &spec(0, 201), false),
            Err(DataError::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn peak_normalization_preserves_snr() {
        let clean = random_wave(8000, 11, 0.9);
        let noise = clip(NoiseType::Bbl, random_wave(8000, 12, 0.9));
        let mixed = mix_at_snr(&clean, &noise, &spec(-10, 0), true).unwrap();
        let peak = mixed.samples().iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        assert!(peak <= 1.0 + 1e-6);
        // measured against the equally rescaled clean reference
        let raw = mix_at_snr(&clean, &noise, &spec(-10, 0), false).unwrap();
        let raw_peak = raw.samples().iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        assert!(raw_peak > 1.0, "case should trigger normalization");
        let scaled_clean = Waveform::new(
            clean.samples().iter().map(|&s| s / raw_peak).collect(),
            16000,
        )
        .unwrap();
        let measured = measure_snr(&scaled_clean, &mixed);
        assert!((measured + 10.0).abs() < 1e-2, "measured {measured}");
    }
}
