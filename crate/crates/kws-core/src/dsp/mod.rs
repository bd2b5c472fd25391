//! Audio decoding and the 40-dimensional MFCC front-end.

pub mod mfcc;
pub mod wav;

pub use mfcc::{compute_features, mfcc_from_power, power_spectrogram, MfccConfig, Spectrogram};
pub use wav::{decode_wav, encode_wav_pcm16, read_wav, write_wav};

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("malformed wav: {0}")]
    MalformedWav(String),
    #[error("unsupported codec: format tag {format_tag} (only PCM-16 is supported)")]
    UnsupportedCodec { format_tag: u16 },
    #[error("truncated data chunk: header promises {expected} bytes, file has {got}")]
    TruncatedData { expected: usize, got: usize },
    #[error("signal of {samples} samples is shorter than one {window}-sample window")]
    SignalTooShort { samples: usize, window: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("non-finite sample in waveform")]
    NonFiniteSample,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono audio. Samples are nominally in [-1, 1]; mixtures may exceed that
/// range since no clipping is applied when noise is added.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidConfig("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DspError::NonFiniteSample);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Zero-pads or truncates to exactly `n` samples.
    pub fn fit_length(mut self, n: usize) -> Self {
        self.samples.resize(n, 0.0);
        self
    }

    /// Mean squared amplitude over the full clip, accumulated in f64.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>()
            / self.samples.len() as f64
    }
}

/// Row-major T x dim feature matrix (dim = 40 for the standard front-end).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f32>,
    frames: usize,
    dim: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f32>, frames: usize, dim: usize) -> Result<Self, DspError> {
        if values.len() != frames * dim {
            return Err(DspError::InvalidConfig(format!(
                "{} values cannot form a {frames}x{dim} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DspError::NonFiniteSample);
        }
        Ok(Self { values, frames, dim })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}
