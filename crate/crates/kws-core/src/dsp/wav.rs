//! Minimal RIFF/WAVE PCM-16 reader and writer.

use std::path::Path;

use super::{DspError, Waveform};

const FORMAT_PCM: u16 = 1;

fn err(msg: impl Into<String>) -> DspError {
    DspError::MalformedWav(msg.into())
}

fn u16_at(bytes: &[u8], at: usize) -> Result<u16, DspError> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| err(format!("unexpected end of file at byte {at}")))
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32, DspError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| err(format!("unexpected end of file at byte {at}")))
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Decodes a RIFF/WAVE byte buffer. Multi-channel audio is averaged down
/// to mono; samples are scaled by 1/32768 so full-scale negative maps to
/// exactly -1.0.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, DspError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(err("missing RIFF/WAVE header"));
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let chunk_id = &bytes[at..at + 4];
        let chunk_len = u32_at(bytes, at + 4)? as usize;
        let body_start = at + 8;
        match chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(err("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some(FmtChunk {
                    format_tag: u16_at(bytes, body_start)?,
                    channels: u16_at(bytes, body_start + 2)?,
                    sample_rate: u32_at(bytes, body_start + 4)?,
                    bits_per_sample: u16_at(bytes, body_start + 14)?,
                });
            }
            b"data" => {
                let available = bytes.len().saturating_sub(body_start);
                if chunk_len > available {
                    return Err(DspError::TruncatedData { expected: chunk_len, got: available });
                }
                data = Some(&bytes[body_start..body_start + chunk_len]);
            }
            _ => {}
        }
        // chunks are word-aligned: odd sizes carry a pad byte
        at = body_start + chunk_len + (chunk_len & 1);
    }
    let fmt = fmt.ok_or_else(|| err("no fmt chunk"))?;
    let data = data.ok_or_else(|| err("no data chunk"))?;
    if fmt.format_tag != FORMAT_PCM {
        return Err(DspError::UnsupportedCodec { format_tag: fmt.format_tag });
    }
    if fmt.bits_per_sample != 16 {
        return Err(err(format!("{}-bit PCM is not supported (need 16)", fmt.bits_per_sample)));
    }
    if fmt.channels == 0 {
        return Err(err("zero channels"));
    }
    if fmt.sample_rate == 0 {
        return Err(err("zero sample rate"));
    }
    let channels = fmt.channels as usize;
    let frame_bytes = 2 * channels;
    if data.len() % frame_bytes != 0 {
        return Err(err(format!(
            "data chunk of {} bytes is not a whole number of {channels}-channel frames",
            data.len()
        )));
    }
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0f32;
        for ch in frame.chunks_exact(2) {
            acc += i16::from_le_bytes([ch[0], ch[1]]) as f32 / 32768.0;
        }
        samples.push(acc / channels as f32);
    }
    Waveform::new(samples, fmt.sample_rate)
}

/// Encodes mono PCM-16. Samples are clamped to [-1, 32767/32768] so the
/// decode/encode round trip is exact for any decoded waveform.
pub fn encode_wav_pcm16(w: &Waveform) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, DspError> {
    decode_wav(&std::fs::read(path)?)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), DspError> {
    Ok(std::fs::write(path, encode_wav_pcm16(w))?)
}
