use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AudioError, Waveform};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decode a RIFF/WAVE file (16-bit PCM or 32-bit float, mono or stereo) into
/// a mono waveform with amplitudes in [-1, 1]. Stereo is channel-averaged.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(AudioError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(AudioError::Io(e)),
    };
    read_wav(&bytes)
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(chunk: &[u8]) -> Result<Format, AudioError> {
    if chunk.len() < 16 {
        return Err(AudioError::Malformed(format!(
            "fmt chunk is {} bytes, expected at least 16",
            chunk.len()
        )));
    }
    let mut tag = u16_at(chunk, 0);
    let channels = u16_at(chunk, 2);
    let sample_rate = u32_at(chunk, 4);
    let bits = u16_at(chunk, 14);
    if tag == FORMAT_EXTENSIBLE {
        if chunk.len() < 26 {
            return Err(AudioError::Malformed(
                "extensible fmt chunk missing sub-format".into(),
            ));
        }
        tag = u16_at(chunk, 24);
    }
    if sample_rate == 0 {
        return Err(AudioError::Malformed("sample rate is zero".into()));
    }
    Ok(Format {
        tag,
        channels,
        sample_rate,
        bits,
    })
}

/// Decode WAV bytes already in memory.
pub fn read_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::Malformed(format!(
                    "chunk '{}' declares {} bytes but only {} remain (truncated file)",
                    String::from_utf8_lossy(id),
                    size,
                    bytes.len() - body_start
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let format = format.ok_or_else(|| AudioError::Malformed("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Malformed("no data chunk".into()))?;

    if format.channels == 0 || format.channels > 2 {
        return Err(AudioError::Unsupported(format!(
            "{} channels (only mono and stereo are supported)",
            format.channels
        )));
    }
    let decode: fn(&[u8]) -> f64 = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_FLOAT, 32) => |b| {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        },
        (FORMAT_PCM, bits) => {
            return Err(AudioError::Unsupported(format!(
                "{bits}-bit PCM (only 16-bit PCM is supported)"
            )))
        }
        (FORMAT_FLOAT, bits) => {
            return Err(AudioError::Unsupported(format!(
                "{bits}-bit float (only 32-bit float is supported)"
            )))
        }
        (tag, _) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {tag:#06x} (only PCM and IEEE float are supported)"
            )))
        }
    };
    let width = (format.bits / 8) as usize;
    let frame = width * format.channels as usize;
    if data.len() % frame != 0 {
        return Err(AudioError::Malformed(format!(
            "data chunk of {} bytes is not a whole number of {}-byte frames",
            data.len(),
            frame
        )));
    }
    let samples = data
        .chunks_exact(frame)
        .map(|f| {
            if format.channels == 1 {
                decode(f)
            } else {
                0.5 * (decode(&f[..width]) + decode(&f[width..]))
            }
        })
        .collect();
    Ok(Waveform::new(samples, format.sample_rate))
}

/// Write a mono 16-bit PCM WAV file. Samples are clamped to [-1, 1].
pub fn write_wav_pcm16(path: impl AsRef<Path>, w: &Waveform) -> Result<(), AudioError> {
    let mut out = BufWriter::new(File::create(path)?);
    let data_len = (w.samples.len() * 2) as u32;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&FORMAT_PCM.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&(w.sample_rate * 2).to_le_bytes())?;
    out.write_all(&2u16.to_le_bytes())?;
    out.write_all(&16u16.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        let align = channels * bits / 8;
        v.extend_from_slice(&(rate * align as u32).to_le_bytes());
        v.extend_from_slice(&align.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let bytes = header(1, 1, 16000, 16, &vec![0u8; 32000]);
        let w = read_wav(&bytes).unwrap();
        assert_eq!(w.len(), 16000);
        assert_eq!(w.sample_rate, 16000);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_sine_peaks_near_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let sine: Vec<f64> = (0..16000)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
            .collect();
        write_wav_pcm16(&path, &Waveform::new(sine, 16000)).unwrap();
        let w = load_wav(&path).unwrap();
        let peak = w.peak();
        assert!((0.999..=1.0).contains(&peak), "peak {peak}");
    }

    #[test]
    fn stereo_is_averaged() {
        let mut data = Vec::new();
        for (l, r) in [(16384i16, 0i16), (-16384, -16384)] {
            data.extend_from_slice(&l.to_le_bytes());
            data.extend_from_slice(&r.to_le_bytes());
        }
        let w = read_wav(&header(1, 2, 8000, 16, &data)).unwrap();
        assert_eq!(w.samples, vec![0.25, -0.5]);
    }

    #[test]
    fn float32_is_decoded() {
        let mut data = Vec::new();
        for v in [0.5f32, -0.25, 2.0] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let w = read_wav(&header(3, 1, 16000, 32, &data)).unwrap();
        assert_eq!(w.samples, vec![0.5, -0.25, 1.0]);
    }

    #[test]
    fn truncated_data_is_malformed() {
        let mut bytes = header(1, 1, 16000, 16, &vec![0u8; 1000]);
        bytes.truncate(bytes.len() - 100);
        assert!(matches!(read_wav(&bytes), Err(AudioError::Malformed(_))));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            load_wav("/nonexistent/definitely/missing.wav"),
            Err(AudioError::NotFound(_))
        ));
        assert!(matches!(
            read_wav(b"not a wav file at all"),
            Err(AudioError::Malformed(_))
        ));
        assert!(matches!(
            read_wav(&header(1, 1, 16000, 24, &[0u8; 6])),
            Err(AudioError::Unsupported(_))
        ));
        assert!(matches!(
            read_wav(&header(6, 1, 16000, 8, &[0u8; 6])),
            Err(AudioError::Unsupported(_))
        ));
        assert!(matches!(
            read_wav(&header(1, 3, 16000, 16, &[0u8; 6])),
            Err(AudioError::Unsupported(_))
        ));
    }
}
