//! Mono WAV file reading and writing.
//!
//! Supports RIFF/WAVE containers with 16-bit PCM or IEEE float32 samples.
//! Integer samples are normalized by 1/32768 on read and scaled by 32767
//! (round half away from zero) on write; the asymmetry means a pcm16 round
//! trip quantizes but never clips.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// A mono sampled signal together with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    /// Amplitudes, nominally in `[-1, 1]`.
    pub samples: Vec<f64>,
    /// Sampling rate in Hz.
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Sample encoding used when writing a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

impl fmt::Display for WavEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WavEncoding::Pcm16 => write!(f, "pcm16"),
            WavEncoding::Float32 => write!(f, "float32"),
        }
    }
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed WAV at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("file has {0} channels; pass downmix=true to average them")]
    MultiChannel(u16),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

struct ChunkReader<R> {
    inner: R,
    offset: u64,
    path: PathBuf,
}

impl<R: Read> ChunkReader<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), AudioError> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(AudioError::Parse {
                offset: self.offset,
                message: "unexpected end of file".into(),
            }),
            Err(e) => Err(AudioError::Io {
                path: self.path.clone(),
                source: e,
            }),
        }
    }

    fn read_u16(&mut self) -> Result<u16, AudioError> {
        let mut b = [0u8; 2];
        self.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self) -> Result<u32, AudioError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_tag(&mut self) -> Result<[u8; 4], AudioError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(b)
    }
}

impl<R: Read + Seek> ChunkReader<R> {
    fn skip(&mut self, n: u64) -> Result<(), AudioError> {
        self.inner
            .seek(SeekFrom::Current(n as i64))
            .map_err(|e| AudioError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        self.offset += n;
        Ok(())
    }
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Reads a mono WAV file into normalized f64 samples.
///
/// 16-bit PCM value `v` maps to `v / 32768` exactly; float32 data is passed
/// through. Multi-channel files are rejected unless `downmix` is set, in
/// which case channels are averaged.
pub fn read_wav(path: &Path, downmix: bool) -> Result<AudioBuffer, AudioError> {
    let file = File::open(path).map_err(|e| AudioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut r = ChunkReader {
        inner: BufReader::new(file),
        offset: 0,
        path: path.to_path_buf(),
    };

    if &r.read_tag()? != b"RIFF" {
        return Err(AudioError::Parse {
            offset: 0,
            message: "missing RIFF tag".into(),
        });
    }
    let _riff_size = r.read_u32()?;
    if &r.read_tag()? != b"WAVE" {
        return Err(AudioError::Parse {
            offset: 8,
            message: "missing WAVE tag".into(),
        });
    }

    let mut fmt: Option<FmtChunk> = None;
    loop {
        let tag_offset = r.offset;
        let tag = r.read_tag()?;
        let size = r.read_u32()?;
        match &tag {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::Parse {
                        offset: tag_offset,
                        message: format!("fmt chunk too small ({size} bytes)"),
                    });
                }
                let format = r.read_u16()?;
                let channels = r.read_u16()?;
                let sample_rate = r.read_u32()?;
                let _byte_rate = r.read_u32()?;
                let _block_align = r.read_u16()?;
                let bits_per_sample = r.read_u16()?;
                r.skip(u64::from(size) - 16 + u64::from(size % 2))?;
                if channels == 0 {
                    return Err(AudioError::Parse {
                        offset: tag_offset,
                        message: "zero channels".into(),
                    });
                }
                if sample_rate == 0 {
                    return Err(AudioError::Parse {
                        offset: tag_offset,
                        message: "zero sample rate".into(),
                    });
                }
                fmt = Some(FmtChunk {
                    format,
                    channels,
                    sample_rate,
                    bits_per_sample,
                });
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| AudioError::Parse {
                    offset: tag_offset,
                    message: "data chunk precedes fmt chunk".into(),
                })?;
                return read_data_chunk(&mut r, &fmt, size, downmix);
            }
            _ => {
                // Chunks are word-aligned; odd sizes carry a pad byte.
                r.skip(u64::from(size) + u64::from(size % 2))?;
            }
        }
    }
}

fn read_data_chunk<R: Read + Seek>(
    r: &mut ChunkReader<R>,
    fmt: &FmtChunk,
    data_size: u32,
    downmix: bool,
) -> Result<AudioBuffer, AudioError> {
    let data_offset = r.offset;
    let bytes_per_sample = match (fmt.format, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => 2usize,
        (FORMAT_IEEE_FLOAT, 32) => 4usize,
        (f, b) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {f} with {b} bits per sample (want PCM16 or float32)"
            )))
        }
    };
    let channels = fmt.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    if data_size as usize % frame_bytes != 0 {
        return Err(AudioError::Parse {
            offset: data_offset,
            message: format!("data size {data_size} is not a whole number of frames"),
        });
    }
    if fmt.channels > 1 && !downmix {
        return Err(AudioError::MultiChannel(fmt.channels));
    }

    let n_frames = data_size as usize / frame_bytes;
    let mut raw = vec![0u8; data_size as usize];
    r.read_exact(&mut raw)?;

    let mut samples = Vec::with_capacity(n_frames);
    for frame in 0..n_frames {
        let mut acc = 0.0f64;
        for ch in 0..channels {
            let at = (frame * channels + ch) * bytes_per_sample;
            let v = match bytes_per_sample {
                2 => {
                    let v = i16::from_le_bytes([raw[at], raw[at + 1]]);
                    f64::from(v) / 32768.0
                }
                _ => {
                    let v =
                        f32::from_le_bytes([raw[at], raw[at + 1], raw[at + 2], raw[at + 3]]);
                    f64::from(v)
                }
            };
            acc += v;
        }
        let s = acc / channels as f64;
        if !s.is_finite() {
            return Err(AudioError::NonFinite(frame));
        }
        samples.push(s);
    }

    Ok(AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
    })
}

/// Writes a mono WAV file.
///
/// `Pcm16` clamps samples to `[-1, 1]` and rounds half away from zero to
/// `v * 32767`; `Float32` writes the samples verbatim (narrowed to f32).
pub fn write_wav(buf: &AudioBuffer, path: &Path, encoding: WavEncoding) -> Result<(), AudioError> {
    if let Some(i) = buf.samples.iter().position(|s| !s.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    let file = File::create(path).map_err(|e| AudioError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |e: io::Error| AudioError::Io {
        path: path.to_path_buf(),
        source: e,
    };

    let (format, bits, data_size) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 16u16, buf.samples.len() * 2),
        WavEncoding::Float32 => (FORMAT_IEEE_FLOAT, 32u16, buf.samples.len() * 4),
    };
    let bytes_per_frame = u16::from(bits / 8);

    w.write_all(b"RIFF").map_err(io_err)?;
    w.write_all(&((36 + data_size) as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(b"WAVE").map_err(io_err)?;
    w.write_all(b"fmt ").map_err(io_err)?;
    w.write_all(&16u32.to_le_bytes()).map_err(io_err)?;
    w.write_all(&format.to_le_bytes()).map_err(io_err)?;
    w.write_all(&1u16.to_le_bytes()).map_err(io_err)?; // mono
    w.write_all(&buf.sample_rate.to_le_bytes()).map_err(io_err)?;
    let byte_rate = buf.sample_rate * u32::from(bytes_per_frame);
    w.write_all(&byte_rate.to_le_bytes()).map_err(io_err)?;
    w.write_all(&bytes_per_frame.to_le_bytes()).map_err(io_err)?;
    w.write_all(&bits.to_le_bytes()).map_err(io_err)?;
    w.write_all(b"data").map_err(io_err)?;
    w.write_all(&(data_size as u32).to_le_bytes()).map_err(io_err)?;

    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &buf.samples {
                let v = quantize_pcm16(s);
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &buf.samples {
                w.write_all(&(s as f32).to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Clamp to `[-1, 1]`, scale by 32767, round half away from zero.
fn quantize_pcm16(s: f64) -> i16 {
    let clamped = s.clamp(-1.0, 1.0);
    // f64::round rounds half away from zero.
    (clamped * 32767.0).round() as i16
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn tmp(name: &str) -> PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the handle so the directory outlives the test body.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn pcm16_extremes_map_exactly() {
        // 32767 -> 32767/32768, -32768 -> -1.0
        let path = tmp("extremes.wav");
        let mut bytes = Vec::new();
        let data: [i16; 3] = [32767, -32768, 0];
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 6).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&6u32.to_le_bytes());
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();

        let buf = read_wav(&path, false).unwrap();
        assert_eq!(buf.sample_rate, 16000);
        assert_eq!(buf.samples[0], 0.999969482421875);
        assert_eq!(buf.samples[1], -1.0);
        assert_eq!(buf.samples[2], 0.0);
    }

    #[test]
    fn pcm16_write_clamps_and_rounds() {
        assert_eq!(quantize_pcm16(0.0), 0);
        assert_eq!(quantize_pcm16(1.5), 32767);
        assert_eq!(quantize_pcm16(-1.5), -32767);
        assert_eq!(quantize_pcm16(1.0), 32767);
        // half away from zero
        assert_eq!(quantize_pcm16(0.5 / 32767.0), 1);
        assert_eq!(quantize_pcm16(-0.5 / 32767.0), -1);
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..1000)
            .map(|_| f64::from(rng.gen_range(-1.0f32..1.0f32)))
            .collect();
        let buf = AudioBuffer::new(samples, 16000);
        let path = tmp("roundtrip_f32.wav");
        write_wav(&buf, &path, WavEncoding::Float32).unwrap();
        let back = read_wav(&path, false).unwrap();
        assert_eq!(back.sample_rate, buf.sample_rate);
        assert_eq!(back.samples, buf.samples);
    }

    #[test]
    fn pcm16_round_trip_quantization_bound() {
        // Oracle loop: |round(32767 v) / 32768 - v| <= (0.5 + |v|) / 32768,
        // and within 1/32767 whenever |v| <= 0.5.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let buf = AudioBuffer::new(samples.clone(), 8000);
        let path = tmp("roundtrip_pcm16.wav");
        write_wav(&buf, &path, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path, false).unwrap();
        for (orig, got) in samples.iter().zip(&back.samples) {
            let err = (orig - got).abs();
            assert!(
                err <= (0.5 + orig.abs()) / 32768.0 + 1e-12,
                "err {err} too large for sample {orig}"
            );
            if orig.abs() <= 0.5 {
                assert!(err <= 1.0 / 32767.0, "err {err} beyond lsb for {orig}");
            }
        }
    }

    #[test]
    fn header_length_matches_decoded_count() {
        let buf = AudioBuffer::new(vec![0.25; 123], 44100);
        let path = tmp("len.wav");
        write_wav(&buf, &path, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path, false).unwrap();
        assert_eq!(back.len(), 123);
    }

    #[test]
    fn stereo_rejected_without_downmix() {
        let path = tmp("stereo.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        // two frames: L=16384, R=0 -> downmix 0.25
        for v in [16384i16, 0, 16384, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();

        match read_wav(&path, false) {
            Err(AudioError::MultiChannel(2)) => {}
            other => panic!("expected MultiChannel error, got {other:?}"),
        }
        let mixed = read_wav(&path, true).unwrap();
        assert_eq!(mixed.samples, vec![0.25, 0.25]);
    }

    #[test]
    fn malformed_header_reports_offset() {
        let path = tmp("bad.wav");
        std::fs::write(&path, b"RIFX").unwrap();
        match read_wav(&path, false) {
            Err(AudioError::Parse { offset: 0, .. }) => {}
            other => panic!("expected parse error at offset 0, got {other:?}"),
        }
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let buf = AudioBuffer::new(vec![0.5, -0.5], 16000);
        let path = tmp("chunky.wav");
        write_wav(&buf, &path, WavEncoding::Float32).unwrap();
        // Splice a LIST chunk (odd size, padded) between fmt and data.
        let bytes = std::fs::read(&path).unwrap();
        let mut spliced = bytes[..36].to_vec();
        spliced.extend_from_slice(b"LIST");
        spliced.extend_from_slice(&3u32.to_le_bytes());
        spliced.extend_from_slice(b"abc\0");
        spliced.extend_from_slice(&bytes[36..]);
        std::fs::write(&path, &spliced).unwrap();
        let back = read_wav(&path, false).unwrap();
        assert_eq!(back.samples, buf.samples);
    }

    proptest! {
        #[test]
        fn float32_write_read_identity(values in proptest::collection::vec(-1.0f32..1.0, 1..256)) {
            let samples: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let buf = AudioBuffer::new(samples.clone(), 16000);
            let path = tmp("prop_f32.wav");
            write_wav(&buf, &path, WavEncoding::Float32).unwrap();
            let back = read_wav(&path, false).unwrap();
            prop_assert_eq!(back.samples, samples);
        }
    }
}
