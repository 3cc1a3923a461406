use std::path::Path;

use hound::{WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Reads 16-bit PCM or 32-bit float RIFF/WAVE. Multi-channel files are
/// downmixed to the mean of their channels.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let parse = |e: hound::Error| Error::parse(path, format!("invalid WAV: {e}"));
    let reader = WavReader::open(path).map_err(parse)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(parse)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(parse)?,
        (fmt, bits) => {
            return Err(Error::parse(
                path,
                format!("unsupported codec: {bits}-bit {fmt:?} (need 16-bit PCM or 32-bit float)"),
            ))
        }
    };
    let channels = spec.channels as usize;
    if channels == 0 || interleaved.len() % channels != 0 {
        return Err(Error::parse(path, "sample count is not a multiple of the channel count"));
    }
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono file. PCM samples are clamped to `[-1, 1)` before scaling.
pub fn write_wav(path: &Path, wave: &Waveform, format: SampleFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, hound::SampleFormat::Int),
        SampleFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path.display().to_string(), source),
        other => Error::Invalid(format!("{}: {other}", path.display())),
    };
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in &wave.samples {
        match format {
            SampleFormat::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v).map_err(io)?;
            }
            SampleFormat::Float32 => w.write_sample(s as f32).map_err(io)?,
        }
    }
    w.finalize().map_err(io)
}
