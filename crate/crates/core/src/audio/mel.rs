use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{Waveform, F_MAX, HOP, LOG_FLOOR, N_FFT, N_MELS, SAMPLE_RATE, WINDOW};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// `frames x 128` natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Tensor,
    /// Seconds between frame starts.
    pub frame_hop: f64,
    pub source_rate: u32,
}

impl MelSpectrogram {
    pub fn new(data: Tensor, frame_hop: f64, source_rate: u32) -> Result<Self> {
        if data.rank() != 2 || data.cols() != N_MELS {
            return Err(Error::Invalid(format!(
                "mel spectrogram must be frames x {N_MELS}, got {:?}",
                data.shape()
            )));
        }
        if !data.all_finite() {
            return Err(Error::Invalid("mel spectrogram contains non-finite values".into()));
        }
        Ok(Self {
            data,
            frame_hop,
            source_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }
}

/// Number of complete analysis windows in `len` samples (no centering).
pub fn frame_count(len: usize) -> usize {
    if len < WINDOW {
        0
    } else {
        (len - WINDOW) / HOP + 1
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, evaluated on the `N_FFT / 2 + 1`
/// one-sided FFT bins. Filter `k` rises from edge `k` to peak `k+1` and falls
/// to edge `k+2`, with the 130 edges equally spaced in mel over 0..8 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    edges_hz: Vec<f64>,
    /// Per filter: first nonzero bin and the weights from there on.
    rows: Vec<(usize, Vec<f64>)>,
    n_bins: usize,
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new()
    }
}

impl MelFilterbank {
    pub fn new() -> Self {
        let top = hz_to_mel(F_MAX);
        let edges_hz: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let n_bins = N_FFT / 2 + 1;
        let mut fb = Self {
            edges_hz,
            rows: Vec::with_capacity(N_MELS),
            n_bins,
        };
        for k in 0..N_MELS {
            let weights: Vec<(usize, f64)> = (0..n_bins)
                .map(|b| (b, fb.weight_at(k, bin_hz(b))))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let start = weights.first().map_or(0, |&(b, _)| b);
            fb.rows.push((start, weights.into_iter().map(|(_, w)| w).collect()));
        }
        fb
    }

    /// Triangle height of filter `k` at frequency `hz`.
    pub fn weight_at(&self, k: usize, hz: f64) -> f64 {
        let (lo, mid, hi) = (self.edges_hz[k], self.edges_hz[k + 1], self.edges_hz[k + 2]);
        if hz <= lo || hz >= hi {
            0.0
        } else if hz <= mid {
            (hz - lo) / (mid - lo)
        } else {
            (hi - hz) / (hi - mid)
        }
    }

    pub fn center_hz(&self, k: usize) -> f64 {
        self.edges_hz[k + 1]
    }

    /// The filter responding most strongly to a pure tone at `hz`.
    pub fn designated_filter(&self, hz: f64) -> usize {
        (0..N_MELS)
            .max_by(|&a, &b| self.weight_at(a, hz).total_cmp(&self.weight_at(b, hz)))
            .unwrap_or(0)
    }

    /// Dense weights of filter `k` over all one-sided bins.
    pub fn dense_row(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        let (start, w) = &self.rows[k];
        out[*start..start + w.len()].copy_from_slice(w);
        out
    }

    /// Applies every filter to a one-sided power spectrum.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(start, w)| w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Centre frequency of one-sided FFT bin `b`.
pub fn bin_hz(b: usize) -> f64 {
    b as f64 * SAMPLE_RATE as f64 / N_FFT as f64
}

/// Symmetric Hann window of `WINDOW` samples.
pub fn hann() -> Vec<f64> {
    (0..WINDOW)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (WINDOW - 1) as f64).cos())
        .collect()
}

/// Hann-windowed STFT power spectrum passed through the mel filterbank,
/// then `ln(max(energy, 1e-10))`.
pub fn compute_mel(w: &Waveform) -> Result<MelSpectrogram> {
    if w.samples.is_empty() {
        return Err(Error::Invalid("empty audio".into()));
    }
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Invalid(format!(
            "unsupported sample rate {} Hz (expected {SAMPLE_RATE} Hz)",
            w.sample_rate
        )));
    }
    let frames = frame_count(w.samples.len());
    if frames == 0 {
        return Err(Error::Invalid(format!(
            "audio has {} samples, fewer than one {WINDOW}-sample window",
            w.samples.len()
        )));
    }
    let window = hann();
    let fb = MelFilterbank::new();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; N_FFT / 2 + 1];
    let mut data = Vec::with_capacity(frames * N_MELS);
    for t in 0..frames {
        let seg = &w.samples[t * HOP..t * HOP + WINDOW];
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(if i < WINDOW { seg[i] * window[i] } else { 0.0 }, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        data.extend(fb.apply(&power).into_iter().map(|e| e.max(LOG_FLOOR).ln()));
    }
    MelSpectrogram::new(
        Tensor::new(vec![frames, N_MELS], data)?,
        HOP as f64 / SAMPLE_RATE as f64,
        SAMPLE_RATE,
    )
}
