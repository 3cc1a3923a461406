//! Waveform loading, log-mel spectrograms and spectrogram patches.

mod mel;
mod patch;
mod wav;

pub use mel::{compute_mel, frame_count, MelFilterbank, MelSpectrogram};
pub use patch::{patch_grid, patchify, Patches};
pub use wav::{load_wav, write_wav, SampleFormat, Waveform};

pub const SAMPLE_RATE: u32 = 16_000;
/// 25 ms analysis window.
pub const WINDOW: usize = 400;
/// 10 ms hop.
pub const HOP: usize = 160;
/// Windows are zero-padded to this FFT size so that the narrow low-frequency
/// mel filters each still cover at least one spectral bin.
pub const N_FFT: usize = 2048;
pub const N_MELS: usize = 128;
pub const F_MAX: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-10;

pub const PATCH: usize = 16;
pub const PATCH_STRIDE: usize = 10;
