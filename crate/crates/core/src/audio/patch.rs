use super::{MelSpectrogram, N_MELS};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Flattened `patch x patch` tiles in time-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    /// `count x patch²`; each row is one tile, row-major (time, then mel).
    pub data: Tensor,
    pub grid_time: usize,
    pub grid_mel: usize,
}

impl Patches {
    pub fn count(&self) -> usize {
        self.grid_time * self.grid_mel
    }
}

/// Grid size `(time, mel)` for `frames` frames. The time axis is padded so
/// its last tile is complete; the mel axis holds a fixed 128 bins and only
/// whole tiles are taken along it.
pub fn patch_grid(frames: usize, patch: usize, stride: usize) -> (usize, usize) {
    let time = (frames - patch).div_ceil(stride) + 1;
    let mel = (N_MELS - patch) / stride + 1;
    (time, mel)
}

pub fn patchify(m: &MelSpectrogram, patch: usize, stride: usize) -> Result<Patches> {
    if patch == 0 || stride == 0 || patch > N_MELS {
        return Err(Error::Invalid(format!("bad patch geometry {patch}/{stride}")));
    }
    let frames = m.frames();
    if frames < patch {
        return Err(Error::Invalid(format!(
            "spectrogram has {frames} frames, need at least {patch}"
        )));
    }
    let (gt, gm) = patch_grid(frames, patch, stride);
    let mut data = Vec::with_capacity(gt * gm * patch * patch);
    for ti in 0..gt {
        for mi in 0..gm {
            let (t0, f0) = (ti * stride, mi * stride);
            for i in 0..patch {
                if t0 + i < frames {
                    data.extend_from_slice(&m.frame(t0 + i)[f0..f0 + patch]);
                } else {
                    data.extend(std::iter::repeat_n(0.0, patch));
                }
            }
        }
    }
    Ok(Patches {
        data: Tensor::new(vec![gt * gm, patch * patch], data)?,
        grid_time: gt,
        grid_mel: gm,
    })
}
