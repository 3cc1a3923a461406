//! Upper-body skeleton, pose sequences and their normalization.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FRAMES: usize = 64;
pub const FPS: f64 = 15.0;
pub const NUM_JOINTS: usize = 11;
/// Values per frame: 11 joints × (x, y).
pub const POSE_DIM: usize = 2 * NUM_JOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Joint {
    Nose,
    Neck,
    RShoulder,
    RElbow,
    RWrist,
    LShoulder,
    LElbow,
    LWrist,
    MidHip,
    RHip,
    LHip,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Nose,
        Joint::Neck,
        Joint::RShoulder,
        Joint::RElbow,
        Joint::RWrist,
        Joint::LShoulder,
        Joint::LElbow,
        Joint::LWrist,
        Joint::MidHip,
        Joint::RHip,
        Joint::LHip,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "Nose",
            Joint::Neck => "Neck",
            Joint::RShoulder => "RShoulder",
            Joint::RElbow => "RElbow",
            Joint::RWrist => "RWrist",
            Joint::LShoulder => "LShoulder",
            Joint::LElbow => "LElbow",
            Joint::LWrist => "LWrist",
            Joint::MidHip => "MidHip",
            Joint::RHip => "RHip",
            Joint::LHip => "LHip",
        }
    }

    /// Column of this joint's x coordinate in a flattened frame (y follows).
    pub fn x_col(self) -> usize {
        2 * self.index()
    }
}

/// Joints plus parent links; a tree rooted at `MidHip`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonDefinition {
    pub joints: [Joint; NUM_JOINTS],
    pub parents: [Option<Joint>; NUM_JOINTS],
}

impl Default for SkeletonDefinition {
    fn default() -> Self {
        use Joint::*;
        Self {
            joints: Joint::ALL,
            parents: [
                Some(Neck),
                Some(MidHip),
                Some(Neck),
                Some(RShoulder),
                Some(RElbow),
                Some(Neck),
                Some(LShoulder),
                Some(LElbow),
                None,
                Some(MidHip),
                Some(MidHip),
            ],
        }
    }
}

impl SkeletonDefinition {
    pub fn root(&self) -> Option<Joint> {
        self.joints
            .iter()
            .zip(&self.parents)
            .find(|(_, p)| p.is_none())
            .map(|(j, _)| *j)
    }

    /// `(parent, child)` pairs in joint order.
    pub fn bones(&self) -> Vec<(Joint, Joint)> {
        self.joints
            .iter()
            .zip(&self.parents)
            .filter_map(|(j, p)| p.map(|p| (p, *j)))
            .collect()
    }

    /// Checks for a single root and that every joint reaches it.
    pub fn validate(&self) -> Result<()> {
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::Invalid(format!("skeleton has {roots} roots")));
        }
        for &j in &self.joints {
            let mut cur = j;
            let mut steps = 0;
            while let Some(p) = self.parents[cur.index()] {
                cur = p;
                steps += 1;
                if steps > NUM_JOINTS {
                    return Err(Error::Invalid(format!("cycle through joint {}", j.name())));
                }
            }
        }
        Ok(())
    }

    /// `Nose_x, Nose_y, Neck_x, ...` — the pose CSV header.
    pub fn column_names(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| [format!("{}_x", j.name()), format!("{}_y", j.name())])
            .collect()
    }
}

/// How a normalized sequence maps back to source coordinates:
/// `raw = normalized * scale + root_offset[frame]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    /// Source-space Neck position per frame.
    pub root_offsets: Vec<[f64; 2]>,
    /// Source-space shoulder distance in the first frame.
    pub scale: f64,
}

impl NormalizationParams {
    pub fn identity(frames: usize) -> Self {
        Self {
            root_offsets: vec![[0.0, 0.0]; frames],
            scale: 1.0,
        }
    }
}

/// `frames x 22` normalized coordinates (image convention: y grows downward).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub data: Tensor,
    pub params: NormalizationParams,
}

impl PoseSequence {
    pub fn new(data: Tensor, params: NormalizationParams) -> Result<Self> {
        if data.shape() != [FRAMES, POSE_DIM] {
            return Err(Error::Invalid(format!(
                "pose sequence must be {FRAMES} x {POSE_DIM}, got {:?}",
                data.shape()
            )));
        }
        if !data.all_finite() {
            return Err(Error::Invalid("pose sequence has non-finite coordinates".into()));
        }
        if params.root_offsets.len() != FRAMES || !(params.scale > 0.0) {
            return Err(Error::Invalid("pose normalization parameters are malformed".into()));
        }
        Ok(Self { data, params })
    }

    /// Normalized data with identity parameters.
    pub fn normalized(data: Tensor) -> Result<Self> {
        Self::new(data, NormalizationParams::identity(FRAMES))
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    pub fn joint(&self, t: usize, j: Joint) -> [f64; 2] {
        let f = self.frame(t);
        [f[j.x_col()], f[j.x_col() + 1]]
    }

    pub fn denormalize(&self) -> Tensor {
        denormalize(&self.data, &self.params)
    }
}

/// Moves Neck to the origin in every frame and scales so the shoulder
/// distance of frame 0 is 1. Works for any number of frames.
pub fn normalize_poses(raw: &Tensor) -> Result<(Tensor, NormalizationParams)> {
    if raw.rank() != 2 || raw.cols() != POSE_DIM || raw.rows() == 0 {
        return Err(Error::Invalid(format!(
            "raw poses must be frames x {POSE_DIM}, got {:?}",
            raw.shape()
        )));
    }
    let f0 = raw.row(0);
    let (r, l) = (Joint::RShoulder.x_col(), Joint::LShoulder.x_col());
    let scale = (f0[r] - f0[l]).hypot(f0[r + 1] - f0[l + 1]);
    if !(scale > 1e-12) || !scale.is_finite() {
        return Err(Error::Invalid(
            "shoulders coincide in the reference frame; cannot normalize".into(),
        ));
    }
    let neck = Joint::Neck.x_col();
    let mut offsets = Vec::with_capacity(raw.rows());
    let mut data = Vec::with_capacity(raw.numel());
    for t in 0..raw.rows() {
        let row = raw.row(t);
        let o = [row[neck], row[neck + 1]];
        offsets.push(o);
        data.extend(row.iter().enumerate().map(|(c, v)| (v - o[c % 2]) / scale));
    }
    let params = NormalizationParams {
        root_offsets: offsets,
        scale,
    };
    Ok((Tensor::new(raw.shape().to_vec(), data)?, params))
}

pub fn denormalize(data: &Tensor, params: &NormalizationParams) -> Tensor {
    let mut out = data.clone();
    let cols = data.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let o = params.root_offsets[i / cols];
        *v = *v * params.scale + o[i % 2];
    }
    out
}
