//! Stick-figure SVG rendering of normalized pose sequences.
//!
//! The viewport is fixed: normalized `(0, 0)` (the neck) lands on the canvas
//! center and one shoulder width spans [`PIXELS_PER_UNIT`] pixels, so frames
//! from different sequences are directly comparable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::IoContext;
use crate::pose::{Joint, PoseSequence, SkeletonDefinition, FPS, POSE_DIM};
use crate::{Error, Result};

pub const CANVAS: f64 = 400.0;
pub const PIXELS_PER_UNIT: f64 = 100.0;

/// Normalized coordinates to canvas pixels.
pub fn to_canvas(p: [f64; 2]) -> [f64; 2] {
    [CANVAS / 2.0 + PIXELS_PER_UNIT * p[0], CANVAS / 2.0 + PIXELS_PER_UNIT * p[1]]
}

fn joint_xy(frame: &[f64], j: Joint) -> [f64; 2] {
    to_canvas([frame[j.x_col()], frame[j.x_col() + 1]])
}

fn header(out: &mut String, extra: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}"{extra}>"#,
        c = CANVAS
    );
    let _ = writeln!(out, r#"<rect width="{c}" height="{c}" fill="white"/>"#, c = CANVAS);
}

/// Bones as lines and joints as dots for one `22`-value frame.
fn figure(out: &mut String, frame: &[f64], skeleton: &SkeletonDefinition, indent: &str) {
    for (a, b) in skeleton.bones() {
        let ([x1, y1], [x2, y2]) = (joint_xy(frame, a), joint_xy(frame, b));
        let _ = writeln!(
            out,
            r#"{indent}<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="3" stroke-linecap="round"/>"#
        );
    }
    for j in skeleton.joints {
        let [x, y] = joint_xy(frame, j);
        let _ = writeln!(
            out,
            r#"{indent}<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="crimson" data-joint="{}"/>"#,
            j.name()
        );
    }
}

fn check_frames(poses: &PoseSequence) -> Result<usize> {
    let frames = poses.data.rows();
    if frames == 0 || poses.data.cols() != POSE_DIM {
        return Err(Error::Invalid(format!("cannot render poses of shape {:?}", poses.data.shape())));
    }
    Ok(frames)
}

/// One frame as a standalone SVG document.
pub fn still_svg(poses: &PoseSequence, t: usize) -> Result<String> {
    let frames = check_frames(poses)?;
    if t >= frames {
        return Err(Error::Invalid(format!("frame {t} out of range 0..{frames}")));
    }
    let mut out = String::new();
    header(&mut out, &format!(r#" data-frame="{t}""#));
    figure(&mut out, poses.frame(t), &SkeletonDefinition::default(), "");
    out.push_str("</svg>\n");
    Ok(out)
}

/// Looping animation: one group per frame, each made visible for exactly
/// `1 / FPS` seconds by a discrete visibility animation.
pub fn animated_svg(poses: &PoseSequence) -> Result<String> {
    let frames = check_frames(poses)?;
    let skeleton = SkeletonDefinition::default();
    let dur = frames as f64 / FPS;
    let mut out = String::new();
    header(&mut out, &format!(r#" data-frames="{frames}" data-fps="{FPS}""#));
    for t in 0..frames {
        let _ = writeln!(out, r#"<g id="frame{t}" visibility="hidden">"#);
        let (start, end) = (t as f64 / frames as f64, (t + 1) as f64 / frames as f64);
        let (values, key_times) = if frames == 1 {
            ("visible".to_string(), "0".to_string())
        } else if t == 0 {
            ("visible;hidden".to_string(), format!("0;{end:.6}"))
        } else if t + 1 == frames {
            ("hidden;visible".to_string(), format!("0;{start:.6}"))
        } else {
            ("hidden;visible;hidden".to_string(), format!("0;{start:.6};{end:.6}"))
        };
        let _ = writeln!(
            out,
            r#"  <animate attributeName="visibility" values="{values}" keyTimes="{key_times}" dur="{dur:.6}s" calcMode="discrete" repeatCount="indefinite"/>"#
        );
        figure(&mut out, poses.frame(t), &skeleton, "  ");
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderOutput {
    pub animation: PathBuf,
    pub stills: Vec<PathBuf>,
}

/// Writes the animation to `out_path` and one still per frame into the
/// sibling directory `<stem>_frames/` as `frame_000.svg`, ...
pub fn render_svg(poses: &PoseSequence, out_path: &Path) -> Result<RenderOutput> {
    let frames = check_frames(poses)?;
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(out_path, animated_svg(poses)?).at(out_path)?;
    let stem = out_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Invalid(format!("bad output path {}", out_path.display())))?;
    let dir = out_path.with_file_name(format!("{stem}_frames"));
    fs::create_dir_all(&dir).at(&dir)?;
    let mut stills = Vec::with_capacity(frames);
    for t in 0..frames {
        let path = dir.join(format!("frame_{t:03}.svg"));
        fs::write(&path, still_svg(poses, t)?).at(&path)?;
        stills.push(path);
    }
    Ok(RenderOutput {
        animation: out_path.to_path_buf(),
        stills,
    })
}
