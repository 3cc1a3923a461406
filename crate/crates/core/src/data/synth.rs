//! Synthetic gesture corpus with known ground truth.
//!
//! Every sample's pose sequence is an exact function of its schema class,
//! the RMS level of its audio and its speaker:
//!
//! `pose(t) = REST + speaker_offset + gain * template(class, t / 63)`,
//! `gain = rms(audio) / RMS_REF`.
//!
//! Templates displace the wrists (elbows follow at half amplitude); head,
//! shoulders and hips never move, so the Neck stays at the origin and the
//! shoulder distance stays 1. The audio is an amplitude-modulated tone whose
//! carrier identifies the speaker; it carries no class information.

use std::f64::consts::PI;

use super::text::transcript_for;
use super::SegmentSample;
use crate::audio::{compute_mel, Waveform, SAMPLE_RATE};
use crate::pose::{Joint, NormalizationParams, PoseSequence, FRAMES, NUM_JOINTS, POSE_DIM};
use crate::schema::{ImageSchemaLabel, NUM_SCHEMAS};
use crate::tensor::{SeededRng, Tensor};
use crate::Result;

/// 64 frames at 15 fps = 4.2667 s of 16 kHz audio.
pub const SEGMENT_SAMPLES: usize = 68_256;
pub const RMS_REF: f64 = 0.1;
pub const RMS_RANGE: (f64, f64) = (0.07, 0.13);
/// Peak template displacement at unit gain, in shoulder widths.
pub const AMPLITUDE: f64 = 0.5;
pub const SPEAKER_OFFSET_RADIUS: f64 = 0.15;

/// Normalized rest pose: arms hanging with hands in front of the waist.
pub const REST: [[f64; 2]; NUM_JOINTS] = [
    [0.0, -0.6],   // Nose
    [0.0, 0.0],    // Neck
    [-0.5, 0.0],   // RShoulder
    [-0.6, 0.55],  // RElbow
    [-0.3, 0.9],   // RWrist
    [0.5, 0.0],    // LShoulder
    [0.6, 0.55],   // LElbow
    [0.3, 0.9],    // LWrist
    [0.0, 1.6],    // MidHip
    [-0.3, 1.6],   // RHip
    [0.3, 1.6],    // LHip
];

/// Wrist displacement `[rx, ry, lx, ly]` at phase `s` in `[0, 1]`, before
/// scaling by `AMPLITUDE * gain`. Image convention: +x is to the viewer's
/// right, +y is down. The person's right side is on the viewer's left.
pub fn template(label: ImageSchemaLabel, s: f64) -> [f64; 4] {
    use ImageSchemaLabel::*;
    let bump = (PI * s).sin(); // 0 -> 1 -> 0
    let wave = (2.0 * PI * s).sin(); // 0 -> 1 -> -1 -> 0
    let sweep = -(PI * s).cos(); // -1 -> 1, strictly increasing
    match label {
        // Both hands pulse outward from the body's midline, twice.
        CenterPeriphery => {
            let p = (2.0 * PI * s).sin().powi(2);
            [-p, 0.0, p, 0.0]
        }
        // Hands meet in front of the chest, slightly raised.
        Contact => [0.6 * bump, -0.3 * bump, -0.6 * bump, -0.3 * bump],
        // Inward arc: hands close in while rising then dipping.
        Containment => [0.5 * bump, -0.6 * wave, -0.5 * bump, -0.6 * wave],
        // Both hands raised like a lid, sliding sideways together.
        Covering => [0.5 * wave, -bump, 0.5 * wave, -bump],
        // Right hand thrusts outward and up with accelerating motion.
        Force => [-s * s, -0.5 * s * s, 0.0, 0.0],
        // Hands bob in opposite vertical phase.
        Link => [0.0, 0.5 * wave, 0.0, -0.5 * wave],
        // Hands trace a small circle, as if turning an object.
        Object => {
            let c = 1.0 - (2.0 * PI * s).cos();
            [0.3 * wave, -0.3 * c, -0.3 * wave, -0.3 * c]
        }
        // Right hand rises above the left, which drops a little.
        PartWhole => [0.0, -bump, 0.0, 0.4 * bump],
        // Hands separate vertically and keep growing apart.
        Scale => [-0.3 * s, -s, 0.0, 0.5 * s],
        // Both hands sweep from left to right along a shallow arc.
        SourcePathGoal => [sweep, -0.3 * bump, sweep, -0.3 * bump],
        // Hands start together and part.
        Splitting => {
            let x = 0.5 * (PI * s).cos();
            [x, -0.4 * bump, -x, -0.4 * bump]
        }
        // Fast small rubbing oscillation at chest height.
        Substance => {
            let r = 0.2 * (6.0 * PI * s).sin();
            [r, -0.3 * bump, -r, -0.3 * bump]
        }
        // Palms lift together in front, held apart.
        Support => {
            let y = -0.6 * bump * bump;
            [0.2 * bump, y, -0.2 * bump, y]
        }
        // Right hand raises steadily overhead.
        Verticality => [0.0, -1.2 * (1.0 - (PI * s).cos()) / 2.0, 0.0, 0.0],
    }
}

/// Arm offset shared by every segment of one speaker.
pub fn speaker_offset(speaker: usize, seed: u64) -> [f64; 2] {
    let mut rng = SeededRng::new(seed).fork(1_000 + speaker as u64);
    let angle = rng.uniform(0.0, 2.0 * PI);
    [
        SPEAKER_OFFSET_RADIUS * angle.cos(),
        SPEAKER_OFFSET_RADIUS * angle.sin(),
    ]
}

/// Carrier frequency of speaker `k`'s synthetic voice.
pub fn speaker_carrier_hz(speaker: usize) -> f64 {
    200.0 + 130.0 * speaker as f64
}

pub fn speaker_id(speaker: usize) -> String {
    format!("spk{speaker}")
}

/// The oracle pose sequence (`64 x 22`, normalized coordinates).
pub fn oracle_poses(label: ImageSchemaLabel, gain: f64, offset: [f64; 2]) -> Tensor {
    let mut data = Vec::with_capacity(FRAMES * POSE_DIM);
    for t in 0..FRAMES {
        let d = template(label, t as f64 / (FRAMES - 1) as f64);
        let k = AMPLITUDE * gain;
        for j in Joint::ALL {
            let [x, y] = REST[j.index()];
            let (dx, dy, off) = match j {
                Joint::RWrist => (d[0], d[1], 1.0),
                Joint::RElbow => (0.5 * d[0], 0.5 * d[1], 1.0),
                Joint::LWrist => (d[2], d[3], 1.0),
                Joint::LElbow => (0.5 * d[2], 0.5 * d[3], 1.0),
                _ => (0.0, 0.0, 0.0),
            };
            data.push(x + off * offset[0] + k * dx);
            data.push(y + off * offset[1] + k * dy);
        }
    }
    Tensor::new(vec![FRAMES, POSE_DIM], data).expect("oracle pose shape")
}

/// Amplitude-modulated tone with exactly `rms` root-mean-square level
/// (before f32 quantization).
pub fn synth_voice(carrier_hz: f64, rms: f64, rng: &mut SeededRng) -> Waveform {
    let fm = rng.uniform(2.0, 6.0);
    let (pm, pc) = (rng.uniform(0.0, 2.0 * PI), rng.uniform(0.0, 2.0 * PI));
    let sr = SAMPLE_RATE as f64;
    let raw: Vec<f64> = (0..SEGMENT_SAMPLES)
        .map(|n| {
            let t = n as f64 / sr;
            (1.0 + 0.6 * (2.0 * PI * fm * t + pm).sin()) * (2.0 * PI * carrier_hz * t + pc).sin()
        })
        .collect();
    let norm = (raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64).sqrt();
    // Round through f32 so the stored 32-bit float WAV reproduces these samples exactly.
    let samples = raw.iter().map(|v| (v * rms / norm) as f32 as f64).collect();
    Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// Pixel-space placement used for denormalized rendering.
fn speaker_params(speaker: usize) -> NormalizationParams {
    let neck = [320.0 + 12.0 * speaker as f64, 150.0];
    NormalizationParams {
        root_offsets: vec![neck; FRAMES],
        scale: 90.0 + 5.0 * speaker as f64,
    }
}

/// `n` samples spread round-robin over `speakers` speakers with uniformly
/// drawn classes. Fully determined by `seed`.
pub fn synth_gesture_dataset(n: usize, speakers: usize, seed: u64) -> Result<Vec<SegmentSample>> {
    let speakers = speakers.max(1);
    let root = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let mut rng = root.fork(i as u64);
            let speaker = i % speakers;
            let label = ImageSchemaLabel::ALL[rng.below(NUM_SCHEMAS)];
            let level = rng.uniform(RMS_RANGE.0, RMS_RANGE.1);
            let audio = synth_voice(speaker_carrier_hz(speaker), level, &mut rng);
            let gain = audio.rms() / RMS_REF;
            let poses = PoseSequence::new(
                oracle_poses(label, gain, speaker_offset(speaker, seed)),
                speaker_params(speaker),
            )?;
            Ok(SegmentSample {
                id: format!("seg{i:05}"),
                mel: compute_mel(&audio)?,
                audio,
                transcript: transcript_for(label, &mut rng),
                schema: None,
                oracle_schema: Some(label),
                poses,
                speaker_id: speaker_id(speaker),
            })
        })
        .collect()
}
