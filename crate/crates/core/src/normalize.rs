//! Keypoint normalization: neck-origin translation and shoulder-width
//! scaling, giving translation- and scale-invariant coordinates.
//! Rotation is deliberately not normalized.

use thiserror::Error;

use crate::keypoints::{CocoPart, PoseFrame, RawSequence, KEYPOINT_COUNT};

/// Shoulder distances at or below this many pixels count as degenerate
/// (profile view or detection failure).
pub const SHOULDER_EPSILON: f64 = 1e-6;

/// One frame in shoulder-width units: neck at (0, 0), shoulder-to-shoulder
/// distance 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrame {
    pub coords: [[f64; 2]; KEYPOINT_COUNT],
}

impl NormalizedFrame {
    pub fn coord(&self, part: CocoPart) -> [f64; 2] {
        self.coords[part.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSequence {
    pub frames: Vec<NormalizedFrame>,
    pub source_id: String,
    pub label: Option<String>,
}

impl NormalizedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("degenerate shoulders in frame {frame}: distance {distance} <= {SHOULDER_EPSILON} px")]
    DegenerateShoulders { frame: usize, distance: f64 },
}

/// Normalize a single frame: subtract the neck position from every
/// keypoint, then divide by the left↔right shoulder distance.
///
/// Expects repaired input (neck and both shoulders carry valid
/// coordinates).
pub fn normalize_frame(frame: &PoseFrame) -> Result<NormalizedFrame, NormalizeError> {
    let neck = frame.keypoint(CocoPart::Neck);
    let left = frame.keypoint(CocoPart::LShoulder);
    let right = frame.keypoint(CocoPart::RShoulder);

    let distance = ((left.x - right.x).powi(2) + (left.y - right.y).powi(2)).sqrt();
    if distance <= SHOULDER_EPSILON {
        return Err(NormalizeError::DegenerateShoulders {
            frame: frame.frame_index,
            distance,
        });
    }

    let mut coords = [[0.0; 2]; KEYPOINT_COUNT];
    for (k, kp) in frame.keypoints.iter().enumerate() {
        coords[k] = [(kp.x - neck.x) / distance, (kp.y - neck.y) / distance];
    }
    Ok(NormalizedFrame { coords })
}

/// Normalize every frame independently (per-frame shoulder scale).
pub fn normalize_sequence(seq: &RawSequence) -> Result<NormalizedSequence, NormalizeError> {
    let frames = seq
        .frames
        .iter()
        .map(normalize_frame)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NormalizedSequence {
        frames,
        source_id: seq.source_id.clone(),
        label: None,
    })
}
