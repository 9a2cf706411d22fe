//! Gesture classification for 2D human-pose keypoint sequences.
//!
//! The pipeline turns OpenPose-style COCO-18 keypoint sequences into
//! normalized multi-dimensional time-series signals and classifies them
//! against labeled gesture templates:
//!
//! 1. [`keypoints`] — parse per-frame keypoint JSON, load sequences,
//!    repair missing detections.
//! 2. [`normalize`] — translate the neck to the origin and scale the
//!    shoulder-to-shoulder distance to 1.
//! 3. [`signals`] — build the 36-row signal matrix, smooth it, and pick
//!    salient dimensions by variance threshold.
//! 4. [`dtw`] — exact DTW (reference path) and the FastDTW
//!    multi-resolution approximation (production path).
//! 5. [`classify`] — template selection and One-Nearest-Neighbor
//!    classification with an optional rejection threshold.
//! 6. [`eval`] — protocol runner, confusion matrices, threshold sweeps,
//!    and a seeded synthetic corpus generator.

pub mod classify;
pub mod dtw;
pub mod eval;
pub mod keypoints;
pub mod normalize;
pub mod signals;
