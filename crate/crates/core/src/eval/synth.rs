//! Seeded synthetic gesture corpus.
//!
//! Each gesture class is a parametric limb trajectory on a frontal stick
//! figure with a fixed 80 px shoulder width. The six base classes move
//! disjoint body-part groups, so a corpus of base classes is well
//! separated. Confusable extra classes reuse a base class's limb and
//! dominant trajectory, differing only in a mirrored low-amplitude
//! component that stays below typical variance thresholds.
//!
//! Per-trial variation: additive coordinate noise, ±`time_scale_jitter`
//! length scaling, a random global pixel translation and scale (which
//! normalization must cancel), and an occasional single-frame neck spike
//! whose magnitude follows the noise amplitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusSequence, EvalError, LabeledCorpus};
use crate::keypoints::{Keypoint, PoseFrame, RawSequence, KEYPOINT_COUNT};
use crate::normalize::normalize_sequence;

/// Generator parameters.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    /// Number of base gesture classes (2..=6), labeled `g1`, `g2`, ...
    pub gesture_count: usize,
    /// Subjects, labeled `1`..=`subjects`.
    pub subjects: usize,
    /// Trials per subject and gesture, numbered from 1.
    pub trials: usize,
    /// Inclusive range the per-gesture base frame count is drawn from.
    pub frame_range: (usize, usize),
    /// Uniform ±amplitude of the per-coordinate pixel noise.
    pub noise_amplitude: f64,
    /// Per-trial sequence-length scaling, a fraction (0.25 means ±25%).
    pub time_scale_jitter: f64,
    /// Extra classes confusable with base classes: the c-th mimics base
    /// class c and is labeled e.g. `g1x`.
    pub confusable_count: usize,
    /// Chance of a single-frame neck spike per sequence.
    pub neck_spike_probability: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            gesture_count: 6,
            subjects: 8,
            trials: 4,
            frame_range: (40, 56),
            noise_amplitude: 2.0,
            time_scale_jitter: 0.25,
            confusable_count: 0,
            neck_spike_probability: 0.15,
        }
    }
}

/// Most base motion classes available.
pub const MAX_BASE_CLASSES: usize = 6;

/// A raw (pixel-space) synthetic sequence with its protocol metadata.
#[derive(Debug, Clone)]
pub struct RawCorpusEntry {
    pub sequence: RawSequence,
    pub label: String,
    pub subject: String,
    pub trial: u32,
}

/// Frontal stick figure in 640x480 image coordinates, shoulder width 80.
const BASE_SKELETON: [[f64; 2]; KEYPOINT_COUNT] = [
    [320.0, 110.0], // Nose
    [320.0, 150.0], // Neck
    [280.0, 155.0], // RShoulder
    [265.0, 215.0], // RElbow
    [255.0, 270.0], // RWrist
    [360.0, 155.0], // LShoulder
    [375.0, 215.0], // LElbow
    [385.0, 270.0], // LWrist
    [295.0, 290.0], // RHip
    [290.0, 360.0], // RKnee
    [288.0, 430.0], // RAnkle
    [345.0, 290.0], // LHip
    [350.0, 360.0], // LKnee
    [352.0, 430.0], // LAnkle
    [308.0, 100.0], // REye
    [332.0, 100.0], // LEye
    [296.0, 108.0], // REar
    [344.0, 108.0], // LEar
];

/// Dominant trajectory amplitude in pixels.
const AMPLITUDE: f64 = 150.0;

#[derive(Debug, Clone, Copy)]
struct GestureClass {
    base: usize,
    /// Confusable variant: the secondary motion component is mirrored.
    mirrored: bool,
}

impl GestureClass {
    fn label(&self) -> String {
        if self.mirrored {
            format!("g{}x", self.base + 1)
        } else {
            format!("g{}", self.base + 1)
        }
    }
}

/// Per-keypoint pixel offsets of one class at phase `p` in [0, 1].
fn class_offsets(class: GestureClass, p: f64) -> [[f64; 2]; KEYPOINT_COUNT] {
    use std::f64::consts::PI;
    let mut off = [[0.0; 2]; KEYPOINT_COUNT];
    let arch = (PI * p).sin();
    let mirror = if class.mirrored { -1.0 } else { 1.0 };
    match class.base {
        // Right arm swipe: wrist ramps across with a small vertical arc.
        0 => {
            off[4] = [AMPLITUDE * p, mirror * -50.0 * arch];
            off[3] = [AMPLITUDE * p / 2.0, mirror * -25.0 * arch];
        }
        // Left hand raise with a low-amplitude wave.
        1 => {
            off[7] = [mirror * 30.0 * (2.0 * PI * p).sin(), -AMPLITUDE * arch];
            off[6] = [mirror * 15.0 * (2.0 * PI * p).sin(), -AMPLITUDE * arch / 2.0];
        }
        // Right leg kick.
        2 => {
            off[10] = [mirror * 40.0 * arch, -AMPLITUDE * arch];
            off[9] = [mirror * 20.0 * arch, -AMPLITUDE * arch / 2.0];
        }
        // Left leg step.
        3 => {
            off[13] = [mirror * -40.0 * arch, -AMPLITUDE * arch];
            off[12] = [mirror * -20.0 * arch, -AMPLITUDE * arch / 2.0];
        }
        // Head bow.
        4 => {
            let sway = mirror * 25.0 * (2.0 * PI * p).sin();
            for k in [0usize, 14, 15, 16, 17] {
                off[k] = [sway, AMPLITUDE * arch];
            }
        }
        // Squat: both hips drop.
        5 => {
            let sway = mirror * 20.0 * (2.0 * PI * p).sin();
            off[8] = [sway, AMPLITUDE * arch];
            off[11] = [sway, AMPLITUDE * arch];
        }
        other => unreachable!("no motion defined for base class {other}"),
    }
    off
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn sequence_rng(seed: u64, class_stream: u64, subject: u64, trial: u64) -> ChaCha8Rng {
    let mix = splitmix64(seed ^ splitmix64((class_stream << 40) | (subject << 20) | trial));
    ChaCha8Rng::seed_from_u64(mix)
}

fn validate(spec: &SyntheticSpec) -> Result<(), EvalError> {
    if spec.gesture_count < 2 {
        return Err(EvalError::InvalidSpec("need at least 2 gesture classes".into()));
    }
    if spec.gesture_count > MAX_BASE_CLASSES {
        return Err(EvalError::InvalidSpec(format!(
            "at most {MAX_BASE_CLASSES} base classes available, got {}",
            spec.gesture_count
        )));
    }
    if spec.confusable_count > spec.gesture_count {
        return Err(EvalError::InvalidSpec(
            "more confusable classes than base classes to mimic".into(),
        ));
    }
    if spec.subjects == 0 || spec.trials == 0 {
        return Err(EvalError::InvalidSpec("need at least one subject and trial".into()));
    }
    let (lo, hi) = spec.frame_range;
    if lo < 8 || hi < lo {
        return Err(EvalError::InvalidSpec(format!(
            "frame range ({lo}, {hi}) must satisfy 8 <= lo <= hi"
        )));
    }
    if spec.noise_amplitude < 0.0 {
        return Err(EvalError::InvalidSpec("negative noise amplitude".into()));
    }
    if !(0.0..1.0).contains(&spec.time_scale_jitter) {
        return Err(EvalError::InvalidSpec("time scale jitter must be in [0, 1)".into()));
    }
    if !(0.0..=1.0).contains(&spec.neck_spike_probability) {
        return Err(EvalError::InvalidSpec("spike probability must be in [0, 1]".into()));
    }
    Ok(())
}

/// Generate raw pixel-space sequences, deterministically from the seed.
pub fn generate_synthetic_raw(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<Vec<RawCorpusEntry>, EvalError> {
    validate(spec)?;

    let mut classes = Vec::new();
    for base in 0..spec.gesture_count {
        classes.push((
            base as u64,
            GestureClass {
                base,
                mirrored: false,
            },
        ));
    }
    for c in 0..spec.confusable_count {
        classes.push((
            1000 + c as u64,
            GestureClass {
                base: c,
                mirrored: true,
            },
        ));
    }

    let mut entries = Vec::new();
    for &(stream, class) in &classes {
        // Base length is a per-gesture property; trials scale around it.
        let mut gesture_rng = sequence_rng(seed, stream, 0, 0);
        let base_frames = gesture_rng.random_range(spec.frame_range.0..=spec.frame_range.1);
        let label = class.label();

        for subject in 1..=spec.subjects {
            for trial in 1..=spec.trials {
                let mut rng = sequence_rng(seed, stream, subject as u64, trial as u64);
                let scale_jitter = if spec.time_scale_jitter > 0.0 {
                    rng.random_range(1.0 - spec.time_scale_jitter..=1.0 + spec.time_scale_jitter)
                } else {
                    1.0
                };
                let frames_len = ((base_frames as f64 * scale_jitter).round() as usize).max(8);

                let translation = [
                    rng.random_range(-60.0..60.0),
                    rng.random_range(-60.0..60.0),
                ];
                let global_scale = rng.random_range(0.85..1.25);
                let spike_frame = if rng.random_bool(spec.neck_spike_probability) {
                    Some(rng.random_range(0..frames_len))
                } else {
                    None
                };
                let spike_dy = -3.5 * spec.noise_amplitude;

                let mut frames = Vec::with_capacity(frames_len);
                for t in 0..frames_len {
                    let phase = t as f64 / (frames_len - 1) as f64;
                    let offsets = class_offsets(class, phase);
                    let mut keypoints = [Keypoint::new(0.0, 0.0, 1.0); KEYPOINT_COUNT];
                    for k in 0..KEYPOINT_COUNT {
                        let mut x = BASE_SKELETON[k][0] + offsets[k][0];
                        let mut y = BASE_SKELETON[k][1] + offsets[k][1];
                        if spec.noise_amplitude > 0.0 {
                            x += rng.random_range(-spec.noise_amplitude..spec.noise_amplitude);
                            y += rng.random_range(-spec.noise_amplitude..spec.noise_amplitude);
                        }
                        if k == 1 && spike_frame == Some(t) {
                            y += spike_dy;
                        }
                        keypoints[k] = Keypoint::new(
                            (x + translation[0]) * global_scale,
                            (y + translation[1]) * global_scale,
                            1.0,
                        );
                    }
                    frames.push(PoseFrame {
                        keypoints,
                        frame_index: t,
                    });
                }

                entries.push(RawCorpusEntry {
                    sequence: RawSequence {
                        frames,
                        source_id: format!("{label}_s{subject}_t{trial}"),
                    },
                    label: label.clone(),
                    subject: subject.to_string(),
                    trial: trial as u32,
                });
            }
        }
    }
    Ok(entries)
}

/// Generate a normalized labeled corpus, deterministically from the seed.
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<LabeledCorpus, EvalError> {
    let raw = generate_synthetic_raw(spec, seed)?;
    let mut sequences = Vec::with_capacity(raw.len());
    for entry in raw {
        let mut sequence = normalize_sequence(&entry.sequence)
            .expect("synthetic skeleton always has valid shoulders");
        sequence.label = Some(entry.label);
        sequences.push(CorpusSequence {
            sequence,
            subject: entry.subject,
            trial: entry.trial,
        });
    }
    LabeledCorpus::new(sequences)
}
