//! Pose keypoint ingestion.
//!
//! Parses OpenPose-style per-frame JSON documents (COCO body model, 18
//! keypoints), loads whole directories into ordered sequences, and repairs
//! keypoints the estimator failed to detect.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body parts in the COCO body model.
pub const KEYPOINT_COUNT: usize = 18;

/// Flat value count of one `pose_keypoints_2d` array: 18 × (x, y, confidence).
pub const POSE_VALUES: usize = KEYPOINT_COUNT * 3;

/// COCO-18 body-part index map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum CocoPart {
    Nose = 0,
    Neck = 1,
    RShoulder = 2,
    RElbow = 3,
    RWrist = 4,
    LShoulder = 5,
    LElbow = 6,
    LWrist = 7,
    RHip = 8,
    RKnee = 9,
    RAnkle = 10,
    LHip = 11,
    LKnee = 12,
    LAnkle = 13,
    REye = 14,
    LEye = 15,
    REar = 16,
    LEar = 17,
}

impl CocoPart {
    pub const ALL: [CocoPart; KEYPOINT_COUNT] = [
        CocoPart::Nose,
        CocoPart::Neck,
        CocoPart::RShoulder,
        CocoPart::RElbow,
        CocoPart::RWrist,
        CocoPart::LShoulder,
        CocoPart::LElbow,
        CocoPart::LWrist,
        CocoPart::RHip,
        CocoPart::RKnee,
        CocoPart::RAnkle,
        CocoPart::LHip,
        CocoPart::LKnee,
        CocoPart::LAnkle,
        CocoPart::REye,
        CocoPart::LEye,
        CocoPart::REar,
        CocoPart::LEar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CocoPart::Nose => "Nose",
            CocoPart::Neck => "Neck",
            CocoPart::RShoulder => "RShoulder",
            CocoPart::RElbow => "RElbow",
            CocoPart::RWrist => "RWrist",
            CocoPart::LShoulder => "LShoulder",
            CocoPart::LElbow => "LElbow",
            CocoPart::LWrist => "LWrist",
            CocoPart::RHip => "RHip",
            CocoPart::RKnee => "RKnee",
            CocoPart::RAnkle => "RAnkle",
            CocoPart::LHip => "LHip",
            CocoPart::LKnee => "LKnee",
            CocoPart::LAnkle => "LAnkle",
            CocoPart::REye => "REye",
            CocoPart::LEye => "LEye",
            CocoPart::REar => "REar",
            CocoPart::LEar => "LEar",
        }
    }
}

/// One body-part estimate in image coordinates.
///
/// A confidence of exactly 0 marks a part the estimator did not detect;
/// its `x` and `y` carry no meaning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_missing(&self) -> bool {
        self.confidence == 0.0
    }
}

/// All 18 keypoints of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub keypoints: [Keypoint; KEYPOINT_COUNT],
    pub frame_index: usize,
}

impl PoseFrame {
    pub fn keypoint(&self, part: CocoPart) -> &Keypoint {
        &self.keypoints[part.index()]
    }
}

/// An ordered keypoint sequence for one video, in raw pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSequence {
    pub frames: Vec<PoseFrame>,
    pub source_id: String,
}

impl RawSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum KeypointError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("no person detected")]
    NoPersonDetected,
    #[error("sequence too short: found {found} frame file(s), need at least 2")]
    TooShort { found: usize },
    #[error("keypoint {index} ({name}) is missing in every frame")]
    KeypointNeverSeen { index: usize, name: &'static str },
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<KeypointError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct OpenPoseDoc {
    people: Vec<OpenPosePerson>,
}

#[derive(Serialize, Deserialize)]
struct OpenPosePerson {
    pose_keypoints_2d: Vec<f64>,
}

/// Parse one OpenPose per-frame JSON document into a [`PoseFrame`].
///
/// Only the first person entry is used; additional detections are logged
/// and ignored. The returned frame has `frame_index` 0 — [`load_sequence`]
/// assigns ordinals.
pub fn parse_frame_file(bytes: &[u8]) -> Result<PoseFrame, KeypointError> {
    let doc: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| KeypointError::MalformedJson(e.to_string()))?;

    let people = doc
        .get("people")
        .and_then(|v| v.as_array())
        .ok_or_else(|| KeypointError::SchemaViolation("missing `people` array".into()))?;

    if people.is_empty() {
        return Err(KeypointError::NoPersonDetected);
    }
    if people.len() > 1 {
        log::warn!(
            "frame contains {} person entries; using the first",
            people.len()
        );
    }

    let values = people[0]
        .get("pose_keypoints_2d")
        .and_then(|v| v.as_array())
        .ok_or_else(|| {
            KeypointError::SchemaViolation("person entry has no `pose_keypoints_2d` array".into())
        })?;

    if values.len() != POSE_VALUES {
        return Err(KeypointError::SchemaViolation(format!(
            "expected {} values in pose_keypoints_2d, got {}",
            POSE_VALUES,
            values.len()
        )));
    }

    let mut keypoints = [Keypoint::new(0.0, 0.0, 0.0); KEYPOINT_COUNT];
    for (k, triple) in values.chunks_exact(3).enumerate() {
        let mut nums = [0.0f64; 3];
        for (slot, value) in nums.iter_mut().zip(triple) {
            *slot = value.as_f64().ok_or_else(|| {
                KeypointError::SchemaViolation(format!(
                    "non-numeric value in pose_keypoints_2d for keypoint {k}"
                ))
            })?;
        }
        let [x, y, confidence] = nums;
        if !x.is_finite() || !y.is_finite() || !confidence.is_finite() {
            return Err(KeypointError::SchemaViolation(format!(
                "non-finite value for keypoint {k}"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(KeypointError::SchemaViolation(format!(
                "confidence {confidence} out of [0, 1] for keypoint {k}"
            )));
        }
        if x < 0.0 || y < 0.0 {
            return Err(KeypointError::SchemaViolation(format!(
                "negative image coordinate ({x}, {y}) for keypoint {k}"
            )));
        }
        keypoints[k] = Keypoint::new(x, y, confidence);
    }

    Ok(PoseFrame {
        keypoints,
        frame_index: 0,
    })
}

/// Render a frame back into the OpenPose per-frame document layout.
pub fn frame_to_json(frame: &PoseFrame) -> String {
    let mut flat = Vec::with_capacity(POSE_VALUES);
    for kp in &frame.keypoints {
        flat.extend_from_slice(&[kp.x, kp.y, kp.confidence]);
    }
    let doc = OpenPoseDoc {
        people: vec![OpenPosePerson {
            pose_keypoints_2d: flat,
        }],
    };
    serde_json::to_string(&doc).expect("frame serialization cannot fail")
}

/// Load a directory of per-frame JSON files into a [`RawSequence`].
///
/// Files are taken in lexicographic filename order, which OpenPose's
/// zero-padded `--write_json` naming makes equal to temporal order.
pub fn load_sequence(directory: &Path) -> Result<RawSequence, KeypointError> {
    let mut files: Vec<_> = std::fs::read_dir(directory)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));

    if files.len() < 2 {
        return Err(KeypointError::TooShort { found: files.len() });
    }

    let mut frames = Vec::with_capacity(files.len());
    for (index, path) in files.iter().enumerate() {
        let in_file = |source: KeypointError| KeypointError::InFile {
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            source: Box::new(source),
        };
        let bytes = std::fs::read(path).map_err(|e| in_file(e.into()))?;
        let mut frame = parse_frame_file(&bytes).map_err(in_file)?;
        frame.frame_index = index;
        frames.push(frame);
    }

    let source_id = directory
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| directory.display().to_string());

    Ok(RawSequence { frames, source_id })
}

/// Fill missing keypoints by linear interpolation in time.
///
/// Interior gaps are interpolated between the nearest detected neighbors;
/// leading and trailing gaps copy the nearest detected value. Repaired
/// points keep confidence 0 so their provenance stays visible. Detected
/// points are never altered.
pub fn repair_missing(seq: &RawSequence) -> Result<RawSequence, KeypointError> {
    let t_len = seq.frames.len();
    let mut frames = seq.frames.clone();

    for part in CocoPart::ALL {
        let k = part.index();
        let present: Vec<usize> = (0..t_len)
            .filter(|&t| !seq.frames[t].keypoints[k].is_missing())
            .collect();
        if present.is_empty() {
            return Err(KeypointError::KeypointNeverSeen {
                index: k,
                name: part.name(),
            });
        }
        if present.len() == t_len {
            continue;
        }

        #[allow(clippy::needless_range_loop)]
        for t in 0..t_len {
            if !seq.frames[t].keypoints[k].is_missing() {
                continue;
            }
            let prev = present.iter().copied().rfind(|&p| p < t);
            let next = present.iter().copied().find(|&p| p > t);
            let (x, y) = match (prev, next) {
                (Some(p), Some(n)) => {
                    let a = &seq.frames[p].keypoints[k];
                    let b = &seq.frames[n].keypoints[k];
                    let alpha = (t - p) as f64 / (n - p) as f64;
                    (a.x + (b.x - a.x) * alpha, a.y + (b.y - a.y) * alpha)
                }
                (Some(p), None) => {
                    let a = &seq.frames[p].keypoints[k];
                    (a.x, a.y)
                }
                (None, Some(n)) => {
                    let b = &seq.frames[n].keypoints[k];
                    (b.x, b.y)
                }
                (None, None) => unreachable!("present is non-empty"),
            };
            frames[t].keypoints[k] = Keypoint::new(x, y, 0.0);
        }
    }

    Ok(RawSequence {
        frames,
        source_id: seq.source_id.clone(),
    })
}
