//! Template storage and One-Nearest-Neighbor classification.
//!
//! One template is stored per gesture: the candidate with the minimum
//! total warping distance to its peers (the set medoid). A query is
//! classified to the template with the smallest aggregate warping
//! distance; an optional threshold turns weak matches into rejections.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw::{multi_dim_distance, DtwError};
use crate::normalize::NormalizedSequence;
use crate::signals::{prepare, select_dimensions, PreparedSequence, SequenceFile, SignalError};

/// Version tag of the template-set file format.
pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

/// Parameters shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Median filter radius for the dimension-selection signal.
    #[serde(default = "default_median_radius")]
    pub median_radius: usize,
    /// Gaussian smoothing sigma for the signals DTW sees.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Variance threshold for dimension selection.
    #[serde(default = "default_t_var")]
    pub t_var: f64,
    /// FastDTW refinement radius.
    #[serde(default = "default_dtw_radius")]
    pub dtw_radius: usize,
    /// Minimum-distance cutoff above which a query is rejected instead of
    /// labeled. Absent means no rejection.
    #[serde(default)]
    pub reject_threshold: Option<f64>,
}

fn default_median_radius() -> usize {
    3
}
fn default_sigma() -> f64 {
    1.0
}
fn default_t_var() -> f64 {
    0.10
}
fn default_dtw_radius() -> usize {
    1
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            median_radius: default_median_radius(),
            sigma: default_sigma(),
            t_var: default_t_var(),
            dtw_radius: default_dtw_radius(),
            reject_threshold: None,
        }
    }
}

/// A labeled, fully preprocessed example sequence for one gesture.
#[derive(Debug, Clone)]
pub struct GestureTemplate {
    pub prepared: PreparedSequence,
    pub gesture_id: String,
}

/// The classifier's template store: one template per gesture, all
/// prepared with the same parameters.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub templates: BTreeMap<String, GestureTemplate>,
    pub params: PipelineParams,
}

impl TemplateSet {
    pub fn new(
        templates: Vec<GestureTemplate>,
        params: PipelineParams,
    ) -> Result<Self, ClassifyError> {
        if templates.is_empty() {
            return Err(ClassifyError::EmptyTemplateSet);
        }
        let mut map = BTreeMap::new();
        for template in templates {
            if template.gesture_id.is_empty() {
                return Err(ClassifyError::MissingLabel {
                    source_id: template.prepared.source_id.clone(),
                });
            }
            if let Some(previous) = map.insert(template.gesture_id.clone(), template) {
                return Err(ClassifyError::DuplicateGesture {
                    gesture_id: previous.gesture_id,
                });
            }
        }
        Ok(Self {
            templates: map,
            params,
        })
    }
}

/// The classifier's verdict for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Prediction {
    Gesture(String),
    Rejected,
}

impl Prediction {
    pub fn as_str(&self) -> &str {
        match self {
            Prediction::Gesture(id) => id,
            Prediction::Rejected => "REJECTED",
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// One template's entry in the distance ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub gesture_id: String,
    pub distance: f64,
    pub dimensions_used: usize,
}

/// Predicted label (or rejection) plus the full distance ranking.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationOutcome {
    pub predicted: Prediction,
    /// Ascending by distance; ties broken by gesture id.
    pub ranking: Vec<RankEntry>,
    pub query_id: String,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no candidate sequences")]
    EmptyCandidates,
    #[error("sequence `{source_id}` has no label")]
    MissingLabel { source_id: String },
    #[error("mixed candidate labels: expected `{expected}`, found `{found}`")]
    MixedLabels { expected: String, found: String },
    #[error("template set is empty")]
    EmptyTemplateSet,
    #[error("duplicate template for gesture `{gesture_id}`")]
    DuplicateGesture { gesture_id: String },
    #[error("classification failed: no dimension was selected for any template")]
    ClassificationFailed,
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error("invalid template set file: {0}")]
    Format(String),
    #[error(transparent)]
    Sequence(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pick the best example among candidates of one gesture: the one with
/// the minimum total warping distance to all its peers. Ties go to the
/// lexicographically smallest source id.
pub fn select_template(
    candidates: &[PreparedSequence],
    t_var: f64,
    dtw_radius: usize,
) -> Result<GestureTemplate, ClassifyError> {
    select_template_detailed(candidates, t_var, dtw_radius).map(|(template, _)| template)
}

/// [`select_template`] plus the winner's total warping distance to its
/// peers.
pub fn select_template_detailed(
    candidates: &[PreparedSequence],
    t_var: f64,
    dtw_radius: usize,
) -> Result<(GestureTemplate, f64), ClassifyError> {
    let first = candidates.first().ok_or(ClassifyError::EmptyCandidates)?;
    let gesture_id = first
        .label
        .clone()
        .ok_or_else(|| ClassifyError::MissingLabel {
            source_id: first.source_id.clone(),
        })?;
    for candidate in candidates {
        match &candidate.label {
            Some(label) if *label == gesture_id => {}
            Some(label) => {
                return Err(ClassifyError::MixedLabels {
                    expected: gesture_id,
                    found: label.clone(),
                })
            }
            None => {
                return Err(ClassifyError::MissingLabel {
                    source_id: candidate.source_id.clone(),
                })
            }
        }
    }

    let mut best: Option<(f64, &PreparedSequence)> = None;
    for candidate in candidates {
        let mut total = 0.0;
        for other in candidates {
            if std::ptr::eq(candidate, other) {
                continue;
            }
            let dims = select_dimensions(candidate, other, t_var);
            total += multi_dim_distance(candidate, other, &dims, dtw_radius)?.aggregate;
        }
        let replace = match &best {
            None => true,
            Some((best_total, best_seq)) => {
                total < *best_total
                    || (total == *best_total && candidate.source_id < best_seq.source_id)
            }
        };
        if replace {
            best = Some((total, candidate));
        }
    }

    let (total, winner) = best.expect("candidates checked non-empty");
    log::debug!(
        "selected template for `{gesture_id}`: {} (total warping distance {total})",
        winner.source_id
    );
    Ok((
        GestureTemplate {
            prepared: winner.clone(),
            gesture_id,
        },
        total,
    ))
}

/// One-Nearest-Neighbor classification of a prepared query against a
/// template set.
///
/// Templates for which no dimension clears the variance threshold are
/// skipped; if that happens for every template the classification fails
/// because no data reaches the DTW stage.
pub fn classify(
    query: &PreparedSequence,
    set: &TemplateSet,
) -> Result<ClassificationOutcome, ClassifyError> {
    let params = &set.params;
    let mut ranking = Vec::with_capacity(set.templates.len());
    for (gesture_id, template) in &set.templates {
        let dims = select_dimensions(query, &template.prepared, params.t_var);
        if dims.is_empty() {
            continue;
        }
        let result = multi_dim_distance(query, &template.prepared, &dims, params.dtw_radius)?;
        ranking.push(RankEntry {
            gesture_id: gesture_id.clone(),
            distance: result.aggregate,
            dimensions_used: result.dimensions_used.len(),
        });
    }
    if ranking.is_empty() {
        return Err(ClassifyError::ClassificationFailed);
    }
    ranking.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.gesture_id.cmp(&b.gesture_id))
    });

    let best = &ranking[0];
    let predicted = match params.reject_threshold {
        Some(threshold) if best.distance > threshold => Prediction::Rejected,
        _ => Prediction::Gesture(best.gesture_id.clone()),
    };
    Ok(ClassificationOutcome {
        predicted,
        ranking,
        query_id: query.source_id.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct TemplateSetFile {
    format_version: u32,
    params: PipelineParams,
    templates: BTreeMap<String, SequenceFile>,
}

/// Write a template set as normalized sequences plus the parameters they
/// must be prepared with.
pub fn write_template_set(
    path: &Path,
    templates: &BTreeMap<String, NormalizedSequence>,
    params: &PipelineParams,
) -> Result<(), ClassifyError> {
    let file = TemplateSetFile {
        format_version: TEMPLATE_FORMAT_VERSION,
        params: params.clone(),
        templates: templates
            .iter()
            .map(|(id, seq)| (id.clone(), SequenceFile::from_sequence(seq, None)))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| ClassifyError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a template set, re-preparing every stored sequence with the
/// file's own parameters.
pub fn read_template_set(path: &Path) -> Result<TemplateSet, ClassifyError> {
    let bytes = std::fs::read(path)?;
    let file: TemplateSetFile =
        serde_json::from_slice(&bytes).map_err(|e| ClassifyError::Format(e.to_string()))?;
    if file.format_version != TEMPLATE_FORMAT_VERSION {
        return Err(ClassifyError::Format(format!(
            "unsupported format_version {} (expected {TEMPLATE_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut templates = Vec::with_capacity(file.templates.len());
    for (gesture_id, sequence_file) in file.templates {
        let mut sequence = sequence_file.into_sequence()?;
        sequence.label = Some(gesture_id.clone());
        let prepared = prepare(&sequence, file.params.median_radius, file.params.sigma);
        templates.push(GestureTemplate {
            prepared,
            gesture_id,
        });
    }
    TemplateSet::new(templates, file.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::KEYPOINT_COUNT;
    use crate::normalize::NormalizedFrame;
    use crate::signals::DIMENSIONS;

    /// Build a normalized-like sequence with a single moving dimension.
    fn motion_sequence(id: &str, label: &str, dim: usize, amplitude: f64) -> NormalizedSequence {
        motion_sequence_with(id, label, &[(dim, amplitude)], 24)
    }

    fn motion_sequence_with(
        id: &str,
        label: &str,
        motions: &[(usize, f64)],
        t_len: usize,
    ) -> NormalizedSequence {
        let mut frames = vec![
            NormalizedFrame {
                coords: [[0.0; 2]; KEYPOINT_COUNT]
            };
            t_len
        ];
        for &(dim, amplitude) in motions {
            assert!(dim < DIMENSIONS && dim > 3, "keep neck dimensions still");
            for (t, frame) in frames.iter_mut().enumerate() {
                let phase = t as f64 / (t_len - 1) as f64;
                frame.coords[dim / 2][dim % 2] =
                    amplitude * (std::f64::consts::PI * phase).sin();
            }
        }
        NormalizedSequence {
            frames,
            source_id: id.into(),
            label: Some(label.into()),
        }
    }

    fn prep(seq: &NormalizedSequence) -> PreparedSequence {
        prepare(seq, 3, 1.0)
    }

    fn small_set(params: PipelineParams) -> TemplateSet {
        let a = prep(&motion_sequence("a1_t", "a1", 8, 2.0));
        let b = prep(&motion_sequence("a2_t", "a2", 14, 2.0));
        TemplateSet::new(
            vec![
                GestureTemplate {
                    prepared: a,
                    gesture_id: "a1".into(),
                },
                GestureTemplate {
                    prepared: b,
                    gesture_id: "a2".into(),
                },
            ],
            params,
        )
        .unwrap()
    }

    #[test]
    fn single_candidate_is_selected() {
        let only = prep(&motion_sequence("solo", "a1", 8, 2.0));
        let template = select_template(std::slice::from_ref(&only), 0.1, 1).unwrap();
        assert_eq!(template.gesture_id, "a1");
        assert_eq!(template.prepared.source_id, "solo");
    }

    #[test]
    fn medoid_wins_over_outlier() {
        // Two identical copies and one outlier: a copy must win, and the
        // tie between copies goes to the smaller source id.
        let copy1 = prep(&motion_sequence("s1", "a1", 8, 2.0));
        let copy2 = prep(&motion_sequence("s2", "a1", 8, 2.0));
        let outlier = prep(&motion_sequence("s3", "a1", 8, 4.0));
        let template = select_template(&[outlier, copy2, copy1], 0.1, 1).unwrap();
        assert_eq!(template.prepared.source_id, "s1");
    }

    #[test]
    fn four_candidates_select_exactly_one() {
        let candidates: Vec<_> = (1..=4)
            .map(|i| prep(&motion_sequence(&format!("t{i}"), "a1", 8, 2.0 + 0.05 * i as f64)))
            .collect();
        let template = select_template(&candidates, 0.1, 1).unwrap();
        assert!(candidates.iter().any(|c| c.source_id == template.prepared.source_id));
    }

    #[test]
    fn empty_candidates_is_an_error() {
        assert!(matches!(
            select_template(&[], 0.1, 1),
            Err(ClassifyError::EmptyCandidates)
        ));
    }

    #[test]
    fn mixed_labels_are_rejected() {
        let a = prep(&motion_sequence("x", "a1", 8, 2.0));
        let b = prep(&motion_sequence("y", "a2", 8, 2.0));
        assert!(matches!(
            select_template(&[a, b], 0.1, 1),
            Err(ClassifyError::MixedLabels { .. })
        ));
    }

    #[test]
    fn identity_query_classifies_to_itself_with_zero_distance() {
        let set = small_set(PipelineParams::default());
        let query = set.templates["a1"].prepared.clone();
        let outcome = classify(&query, &set).unwrap();
        assert_eq!(outcome.predicted, Prediction::Gesture("a1".into()));
        assert_eq!(outcome.ranking[0].distance, 0.0);
        assert_eq!(outcome.query_id, "a1_t");
    }

    #[test]
    fn threshold_rejects_distant_queries() {
        let params = PipelineParams {
            reject_threshold: Some(0.5),
            ..Default::default()
        };
        let set = small_set(params);
        let query = prep(&motion_sequence("far", "?", 8, 3.0));
        let outcome = classify(&query, &set).unwrap();
        assert_eq!(outcome.predicted, Prediction::Rejected);
        assert!(outcome.ranking[0].distance > 0.5);
    }

    #[test]
    fn huge_t_var_fails_classification() {
        let params = PipelineParams {
            t_var: 1e12,
            ..Default::default()
        };
        let set = small_set(params);
        let query = prep(&motion_sequence("q", "?", 8, 2.0));
        assert!(matches!(
            classify(&query, &set),
            Err(ClassifyError::ClassificationFailed)
        ));
    }

    #[test]
    fn ranking_is_sorted_and_deterministic() {
        let set = small_set(PipelineParams::default());
        let query = prep(&motion_sequence("q", "?", 8, 2.2));
        let first = classify(&query, &set).unwrap();
        let second = classify(&query, &set).unwrap();
        assert_eq!(first, second);
        for pair in first.ranking.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
    }

    #[test]
    fn outcome_ignores_template_insertion_order() {
        let a = GestureTemplate {
            prepared: prep(&motion_sequence("a1_t", "a1", 8, 2.0)),
            gesture_id: "a1".into(),
        };
        let b = GestureTemplate {
            prepared: prep(&motion_sequence("a2_t", "a2", 14, 2.0)),
            gesture_id: "a2".into(),
        };
        let forward =
            TemplateSet::new(vec![a.clone(), b.clone()], PipelineParams::default()).unwrap();
        let backward = TemplateSet::new(vec![b, a], PipelineParams::default()).unwrap();
        let query = prep(&motion_sequence("q", "?", 8, 2.2));
        assert_eq!(
            classify(&query, &forward).unwrap(),
            classify(&query, &backward).unwrap()
        );
    }

    #[test]
    fn raising_the_threshold_only_flips_rejections_to_the_top_label() {
        let base = small_set(PipelineParams::default());
        let query = prep(&motion_sequence("q", "?", 8, 2.4));
        let unthresholded = classify(&query, &base).unwrap();
        let best_distance = unthresholded.ranking[0].distance;
        let top_label = unthresholded.ranking[0].gesture_id.clone();
        assert!(best_distance > 0.0);

        // Ascending thresholds: rejections first, then the top label, and
        // never any other label.
        let mut seen_label = false;
        for threshold in [
            best_distance * 0.5,
            best_distance * 0.99,
            best_distance * 1.01,
            best_distance * 2.0,
        ] {
            let set = small_set(PipelineParams {
                reject_threshold: Some(threshold),
                ..Default::default()
            });
            match classify(&query, &set).unwrap().predicted {
                Prediction::Rejected => {
                    assert!(!seen_label, "a larger threshold reverted to REJECTED");
                }
                Prediction::Gesture(label) => {
                    assert_eq!(label, top_label);
                    seen_label = true;
                }
            }
        }
        assert!(seen_label, "largest threshold should accept the top label");
    }

    #[test]
    fn union_rule_keeps_template_hand_dimensions() {
        // Left-wrist-only query against a both-wrists template: the
        // selected dimensions must include the template's right-wrist
        // rows (keypoint 4 -> dims 8 and 9).
        let left_only = prep(&motion_sequence_with("q", "left", &[(14, 2.0), (15, 1.6)], 24));
        let both = prep(&motion_sequence_with(
            "t",
            "both",
            &[(14, 2.0), (15, 1.6), (8, 2.0), (9, 1.6)],
            24,
        ));
        let dims = select_dimensions(&left_only, &both, 0.1);
        assert!(dims.contains(&8), "missing right-wrist x");
        assert!(dims.contains(&9), "missing right-wrist y");
        assert!(dims.contains(&14));
    }

    #[test]
    fn template_set_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.json");
        let params = PipelineParams {
            t_var: 0.07,
            ..Default::default()
        };
        let mut sequences = BTreeMap::new();
        sequences.insert("a1".to_string(), motion_sequence("a1_t", "a1", 8, 2.0));
        sequences.insert("a2".to_string(), motion_sequence("a2_t", "a2", 14, 2.0));
        write_template_set(&path, &sequences, &params).unwrap();

        let set = read_template_set(&path).unwrap();
        assert_eq!(set.params, params);
        assert_eq!(set.templates.len(), 2);
        let query = set.templates["a2"].prepared.clone();
        let outcome = classify(&query, &set).unwrap();
        assert_eq!(outcome.predicted, Prediction::Gesture("a2".into()));
        assert_eq!(outcome.ranking[0].distance, 0.0);
    }

    #[test]
    fn bad_format_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.json");
        std::fs::write(
            &path,
            r#"{"format_version": 99, "params": {}, "templates": {}}"#,
        )
        .unwrap();
        assert!(matches!(
            read_template_set(&path),
            Err(ClassifyError::Format(_))
        ));
    }
}
