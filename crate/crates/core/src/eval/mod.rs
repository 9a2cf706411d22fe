//! Evaluation protocol and reporting.
//!
//! The protocol mirrors the classifier's intended use: one subject's
//! trials supply the templates (one medoid per gesture), every sequence
//! from the remaining subjects is classified, and the results land in a
//! confusion matrix. A threshold sweep repeats the whole protocol per
//! `t_var` value. A seeded synthetic corpus generator (see [`synth`])
//! provides dataset-free inputs with known structure.

mod synth;

pub use synth::{generate_synthetic_corpus, generate_synthetic_raw, RawCorpusEntry, SyntheticSpec};

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    classify, select_template, ClassifyError, PipelineParams, Prediction, TemplateSet,
};
use crate::normalize::NormalizedSequence;
use crate::signals::{prepare, read_sequence_file, PreparedSequence, SignalError};

/// Column label used for rejected or failed classifications.
pub const REJECTED_LABEL: &str = "REJECTED";

/// One corpus entry: a labeled normalized sequence with protocol metadata.
#[derive(Debug, Clone)]
pub struct CorpusSequence {
    pub sequence: NormalizedSequence,
    pub subject: String,
    pub trial: u32,
}

impl CorpusSequence {
    pub fn label(&self) -> &str {
        self.sequence.label.as_deref().unwrap_or_default()
    }
}

/// A labeled corpus with its ordered list of distinct gesture ids.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub sequences: Vec<CorpusSequence>,
    pub gesture_ids: Vec<String>,
}

impl LabeledCorpus {
    /// Validate labels and (label, subject, trial) uniqueness; gesture ids
    /// are ordered lexicographically.
    pub fn new(sequences: Vec<CorpusSequence>) -> Result<Self, EvalError> {
        let mut labels = BTreeSet::new();
        let mut triples = BTreeSet::new();
        for entry in &sequences {
            let label = entry
                .sequence
                .label
                .clone()
                .ok_or_else(|| EvalError::UnlabeledSequence {
                    source_id: entry.sequence.source_id.clone(),
                })?;
            if !triples.insert((label.clone(), entry.subject.clone(), entry.trial)) {
                return Err(EvalError::DuplicateTriple {
                    label,
                    subject: entry.subject.clone(),
                    trial: entry.trial,
                });
            }
            labels.insert(label);
        }
        Ok(Self {
            sequences,
            gesture_ids: labels.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Rows are actual classes, columns are predicted classes. An extra
/// trailing column collects rejected and failed sequences when present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    has_rejected_column: bool,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, has_rejected_column: bool) -> Self {
        let cols = labels.len() + usize::from(has_rejected_column);
        let counts = vec![vec![0; cols]; labels.len()];
        Self {
            labels,
            has_rejected_column,
            counts,
        }
    }

    /// Record one outcome; `predicted = None` means rejected or failed.
    pub fn record(&mut self, actual: &str, predicted: Option<&str>) {
        let row = self
            .labels
            .iter()
            .position(|l| l == actual)
            .expect("actual label not in matrix");
        let col = match predicted {
            Some(label) => self
                .labels
                .iter()
                .position(|l| l == label)
                .expect("predicted label not in matrix"),
            None => {
                assert!(self.has_rejected_column, "no rejected column allocated");
                self.labels.len()
            }
        };
        self.counts[row][col] += 1;
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn has_rejected_column(&self) -> bool {
        self.has_rejected_column
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified count (the diagonal).
    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// CSV rendering: header of predicted labels, one row per actual
    /// label, LF line endings. The first header cell names the
    /// orientation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        if self.has_rejected_column {
            out.push(',');
            out.push_str(REJECTED_LABEL);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(label);
            for count in row {
                out.push(',');
                out.push_str(&count.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Everything `run_protocol` measures for one parameter setting.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    /// Sequences for which classification failed outright (no dimension
    /// selected against any template). Counted as incorrect.
    pub n_failed: usize,
}

/// One row of a `t_var` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t_var: f64,
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// CSV rendering: `t_var,accuracy,n_correct,n_total,n_failed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_var,accuracy,n_correct,n_total,n_failed\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.t_var, row.accuracy, row.n_correct, row.n_total, row.n_failed
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("subject `{subject}` has no trials for gesture `{gesture}`")]
    MissingGesture { subject: String, gesture: String },
    #[error("sequence `{source_id}` has no label")]
    UnlabeledSequence { source_id: String },
    #[error("duplicate (label, subject, trial) = ({label}, {subject}, {trial})")]
    DuplicateTriple {
        label: String,
        subject: String,
        trial: u32,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Sequence(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Run the full protocol: build one template per gesture from
/// `template_subject`'s trials, drop all of that subject's sequences from
/// evaluation, classify everything else, and tally the confusion matrix.
pub fn run_protocol(
    corpus: &LabeledCorpus,
    template_subject: &str,
    params: &PipelineParams,
) -> Result<ProtocolOutcome, EvalError> {
    let prepared: Vec<(usize, PreparedSequence)> = corpus
        .sequences
        .par_iter()
        .enumerate()
        .map(|(i, entry)| (i, prepare(&entry.sequence, params.median_radius, params.sigma)))
        .collect();

    let mut templates = Vec::with_capacity(corpus.gesture_ids.len());
    for gesture in &corpus.gesture_ids {
        let candidates: Vec<PreparedSequence> = prepared
            .iter()
            .filter(|(i, _)| {
                let entry = &corpus.sequences[*i];
                entry.subject == template_subject && entry.label() == gesture
            })
            .map(|(_, p)| p.clone())
            .collect();
        if candidates.is_empty() {
            return Err(EvalError::MissingGesture {
                subject: template_subject.to_string(),
                gesture: gesture.clone(),
            });
        }
        templates.push(select_template(&candidates, params.t_var, params.dtw_radius)?);
    }
    let set = TemplateSet::new(templates, params.clone())?;

    let evaluation: Vec<&(usize, PreparedSequence)> = prepared
        .iter()
        .filter(|(i, _)| corpus.sequences[*i].subject != template_subject)
        .collect();

    let outcomes: Vec<(String, Option<Prediction>)> = evaluation
        .par_iter()
        .map(|(i, query)| {
            let actual = corpus.sequences[*i].label().to_string();
            match classify(query, &set) {
                Ok(outcome) => Ok((actual, Some(outcome.predicted))),
                Err(ClassifyError::ClassificationFailed) => Ok((actual, None)),
                Err(other) => Err(EvalError::Classify(other)),
            }
        })
        .collect::<Result<_, _>>()?;

    let needs_rejected_column = params.reject_threshold.is_some()
        || outcomes
            .iter()
            .any(|(_, p)| !matches!(p, Some(Prediction::Gesture(_))));
    let mut matrix = ConfusionMatrix::new(corpus.gesture_ids.clone(), needs_rejected_column);
    let mut n_failed = 0usize;
    for (actual, prediction) in &outcomes {
        match prediction {
            Some(Prediction::Gesture(label)) => matrix.record(actual, Some(label)),
            Some(Prediction::Rejected) => matrix.record(actual, None),
            None => {
                n_failed += 1;
                matrix.record(actual, None);
            }
        }
    }

    let n_total = outcomes.len();
    let n_correct = matrix.trace() as usize;
    let accuracy = matrix.accuracy();
    Ok(ProtocolOutcome {
        matrix,
        accuracy,
        n_correct,
        n_total,
        n_failed,
    })
}

/// Repeat the protocol for every threshold. Template selection is redone
/// per threshold because the selected dimensions depend on `t_var`.
pub fn sweep_t_var(
    corpus: &LabeledCorpus,
    template_subject: &str,
    params: &PipelineParams,
    thresholds: &[f64],
) -> Result<SweepReport, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::InvalidSpec("empty threshold list".into()));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t_var in thresholds {
        let run_params = PipelineParams {
            t_var,
            ..params.clone()
        };
        let outcome = run_protocol(corpus, template_subject, &run_params)?;
        rows.push(SweepRow {
            t_var,
            accuracy: outcome.accuracy,
            n_correct: outcome.n_correct,
            n_total: outcome.n_total,
            n_failed: outcome.n_failed,
        });
    }
    Ok(SweepReport { rows })
}

/// Write a confusion matrix as CSV (UTF-8, LF line endings).
pub fn write_confusion_csv(matrix: &ConfusionMatrix, destination: &Path) -> Result<(), EvalError> {
    std::fs::write(destination, matrix.to_csv())?;
    Ok(())
}

/// Write a sweep report as CSV.
pub fn write_sweep_csv(report: &SweepReport, destination: &Path) -> Result<(), EvalError> {
    std::fs::write(destination, report.to_csv())?;
    Ok(())
}

/// One manifest entry: a sequence file path plus protocol metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub subject: String,
    pub trial: u32,
}

/// Load a corpus manifest (a JSON list of [`ManifestEntry`]); relative
/// sequence paths resolve against the manifest's directory. The manifest
/// label wins over any label stored in the sequence file.
pub fn load_corpus_manifest(path: &Path) -> Result<LabeledCorpus, EvalError> {
    let bytes = std::fs::read(path)?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_slice(&bytes).map_err(|e| EvalError::Manifest(e.to_string()))?;
    if entries.is_empty() {
        return Err(EvalError::Manifest("manifest lists no sequences".into()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut sequences = Vec::with_capacity(entries.len());
    for entry in entries {
        let seq_path = base.join(&entry.path);
        let mut sequence = read_sequence_file(&seq_path)?;
        sequence.label = Some(entry.label);
        sequences.push(CorpusSequence {
            sequence,
            subject: entry.subject,
            trial: entry.trial,
        });
    }
    LabeledCorpus::new(sequences)
}

/// Write a manifest next to its sequence files.
pub fn write_corpus_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), EvalError> {
    let json =
        serde_json::to_string_pretty(entries).map_err(|e| EvalError::Manifest(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}
