//! Signal-domain preprocessing.
//!
//! A normalized sequence becomes a 36-row signal matrix (one row per
//! keypoint coordinate). The median-filtered matrix drives variance-based
//! dimension selection; the Gaussian-filtered, zero-mean matrix is what
//! the DTW stage consumes. Signals are never scaled to unit variance —
//! amplitude differences carry class information.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keypoints::KEYPOINT_COUNT;
use crate::normalize::{NormalizedFrame, NormalizedSequence};

/// Signal dimensions: 18 keypoints × (x, y).
pub const DIMENSIONS: usize = 2 * KEYPOINT_COUNT;

/// Row index of keypoint `k`'s coordinate `axis` (0 = x, 1 = y).
pub fn dimension_index(keypoint: usize, axis: usize) -> usize {
    debug_assert!(keypoint < KEYPOINT_COUNT && axis < 2);
    2 * keypoint + axis
}

/// D×T matrix of per-coordinate signals, D = [`DIMENSIONS`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    rows: Vec<Vec<f64>>,
}

impl SignalMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert_eq!(rows.len(), DIMENSIONS, "signal matrix must have 36 rows");
        let t = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == t), "ragged signal matrix");
        Self { rows }
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.rows[d]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Number of frames T.
    pub fn frames(&self) -> usize {
        self.rows[0].len()
    }
}

/// Per-dimension population variance of the median-filtered signals.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    values: [f64; DIMENSIONS],
}

impl VarianceProfile {
    pub fn get(&self, d: usize) -> f64 {
        self.values[d]
    }

    pub fn values(&self) -> &[f64; DIMENSIONS] {
        &self.values
    }
}

/// A sequence ready for DTW: Gaussian-smoothed zero-mean signals plus the
/// variance profile that drives dimension selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    pub smoothed: SignalMatrix,
    pub profile: VarianceProfile,
    pub source_id: String,
    pub label: Option<String>,
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid sequence file: {0}")]
    Format(String),
}

/// Transpose a normalized sequence into row-major per-coordinate signals:
/// row 2k is keypoint k's x trajectory, row 2k+1 its y trajectory.
pub fn to_signal_matrix(seq: &NormalizedSequence) -> SignalMatrix {
    let t_len = seq.frames.len();
    let mut rows = vec![vec![0.0; t_len]; DIMENSIONS];
    for (t, frame) in seq.frames.iter().enumerate() {
        for (k, coord) in frame.coords.iter().enumerate() {
            rows[2 * k][t] = coord[0];
            rows[2 * k + 1][t] = coord[1];
        }
    }
    SignalMatrix::from_rows(rows)
}

/// Median filter with a shrinking window at the boundaries: each output
/// sample is the median over `[t - radius, t + radius]` clipped to the
/// signal. Even-sized windows take the midpoint average.
pub fn median_filter(signal: &[f64], radius: usize) -> Vec<f64> {
    assert!(radius >= 1, "median radius must be positive");
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    let mut window = Vec::with_capacity(2 * radius + 1);
    for t in 0..n {
        let lo = t.saturating_sub(radius);
        let hi = (t + radius).min(n.saturating_sub(1));
        window.clear();
        window.extend_from_slice(&signal[lo..=hi]);
        window.sort_by(|a, b| a.total_cmp(b));
        let mid = window.len() / 2;
        let median = if window.len() % 2 == 1 {
            window[mid]
        } else {
            (window[mid - 1] + window[mid]) / 2.0
        };
        out.push(median);
    }
    out
}

/// Gaussian smoothing with a sampled kernel truncated at ⌈3σ⌉ and
/// renormalized to sum 1. Boundaries are handled by symmetric reflection
/// (index −1 maps to 0, index T maps to T−1), which preserves both the DC
/// level and the total mass of the signal.
pub fn gaussian_filter(signal: &[f64], sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut acc = 0.0;
        for (j, &w) in kernel.iter().enumerate() {
            let idx = t as isize + j as isize - radius;
            acc += w * signal[reflect_index(idx, n)];
        }
        out.push(acc);
    }
    out
}

/// Fold an out-of-range index back into `[0, n)` by symmetric reflection.
fn reflect_index(mut idx: isize, n: usize) -> usize {
    let n = n as isize;
    // Repeated folding handles kernels wider than the signal.
    loop {
        if idx < 0 {
            idx = -idx - 1;
        } else if idx >= n {
            idx = 2 * n - 1 - idx;
        } else {
            return idx as usize;
        }
    }
}

fn population_variance(signal: &[f64]) -> f64 {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    signal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Variance profile on the median-filtered matrix. This is the selection
/// signal only; the smoothed data DTW sees comes from [`prepare`].
pub fn compute_variance_profile(matrix: &SignalMatrix, median_radius: usize) -> VarianceProfile {
    let mut values = [0.0; DIMENSIONS];
    for (d, row) in matrix.rows().iter().enumerate() {
        let filtered = median_filter(row, median_radius);
        values[d] = population_variance(&filtered);
    }
    VarianceProfile { values }
}

/// Prepare a normalized sequence for DTW.
///
/// The variance profile comes from the median-filtered raw signals; the
/// smoothed matrix is the raw signals Gaussian-filtered and centered to
/// zero mean per dimension. The two filters are alternatives on the same
/// source, not a cascade.
pub fn prepare(seq: &NormalizedSequence, median_radius: usize, sigma: f64) -> PreparedSequence {
    assert!(seq.len() >= 2, "prepared sequences need at least 2 frames");
    let raw = to_signal_matrix(seq);
    let profile = compute_variance_profile(&raw, median_radius);

    let rows = raw
        .rows()
        .iter()
        .map(|row| {
            let mut smoothed = gaussian_filter(row, sigma);
            let mean = smoothed.iter().sum::<f64>() / smoothed.len() as f64;
            for x in &mut smoothed {
                *x -= mean;
            }
            smoothed
        })
        .collect();

    PreparedSequence {
        smoothed: SignalMatrix::from_rows(rows),
        profile,
        source_id: seq.source_id.clone(),
        label: seq.label.clone(),
    }
}

/// Dimensions salient in either sequence: the union of the indices whose
/// variance strictly exceeds `t_var` on each side.
pub fn select_dimensions(
    query: &PreparedSequence,
    template: &PreparedSequence,
    t_var: f64,
) -> BTreeSet<usize> {
    (0..DIMENSIONS)
        .filter(|&d| query.profile.get(d) > t_var || template.profile.get(d) > t_var)
        .collect()
}

/// On-disk sequence file: a normalized sequence with optional metadata.
/// Each frame is a flat `[x0, y0, ..., x17, y17]` row.
#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceFile {
    pub source_id: String,
    pub label: Option<String>,
    pub fps: Option<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl SequenceFile {
    pub fn from_sequence(seq: &NormalizedSequence, fps: Option<f64>) -> Self {
        let frames = seq
            .frames
            .iter()
            .map(|f| f.coords.iter().flatten().copied().collect())
            .collect();
        Self {
            source_id: seq.source_id.clone(),
            label: seq.label.clone(),
            fps,
            frames,
        }
    }

    pub fn into_sequence(self) -> Result<NormalizedSequence, SignalError> {
        if self.frames.len() < 2 {
            return Err(SignalError::Format(format!(
                "sequence `{}` has {} frame(s), need at least 2",
                self.source_id,
                self.frames.len()
            )));
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for (t, row) in self.frames.iter().enumerate() {
            if row.len() != DIMENSIONS {
                return Err(SignalError::Format(format!(
                    "sequence `{}` frame {t} has {} values, expected {DIMENSIONS}",
                    self.source_id,
                    row.len()
                )));
            }
            let mut coords = [[0.0; 2]; KEYPOINT_COUNT];
            for (k, pair) in row.chunks_exact(2).enumerate() {
                coords[k] = [pair[0], pair[1]];
            }
            frames.push(NormalizedFrame { coords });
        }
        Ok(NormalizedSequence {
            frames,
            source_id: self.source_id,
            label: self.label,
        })
    }
}

pub fn write_sequence_file(
    path: &Path,
    seq: &NormalizedSequence,
    fps: Option<f64>,
) -> Result<(), SignalError> {
    let file = SequenceFile::from_sequence(seq, fps);
    let json = serde_json::to_string(&file).map_err(|e| SignalError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_sequence_file(path: &Path) -> Result<NormalizedSequence, SignalError> {
    let bytes = std::fs::read(path)?;
    let file: SequenceFile =
        serde_json::from_slice(&bytes).map_err(|e| SignalError::Format(e.to_string()))?;
    file.into_sequence()
}
