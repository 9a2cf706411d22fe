//! Warping distances between 1-D signals.
//!
//! Two routes compute the same quantity: [`dtw_exact`] runs the full
//! O(|a|·|b|) dynamic program and is the reference path, while
//! [`fast_dtw`] is the multi-resolution approximation of Salvador and
//! Chan — coarsen both series by pairwise averaging, solve recursively,
//! project the coarse path onto the fine grid, widen it by a radius, and
//! solve the windowed dynamic program inside. The windowed optimum can
//! never beat the exact one, and equals it whenever the window covers the
//! whole matrix.
//!
//! The local cost is `|a_i - b_j|` (Euclidean distance in one dimension)
//! with the unweighted step pattern {right, down, diagonal}. Distances are
//! raw path-cost sums, not normalized by path length.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::signals::PreparedSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DtwError {
    #[error("empty series")]
    EmptySeries,
    #[error("no dimensions selected")]
    NoDimensionsSelected,
}

/// A monotone alignment between two series: starts at (0, 0), ends at
/// (|a|−1, |b|−1), each step advancing i, j, or both by exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pub steps: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Check the structural path invariants against series lengths.
    pub fn is_valid(&self, a_len: usize, b_len: usize) -> bool {
        if self.steps.first() != Some(&(0, 0)) {
            return false;
        }
        if self.steps.last() != Some(&(a_len - 1, b_len - 1)) {
            return false;
        }
        self.steps.windows(2).all(|w| {
            let (i0, j0) = w[0];
            let (i1, j1) = w[1];
            let di = i1.wrapping_sub(i0);
            let dj = j1.wrapping_sub(j0);
            (di == 1 && dj == 1) || (di == 1 && dj == 0) || (di == 0 && dj == 1)
        })
    }

    /// Total local cost accumulated along the path, in path order.
    pub fn cost(&self, a: &[f64], b: &[f64]) -> f64 {
        self.steps.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum()
    }
}

/// Per-row inclusive column bounds constraining the dynamic program.
///
/// Row `i` (an index into series `a`) may visit columns `lo_i..=hi_i` of
/// series `b`. Constructors guarantee that (0, 0) and the terminal cell
/// are inside and that a monotone path through the window exists.
#[derive(Debug, Clone)]
pub struct Window {
    ranges: Vec<(usize, usize)>,
    b_len: usize,
}

impl Window {
    /// The unconstrained window covering the whole cost matrix.
    pub fn full(a_len: usize, b_len: usize) -> Self {
        Self::new(vec![(0, b_len - 1); a_len], b_len)
    }

    /// Project a coarse-resolution path onto the fine grid (each coarse
    /// cell becomes its 2×2 block) and widen the result by `radius` cells
    /// in every direction.
    pub fn from_coarse_path(
        coarse: &[(usize, usize)],
        a_len: usize,
        b_len: usize,
        radius: usize,
    ) -> Self {
        let mut lo = vec![usize::MAX; a_len];
        let mut hi = vec![0usize; a_len];
        for &(ci, cj) in coarse {
            let rows = 2 * ci..=(2 * ci + 1).min(a_len - 1);
            let c0 = 2 * cj;
            let c1 = (2 * cj + 1).min(b_len - 1);
            for r in rows {
                lo[r] = lo[r].min(c0);
                hi[r] = hi[r].max(c1);
            }
        }

        let mut ranges = Vec::with_capacity(a_len);
        for i in 0..a_len {
            let lo_row = i.saturating_sub(radius);
            let hi_row = (i + radius).min(a_len - 1);
            let mut min_lo = usize::MAX;
            let mut max_hi = 0usize;
            for r in lo_row..=hi_row {
                min_lo = min_lo.min(lo[r]);
                max_hi = max_hi.max(hi[r]);
            }
            ranges.push((
                min_lo.saturating_sub(radius),
                max_hi.saturating_add(radius).min(b_len - 1),
            ));
        }
        Self::new(ranges, b_len)
    }

    fn new(ranges: Vec<(usize, usize)>, b_len: usize) -> Self {
        assert!(!ranges.is_empty() && b_len > 0);
        assert_eq!(ranges[0].0, 0, "window must contain (0, 0)");
        assert_eq!(
            ranges[ranges.len() - 1].1,
            b_len - 1,
            "window must contain the terminal cell"
        );
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            assert!(lo <= hi && hi < b_len, "row {i} range inverted");
            if i > 0 {
                let (plo, phi) = ranges[i - 1];
                // Monotone, connected staircase: some step from row i-1
                // can reach row i.
                assert!(lo >= plo && hi >= phi && lo <= phi + 1, "row {i} disconnected");
            }
        }
        Self { ranges, b_len }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.ranges[i];
        (lo..=hi).contains(&j)
    }

    pub fn row_range(&self, i: usize) -> (usize, usize) {
        self.ranges[i]
    }

    /// Number of cells inside the window.
    pub fn cell_count(&self) -> usize {
        self.ranges.iter().map(|(lo, hi)| hi - lo + 1).sum()
    }
}

/// Exact DTW distance and one optimal warping path.
pub fn dtw_exact(a: &[f64], b: &[f64]) -> Result<(f64, WarpingPath), DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    Ok(exact_inner(a, b))
}

fn exact_inner(a: &[f64], b: &[f64]) -> (f64, WarpingPath) {
    let n = a.len();
    let m = b.len();
    let mut cum = vec![f64::INFINITY; n * m];
    let idx = |i: usize, j: usize| i * m + j;

    cum[idx(0, 0)] = (a[0] - b[0]).abs();
    for j in 1..m {
        cum[idx(0, j)] = cum[idx(0, j - 1)] + (a[0] - b[j]).abs();
    }
    for i in 1..n {
        cum[idx(i, 0)] = cum[idx(i - 1, 0)] + (a[i] - b[0]).abs();
        for j in 1..m {
            let best = cum[idx(i - 1, j - 1)]
                .min(cum[idx(i - 1, j)])
                .min(cum[idx(i, j - 1)]);
            cum[idx(i, j)] = best + (a[i] - b[j]).abs();
        }
    }

    let path = backtrack(n, m, |i, j| cum[idx(i, j)]);
    (cum[idx(n - 1, m - 1)], path)
}

/// Dynamic program restricted to a window; cells outside are treated as
/// infinite cost.
#[allow(clippy::needless_range_loop)]
fn windowed_dtw(a: &[f64], b: &[f64], window: &Window) -> (f64, WarpingPath) {
    let n = a.len();
    let m = b.len();
    debug_assert_eq!(window.b_len, m);

    // Flat storage: one contiguous segment per row.
    let mut offsets = Vec::with_capacity(n);
    let mut size = 0usize;
    for i in 0..n {
        offsets.push(size);
        let (lo, hi) = window.row_range(i);
        size += hi - lo + 1;
    }
    let mut cum = vec![f64::INFINITY; size];
    let cell = |i: usize, j: usize| -> Option<usize> {
        let (lo, hi) = window.row_range(i);
        ((lo..=hi).contains(&j)).then(|| offsets[i] + j - lo)
    };

    for i in 0..n {
        let (lo, hi) = window.row_range(i);
        for j in lo..=hi {
            let local = (a[i] - b[j]).abs();
            let here = cell(i, j).expect("cell inside its own row");
            if i == 0 && j == 0 {
                cum[here] = local;
                continue;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                if let Some(p) = cell(i - 1, j - 1) {
                    best = best.min(cum[p]);
                }
            }
            if i > 0 {
                if let Some(p) = cell(i - 1, j) {
                    best = best.min(cum[p]);
                }
            }
            if j > 0 {
                if let Some(p) = cell(i, j - 1) {
                    best = best.min(cum[p]);
                }
            }
            cum[here] = local + best;
        }
    }

    let lookup = |i: usize, j: usize| cell(i, j).map_or(f64::INFINITY, |c| cum[c]);
    let path = backtrack(n, m, lookup);
    (lookup(n - 1, m - 1), path)
}

/// Walk the cumulative-cost field back from the terminal cell, preferring
/// the diagonal on ties.
fn backtrack(n: usize, m: usize, cum: impl Fn(usize, usize) -> f64) -> WarpingPath {
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n - 1, m - 1);
    steps.push((i, j));
    while i > 0 || j > 0 {
        let mut candidates: [(f64, usize, usize); 3] =
            [(f64::INFINITY, 0, 0), (f64::INFINITY, 0, 0), (f64::INFINITY, 0, 0)];
        if i > 0 && j > 0 {
            candidates[0] = (cum(i - 1, j - 1), i - 1, j - 1);
        }
        if i > 0 {
            candidates[1] = (cum(i - 1, j), i - 1, j);
        }
        if j > 0 {
            candidates[2] = (cum(i, j - 1), i, j - 1);
        }
        let mut best = candidates[0];
        for c in &candidates[1..] {
            if c.0 < best.0 {
                best = *c;
            }
        }
        debug_assert!(best.0.is_finite(), "backtrack left the window");
        i = best.1;
        j = best.2;
        steps.push((i, j));
    }
    steps.reverse();
    WarpingPath { steps }
}

/// Halve a series by averaging adjacent pairs; an odd tail element is
/// kept as-is.
fn coarsen(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len().div_ceil(2));
    let mut chunks = series.chunks_exact(2);
    for pair in &mut chunks {
        out.push((pair[0] + pair[1]) / 2.0);
    }
    if let [tail] = chunks.remainder() {
        out.push(*tail);
    }
    out
}

/// FastDTW: multi-resolution approximate DTW.
///
/// `radius` controls how far the refinement window extends around the
/// projected coarse path. The returned distance is never below the exact
/// DTW distance, and matches it exactly once the window covers the full
/// matrix (in particular for `radius + 2 >= min(|a|, |b|)`).
pub fn fast_dtw(a: &[f64], b: &[f64], radius: usize) -> Result<(f64, WarpingPath), DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    Ok(fast_dtw_inner(a, b, radius))
}

fn fast_dtw_inner(a: &[f64], b: &[f64], radius: usize) -> (f64, WarpingPath) {
    if a.len().min(b.len()) <= radius.saturating_add(2) {
        return exact_inner(a, b);
    }
    let coarse_a = coarsen(a);
    let coarse_b = coarsen(b);
    let (_, coarse_path) = fast_dtw_inner(&coarse_a, &coarse_b, radius);
    let window = Window::from_coarse_path(&coarse_path.steps, a.len(), b.len(), radius);
    windowed_dtw(a, b, &window)
}

/// Warping distances between two prepared sequences over a set of signal
/// dimensions, each dimension warped independently.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingResult {
    pub per_dimension: BTreeMap<usize, f64>,
    /// Sum of the per-dimension distances, accumulated in ascending
    /// dimension order.
    pub aggregate: f64,
    pub dimensions_used: BTreeSet<usize>,
}

/// Run DTW on each selected dimension separately and sum the distances.
/// There is no shared path constraint across dimensions.
pub fn multi_dim_distance(
    query: &PreparedSequence,
    template: &PreparedSequence,
    dims: &BTreeSet<usize>,
    radius: usize,
) -> Result<WarpingResult, DtwError> {
    if dims.is_empty() {
        return Err(DtwError::NoDimensionsSelected);
    }
    let mut per_dimension = BTreeMap::new();
    let mut aggregate = 0.0;
    for &d in dims {
        let (distance, _) = fast_dtw(query.smoothed.row(d), template.smoothed.row(d), radius)?;
        per_dimension.insert(d, distance);
        aggregate += distance;
    }
    Ok(WarpingResult {
        per_dimension,
        aggregate,
        dimensions_used: dims.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: explicitly enumerate every monotone path and
    /// take the cheapest.
    fn brute_force_dtw(a: &[f64], b: &[f64]) -> f64 {
        fn explore(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (a[i] - b[j]).abs();
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                explore(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                explore(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                explore(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        explore(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn identical_series_have_zero_distance_and_diagonal_path() {
        let a = [0.3, 1.2, -0.7, 2.0, 0.0];
        let (d, path) = dtw_exact(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        let diagonal: Vec<_> = (0..a.len()).map(|i| (i, i)).collect();
        assert_eq!(path.steps, diagonal);
    }

    #[test]
    fn small_case_matches_path_enumeration() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.0, 2.0];
        let (d, path) = dtw_exact(&a, &b).unwrap();
        assert_eq!(d, brute_force_dtw(&a, &b));
        assert_eq!(d, 1.0);
        assert!(path.is_valid(a.len(), b.len()));
        assert!((path.cost(&a, &b) - d).abs() < 1e-9);
    }

    #[test]
    fn empty_series_is_an_error() {
        assert_eq!(dtw_exact(&[], &[1.0]).unwrap_err(), DtwError::EmptySeries);
        assert_eq!(fast_dtw(&[1.0], &[], 1).unwrap_err(), DtwError::EmptySeries);
    }

    #[test]
    fn fast_dtw_on_identical_series_is_zero() {
        let a: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).sin()).collect();
        let (d, path) = fast_dtw(&a, &a, 1).unwrap();
        assert_eq!(d, 0.0);
        assert!(path.is_valid(a.len(), a.len()));
    }

    #[test]
    fn time_shifted_pulse_is_cheap_under_warping() {
        // A pulse and its 3-frame shift: pointwise comparison pays the
        // full pulse mass twice, warping almost nothing.
        let pulse = |c: f64| {
            (0..32)
                .map(|t| (-(t as f64 - c).powi(2) / 4.0).exp())
                .collect::<Vec<f64>>()
        };
        let a = pulse(12.0);
        let b = pulse(15.0);
        let pointwise: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        let (exact, _) = dtw_exact(&a, &b).unwrap();
        let (fast, _) = fast_dtw(&a, &b, 2).unwrap();
        assert!(exact < 0.2 * pointwise, "exact {exact} vs pointwise {pointwise}");
        assert!(fast < 0.2 * pointwise, "fast {fast} vs pointwise {pointwise}");
    }

    fn prepared_from_rows(rows: Vec<Vec<f64>>, id: &str) -> PreparedSequence {
        use crate::signals::SignalMatrix;
        let t = rows[0].len();
        let mut all = vec![vec![0.0; t]; crate::signals::DIMENSIONS];
        for (d, row) in rows.into_iter().enumerate() {
            all[d] = row;
        }
        let matrix = SignalMatrix::from_rows(all.clone());
        let profile = crate::signals::compute_variance_profile(&matrix, 1);
        PreparedSequence {
            smoothed: matrix,
            profile,
            source_id: id.into(),
            label: None,
        }
    }

    #[test]
    fn multi_dim_identity_is_zero() {
        let q = prepared_from_rows(vec![vec![0.1, 0.5, 0.2, 0.9]], "q");
        let dims = BTreeSet::from([0, 5, 11]);
        let result = multi_dim_distance(&q, &q, &dims, 1).unwrap();
        assert_eq!(result.aggregate, 0.0);
        assert_eq!(result.dimensions_used, dims);
    }

    #[test]
    fn multi_dim_singleton_equals_single_row_distance() {
        let mut q_rows = vec![vec![0.0; 6]; 2];
        q_rows[1] = vec![0.0, 1.0, 2.0, 1.0, 0.0, 0.0];
        let mut t_rows = vec![vec![0.0; 6]; 2];
        t_rows[1] = vec![0.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let q = prepared_from_rows(q_rows, "q");
        let t = prepared_from_rows(t_rows, "t");
        let dims = BTreeSet::from([1]);
        let result = multi_dim_distance(&q, &t, &dims, 1).unwrap();
        let (single, _) = fast_dtw(q.smoothed.row(1), t.smoothed.row(1), 1).unwrap();
        assert_eq!(result.aggregate, single);
    }

    #[test]
    fn multi_dim_sums_independent_dimensions() {
        let mut q_rows = vec![vec![0.0; 5]; 4];
        q_rows[2] = vec![0.0, 1.0, 0.0, -1.0, 0.0];
        q_rows[3] = vec![2.0, 2.0, 3.0, 2.0, 2.0];
        let mut t_rows = vec![vec![0.0; 5]; 4];
        t_rows[2] = vec![1.0, 0.0, 0.0, 0.0, -1.0];
        t_rows[3] = vec![2.0, 3.0, 2.0, 2.0, 2.0];
        let q = prepared_from_rows(q_rows, "q");
        let t = prepared_from_rows(t_rows, "t");
        let dims = BTreeSet::from([2, 3]);
        let result = multi_dim_distance(&q, &t, &dims, 8).unwrap();

        // Each row verified against the independent oracle, then summed.
        let d2 = brute_force_dtw(q.smoothed.row(2), t.smoothed.row(2));
        let d3 = brute_force_dtw(q.smoothed.row(3), t.smoothed.row(3));
        assert!((result.per_dimension[&2] - d2).abs() < 1e-12);
        assert!((result.per_dimension[&3] - d3).abs() < 1e-12);
        assert!((result.aggregate - (d2 + d3)).abs() < 1e-12);
    }

    #[test]
    fn empty_dims_is_an_error() {
        let q = prepared_from_rows(vec![vec![0.0, 1.0]], "q");
        let err = multi_dim_distance(&q, &q, &BTreeSet::new(), 1).unwrap_err();
        assert_eq!(err, DtwError::NoDimensionsSelected);
    }

    fn arb_series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, 1..=max_len)
    }

    proptest! {
        #[test]
        fn exact_matches_oracle_on_small_inputs(a in arb_series(6), b in arb_series(6)) {
            let (d, path) = dtw_exact(&a, &b).unwrap();
            let oracle = brute_force_dtw(&a, &b);
            prop_assert!((d - oracle).abs() < 1e-9);
            prop_assert!(path.is_valid(a.len(), b.len()));
            prop_assert!((path.cost(&a, &b) - d).abs() < 1e-9);
        }

        #[test]
        fn exact_is_symmetric(a in arb_series(16), b in arb_series(16)) {
            let (d_ab, _) = dtw_exact(&a, &b).unwrap();
            let (d_ba, _) = dtw_exact(&b, &a).unwrap();
            prop_assert_eq!(d_ab, d_ba);
        }

        #[test]
        fn fast_never_beats_exact(a in arb_series(32), b in arb_series(32), radius in 0usize..3) {
            let (exact, _) = dtw_exact(&a, &b).unwrap();
            let (fast, path) = fast_dtw(&a, &b, radius).unwrap();
            prop_assert!(fast >= exact);
            prop_assert!(fast >= 0.0);
            prop_assert!(path.is_valid(a.len(), b.len()));
            prop_assert!((path.cost(&a, &b) - fast).abs() < 1e-9);
        }

        #[test]
        fn full_radius_recovers_exact(a in arb_series(16), b in arb_series(16)) {
            let radius = a.len().max(b.len());
            let (exact, _) = dtw_exact(&a, &b).unwrap();
            let (fast, _) = fast_dtw(&a, &b, radius).unwrap();
            prop_assert_eq!(exact, fast);
        }

        #[test]
        fn windowed_full_window_matches_exact(a in arb_series(24), b in arb_series(24)) {
            let window = Window::full(a.len(), b.len());
            let (windowed, path) = windowed_dtw(&a, &b, &window);
            let (exact, _) = dtw_exact(&a, &b).unwrap();
            prop_assert_eq!(windowed, exact);
            prop_assert!(path.is_valid(a.len(), b.len()));
        }
    }

    #[test]
    fn growing_radius_shrinks_the_mean_approximation_error() {
        // Per instance the refinement window is rebuilt from a coarse
        // path that itself depends on the radius, so windows do not nest
        // and a larger radius can occasionally lose to a smaller one.
        // Averaged over random inputs, larger windows never hurt.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d7a0);
        let mut totals = [0.0f64; 5];
        for _ in 0..400 {
            let n = rng.random_range(8..64);
            let m = rng.random_range(8..64);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (exact, _) = dtw_exact(&a, &b).unwrap();
            for (radius, total) in totals.iter_mut().enumerate() {
                let (d, _) = fast_dtw(&a, &b, radius).unwrap();
                assert!(d >= exact);
                *total += d - exact;
            }
        }
        for pair in totals.windows(2) {
            assert!(
                pair[1] <= pair[0],
                "mean error must not grow with the radius: {totals:?}"
            );
        }
    }

    #[test]
    fn coarsen_averages_pairs_and_keeps_odd_tail() {
        assert_eq!(coarsen(&[1.0, 3.0, 5.0, 7.0]), vec![2.0, 6.0]);
        assert_eq!(coarsen(&[1.0, 3.0, 9.0]), vec![2.0, 9.0]);
        assert_eq!(coarsen(&[4.0]), vec![4.0]);
    }

    #[test]
    fn window_projection_covers_endpoints() {
        // Coarse diagonal on an 8x8 problem.
        let coarse = vec![(0, 0), (1, 1), (2, 2), (3, 3)];
        let window = Window::from_coarse_path(&coarse, 8, 8, 1);
        assert!(window.contains(0, 0));
        assert!(window.contains(7, 7));
        assert!(window.cell_count() < 64);
    }
}
