//! Shared helpers for integration tests.

// Each test binary compiles this module; not every binary uses every helper.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Independent DTW oracle: enumerate every monotone path explicitly and
/// return the cheapest total cost. Exponential, only for short series.
pub fn brute_force_dtw(a: &[f64], b: &[f64]) -> f64 {
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

/// Uniform random series in [-10, 10).
pub fn random_series(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-10.0..10.0)).collect()
}

/// Gaussian-smoothed random walk, the smooth-signal family.
pub fn smooth_walk(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let walk: Vec<f64> = (0..len)
        .map(|_| {
            acc += rng.random_range(-1.0..1.0);
            acc
        })
        .collect();
    posewarp::signals::gaussian_filter(&walk, 1.0)
}
