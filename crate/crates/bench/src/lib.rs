//! Deterministic inputs shared by the benchmarks.

/// A smooth, non-constant field with `n` entries.
pub fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| 10.0 + 5.0 * ((i as f64) * 0.37 + phase).sin() + ((i * 7919) % 13) as f64).collect()
}
