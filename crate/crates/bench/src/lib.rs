//! Shared fixtures for the benchmarks in `benches/`.

use pgvarmion::problem::{Problem, ProblemTag, Split};
use pgvarmion::training::{build_dataset, LabeledDataset};

/// A problem with `n` training samples.
pub fn fixture(tag: ProblemTag, n: usize) -> (Problem, LabeledDataset) {
    let p = Problem::new(tag).expect("built-in problem");
    let d = build_dataset(&p, Split::Train, n, 1).expect("dataset");
    (p, d)
}

/// `n` points spread over the unit interval or square.
pub fn points(dim: usize, n: usize) -> Vec<f64> {
    (0..n * dim).map(|k| ((k as f64 + 0.5) * 0.618_033_988_749_895).fract()).collect()
}
