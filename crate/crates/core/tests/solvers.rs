use pgvarmion::forcing::fourier_forcing_2d;
use pgvarmion::problem::{Problem, ProblemTag};
use pgvarmion::quadrature::gauss_legendre;
use pgvarmion::reference::DEFAULT_RESOLUTION_2D;
use pgvarmion::ScalarField;

/// Relative L2 distance between the default 2D resolution and 64 modes.
#[test]
fn vortex_reference_self_convergence() {
    let coarse = Problem::with_resolution(ProblemTag::Advdiff2d, DEFAULT_RESOLUTION_2D).unwrap();
    let fine = Problem::with_resolution(ProblemTag::Advdiff2d, 64).unwrap();
    let rule = gauss_legendre(120, 0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..4 {
        let f = fourier_forcing_2d(seed).unwrap();
        let a = coarse.reference(&f).unwrap().grid_values(rule.nodes(), rule.nodes());
        let b = fine.reference(&f).unwrap().grid_values(rule.nodes(), rule.nodes());
        let (mut d2, mut n2) = (0.0, 0.0);
        for (i, wx) in rule.weights().iter().enumerate() {
            for (j, wy) in rule.weights().iter().enumerate() {
                d2 += wx * wy * (a[(i, j)] - b[(i, j)]).powi(2);
                n2 += wx * wy * b[(i, j)].powi(2);
            }
        }
        worst = worst.max((d2 / n2).sqrt());
    }
    assert!(worst < 1e-4, "relative difference {worst:e}");
}
