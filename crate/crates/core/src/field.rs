//! Scalar fields on the unit interval or unit square.

use std::sync::Arc;

use nalgebra::DMatrix;

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Values at flat points (`dim` coordinates each). Implementations with a
    /// cheaper batched path override this.
    fn values(&self, points: &[f64]) -> Vec<f64> {
        points.chunks_exact(self.dim()).map(|x| self.value(x)).collect()
    }

    /// Values on the tensor grid `xs x ys` (2D fields), entry `(i, j) = u(xs_i, ys_j)`.
    fn grid_values(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        let v = self.values(&tensor_points(xs, ys));
        DMatrix::from_row_slice(xs.len(), ys.len(), &v)
    }
}

/// A field given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        (**self).values(points)
    }

    fn grid_values(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        (**self).grid_values(xs, ys)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        (**self).values(points)
    }

    fn grid_values(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        (**self).grid_values(xs, ys)
    }
}

/// `n` equispaced points on `[0, 1]` including both ends.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Row-major flat tensor grid from 1D coordinate lists.
pub fn tensor_points(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * xs.len() * ys.len());
    for &x in xs {
        for &y in ys {
            out.push(x);
            out.push(y);
        }
    }
    out
}
