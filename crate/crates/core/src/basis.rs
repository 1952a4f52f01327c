//! Trial bases spanning the approximation space, their mass matrices and
//! best-approximation projections.
//!
//! A [`TrialBasis`] is a fixed family of raw analytic functions optionally
//! followed by a linear transform `T` (`N x N_raw`): component `i` is
//! `sum_j T_ij raw_j(x)`. Orthonormalized bases keep the raw family and store
//! the Gram-Schmidt coefficients in `T`, so they stay exactly evaluable at any
//! point.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quadrature::QuadratureRule;
use crate::reference::closed_form::ModeSolution;

/// Sine components in the boundary-layer family.
pub const BOUNDARY_LAYER_SINES: usize = 5;
/// Layer-resolving components in the boundary-layer family.
pub const BOUNDARY_LAYER_MODES: usize = 10;

/// Relative eigenvalue floor below which a mass matrix counts as singular.
const SINGULAR_RATIO: f64 = 1e-13;
/// Residual-to-original norm ratio treated as linear dependence in Gram-Schmidt.
const DEPENDENCE_RATIO: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RawBasis {
    /// `sqrt(2) sin(j pi x)`, `j = 1..=n`.
    Sine1d { n: usize },
    /// Five sines followed by ten scaled exact solutions of
    /// `-kappa u'' + c u' = sin(n pi x)` with homogeneous Dirichlet data.
    BoundaryLayer { c: f64, kappa: f64 },
    /// `2 sin(i pi x) sin(j pi y)`, `1 <= i, j <= m`, index `(i-1) m + (j-1)`.
    TensorSine2d { m: usize },
}

impl RawBasis {
    pub fn len(&self) -> usize {
        match *self {
            RawBasis::Sine1d { n } => n,
            RawBasis::BoundaryLayer { .. } => BOUNDARY_LAYER_SINES + BOUNDARY_LAYER_MODES,
            RawBasis::TensorSine2d { m } => m * m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            RawBasis::TensorSine2d { .. } => 2,
            _ => 1,
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            RawBasis::Sine1d { n } => {
                for (j, o) in out.iter_mut().enumerate().take(n) {
                    *o = SQRT_2 * ((j + 1) as f64 * PI * x[0]).sin();
                }
            }
            RawBasis::BoundaryLayer { c, kappa } => {
                for (j, o) in out.iter_mut().enumerate().take(BOUNDARY_LAYER_SINES) {
                    *o = SQRT_2 * ((j + 1) as f64 * PI * x[0]).sin();
                }
                for n in 1..=BOUNDARY_LAYER_MODES {
                    let mode = ModeSolution::new(kappa, c, n as f64 * PI, 1.0, 0.0);
                    out[BOUNDARY_LAYER_SINES + n - 1] = SQRT_2 * mode.value(x[0]);
                }
            }
            RawBasis::TensorSine2d { m } => {
                let sx: Vec<f64> = (1..=m).map(|i| (i as f64 * PI * x[0]).sin()).collect();
                let sy: Vec<f64> = (1..=m).map(|j| (j as f64 * PI * x[1]).sin()).collect();
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = 2.0 * sx[i] * sy[j];
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisTag {
    Sine1d,
    BoundaryLayer,
    TensorSine2d,
    Orthonormalized,
    Combination,
}

#[derive(Clone, Debug)]
pub struct TrialBasis {
    raw: RawBasis,
    transform: Option<DMatrix<f64>>,
    tag: BasisTag,
}

/// `{sqrt(2) sin(j pi x)}`, `j = 1..=n`, on `[0, 1]`.
pub fn sine_basis_1d(n: usize) -> Result<TrialBasis> {
    if n == 0 {
        return Err(Error::invalid("sine basis needs at least one component"));
    }
    Ok(TrialBasis {
        raw: RawBasis::Sine1d { n },
        transform: None,
        tag: BasisTag::Sine1d,
    })
}

/// Five sines augmented with ten boundary-layer functions for
/// `-kappa u'' + c u' = f` (layer at the outflow end).
///
/// Component `5 + n` is `sqrt(2) u_n` where `u_n` solves the problem with
/// forcing `sin(n pi x)`; written out, it is
/// `sqrt(2) (pi kappa n sin(pi n x) - c cos(pi n x) + h(x, n)) / (pi n ((pi n kappa)^2 + c^2))`
/// with the homogeneous correction `h` that restores `u(0) = u(1) = 0`.
pub fn boundary_layer_basis(c: f64, kappa: f64) -> Result<TrialBasis> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if c == 0.0 || !c.is_finite() {
        return Err(Error::invalid(format!("advection speed must be nonzero, got {c}")));
    }
    Ok(TrialBasis {
        raw: RawBasis::BoundaryLayer { c, kappa },
        transform: None,
        tag: BasisTag::BoundaryLayer,
    })
}

/// `{2 sin(i pi x) sin(j pi y)}`, `1 <= i, j <= m`, flattened row-major.
pub fn tensor_sine_basis_2d(m: usize) -> Result<TrialBasis> {
    if m == 0 {
        return Err(Error::invalid("tensor sine basis needs m >= 1"));
    }
    Ok(TrialBasis {
        raw: RawBasis::TensorSine2d { m },
        transform: None,
        tag: BasisTag::TensorSine2d,
    })
}

impl TrialBasis {
    /// Components `T * raw` for an arbitrary `N x N_raw` transform.
    pub fn combination(raw: RawBasis, transform: DMatrix<f64>) -> Result<Self> {
        if transform.ncols() != raw.len() || transform.nrows() == 0 {
            return Err(Error::shape(format!(
                "transform is {}x{}, raw basis has {} components",
                transform.nrows(),
                transform.ncols(),
                raw.len()
            )));
        }
        Ok(Self {
            raw,
            transform: Some(transform),
            tag: BasisTag::Combination,
        })
    }

    pub(crate) fn from_parts(
        raw: RawBasis,
        transform: Option<DMatrix<f64>>,
        tag: BasisTag,
    ) -> Result<Self> {
        match transform {
            Some(t) => {
                let mut b = Self::combination(raw, t)?;
                b.tag = tag;
                Ok(b)
            }
            None => Ok(Self { raw, transform: None, tag }),
        }
    }

    /// Number of components `N`.
    pub fn len(&self) -> usize {
        match &self.transform {
            Some(t) => t.nrows(),
            None => self.raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_dim(&self) -> usize {
        self.raw.spatial_dim()
    }

    pub fn raw(&self) -> &RawBasis {
        &self.raw
    }

    pub fn transform(&self) -> Option<&DMatrix<f64>> {
        self.transform.as_ref()
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    /// The untransformed raw family as a basis of its own.
    pub fn raw_basis(&self) -> TrialBasis {
        let tag = match self.raw {
            RawBasis::Sine1d { .. } => BasisTag::Sine1d,
            RawBasis::BoundaryLayer { .. } => BasisTag::BoundaryLayer,
            RawBasis::TensorSine2d { .. } => BasisTag::TensorSine2d,
        };
        TrialBasis {
            raw: self.raw,
            transform: None,
            tag,
        }
    }

    /// `Phi(x)` into `out` (length `N`).
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.transform {
            None => self.raw.eval_into(x, out),
            Some(t) => {
                let mut raw = vec![0.0; self.raw.len()];
                self.raw.eval_into(x, &mut raw);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..raw.len()).map(|j| t[(i, j)] * raw[j]).sum();
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Values at flat points as an `n_points x N` matrix.
    pub fn table(&self, points: &[f64]) -> DMatrix<f64> {
        let d = self.spatial_dim();
        let n_pts = points.len() / d;
        let n_raw = self.raw.len();
        let mut raw = DMatrix::zeros(n_pts, n_raw);
        let mut buf = vec![0.0; n_raw];
        for (p, x) in points.chunks_exact(d).enumerate() {
            self.raw.eval_into(x, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                raw[(p, j)] = *v;
            }
        }
        match &self.transform {
            None => raw,
            Some(t) => raw * t.transpose(),
        }
    }

    /// `sum_i coeffs_i phi_i(x)` at each point.
    pub fn synthesize(&self, coeffs: &[f64], points: &[f64]) -> Vec<f64> {
        let table = self.table(points);
        let c = DVector::from_column_slice(coeffs);
        (table * c).iter().copied().collect()
    }

    /// Component `i` as a standalone field.
    pub fn component(&self, i: usize) -> BasisComponent<'_> {
        BasisComponent { basis: self, index: i }
    }
}

pub struct BasisComponent<'a> {
    basis: &'a TrialBasis,
    index: usize,
}

impl ScalarField for BasisComponent<'_> {
    fn dim(&self) -> usize {
        self.basis.spatial_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.basis.evaluate(x)[self.index]
    }
}

/// Inner product defining the optimality norm. Only `L2` is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerProduct {
    #[default]
    L2,
}

impl InnerProduct {
    /// Discrete Gram matrix `G_ij = (a_i, b_j)` from tables sampled at the rule nodes.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, rule: &QuadratureRule) -> DMatrix<f64> {
        match self {
            InnerProduct::L2 => {
                let mut wa = a.clone();
                for (mut row, w) in wa.row_iter_mut().zip(rule.weights()) {
                    row *= *w;
                }
                wa.transpose() * b
            }
        }
    }
}

/// Gram matrix of the trial basis with its Cholesky factor and spectrum extremes.
#[derive(Clone, Debug)]
pub struct MassMatrix {
    entries: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

impl MassMatrix {
    /// Symmetrizes `m` and checks it is positive definite.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::shape("mass matrix must be square and nonempty"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_max > 0.0) || !(lambda_min > SINGULAR_RATIO * lambda_max) {
            return Err(Error::SingularMass(format!(
                "eigenvalues in [{lambda_min:e}, {lambda_max:e}]"
            )));
        }
        let chol = sym
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularMass("Cholesky factorization failed".into()))?;
        Ok(Self {
            entries: sym,
            cholesky: chol.l(),
            lambda_min,
            lambda_max,
        })
    }

    /// Factors `M = A^T A` for `A = diag(sqrt(w)) * table` through a QR of `A`.
    /// Solves then lose accuracy like cond(M)^(1/2), not cond(M) as a
    /// Cholesky of the assembled matrix would; the raw boundary-layer basis
    /// has cond(M) near 4e11.
    pub fn from_weighted_table(a: DMatrix<f64>) -> Result<Self> {
        let n = a.ncols();
        if n == 0 || a.nrows() < n {
            return Err(Error::shape(format!("weighted table is {}x{n}", a.nrows())));
        }
        let gram = a.transpose() * &a;
        let entries = (&gram + gram.transpose()) * 0.5;
        let mut r = a.qr().r();
        let sv = r.singular_values();
        let lambda_max = sv.max().powi(2);
        let lambda_min = sv.min().powi(2);
        if !(lambda_max > 0.0) || !(lambda_min > SINGULAR_RATIO * lambda_max) {
            return Err(Error::SingularMass(format!(
                "eigenvalues in [{lambda_min:e}, {lambda_max:e}]"
            )));
        }
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                r.row_mut(i).neg_mut();
            }
        }
        Ok(Self {
            entries,
            cholesky: r.transpose(),
            lambda_min,
            lambda_max,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            cholesky: DMatrix::identity(n, n),
            lambda_min: 1.0,
            lambda_max: 1.0,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    /// `M^{-1} v` through the Cholesky factor.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = &self.cholesky;
        let y = l
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        l.transpose()
            .solve_upper_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `M^{-1} B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.cholesky;
        let y = l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        l.transpose()
            .solve_upper_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `v^T M^{-1} v`.
    pub fn inverse_quadratic(&self, v: &DVector<f64>) -> f64 {
        let y = self
            .cholesky
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    pub fn max_deviation_from_identity(&self) -> f64 {
        let n = self.dim();
        (&self.entries - DMatrix::<f64>::identity(n, n)).amax()
    }
}

/// Mass matrix `M_ij = (phi_i, phi_j)` in the discrete L2 inner product of `rule`.
pub fn mass_matrix(basis: &TrialBasis, rule: &QuadratureRule) -> Result<MassMatrix> {
    check_dims(basis, rule)?;
    let mut table = basis.table(rule.nodes());
    for (mut row, w) in table.row_iter_mut().zip(rule.weights()) {
        if *w < 0.0 {
            return Err(Error::invalid("mass matrix needs nonnegative quadrature weights"));
        }
        row *= w.sqrt();
    }
    MassMatrix::from_weighted_table(table)
}

fn check_dims(basis: &TrialBasis, rule: &QuadratureRule) -> Result<()> {
    if basis.spatial_dim() != rule.dim() {
        return Err(Error::shape(format!(
            "basis is {}D but rule is {}D",
            basis.spatial_dim(),
            rule.dim()
        )));
    }
    Ok(())
}

/// Moments `(u, phi_i)` on the rule from values of `u` at the rule nodes.
pub fn moments(values: &[f64], table: &DMatrix<f64>, rule: &QuadratureRule) -> DVector<f64> {
    let weighted = DVector::from_iterator(
        values.len(),
        values.iter().zip(rule.weights()).map(|(v, w)| v * w),
    );
    table.tr_mul(&weighted)
}

/// Coefficients of the best approximation of `u` in the span of the basis,
/// in the discrete L2 norm of `rule`: `M^{-1} ((u, phi_i))_i`.
pub fn project(
    u: &dyn ScalarField,
    basis: &TrialBasis,
    mass: &MassMatrix,
    rule: &QuadratureRule,
) -> Result<DVector<f64>> {
    check_dims(basis, rule)?;
    if mass.dim() != basis.len() {
        return Err(Error::shape("mass matrix does not match basis size"));
    }
    let values = u.values(rule.nodes());
    let table = basis.table(rule.nodes());
    Ok(mass.solve(&moments(&values, &table, rule)))
}

/// Same as [`project`] from precomputed node values and basis table.
pub fn project_values(
    values: &[f64],
    table: &DMatrix<f64>,
    mass: &MassMatrix,
    rule: &QuadratureRule,
) -> DVector<f64> {
    mass.solve(&moments(values, table, rule))
}

/// Modified Gram-Schmidt with one reorthogonalization pass, in the discrete
/// L2 inner product of `rule`. The result spans the same space and is
/// orthonormal on the rule.
pub fn gram_schmidt(basis: &TrialBasis, rule: &QuadratureRule) -> Result<TrialBasis> {
    check_dims(basis, rule)?;
    let n = basis.len();
    let values = basis.table(rule.nodes());
    let w = rule.weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum() };

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut coef: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v: Vec<f64> = values.column(i).iter().copied().collect();
        let mut c = DVector::zeros(n);
        c[i] = 1.0;
        let norm0 = dot(&v, &v).sqrt();
        if !(norm0 > 0.0) {
            return Err(Error::DegenerateBasis { index: i });
        }
        for _pass in 0..2 {
            for j in 0..i {
                let r = dot(&q[j], &v);
                for (vk, qk) in v.iter_mut().zip(&q[j]) {
                    *vk -= r * qk;
                }
                c.axpy(-r, &coef[j], 1.0);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if !(norm > DEPENDENCE_RATIO * norm0) {
            return Err(Error::DegenerateBasis { index: i });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        c /= norm;
        q.push(v);
        coef.push(c);
    }

    let mut gs = DMatrix::zeros(n, n);
    for (i, c) in coef.iter().enumerate() {
        gs.set_row(i, &c.transpose());
    }
    let transform = match basis.transform() {
        Some(t) => gs * t,
        None => gs,
    };
    TrialBasis::from_parts(*basis.raw(), Some(transform), BasisTag::Orthonormalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_legendre, gauss_legendre_square};
    use approx::assert_abs_diff_eq;

    fn gl200() -> QuadratureRule {
        gauss_legendre(200, 0.0, 1.0).unwrap()
    }

    #[test]
    fn sine_values() {
        let b = sine_basis_1d(10).unwrap();
        let v = b.evaluate(&[0.5]);
        assert_abs_diff_eq!(v[0], SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-15);
        assert!(matches!(sine_basis_1d(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sine_mass_is_identity() {
        let m = mass_matrix(&sine_basis_1d(10).unwrap(), &gl200()).unwrap();
        assert!(m.max_deviation_from_identity() <= 1e-12);
        assert_abs_diff_eq!(m.lambda_min(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.lambda_max(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tensor_sine_values_and_mass() {
        let b = tensor_sine_basis_2d(10).unwrap();
        assert_eq!(b.len(), 100);
        assert_abs_diff_eq!(b.evaluate(&[0.5, 0.5])[0], 2.0, epsilon = 1e-15);
        // products reach sin(20 pi x)^2; 20 points per axis leave a 2e-3 error
        let coarse = mass_matrix(&b, &gauss_legendre_square(20, 0.0, 1.0).unwrap()).unwrap();
        assert!(coarse.max_deviation_from_identity() > 1e-4);
        let m = mass_matrix(&b, &gauss_legendre_square(40, 0.0, 1.0).unwrap()).unwrap();
        assert!(m.max_deviation_from_identity() <= 1e-12);
    }

    #[test]
    fn boundary_layer_basis_shape() {
        let b = boundary_layer_basis(0.1, 1e-4).unwrap();
        assert_eq!(b.len(), 15);
        for x in [0.0, 1.0] {
            for v in b.evaluate(&[x]) {
                assert!(v.abs() <= 1e-8, "x={x} v={v}");
            }
        }
        assert!(matches!(boundary_layer_basis(0.1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(boundary_layer_basis(0.1, -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(boundary_layer_basis(0.0, 1e-4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn boundary_layer_raw_mass_is_ill_conditioned() {
        let b = boundary_layer_basis(0.1, 1e-4).unwrap();
        let m = mass_matrix(&b, &gl200()).unwrap();
        assert!(m.condition_number() > 1e6, "cond {}", m.condition_number());
    }

    #[test]
    fn duplicate_component_is_singular() {
        let t = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = TrialBasis::combination(RawBasis::Sine1d { n: 1 }, t).unwrap();
        assert!(matches!(mass_matrix(&b, &gl200()), Err(Error::SingularMass(_))));
        assert!(matches!(gram_schmidt(&b, &gl200()), Err(Error::DegenerateBasis { index: 1 })));
    }

    #[test]
    fn rank_two_of_three_is_singular() {
        let s = 1.0 / SQRT_2;
        let t = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, s, s]);
        let b = TrialBasis::combination(RawBasis::Sine1d { n: 2 }, t).unwrap();
        assert!(matches!(mass_matrix(&b, &gl200()), Err(Error::SingularMass(_))));
        assert!(matches!(gram_schmidt(&b, &gl200()), Err(Error::DegenerateBasis { index: 2 })));
    }

    #[test]
    fn gram_schmidt_is_idempotent_on_orthonormal_input() {
        let rule = gl200();
        let b = sine_basis_1d(10).unwrap();
        let q = gram_schmidt(&b, &rule).unwrap();
        let a = b.table(rule.nodes());
        let c = q.table(rule.nodes());
        for j in 0..10 {
            let same = (0..rule.len()).all(|k| (a[(k, j)] - c[(k, j)]).abs() <= 1e-10);
            let flipped = (0..rule.len()).all(|k| (a[(k, j)] + c[(k, j)]).abs() <= 1e-10);
            assert!(same || flipped, "component {j}");
        }
    }

    #[test]
    fn gram_schmidt_by_hand() {
        // {sin(pi x), sin(pi x) + sin(2 pi x)} -> second output is sqrt(2) sin(2 pi x)
        let s = 1.0 / SQRT_2;
        let t = DMatrix::from_row_slice(2, 2, &[s, 0.0, s, s]);
        let b = TrialBasis::combination(RawBasis::Sine1d { n: 2 }, t).unwrap();
        let rule = gl200();
        let q = gram_schmidt(&b, &rule).unwrap();
        for k in (0..rule.len()).step_by(7) {
            let x = rule.node(k)[0];
            let v = q.evaluate(&[x]);
            assert_abs_diff_eq!(v[0], SQRT_2 * (PI * x).sin(), epsilon = 1e-10);
            assert_abs_diff_eq!(v[1].abs(), (SQRT_2 * (2.0 * PI * x).sin()).abs(), epsilon = 1e-10);
        }
    }

    #[test]
    fn gram_schmidt_orthonormalizes_boundary_layer_basis() {
        let rule = gl200();
        let b = boundary_layer_basis(0.1, 1e-4).unwrap();
        let q = gram_schmidt(&b, &rule).unwrap();
        assert_eq!(q.tag(), BasisTag::Orthonormalized);
        let m = mass_matrix(&q, &rule).unwrap();
        assert!(m.max_deviation_from_identity() <= 1e-10, "{}", m.max_deviation_from_identity());
    }

    #[test]
    fn projection_of_component_is_unit_vector() {
        let rule = gl200();
        let b = sine_basis_1d(10).unwrap();
        let m = mass_matrix(&b, &rule).unwrap();
        let c = project(&b.component(0), &b, &m, &rule).unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-12);
        for i in 1..10 {
            assert_abs_diff_eq!(c[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_of_diffusion_solution() {
        let rule = gl200();
        let b = sine_basis_1d(10).unwrap();
        let m = mass_matrix(&b, &rule).unwrap();
        let u = crate::field::FnField::new(1, |x: &[f64]| (PI * x[0]).sin() / (0.01 * PI * PI));
        let c = project(&u, &b, &m, &rule).unwrap();
        let expected = 1.0 / (SQRT_2 * 0.01 * PI * PI);
        assert_abs_diff_eq!(c[0], expected, epsilon = 1e-10);
        assert_abs_diff_eq!(c[0], 7.1645, epsilon = 1e-4);
        for i in 1..10 {
            assert_abs_diff_eq!(c[i], 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_error_of_parabola_matches_fourier_tail() {
        // x(1-x) = sum_{odd j} 8/(j^3 pi^3) sin(j pi x); ||x(1-x)||^2 = 1/30.
        let rule = gauss_legendre(400, 0.0, 1.0).unwrap();
        let b = sine_basis_1d(10).unwrap();
        let m = mass_matrix(&b, &rule).unwrap();
        let u = crate::field::FnField::new(1, |x: &[f64]| x[0] * (1.0 - x[0]));
        let c = project(&u, &b, &m, &rule).unwrap();
        // coefficient on sqrt(2) sin is the sine coefficient / sqrt(2)
        for j in 1..=10 {
            let exact = if j % 2 == 1 {
                8.0 / ((j as f64 * PI).powi(3)) / SQRT_2
            } else {
                0.0
            };
            assert_abs_diff_eq!(c[j - 1], exact, epsilon = 1e-12);
        }
        // brute-force tail: sum over odd j > 10 of (8/(j pi)^3)^2 / 2
        let tail: f64 = (11..200_001)
            .filter(|j| j % 2 == 1)
            .map(|j| (8.0 / (j as f64 * PI).powi(3)).powi(2) / 2.0)
            .sum();
        let values = u.values(rule.nodes());
        let approx = b.synthesize(c.as_slice(), rule.nodes());
        let err2: f64 = values
            .iter()
            .zip(&approx)
            .zip(rule.weights())
            .map(|((u, a), w)| w * (u - a).powi(2))
            .sum();
        let rel = (err2 / (1.0 / 30.0)).sqrt();
        let rel_oracle = (tail / (1.0 / 30.0)).sqrt();
        assert!((rel - rel_oracle).abs() <= 1e-6 * rel_oracle, "{rel} vs {rel_oracle}");
    }
}
