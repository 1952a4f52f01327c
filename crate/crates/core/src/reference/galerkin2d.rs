//! Spectral Galerkin solver for `-kappa Lap u + c . grad u = f` on the unit
//! square with homogeneous Dirichlet data, in a tensor space
//! `phi_i(x) phi_j(y)`, `0 <= i, j < m`.
//!
//! Two 1D families are available. Sines are orthonormal but resolve a wall
//! layer of width `delta` only with `O(1/delta)` modes. Legendre-Galerkin
//! functions `(L_k - L_{k+2}) / sqrt(4k + 6)` cluster resolution at the walls
//! like `1/m^2` and are the default.
//!
//! The vortex field is separable, so the advection matrix is a sum of two
//! Kronecker products of 1D integrals; no 2D quadrature is needed.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::quadrature::{gauss_legendre, QuadratureRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralFamily {
    /// `sqrt(2) sin((k+1) pi x)`.
    Sine,
    /// `(L_k(2x-1) - L_{k+2}(2x-1)) / sqrt(4k + 6)`.
    Legendre,
}

impl SpectralFamily {
    /// Values and derivatives of the first `m` functions at each point, `len x m`.
    pub fn tables(self, m: usize, ts: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut v = DMatrix::zeros(ts.len(), m);
        let mut d = DMatrix::zeros(ts.len(), m);
        match self {
            SpectralFamily::Sine => {
                for (p, &t) in ts.iter().enumerate() {
                    for k in 0..m {
                        let kp = (k + 1) as f64 * PI;
                        let (s, c) = (kp * t).sin_cos();
                        v[(p, k)] = SQRT_2 * s;
                        d[(p, k)] = SQRT_2 * kp * c;
                    }
                }
            }
            SpectralFamily::Legendre => {
                let mut l = vec![0.0; m + 2];
                let mut dl = vec![0.0; m + 2];
                for (p, &x) in ts.iter().enumerate() {
                    let t = 2.0 * x - 1.0;
                    l[0] = 1.0;
                    dl[0] = 0.0;
                    if m + 2 > 1 {
                        l[1] = t;
                        dl[1] = 1.0;
                    }
                    for n in 1..m + 1 {
                        let nf = n as f64;
                        l[n + 1] = ((2.0 * nf + 1.0) * t * l[n] - nf * l[n - 1]) / (nf + 1.0);
                        // P'_{n+1} = P'_{n-1} + (2n+1) P_n
                        dl[n + 1] = dl[n - 1] + (2.0 * nf + 1.0) * l[n];
                    }
                    for k in 0..m {
                        let c = 1.0 / ((4 * k + 6) as f64).sqrt();
                        v[(p, k)] = c * (l[k] - l[k + 2]);
                        d[(p, k)] = 2.0 * c * (dl[k] - dl[k + 2]);
                    }
                }
            }
        }
        (v, d)
    }

    pub fn values(self, m: usize, ts: &[f64]) -> DMatrix<f64> {
        self.tables(m, ts).0
    }
}

/// Vortex centered at `(0.75, 0.75)`:
/// `c = 5 exp((1 - X^2 - Y^2)/2) (-(y - 0.75), x - 0.75)`, `X = 5 (x - 0.75)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vortex;

impl Vortex {
    pub const CENTER: f64 = 0.75;
    pub const STRENGTH: f64 = 5.0;

    /// Gaussian factor in one coordinate, `exp(-(5 (t - 0.75))^2 / 2)`.
    pub fn profile(t: f64) -> f64 {
        let s = Self::STRENGTH * (t - Self::CENTER);
        (-0.5 * s * s).exp()
    }

    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let g = 0.5f64.exp() * Self::profile(x) * Self::profile(y);
        (
            -Self::STRENGTH * (y - Self::CENTER) * g,
            Self::STRENGTH * (x - Self::CENTER) * g,
        )
    }

    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        let a = Self::STRENGTH;
        let g = 0.5f64.exp() * Self::profile(x) * Self::profile(y);
        let (dx, dy) = (x - Self::CENTER, y - Self::CENTER);
        // d/dx c1 = -a dy g (-a^2 dx), d/dy c2 = a dx g (-a^2 dy)
        a * a * a * dy * dx * g - a * a * a * dx * dy * g
    }
}

/// Assembled and factored Galerkin system.
#[derive(Clone, Debug)]
pub struct SpectralSolver2d {
    family: SpectralFamily,
    m: usize,
    kappa: f64,
    rule: QuadratureRule,
    table: DMatrix<f64>,
    system: DMatrix<f64>,
    // factored on first use; forward and adjoint solves rarely share a solver
    lu: OnceLock<Lu>,
    lu_t: OnceLock<Lu>,
}

type Lu = nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

impl SpectralSolver2d {
    /// Legendre-Galerkin with `m` modes per axis; 1D integrals use `2 m + 32`
    /// Gauss-Legendre points.
    pub fn new(kappa: f64, m: usize) -> Result<Self> {
        Self::with_options(kappa, m, SpectralFamily::Legendre, 2 * m + 32)
    }

    pub fn with_options(kappa: f64, m: usize, family: SpectralFamily, q: usize) -> Result<Self> {
        if !(kappa >= 1e-8) {
            return Err(Error::invalid(format!("kappa must be at least 1e-8, got {kappa}")));
        }
        if m == 0 {
            return Err(Error::invalid("need at least one mode per axis"));
        }
        let rule = gauss_legendre(q, 0.0, 1.0)?;
        let ts = rule.nodes();
        let w = rule.weights();
        let (table, dtable) = family.tables(m, ts);
        let weighted = |f: &dyn Fn(f64) -> f64, left: &DMatrix<f64>, right: &DMatrix<f64>| {
            let mut l = left.clone();
            for (p, mut row) in l.row_iter_mut().enumerate() {
                row *= w[p] * f(ts[p]);
            }
            l.transpose() * right
        };
        // A[i,k] = int g phi_i' phi_k, B[i,k] = int (t - .75) g phi_i phi_k
        let a = weighted(&Vortex::profile, &dtable, &table);
        let b = weighted(&|t| (t - Vortex::CENTER) * Vortex::profile(t), &table, &table);
        let mass = weighted(&|_| 1.0, &table, &table);
        let stiff = weighted(&|_| 1.0, &dtable, &dtable);
        let amp = Vortex::STRENGTH * 0.5f64.exp();

        let n = m * m;
        let mut s = DMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                let row = i * m + j;
                for k in 0..m {
                    let (aik, bik, mik, kik) = (a[(i, k)], b[(i, k)], mass[(i, k)], stiff[(i, k)]);
                    for l in 0..m {
                        s[(row, k * m + l)] = kappa * (kik * mass[(j, l)] + mik * stiff[(j, l)])
                            + amp * (-aik * b[(j, l)] + bik * a[(j, l)]);
                    }
                }
            }
        }
        Ok(Self { family, m, kappa, rule, table, system: s, lu: OnceLock::new(), lu_t: OnceLock::new() })
    }

    pub fn family(&self) -> SpectralFamily {
        self.family
    }

    /// 1D basis values at the solver's quadrature nodes, `q x m`.
    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn weights(&self) -> &[f64] {
        self.rule.weights()
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Moments `(f, phi_kl)` as an `m x m` matrix, by tensor quadrature.
    pub fn moments(&self, f: &dyn ScalarField) -> DMatrix<f64> {
        let ts = self.rule.nodes();
        let w = self.rule.weights();
        let mut vals = f.grid_values(ts, ts);
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                vals[(i, j)] *= w[i] * w[j];
            }
        }
        self.table.transpose() * vals * &self.table
    }

    /// Moments of a separable sum `sum_t a_t X_t(x) Y_t(y)` given 1D factor tables.
    pub fn separable_moments(&self, xs: &DMatrix<f64>, ys: &DMatrix<f64>, amps: &[f64]) -> DMatrix<f64> {
        let w = self.rule.weights();
        let mut px = self.table.clone();
        for (p, mut row) in px.row_iter_mut().enumerate() {
            row *= w[p];
        }
        let mut mx = px.transpose() * xs;
        for (t, mut col) in mx.column_iter_mut().enumerate() {
            col *= amps[t];
        }
        let my = px.transpose() * ys;
        mx * my.transpose()
    }

    /// `S_ab = a(phi_a, phi_b)` with `a = (i, j)` flattened row-major.
    pub fn system(&self) -> &DMatrix<f64> {
        &self.system
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    fn solve_with(&self, lu: &Lu, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let b = DVector::from_iterator(self.m * self.m, rhs.transpose().iter().copied());
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Solver("Galerkin matrix is singular".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite Galerkin solution".into()));
        }
        Ok(DMatrix::from_row_slice(self.m, self.m, x.as_slice()))
    }

    /// Coefficients `U` (`m x m`) of the forward solution for moments `(f, phi_kl)`.
    pub fn solve_forward(&self, moments: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.solve_with(self.lu_t.get_or_init(|| self.system.transpose().lu()), moments)
    }

    /// Coefficients of `psi` with `a(w, psi) = (w, g)` for all `w`, given the
    /// moments `(phi_kl, g)`.
    pub fn solve_adjoint(&self, moments: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.solve_with(self.lu.get_or_init(|| self.system.clone().lu()), moments)
    }

    /// `a(v, w)` for coefficient matrices of two fields in the space.
    pub fn bilinear(&self, v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
        let n = self.m * self.m;
        let vv = DVector::from_iterator(n, v.transpose().iter().copied());
        let ww = DVector::from_iterator(n, w.transpose().iter().copied());
        vv.dot(&(&self.system * ww))
    }
}

/// `sum_ij U_ij phi_i(x) phi_j(y)` on the tensor grid `xs x ys`.
pub fn synthesize_grid(family: SpectralFamily, coeffs: &DMatrix<f64>, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
    let m = coeffs.nrows();
    family.values(m, xs) * coeffs * family.values(m, ys).transpose()
}

pub fn synthesize_point(family: SpectralFamily, coeffs: &DMatrix<f64>, x: f64, y: f64) -> f64 {
    synthesize_grid(family, coeffs, &[x], &[y])[(0, 0)]
}
