//! Reference solutions of the forward problem and of the adjoint problem that
//! defines the optimal weighting functions.

pub mod closed_form;
pub mod galerkin2d;
pub mod green;

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{RawBasis, TrialBasis, BOUNDARY_LAYER_SINES};
use crate::error::{Error, Result};
use crate::field::{FnField, ScalarField};
use crate::forcing::ForcingSample;

use closed_form::ModeSolution;
pub use galerkin2d::{SpectralFamily, SpectralSolver2d, Vortex};

/// Default Galerkin modes per axis for the 2D reference.
pub const DEFAULT_RESOLUTION_2D: usize = 56;
/// Layers thinner than this are flagged as unresolvable by FD checks.
const MIN_LAYER_WIDTH: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Velocity {
    Constant(f64),
    Vortex2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub kappa: f64,
    pub velocity: Velocity,
}

impl PdeConfig {
    pub fn diffusion_1d(kappa: f64) -> Self {
        Self { kappa, velocity: Velocity::Constant(0.0) }
    }

    pub fn advdiff_1d(kappa: f64, c: f64) -> Self {
        Self { kappa, velocity: Velocity::Constant(c) }
    }

    pub fn vortex_2d(kappa: f64) -> Self {
        Self { kappa, velocity: Velocity::Vortex2d }
    }

    pub fn spatial_dim(&self) -> usize {
        match self.velocity {
            Velocity::Constant(_) => 1,
            Velocity::Vortex2d => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 1e-8) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!("kappa must be at least 1e-8, got {}", self.kappa)));
        }
        if let Velocity::Constant(c) = self.velocity {
            if !c.is_finite() {
                return Err(Error::invalid("advection speed must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    /// Closed form, mode by mode.
    SpectralExact,
    /// Quadrature against the exact Green's function.
    GreenQuadrature,
    /// Spectral Galerkin in a tensor sine space.
    Galerkin,
}

#[derive(Clone)]
enum Repr {
    Zero { dim: usize },
    Modes(Vec<ModeSolution>),
    Green { kappa: f64, c: f64, forcing: Arc<dyn ScalarField>, breaks: Vec<f64> },
    Combination(Vec<(f64, Arc<ReferenceSolution>)>),
    Spectral2d(SpectralFamily, DMatrix<f64>),
}

/// An evaluable reference solution.
#[derive(Clone)]
pub struct ReferenceSolution {
    repr: Repr,
    method: SolveMethod,
    resolution: String,
    warning: Option<String>,
}

impl std::fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("method", &self.method)
            .field("resolution", &self.resolution)
            .field("warning", &self.warning)
            .finish()
    }
}

impl ReferenceSolution {
    fn new(repr: Repr, method: SolveMethod, resolution: impl Into<String>) -> Self {
        Self { repr, method, resolution: resolution.into(), warning: None }
    }

    pub fn method(&self) -> SolveMethod {
        self.method
    }

    pub fn resolution(&self) -> &str {
        &self.resolution
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Galerkin coefficients `U_ij` of a 2D solution.
    pub fn spectral_coefficients(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Spectral2d(_, c) => Some(c),
            _ => None,
        }
    }

    fn combination(terms: Vec<(f64, Arc<ReferenceSolution>)>, method: SolveMethod) -> Self {
        Self::new(Repr::Combination(terms), method, "linear combination")
    }
}

impl ScalarField for ReferenceSolution {
    fn dim(&self) -> usize {
        match &self.repr {
            Repr::Zero { dim } => *dim,
            Repr::Spectral2d(..) => 2,
            Repr::Combination(t) => t.first().map_or(1, |(_, s)| s.dim()),
            _ => 1,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Repr::Spectral2d(fam, c) => galerkin2d::synthesize_point(*fam, c, x[0], x[1]),
            _ => self.values(&x[..self.dim()])[0],
        }
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Zero { dim } => vec![0.0; points.len() / dim],
            Repr::Modes(modes) => points
                .iter()
                .map(|&x| modes.iter().map(|m| m.value(x)).sum())
                .collect(),
            Repr::Green { kappa, c, forcing, breaks } => {
                green::solve_values(forcing.as_ref(), breaks, *kappa, *c, points)
            }
            Repr::Combination(terms) => {
                let mut out = vec![0.0; points.len() / self.dim()];
                for (w, s) in terms {
                    for (o, v) in out.iter_mut().zip(s.values(points)) {
                        *o += w * v;
                    }
                }
                out
            }
            Repr::Spectral2d(fam, c) => points
                .chunks_exact(2)
                .map(|p| galerkin2d::synthesize_point(*fam, c, p[0], p[1]))
                .collect(),
        }
    }

    fn grid_values(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        match &self.repr {
            Repr::Spectral2d(fam, c) => galerkin2d::synthesize_grid(*fam, c, xs, ys),
            Repr::Zero { .. } => DMatrix::zeros(xs.len(), ys.len()),
            Repr::Combination(terms) => {
                let mut out = DMatrix::zeros(xs.len(), ys.len());
                for (w, s) in terms {
                    out += s.grid_values(xs, ys) * *w;
                }
                out
            }
            _ => {
                let v = self.values(&crate::field::tensor_points(xs, ys));
                DMatrix::from_row_slice(xs.len(), ys.len(), &v)
            }
        }
    }
}

/// `-kappa u'' = f` on `[0, 1]`, `u(0) = u(1) = 0`.
pub fn solve_diffusion_1d(f: &ForcingSample, kappa: f64) -> Result<ReferenceSolution> {
    solve_advdiff_1d(f, kappa, 0.0)
}

/// `-kappa u'' + c u' = f` on `[0, 1]`, `u(0) = u(1) = 0`.
///
/// Fourier forcings are solved exactly mode by mode; other 1D forcings by
/// quadrature against the Green's function.
pub fn solve_advdiff_1d(f: &ForcingSample, kappa: f64, c: f64) -> Result<ReferenceSolution> {
    PdeConfig::advdiff_1d(kappa, c).validate()?;
    if f.dim() != 1 {
        return Err(Error::UnsupportedForcing(format!(
            "{:?} forcing is not one-dimensional",
            f.family()
        )));
    }
    let mut sol = if let Some(modes) = f.fourier_modes_1d() {
        let modes = modes
            .iter()
            .enumerate()
            .map(|(j, &(a, b))| ModeSolution::shifted_sine(kappa, c, (j + 1) as f64 * PI, a, b))
            .collect();
        ReferenceSolution::new(Repr::Modes(modes), SolveMethod::SpectralExact, "closed form")
    } else {
        general_1d(Arc::new(f.clone()), f.breakpoints(), kappa, c)
    };
    if c != 0.0 && kappa / c.abs() < MIN_LAYER_WIDTH {
        sol.warning = Some(format!(
            "layer width {:e} is below what finite-difference checks can resolve",
            kappa / c.abs()
        ));
    }
    Ok(sol)
}

fn general_1d(forcing: Arc<dyn ScalarField>, breaks: Vec<f64>, kappa: f64, c: f64) -> ReferenceSolution {
    ReferenceSolution::new(
        Repr::Green { kappa, c, forcing, breaks },
        SolveMethod::GreenQuadrature,
        "composite Gauss-Legendre, 16 points per panel",
    )
}

/// Builds the 2D Galerkin solver for `config` and solves once. Use
/// [`SpectralSolver2d::solve`] directly for many forcings.
pub fn solve_advdiff_2d(f: &ForcingSample, config: &PdeConfig, resolution: usize) -> Result<ReferenceSolution> {
    SpectralSolver2d::for_config(config, resolution)?.solve(f)
}

impl SpectralSolver2d {
    pub fn for_config(config: &PdeConfig, resolution: usize) -> Result<Self> {
        config.validate()?;
        if config.velocity != Velocity::Vortex2d {
            return Err(Error::invalid("2D solver supports the vortex field only"));
        }
        Self::new(config.kappa, resolution)
    }

    pub fn solve(&self, f: &ForcingSample) -> Result<ReferenceSolution> {
        if f.dim() != 2 {
            return Err(Error::UnsupportedForcing("forcing is not two-dimensional".into()));
        }
        let moments = match f.fourier_modes_2d() {
            Some((m, terms)) => {
                let ts = self.nodes();
                let xs = DMatrix::from_fn(ts.len(), terms.len(), |p, t| {
                    ((t / m + 1) as f64 * PI * ts[p] + terms[t].1).sin()
                });
                let ys = DMatrix::from_fn(ts.len(), terms.len(), |p, t| {
                    ((t % m + 1) as f64 * PI * ts[p] + terms[t].2).sin()
                });
                let amps: Vec<f64> = terms.iter().map(|t| t.0).collect();
                self.separable_moments(&xs, &ys, &amps)
            }
            None => self.moments(f),
        };
        self.solve_moments(&moments)
    }

    /// Forward solution from precomputed moments `(f, phi_kl)`.
    pub fn solve_moments(&self, moments: &DMatrix<f64>) -> Result<ReferenceSolution> {
        let u = self.solve_forward(moments)?;
        Ok(self.wrap(u))
    }

    fn wrap(&self, coeffs: DMatrix<f64>) -> ReferenceSolution {
        ReferenceSolution::new(
            Repr::Spectral2d(self.family(), coeffs),
            SolveMethod::Galerkin,
            format!("{0} x {0} {1:?} modes", self.modes(), self.family()),
        )
    }

    /// Weighting functions for a tensor sine trial basis (possibly transformed).
    pub fn adjoint_psi(&self, basis: &TrialBasis) -> Result<Vec<ReferenceSolution>> {
        let RawBasis::TensorSine2d { m } = *basis.raw() else {
            return Err(Error::invalid("2D adjoint solves need a tensor sine trial basis"));
        };
        if self.family() == SpectralFamily::Sine && m > self.modes() {
            return Err(Error::invalid("trial basis is finer than the Galerkin space"));
        }
        // (phi_a, s_i s_j) = P[a1, i] P[a2, j] with P = (phi_a, sqrt(2) sin((i+1) pi t))
        let ts = self.nodes();
        let sines = galerkin2d::SpectralFamily::Sine.values(m, ts);
        let mut wt = self.table().clone();
        for (p, mut row) in wt.row_iter_mut().enumerate() {
            row *= self.weights()[p];
        }
        let proj = wt.transpose() * sines;
        let raw: Vec<Arc<ReferenceSolution>> = (0..m * m)
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                let g = proj.column(i) * proj.column(j).transpose();
                Ok(Arc::new(self.wrap(self.solve_adjoint(&g)?)))
            })
            .collect::<Result<_>>()?;
        Ok(combine(basis, raw, SolveMethod::Galerkin))
    }
}

fn combine(basis: &TrialBasis, raw: Vec<Arc<ReferenceSolution>>, method: SolveMethod) -> Vec<ReferenceSolution> {
    match basis.transform() {
        None => raw.into_iter().map(|r| (*r).clone()).collect(),
        Some(t) => (0..t.nrows())
            .map(|i| {
                let terms = (0..t.ncols())
                    .filter(|&j| t[(i, j)] != 0.0)
                    .map(|j| (t[(i, j)], raw[j].clone()))
                    .collect();
                ReferenceSolution::combination(terms, method)
            })
            .collect(),
    }
}

/// True weighting functions `psi_i` with `a(w, psi_i) = (w, phi_i)` for all
/// `w`. In 1D this is `-kappa psi'' - c psi' = phi_i`; `resolution` is used
/// only in 2D.
pub fn solve_adjoint_for_psi(
    basis: &TrialBasis,
    config: &PdeConfig,
    resolution: usize,
) -> Result<Vec<ReferenceSolution>> {
    config.validate()?;
    if basis.spatial_dim() != config.spatial_dim() {
        return Err(Error::shape("basis and PDE have different dimensions"));
    }
    match config.velocity {
        Velocity::Vortex2d => SpectralSolver2d::for_config(config, resolution)?.adjoint_psi(basis),
        Velocity::Constant(c) => {
            let kappa = config.kappa;
            let adj = -c;
            let sine = |j: usize| {
                Arc::new(ReferenceSolution::new(
                    Repr::Modes(vec![ModeSolution::new(kappa, adj, j as f64 * PI, SQRT_2, 0.0)]),
                    SolveMethod::SpectralExact,
                    "closed form",
                ))
            };
            let raw: Vec<Arc<ReferenceSolution>> = match *basis.raw() {
                RawBasis::Sine1d { n } => (1..=n).map(sine).collect(),
                RawBasis::BoundaryLayer { .. } => {
                    let layer = basis.raw_basis();
                    let mut v: Vec<_> = (1..=BOUNDARY_LAYER_SINES).map(sine).collect();
                    for i in BOUNDARY_LAYER_SINES..layer.len() {
                        let comp = layer.clone();
                        let field: Arc<dyn ScalarField> =
                            Arc::new(FnField::new(1, move |x: &[f64]| comp.evaluate(x)[i]));
                        v.push(Arc::new(general_1d(field, Vec::new(), kappa, adj)));
                    }
                    v
                }
                RawBasis::TensorSine2d { .. } => unreachable!("dimension checked above"),
            };
            let method = if raw.iter().all(|r| r.method == SolveMethod::SpectralExact) {
                SolveMethod::SpectralExact
            } else {
                SolveMethod::GreenQuadrature
            };
            Ok(combine(basis, raw, method))
        }
    }
}

/// `psi_j = sqrt(2) sin(j pi x) / (j^2 pi^2 kappa)`, `j = 1..=n`: the
/// weighting functions of the orthonormal sine basis for pure diffusion.
pub fn diffusion_psi_closed_form(n: usize, kappa: f64) -> Vec<Arc<dyn ScalarField>> {
    (1..=n)
        .map(|j| {
            let w = j as f64 * PI;
            Arc::new(FnField::new(1, move |x: &[f64]| SQRT_2 * (w * x[0]).sin() / (w * w * kappa)))
                as Arc<dyn ScalarField>
        })
        .collect()
}

/// The zero solution in `dim` dimensions.
pub fn zero_solution(dim: usize) -> ReferenceSolution {
    ReferenceSolution::new(Repr::Zero { dim }, SolveMethod::SpectralExact, "exact")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{boundary_layer_basis, sine_basis_1d, tensor_sine_basis_2d};
    use crate::forcing::{fourier_forcing_1d, fourier_forcing_2d, grf_forcing};
    use crate::quadrature::{gauss_legendre, gauss_legendre_square};
    use approx::assert_abs_diff_eq;

    fn sine_forcing(amp_index: usize) -> ForcingSample {
        let mut a = vec![0.0; 10];
        a[amp_index] = 1.0;
        ForcingSample::fourier_1d(a, vec![0.0; 10], 0).unwrap()
    }

    fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ForcingSample {
        ForcingSample::custom(Arc::new(FnField::new(1, move |x: &[f64]| f(x[0]))), vec![])
    }

    /// Second-order central differences for `-kappa u'' + c u' = f` on a uniform grid.
    fn fd_solve(f: &dyn Fn(f64) -> f64, kappa: f64, c: f64, n: usize) -> Vec<f64> {
        let h = 1.0 / (n - 1) as f64;
        let m = n - 2;
        let lo = -kappa / (h * h) - c / (2.0 * h);
        let di = 2.0 * kappa / (h * h);
        let up = -kappa / (h * h) + c / (2.0 * h);
        let mut d = vec![di; m];
        let mut r: Vec<f64> = (1..=m).map(|i| f(i as f64 * h)).collect();
        for i in 1..m {
            let w = lo / d[i - 1];
            d[i] -= w * up;
            r[i] -= w * r[i - 1];
        }
        let mut u = vec![0.0; n];
        for i in (0..m).rev() {
            let next = if i + 1 < m { u[i + 2] } else { 0.0 };
            u[i + 1] = (r[i] - up * next) / d[i];
        }
        u
    }

    #[test]
    fn diffusion_examples() {
        let u = solve_diffusion_1d(&sine_forcing(0), 0.01).unwrap();
        assert_eq!(u.method(), SolveMethod::SpectralExact);
        assert_abs_diff_eq!(u.value(&[0.5]), 1.0 / (0.01 * PI * PI), epsilon = 1e-12);
        assert_abs_diff_eq!(u.value(&[0.5]), 10.13212, epsilon = 1e-5);

        let zero = custom(|_| 0.0);
        let z = solve_diffusion_1d(&zero, 0.01).unwrap();
        assert!(z.values(&[0.1, 0.5, 0.9]).iter().all(|v| *v == 0.0));

        let cosf = custom(|x| (PI * x).cos());
        let u = solve_diffusion_1d(&cosf, 0.01).unwrap();
        assert!(u.value(&[0.0]).abs() < 1e-14 && u.value(&[1.0]).abs() < 1e-14);
        let fd = fd_solve(&|x| (PI * x).cos(), 0.01, 0.0, 8193);
        let got = u.value(&[0.25]);
        assert!((got - fd[2048]).abs() <= 1e-6 * got.abs(), "{got} vs {}", fd[2048]);
    }

    #[test]
    fn advdiff_matches_basis_functions() {
        let b = boundary_layer_basis(0.1, 1e-4).unwrap();
        for n in 1..=10 {
            let u = solve_advdiff_1d(&sine_forcing(n - 1), 1e-4, 0.1).unwrap();
            for x in [0.1, 0.5, 0.999, 0.99995] {
                let phi = b.evaluate(&[x])[4 + n];
                assert_abs_diff_eq!(SQRT_2 * u.value(&[x]), phi, epsilon = 1e-12 * phi.abs().max(1.0));
            }
        }
    }

    #[test]
    fn advdiff_reduces_to_diffusion() {
        let f = fourier_forcing_1d(11).unwrap();
        let a = solve_advdiff_1d(&f, 0.01, 0.0).unwrap();
        let b = solve_diffusion_1d(&f, 0.01).unwrap();
        let c = solve_advdiff_1d(&f, 0.01, 1e-15).unwrap();
        for x in [0.13, 0.5, 0.91] {
            assert_eq!(a.value(&[x]), b.value(&[x]));
            assert_abs_diff_eq!(a.value(&[x]), c.value(&[x]), epsilon = 1e-12 * a.value(&[x]).abs().max(1.0));
        }
    }

    #[test]
    fn advdiff_against_fd_oracle() {
        let u = solve_advdiff_1d(&sine_forcing(0), 0.01, 0.1).unwrap();
        let fd = fd_solve(&|x| (PI * x).sin(), 0.01, 0.1, 16385);
        let got = u.value(&[0.5]);
        assert!((got - fd[8192]).abs() <= 1e-5 * got.abs());
    }

    #[test]
    fn thin_layer_warning() {
        let u = solve_advdiff_1d(&sine_forcing(0), 1e-8, 1.0).unwrap();
        assert!(u.warning().is_some());
        assert!(solve_advdiff_1d(&sine_forcing(0), 1e-4, 0.1).unwrap().warning().is_none());
        assert!(matches!(solve_advdiff_1d(&sine_forcing(0), 0.0, 0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn grf_solution_against_fd() {
        let f = grf_forcing(0.05, 9).unwrap();
        let u = solve_advdiff_1d(&f, 1e-2, 0.3).unwrap();
        assert_eq!(u.method(), SolveMethod::GreenQuadrature);
        let n = 16385;
        let fd = fd_solve(&|x| f.value(&[x]), 1e-2, 0.3, n);
        for i in [1000, 8000, 15000] {
            let x = i as f64 / (n - 1) as f64;
            let got = u.value(&[x]);
            assert!((got - fd[i]).abs() <= 1e-6 * 1f64.max(got.abs()), "x={x}: {got} vs {}", fd[i]);
        }
    }

    #[test]
    fn diffusion_psi_matches_closed_form() {
        let basis = sine_basis_1d(10).unwrap();
        let psi = solve_adjoint_for_psi(&basis, &PdeConfig::diffusion_1d(0.01), 0).unwrap();
        let exact = diffusion_psi_closed_form(10, 0.01);
        assert_abs_diff_eq!(exact[0].value(&[0.5]), SQRT_2 * 100.0 / (PI * PI), epsilon = 1e-12);
        // sqrt(2) * 100 / pi^2 = 14.32898...
        assert_abs_diff_eq!(exact[0].value(&[0.5]), 14.32898, epsilon = 1e-5);
        for (p, e) in psi.iter().zip(&exact) {
            for x in [0.05, 0.3, 0.5, 0.77] {
                assert_abs_diff_eq!(p.value(&[x]), e.value(&[x]), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn symmetrized_form_holds() {
        // (u_bar, phi_i) = (u, phi_i) = (f, psi_i) with M = I
        let rule = gauss_legendre(200, 0.0, 1.0).unwrap();
        let basis = sine_basis_1d(10).unwrap();
        let psi = diffusion_psi_closed_form(10, 0.01);
        let f = fourier_forcing_1d(5).unwrap();
        let u = solve_diffusion_1d(&f, 0.01).unwrap();
        let table = basis.table(rule.nodes());
        let mom = crate::basis::moments(&u.values(rule.nodes()), &table, &rule);
        let fv = f.values(rule.nodes());
        for i in 0..10 {
            let pv = psi[i].values(rule.nodes());
            let rhs: f64 = fv.iter().zip(&pv).zip(rule.weights()).map(|((a, b), w)| a * b * w).sum();
            assert!((mom[i] - rhs).abs() <= 1e-8 * mom.amax(), "i={i}");
        }
    }

    #[test]
    fn boundary_layer_psi_adjoint_identity() {
        // a(w, psi_i) = (w, phi_i) for w = sin(k pi x): kappa (w', psi') + (c w', psi)
        let (kappa, c) = (1e-4, 0.1);
        let rule = crate::quadrature::composite_gauss_legendre(
            &(0..=400).map(|i| i as f64 / 400.0).collect::<Vec<_>>(),
            20,
        )
        .unwrap();
        let raw = boundary_layer_basis(c, kappa).unwrap();
        let basis = raw.clone();
        let psi = solve_adjoint_for_psi(&basis, &PdeConfig::advdiff_1d(kappa, c), 0).unwrap();
        let phi = basis.table(rule.nodes());
        let h = 1e-6;
        for i in [0, 3, 7, 11, 14] {
            let pv = psi[i].values(rule.nodes());
            let plus: Vec<f64> = rule.nodes().iter().map(|x| x + h).collect();
            let minus: Vec<f64> = rule.nodes().iter().map(|x| x - h).collect();
            let dp: Vec<f64> = psi[i]
                .values(&plus)
                .iter()
                .zip(psi[i].values(&minus))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            for k in 1..=5 {
                let w = k as f64 * PI;
                let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);
                for (q, &x) in rule.nodes().iter().enumerate() {
                    let wt = rule.weights()[q];
                    let (a, b) = (kappa * w * (w * x).cos() * dp[q], c * w * (w * x).cos() * pv[q]);
                    lhs += wt * (a + b);
                    scale += wt * (a.abs() + b.abs());
                    rhs += wt * (w * x).sin() * phi[(q, i)];
                }
                assert!((lhs - rhs).abs() <= 1e-8 * scale, "i={i} k={k}: {lhs} vs {rhs} (scale {scale})");
            }
        }
    }

    #[test]
    fn orthonormalized_psi_is_transform_of_raw_psi() {
        let (kappa, c) = (1e-4, 0.1);
        let raw = boundary_layer_basis(c, kappa).unwrap();
        let basis = crate::basis::gram_schmidt(&raw, &gauss_legendre(200, 0.0, 1.0).unwrap()).unwrap();
        let cfg = PdeConfig::advdiff_1d(kappa, c);
        let pr = solve_adjoint_for_psi(&raw, &cfg, 0).unwrap();
        let po = solve_adjoint_for_psi(&basis, &cfg, 0).unwrap();
        let t = basis.transform().unwrap();
        for x in [0.001, 0.3, 0.9995] {
            for i in 0..15 {
                let expect: f64 = (0..15).map(|j| t[(i, j)] * pr[j].value(&[x])).sum();
                assert_abs_diff_eq!(po[i].value(&[x]), expect, epsilon = 1e-9 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn vortex_is_divergence_free() {
        let mut rng = crate::rng::SampleRng::new(1);
        let v = Vortex;
        for _ in 0..10_000 {
            let (x, y) = (rng.unit(), rng.unit());
            assert!(v.divergence(x, y).abs() <= 1e-10);
        }
        // symbolic check of the closed-form divergence against central differences
        let h = 1e-5;
        let (x, y) = (0.6, 0.8);
        let fd = (v.velocity(x + h, y).0 - v.velocity(x - h, y).0) / (2.0 * h)
            + (v.velocity(x, y + h).1 - v.velocity(x, y - h).1) / (2.0 * h);
        assert!(fd.abs() < 1e-8);
    }

    fn manufactured(m: usize) -> f64 {
        let kappa = 1e-3;
        let solver = SpectralSolver2d::new(kappa, m).unwrap();
        let v = Vortex;
        let f = FnField::new(2, move |p: &[f64]| {
            let (x, y) = (p[0], p[1]);
            let (c1, c2) = v.velocity(x, y);
            let (sx, cx) = (PI * x).sin_cos();
            let (sy, cy) = (PI * y).sin_cos();
            2.0 * kappa * PI * PI * sx * sy + c1 * PI * cx * sy + c2 * PI * sx * cy
        });
        let u = solver.solve(&ForcingSample::custom(Arc::new(f), vec![])).unwrap();
        let rule = gauss_legendre(80, 0.0, 1.0).unwrap();
        let g = u.grid_values(rule.nodes(), rule.nodes());
        let (mut e2, mut n2) = (0.0, 0.0);
        for (i, (x, wx)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
            for (j, (y, wy)) in rule.nodes().iter().zip(rule.weights()).enumerate() {
                let ex = (PI * x).sin() * (PI * y).sin();
                e2 += wx * wy * (g[(i, j)] - ex).powi(2);
                n2 += wx * wy * ex * ex;
            }
        }
        (e2 / n2).sqrt()
    }

    #[test]
    fn manufactured_2d_small() {
        assert!(manufactured(12) <= 1e-6, "{}", manufactured(12));
    }

    #[test]
    fn zero_forcing_2d() {
        let solver = SpectralSolver2d::new(1e-3, 8).unwrap();
        let z = ForcingSample::custom(Arc::new(FnField::new(2, |_: &[f64]| 0.0)), vec![]);
        let u = solver.solve(&z).unwrap();
        assert!(u.grid_values(&[0.3, 0.6], &[0.2]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_identity_2d() {
        for family in [SpectralFamily::Sine, SpectralFamily::Legendre] {
            let solver = SpectralSolver2d::with_options(1e-3, 12, family, 56).unwrap();
            let basis = tensor_sine_basis_2d(3).unwrap();
            let psi = solver.adjoint_psi(&basis).unwrap();
            let nodes = solver.nodes().to_vec();
            let phi = basis.raw_basis();
            let mut rng = crate::rng::SampleRng::new(5);
            for _ in 0..20 {
                let w = DMatrix::from_fn(12, 12, |_, _| rng.uniform(-1.0, 1.0));
                let wf = ReferenceSolution::new(Repr::Spectral2d(family, w.clone()), SolveMethod::Galerkin, "");
                let wv = wf.grid_values(&nodes, &nodes);
                for (i, p) in psi.iter().enumerate() {
                    let lhs = solver.bilinear(&w, p.spectral_coefficients().unwrap());
                    // (w, phi_i) by tensor quadrature
                    let mut rhs = 0.0;
                    for (a, x) in nodes.iter().enumerate() {
                        for (b, y) in nodes.iter().enumerate() {
                            rhs += solver.weights()[a] * solver.weights()[b] * wv[(a, b)] * phi.evaluate(&[*x, *y])[i];
                        }
                    }
                    assert!((lhs - rhs).abs() <= 1e-8 * w.amax(), "{family:?}: {lhs} vs {rhs}");
                }
            }
        }
        let _ = gauss_legendre_square(2, 0.0, 1.0);
        let _ = fourier_forcing_2d(0);
    }
}
