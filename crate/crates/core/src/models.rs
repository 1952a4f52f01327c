//! Operator surrogates mapping a sensor vector `F` to a solution field.
//!
//! All three models share the form `u(x) = theta(x)^T L F`, linear in `F`:
//!
//! | model       | branch matrix `L` (`K x N_s`)  | features `theta(x)` |
//! |-------------|--------------------------------|---------------------|
//! | PG-VarMiON  | `N(x_k)^T diag(gamma)` = `A G` | trial basis `Phi`   |
//! | BNet        | trainable `B`                  | trial basis `Phi`   |
//! | L-DeepONet  | trainable `B`                  | trunk net `tau`     |
//!
//! Training works on this factorization directly; see [`crate::training`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{MassMatrix, TrialBasis};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::nn::{ForwardCache, Mlp};
use crate::problem::Problem;
use crate::quadrature::QuadratureRule;
use crate::rng::SampleRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "pg-varmion")]
    PgVarmion,
    #[serde(rename = "bnet")]
    BNet,
    #[serde(rename = "l-deeponet")]
    LDeepONet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::PgVarmion, ModelKind::BNet, ModelKind::LDeepONet];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PgVarmion => "pg-varmion",
            ModelKind::BNet => "bnet",
            ModelKind::LDeepONet => "l-deeponet",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::PgVarmion => "PG-VarMiON",
            ModelKind::BNet => "BNet",
            ModelKind::LDeepONet => "L-DeepONet",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ModelKind::PgVarmion => 1,
            ModelKind::BNet => 2,
            ModelKind::LDeepONet => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model '{s}' (pg-varmion, bnet, l-deeponet)")))
    }
}

/// `F_k = f(x_k)` in node order of the rule.
pub fn sensor_vector(f: &dyn ScalarField, rule: &QuadratureRule) -> Vec<f64> {
    f.values(rule.nodes())
}

/// Source of the weighting functions `N` of a PG-VarMiON.
#[derive(Clone)]
pub enum Weighting {
    Net(Mlp),
    /// Frozen fields, e.g. exact weighting functions; not trainable.
    Fixed(Vec<Arc<dyn ScalarField>>),
}

impl fmt::Debug for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weighting::Net(n) => f.debug_tuple("Net").field(&n.dims()).finish(),
            Weighting::Fixed(v) => f.debug_tuple("Fixed").field(&v.len()).finish(),
        }
    }
}

impl Weighting {
    fn len(&self) -> usize {
        match self {
            Weighting::Net(n) => n.output_dim(),
            Weighting::Fixed(v) => v.len(),
        }
    }

    /// `N_i(x_p)` as a `points x N` table.
    pub fn table(&self, points: &[f64], dim: usize) -> Result<DMatrix<f64>> {
        match self {
            Weighting::Net(n) => n.forward_points(points),
            Weighting::Fixed(v) => {
                let cols: Vec<Vec<f64>> = v.iter().map(|f| f.values(points)).collect();
                Ok(DMatrix::from_fn(points.len() / dim, v.len(), |p, i| cols[i][p]))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct PgVarmion {
    basis: TrialBasis,
    mass: MassMatrix,
    sensor_rule: QuadratureRule,
    boundary_rule: Option<QuadratureRule>,
    weighting: Weighting,
}

impl PgVarmion {
    pub fn new(basis: TrialBasis, mass: MassMatrix, sensor_rule: QuadratureRule, net: Mlp) -> Result<Self> {
        if net.input_dim() != basis.spatial_dim() {
            return Err(Error::shape("weighting net input dimension differs from the domain dimension"));
        }
        Self::build(basis, mass, sensor_rule, Weighting::Net(net))
    }

    pub fn with_fixed_weighting(
        basis: TrialBasis,
        mass: MassMatrix,
        sensor_rule: QuadratureRule,
        fields: Vec<Arc<dyn ScalarField>>,
    ) -> Result<Self> {
        Self::build(basis, mass, sensor_rule, Weighting::Fixed(fields))
    }

    fn build(basis: TrialBasis, mass: MassMatrix, sensor_rule: QuadratureRule, weighting: Weighting) -> Result<Self> {
        if weighting.len() != basis.len() {
            return Err(Error::shape(format!(
                "{} weighting functions for a basis of size {}",
                weighting.len(),
                basis.len()
            )));
        }
        if mass.dim() != basis.len() {
            return Err(Error::shape("mass matrix does not match basis size"));
        }
        if sensor_rule.dim() != basis.spatial_dim() {
            return Err(Error::shape("sensor rule dimension differs from the basis"));
        }
        Ok(Self { basis, mass, sensor_rule, boundary_rule: None, weighting })
    }

    /// Adds the boundary term `A^b G^b N` for inhomogeneous Neumann data.
    pub fn with_boundary_rule(mut self, rule: QuadratureRule) -> Result<Self> {
        if rule.dim() != self.basis.spatial_dim() {
            return Err(Error::shape("boundary rule dimension differs from the basis"));
        }
        self.boundary_rule = Some(rule);
        Ok(self)
    }

    pub fn basis(&self) -> &TrialBasis {
        &self.basis
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn sensor_rule(&self) -> &QuadratureRule {
        &self.sensor_rule
    }

    pub fn boundary_rule(&self) -> Option<&QuadratureRule> {
        self.boundary_rule.as_ref()
    }

    pub fn weighting(&self) -> &Weighting {
        &self.weighting
    }

    pub fn net(&self) -> Option<&Mlp> {
        match &self.weighting {
            Weighting::Net(n) => Some(n),
            Weighting::Fixed(_) => None,
        }
    }

    pub fn net_mut(&mut self) -> Option<&mut Mlp> {
        match &mut self.weighting {
            Weighting::Net(n) => Some(n),
            Weighting::Fixed(_) => None,
        }
    }

    fn weighted_table(&self, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
        let mut a = self.weighting.table(rule.nodes(), rule.dim())?.transpose();
        for (mut col, g) in a.column_iter_mut().zip(rule.weights()) {
            col *= *g;
        }
        Ok(a)
    }

    /// `A G` with `A_ik = N_i(x_k)`, an `N x N_s` matrix.
    pub fn branch_matrix(&self) -> Result<DMatrix<f64>> {
        self.weighted_table(&self.sensor_rule)
    }

    /// `beta = A G F + A^b G^b N`. A missing boundary vector means homogeneous data.
    pub fn pg_branch(&self, f: &[f64], boundary: Option<&[f64]>) -> Result<DVector<f64>> {
        if f.len() != self.sensor_rule.len() {
            return Err(Error::shape(format!("sensor vector has {} entries, expected {}", f.len(), self.sensor_rule.len())));
        }
        let mut beta = self.branch_matrix()? * DVector::from_column_slice(f);
        match (&self.boundary_rule, boundary) {
            (Some(rule), Some(nv)) => {
                if nv.len() != rule.len() {
                    return Err(Error::shape(format!("boundary vector has {} entries, expected {}", nv.len(), rule.len())));
                }
                beta += self.weighted_table(rule)? * DVector::from_column_slice(nv);
            }
            (None, Some(_)) => return Err(Error::shape("boundary vector given but the model has no boundary rule")),
            _ => {}
        }
        Ok(beta)
    }

    /// Learned weighting functions `psi_hat = M N`.
    pub fn recover_psi(&self) -> Vec<Arc<dyn ScalarField>> {
        let shared = Arc::new(self.weighting.clone());
        let dim = self.basis.spatial_dim();
        (0..self.basis.len())
            .map(|i| {
                Arc::new(PsiHat {
                    weighting: shared.clone(),
                    row: self.mass.entries().row(i).iter().copied().collect(),
                    dim,
                }) as Arc<dyn ScalarField>
            })
            .collect()
    }
}

/// One learned weighting function `sum_j M_ij N_j`.
struct PsiHat {
    weighting: Arc<Weighting>,
    row: Vec<f64>,
    dim: usize,
}

impl ScalarField for PsiHat {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.values(x)[0]
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        let t = self.weighting.table(points, self.dim).expect("points match the weighting dimension");
        (t * DVector::from_column_slice(&self.row)).iter().copied().collect()
    }
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` entries, like a linear layer.
fn init_matrix(rows: usize, cols: usize, rng: &mut SampleRng) -> DMatrix<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    // row-major draw order, independent of storage order
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.uniform(-bound, bound);
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct BNet {
    basis: TrialBasis,
    sensor_rule: QuadratureRule,
    b: DMatrix<f64>,
}

impl BNet {
    pub fn new(basis: TrialBasis, sensor_rule: QuadratureRule, rng: &mut SampleRng) -> Result<Self> {
        let b = init_matrix(basis.len(), sensor_rule.len(), rng);
        Self::from_matrix(basis, sensor_rule, b)
    }

    pub fn from_matrix(basis: TrialBasis, sensor_rule: QuadratureRule, b: DMatrix<f64>) -> Result<Self> {
        if b.shape() != (basis.len(), sensor_rule.len()) {
            return Err(Error::shape(format!(
                "B is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                basis.len(),
                sensor_rule.len()
            )));
        }
        Ok(Self { basis, sensor_rule, b })
    }

    pub fn basis(&self) -> &TrialBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }
}

#[derive(Clone, Debug)]
pub struct LDeepONet {
    trunk: Mlp,
    sensor_rule: QuadratureRule,
    b: DMatrix<f64>,
}

impl LDeepONet {
    pub fn new(trunk: Mlp, sensor_rule: QuadratureRule, rng: &mut SampleRng) -> Result<Self> {
        let b = init_matrix(trunk.output_dim(), sensor_rule.len(), rng);
        Self::from_parts(trunk, sensor_rule, b)
    }

    pub fn from_parts(trunk: Mlp, sensor_rule: QuadratureRule, b: DMatrix<f64>) -> Result<Self> {
        if b.shape() != (trunk.output_dim(), sensor_rule.len()) {
            return Err(Error::shape(format!(
                "B is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                trunk.output_dim(),
                sensor_rule.len()
            )));
        }
        if trunk.input_dim() != sensor_rule.dim() {
            return Err(Error::shape("trunk input dimension differs from the domain dimension"));
        }
        Ok(Self { trunk, sensor_rule, b })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }
}

#[derive(Clone, Debug)]
pub enum OperatorModel {
    PgVarmion(PgVarmion),
    BNet(BNet),
    LDeepONet(LDeepONet),
}

/// Saved forward state for [`OperatorModel::backward_factors`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    cache: ForwardCache,
}

impl OperatorModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            OperatorModel::PgVarmion(_) => ModelKind::PgVarmion,
            OperatorModel::BNet(_) => ModelKind::BNet,
            OperatorModel::LDeepONet(_) => ModelKind::LDeepONet,
        }
    }

    pub fn sensor_rule(&self) -> &QuadratureRule {
        match self {
            OperatorModel::PgVarmion(m) => &m.sensor_rule,
            OperatorModel::BNet(m) => &m.sensor_rule,
            OperatorModel::LDeepONet(m) => &m.sensor_rule,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.sensor_rule().dim()
    }

    /// Trial basis, for the two models whose output lies in its span.
    pub fn basis(&self) -> Option<&TrialBasis> {
        match self {
            OperatorModel::PgVarmion(m) => Some(&m.basis),
            OperatorModel::BNet(m) => Some(&m.basis),
            OperatorModel::LDeepONet(_) => None,
        }
    }

    pub fn as_pg(&self) -> Option<&PgVarmion> {
        match self {
            OperatorModel::PgVarmion(m) => Some(m),
            _ => None,
        }
    }

    /// Trainable parameters, flattened: net parameters, then `B` column-major.
    pub fn params(&self) -> Vec<f64> {
        match self {
            OperatorModel::PgVarmion(m) => m.net().map(|n| n.params().to_vec()).unwrap_or_default(),
            OperatorModel::BNet(m) => m.b.as_slice().to_vec(),
            OperatorModel::LDeepONet(m) => {
                let mut p = m.trunk.params().to_vec();
                p.extend_from_slice(m.b.as_slice());
                p
            }
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(format!("expected {} parameters, got {}", self.num_params(), params.len())));
        }
        match self {
            OperatorModel::PgVarmion(m) => {
                if let Some(n) = m.net_mut() {
                    n.params_mut().copy_from_slice(params);
                }
            }
            OperatorModel::BNet(m) => m.b.as_mut_slice().copy_from_slice(params),
            OperatorModel::LDeepONet(m) => {
                let k = m.trunk.num_params();
                m.trunk.params_mut().copy_from_slice(&params[..k]);
                m.b.as_mut_slice().copy_from_slice(&params[k..]);
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        match self {
            OperatorModel::PgVarmion(m) => m.net().map_or(0, Mlp::num_params),
            OperatorModel::BNet(m) => m.b.len(),
            OperatorModel::LDeepONet(m) => m.trunk.num_params() + m.b.len(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, OperatorModel::PgVarmion(PgVarmion { weighting: Weighting::Fixed(_), .. }))
    }

    /// `L` such that the output coefficients are `L F`.
    pub fn branch_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            OperatorModel::PgVarmion(m) => m.branch_matrix(),
            OperatorModel::BNet(m) => Ok(m.b.clone()),
            OperatorModel::LDeepONet(m) => Ok(m.b.clone()),
        }
    }

    /// `theta(x_p)` as a `points x K` table.
    pub fn features(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            OperatorModel::PgVarmion(m) => Ok(m.basis.table(points)),
            OperatorModel::BNet(m) => Ok(m.basis.table(points)),
            OperatorModel::LDeepONet(m) => m.trunk.forward_points(points),
        }
    }

    /// Features that do not depend on the parameters.
    pub fn fixed_features(&self, points: &[f64]) -> Option<DMatrix<f64>> {
        match self {
            OperatorModel::LDeepONet(_) => None,
            _ => self.features(points).ok(),
        }
    }

    fn check_sensors(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.sensor_rule().len() {
            return Err(Error::shape(format!(
                "sensor vector has {} entries, expected {}",
                f.len(),
                self.sensor_rule().len()
            )));
        }
        Ok(())
    }

    /// Output coefficients `L F`; for PG-VarMiON this is `beta`.
    pub fn coefficients(&self, f: &[f64]) -> Result<DVector<f64>> {
        self.check_sensors(f)?;
        Ok(self.branch_matrix()? * DVector::from_column_slice(f))
    }

    /// `u_hat` at flat points.
    pub fn evaluate(&self, f: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        if !points.len().is_multiple_of(self.spatial_dim()) {
            return Err(Error::shape("point list length is not a multiple of the dimension"));
        }
        let c = self.coefficients(f)?;
        Ok((self.features(points)? * c).iter().copied().collect())
    }

    /// Outputs for many sensor vectors (columns of `fs`) at shared points, `points x samples`.
    pub fn evaluate_batch(&self, fs: &DMatrix<f64>, points: &[f64]) -> Result<DMatrix<f64>> {
        if fs.nrows() != self.sensor_rule().len() {
            return Err(Error::shape("sensor matrix has the wrong number of rows"));
        }
        Ok(self.features(points)? * (self.branch_matrix()? * fs))
    }

    /// Forward pass for training: `(L, theta at points)`, with `theta` only
    /// computed when it depends on the parameters.
    pub fn forward_factors(&self, points: &[f64], tape: &mut Tape) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        match self {
            OperatorModel::PgVarmion(m) => {
                let net = m.net().ok_or_else(|| Error::invalid("fixed weighting functions are not trainable"))?;
                let rule = &m.sensor_rule;
                let x = DMatrix::from_row_slice(rule.len(), rule.dim(), rule.nodes());
                let mut l = net.forward_cached(&x, &mut tape.cache)?.transpose();
                for (mut col, g) in l.column_iter_mut().zip(rule.weights()) {
                    col *= *g;
                }
                Ok((l, None))
            }
            OperatorModel::BNet(m) => Ok((m.b.clone(), None)),
            OperatorModel::LDeepONet(m) => {
                let d = m.trunk.input_dim();
                let x = DMatrix::from_row_slice(points.len() / d, d, points);
                let theta = m.trunk.forward_cached(&x, &mut tape.cache)?;
                Ok((m.b.clone(), Some(theta)))
            }
        }
    }

    /// Parameter gradient from cotangents of `L` and (if variable) `theta`,
    /// accumulated into `grad` in [`OperatorModel::params`] order.
    pub fn backward_factors(
        &self,
        tape: &Tape,
        d_branch: &DMatrix<f64>,
        d_features: Option<&DMatrix<f64>>,
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.num_params() {
            return Err(Error::shape("gradient buffer has the wrong length"));
        }
        match self {
            OperatorModel::PgVarmion(m) => {
                let net = m.net().ok_or_else(|| Error::invalid("fixed weighting functions are not trainable"))?;
                // L[i,k] = N_i(x_k) gamma_k
                let w = m.sensor_rule.weights();
                let cot = DMatrix::from_fn(w.len(), d_branch.nrows(), |k, i| d_branch[(i, k)] * w[k]);
                net.backward(&tape.cache, &cot, grad)
            }
            OperatorModel::BNet(_) => {
                for (g, d) in grad.iter_mut().zip(d_branch.iter()) {
                    *g += d;
                }
                Ok(())
            }
            OperatorModel::LDeepONet(m) => {
                let k = m.trunk.num_params();
                let d_theta = d_features.ok_or_else(|| Error::invalid("L-DeepONet needs a trunk cotangent"))?;
                m.trunk.backward(&tape.cache, d_theta, &mut grad[..k])?;
                for (g, d) in grad[k..].iter_mut().zip(d_branch.iter()) {
                    *g += d;
                }
                Ok(())
            }
        }
    }
}

impl OperatorModel {
    /// Freshly initialized model of `kind` for `problem`. PG-VarMiON and the
    /// L-DeepONet trunk use the problem's network shape with `q = N`.
    pub fn for_problem(problem: &Problem, kind: ModelKind, seed: u64) -> Result<Self> {
        let mut rng = SampleRng::new(seed);
        let spec = problem.net_spec();
        let n = problem.basis().len();
        let dims = spec.dims(problem.spatial_dim(), n);
        let sensors = problem.sensors().rule().clone();
        Ok(match kind {
            ModelKind::PgVarmion => {
                let net = Mlp::new(dims, spec.final_bias, Some(spec.cutoff), &mut rng)?;
                OperatorModel::PgVarmion(PgVarmion::new(problem.basis().clone(), problem.mass().clone(), sensors, net)?)
            }
            ModelKind::BNet => OperatorModel::BNet(BNet::new(problem.basis().clone(), sensors, &mut rng)?),
            ModelKind::LDeepONet => {
                let trunk = Mlp::new(dims, spec.final_bias, Some(spec.cutoff), &mut rng)?;
                OperatorModel::LDeepONet(LDeepONet::new(trunk, sensors, &mut rng)?)
            }
        })
    }
}

/// One supervised point: sensor vector, location and label.
#[derive(Clone, Copy, Debug)]
pub struct LossPoint<'a> {
    pub sensors: &'a [f64],
    pub x: &'a [f64],
    pub label: f64,
}

/// Mean of `(u - u_hat)^2` over the batch.
pub fn training_loss(model: &OperatorModel, batch: &[LossPoint<'_>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch".into()));
    }
    let mut total = 0.0;
    for p in batch {
        let r = model.evaluate(p.sensors, p.x)?[0] - p.label;
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{mass_matrix, sine_basis_1d};
    use crate::field::FnField;
    use crate::quadrature::gauss_legendre;
    use crate::reference::diffusion_psi_closed_form;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn setup() -> (TrialBasis, MassMatrix, QuadratureRule) {
        let basis = sine_basis_1d(10).unwrap();
        let mass = mass_matrix(&basis, &gauss_legendre(200, 0.0, 1.0).unwrap()).unwrap();
        (basis, mass, gauss_legendre(40, 0.0, 1.0).unwrap())
    }

    fn models() -> Vec<OperatorModel> {
        let (basis, mass, rule) = setup();
        let mut rng = SampleRng::new(1);
        let net = Mlp::new(vec![1, 10, 20, 30, 10], true, Some(100.0), &mut rng).unwrap();
        let trunk = Mlp::new(vec![1, 10, 20, 30, 10], true, Some(100.0), &mut rng).unwrap();
        vec![
            OperatorModel::PgVarmion(PgVarmion::new(basis.clone(), mass, rule.clone(), net).unwrap()),
            OperatorModel::BNet(BNet::new(basis, rule.clone(), &mut rng).unwrap()),
            OperatorModel::LDeepONet(LDeepONet::new(trunk, rule, &mut rng).unwrap()),
        ]
    }

    fn exact_pg() -> PgVarmion {
        let (basis, mass, rule) = setup();
        PgVarmion::with_fixed_weighting(basis, mass, rule, diffusion_psi_closed_form(10, 0.01)).unwrap()
    }

    #[test]
    fn parameter_counts() {
        let counts: Vec<usize> = models().iter().map(OperatorModel::num_params).collect();
        assert_eq!(counts, vec![1180, 400, 1580]);
    }

    #[test]
    fn sensor_vector_values() {
        let rule = gauss_legendre(40, 0.0, 1.0).unwrap();
        let one = FnField::new(1, |_: &[f64]| 1.0);
        assert!(sensor_vector(&one, &rule).iter().all(|&v| v == 1.0));
        let s = FnField::new(1, |x: &[f64]| (PI * x[0]).sin());
        let f = sensor_vector(&s, &rule);
        assert_eq!(f[1], (PI * rule.node(1)[0]).sin());
    }

    #[test]
    fn zero_input_and_linearity() {
        let mut rng = SampleRng::new(4);
        let pts: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
        for m in models() {
            let zero = m.evaluate(&[0.0; 40], &pts).unwrap();
            assert!(zero.iter().all(|&v| v == 0.0));
            let f1: Vec<f64> = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let f2: Vec<f64> = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let (a, b) = (0.7, -1.3);
            let mix: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
            let (u1, u2, um) = (m.evaluate(&f1, &pts).unwrap(), m.evaluate(&f2, &pts).unwrap(), m.evaluate(&mix, &pts).unwrap());
            let twice: Vec<f64> = f1.iter().map(|x| 2.0 * x).collect();
            let u2x = m.evaluate(&twice, &pts).unwrap();
            for p in 0..pts.len() {
                assert_abs_diff_eq!(um[p], a * u1[p] + b * u2[p], epsilon = 1e-12);
                assert_abs_diff_eq!(u2x[p], 2.0 * u1[p], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_weighting_reproduces_solution() {
        let pg = exact_pg();
        let f: Vec<f64> = pg.sensor_rule().nodes().iter().map(|x| (PI * x).sin()).collect();
        let beta = pg.pg_branch(&f, None).unwrap();
        // (f, psi_1) = 1 / (sqrt(2) kappa pi^2)
        let expect = 1.0 / (SQRT_2 * 0.01 * PI * PI);
        assert_abs_diff_eq!(beta[0], expect, epsilon = 1e-10);
        assert_abs_diff_eq!(beta[0], 7.16449, epsilon = 1e-5);
        for i in 1..10 {
            assert!(beta[i].abs() < 1e-10);
        }
        let m = OperatorModel::PgVarmion(pg);
        let x = [0.1, 0.37, 0.5, 0.91];
        let u = m.evaluate(&f, &x).unwrap();
        for (p, xv) in x.iter().enumerate() {
            assert_abs_diff_eq!(u[p], (PI * xv).sin() / (0.01 * PI * PI), epsilon = 1e-9);
        }
    }

    #[test]
    fn branch_matches_fine_integral() {
        let m = &models()[0];
        let pg = m.as_pg().unwrap();
        let g = |x: f64| (2.0 * PI * x).cos() * x;
        let f: Vec<f64> = pg.sensor_rule().nodes().iter().map(|&x| g(x)).collect();
        let beta = pg.pg_branch(&f, None).unwrap();
        // materialized A G F
        let a = pg.weighting().table(pg.sensor_rule().nodes(), 1).unwrap();
        for i in 0..10 {
            let mut s = 0.0;
            for k in 0..40 {
                s += a[(k, i)] * pg.sensor_rule().weights()[k] * f[k];
            }
            assert!((s - beta[i]).abs() <= 1e-14 * (1.0 + s.abs()));
        }
        // smooth weighting: the 40-point rule is exact to rounding against a fine rule
        let exact = exact_pg();
        let fine = gauss_legendre(400, 0.0, 1.0).unwrap();
        let fe: Vec<f64> = exact.sensor_rule().nodes().iter().map(|&x| g(x)).collect();
        let b = exact.pg_branch(&fe, None).unwrap();
        let psi = diffusion_psi_closed_form(10, 0.01);
        for i in 0..10 {
            let brute = fine.integrate(|x| psi[i].value(x) * g(x[0]));
            assert!((brute - b[i]).abs() <= 1e-10, "{i}: {brute} vs {}", b[i]);
        }
    }

    #[test]
    fn bnet_from_psi_moments_matches_exact_pg() {
        let pg = exact_pg();
        let l = pg.branch_matrix().unwrap();
        let b = pg.mass().solve_matrix(&l);
        let bnet = OperatorModel::BNet(BNet::from_matrix(pg.basis().clone(), pg.sensor_rule().clone(), b).unwrap());
        let pgm = OperatorModel::PgVarmion(pg);
        let mut rng = SampleRng::new(2);
        let f: Vec<f64> = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let (a, c) = (pgm.evaluate(&f, &x).unwrap(), bnet.evaluate(&f, &x).unwrap());
        for p in 0..x.len() {
            assert!((a[p] - c[p]).abs() <= 1e-10 * (1.0 + a[p].abs()));
        }
    }

    #[test]
    fn recovered_psi_with_identity_mass_is_net_output() {
        let m = &models()[0];
        let pg = m.as_pg().unwrap();
        let psi = pg.recover_psi();
        let x = [0.0, 0.2, 0.5, 1.0];
        let out = pg.net().unwrap().forward_points(&x).unwrap();
        for i in 0..10 {
            let v = psi[i].values(&x);
            for p in 0..4 {
                assert!((v[p] - out[(p, i)]).abs() < 1e-9 * (1.0 + out[(p, i)].abs()));
            }
            assert!(v[0].abs() < 1e-12 && v[3].abs() < 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let m = &models()[1];
        let f = vec![0.3; 40];
        let x = [0.4];
        let u = m.evaluate(&f, &x).unwrap()[0];
        let batch = [LossPoint { sensors: &f, x: &x, label: u }];
        assert_eq!(training_loss(m, &batch).unwrap(), 0.0);
        let zero = vec![0.0; 40];
        let ones: Vec<LossPoint> = (0..5).map(|_| LossPoint { sensors: &zero, x: &x, label: 1.0 }).collect();
        assert_eq!(training_loss(m, &ones).unwrap(), 1.0);
        assert!(matches!(training_loss(m, &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn boundary_term() {
        let pg = exact_pg().with_boundary_rule(crate::quadrature::interval_ends(0.0, 1.0).unwrap()).unwrap();
        let f = vec![0.0; 40];
        // exact psi vanish on the boundary, so the term is zero
        let beta = pg.pg_branch(&f, Some(&[1.0, -2.0])).unwrap();
        assert!(beta.amax() < 1e-12);
        assert!(pg.pg_branch(&f, Some(&[1.0])).is_err());
        assert!(exact_pg().pg_branch(&f, Some(&[1.0, 1.0])).is_err());
        assert!(pg.pg_branch(&[0.0; 3], None).is_err());
    }

    #[test]
    fn set_params_round_trip() {
        for mut m in models() {
            let mut p = m.params();
            p.iter_mut().for_each(|v| *v *= 2.0);
            m.set_params(&p).unwrap();
            assert_eq!(m.params(), p);
            assert!(m.set_params(&p[1..]).is_err());
        }
    }
}
