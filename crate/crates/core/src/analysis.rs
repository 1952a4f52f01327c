//! Error metrics and theory checks.
//!
//! Norms are discrete: `||v||^2 = sum_k w_k v(x_k)^2` on a quadrature rule.
//! Projections are taken in the same discrete norm that measures them, which
//! makes `||u - u_hat|| >= ||u - u_bar||` exact for outputs in the trial span
//! and the decomposition `E^2 = E_Phi^2 + E_Psi^2` an identity up to rounding.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{mass_matrix, moments, MassMatrix, TrialBasis};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::forcing::ForcingSample;
use crate::models::{OperatorModel, PgVarmion};
use crate::problem::{NodeSet, Problem, Split};
use crate::training::LabeledDataset;

/// Tolerance of the decomposition identity, relative to `E^2`.
pub const DECOMPOSITION_TOL: f64 = 1e-6;
/// Default finite-difference step for weighting-function gradients.
pub const H1_STEP: f64 = 1e-4;
/// Points per line in 2D slice exports.
pub const SLICE_POINTS: usize = 257;

fn weighted_norm(v: impl Iterator<Item = f64>, w: &[f64]) -> f64 {
    v.zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

/// `100 ||u - u_hat|| / ||u||` in the discrete norm with weights `w`.
pub fn relative_l2_error(u_hat: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
    if u_hat.len() != u.len() || u.len() != w.len() {
        return Err(Error::shape(format!("lengths {}, {}, {} differ", u_hat.len(), u.len(), w.len())));
    }
    let den = weighted_norm(u.iter().copied(), w);
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * weighted_norm(u.iter().zip(u_hat).map(|(a, b)| a - b), w) / den)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn per_sample(pred: &DMatrix<f64>, data: &LabeledDataset, w: &[f64]) -> Result<Vec<f64>> {
    (0..data.len())
        .map(|j| {
            relative_l2_error(pred.column(j).as_slice(), data.label_vector(j), w)
                .map_err(|e| Error::Sample { index: j, source: Box::new(e) })
        })
        .collect()
}

/// Per-sample model error in percent on the dataset's output rule.
pub fn model_errors(model: &OperatorModel, data: &LabeledDataset) -> Result<Vec<f64>> {
    let pred = crate::training::predict(model, data)?;
    let outputs = data.output_nodes()?;
    per_sample(&pred, data, outputs.rule().weights())
}

/// Best approximations of the labels in the trial span, at the output nodes.
pub fn projections(basis: &TrialBasis, data: &LabeledDataset) -> Result<DMatrix<f64>> {
    let outputs = data.output_nodes()?;
    let rule = outputs.rule();
    let mass = mass_matrix(basis, rule)?;
    let table = basis.table(rule.nodes());
    let mut wl = data.labels.clone();
    for (mut row, w) in wl.row_iter_mut().zip(rule.weights()) {
        row *= *w;
    }
    let coeffs = mass.solve_matrix(&(table.transpose() * wl));
    Ok(table * coeffs)
}

/// Per-sample projection error in percent on the dataset's output rule.
pub fn projection_errors(basis: &TrialBasis, data: &LabeledDataset) -> Result<Vec<f64>> {
    let outputs = data.output_nodes()?;
    per_sample(&projections(basis, data)?, data, outputs.rule().weights())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub index: usize,
    pub seed: u64,
    /// Percent.
    pub model_error: Option<f64>,
    /// Percent.
    pub projection_error: f64,
    /// `||u_bar - u_hat||` relative to `||u||`, percent; models in the trial span only.
    pub network_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(v: &[f64]) -> Self {
        Self {
            mean: mean(v),
            median: median(v),
            max: v.iter().copied().fold(f64::NAN, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub model: String,
    pub split: Split,
    pub dataset_digest: String,
    pub seed: u64,
    pub samples: Vec<SampleError>,
    pub model_summary: Option<Summary>,
    pub projection_summary: Summary,
    /// Samples with `||u - u_hat|| < ||u - u_bar||`.
    pub floor_violations: usize,
}

/// Errors of `model` (or the projection alone) on every sample of `data`.
pub fn error_report(model: Option<&OperatorModel>, basis: &TrialBasis, data: &LabeledDataset) -> Result<ErrorReport> {
    let outputs = data.output_nodes()?;
    let w = outputs.rule().weights();
    let proj = projections(basis, data)?;
    let pred = model.map(|m| crate::training::predict(m, data)).transpose()?;
    let in_span = model.is_some_and(|m| m.basis().is_some());
    let mut samples = Vec::with_capacity(data.len());
    let mut violations = 0;
    for j in 0..data.len() {
        let u = data.label_vector(j);
        let wrap = |e: Error| Error::Sample { index: j, source: Box::new(e) };
        let pe = relative_l2_error(proj.column(j).as_slice(), u, w).map_err(wrap)?;
        let (me, ne) = match &pred {
            Some(p) => {
                let me = relative_l2_error(p.column(j).as_slice(), u, w).map_err(wrap)?;
                // rounding slack only; the inequality is exact in the discrete norm
                if me < pe * (1.0 - 1e-10) - 1e-13 {
                    violations += 1;
                }
                let ne = in_span
                    .then(|| {
                        let d = weighted_norm(proj.column(j).iter().zip(p.column(j).iter()).map(|(a, b)| a - b), w);
                        100.0 * d / weighted_norm(u.iter().copied(), w)
                    });
                (Some(me), ne)
            }
            None => (None, None),
        };
        samples.push(SampleError { index: j, seed: data.forcings[j].seed, model_error: me, projection_error: pe, network_error: ne });
    }
    let pes: Vec<f64> = samples.iter().map(|s| s.projection_error).collect();
    let mes: Vec<f64> = samples.iter().filter_map(|s| s.model_error).collect();
    Ok(ErrorReport {
        model: model.map_or("projection".to_string(), |m| m.kind().label().to_string()),
        split: data.split,
        // empty for datasets holding custom forcings, which cannot be serialized
        dataset_digest: crate::io::dataset_digest(data).unwrap_or_default(),
        seed: data.seed,
        samples,
        model_summary: model.map(|_| Summary::of(&mes)),
        projection_summary: Summary::of(&pes),
        floor_violations: violations,
    })
}

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,seed,model_error_pct,projection_error_pct,network_error_pct\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
        for r in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{:.12e},{}",
                r.index,
                r.seed,
                opt(r.model_error),
                r.projection_error,
                opt(r.network_error)
            );
        }
        s
    }
}

/// `(E, E_Phi, E_Psi)` of one sample on a fine rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub e: f64,
    pub e_phi: f64,
    pub e_psi: f64,
    /// `|E^2 - E_Phi^2 - E_Psi^2| / E^2`.
    pub defect: f64,
    pub holds: bool,
}

/// Values, discrete projection and mass on one rule, shared across samples.
struct FineRule<'a> {
    nodes: &'a NodeSet,
    table: DMatrix<f64>,
    mass: MassMatrix,
}

impl<'a> FineRule<'a> {
    fn new(basis: &TrialBasis, nodes: &'a NodeSet) -> Result<Self> {
        Ok(Self { nodes, table: basis.table(nodes.rule().nodes()), mass: mass_matrix(basis, nodes.rule())? })
    }

    fn weights(&self) -> &[f64] {
        self.nodes.rule().weights()
    }

    fn project(&self, u: &[f64]) -> Vec<f64> {
        let c = self.mass.solve(&moments(u, &self.table, self.nodes.rule()));
        (&self.table * c).iter().copied().collect()
    }
}

fn decompose_on(fine: &FineRule<'_>, u: &[f64], u_hat: &[f64]) -> Decomposition {
    let w = fine.weights();
    let u_bar = fine.project(u);
    let diff = |a: &[f64], b: &[f64]| weighted_norm(a.iter().zip(b).map(|(x, y)| x - y), w);
    let (e, e_phi, e_psi) = (diff(u, u_hat), diff(u, &u_bar), diff(&u_bar, u_hat));
    let defect = if e > 0.0 { (e * e - e_phi * e_phi - e_psi * e_psi).abs() / (e * e) } else { 0.0 };
    Decomposition { e, e_phi, e_psi, defect, holds: defect <= DECOMPOSITION_TOL }
}

/// Error decomposition of `model` on forcing `f`, on the problem's analysis rule.
/// The model output must lie in the trial span.
pub fn error_decomposition(model: &OperatorModel, problem: &Problem, f: &ForcingSample) -> Result<Decomposition> {
    let basis = model.basis().ok_or_else(|| Error::invalid("decomposition needs a model in the trial span"))?;
    let fine = FineRule::new(basis, problem.analysis())?;
    decompose_sample(model, problem, &fine, f)
}

/// Sensor vector for the model's own rule, through the grid path when it is
/// the problem's rule.
fn model_sensors(model: &OperatorModel, problem: &Problem, f: &ForcingSample) -> Vec<f64> {
    if model.sensor_rule().descriptor() == problem.sensors().rule().descriptor() {
        problem.sensors().sample(f)
    } else {
        f.values(model.sensor_rule().nodes())
    }
}

fn decompose_sample(model: &OperatorModel, problem: &Problem, fine: &FineRule<'_>, f: &ForcingSample) -> Result<Decomposition> {
    let u = fine.nodes.sample(&problem.reference(f)?);
    let sensors = model_sensors(model, problem, f);
    let u_hat = model.evaluate(&sensors, fine.nodes.rule().nodes())?;
    Ok(decompose_on(fine, &u, &u_hat))
}

/// Decomposition for every sample of a dataset, in parallel.
pub fn decompose_dataset(model: &OperatorModel, problem: &Problem, data: &LabeledDataset) -> Result<Vec<Decomposition>> {
    let basis = model.basis().ok_or_else(|| Error::invalid("decomposition needs a model in the trial span"))?;
    let fine = FineRule::new(basis, problem.analysis())?;
    (0..data.len())
        .into_par_iter()
        .map(|j| {
            data.forcing(j)
                .and_then(|f| decompose_sample(model, problem, &fine, &f))
                .map_err(|e| Error::Sample { index: j, source: Box::new(e) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiModeError {
    pub mode: usize,
    pub l2: f64,
    pub l2_relative: f64,
    pub h1: f64,
    pub h1_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub modes: Vec<PsiModeError>,
}

impl PsiReport {
    pub fn mean_l2_relative(&self, modes: std::ops::RangeInclusive<usize>) -> f64 {
        let v: Vec<f64> = self.modes.iter().filter(|m| modes.contains(&m.mode)).map(|m| m.l2_relative).collect();
        mean(&v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,l2,l2_relative,h1,h1_relative\n");
        for m in &self.modes {
            let _ = writeln!(s, "{},{:.12e},{:.12e},{:.12e},{:.12e}", m.mode, m.l2, m.l2_relative, m.h1, m.h1_relative);
        }
        s
    }
}

/// Central differences along each axis at the nodes, with the step shrunk
/// near the boundary so the stencil stays in the unit cube.
fn gradient_fd(f: &dyn ScalarField, nodes: &NodeSet, h: f64) -> Vec<Vec<f64>> {
    let step = |t: f64| h.min(t).min(1.0 - t).max(f64::EPSILON);
    match nodes.axes() {
        None => {
            let x = nodes.rule().nodes();
            let hs: Vec<f64> = x.iter().map(|&t| step(t)).collect();
            let up: Vec<f64> = x.iter().zip(&hs).map(|(t, s)| t + s).collect();
            let dn: Vec<f64> = x.iter().zip(&hs).map(|(t, s)| t - s).collect();
            let (a, b) = (f.values(&up), f.values(&dn));
            vec![a.iter().zip(&b).zip(&hs).map(|((a, b), s)| (a - b) / (2.0 * s)).collect()]
        }
        Some((xs, ys)) => {
            let partial = |axis: usize| {
                let along = if axis == 0 { xs } else { ys };
                let hs: Vec<f64> = along.iter().map(|&t| step(t)).collect();
                let up: Vec<f64> = along.iter().zip(&hs).map(|(t, s)| t + s).collect();
                let dn: Vec<f64> = along.iter().zip(&hs).map(|(t, s)| t - s).collect();
                let (a, b) = if axis == 0 {
                    (f.grid_values(&up, ys), f.grid_values(&dn, ys))
                } else {
                    (f.grid_values(xs, &up), f.grid_values(xs, &dn))
                };
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for i in 0..xs.len() {
                    for j in 0..ys.len() {
                        let s = if axis == 0 { hs[i] } else { hs[j] };
                        out.push((a[(i, j)] - b[(i, j)]) / (2.0 * s));
                    }
                }
                out
            };
            vec![partial(0), partial(1)]
        }
    }
}

/// L2 and H1 errors of learned against true weighting functions on `nodes`,
/// gradients by central differences with step `h1_step`.
pub fn psi_error_report(
    learned: &[Arc<dyn ScalarField>],
    truth: &[Arc<dyn ScalarField>],
    nodes: &NodeSet,
    h1_step: f64,
) -> Result<PsiReport> {
    if learned.len() != truth.len() {
        return Err(Error::shape("learned and true weighting functions differ in number"));
    }
    if !(h1_step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let w = nodes.rule().weights();
    let modes = learned
        .par_iter()
        .zip(truth.par_iter())
        .enumerate()
        .map(|(i, (a, b))| {
            let (va, vb) = (nodes.sample(a.as_ref()), nodes.sample(b.as_ref()));
            let l2 = weighted_norm(va.iter().zip(&vb).map(|(x, y)| x - y), w);
            let norm = weighted_norm(vb.iter().copied(), w);
            let (ga, gb) = (gradient_fd(a.as_ref(), nodes, h1_step), gradient_fd(b.as_ref(), nodes, h1_step));
            let mut semi = 0.0;
            let mut semi_true = 0.0;
            for (da, db) in ga.iter().zip(&gb) {
                semi += weighted_norm(da.iter().zip(db).map(|(x, y)| x - y), w).powi(2);
                semi_true += weighted_norm(db.iter().copied(), w).powi(2);
            }
            let h1 = (l2 * l2 + semi).sqrt();
            let h1_norm = (norm * norm + semi_true).sqrt();
            PsiModeError { mode: i + 1, l2, l2_relative: l2 / norm, h1, h1_relative: h1 / h1_norm }
        })
        .collect();
    Ok(PsiReport { modes })
}

/// Per-sample terms of the a-posteriori bound
/// `E <= E_Phi + ||l_Psi - l_Psi_hat,h||_2 / sqrt(lambda_min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub e: f64,
    pub e_phi: f64,
    /// `||l_Psi - l_Psi_hat,h||_2`.
    pub load_gap: f64,
    pub bound: f64,
    /// `||f|| sum_i ||psi_i - psi_hat_i|| / sqrt(lambda_min)`; the constants
    /// of the full a-priori estimate are not evaluated.
    pub psi_term: f64,
    pub holds: bool,
}

pub fn theorem_bound_report(
    model: &PgVarmion,
    problem: &Problem,
    forcings: &[ForcingSample],
    true_psi: &[Arc<dyn ScalarField>],
) -> Result<Vec<BoundRecord>> {
    let nodes = problem.analysis();
    let fine = FineRule::new(model.basis(), nodes)?;
    let w = fine.weights();
    let psi_vals: Vec<Vec<f64>> = true_psi.iter().map(|p| nodes.sample(p.as_ref())).collect();
    let learned = model.recover_psi();
    let psi_gap: f64 = learned
        .iter()
        .zip(&psi_vals)
        .map(|(a, b)| weighted_norm(nodes.sample(a.as_ref()).iter().zip(b).map(|(x, y)| x - y), w))
        .sum();
    let mass = model.mass();
    let root = mass.lambda_min().sqrt();
    let op = OperatorModel::PgVarmion(model.clone());
    forcings
        .par_iter()
        .enumerate()
        .map(|(j, f)| {
            let run = || -> Result<BoundRecord> {
                let u = nodes.sample(&problem.reference(f)?);
                let fv = nodes.sample(f);
                let sensors = model_sensors(&op, problem, f);
                let u_hat = op.evaluate(&sensors, nodes.rule().nodes())?;
                let d = decompose_on(&fine, &u, &u_hat);
                let ell = DVector::from_iterator(
                    psi_vals.len(),
                    psi_vals.iter().map(|p| p.iter().zip(&fv).zip(w).map(|((a, b), w)| a * b * w).sum::<f64>()),
                );
                let ell_hat = mass.entries() * model.pg_branch(&sensors, None)?;
                let gap = (ell - ell_hat).norm();
                let bound = d.e_phi + gap / root;
                let f_norm = weighted_norm(fv.iter().copied(), w);
                Ok(BoundRecord {
                    e: d.e,
                    e_phi: d.e_phi,
                    load_gap: gap,
                    bound,
                    psi_term: f_norm * psi_gap / root,
                    holds: d.e <= bound,
                })
            };
            run().map_err(|e| Error::Sample { index: j, source: Box::new(e) })
        })
        .collect()
}

/// Mean relative errors (percent), one row per model plus the projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub splits: Vec<Split>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn comparison_table(basis: &TrialBasis, models: &[&OperatorModel], datasets: &[LabeledDataset]) -> Result<ComparisonTable> {
    let mut rows = vec![(
        "Projection".to_string(),
        datasets.iter().map(|d| Ok(mean(&projection_errors(basis, d)?))).collect::<Result<Vec<_>>>()?,
    )];
    for m in models {
        rows.push((
            m.kind().label().to_string(),
            datasets.iter().map(|d| Ok(mean(&model_errors(m, d)?))).collect::<Result<Vec<_>>>()?,
        ));
    }
    Ok(ComparisonTable { splits: datasets.iter().map(|d| d.split).collect(), rows })
}

impl ComparisonTable {
    pub fn get(&self, row: &str, split: Split) -> Option<f64> {
        let c = self.splits.iter().position(|s| *s == split)?;
        self.rows.iter().find(|(r, _)| r == row).map(|(_, v)| v[c])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for sp in &self.splits {
            let _ = write!(s, ",{sp}");
        }
        s.push('\n');
        for (name, v) in &self.rows {
            s.push_str(name);
            for x in v {
                let _ = write!(s, ",{x:.12e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<12}", "");
        for sp in &self.splits {
            let _ = write!(s, "{:>10}", sp.name());
        }
        s.push('\n');
        for (name, v) in &self.rows {
            let _ = write!(s, "{name:<12}");
            for x in v {
                let _ = write!(s, "{x:>10.2}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram_export(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram values".into()));
    }
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins && hi > lo { hi } else { lo + width * k as f64 }).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts, values: values.to_vec(), mean: mean(values) })
}

impl Histogram {
    /// Bin table followed by the raw values for a rug plot.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,lo,hi,count,value\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "bin,{:.12e},{:.12e},{c},", self.edges[k], self.edges[k + 1]);
        }
        for v in &self.values {
            let _ = writeln!(s, "value,,,,{v:.12e}");
        }
        s
    }
}

/// Uniform points per axis for weighting-function sample tables.
pub const PSI_GRID_1D: usize = 401;
pub const PSI_GRID_2D: usize = 41;

/// Indices of the `count` lowest-frequency components: all of them in 1D,
/// the leading `k x k` block of a tensor basis in 2D (`k^2 = count`).
pub fn lowest_modes(basis: &TrialBasis, count: usize) -> Result<Vec<usize>> {
    if basis.spatial_dim() == 1 {
        return Ok((0..count.min(basis.len())).collect());
    }
    let m = (basis.len() as f64).sqrt().round() as usize;
    let k = (count as f64).sqrt().round() as usize;
    if m * m != basis.len() || k * k != count || k > m {
        return Err(Error::invalid(format!("cannot pick {count} lowest modes of a {}-component basis", basis.len())));
    }
    Ok((0..k).flat_map(|i| (0..k).map(move |j| i * m + j)).collect())
}

/// Learned (and optionally true) weighting functions `modes` sampled on a
/// uniform grid over the closed unit interval or square.
pub fn psi_export(
    learned: &[Arc<dyn ScalarField>],
    truth: Option<&[Arc<dyn ScalarField>]>,
    modes: &[usize],
    dim: usize,
) -> Result<String> {
    if let Some(t) = truth {
        if t.len() != learned.len() {
            return Err(Error::shape("learned and true weighting functions differ in number"));
        }
    }
    if let Some(&bad) = modes.iter().find(|&&k| k >= learned.len()) {
        return Err(Error::invalid(format!("mode {bad} out of range")));
    }
    let n = if dim == 1 { PSI_GRID_1D } else { PSI_GRID_2D };
    let axis: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let pts: Vec<f64> = if dim == 1 {
        axis.clone()
    } else {
        axis.iter().flat_map(|&x| axis.iter().flat_map(move |&y| [x, y])).collect()
    };
    let mut cols = Vec::new();
    let mut s = String::from(if dim == 1 { "x" } else { "x,y" });
    for &k in modes {
        let _ = write!(s, ",psi_hat_{}", k + 1);
        cols.push(learned[k].values(&pts));
    }
    if let Some(t) = truth {
        for &k in modes {
            let _ = write!(s, ",psi_{}", k + 1);
            cols.push(t[k].values(&pts));
        }
    }
    s.push('\n');
    for (r, p) in pts.chunks(dim).enumerate() {
        let coords: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
        s.push_str(&coords.join(","));
        for c in &cols {
            let _ = write!(s, ",{:.12e}", c[r]);
        }
        s.push('\n');
    }
    Ok(s)
}

/// Values of 2D fields along `x = y`, `y = 1 - x`, `y = 1/2` and `x = 1/2`,
/// `SLICE_POINTS` each.
pub fn slice_export(fields: &[(&str, &dyn ScalarField)]) -> String {
    let n = SLICE_POINTS;
    let lines: [(&str, fn(f64) -> [f64; 2]); 4] = [
        ("diagonal", |t| [t, t]),
        ("anti-diagonal", |t| [t, 1.0 - t]),
        ("y=0.5", |t| [t, 0.5]),
        ("x=0.5", |t| [0.5, t]),
    ];
    let mut pts = Vec::with_capacity(2 * lines.len() * n);
    let mut labels = Vec::with_capacity(lines.len() * n);
    for (name, at) in lines {
        for k in 0..n {
            let t = k as f64 / (n - 1) as f64;
            pts.extend(at(t));
            labels.push((name, t));
        }
    }
    let cols: Vec<Vec<f64>> = fields.iter().map(|(_, f)| f.values(&pts)).collect();
    let mut s = String::from("line,s,x,y");
    for (name, _) in fields {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for (k, (line, t)) in labels.iter().enumerate() {
        let _ = write!(s, "{line},{t:.6},{:.6},{:.6}", pts[2 * k], pts[2 * k + 1]);
        for c in &cols {
            let _ = write!(s, ",{:.12e}", c[k]);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::models::ModelKind;
    use crate::problem::ProblemTag;
    use crate::quadrature::{gauss_legendre, QuadratureRule};
    use crate::reference::diffusion_psi_closed_form;
    use crate::training::build_dataset;
    use std::f64::consts::{PI, SQRT_2};
    use approx::assert_abs_diff_eq;

    #[test]
    fn psi_table_layout() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let m = OperatorModel::for_problem(&p, ModelKind::PgVarmion, 0).unwrap();
        let learned = m.as_pg().unwrap().recover_psi();
        let truth = p.true_psi().unwrap();
        let modes = lowest_modes(p.basis(), 10).unwrap();
        let csv = psi_export(&learned, Some(&truth), &modes, 1).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), PSI_GRID_1D + 1);
        assert_eq!(lines[0].split(',').count(), 21);
        let mid: Vec<f64> = lines[201].split(',').map(|v| v.parse().unwrap()).collect();
        assert_abs_diff_eq!(mid[0], 0.5);
        assert_abs_diff_eq!(mid[11], SQRT_2 / (PI * PI * 0.01), epsilon = 1e-9);

        let tensor = crate::basis::tensor_sine_basis_2d(10).unwrap();
        let low = lowest_modes(&tensor, 16).unwrap();
        assert_eq!(low.len(), 16);
        assert_eq!(&low[..5], &[0, 1, 2, 3, 10]);
        assert!(lowest_modes(&tensor, 15).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let u = [1.0, -2.0, 0.5];
        let w = [0.2, 0.5, 0.3];
        assert_eq!(relative_l2_error(&u, &u, &w).unwrap(), 0.0);
        assert!((relative_l2_error(&[0.0; 3], &u, &w).unwrap() - 100.0).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|v| 1.01 * v).collect();
        assert!((relative_l2_error(&scaled, &u, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(relative_l2_error(&u, &[0.0; 3], &w), Err(Error::ZeroReference)));
        assert!(relative_l2_error(&u, &u, &w[..2]).is_err());
    }

    fn exact_pg_on(problem: &Problem, sensors: QuadratureRule) -> OperatorModel {
        OperatorModel::PgVarmion(
            PgVarmion::with_fixed_weighting(
                problem.basis().clone(),
                problem.mass().clone(),
                sensors,
                diffusion_psi_closed_form(10, 0.01),
            )
            .unwrap(),
        )
    }

    fn exact_pg(problem: &Problem) -> OperatorModel {
        exact_pg_on(problem, problem.sensors().rule().clone())
    }

    #[test]
    fn decomposition_cases() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        // exact weighting and fine sensors: the model returns the projection
        let exact = exact_pg_on(&p, gauss_legendre(1000, 0.0, 1.0).unwrap());
        let f = p.forcing(Split::Test2, 11).unwrap();
        let d = error_decomposition(&exact, &p, &f).unwrap();
        // residual is sensor quadrature of a C2 spline forcing
        assert!(d.e_psi <= 1e-5 * d.e_phi, "{d:?}");
        assert!((d.e - d.e_phi).abs() <= 1e-6 * d.e);
        // forcing whose solution is in the span: no projection error
        let mut a = vec![0.0; 10];
        a[2] = 1.0;
        let inspan = ForcingSample::fourier_1d(a, vec![0.0; 10], 0).unwrap();
        let random = OperatorModel::for_problem(&p, ModelKind::PgVarmion, 3).unwrap();
        let d = error_decomposition(&random, &p, &inspan).unwrap();
        assert!(d.e_phi < 1e-12 * d.e && (d.e - d.e_psi).abs() < 1e-10 * d.e);
        // untrained model on a rough forcing: identity to 1e-6
        let d = error_decomposition(&random, &p, &f).unwrap();
        assert!(d.holds && d.defect < 1e-10, "{d:?}");
    }

    #[test]
    fn floor_and_report() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let data = build_dataset(&p, Split::Test3, 30, 1).unwrap();
        for kind in ModelKind::ALL {
            let m = OperatorModel::for_problem(&p, kind, 4).unwrap();
            let r = error_report(Some(&m), p.basis(), &data).unwrap();
            assert_eq!(r.floor_violations, 0);
            assert_eq!(r.samples.len(), 30);
            assert_eq!(r.samples[0].network_error.is_some(), kind != ModelKind::LDeepONet);
        }
        let exact = exact_pg(&p);
        let r = error_report(Some(&exact), p.basis(), &data).unwrap();
        for s in &r.samples {
            // exact weighting reproduces the projection up to sensor quadrature
            assert!((s.model_error.unwrap() - s.projection_error).abs() < 0.05 * s.projection_error + 1e-6);
        }
        let proj = error_report(None, p.basis(), &data).unwrap();
        assert!(proj.model_summary.is_none());
        assert_eq!(proj.to_csv().lines().count(), 31);
    }

    #[test]
    fn psi_report_zero_for_identical_fields() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let psi = diffusion_psi_closed_form(10, 0.01);
        let r = psi_error_report(&psi, &psi, p.analysis(), H1_STEP).unwrap();
        assert!(r.modes.iter().all(|m| m.l2 == 0.0 && m.h1 == 0.0));
    }

    #[test]
    fn fd_gradient_self_check() {
        let f = FnField::new(1, |x: &[f64]| SQRT_2 * (PI * x[0]).sin());
        let nodes = NodeSet::line(crate::quadrature::interval_ends(0.3, 0.7).unwrap());
        let g = gradient_fd(&f, &nodes, H1_STEP);
        assert!((g[0][0] - SQRT_2 * PI * (0.3 * PI).cos()).abs() < 1e-6);
        // H1 error of a known perturbation: psi + eps sin(2 pi x)
        let rule = NodeSet::line(gauss_legendre(400, 0.0, 1.0).unwrap());
        let a: Arc<dyn ScalarField> = Arc::new(FnField::new(1, |x: &[f64]| (PI * x[0]).sin()));
        let b: Arc<dyn ScalarField> = Arc::new(FnField::new(1, |x: &[f64]| (PI * x[0]).sin() + 1e-2 * (2.0 * PI * x[0]).sin()));
        let r = psi_error_report(&[b], &[a], &rule, H1_STEP).unwrap();
        let expect_l2 = 1e-2 / SQRT_2;
        let expect_h1 = 1e-2 * ((1.0 + 4.0 * PI * PI) / 2.0).sqrt();
        assert!((r.modes[0].l2 - expect_l2).abs() < 1e-12);
        assert!((r.modes[0].h1 - expect_h1).abs() < 1e-8);
    }

    #[test]
    fn bound_holds_for_exact_weighting() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let OperatorModel::PgVarmion(pg) = exact_pg(&p) else { unreachable!() };
        let fs: Vec<ForcingSample> = (0..5).map(|s| p.forcing(Split::Test1, s).unwrap()).collect();
        let psi = p.true_psi().unwrap();
        let recs = theorem_bound_report(&pg, &p, &fs, &psi).unwrap();
        for r in recs {
            assert!(r.holds, "{r:?}");
            assert!(r.psi_term < 1e-10);
            // tight: the gap only reflects sensor quadrature
            assert!(r.bound - r.e_phi < 1e-3 * r.e_phi + 1e-9);
        }
    }

    #[test]
    fn histogram_examples() {
        let h = histogram_export(&[0.5; 7], 4).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let v: Vec<f64> = (0..2000).map(|i| (i as f64).sqrt()).collect();
        let h = histogram_export(&v, 25).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 2000);
        assert_eq!(h.mean, mean(&v));
        assert!(histogram_export(&[], 3).is_err());
    }

    #[test]
    fn comparison_rows() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let sets: Vec<_> = [Split::Test1, Split::Test3].iter().map(|&s| build_dataset(&p, s, 10, 2).unwrap()).collect();
        let m = OperatorModel::for_problem(&p, ModelKind::BNet, 1).unwrap();
        let t = comparison_table(p.basis(), &[&m], &sets).unwrap();
        assert_eq!(t.rows.len(), 2);
        let proj = t.get("Projection", Split::Test3).unwrap();
        assert!(t.get("BNet", Split::Test3).unwrap() >= proj);
        let h = histogram_export(&model_errors(&m, &sets[1]).unwrap(), 10).unwrap();
        assert!((h.mean - t.get("BNet", Split::Test3).unwrap()).abs() < 1e-12);
        assert_eq!(t.to_csv().lines().count(), 3);
    }

    #[test]
    fn slices_cover_four_lines() {
        let f = FnField::new(2, |x: &[f64]| x[0] - x[1]);
        let csv = slice_export(&[("f", &f)]);
        assert_eq!(csv.lines().count(), 1 + 4 * SLICE_POINTS);
        assert!(csv.lines().nth(1).unwrap().starts_with("diagonal,0.000000,0.000000,0.000000,0.0"));
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("x=0.5,1.000000,0.500000,1.000000,"));
        let v: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v + 0.5).abs() < 1e-12);
    }
}
