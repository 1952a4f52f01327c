//! Labeled datasets and the training loop.
//!
//! Every model is `u(x) = theta(x)^T L F` (see [`crate::models`]). For a batch
//! of (function `j`, node `l`) pairs with residuals `r = C_j . theta_l - u_jl`,
//! `C = L F_J`, the loss gradient is
//!
//! ```text
//! dC_j     += (2/B) r theta_l
//! dtheta_l += (2/B) r C_j
//! dL        = dC F_J^T
//! ```
//!
//! which the models turn into parameter gradients. This is exactly the
//! gradient of the pointwise loss, at the cost of one pass over the sensor
//! nodes per batch instead of one per point.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingRecord, ForcingSample};
use crate::models::{ModelKind, OperatorModel, Tape};
use crate::nn::{AdamWConfig, OptimizerState};
use crate::problem::{sample_seed, NodeSet, Problem, ProblemTag, Split};
use crate::quadrature::RuleDescriptor;
use crate::rng::SampleRng;

/// Forcings, sensor vectors and labels for one split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub problem: ProblemTag,
    pub split: Split,
    pub seed: u64,
    pub sensor_rule: RuleDescriptor,
    pub output_rule: RuleDescriptor,
    pub forcings: Vec<ForcingRecord>,
    /// `N_s x N_f`, one column per sample.
    pub sensors: DMatrix<f64>,
    /// `N_o x N_f`, one column per sample.
    pub labels: DMatrix<f64>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.forcings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forcings.is_empty()
    }

    pub fn sensor_vector(&self, j: usize) -> &[f64] {
        let n = self.sensors.nrows();
        &self.sensors.as_slice()[j * n..(j + 1) * n]
    }

    pub fn label_vector(&self, j: usize) -> &[f64] {
        let n = self.labels.nrows();
        &self.labels.as_slice()[j * n..(j + 1) * n]
    }

    pub fn forcing(&self, j: usize) -> Result<ForcingSample> {
        ForcingSample::from_record(&self.forcings[j])
    }

    /// The first `n` samples.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::invalid(format!("requested {n} samples from a dataset of {}", self.len())));
        }
        Ok(Self {
            forcings: self.forcings[..n].to_vec(),
            sensors: self.sensors.columns(0, n).into_owned(),
            labels: self.labels.columns(0, n).into_owned(),
            ..self.clone()
        })
    }

    pub fn output_nodes(&self) -> Result<NodeSet> {
        NodeSet::from_descriptor(&self.output_rule)
    }
}

/// `count` samples of `split`, sample `j` drawn with seed `sample_seed(seed, split, j)`.
/// Samples are solved in parallel; the result does not depend on thread count.
pub fn build_dataset(problem: &Problem, split: Split, count: usize, seed: u64) -> Result<LabeledDataset> {
    if count > u32::MAX as usize {
        return Err(Error::invalid("too many samples"));
    }
    if seed >= 1 << 28 {
        return Err(Error::invalid("dataset seed must be below 2^28"));
    }
    if let ProblemTag::Advdiff2d = problem.tag() {
        problem.solver_2d()?;
    }
    let forcings = (0..count)
        .into_par_iter()
        .map(|j| {
            problem
                .forcing(split, sample_seed(seed, split, j as u32))
                .map_err(|e| Error::Sample { index: j, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    dataset_from_forcings(problem, split, seed, &forcings)
}

/// Labels the given forcings.
pub fn dataset_from_forcings(
    problem: &Problem,
    split: Split,
    seed: u64,
    forcings: &[ForcingSample],
) -> Result<LabeledDataset> {
    let rows = forcings
        .par_iter()
        .enumerate()
        .map(|(j, f)| {
            let wrap = |e: Error| Error::Sample { index: j, source: Box::new(e) };
            let u = problem.reference(f).map_err(wrap)?;
            let labels = problem.outputs().sample(&u);
            if labels.iter().any(|v| !v.is_finite()) {
                return Err(wrap(Error::Solver("non-finite label".into())));
            }
            Ok((f.record().map_err(wrap)?, problem.sensors().sample(f), labels))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ns, no) = (problem.sensors().len(), problem.outputs().len());
    let mut sensors = DMatrix::zeros(ns, rows.len());
    let mut labels = DMatrix::zeros(no, rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for (j, (rec, f, u)) in rows.into_iter().enumerate() {
        sensors.column_mut(j).copy_from_slice(&f);
        labels.column_mut(j).copy_from_slice(&u);
        records.push(rec);
    }
    Ok(LabeledDataset {
        problem: problem.tag(),
        split,
        seed,
        sensor_rule: problem.sensors().rule().descriptor().clone(),
        output_rule: problem.outputs().rule().descriptor().clone(),
        forcings: records,
        sensors,
        labels,
    })
}

/// How an epoch is cut into batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "unit", content = "size")]
pub enum BatchMode {
    /// Fixed number of shuffled (function, node) pairs.
    Points(usize),
    /// All sampled nodes of a fixed number of shuffled functions.
    Functions(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: BatchMode,
    /// Output nodes drawn per function and epoch (`N_r`).
    pub nodes_per_function: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    /// Checkpoint cadence in epochs.
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    /// Settings of the published experiments.
    pub fn paper(tag: ProblemTag) -> Self {
        let (epochs, batch, nr) = match tag {
            ProblemTag::Diffusion1d => (1000, BatchMode::Points(8000), 20),
            ProblemTag::Advdiff1d => (2000, BatchMode::Points(12000), 30),
            ProblemTag::Advdiff2d => (900, BatchMode::Functions(200), 60),
        };
        Self {
            epochs,
            batch,
            nodes_per_function: nr,
            optimizer: AdamWConfig::default(),
            seed: 0,
            checkpoint_every: Some(100),
        }
    }

    /// Shortened run: 200 epochs, otherwise as [`TrainConfig::paper`]
    /// except that 2D batches hold 200 (function, node) pairs. On a
    /// 500-function set, 200-function batches leave 3 steps per epoch.
    pub fn desk(tag: ProblemTag) -> Self {
        let paper = Self::paper(tag);
        let batch = match tag {
            ProblemTag::Advdiff2d => BatchMode::Points(200),
            _ => paper.batch,
        };
        Self { epochs: 200, batch, ..paper }
    }

    /// Optimizer steps per epoch on `n` functions.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        match self.batch {
            BatchMode::Points(b) => (n * self.nodes_per_function).div_ceil(b.max(1)),
            BatchMode::Functions(b) => n.div_ceil(b.max(1)),
        }
    }

    /// Stretches epochs and the decay schedule so that `size` functions get
    /// about as many optimizer steps as `full` functions under `self`.
    pub fn with_step_budget(&self, full: usize, size: usize) -> Self {
        let k = (self.steps_per_epoch(full) as f64 / self.steps_per_epoch(size).max(1) as f64).round().max(1.0) as usize;
        let mut c = self.clone();
        c.epochs *= k;
        c.optimizer.schedule.step *= k;
        c.checkpoint_every = c.checkpoint_every.map(|e| e * k);
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean squared residual over all pairs of the epoch, before each step.
    pub loss: f64,
}

const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0000;

/// Trains `model` in place on `data`.
pub fn train(model: &mut OperatorModel, data: &LabeledDataset, config: &TrainConfig) -> Result<Vec<EpochRecord>> {
    train_with(model, data, config, |_, _| Ok(()))
}

/// As [`train`], calling `checkpoint(epoch, model)` after every
/// `checkpoint_every` completed epochs.
pub fn train_with(
    model: &mut OperatorModel,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut checkpoint: impl FnMut(usize, &OperatorModel) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training set".into()));
    }
    if !model.is_trainable() {
        return Err(Error::invalid("model has no trainable parameters"));
    }
    if data.sensors.nrows() != model.sensor_rule().len() {
        return Err(Error::shape("dataset sensor count differs from the model"));
    }
    let outputs = data.output_nodes()?;
    let n_o = outputs.len();
    let nr = config.nodes_per_function;
    if nr == 0 || nr > n_o {
        return Err(Error::invalid(format!("cannot draw {nr} of {n_o} output nodes")));
    }
    let batch_size = match config.batch {
        BatchMode::Points(b) | BatchMode::Functions(b) => b,
    };
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let points = outputs.rule().nodes();
    // features transposed, one contiguous column per node
    let fixed_t = model.fixed_features(points).map(|t| t.transpose());
    let mut opt = OptimizerState::new(model.num_params(), config.optimizer);
    let mut rng = SampleRng::new(config.seed ^ TRAIN_STREAM);
    let mut tape = Tape::default();
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut scratch = Vec::new();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.set_epoch(epoch);
        let nodes: Vec<Vec<usize>> = (0..data.len()).map(|_| rng.choose_distinct(n_o, nr, &mut scratch)).collect();
        let batches: Vec<Vec<(usize, usize)>> = match config.batch {
            BatchMode::Points(b) => {
                let mut pairs: Vec<(usize, usize)> =
                    nodes.iter().enumerate().flat_map(|(j, ls)| ls.iter().map(move |&l| (j, l))).collect();
                rng.shuffle(&mut pairs);
                pairs.chunks(b).map(<[_]>::to_vec).collect()
            }
            BatchMode::Functions(b) => {
                let mut order: Vec<usize> = (0..data.len()).collect();
                rng.shuffle(&mut order);
                order
                    .chunks(b)
                    .map(|js| js.iter().flat_map(|&j| nodes[j].iter().map(move |&l| (j, l))).collect())
                    .collect()
            }
        };
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let loss = batch_step(model, data, batch, points, fixed_t.as_ref(), &mut tape, &mut grad)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            epoch_loss += loss * batch.len() as f64;
            epoch_pairs += batch.len();
            opt.step(&mut params, &grad)?;
            model.set_params(&params)?;
        }
        history.push(EpochRecord {
            epoch,
            learning_rate: opt.learning_rate(),
            loss: epoch_loss / epoch_pairs as f64,
        });
        if let Some(k) = config.checkpoint_every {
            if k > 0 && (epoch + 1) % k == 0 {
                checkpoint(epoch + 1, model)?;
            }
        }
    }
    Ok(history)
}

/// Loss of one batch; overwrites `grad` with its gradient.
fn batch_step(
    model: &OperatorModel,
    data: &LabeledDataset,
    batch: &[(usize, usize)],
    points: &[f64],
    fixed_t: Option<&DMatrix<f64>>,
    tape: &mut Tape,
    grad: &mut [f64],
) -> Result<f64> {
    // local columns per distinct function and node, in first-seen order
    let mut local = HashMap::new();
    let mut funcs = Vec::new();
    let mut local_node = HashMap::new();
    let mut used = Vec::new();
    for &(j, l) in batch {
        local.entry(j).or_insert_with(|| {
            funcs.push(j);
            funcs.len() - 1
        });
        local_node.entry(l).or_insert_with(|| {
            used.push(l);
            used.len() - 1
        });
    }
    // trunk features are only needed at the batch's own nodes
    let d = model.spatial_dim();
    let sub: Vec<f64> = if fixed_t.is_none() {
        used.iter().flat_map(|&l| points[l * d..(l + 1) * d].iter().copied()).collect()
    } else {
        Vec::new()
    };
    let (l, theta) = model.forward_factors(&sub, tape)?;
    let theta_t = match (fixed_t, &theta) {
        (Some(_), _) => None,
        (None, Some(t)) => Some(t.transpose()),
        (None, None) => return Err(Error::invalid("model produced no features")),
    };
    let feature = |node: usize| match (&theta_t, fixed_t) {
        (Some(t), _) => t.column(local_node[&node]),
        (None, Some(t)) => t.column(node),
        (None, None) => unreachable!("checked above"),
    };
    let ns = data.sensors.nrows();
    let f_j = DMatrix::from_fn(ns, funcs.len(), |k, c| data.sensors[(k, funcs[c])]);
    let c = &l * &f_j;
    let k = c.nrows();
    let mut dc = DMatrix::zeros(k, funcs.len());
    let mut dtheta_t = theta_t.as_ref().map(|t| DMatrix::zeros(k, t.ncols()));
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(j, node) in batch {
        let jj = local[&j];
        let cj = c.column(jj);
        let th = feature(node);
        let r = cj.dot(&th) - data.labels[(node, j)];
        loss += r * r;
        dc.column_mut(jj).axpy(scale * r, &th, 1.0);
        if let Some(d) = dtheta_t.as_mut() {
            d.column_mut(local_node[&node]).axpy(scale * r, &cj, 1.0);
        }
    }
    let dl = dc * f_j.transpose();
    grad.fill(0.0);
    let dtheta = dtheta_t.map(|d| d.transpose());
    model.backward_factors(tape, &dl, dtheta.as_ref(), grad)?;
    Ok(loss / batch.len() as f64)
}

/// Model outputs at the dataset's output nodes, `N_o x N_f`.
pub fn predict(model: &OperatorModel, data: &LabeledDataset) -> Result<DMatrix<f64>> {
    let outputs = data.output_nodes()?;
    model.evaluate_batch(&data.sensors, outputs.rule().nodes())
}

/// One row of a training-size sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub size: usize,
    pub split: Split,
    /// Mean relative L2 error in percent on the output rule.
    pub mean_error: f64,
}

/// Trains a fresh model of `kind` on the first `size` training samples for
/// each size, and evaluates it on every test set. Sizes run in parallel.
///
/// Every size gets the optimizer-step budget of the whole training set (see
/// [`TrainConfig::with_step_budget`]); with fixed epochs and batch, a
/// 100-function run would take a tenth of the steps and mostly measure
/// undertraining.
pub fn training_size_sweep(
    problem: &Problem,
    kind: ModelKind,
    sizes: &[usize],
    train_set: &LabeledDataset,
    tests: &[LabeledDataset],
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let per_size = sizes
        .par_iter()
        .map(|&size| {
            let data = train_set.prefix(size)?;
            let mut model = OperatorModel::for_problem(problem, kind, config.seed)?;
            train(&mut model, &data, &config.with_step_budget(train_set.len(), size))?;
            tests
                .iter()
                .map(|t| {
                    let errs = crate::analysis::model_errors(&model, t)?;
                    Ok(SweepRow { model: kind, size, split: t.split, mean_error: crate::analysis::mean(&errs) })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_size.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LossPoint;

    fn small(tag: ProblemTag, n: usize) -> (Problem, LabeledDataset) {
        let p = Problem::new(tag).unwrap();
        let d = build_dataset(&p, Split::Train, n, 3).unwrap();
        (p, d)
    }

    #[test]
    fn dataset_shapes_and_determinism() {
        let (p, d) = small(ProblemTag::Diffusion1d, 12);
        assert_eq!((d.sensors.nrows(), d.labels.nrows(), d.len()), (40, 200, 12));
        let again = build_dataset(&p, Split::Train, 12, 3).unwrap();
        assert_eq!(d, again);
        let other = build_dataset(&p, Split::Test1, 12, 3).unwrap();
        assert_ne!(d.sensors, other.sensors);
        assert_eq!(d.prefix(5).unwrap().label_vector(4), d.label_vector(4));
    }

    #[test]
    fn forced_sine_labels_are_exact() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        let mut a = vec![0.0; 10];
        a[0] = 1.0;
        let f = ForcingSample::fourier_1d(a, vec![0.0; 10], 0).unwrap();
        let d = dataset_from_forcings(&p, Split::Train, 0, &[f]).unwrap();
        let k = 0.01 * std::f64::consts::PI.powi(2);
        for (l, x) in p.outputs().rule().nodes().iter().enumerate() {
            assert!((d.labels[(l, 0)] - (std::f64::consts::PI * x).sin() / k).abs() < 1e-10);
        }
    }

    /// The factored gradient equals central differences of the pointwise loss.
    #[test]
    fn batch_gradient_matches_finite_differences() {
        for tag in [ProblemTag::Diffusion1d, ProblemTag::Advdiff2d] {
            let (p, d) = small(tag, 3);
            let points = d.output_nodes().unwrap().rule().nodes().to_vec();
            let dim = tag.spatial_dim();
            let mut rng = SampleRng::new(9);
            let batch: Vec<(usize, usize)> = (0..40).map(|_| (rng.index(3), rng.index(d.labels.nrows()))).collect();
            for kind in ModelKind::ALL {
                let model = OperatorModel::for_problem(&p, kind, 5).unwrap();
                let fixed = model.fixed_features(&points).map(|t| t.transpose());
                let mut grad = vec![0.0; model.num_params()];
                let loss = batch_step(&model, &d, &batch, &points, fixed.as_ref(), &mut Tape::default(), &mut grad).unwrap();
                let pointwise = |m: &OperatorModel| {
                    let lp: Vec<LossPoint> = batch
                        .iter()
                        .map(|&(j, l)| LossPoint {
                            sensors: d.sensor_vector(j),
                            x: &points[l * dim..(l + 1) * dim],
                            label: d.labels[(l, j)],
                        })
                        .collect();
                    crate::models::training_loss(m, &lp).unwrap()
                };
                assert!((loss - pointwise(&model)).abs() <= 1e-12 * loss.max(1.0));
                let base = model.params();
                for _ in 0..12 {
                    let i = rng.index(base.len());
                    let h = 1e-6 * (1.0 + base[i].abs());
                    let mut m2 = model.clone();
                    let mut q = base.clone();
                    q[i] += h;
                    m2.set_params(&q).unwrap();
                    let up = pointwise(&m2);
                    q[i] -= 2.0 * h;
                    m2.set_params(&q).unwrap();
                    let down = pointwise(&m2);
                    let fd = (up - down) / (2.0 * h);
                    let tol = 1e-5 * (grad[i].abs() + fd.abs()) + 1e-9 * loss;
                    assert!((fd - grad[i]).abs() <= tol, "{tag} {kind} param {i}: fd {fd} vs {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_history_and_coverage() {
        let (p, d) = small(ProblemTag::Diffusion1d, 20);
        let cfg = TrainConfig { epochs: 3, batch: BatchMode::Points(64), ..TrainConfig::paper(ProblemTag::Diffusion1d) };
        let run = || {
            let mut m = OperatorModel::for_problem(&p, ModelKind::PgVarmion, 1).unwrap();
            let h = train(&mut m, &d, &cfg).unwrap();
            (h, m.params())
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.len(), 3);
    }

    #[test]
    fn loss_drops_in_early_epochs() {
        let (p, d) = small(ProblemTag::Diffusion1d, 200);
        let cfg = TrainConfig { epochs: 10, batch: BatchMode::Points(400), ..TrainConfig::paper(ProblemTag::Diffusion1d) };
        let mut m = OperatorModel::for_problem(&p, ModelKind::PgVarmion, 2).unwrap();
        let h = train(&mut m, &d, &cfg).unwrap();
        assert!(h[9].loss < h[0].loss, "{:?}", h);
    }

    #[test]
    fn non_finite_labels_abort_training() {
        let (p, mut d) = small(ProblemTag::Diffusion1d, 4);
        d.labels.fill(f64::NAN);
        let mut m = OperatorModel::for_problem(&p, ModelKind::BNet, 2).unwrap();
        let err = train(&mut m, &d, &TrainConfig::desk(ProblemTag::Diffusion1d)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0 }));
    }

    #[test]
    fn checkpoint_cadence() {
        let (p, d) = small(ProblemTag::Diffusion1d, 4);
        let cfg = TrainConfig { epochs: 5, checkpoint_every: Some(2), ..TrainConfig::desk(ProblemTag::Diffusion1d) };
        let mut m = OperatorModel::for_problem(&p, ModelKind::BNet, 2).unwrap();
        let mut seen = Vec::new();
        train_with(&mut m, &d, &cfg, |e, _| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4]);
    }

    #[test]
    fn function_batches_cover_every_function() {
        let (p, d) = small(ProblemTag::Advdiff2d, 5);
        let cfg = TrainConfig { epochs: 1, batch: BatchMode::Functions(2), ..TrainConfig::paper(ProblemTag::Advdiff2d) };
        let mut m = OperatorModel::for_problem(&p, ModelKind::BNet, 2).unwrap();
        let h = train(&mut m, &d, &cfg).unwrap();
        assert!(h[0].loss.is_finite());
    }

    #[test]
    fn empty_sweep() {
        let (p, d) = small(ProblemTag::Diffusion1d, 4);
        let rows = training_size_sweep(&p, ModelKind::BNet, &[], &d, &[], &TrainConfig::desk(ProblemTag::Diffusion1d)).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn step_budget_scaling() {
        let c = TrainConfig::paper(ProblemTag::Diffusion1d);
        assert_eq!((c.steps_per_epoch(4000), c.steps_per_epoch(100), c.steps_per_epoch(500)), (10, 1, 2));
        assert_eq!(c.with_step_budget(4000, 4000), c);
        let small = c.with_step_budget(4000, 100);
        assert_eq!((small.epochs, small.optimizer.schedule.step), (10_000, 1000));
        assert_eq!(c.with_step_budget(4000, 500).epochs, 5000);
        let f = TrainConfig::paper(ProblemTag::Advdiff2d);
        assert_eq!(f.with_step_budget(4000, 200).epochs, 900 * 20);
    }
}
