//! A small fully connected network with the hat activation and a boundary
//! cut-off, reverse-mode gradients, and AdamW.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SampleRng;

/// `relu(z) - relu(2z - 2) + relu(z - 2)`: zero outside `[0, 2]`, peak 1 at `z = 1`.
pub fn hat(z: f64) -> f64 {
    z.max(0.0) - (2.0 * z - 2.0).max(0.0) + (z - 2.0).max(0.0)
}

/// Derivative of [`hat`] with `relu'(0) = 0`.
pub fn hat_derivative(z: f64) -> f64 {
    if z > 0.0 && z <= 1.0 {
        1.0
    } else if z > 1.0 && z <= 2.0 {
        -1.0
    } else {
        0.0
    }
}

/// `g(x) = 1 + (e^{px} + e^{-p(x-1)}) / (1 - e^p)` on `[0, 1]`.
///
/// Evaluated through the symmetric form in `t = min(x, 1 - x)` with only
/// non-positive exponents, so large `p` neither overflows nor loses the tiny
/// boundary values.
pub fn cutoff_1d(x: f64, p: f64) -> f64 {
    let t = x.min(1.0 - x);
    let num = -(-p * t).exp_m1() - (-p * (1.0 - t)).exp() - (-p).exp();
    num / -(-p).exp_m1()
}

/// `prod_d g(x_d)`.
pub fn cutoff(x: &[f64], p: f64) -> f64 {
    x.iter().map(|&xi| cutoff_1d(xi, p)).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Hat,
}

/// Fully connected network. Parameters are stored flat, layer by layer:
/// the weight matrix `W_l` (`out x in`, row-major) followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    final_bias: bool,
    cutoff: Option<f64>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    inputs: DMatrix<f64>,
    /// Pre-activations per layer, `batch x width`.
    pre: Vec<DMatrix<f64>>,
    /// Cut-off factor per point.
    gate: Vec<f64>,
}

pub fn parameter_count(dims: &[usize], final_bias: bool) -> usize {
    let mut n: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if !final_bias {
        n -= dims.last().copied().unwrap_or(0);
    }
    n
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(dims: Vec<usize>, final_bias: bool, cutoff: Option<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad layer dimensions {dims:?}")));
        }
        if let Some(p) = cutoff {
            if !(p > 0.0) {
                return Err(Error::invalid(format!("cut-off sharpness must be positive, got {p}")));
            }
        }
        let n = parameter_count(&dims, final_bias);
        Ok(Self {
            dims,
            final_bias,
            cutoff,
            activation: Activation::Hat,
            params: vec![0.0; n],
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(dims: Vec<usize>, final_bias: bool, cutoff: Option<f64>, rng: &mut SampleRng) -> Result<Self> {
        let mut net = Self::zeros(dims, final_bias, cutoff)?;
        let mut off = 0;
        for l in 0..net.layers() {
            let (fan_in, out) = (net.dims[l], net.dims[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let count = fan_in * out + if net.has_bias(l) { out } else { 0 };
            for p in &mut net.params[off..off + count] {
                *p = rng.uniform(-bound, bound);
            }
            off += count;
        }
        Ok(net)
    }

    pub fn from_parts(
        dims: Vec<usize>,
        final_bias: bool,
        cutoff: Option<f64>,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, final_bias, cutoff)?;
        if params.len() != net.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn final_bias(&self) -> bool {
        self.final_bias
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn has_bias(&self, l: usize) -> bool {
        l + 1 < self.layers() || self.final_bias
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn offsets(&self, l: usize) -> (usize, Option<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.dims[k] * self.dims[k + 1] + if self.has_bias(k) { self.dims[k + 1] } else { 0 };
        }
        let b = self.has_bias(l).then_some(off + self.dims[l] * self.dims[l + 1]);
        (off, b)
    }

    /// `W_l^T` as an `in x out` view.
    fn weights_t(&self, l: usize) -> DMatrixView<'_, f64> {
        let (w, _) = self.offsets(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        DMatrixView::from_slice(&self.params[w..w + i * o], i, o)
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} coordinates, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Outputs for each row of `x` (`batch x d`), as `batch x N`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)
    }

    /// Outputs at flat points (`d` coordinates each).
    pub fn forward_points(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.input_dim();
        if !points.len().is_multiple_of(d) {
            return Err(Error::invalid("point list length is not a multiple of the input dimension"));
        }
        self.forward(&DMatrix::from_row_slice(points.len() / d, d, points))
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>, cache: &mut ForwardCache) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        cache.inputs = x.clone();
        cache.pre.clear();
        let mut a = x.clone();
        for l in 0..self.layers() {
            let mut z = &a * self.weights_t(l);
            if let (_, Some(b)) = self.offsets(l) {
                let bias = &self.params[b..b + self.dims[l + 1]];
                for (mut col, bj) in z.column_iter_mut().zip(bias) {
                    col.add_scalar_mut(*bj);
                }
            }
            if l + 1 < self.layers() {
                a = z.map(hat);
                cache.pre.push(z);
            } else {
                cache.pre.push(z.clone());
                a = z;
            }
        }
        cache.gate = match self.cutoff {
            Some(p) => x.row_iter().map(|r| cutoff(r.clone_owned().as_slice(), p)).collect(),
            None => vec![1.0; x.nrows()],
        };
        for (mut row, g) in a.row_iter_mut().zip(&cache.gate) {
            row *= *g;
        }
        Ok(a)
    }

    /// Gradient of `sum_{b,i} cot[b,i] * out[b,i]` with respect to the
    /// parameters, accumulated into `grad`.
    pub fn backward(&self, cache: &ForwardCache, cotangent: &DMatrix<f64>, grad: &mut [f64]) -> Result<()> {
        let batch = cache.inputs.nrows();
        if cotangent.nrows() != batch || cotangent.ncols() != self.output_dim() {
            return Err(Error::shape(format!(
                "cotangent is {}x{}, expected {}x{}",
                cotangent.nrows(),
                cotangent.ncols(),
                batch,
                self.output_dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::shape("gradient buffer has the wrong length"));
        }
        let mut dz = cotangent.clone();
        for (mut row, g) in dz.row_iter_mut().zip(&cache.gate) {
            row *= *g;
        }
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let input = if l == 0 {
                cache.inputs.clone()
            } else {
                cache.pre[l - 1].map(hat)
            };
            {
                let mut gw = DMatrixViewMut::from_slice(&mut grad[w_off..w_off + i * o], i, o);
                gw.gemm_tr(1.0, &input, &dz, 1.0);
            }
            if let Some(b) = b_off {
                for (j, col) in dz.column_iter().enumerate() {
                    grad[b + j] += col.sum();
                }
            }
            if l > 0 {
                let mut da = &dz * self.weights_t(l).transpose();
                da.zip_apply(&cache.pre[l - 1], |d, z| *d *= hat_derivative(z));
                dz = da;
            }
        }
        Ok(())
    }
}

/// Step decay `lr0 * gamma^floor(epoch / step)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub initial: f64,
    pub step: usize,
    pub gamma: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { initial: 1e-3, step: 100, gamma: 0.75 }
    }
}

impl StepSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        self.initial * self.gamma.powi((epoch / self.step.max(1)) as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: StepSchedule,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
            schedule: StepSchedule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    lr: f64,
}

impl OptimizerState {
    pub fn new(n: usize, config: AdamWConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr: config.schedule.initial,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.config.schedule.rate(epoch);
    }

    /// One AdamW update with decoupled weight decay and bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("parameter, gradient and moment lengths differ"));
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            params[k] -= self.lr * (c.weight_decay * params[k] + mh / (vh.sqrt() + c.eps));
        }
        Ok(())
    }
}
