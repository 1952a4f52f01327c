//! Gauss-Legendre rules, tensor products and related node sets.
//!
//! Nodes of a `d`-dimensional rule are stored flat, `d` coordinates per node.
//! Tensor rules are flattened row-major: node `i * ny + j` is `(x_i, y_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// How a rule was built; enough to rebuild it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RuleDescriptor {
    GaussLegendre { n: usize, a: f64, b: f64 },
    /// `n` equispaced interior nodes `a + (b-a) l/(n+1)` with trapezoid weights.
    TrapezoidInterior { n: usize, a: f64, b: f64 },
    /// Composite Gauss-Legendre with `n` nodes on each panel between `breaks`.
    CompositeGaussLegendre { breaks: Vec<f64>, n: usize },
    Tensor(Box<RuleDescriptor>, Box<RuleDescriptor>),
    /// The two endpoints of `[a, b]`, unit weights (counting measure).
    IntervalEnds { a: f64, b: f64 },
    /// `n`-point Gauss-Legendre on each edge of an axis-aligned rectangle.
    RectangleEdges { n: usize, x: (f64, f64), y: (f64, f64) },
}

impl RuleDescriptor {
    pub fn build(&self) -> Result<QuadratureRule> {
        match self {
            RuleDescriptor::GaussLegendre { n, a, b } => gauss_legendre(*n, *a, *b),
            RuleDescriptor::TrapezoidInterior { n, a, b } => trapezoid_interior(*n, *a, *b),
            RuleDescriptor::CompositeGaussLegendre { breaks, n } => {
                composite_gauss_legendre(breaks, *n)
            }
            RuleDescriptor::Tensor(x, y) => tensor_rule(&x.build()?, &y.build()?),
            RuleDescriptor::IntervalEnds { a, b } => interval_ends(*a, *b),
            RuleDescriptor::RectangleEdges { n, x, y } => rectangle_edges(*n, *x, *y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    descriptor: RuleDescriptor,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Flat node coordinates, `dim` per node.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn descriptor(&self) -> &RuleDescriptor {
        &self.descriptor
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_k w_k f(x_k)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Same as [`integrate`](Self::integrate) for values already sampled at the nodes.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, ascending.
fn gauss_legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Chebyshev-like initial guess for the (i+1)-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `n`-point Gauss-Legendre rule mapped affinely to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::invalid("Gauss-Legendre rule needs at least one node"));
    }
    if !(a < b) {
        return Err(Error::invalid(format!("empty interval [{a}, {b}]")));
    }
    let (t, w) = gauss_legendre_reference(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadratureRule {
        dim: 1,
        nodes: t.iter().map(|t| mid + half * t).collect(),
        weights: w.iter().map(|w| half * w).collect(),
        descriptor: RuleDescriptor::GaussLegendre { n, a, b },
    })
}

/// Composite Gauss-Legendre: `n` nodes on each panel `[breaks[i], breaks[i+1]]`.
pub fn composite_gauss_legendre(breaks: &[f64], n: usize) -> Result<QuadratureRule> {
    if breaks.len() < 2 {
        return Err(Error::invalid("composite rule needs at least two breakpoints"));
    }
    if breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("breakpoints must be strictly increasing"));
    }
    if n == 0 {
        return Err(Error::invalid("Gauss-Legendre rule needs at least one node"));
    }
    let (t, w) = gauss_legendre_reference(n);
    let mut nodes = Vec::with_capacity(n * (breaks.len() - 1));
    let mut weights = Vec::with_capacity(nodes.capacity());
    for panel in breaks.windows(2) {
        let half = 0.5 * (panel[1] - panel[0]);
        let mid = 0.5 * (panel[1] + panel[0]);
        nodes.extend(t.iter().map(|t| mid + half * t));
        weights.extend(w.iter().map(|w| half * w));
    }
    Ok(QuadratureRule {
        dim: 1,
        nodes,
        weights,
        descriptor: RuleDescriptor::CompositeGaussLegendre {
            breaks: breaks.to_vec(),
            n,
        },
    })
}

/// `n` equispaced interior nodes of `[a, b]` with weight `(b-a)/(n+1)` each.
///
/// This is the composite trapezoid rule on `n + 2` points with the two
/// endpoint nodes dropped, so it integrates functions that vanish at `a` and
/// `b`; the weights sum to `n/(n+1)` of the interval length.
pub fn trapezoid_interior(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::invalid("trapezoid rule needs at least one interior node"));
    }
    if !(a < b) {
        return Err(Error::invalid(format!("empty interval [{a}, {b}]")));
    }
    let h = (b - a) / (n as f64 + 1.0);
    Ok(QuadratureRule {
        dim: 1,
        nodes: (1..=n).map(|l| a + h * l as f64).collect(),
        weights: vec![h; n],
        descriptor: RuleDescriptor::TrapezoidInterior { n, a, b },
    })
}

/// Cartesian product of two one-dimensional rules.
pub fn tensor_rule(rule_x: &QuadratureRule, rule_y: &QuadratureRule) -> Result<QuadratureRule> {
    if rule_x.dim != 1 || rule_y.dim != 1 {
        return Err(Error::invalid(format!(
            "tensor product needs two 1D rules, got {}D x {}D",
            rule_x.dim, rule_y.dim
        )));
    }
    let n = rule_x.len() * rule_y.len();
    let mut nodes = Vec::with_capacity(2 * n);
    let mut weights = Vec::with_capacity(n);
    for (x, wx) in rule_x.nodes.iter().zip(&rule_x.weights) {
        for (y, wy) in rule_y.nodes.iter().zip(&rule_y.weights) {
            nodes.push(*x);
            nodes.push(*y);
            weights.push(wx * wy);
        }
    }
    Ok(QuadratureRule {
        dim: 2,
        nodes,
        weights,
        descriptor: RuleDescriptor::Tensor(
            Box::new(rule_x.descriptor.clone()),
            Box::new(rule_y.descriptor.clone()),
        ),
    })
}

/// Square `n x n` Gauss-Legendre rule on `[a, b]^2`.
pub fn gauss_legendre_square(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    let r = gauss_legendre(n, a, b)?;
    tensor_rule(&r, &r)
}

/// Boundary "rule" of an interval: both endpoints with unit weight.
pub fn interval_ends(a: f64, b: f64) -> Result<QuadratureRule> {
    if !(a < b) {
        return Err(Error::invalid(format!("empty interval [{a}, {b}]")));
    }
    Ok(QuadratureRule {
        dim: 1,
        nodes: vec![a, b],
        weights: vec![1.0, 1.0],
        descriptor: RuleDescriptor::IntervalEnds { a, b },
    })
}

/// Gauss-Legendre on each of the four edges of a rectangle, ordered
/// bottom, right, top, left.
pub fn rectangle_edges(n: usize, x: (f64, f64), y: (f64, f64)) -> Result<QuadratureRule> {
    let gx = gauss_legendre(n, x.0, x.1)?;
    let gy = gauss_legendre(n, y.0, y.1)?;
    let mut nodes = Vec::with_capacity(8 * n);
    let mut weights = Vec::with_capacity(4 * n);
    for (t, w) in gx.nodes.iter().zip(&gx.weights) {
        nodes.extend([*t, y.0]);
        weights.push(*w);
    }
    for (t, w) in gy.nodes.iter().zip(&gy.weights) {
        nodes.extend([x.1, *t]);
        weights.push(*w);
    }
    for (t, w) in gx.nodes.iter().zip(&gx.weights) {
        nodes.extend([*t, y.1]);
        weights.push(*w);
    }
    for (t, w) in gy.nodes.iter().zip(&gy.weights) {
        nodes.extend([x.0, *t]);
        weights.push(*w);
    }
    Ok(QuadratureRule {
        dim: 2,
        nodes,
        weights,
        descriptor: RuleDescriptor::RectangleEdges { n, x, y },
    })
}

/// Composite trapezoid rule with `intervals` panels on `[a, b]`, for a scalar function.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| f(a + h * i as f64)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}
