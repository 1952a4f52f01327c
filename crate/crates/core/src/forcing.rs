//! Forcing samples: random Fourier sums and Gaussian random fields, scaled so
//! that `max |f| = 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::rng::SampleRng;

pub const FOURIER_MODES: usize = 10;
pub const GRF_POINTS: usize = 257;

const GRID_1D: usize = 2001;
const GRID_2D: usize = 201;
const GRF_DENSE: usize = 4097;
const GRF_JITTER: f64 = 1e-10;
const GRF_MAX_JITTER: f64 = 1e-6;
const MIN_PEAK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ForcingFamily {
    Fourier1d,
    Fourier2d,
    Grf,
    /// Arbitrary caller-supplied field; not serializable.
    Custom,
}

impl ForcingFamily {
    pub fn code(self) -> u8 {
        match self {
            ForcingFamily::Fourier1d => 1,
            ForcingFamily::Fourier2d => 2,
            ForcingFamily::Grf => 3,
            ForcingFamily::Custom => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ForcingFamily::Fourier1d),
            2 => Some(ForcingFamily::Fourier2d),
            3 => Some(ForcingFamily::Grf),
            _ => None,
        }
    }
}

/// Natural cubic spline through equispaced values on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
    h: f64,
}

impl CubicSpline {
    pub fn natural(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 3 {
            return Err(Error::invalid("cubic spline needs at least 3 knots"));
        }
        let h = 1.0 / (n - 1) as f64;
        // Thomas algorithm for M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h^2
        let m = n - 2;
        let mut diag = vec![4.0; m];
        let mut rhs: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h))
            .collect();
        for i in 1..m {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        for i in (0..m).rev() {
            let next = if i + 1 < m { second[i + 2] } else { 0.0 };
            second[i + 1] = (rhs[i] - next) / diag[i];
        }
        Ok(Self { values, second, h })
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64 * self.h).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = (x / self.h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let a = (i + 1) as f64 - t;
        let b = 1.0 - a;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * self.h * self.h / 6.0
    }
}

#[derive(Clone)]
enum Kind {
    Fourier1d { amps: Vec<f64>, phases: Vec<f64> },
    /// Row-major over `(j, k)`.
    Fourier2d { amps: Vec<f64>, phase_x: Vec<f64>, phase_y: Vec<f64> },
    Grf { length_scale: f64, spline: CubicSpline },
    Custom { field: Arc<dyn ScalarField>, breaks: Vec<f64> },
}

/// A normalized forcing `f = D * g` where `g` is the raw draw.
#[derive(Clone)]
pub struct ForcingSample {
    kind: Kind,
    seed: u64,
    scale: f64,
}

impl std::fmt::Debug for ForcingSample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForcingSample")
            .field("family", &self.family())
            .field("seed", &self.seed)
            .field("scale", &self.scale)
            .finish()
    }
}

/// Serializable description of a forcing sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingRecord {
    pub family: ForcingFamily,
    pub seed: u64,
    pub length_scale: f64,
    pub scale: f64,
    /// Fourier 1D: `a_1, b_1, a_2, b_2, ...`; Fourier 2D: `a, b, c` per `(j, k)`;
    /// GRF: raw knot values.
    pub coefficients: Vec<f64>,
}

/// `f = D sum_j a_j sin(j pi x + b_j)` with `a_j ~ U[-2, 2]`, `b_j ~ U[-1, 1]`.
pub fn fourier_forcing_1d(seed: u64) -> Result<ForcingSample> {
    let mut s = seed;
    loop {
        let mut rng = SampleRng::new(s);
        let mut amps = Vec::with_capacity(FOURIER_MODES);
        let mut phases = Vec::with_capacity(FOURIER_MODES);
        for _ in 0..FOURIER_MODES {
            amps.push(rng.uniform(-2.0, 2.0));
            phases.push(rng.uniform(-1.0, 1.0));
        }
        match ForcingSample::fourier_1d(amps, phases, s) {
            Err(Error::InvalidArgument(_)) => s = s.wrapping_add(1),
            other => return other,
        }
    }
}

/// `f = D sum_{j,k} a_jk sin(j pi x + b_jk) sin(k pi y + c_jk)`.
pub fn fourier_forcing_2d(seed: u64) -> Result<ForcingSample> {
    let mut s = seed;
    loop {
        let mut rng = SampleRng::new(s);
        let n = FOURIER_MODES * FOURIER_MODES;
        let (mut a, mut b, mut c) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            a.push(rng.uniform(-2.0, 2.0));
            b.push(rng.uniform(-1.0, 1.0));
            c.push(rng.uniform(-1.0, 1.0));
        }
        match ForcingSample::fourier_2d(a, b, c, s) {
            Err(Error::InvalidArgument(_)) => s = s.wrapping_add(1),
            other => return other,
        }
    }
}

/// One GRF draw with a freshly factored covariance. Use [`GrfSampler`] for
/// many draws at the same length scale.
pub fn grf_forcing(length_scale: f64, seed: u64) -> Result<ForcingSample> {
    GrfSampler::new(length_scale)?.sample(seed)
}

/// Zero-mean Gaussian random field on a uniform grid with squared-exponential
/// covariance, interpolated by a natural cubic spline.
#[derive(Clone, Debug)]
pub struct GrfSampler {
    length_scale: f64,
    factor: DMatrix<f64>,
    jitter: f64,
}

pub fn squared_exponential(x: f64, y: f64, length_scale: f64) -> f64 {
    let d = (x - y) / length_scale;
    (-0.5 * d * d).exp()
}

impl GrfSampler {
    pub fn new(length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale <= 1.0) {
            return Err(Error::invalid(format!("length scale must be in (0, 1], got {length_scale}")));
        }
        let h = 1.0 / (GRF_POINTS - 1) as f64;
        let cov = DMatrix::from_fn(GRF_POINTS, GRF_POINTS, |i, j| {
            squared_exponential(i as f64 * h, j as f64 * h, length_scale)
        });
        let mut jitter = GRF_JITTER;
        loop {
            let mut k = cov.clone();
            for i in 0..GRF_POINTS {
                k[(i, i)] += jitter;
            }
            if let Some(ch) = k.cholesky() {
                return Ok(Self { length_scale, factor: ch.l(), jitter });
            }
            jitter *= 10.0;
            if jitter > GRF_MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::DegenerateCovariance { jitter: jitter / 10.0 });
            }
        }
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Raw (unnormalized) knot values for `seed`.
    pub fn raw_values(&self, seed: u64) -> Vec<f64> {
        let mut rng = SampleRng::new(seed);
        let z = DVector::from_fn(GRF_POINTS, |_, _| rng.normal());
        (&self.factor * z).iter().copied().collect()
    }

    pub fn sample(&self, seed: u64) -> Result<ForcingSample> {
        let mut s = seed;
        loop {
            match ForcingSample::grf(self.length_scale, self.raw_values(s), s) {
                Err(Error::InvalidArgument(_)) => s = s.wrapping_add(1),
                other => return other,
            }
        }
    }
}

fn peak(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn normalizer(raw_peak: f64) -> Result<f64> {
    if raw_peak < MIN_PEAK || !raw_peak.is_finite() {
        return Err(Error::invalid(format!("forcing peak {raw_peak:e} cannot be normalized")));
    }
    Ok(1.0 / raw_peak)
}

impl ForcingSample {
    /// From explicit coefficients; `D` chosen on a 2001-point grid.
    pub fn fourier_1d(amps: Vec<f64>, phases: Vec<f64>, seed: u64) -> Result<Self> {
        if amps.len() != phases.len() || amps.is_empty() {
            return Err(Error::shape("amplitude and phase lists must match"));
        }
        let mut s = Self {
            kind: Kind::Fourier1d { amps, phases },
            seed,
            scale: 1.0,
        };
        let grid = crate::field::uniform_grid(GRID_1D);
        s.scale = normalizer(peak(grid.iter().map(|&x| s.raw_1d(x))))?;
        Ok(s)
    }

    /// From explicit `(a, b, c)` coefficient lists over `(j, k)` row-major
    /// (length `m^2`); `D` chosen on a 201 x 201 grid.
    pub fn fourier_2d(amps: Vec<f64>, phase_x: Vec<f64>, phase_y: Vec<f64>, seed: u64) -> Result<Self> {
        let n = amps.len();
        let m = (n as f64).sqrt().round() as usize;
        if m * m != n || n == 0 || phase_x.len() != n || phase_y.len() != n {
            return Err(Error::shape("2D Fourier coefficients must be m x m triples"));
        }
        let mut s = Self {
            kind: Kind::Fourier2d { amps, phase_x, phase_y },
            seed,
            scale: 1.0,
        };
        let grid = crate::field::uniform_grid(GRID_2D);
        let raw = s.raw_2d_grid(&grid, &grid);
        s.scale = normalizer(raw.amax())?;
        Ok(s)
    }

    /// From raw knot values on the uniform 257-point grid.
    pub fn grf(length_scale: f64, raw: Vec<f64>, seed: u64) -> Result<Self> {
        let spline = CubicSpline::natural(raw)?;
        let dense = crate::field::uniform_grid(GRF_DENSE);
        let scale = normalizer(peak(dense.iter().map(|&x| spline.eval(x))))?;
        Ok(Self {
            kind: Kind::Grf { length_scale, spline },
            seed,
            scale,
        })
    }

    /// Wraps an arbitrary field with `D = 1`. `breaks` lists interior points
    /// where the field is not smooth (used to split integration panels).
    pub fn custom(field: Arc<dyn ScalarField>, breaks: Vec<f64>) -> Self {
        Self {
            kind: Kind::Custom { field, breaks },
            seed: 0,
            scale: 1.0,
        }
    }

    pub fn family(&self) -> ForcingFamily {
        match self.kind {
            Kind::Fourier1d { .. } => ForcingFamily::Fourier1d,
            Kind::Fourier2d { .. } => ForcingFamily::Fourier2d,
            Kind::Grf { .. } => ForcingFamily::Grf,
            Kind::Custom { .. } => ForcingFamily::Custom,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Normalization `D`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn length_scale(&self) -> Option<f64> {
        match self.kind {
            Kind::Grf { length_scale, .. } => Some(length_scale),
            _ => None,
        }
    }

    /// Points in `(0, 1)` where `f` has reduced smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Grf { spline, .. } => spline.knots(),
            Kind::Custom { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }

    /// `(D a_j, b_j)` pairs for a 1D Fourier forcing, `j = 1..`.
    pub fn fourier_modes_1d(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            Kind::Fourier1d { amps, phases } => {
                Some(amps.iter().zip(phases).map(|(a, b)| (self.scale * a, *b)).collect())
            }
            _ => None,
        }
    }

    /// `(D a_jk, b_jk, c_jk)` in row-major `(j, k)` order and the mode count per axis.
    pub fn fourier_modes_2d(&self) -> Option<(usize, Vec<(f64, f64, f64)>)> {
        match &self.kind {
            Kind::Fourier2d { amps, phase_x, phase_y } => {
                let m = (amps.len() as f64).sqrt().round() as usize;
                let terms = (0..amps.len())
                    .map(|i| (self.scale * amps[i], phase_x[i], phase_y[i]))
                    .collect();
                Some((m, terms))
            }
            _ => None,
        }
    }

    fn raw_1d(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Fourier1d { amps, phases } => amps
                .iter()
                .zip(phases)
                .enumerate()
                .map(|(j, (a, b))| a * ((j + 1) as f64 * PI * x + b).sin())
                .sum(),
            Kind::Grf { spline, .. } => spline.eval(x),
            Kind::Custom { field, .. } => field.value(&[x]),
            Kind::Fourier2d { .. } => f64::NAN,
        }
    }

    /// Unscaled values on the tensor grid `xs x ys` as an `nx x ny` matrix.
    fn raw_2d_grid(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Fourier2d { amps, phase_x, phase_y } => {
                let m = (amps.len() as f64).sqrt().round() as usize;
                // f = Sx * diag(a) * Sy^T with one column per (j, k) term
                let n = amps.len();
                let sx = DMatrix::from_fn(xs.len(), n, |p, t| {
                    amps[t] * ((t / m + 1) as f64 * PI * xs[p] + phase_x[t]).sin()
                });
                let sy = DMatrix::from_fn(ys.len(), n, |p, t| {
                    ((t % m + 1) as f64 * PI * ys[p] + phase_y[t]).sin()
                });
                sx * sy.transpose()
            }
            Kind::Custom { field, .. } => DMatrix::from_fn(xs.len(), ys.len(), |i, j| field.value(&[xs[i], ys[j]])),
            _ => DMatrix::from_element(xs.len(), ys.len(), f64::NAN),
        }
    }

    /// Values on a tensor grid, `nx x ny`, entry `(i, j) = f(xs_i, ys_j)`.
    pub fn grid_values_2d(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        self.raw_2d_grid(xs, ys) * self.scale
    }

    pub fn record(&self) -> Result<ForcingRecord> {
        let (length_scale, coefficients) = match &self.kind {
            Kind::Fourier1d { amps, phases } => {
                (0.0, amps.iter().zip(phases).flat_map(|(a, b)| [*a, *b]).collect())
            }
            Kind::Fourier2d { amps, phase_x, phase_y } => (
                0.0,
                (0..amps.len()).flat_map(|i| [amps[i], phase_x[i], phase_y[i]]).collect(),
            ),
            Kind::Grf { length_scale, spline } => (*length_scale, spline.values().to_vec()),
            Kind::Custom { .. } => {
                return Err(Error::UnsupportedForcing("custom fields cannot be serialized".into()))
            }
        };
        Ok(ForcingRecord {
            family: self.family(),
            seed: self.seed,
            length_scale,
            scale: self.scale,
            coefficients,
        })
    }

    /// Rebuilds a sample; the stored `D` is kept verbatim.
    pub fn from_record(rec: &ForcingRecord) -> Result<Self> {
        let c = &rec.coefficients;
        let kind = match rec.family {
            ForcingFamily::Fourier1d => {
                if !c.len().is_multiple_of(2) {
                    return Err(Error::Format("odd Fourier 1D coefficient count".into()));
                }
                Kind::Fourier1d {
                    amps: c.iter().step_by(2).copied().collect(),
                    phases: c.iter().skip(1).step_by(2).copied().collect(),
                }
            }
            ForcingFamily::Fourier2d => {
                if !c.len().is_multiple_of(3) {
                    return Err(Error::Format("Fourier 2D coefficients must come in triples".into()));
                }
                Kind::Fourier2d {
                    amps: c.iter().step_by(3).copied().collect(),
                    phase_x: c.iter().skip(1).step_by(3).copied().collect(),
                    phase_y: c.iter().skip(2).step_by(3).copied().collect(),
                }
            }
            ForcingFamily::Grf => Kind::Grf {
                length_scale: rec.length_scale,
                spline: CubicSpline::natural(c.clone()).map_err(|e| Error::Format(e.to_string()))?,
            },
            ForcingFamily::Custom => {
                return Err(Error::Format("custom forcing has no record form".into()))
            }
        };
        Ok(Self {
            kind,
            seed: rec.seed,
            scale: rec.scale,
        })
    }
}

impl ScalarField for ForcingSample {
    fn dim(&self) -> usize {
        match &self.kind {
            Kind::Fourier2d { .. } => 2,
            Kind::Custom { field, .. } => field.dim(),
            _ => 1,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Fourier2d { .. } => self.raw_2d_grid(&x[..1], &x[1..2])[(0, 0)] * self.scale,
            Kind::Custom { field, .. } => field.value(x),
            _ => self.scale * self.raw_1d(x[0]),
        }
    }

    fn values(&self, points: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Fourier2d { amps, phase_x, phase_y } => {
                let m = (amps.len() as f64).sqrt().round() as usize;
                points
                    .chunks_exact(2)
                    .map(|p| {
                        let sx: Vec<f64> =
                            (0..amps.len()).map(|t| ((t / m + 1) as f64 * PI * p[0] + phase_x[t]).sin()).collect();
                        self.scale
                            * (0..amps.len())
                                .map(|t| amps[t] * sx[t] * ((t % m + 1) as f64 * PI * p[1] + phase_y[t]).sin())
                                .sum::<f64>()
                    })
                    .collect()
            }
            _ => points.chunks_exact(self.dim()).map(|x| self.value(x)).collect(),
        }
    }

    fn grid_values(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Custom { field, .. } => field.grid_values(xs, ys),
            _ => self.grid_values_2d(xs, ys),
        }
    }
}

/// Total variation of `f` on a uniform grid of `n` points.
pub fn total_variation(f: &dyn ScalarField, n: usize) -> f64 {
    let xs = crate::field::uniform_grid(n);
    let v = f.values(&xs);
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
