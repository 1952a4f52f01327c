//! The three benchmark problems: PDE coefficients, trial basis, node sets and
//! forcing families per data split.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::basis::{boundary_layer_basis, gram_schmidt, mass_matrix, sine_basis_1d, tensor_sine_basis_2d, MassMatrix, TrialBasis};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::forcing::{fourier_forcing_1d, fourier_forcing_2d, ForcingSample, GrfSampler};
use crate::quadrature::{gauss_legendre, tensor_rule, trapezoid_interior, QuadratureRule, RuleDescriptor};
use crate::reference::{
    diffusion_psi_closed_form, solve_adjoint_for_psi, solve_advdiff_1d, solve_diffusion_1d, PdeConfig,
    ReferenceSolution, SpectralSolver2d, DEFAULT_RESOLUTION_2D,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemTag {
    Diffusion1d,
    Advdiff1d,
    Advdiff2d,
}

impl ProblemTag {
    pub const ALL: [ProblemTag; 3] = [ProblemTag::Diffusion1d, ProblemTag::Advdiff1d, ProblemTag::Advdiff2d];

    pub fn name(self) -> &'static str {
        match self {
            ProblemTag::Diffusion1d => "diffusion1d",
            ProblemTag::Advdiff1d => "advdiff1d",
            ProblemTag::Advdiff2d => "advdiff2d",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ProblemTag::Diffusion1d => 1,
            ProblemTag::Advdiff1d => 2,
            ProblemTag::Advdiff2d => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.code() == code)
    }

    pub fn spatial_dim(self) -> usize {
        match self {
            ProblemTag::Advdiff2d => 2,
            _ => 1,
        }
    }

    /// Splits with data for this problem; the 2D problem has no GRF test sets.
    pub fn splits(self) -> &'static [Split] {
        match self {
            ProblemTag::Advdiff2d => &[Split::Train, Split::Test1],
            _ => &[Split::Train, Split::Test1, Split::Test2, Split::Test3],
        }
    }

    pub fn test_splits(self) -> &'static [Split] {
        &self.splits()[1..]
    }
}

impl fmt::Display for ProblemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown problem '{s}' (diffusion1d, advdiff1d, advdiff2d)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    /// In-distribution Fourier forcings.
    Test1,
    /// GRF, length scale 0.1.
    Test2,
    /// GRF, length scale 0.05.
    Test3,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Test1, Split::Test2, Split::Test3];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
            Split::Test3 => "test3",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test1 => 1,
            Split::Test2 => 2,
            Split::Test3 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn grf_length_scale(self) -> Option<f64> {
        match self {
            Split::Test2 => Some(0.1),
            Split::Test3 => Some(0.05),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown split '{s}' (train, test1, test2, test3)")))
    }
}

/// Seed of sample `index` in a split. Splits occupy disjoint ranges, so train
/// and test forcings never share a seed.
pub fn sample_seed(base: u64, split: Split, index: u32) -> u64 {
    (base << 36) | ((split.code() as u64) << 32) | index as u64
}

/// Shape of the weighting network (and of the L-DeepONet trunk).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub final_bias: bool,
    pub cutoff: f64,
}

impl NetSpec {
    pub fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(output);
        d
    }
}

/// Points of a quadrature rule, with the 1D factors kept for tensor rules so
/// fields can be sampled through their grid fast path.
#[derive(Clone, Debug)]
pub struct NodeSet {
    rule: QuadratureRule,
    axes: Option<(Vec<f64>, Vec<f64>)>,
}

impl NodeSet {
    pub fn line(rule: QuadratureRule) -> Self {
        Self { rule, axes: None }
    }

    pub fn tensor(x: &QuadratureRule, y: &QuadratureRule) -> Result<Self> {
        Ok(Self {
            rule: tensor_rule(x, y)?,
            axes: Some((x.nodes().to_vec(), y.nodes().to_vec())),
        })
    }

    pub fn from_descriptor(d: &RuleDescriptor) -> Result<Self> {
        match d {
            RuleDescriptor::Tensor(x, y) => Self::tensor(&x.build()?, &y.build()?),
            other => Ok(Self::line(other.build()?)),
        }
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Axis coordinates of a tensor node set.
    pub fn axes(&self) -> Option<(&[f64], &[f64])> {
        self.axes.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// Values of `f` at the nodes, in rule order.
    pub fn sample(&self, f: &dyn ScalarField) -> Vec<f64> {
        match &self.axes {
            Some((xs, ys)) => {
                let g = f.grid_values(xs, ys);
                // row-major flatten matches the tensor rule's node order
                g.transpose().as_slice().to_vec()
            }
            None => f.values(self.rule.nodes()),
        }
    }
}

/// A fully set-up benchmark problem.
pub struct Problem {
    tag: ProblemTag,
    pde: PdeConfig,
    basis: TrialBasis,
    mass: MassMatrix,
    sensors: NodeSet,
    outputs: NodeSet,
    analysis: NodeSet,
    mass_rule: QuadratureRule,
    net: NetSpec,
    resolution: usize,
    solver2d: OnceLock<Arc<SpectralSolver2d>>,
    grf: [OnceLock<GrfSampler>; 2],
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("tag", &self.tag).field("basis", &self.basis.tag()).finish()
    }
}

pub const SENSOR_POINTS: usize = 40;
pub const OUTPUT_POINTS_1D: usize = 200;
pub const OUTPUT_POINTS_2D: usize = 67;

impl Problem {
    pub fn new(tag: ProblemTag) -> Result<Self> {
        Self::with_resolution(tag, DEFAULT_RESOLUTION_2D)
    }

    /// `resolution` is the number of Galerkin modes per axis of the 2D
    /// reference solver; ignored in 1D.
    pub fn with_resolution(tag: ProblemTag, resolution: usize) -> Result<Self> {
        let gl = |n| gauss_legendre(n, 0.0, 1.0);
        let (pde, net) = match tag {
            ProblemTag::Diffusion1d => (
                PdeConfig::diffusion_1d(0.01),
                NetSpec { hidden: vec![10, 20, 30], final_bias: true, cutoff: 100.0 },
            ),
            ProblemTag::Advdiff1d => (
                PdeConfig::advdiff_1d(1e-4, 0.1),
                NetSpec { hidden: vec![10, 20, 30, 40, 30], final_bias: true, cutoff: 400.0 },
            ),
            ProblemTag::Advdiff2d => (
                PdeConfig::vortex_2d(1e-3),
                NetSpec { hidden: vec![50, 100], final_bias: false, cutoff: 100.0 },
            ),
        };
        let (sensors, outputs, analysis, mass_rule) = if tag.spatial_dim() == 1 {
            (
                NodeSet::line(gl(SENSOR_POINTS)?),
                NodeSet::line(gl(OUTPUT_POINTS_1D)?),
                NodeSet::line(gl(400)?),
                gl(200)?,
            )
        } else {
            let s = gl(SENSOR_POINTS)?;
            let o = trapezoid_interior(OUTPUT_POINTS_2D, 0.0, 1.0)?;
            let a = gl(80)?;
            let m = gl(60)?;
            (NodeSet::tensor(&s, &s)?, NodeSet::tensor(&o, &o)?, NodeSet::tensor(&a, &a)?, tensor_rule(&m, &m)?)
        };
        let basis = match tag {
            ProblemTag::Diffusion1d => sine_basis_1d(10)?,
            ProblemTag::Advdiff1d => {
                let c = match pde.velocity {
                    crate::reference::Velocity::Constant(c) => c,
                    _ => unreachable!(),
                };
                gram_schmidt(&boundary_layer_basis(c, pde.kappa)?, &mass_rule)?
            }
            ProblemTag::Advdiff2d => tensor_sine_basis_2d(10)?,
        };
        let mass = mass_matrix(&basis, &mass_rule)?;
        Ok(Self {
            tag,
            pde,
            basis,
            mass,
            sensors,
            outputs,
            analysis,
            mass_rule,
            net,
            resolution,
            solver2d: OnceLock::new(),
            grf: [OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn tag(&self) -> ProblemTag {
        self.tag
    }

    pub fn pde(&self) -> &PdeConfig {
        &self.pde
    }

    pub fn basis(&self) -> &TrialBasis {
        &self.basis
    }

    pub fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    pub fn mass_rule(&self) -> &QuadratureRule {
        &self.mass_rule
    }

    pub fn sensors(&self) -> &NodeSet {
        &self.sensors
    }

    /// Label nodes; also the rule behind reported error percentages.
    pub fn outputs(&self) -> &NodeSet {
        &self.outputs
    }

    /// Fine rule for the error decomposition and weighting-function errors.
    pub fn analysis(&self) -> &NodeSet {
        &self.analysis
    }

    pub fn net_spec(&self) -> &NetSpec {
        &self.net
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spatial_dim(&self) -> usize {
        self.tag.spatial_dim()
    }

    /// The 2D reference solver, assembled on first use.
    pub fn solver_2d(&self) -> Result<Arc<SpectralSolver2d>> {
        if let Some(s) = self.solver2d.get() {
            return Ok(s.clone());
        }
        let s = Arc::new(SpectralSolver2d::for_config(&self.pde, self.resolution)?);
        Ok(self.solver2d.get_or_init(|| s).clone())
    }

    fn grf_sampler(&self, split: Split) -> Result<&GrfSampler> {
        let (slot, ls) = match split {
            Split::Test2 => (&self.grf[0], 0.1),
            Split::Test3 => (&self.grf[1], 0.05),
            _ => return Err(Error::invalid(format!("split {split} has no GRF forcing"))),
        };
        if let Some(s) = slot.get() {
            return Ok(s);
        }
        let s = GrfSampler::new(ls)?;
        Ok(slot.get_or_init(|| s))
    }

    /// Forcing drawn from the family of `split`.
    pub fn forcing(&self, split: Split, seed: u64) -> Result<ForcingSample> {
        if !self.tag.splits().contains(&split) {
            return Err(Error::invalid(format!("problem {} has no split {split}", self.tag)));
        }
        match (split, self.tag.spatial_dim()) {
            (Split::Train | Split::Test1, 1) => fourier_forcing_1d(seed),
            (Split::Train | Split::Test1, _) => fourier_forcing_2d(seed),
            _ => self.grf_sampler(split)?.sample(seed),
        }
    }

    pub fn reference(&self, f: &ForcingSample) -> Result<ReferenceSolution> {
        match self.tag {
            ProblemTag::Diffusion1d => solve_diffusion_1d(f, self.pde.kappa),
            ProblemTag::Advdiff1d => {
                let c = match self.pde.velocity {
                    crate::reference::Velocity::Constant(c) => c,
                    _ => unreachable!(),
                };
                solve_advdiff_1d(f, self.pde.kappa, c)
            }
            ProblemTag::Advdiff2d => self.solver_2d()?.solve(f),
        }
    }

    /// True weighting functions of the trial basis.
    pub fn true_psi(&self) -> Result<Vec<Arc<dyn ScalarField>>> {
        match self.tag {
            ProblemTag::Diffusion1d => Ok(diffusion_psi_closed_form(self.basis.len(), self.pde.kappa)),
            ProblemTag::Advdiff1d => Ok(solve_adjoint_for_psi(&self.basis, &self.pde, self.resolution)?
                .into_iter()
                .map(|r| Arc::new(r) as Arc<dyn ScalarField>)
                .collect()),
            ProblemTag::Advdiff2d => Ok(self
                .solver_2d()?
                .adjoint_psi(&self.basis)?
                .into_iter()
                .map(|r| Arc::new(r) as Arc<dyn ScalarField>)
                .collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::parameter_count;

    #[test]
    fn seeds_are_disjoint_across_splits() {
        assert_ne!(sample_seed(0, Split::Train, 5), sample_seed(0, Split::Test1, 5));
        assert_ne!(sample_seed(1, Split::Train, 0), sample_seed(0, Split::Train, 0));
        assert_eq!(sample_seed(0, Split::Test3, 7), (3 << 32) | 7);
    }

    #[test]
    fn weighting_net_sizes() {
        for (tag, n, count) in [
            (ProblemTag::Diffusion1d, 10, 1180),
            (ProblemTag::Advdiff1d, 15, 3805),
            (ProblemTag::Advdiff2d, 100, 15250),
        ] {
            let p = Problem::new(tag).unwrap();
            assert_eq!(p.basis().len(), n);
            let spec = p.net_spec();
            assert_eq!(parameter_count(&spec.dims(tag.spatial_dim(), n), spec.final_bias), count);
        }
    }

    #[test]
    fn node_counts() {
        let p = Problem::new(ProblemTag::Advdiff2d).unwrap();
        assert_eq!(p.sensors().len(), 1600);
        assert_eq!(p.outputs().len(), 67 * 67);
        let x = p.outputs().rule().node(68);
        assert!((x[0] - 2.0 / 68.0).abs() < 1e-15 && (x[1] - 2.0 / 68.0).abs() < 1e-15);
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        assert_eq!((p.sensors().len(), p.outputs().len()), (40, 200));
    }

    #[test]
    fn orthonormal_bases() {
        for tag in ProblemTag::ALL {
            let p = Problem::new(tag).unwrap();
            assert!(p.mass().max_deviation_from_identity() < 1e-9, "{tag}");
        }
    }

    #[test]
    fn tensor_sampling_matches_pointwise() {
        let p = Problem::new(ProblemTag::Advdiff2d).unwrap();
        let f = p.forcing(Split::Train, 3).unwrap();
        let fast = p.sensors().sample(&f);
        let slow = f.values(p.sensors().rule().nodes());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn split_families() {
        let p = Problem::new(ProblemTag::Diffusion1d).unwrap();
        assert_eq!(p.forcing(Split::Test3, 1).unwrap().length_scale(), Some(0.05));
        assert_eq!(p.forcing(Split::Test2, 1).unwrap().length_scale(), Some(0.1));
        assert!(p.forcing(Split::Test1, 1).unwrap().fourier_modes_1d().is_some());
        let p2 = Problem::new(ProblemTag::Advdiff2d).unwrap();
        assert!(p2.forcing(Split::Test2, 1).is_err());
    }

    #[test]
    fn names_round_trip() {
        for t in ProblemTag::ALL {
            assert_eq!(t.name().parse::<ProblemTag>().unwrap(), t);
            assert_eq!(ProblemTag::from_code(t.code()), Some(t));
        }
        for s in Split::ALL {
            assert_eq!(s.name().parse::<Split>().unwrap(), s);
        }
    }
}
