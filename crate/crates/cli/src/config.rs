//! Run configuration: profile defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use pgvarmion::models::ModelKind;
use pgvarmion::problem::ProblemTag;
use pgvarmion::training::{BatchMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SIZES: [usize; 7] = [100, 250, 500, 1000, 2000, 3000, 4000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full published settings.
    Paper,
    /// 500 training functions, 200 epochs, 200 test functions; 2D batches of
    /// 200 (function, node) pairs.
    Desk,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemTag>,
    pub model: Option<ModelKind>,
    pub profile: Option<Profile>,
    /// Model initialization and training seed.
    pub seed: Option<u64>,
    /// Dataset seed, below 2^28.
    pub data_seed: Option<u64>,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    /// Modes per axis of the 2D reference solver.
    pub resolution: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub train: TrainOverrides,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    /// (function, node) pairs per batch.
    pub batch_points: Option<usize>,
    /// Whole functions per batch.
    pub batch_functions: Option<usize>,
    pub nodes_per_function: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_step: Option<usize>,
    pub lr_gamma: Option<f64>,
    pub weight_decay: Option<f64>,
    pub checkpoint_every: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// `other` wins wherever it sets a value.
    pub fn merge(self, other: RunConfig) -> RunConfig {
        let t = self.train;
        let o = other.train;
        RunConfig {
            problem: other.problem.or(self.problem),
            model: other.model.or(self.model),
            profile: other.profile.or(self.profile),
            seed: other.seed.or(self.seed),
            data_seed: other.data_seed.or(self.data_seed),
            train_count: other.train_count.or(self.train_count),
            test_count: other.test_count.or(self.test_count),
            resolution: other.resolution.or(self.resolution),
            sizes: other.sizes.or(self.sizes),
            paths: PathsConfig {
                data_dir: other.paths.data_dir.or(self.paths.data_dir),
                out_dir: other.paths.out_dir.or(self.paths.out_dir),
            },
            train: TrainOverrides {
                epochs: o.epochs.or(t.epochs),
                batch_points: o.batch_points.or(t.batch_points),
                batch_functions: o.batch_functions.or(t.batch_functions),
                nodes_per_function: o.nodes_per_function.or(t.nodes_per_function),
                learning_rate: o.learning_rate.or(t.learning_rate),
                lr_step: o.lr_step.or(t.lr_step),
                lr_gamma: o.lr_gamma.or(t.lr_gamma),
                weight_decay: o.weight_decay.or(t.weight_decay),
                checkpoint_every: o.checkpoint_every.or(t.checkpoint_every),
            },
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub problem: ProblemTag,
    pub model: ModelKind,
    pub profile: Profile,
    pub seed: u64,
    pub data_seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub resolution: Option<usize>,
    pub sizes: Vec<usize>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
}

impl Settings {
    pub fn resolve(cfg: RunConfig) -> Result<Self, CliError> {
        let problem = cfg
            .problem
            .ok_or_else(|| CliError::Config("no problem given (--problem or `problem` in the config)".into()))?;
        let profile = cfg.profile.unwrap_or(Profile::Paper);
        let (mut train, train_count, test_count) = match profile {
            Profile::Paper => (TrainConfig::paper(problem), 4000, 2000),
            Profile::Desk => (TrainConfig::desk(problem), 500, 200),
        };
        let seed = cfg.seed.unwrap_or(0);
        train.seed = seed;
        let t = cfg.train;
        if t.batch_points.is_some() && t.batch_functions.is_some() {
            return Err(CliError::Config("set at most one of batch_points and batch_functions".into()));
        }
        if let Some(v) = t.epochs {
            train.epochs = v;
        }
        if let Some(v) = t.batch_points {
            train.batch = BatchMode::Points(v);
        }
        if let Some(v) = t.batch_functions {
            train.batch = BatchMode::Functions(v);
        }
        if let Some(v) = t.nodes_per_function {
            train.nodes_per_function = v;
        }
        if let Some(v) = t.learning_rate {
            train.optimizer.schedule.initial = v;
        }
        if let Some(v) = t.lr_step {
            train.optimizer.schedule.step = v;
        }
        if let Some(v) = t.lr_gamma {
            train.optimizer.schedule.gamma = v;
        }
        if let Some(v) = t.weight_decay {
            train.optimizer.weight_decay = v;
        }
        if let Some(v) = t.checkpoint_every {
            train.checkpoint_every = (v > 0).then_some(v);
        }
        let data_seed = cfg.data_seed.unwrap_or(0);
        if data_seed >= 1 << 28 {
            return Err(CliError::Config(format!("data_seed {data_seed} must be below 2^28")));
        }
        let train_count = cfg.train_count.unwrap_or(train_count);
        let sizes = match cfg.sizes {
            Some(v) => {
                if v.iter().any(|&n| n == 0 || n > train_count) {
                    return Err(CliError::Config(format!("sweep sizes must lie in 1..={train_count}")));
                }
                v
            }
            None => DEFAULT_SIZES.into_iter().filter(|&n| n <= train_count).collect(),
        };
        let s = Settings {
            problem,
            model: cfg.model.unwrap_or(ModelKind::PgVarmion),
            profile,
            seed,
            data_seed,
            train_count,
            test_count: cfg.test_count.unwrap_or(test_count),
            resolution: cfg.resolution,
            sizes,
            data_dir: cfg.paths.data_dir.unwrap_or_else(|| PathBuf::from("data")),
            out_dir: cfg.paths.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            train,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.train.nodes_per_function == 0 {
            return bad("nodes_per_function must be positive".into());
        }
        if matches!(self.train.batch, BatchMode::Points(0) | BatchMode::Functions(0)) {
            return bad("batch size must be positive".into());
        }
        if !(self.train.optimizer.schedule.initial > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if self.train.optimizer.schedule.step == 0 {
            return bad("lr_step must be positive".into());
        }
        if self.resolution == Some(0) {
            return bad("resolution must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("problem = \"diffusion1d\"\nepochz = 3").is_err());
        assert!(RunConfig::parse("[train]\nepochz = 3").is_err());
        let c = RunConfig::parse("problem = \"advdiff2d\"\nmodel = \"l-deeponet\"\n[train]\nepochs = 3").unwrap();
        assert_eq!(c.problem, Some(ProblemTag::Advdiff2d));
        assert_eq!(c.model, Some(ModelKind::LDeepONet));
        assert_eq!(c.train.epochs, Some(3));
    }

    #[test]
    fn paper_profile_defaults() {
        let cfg = RunConfig { problem: Some(ProblemTag::Advdiff1d), ..Default::default() };
        let s = Settings::resolve(cfg).unwrap();
        assert_eq!(s.train, TrainConfig::paper(ProblemTag::Advdiff1d));
        assert_eq!((s.train_count, s.test_count), (4000, 2000));
        assert_eq!(s.sizes, DEFAULT_SIZES);
    }

    #[test]
    fn later_layers_win() {
        let file = RunConfig::parse("problem = \"diffusion1d\"\nseed = 4\n[train]\nepochs = 9\nlr_gamma = 0.5").unwrap();
        let flags = RunConfig {
            seed: Some(7),
            train: TrainOverrides { epochs: Some(1), ..Default::default() },
            ..Default::default()
        };
        let s = Settings::resolve(file.merge(flags)).unwrap();
        assert_eq!((s.seed, s.train.seed, s.train.epochs), (7, 7, 1));
        assert_eq!(s.train.optimizer.schedule.gamma, 0.5);
    }

    #[test]
    fn invalid_settings() {
        let base = || RunConfig { problem: Some(ProblemTag::Diffusion1d), ..Default::default() };
        assert!(Settings::resolve(RunConfig::default()).is_err());
        assert!(Settings::resolve(RunConfig { data_seed: Some(1 << 28), ..base() }).is_err());
        assert!(Settings::resolve(RunConfig { sizes: Some(vec![5000]), ..base() }).is_err());
        let small = Settings::resolve(RunConfig { train_count: Some(600), ..base() }).unwrap();
        assert_eq!(small.sizes, vec![100, 250, 500]);
        let both = TrainOverrides { batch_points: Some(1), batch_functions: Some(1), ..Default::default() };
        assert!(Settings::resolve(RunConfig { train: both, ..base() }).is_err());
    }
}
