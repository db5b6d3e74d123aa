//! The TOML run configuration. Unknown keys are rejected at every level and relative
//! paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use explore_core::explore::{BetaSchedule, TrainConfig};
use explore_core::learner::ForestParams;
use explore_core::objective::Budget;
use explore_core::planners::PolicyKind;
use explore_core::seed::derive_seed;
use explore_core::sensor::SensorConfig;
use explore_core::worldgen::{DatasetSpec, WorldFamily};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const DATASET_ROLE: u64 = 0;
const TRAIN_ROLE: u64 = 1;
const VALIDATION_ROLE: u64 = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub rays: usize,
    pub range: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection { rays: 64, range: 30.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub travel: f64,
    pub horizon: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection {
            travel: 1000.0,
            horizon: 10,
        }
    }
}

/// Either a dataset file (`path`) or generator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worlds: Option<usize>,
    #[serde(default = "one")]
    pub node_sets: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default = "hundred")]
    pub width: usize,
    #[serde(default = "hundred")]
    pub height: usize,
    #[serde(default = "unit")]
    pub resolution: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Also enumerate the exact optimum (tiny instances only).
    #[serde(default)]
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub datapoints: usize,
    #[serde(default = "geometric")]
    pub schedule: String,
    #[serde(default = "ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub all_actions: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_subsample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_resamples: Option<usize>,
    pub data: DatasetSection,
    pub validation: DatasetSection,
}

fn geometric() -> String {
    "geometric".into()
}
fn ratio() -> f64 {
    0.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "random")]
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub snapshot_steps: Vec<usize>,
}

fn random() -> String {
    "random".into()
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            policy: random(),
            episodes: None,
            model: None,
            snapshot_steps: Vec::new(),
        }
    }
}

/// Where a dataset comes from once the config is resolved.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    File(PathBuf),
    Generated(DatasetSpec),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    /// Reads `path` and makes relative paths absolute against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = cfg.dataset.as_mut() {
            d.path.as_mut().map(fix);
        }
        if let Some(t) = cfg.train.as_mut() {
            t.data.path.as_mut().map(fix);
            t.validation.path.as_mut().map(fix);
        }
        if let Some(e) = cfg.evaluate.as_mut() {
            e.model.as_mut().map(fix);
        }
        if let Some(o) = cfg.out.as_mut() {
            fix(o);
        }
        Ok(cfg)
    }

    pub fn sensor(&self) -> Result<SensorConfig, CliError> {
        let s = SensorConfig {
            ray_count: self.sensor.rays,
            max_range: self.sensor.range,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn budget(&self) -> Result<Budget, CliError> {
        Ok(Budget::new(self.budget.travel, self.budget.horizon)?)
    }

    pub fn dataset(&self) -> Result<DatasetSource, CliError> {
        let d = self
            .dataset
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [dataset] section".into()))?;
        d.source(self.seed, DATASET_ROLE, "dataset")
    }

    pub fn train_config(&self) -> Result<(TrainConfig, DatasetSource, DatasetSource), CliError> {
        let t = self
            .train
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [train] section".into()))?;
        let schedule = match t.schedule.as_str() {
            "geometric" => BetaSchedule::Geometric(t.ratio),
            "indicator" => BetaSchedule::Indicator,
            other => {
                return Err(CliError::Config(format!(
                    "train.schedule must be \"geometric\" or \"indicator\", got {other:?}"
                )))
            }
        };
        let defaults = ForestParams::default();
        let mut cfg = TrainConfig::new(t.iterations, t.datapoints, self.budget()?, self.seed);
        cfg.schedule = schedule;
        cfg.all_actions = t.all_actions;
        cfg.forest = ForestParams {
            tree_count: t.trees.unwrap_or(defaults.tree_count),
            max_depth: t.max_depth.unwrap_or(defaults.max_depth),
            min_leaf: t.min_leaf.unwrap_or(defaults.min_leaf),
            feature_subsample: t.feature_subsample.unwrap_or(defaults.feature_subsample),
        };
        if let Some(r) = t.max_resamples {
            cfg.max_resamples = r;
        }
        cfg.validate()?;
        Ok((
            cfg,
            t.data.source(self.seed, TRAIN_ROLE, "train.data")?,
            t.validation.source(self.seed, VALIDATION_ROLE, "train.validation")?,
        ))
    }

    pub fn policy(&self) -> Result<PolicyKind, CliError> {
        let e = self.evaluate.clone().unwrap_or_default();
        Ok(e.policy.parse()?)
    }

    /// Every input file the command will read.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(p) = self.dataset.as_ref().and_then(|d| d.path.clone()) {
            out.push(p);
        }
        if let Some(t) = &self.train {
            out.extend(t.data.path.clone());
            out.extend(t.validation.path.clone());
        }
        if let Some(m) = self.evaluate.as_ref().and_then(|e| e.model.clone()) {
            out.push(m);
        }
        out
    }

    /// Canonical text used for the output hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl DatasetSection {
    fn source(&self, seed: u64, role: u64, name: &str) -> Result<DatasetSource, CliError> {
        if let Some(p) = &self.path {
            if self.family.is_some() || self.worlds.is_some() || self.nodes.is_some() || self.seed.is_some() {
                return Err(CliError::Config(format!(
                    "{name}: give either path or generator settings, not both"
                )));
            }
            return Ok(DatasetSource::File(p.clone()));
        }
        let missing = |k: &str| CliError::Config(format!("{name}.{k} is required without a path"));
        let family: WorldFamily = self.family.as_deref().ok_or_else(|| missing("family"))?.parse()?;
        let worlds = self.worlds.ok_or_else(|| missing("worlds"))?;
        let nodes = self.nodes.ok_or_else(|| missing("nodes"))?;
        let seed = self.seed.unwrap_or_else(|| derive_seed(seed, &[role]));
        let mut spec = DatasetSpec::new(family, worlds, nodes, seed)
            .with_grid(self.width, self.height)
            .with_node_sets(self.node_sets);
        spec.resolution = self.resolution;
        spec.validate()?;
        Ok(DatasetSource::Generated(spec))
    }
}
