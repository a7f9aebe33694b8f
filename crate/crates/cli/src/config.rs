//! Run configuration: a TOML file, overridden by `key=value` pairs with
//! dotted keys, overridden by the `--seed` and `--out` flags. Unknown keys
//! anywhere are an error.

use paretoflow::env::{EnvSpec, State};
use paretoflow::gflownet::{Conditioning, FlowModelConfig};
use paretoflow::mobo::{MoboConfig, MoboError, SyntheticOracle};
use paretoflow::pareto::Scalarization;
use paretoflow::surrogate::SurrogateConfig;
use paretoflow::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Synthetic,
    Mobo,
    Ablation,
    OracleFixtures,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synthetic => "synthetic",
            Command::Mobo => "mobo",
            Command::Ablation => "ablation",
            Command::OracleFixtures => "oracle-fixtures",
        }
    }
}

/// Which profiles the synthetic oracle compares object histograms against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Two opposite corners.
    Two,
    /// The two corners plus uniformity and sparsity.
    Four,
    /// One profile per anchor object (its histogram).
    Anchors { anchors: Vec<Vec<u16>> },
}

impl ObjectiveSpec {
    pub fn build(&self, env: EnvSpec) -> Result<SyntheticOracle, MoboError> {
        match self {
            ObjectiveSpec::Two => SyntheticOracle::reference_two(env),
            ObjectiveSpec::Four => SyntheticOracle::reference_four(env),
            ObjectiveSpec::Anchors { anchors } => {
                for a in anchors {
                    let s = State {
                        components: a.clone(),
                        terminal: false,
                    };
                    env.allowed_actions(&s)?;
                }
                SyntheticOracle::from_anchors(env, anchors)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Hypernet,
    Concat,
    /// One unconditional model per evaluation preference; the total step
    /// budget is split evenly between them.
    PreferenceSpecific,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Hypernet => "hypernet",
            Variant::Concat => "concat",
            Variant::PreferenceSpecific => "preference_specific",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSettings {
    pub variants: Vec<Variant>,
    /// Evenly spaced evaluation preferences (two objectives only).
    pub preferences: usize,
    pub eval_samples: usize,
    /// Div and objective means are taken over this many best samples.
    pub top: usize,
    pub cor_test_size: usize,
    pub scalarization: Scalarization,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Hypernet, Variant::Concat, Variant::PreferenceSpecific],
            preferences: 5,
            eval_samples: 1000,
            top: 100,
            cor_test_size: 5000,
            scalarization: Scalarization::WeightedSum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoboSettings {
    pub rounds: usize,
    pub batch: usize,
    pub initial: usize,
    pub k: Option<usize>,
    pub scalarization: Scalarization,
    pub ucb_beta: f64,
    pub acquisition_samples: usize,
    pub reference: Option<Vec<f64>>,
    pub cor_test_size: usize,
    pub random_baseline: bool,
    /// Hindsight ratios for the round-one training-curve sweep; empty
    /// skips it.
    pub gamma_sweep: Vec<f64>,
    pub curve_every: usize,
    pub curve_samples: usize,
    pub curve_top: usize,
    /// Ground-truth front written by `oracle-fixtures`, for regret.
    pub fixture: Option<PathBuf>,
}

impl Default for MoboSettings {
    fn default() -> Self {
        let m = MoboConfig::default();
        Self {
            rounds: m.rounds,
            batch: m.batch,
            initial: m.initial,
            k: m.k,
            scalarization: m.scalarization,
            ucb_beta: m.ucb_beta,
            acquisition_samples: m.acquisition_samples,
            reference: m.reference,
            cor_test_size: m.cor_test_size,
            random_baseline: true,
            gamma_sweep: Vec::new(),
            curve_every: 500,
            curve_samples: 100,
            curve_top: 20,
            fixture: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub alphas: Vec<Vec<f64>>,
    pub scalarizations: Vec<Scalarization>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            alphas: vec![
                vec![1.0, 1.0, 1.0, 1.0],
                vec![3.0, 3.0, 1.0, 1.0],
                vec![3.0, 4.0, 2.0, 1.0],
            ],
            scalarizations: vec![Scalarization::WeightedSum, Scalarization::Tchebycheff],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub env: EnvSpec,
    pub objectives: ObjectiveSpec,
    pub conditioning: Conditioning,
    pub model: FlowModelConfig,
    pub train: TrainConfig,
    pub surrogate: SurrogateConfig,
    pub mobo: MoboSettings,
    pub synthetic: SyntheticSettings,
    pub ablation: AblationSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            out: None,
            env: EnvSpec::HyperGrid { dims: 4, side: 12 },
            objectives: ObjectiveSpec::Two,
            conditioning: Conditioning::Hypernet,
            model: FlowModelConfig::default(),
            train: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
            mobo: MoboSettings::default(),
            synthetic: SyntheticSettings::default(),
            ablation: AblationSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn oracle(&self) -> Result<SyntheticOracle, ConfigError> {
        self.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.objectives
            .build(self.env)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn mobo_config(&self) -> MoboConfig {
        let m = &self.mobo;
        MoboConfig {
            rounds: m.rounds,
            batch: m.batch,
            initial: m.initial,
            k: m.k,
            scalarization: m.scalarization,
            ucb_beta: m.ucb_beta,
            acquisition_samples: m.acquisition_samples,
            reference: m.reference.clone(),
            conditioning: self.conditioning,
            cor_test_size: m.cor_test_size,
            model: self.model.clone(),
            train: self.train.clone(),
            surrogate: self.surrogate.clone(),
        }
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        let oracle = self.oracle()?;
        let m = oracle.objectives();
        match command {
            Command::Mobo => {
                self.mobo_config()
                    .validate(m)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if let Some(path) = &self.mobo.fixture {
                    if !path.exists() {
                        return invalid(format!("fixture {} does not exist", path.display()));
                    }
                }
                if self.mobo.gamma_sweep.iter().any(|g| !(0.0..=1.0).contains(g)) {
                    return invalid("gamma_sweep values must lie in [0, 1]".into());
                }
                if !self.mobo.gamma_sweep.is_empty()
                    && (self.mobo.curve_every == 0 || self.mobo.curve_samples == 0 || self.mobo.curve_top == 0)
                {
                    return invalid("curve_every, curve_samples and curve_top must be positive".into());
                }
            }
            Command::Synthetic => {
                let s = &self.synthetic;
                if m != 2 {
                    return invalid(format!(
                        "the synthetic scenario evaluates on evenly spaced two-objective preferences; got {m} objectives"
                    ));
                }
                if s.preferences < 2 || s.eval_samples == 0 || s.top == 0 || s.variants.is_empty() {
                    return invalid("synthetic needs >= 2 preferences, a variant and positive sample counts".into());
                }
                if self.train.alpha.len() != m {
                    return invalid(format!("alpha has {} entries for {m} objectives", self.train.alpha.len()));
                }
                if s.variants.contains(&Variant::PreferenceSpecific) && self.train.steps < s.preferences {
                    return invalid("train.steps must cover one step per preference-specific model".into());
                }
                self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            Command::Ablation => {
                if self.conditioning == Conditioning::Unconditional {
                    return invalid("the ablation sweeps preference distributions; use a conditional model".into());
                }
                if self.ablation.alphas.is_empty() || self.ablation.scalarizations.is_empty() {
                    return invalid("ablation needs at least one alpha and one scalarization".into());
                }
                for alpha in &self.ablation.alphas {
                    let mut cfg = self.mobo_config();
                    cfg.train.alpha = alpha.clone();
                    cfg.validate(m).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                }
            }
            Command::OracleFixtures => {
                let reference = self.mobo_config().reference_for(m);
                if reference.len() != m {
                    return invalid("reference point length differs from objectives".into());
                }
            }
        }
        Ok(())
    }
}

/// Sets `key` (dotted path) in `root` to `raw` read as a TOML value, or as
/// a bare string if it does not parse.
pub fn apply_override(root: &mut toml::Table, pair: &str) -> Result<(), ConfigError> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(pair.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(ConfigError::Override(pair.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap();
    let mut table = root;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("override {key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Raw table from a TOML config or from the `config` field of a previous
/// run's `manifest.json`.
pub fn load_table(path: &Path) -> Result<toml::Table, ConfigError> {
    let text = read(path)?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        let config = v
            .get("config")
            .ok_or_else(|| parse_err("manifest has no config field".into()))?;
        // Round-trip through the typed config so the table matches what a
        // TOML file would produce.
        let cfg: RunConfig = serde_json::from_value(config.clone()).map_err(|e| parse_err(e.to_string()))?;
        toml::Table::try_from(&cfg).map_err(|e| parse_err(e.to_string()))
    } else {
        text.parse::<toml::Table>().map_err(|e| parse_err(e.to_string()))
    }
}

pub fn resolve(table: toml::Table, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table = table;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Invalid(e.to_string()))
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let table = match path {
        Some(p) => load_table(p)?,
        None => toml::Table::new(),
    };
    resolve(table, overrides)
}
