//! The four commands. Each writes its CSVs into an output directory and
//! returns the numbers it wrote so tests can check them without parsing.

use crate::config::{Command, ConfigError, RunConfig, Variant};
use paretoflow::env::{EnvSpec, State, DEFAULT_ENUMERATION_CAP};
use paretoflow::gflownet::{Conditioning, FlowModel};
use paretoflow::mobo::{
    correlation_metric, correlation_test_set, init_dataset, prepare_round, run_mobo,
    run_random_baseline, MoboConfig, MoboError, MoboObserver, OracleReward, RunState,
    SyntheticOracle,
};
use paretoflow::oracle::{exact_policy_distribution, exact_target_distribution, FrontFixture};
use paretoflow::pareto::{diversity, ParetoFront, PreferenceVector};
use paretoflow::seeds::substream;
use paretoflow::trainer::{average_top_k_reward, StepRecord, TrainError, Trainer};
use serde::Serialize;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CODE_HASH: &str = env!("PARETOFLOW_CODE_HASH");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("{message}; resume with --resume from checkpoint {}", checkpoint.display())]
    Aborted { message: String, checkpoint: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<MoboError> for RunError {
    fn from(e: MoboError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

macro_rules! runtime {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime!(
    TrainError,
    paretoflow::oracle::OracleError,
    paretoflow::pareto::ParetoError,
    paretoflow::gflownet::GfnError,
    paretoflow::env::EnvError
);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Minimal CSV writer: numbers in shortest round-trip form, missing values
/// as empty fields.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        let wrap = |e: csv::Error| RunError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.flush().map_err(io_err(path))
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn objective_header(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{prefix}{i}")).collect()
}

/// Sample mean and standard deviation (n − 1); the deviation is 0 for a
/// single value.
pub fn mean_sd(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_sd_opt(vals: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let v: Option<Vec<f64>> = vals.iter().copied().collect();
    match v {
        Some(v) if !v.is_empty() => {
            let (m, s) = mean_sd(&v);
            (Some(m), Some(s))
        }
        _ => (None, None),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    code_hash: &'static str,
    seeds: &'a [u64],
    config: &'a RunConfig,
}

pub fn write_manifest(out: &Path, command: Command, cfg: &RunConfig) -> Result<(), RunError> {
    let m = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        code_hash: CODE_HASH,
        seeds: &cfg.seeds,
        config: cfg,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).map_err(|e| RunError::Runtime(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn enumerable(env: &EnvSpec) -> bool {
    env.state_count() <= DEFAULT_ENUMERATION_CAP
}

/// Validates, prepares `out` and dispatches.
pub fn run_command(command: Command, cfg: &RunConfig, out: &Path, resume: bool) -> Result<(), RunError> {
    cfg.validate(command)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    if resume {
        check_resumable(out, cfg)?;
    }
    write_manifest(out, command, cfg)?;
    match command {
        Command::Synthetic => run_synthetic(cfg, out).map(|_| ()),
        Command::Mobo => run_mobo_command(cfg, out, resume).map(|_| ()),
        Command::Ablation => run_ablation(cfg, out).map(|_| ()),
        Command::OracleFixtures => run_oracle_fixtures(cfg, out).map(|_| ()),
    }
}

fn check_resumable(out: &Path, cfg: &RunConfig) -> Result<(), RunError> {
    let path = out.join("manifest.json");
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let previous: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| RunError::Runtime(format!("{}: {e}", path.display())))?;
    // Extending the round count or moving the directory keeps earlier
    // rounds valid; anything else would not.
    let comparable = |v: &serde_json::Value| {
        let mut v = v.clone();
        if let Some(o) = v.as_object_mut() {
            o.remove("out");
            if let Some(m) = o.get_mut("mobo").and_then(|m| m.as_object_mut()) {
                m.remove("rounds");
            }
        }
        v
    };
    let current = serde_json::to_value(cfg).map_err(|e| RunError::Runtime(e.to_string()))?;
    if previous.get("config").map(comparable) != Some(comparable(&current)) {
        return Err(ConfigError::Invalid(format!(
            "cannot resume: configuration differs from {}",
            path.display()
        ))
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------- synthetic

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceEval {
    pub preference: Vec<f64>,
    /// L1 distance between the exact sampling distribution and the target.
    pub l1: Option<f64>,
    pub cor: Option<f64>,
    pub div: Option<f64>,
    /// Mean objective vector of the best sampled objects.
    pub top_means: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRun {
    pub variant: Variant,
    pub seed: u64,
    pub preferences: Vec<PreferenceEval>,
    pub hv: f64,
    pub front: Vec<(State, Vec<f64>)>,
}

impl VariantRun {
    pub fn mean_l1(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.preferences.iter().map(|p| p.l1).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_cor(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.preferences.iter().map(|p| p.cor).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_div(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.preferences.iter().map(|p| p.div).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub struct TrainedVariant {
    /// One shared model, or one per evaluation preference.
    pub models: Vec<FlowModel>,
    pub log: Vec<(String, StepRecord)>,
}

pub fn synthetic_preferences(cfg: &RunConfig) -> Vec<PreferenceVector> {
    PreferenceVector::evenly_spaced_pair(cfg.synthetic.preferences)
}

pub fn synthetic_reward<'a>(cfg: &RunConfig, oracle: &'a SyntheticOracle) -> OracleReward<'a> {
    OracleReward {
        oracle,
        scalarization: cfg.synthetic.scalarization,
        shaping: cfg.train.clone(),
    }
}

/// Trains one variant directly on the shaped oracle scalarization. The
/// conditional variants sample λ from Dir(α) only, since the evaluation
/// preferences are held out.
pub fn train_synthetic_variant(
    cfg: &RunConfig,
    oracle: &SyntheticOracle,
    variant: Variant,
    seed: u64,
) -> Result<TrainedVariant, RunError> {
    let prefs = synthetic_preferences(cfg);
    let reward = synthetic_reward(cfg, oracle);
    let m = oracle.objectives();
    let mut train = cfg.train.clone();
    if train.hindsight_gamma > 0.0 {
        log::info!("synthetic scenario trains without hindsight replay");
        train.hindsight_gamma = 0.0;
    }
    let name = variant.name();
    let mut log = Vec::new();
    let mut models = Vec::new();
    let jobs: Vec<(Conditioning, Vec<PreferenceVector>, usize, String)> = match variant {
        Variant::Hypernet | Variant::Concat => {
            let cond = if variant == Variant::Hypernet {
                Conditioning::Hypernet
            } else {
                Conditioning::Concat
            };
            vec![(cond, prefs.clone(), train.steps, "shared".to_string())]
        }
        Variant::PreferenceSpecific => {
            let n = prefs.len();
            prefs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let steps = train.steps / n + usize::from(i < train.steps % n);
                    (Conditioning::Unconditional, vec![p.clone()], steps, format!("pref{i}"))
                })
                .collect()
        }
    };
    for (i, (cond, targets, steps, label)) in jobs.into_iter().enumerate() {
        let stream = format!("synthetic-{name}");
        let mut model = FlowModel::new(
            oracle.env,
            m,
            cond,
            cfg.model.clone(),
            &mut substream(seed, &format!("{stream}-init"), i as u64),
        )?;
        let mut trainer = Trainer::new(&model, train.clone(), targets, Vec::new())?;
        trainer.train(
            &mut model,
            &reward,
            steps,
            &mut substream(seed, &format!("{stream}-train"), i as u64),
            |rec, _| {
                log.push((label.clone(), rec.clone()));
                Ok(())
            },
        )?;
        models.push(model);
    }
    Ok(TrainedVariant { models, log })
}

pub fn evaluate_synthetic_variant(
    cfg: &RunConfig,
    oracle: &SyntheticOracle,
    variant: Variant,
    models: &[FlowModel],
    seed: u64,
    cor_test: &[State],
) -> Result<VariantRun, RunError> {
    let prefs = synthetic_preferences(cfg);
    let reward = synthetic_reward(cfg, oracle);
    let m = oracle.objectives();
    let reference = cfg.mobo_config().reference_for(m);
    let exact = enumerable(&oracle.env);
    let mut evals = Vec::new();
    let mut all: Vec<(State, Vec<f64>)> = Vec::new();
    for (i, pref) in prefs.iter().enumerate() {
        let model = if models.len() == 1 { &models[0] } else { &models[i] };
        let cond = model.conditioning.is_conditional().then_some(pref);
        let l1 = if exact {
            let target = exact_target_distribution(&oracle.env, |x| reward.reward(pref, x).unwrap_or(0.0))?;
            Some(exact_policy_distribution(model, cond)?.l1(&target))
        } else {
            None
        };
        let cor = if exact {
            correlation_metric(model, std::slice::from_ref(pref), &reward, cor_test)?
        } else {
            None
        };
        let mut rng = substream(seed, &format!("synthetic-{}-eval", variant.name()), i as u64);
        let mut samples: Vec<State> = model
            .sample_trajectories(cond, 0.0, cfg.synthetic.eval_samples, &mut rng)?
            .into_iter()
            .map(|t| t.terminal())
            .collect();
        for x in &samples {
            all.push((x.clone(), oracle.evaluate(x)?));
        }
        samples.sort();
        samples.dedup();
        let mut scored = samples
            .into_iter()
            .map(|x| Ok((reward.reward(pref, &x)?, x)))
            .collect::<Result<Vec<_>, MoboError>>()?;
        // Stable sort over the ordered samples keeps ties deterministic.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(cfg.synthetic.top);
        let top: Vec<&State> = scored.iter().map(|(_, x)| x).collect();
        let div = diversity(&top.iter().map(|x| x.components.as_slice()).collect::<Vec<_>>()).ok();
        let mut top_means = vec![0.0; m];
        for x in &top {
            for (acc, v) in top_means.iter_mut().zip(oracle.evaluate(x)?) {
                *acc += v / top.len() as f64;
            }
        }
        evals.push(PreferenceEval {
            preference: pref.weights().to_vec(),
            l1,
            cor,
            div,
            top_means,
        });
    }
    all.sort_by(|a, b| a.0.cmp(&b.0));
    all.dedup_by(|a, b| a.0 == b.0);
    let ys: Vec<Vec<f64>> = all.iter().map(|(_, y)| y.clone()).collect();
    let front = ParetoFront::from_points(&ys, &reference);
    Ok(VariantRun {
        variant,
        seed,
        preferences: evals,
        hv: front.hypervolume()?,
        front: front.members.iter().map(|(i, y)| (all[*i].0.clone(), y.clone())).collect(),
    })
}

pub fn synthetic_cor_test(cfg: &RunConfig, oracle: &SyntheticOracle, seed: u64) -> Result<Vec<State>, RunError> {
    if cfg.synthetic.cor_test_size == 0 || !enumerable(&oracle.env) {
        return Ok(Vec::new());
    }
    Ok(correlation_test_set(
        oracle,
        cfg.synthetic.cor_test_size,
        &mut substream(seed, "cor-test", 0),
    )?)
}

pub fn run_synthetic(cfg: &RunConfig, out: &Path) -> Result<Vec<VariantRun>, RunError> {
    let oracle = cfg.oracle()?;
    let m = oracle.objectives();
    let mut runs = Vec::new();
    let mut train_log = Table::new(&[
        "variant", "seed", "model", "step", "loss", "source", "preference", "mean_reward", "grad_norm",
    ]);
    for &seed in &cfg.seeds {
        let cor_test = synthetic_cor_test(cfg, &oracle, seed)?;
        for &variant in &cfg.synthetic.variants {
            log::info!("synthetic: seed {seed}, {}", variant.name());
            let trained = train_synthetic_variant(cfg, &oracle, variant, seed)?;
            for (label, r) in &trained.log {
                train_log.push(vec![
                    variant.name().into(),
                    seed.to_string(),
                    label.clone(),
                    r.step.to_string(),
                    num(r.loss),
                    r.source.name().into(),
                    joined(&r.pref),
                    num(r.mean_reward),
                    num(r.grad_norm),
                ]);
            }
            runs.push(evaluate_synthetic_variant(cfg, &oracle, variant, &trained.models, seed, &cor_test)?);
        }
    }
    train_log.write(&out.join("train_round_0.csv"))?;

    let mut header: Vec<String> = ["variant", "seed", "preference", "l1", "cor", "div"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(objective_header("top_mean_f", m));
    let mut prefs = Table::new(&header);
    let mut header: Vec<String> = vec!["variant".into(), "seed".into(), "object".into()];
    header.extend(objective_header("f", m));
    let mut front = Table::new(&header);
    for r in &runs {
        for p in &r.preferences {
            let mut row = vec![
                r.variant.name().into(),
                r.seed.to_string(),
                joined(&p.preference),
                opt(p.l1),
                opt(p.cor),
                opt(p.div),
            ];
            row.extend(p.top_means.iter().map(|v| num(*v)));
            prefs.push(row);
        }
        for (x, y) in &r.front {
            let mut row = vec![r.variant.name().into(), r.seed.to_string(), x.encode()];
            row.extend(y.iter().map(|v| num(*v)));
            front.push(row);
        }
    }
    prefs.write(&out.join("preferences.csv"))?;
    front.write(&out.join("front.csv"))?;

    let mut metrics = Table::new(&[
        "variant", "seeds", "hv_mean", "hv_sd", "div_mean", "div_sd", "cor_mean", "cor_sd", "l1_mean", "l1_sd",
    ]);
    for &variant in &cfg.synthetic.variants {
        let of: Vec<&VariantRun> = runs.iter().filter(|r| r.variant == variant).collect();
        let (hv, hv_sd) = mean_sd(&of.iter().map(|r| r.hv).collect::<Vec<_>>());
        let (div, div_sd) = mean_sd_opt(&of.iter().map(|r| r.mean_div()).collect::<Vec<_>>());
        let (cor, cor_sd) = mean_sd_opt(&of.iter().map(|r| r.mean_cor()).collect::<Vec<_>>());
        let (l1, l1_sd) = mean_sd_opt(&of.iter().map(|r| r.mean_l1()).collect::<Vec<_>>());
        metrics.push(vec![
            variant.name().into(),
            of.len().to_string(),
            num(hv),
            num(hv_sd),
            opt(div),
            opt(div_sd),
            opt(cor),
            opt(cor_sd),
            opt(l1),
            opt(l1_sd),
        ]);
    }
    metrics.write(&out.join("metrics.csv"))?;
    Ok(runs)
}

// ---------------------------------------------------------------- mobo

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub state: RunState,
    pub random_hv: Option<Vec<f64>>,
}

impl SeedRun {
    pub fn hv(&self) -> Vec<f64> {
        self.state.reports.iter().map(|r| r.hv).collect()
    }

    pub fn final_hv(&self) -> f64 {
        self.state.reports.last().map(|r| r.hv).unwrap_or(0.0)
    }
}

/// Writes per-round artifacts under `dir` as rounds finish, so an aborted
/// run leaves a consistent checkpoint behind.
struct RoundWriter {
    dir: PathBuf,
    objectives: usize,
    steps: Vec<StepRecord>,
}

impl RoundWriter {
    fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
}

fn mobo_io(path: &Path) -> impl FnOnce(std::io::Error) -> MoboError + '_ {
    move |e| MoboError::Observer(format!("{}: {e}", path.display()))
}

impl MoboObserver for RoundWriter {
    fn train_step(&mut self, _round: usize, record: &StepRecord) -> Result<(), MoboError> {
        self.steps.push(record.clone());
        Ok(())
    }

    fn round_done(&mut self, state: &RunState) -> Result<(), MoboError> {
        let round = state.completed_rounds;
        if round > 0 {
            let mut header: Vec<String> = ["step", "loss", "source"].iter().map(|s| s.to_string()).collect();
            header.extend(objective_header("lambda", self.objectives));
            header.extend(["mean_reward".to_string(), "grad_norm".to_string()]);
            let mut t = Table::new(&header);
            for r in self.steps.drain(..) {
                let mut row = vec![r.step.to_string(), num(r.loss), r.source.name().into()];
                row.extend(r.pref.iter().map(|v| num(*v)));
                row.extend([num(r.mean_reward), num(r.grad_norm)]);
                t.push(row);
            }
            t.write(&self.dir.join(format!("train_round_{round}.csv")))
                .map_err(|e| MoboError::Observer(e.to_string()))?;
        }
        let jsonl = self.dir.join("rounds.jsonl");
        let mut f = File::create(&jsonl).map_err(mobo_io(&jsonl))?;
        for r in &state.reports {
            let line = serde_json::to_string(r).map_err(|e| MoboError::Observer(e.to_string()))?;
            writeln!(f, "{line}").map_err(mobo_io(&jsonl))?;
        }
        let ck = self.checkpoint();
        let tmp = ck.with_extension("json.tmp");
        let text = serde_json::to_string(state).map_err(|e| MoboError::Observer(e.to_string()))?;
        fs::write(&tmp, text).map_err(mobo_io(&tmp))?;
        fs::rename(&tmp, &ck).map_err(mobo_io(&ck))
    }
}

/// One seed of the optimization loop, resuming from `dir/checkpoint.json`
/// when asked and present.
pub fn run_mobo_seed(
    cfg: &MoboConfig,
    oracle: &SyntheticOracle,
    seed: u64,
    dir: Option<&Path>,
    resume: bool,
    random_baseline: bool,
) -> Result<SeedRun, RunError> {
    let state = match dir {
        None => run_mobo(cfg, oracle, seed, None, &mut ())?,
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let mut writer = RoundWriter {
                dir: dir.to_path_buf(),
                objectives: oracle.objectives(),
                steps: Vec::new(),
            };
            let ck = writer.checkpoint();
            let previous = if resume && ck.exists() {
                let text = fs::read_to_string(&ck).map_err(io_err(&ck))?;
                let s: RunState = serde_json::from_str(&text)
                    .map_err(|e| RunError::Runtime(format!("{}: {e}", ck.display())))?;
                log::info!("seed {seed}: resuming after round {}", s.completed_rounds);
                Some(s)
            } else {
                None
            };
            run_mobo(cfg, oracle, seed, previous, &mut writer).map_err(|e| RunError::Aborted {
                message: format!("seed {seed}: {e}"),
                checkpoint: ck.clone(),
            })?
        }
    };
    let random_hv = if random_baseline {
        Some(run_random_baseline(cfg, oracle, seed)?)
    } else {
        None
    };
    Ok(SeedRun {
        seed,
        state,
        random_hv,
    })
}

/// Hypervolume of the true front: from the fixture when configured,
/// otherwise by enumeration when the environment allows it.
pub fn reference_hv(cfg: &RunConfig, oracle: &SyntheticOracle) -> Result<Option<f64>, RunError> {
    let reference = cfg.mobo_config().reference_for(oracle.objectives());
    if let Some(path) = &cfg.mobo.fixture {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let fx: FrontFixture = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        fx.check(&oracle.env)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        if fx.reference != reference {
            return Err(ConfigError::Invalid(format!("{}: fixture reference point differs", path.display())).into());
        }
        return Ok(Some(fx.hv_star));
    }
    if !enumerable(&oracle.env) {
        return Ok(None);
    }
    let fx = FrontFixture::build(&oracle.env, |x| oracle.evaluate(x).unwrap_or_default(), &reference)?;
    Ok(Some(fx.hv_star))
}

/// Round-one training curve: mean over targets of the average reward of the
/// best `top` objects among `samples` rollouts, every `every` steps.
pub fn hindsight_curve(
    cfg: &MoboConfig,
    oracle: &SyntheticOracle,
    seed: u64,
    gamma: f64,
    every: usize,
    samples: usize,
    top: usize,
) -> Result<Vec<(usize, f64)>, RunError> {
    let dataset = init_dataset(oracle, cfg.initial, &mut substream(seed, "init", 0))?;
    let ctx = prepare_round(cfg, oracle, &dataset, seed, 1)?;
    let reward = ctx.acquisition(cfg, oracle.env);
    let mut model = FlowModel::new(
        oracle.env,
        oracle.objectives(),
        cfg.conditioning,
        cfg.model.clone(),
        &mut substream(seed, "model-init", 1),
    )?;
    let train = paretoflow::trainer::TrainConfig {
        hindsight_gamma: gamma,
        ..cfg.train.clone()
    };
    let mut trainer = Trainer::new(&model, train, ctx.targets.clone(), dataset.objects())?;
    let mut rng = substream(seed, "train", 1);
    let mut curve = Vec::new();
    let mut done = 0;
    while done < cfg.train.steps {
        let n = every.min(cfg.train.steps - done);
        trainer.train(&mut model, &reward, n, &mut rng, |_, _| Ok(()))?;
        done += n;
        let value = average_top_k_reward(
            &model,
            &ctx.targets,
            &reward,
            samples,
            top,
            &mut substream(seed, "curve", done as u64),
        )?;
        curve.push((done, value));
    }
    Ok(curve)
}

/// Checkpoints of a training curve as (step, value).
pub type Curve = Vec<(usize, f64)>;

pub struct MoboOutcome {
    pub runs: Vec<SeedRun>,
    pub hv_star: Option<f64>,
    /// (gamma, seed, curve)
    pub curves: Vec<(f64, u64, Curve)>,
}

pub fn run_mobo_command(cfg: &RunConfig, out: &Path, resume: bool) -> Result<MoboOutcome, RunError> {
    let oracle = cfg.oracle()?;
    let m = oracle.objectives();
    let mcfg = cfg.mobo_config();
    let hv_star = reference_hv(cfg, &oracle)?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("mobo: seed {seed}");
        let dir = out.join(format!("seed_{seed}"));
        runs.push(run_mobo_seed(&mcfg, &oracle, seed, Some(&dir), resume, cfg.mobo.random_baseline)?);
    }

    let mut rounds = Table::new(&["seed", "round", "dataset_size", "hv", "div", "cor", "random_hv"]);
    let mut header: Vec<String> = vec!["seed".into(), "object".into()];
    header.extend(objective_header("f", m));
    let mut front = Table::new(&header);
    for run in &runs {
        for (i, r) in run.state.reports.iter().enumerate() {
            rounds.push(vec![
                run.seed.to_string(),
                r.round.to_string(),
                r.dataset_size.to_string(),
                num(r.hv),
                opt(r.div),
                opt(r.cor),
                opt(run.random_hv.as_ref().and_then(|h| h.get(i).copied())),
            ]);
        }
        let reference = mcfg.reference_for(m);
        let f = run.state.dataset.front(&reference);
        for (i, y) in &f.members {
            let mut row = vec![run.seed.to_string(), run.state.dataset.points[*i].state.encode()];
            row.extend(y.iter().map(|v| num(*v)));
            front.push(row);
        }
    }
    rounds.write(&out.join("rounds.csv"))?;
    front.write(&out.join("front.csv"))?;

    let mut metrics = Table::new(&[
        "round", "hv_mean", "hv_sd", "div_mean", "div_sd", "cor_mean", "cor_sd", "random_hv_mean", "random_hv_sd",
        "hv_star",
    ]);
    for round in 0..=mcfg.rounds {
        let at = |f: &dyn Fn(&SeedRun) -> Option<f64>| -> (Option<f64>, Option<f64>) {
            mean_sd_opt(&runs.iter().map(f).collect::<Vec<_>>())
        };
        let (hv, hv_sd) = at(&|r| r.state.reports.get(round).map(|x| x.hv));
        let (div, div_sd) = at(&|r| r.state.reports.get(round).and_then(|x| x.div));
        let (cor, cor_sd) = at(&|r| r.state.reports.get(round).and_then(|x| x.cor));
        let (rh, rh_sd) = at(&|r| r.random_hv.as_ref().and_then(|h| h.get(round).copied()));
        metrics.push(vec![
            round.to_string(),
            opt(hv),
            opt(hv_sd),
            opt(div),
            opt(div_sd),
            opt(cor),
            opt(cor_sd),
            opt(rh),
            opt(rh_sd),
            opt(hv_star),
        ]);
    }
    metrics.write(&out.join("metrics.csv"))?;

    let mut summary = Table::new(&["seed", "initial_hv", "final_hv", "hv_fraction", "random_final_hv", "mean_batch_div"]);
    for run in &runs {
        let divs: Vec<f64> = run.state.reports.iter().skip(1).filter_map(|r| r.div).collect();
        summary.push(vec![
            run.seed.to_string(),
            num(run.state.reports[0].hv),
            num(run.final_hv()),
            opt(hv_star.map(|h| run.final_hv() / h)),
            opt(run.random_hv.as_ref().and_then(|h| h.last().copied())),
            opt((!divs.is_empty()).then(|| divs.iter().sum::<f64>() / divs.len() as f64)),
        ]);
    }
    summary.write(&out.join("summary.csv"))?;

    let mut curves = Vec::new();
    if !cfg.mobo.gamma_sweep.is_empty() {
        let mut t = Table::new(&["gamma", "seed", "step", "average_top_reward"]);
        for &gamma in &cfg.mobo.gamma_sweep {
            for &seed in &cfg.seeds {
                log::info!("hindsight curve: gamma {gamma}, seed {seed}");
                let c = hindsight_curve(
                    &mcfg,
                    &oracle,
                    seed,
                    gamma,
                    cfg.mobo.curve_every,
                    cfg.mobo.curve_samples,
                    cfg.mobo.curve_top,
                )?;
                for (step, v) in &c {
                    t.push(vec![num(gamma), seed.to_string(), step.to_string(), num(*v)]);
                }
                curves.push((gamma, seed, c));
            }
        }
        t.write(&out.join("hindsight.csv"))?;
    }
    Ok(MoboOutcome { runs, hv_star, curves })
}

// ---------------------------------------------------------------- ablation

pub struct AblationCell {
    pub alpha: Vec<f64>,
    pub scalarization: paretoflow::pareto::Scalarization,
    pub runs: Vec<SeedRun>,
}

pub fn run_ablation(cfg: &RunConfig, out: &Path) -> Result<Vec<AblationCell>, RunError> {
    let oracle = cfg.oracle()?;
    let mut cells = Vec::new();
    let mut rounds = Table::new(&["alpha", "scalarization", "seed", "round", "dataset_size", "hv", "div", "cor"]);
    let mut metrics = Table::new(&["alpha", "scalarization", "hv_mean", "hv_sd", "div_mean", "div_sd"]);
    for alpha in &cfg.ablation.alphas {
        for &scal in &cfg.ablation.scalarizations {
            let mut mcfg = cfg.mobo_config();
            mcfg.train.alpha = alpha.clone();
            mcfg.scalarization = scal;
            let mut runs = Vec::new();
            for &seed in &cfg.seeds {
                log::info!("ablation: alpha {alpha:?}, {}, seed {seed}", scal.name());
                runs.push(run_mobo_seed(&mcfg, &oracle, seed, None, false, false)?);
            }
            let a = joined(alpha);
            let mut finals = Vec::new();
            let mut divs = Vec::new();
            for run in &runs {
                for r in &run.state.reports {
                    rounds.push(vec![
                        a.clone(),
                        scal.name().into(),
                        run.seed.to_string(),
                        r.round.to_string(),
                        r.dataset_size.to_string(),
                        num(r.hv),
                        opt(r.div),
                        opt(r.cor),
                    ]);
                }
                finals.push(run.final_hv());
                let d: Vec<f64> = run.state.reports.iter().skip(1).filter_map(|r| r.div).collect();
                divs.push((!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64));
            }
            let (hv, hv_sd) = mean_sd(&finals);
            let (div, div_sd) = mean_sd_opt(&divs);
            metrics.push(vec![a, scal.name().into(), num(hv), num(hv_sd), opt(div), opt(div_sd)]);
            cells.push(AblationCell {
                alpha: alpha.clone(),
                scalarization: scal,
                runs,
            });
        }
    }
    rounds.write(&out.join("rounds.csv"))?;
    metrics.write(&out.join("metrics.csv"))?;
    Ok(cells)
}

// ---------------------------------------------------------------- fixtures

pub fn run_oracle_fixtures(cfg: &RunConfig, out: &Path) -> Result<FrontFixture, RunError> {
    let oracle = cfg.oracle()?;
    let m = oracle.objectives();
    let reference = cfg.mobo_config().reference_for(m);
    let failed = std::cell::RefCell::new(None);
    let fx = FrontFixture::build(
        &oracle.env,
        |x| match oracle.evaluate(x) {
            Ok(y) => y,
            Err(e) => {
                failed.borrow_mut().get_or_insert(e);
                vec![0.0; m]
            }
        },
        &reference,
    )?;
    if let Some(e) = failed.into_inner() {
        return Err(e.into());
    }
    let path = out.join("front_fixture.json");
    let text = serde_json::to_string_pretty(&fx).map_err(|e| RunError::Runtime(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    let mut header: Vec<String> = vec!["object".into()];
    header.extend(objective_header("f", m));
    let mut front = Table::new(&header);
    for (x, y) in &fx.front {
        let mut row = vec![x.clone()];
        row.extend(y.iter().map(|v| num(*v)));
        front.push(row);
    }
    front.write(&out.join("front.csv"))?;
    let mut metrics = Table::new(&["spec_hash", "terminals", "front_size", "hv_star"]);
    metrics.push(vec![
        fx.spec_hash.clone(),
        fx.terminals.to_string(),
        fx.front.len().to_string(),
        num(fx.hv_star),
    ]);
    metrics.write(&out.join("metrics.csv"))?;
    Ok(fx)
}
