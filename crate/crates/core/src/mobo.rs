//! The outer optimization loop: fit a surrogate on the evaluated dataset,
//! train the preference-conditioned flow model on shaped acquisition
//! rewards, propose a batch per target preference and evaluate it.

use crate::env::{EnvError, EnvSpec, State};
use crate::gflownet::{Conditioning, FlowModel, FlowModelConfig, GfnError};
use crate::nn::DenseMatrix;
use crate::oracle::{exact_policy_distribution, OracleError};
use crate::pareto::{
    diversity, sample_dirichlet, spearman, DirichletParams, ParetoError, ParetoFront,
    PreferenceVector, Scalarization,
};
use crate::seeds::substream;
use crate::surrogate::{
    common_normals, featurize_all, AcquisitionReward, FitReport, Surrogate, SurrogateConfig,
    SurrogateError,
};
use crate::trainer::{
    sample_candidates, shape_reward, RewardModel, StepRecord, TrainConfig, TrainError, Trainer,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoboError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gfn(#[from] GfnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment cannot supply {wanted} distinct objects (has {available})")]
    TooSmall { wanted: usize, available: usize },
    #[error("{0}")]
    Observer(String),
}

/// Objectives `f_m(x) = 1 − ½‖p(x) − c_m‖₁` between the normalized feature
/// histogram of an object and a target profile per objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub env: EnvSpec,
    pub profiles: Vec<Vec<f64>>,
}

impl SyntheticOracle {
    pub fn new(env: EnvSpec, profiles: Vec<Vec<f64>>) -> Result<Self, MoboError> {
        let bins = env.components() + 1;
        for c in &profiles {
            let sum: f64 = c.iter().sum();
            if c.len() != bins || c.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(MoboError::Config(format!(
                    "profile {c:?} is not a distribution over {bins} bins"
                )));
            }
        }
        for (i, a) in profiles.iter().enumerate() {
            if profiles[..i].contains(a) {
                return Err(MoboError::Config(format!("duplicate profile {a:?}")));
            }
        }
        if profiles.is_empty() {
            return Err(MoboError::Config("at least one profile required".into()));
        }
        Ok(Self { env, profiles })
    }

    /// Profiles equal to the histograms of the given anchor objects.
    pub fn from_anchors(env: EnvSpec, anchors: &[Vec<u16>]) -> Result<Self, MoboError> {
        let profiles = anchors
            .iter()
            .map(|a| {
                histogram(
                    &env,
                    &State {
                        components: a.clone(),
                        terminal: true,
                    },
                )
            })
            .collect();
        Self::new(env, profiles)
    }

    /// Two conflicting objectives anchored at opposite extremes: the first
    /// half of the components filled versus the second half.
    pub fn reference_two(env: EnvSpec) -> Result<Self, MoboError> {
        let (first, second) = opposite_anchors(&env);
        Self::from_anchors(env, &[first, second])
    }

    /// The two conflicting objectives plus a uniformity profile (equal mass
    /// in every bin) and a sparsity profile (all mass in the slack bin).
    pub fn reference_four(env: EnvSpec) -> Result<Self, MoboError> {
        let base = Self::reference_two(env)?;
        let bins = env.components() + 1;
        let mut profiles = base.profiles;
        profiles.push(vec![1.0 / bins as f64; bins]);
        let mut sparse = vec![0.0; bins];
        sparse[bins - 1] = 1.0;
        profiles.push(sparse);
        Self::new(env, profiles)
    }

    pub fn objectives(&self) -> usize {
        self.profiles.len()
    }

    pub fn evaluate(&self, x: &State) -> Result<Vec<f64>, MoboError> {
        if !x.terminal {
            return Err(MoboError::Env(EnvError::Contract(format!(
                "oracle evaluated at non-terminal {x}"
            ))));
        }
        let p = histogram(&self.env, x);
        Ok(self.profiles.iter().map(|c| profile_score(&p, c)).collect())
    }
}

fn opposite_anchors(env: &EnvSpec) -> (Vec<u16>, Vec<u16>) {
    let n = env.components();
    let mut first = vec![0u16; n];
    let mut second = vec![0u16; n];
    match *env {
        EnvSpec::HyperGrid { side, .. } => {
            let half = n.div_ceil(2);
            for i in 0..n {
                if i < half || n == 1 {
                    first[i] = (side - 1) as u16;
                }
                if i >= n / 2 {
                    second[i] = (side - 1) as u16;
                }
            }
            if n == 1 {
                second[0] = 0;
            }
        }
        EnvSpec::BagBuilder { max_items, .. } => {
            first[0] = max_items as u16;
            if n == 1 {
                second[0] = 0;
            } else {
                second[n - 1] = max_items as u16;
            }
        }
    }
    (first, second)
}

/// Normalized histogram over `components + 1` bins, the last being slack.
/// Grid: coordinate / (D·(H−1)). Bag: count / T.
pub fn histogram(env: &EnvSpec, x: &State) -> Vec<f64> {
    let scale = match *env {
        EnvSpec::HyperGrid { dims, side } => (dims * (side - 1)) as f64,
        EnvSpec::BagBuilder { max_items, .. } => max_items as f64,
    };
    let mut p: Vec<f64> = x.components.iter().map(|&c| c as f64 / scale).collect();
    let used: f64 = p.iter().sum();
    p.push((1.0 - used).max(0.0));
    p
}

/// `1 − ½‖p − c‖₁`.
pub fn profile_score(p: &[f64], c: &[f64]) -> f64 {
    1.0 - 0.5 * p.iter().zip(c).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Shaped true-oracle scalarization; the reward of the stand-alone
/// (surrogate-free) scenario.
pub struct OracleReward<'a> {
    pub oracle: &'a SyntheticOracle,
    pub scalarization: Scalarization,
    pub shaping: TrainConfig,
}

impl OracleReward<'_> {
    pub fn reward(&self, pref: &PreferenceVector, x: &State) -> Result<f64, MoboError> {
        let y = self.oracle.evaluate(x)?;
        Ok(shape_reward(self.scalarization.apply(pref, &y)?, &self.shaping))
    }
}

impl RewardModel for OracleReward<'_> {
    fn rewards(&self, pref: &PreferenceVector, objects: &[State]) -> Result<Vec<f64>, TrainError> {
        objects
            .iter()
            .map(|x| self.reward(pref, x).map_err(|e| TrainError::Reward(e.to_string())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub state: State,
    pub y: Vec<f64>,
    pub round: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn objects(&self) -> Vec<State> {
        self.points.iter().map(|p| p.state.clone()).collect()
    }

    pub fn object_set(&self) -> HashSet<State> {
        self.points.iter().map(|p| p.state.clone()).collect()
    }

    pub fn ys(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.y.clone()).collect()
    }

    /// Appends points, rejecting any object already present.
    pub fn extend(&mut self, points: Vec<DataPoint>) -> Result<(), MoboError> {
        let mut seen = self.object_set();
        for p in &points {
            if !seen.insert(p.state.clone()) {
                return Err(MoboError::Config(format!("duplicate object {}", p.state)));
            }
            if p.y.iter().any(|v| !v.is_finite()) {
                return Err(MoboError::Config(format!("non-finite objectives at {}", p.state)));
            }
        }
        self.points.extend(points);
        Ok(())
    }

    pub fn matrices(&self, env: &EnvSpec) -> Result<(DenseMatrix, DenseMatrix), MoboError> {
        let x = featurize_all(env, &self.objects());
        let y = DenseMatrix::from_rows(&self.ys()).map_err(SurrogateError::from)?;
        Ok((x, y))
    }

    pub fn front(&self, reference: &[f64]) -> ParetoFront {
        ParetoFront::from_points(&self.ys(), reference)
    }

    pub fn hypervolume(&self, reference: &[f64]) -> Result<f64, MoboError> {
        Ok(self.front(reference).hypervolume()?)
    }
}

/// Terminal state of a rollout that picks uniformly among legal actions.
pub fn uniform_rollout<R: Rng + ?Sized>(env: &EnvSpec, rng: &mut R) -> Result<State, EnvError> {
    let mut s = env.initial_state();
    loop {
        let actions = env.allowed_actions(&s)?;
        s = env.apply_action(&s, actions[rng.random_range(0..actions.len())])?;
        if s.terminal {
            return Ok(s);
        }
    }
}

/// `n` distinct objects from uniform rollouts, skipping anything in
/// `exclude`.
pub fn uniform_objects<R: Rng + ?Sized>(
    env: &EnvSpec,
    n: usize,
    exclude: &HashSet<State>,
    rng: &mut R,
) -> Result<Vec<State>, MoboError> {
    let available = env.content_count().saturating_sub(exclude.len());
    if n > available {
        return Err(MoboError::TooSmall { wanted: n, available });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let cap = 1000 * n.max(1);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == cap {
            return Err(MoboError::TooSmall { wanted: n, available: out.len() });
        }
        attempts += 1;
        let x = uniform_rollout(env, rng)?;
        if !exclude.contains(&x) && seen.insert(x.clone()) {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn evaluate_all(oracle: &SyntheticOracle, xs: Vec<State>, round: usize) -> Result<Vec<DataPoint>, MoboError> {
    xs.into_iter()
        .map(|state| {
            Ok(DataPoint {
                y: oracle.evaluate(&state)?,
                state,
                round,
            })
        })
        .collect()
}

pub fn init_dataset<R: Rng + ?Sized>(
    oracle: &SyntheticOracle,
    n: usize,
    rng: &mut R,
) -> Result<Dataset, MoboError> {
    if n == 0 {
        return Err(MoboError::Config("initial dataset size must be positive".into()));
    }
    let xs = uniform_objects(&oracle.env, n, &HashSet::new(), rng)?;
    let mut d = Dataset::default();
    d.extend(evaluate_all(oracle, xs, 0)?)?;
    Ok(d)
}

pub fn build_target_preferences<R: Rng + ?Sized>(
    alpha: &DirichletParams,
    k: usize,
    rng: &mut R,
) -> Vec<PreferenceVector> {
    (0..k).map(|_| sample_dirichlet(alpha, rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoboConfig {
    pub rounds: usize,
    pub batch: usize,
    pub initial: usize,
    /// Target preferences per round; defaults to 5 for two objectives and
    /// 10 otherwise.
    pub k: Option<usize>,
    pub scalarization: Scalarization,
    pub ucb_beta: f64,
    pub acquisition_samples: usize,
    pub reference: Option<Vec<f64>>,
    pub conditioning: Conditioning,
    /// Objects in the rank-correlation test set (0 disables the metric).
    pub cor_test_size: usize,
    pub model: FlowModelConfig,
    pub train: TrainConfig,
    pub surrogate: SurrogateConfig,
}

impl Default for MoboConfig {
    fn default() -> Self {
        Self {
            rounds: 8,
            batch: 100,
            initial: 200,
            k: None,
            scalarization: Scalarization::WeightedSum,
            ucb_beta: 0.1,
            acquisition_samples: 64,
            reference: None,
            conditioning: Conditioning::Hypernet,
            cor_test_size: 5000,
            model: FlowModelConfig::default(),
            train: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
        }
    }
}

impl MoboConfig {
    pub fn k_for(&self, objectives: usize) -> usize {
        self.k.unwrap_or(if objectives <= 2 { 5 } else { 10 })
    }

    pub fn reference_for(&self, objectives: usize) -> Vec<f64> {
        self.reference.clone().unwrap_or_else(|| vec![0.0; objectives])
    }

    pub fn validate(&self, objectives: usize) -> Result<(), MoboError> {
        let k = self.k_for(objectives);
        if self.batch == 0 || k == 0 || k > self.batch {
            return Err(MoboError::Config(format!(
                "need 1 <= k <= batch, got k={k}, batch={}",
                self.batch
            )));
        }
        if self.ucb_beta < 0.0 {
            return Err(MoboError::Config("ucb_beta must be nonnegative".into()));
        }
        if self.reference_for(objectives).len() != objectives {
            return Err(MoboError::Config("reference point length differs from objectives".into()));
        }
        if self.train.alpha.len() != objectives {
            return Err(MoboError::Config(format!(
                "alpha has {} entries for {objectives} objectives",
                self.train.alpha.len()
            )));
        }
        if self.conditioning == Conditioning::Unconditional && k > 1 {
            return Err(MoboError::Config(
                "unconditional models can serve only one target preference".into(),
            ));
        }
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub object: String,
    pub y: Vec<f64>,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub dataset_size: usize,
    /// Cumulative hypervolume of the dataset after this round.
    pub hv: f64,
    /// Diversity of this round's batch (of the initial dataset for round 0).
    pub div: Option<f64>,
    /// Mean over targets of Spearman(log π_λ(x), R_λ(x)) on the test set.
    pub cor: Option<f64>,
    pub targets: Vec<Vec<f64>>,
    pub candidates: Vec<CandidateRecord>,
    pub surrogate: Option<FitReport>,
    pub final_loss: Option<f64>,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

/// Everything needed to continue a run after the last completed round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub seed: u64,
    pub completed_rounds: usize,
    pub dataset: Dataset,
    pub model: Option<FlowModel>,
    pub reports: Vec<RoundReport>,
}

pub trait MoboObserver {
    fn train_step(&mut self, _round: usize, _record: &StepRecord) -> Result<(), MoboError> {
        Ok(())
    }

    fn round_done(&mut self, _state: &RunState) -> Result<(), MoboError> {
        Ok(())
    }
}

impl MoboObserver for () {}

/// Test objects for the rank-correlation metric: uniform rollouts accepted
/// by rejection so that each objective's histogram over ten equal-width bins
/// is roughly flat. The union over objectives, without repeats.
pub fn correlation_test_set<R: Rng + ?Sized>(
    oracle: &SyntheticOracle,
    size: usize,
    rng: &mut R,
) -> Result<Vec<State>, MoboError> {
    const BINS: usize = 10;
    let m = oracle.objectives();
    let quota = (size / (m * BINS)).max(1);
    let mut out: Vec<State> = Vec::new();
    let mut seen = HashSet::new();
    for obj in 0..m {
        let mut counts = [0usize; BINS];
        let mut attempts = 0;
        while counts.iter().any(|&c| c < quota) && attempts < 50 * size.max(1) {
            attempts += 1;
            let x = uniform_rollout(&oracle.env, rng)?;
            let v = oracle.evaluate(&x)?[obj];
            let bin = ((v * BINS as f64) as usize).min(BINS - 1);
            if counts[bin] < quota {
                counts[bin] += 1;
                if seen.insert(x.clone()) {
                    out.push(x);
                }
            }
        }
    }
    Ok(out)
}

/// Mean over `targets` of Spearman's ρ between the exact log-probability
/// the model assigns to each test object and its shaped true reward.
pub fn correlation_metric(
    model: &FlowModel,
    targets: &[PreferenceVector],
    reward: &dyn RewardModel,
    test: &[State],
) -> Result<Option<f64>, MoboError> {
    if test.len() < 3 || targets.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for pref in targets {
        let cond = model.conditioning.is_conditional().then_some(pref);
        let dist = exact_policy_distribution(model, cond)?.to_map();
        let logp: Vec<f64> = test.iter().map(|x| dist[x].max(f64::MIN_POSITIVE).ln()).collect();
        let r = reward.rewards(pref, test)?;
        match spearman(&logp, &r) {
            Ok(c) => total += c,
            Err(ParetoError::Undefined(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(total / targets.len() as f64))
}

fn div_of(states: &[State]) -> Option<f64> {
    let comps: Vec<&[u16]> = states.iter().map(|s| s.components.as_slice()).collect();
    diversity(&comps).ok()
}

/// Per-round inputs to flow-model training: the surrogate fitted on the
/// current dataset, this round's target preferences and the shared normal
/// draws used by the Tchebycheff acquisition.
pub struct RoundContext {
    pub surrogate: Surrogate,
    pub fit: FitReport,
    pub targets: Vec<PreferenceVector>,
    pub normals: Vec<Vec<f64>>,
}

impl RoundContext {
    pub fn acquisition(&self, cfg: &MoboConfig, env: EnvSpec) -> AcquisitionReward<'_> {
        AcquisitionReward {
            surrogate: &self.surrogate,
            env,
            scalarization: cfg.scalarization,
            beta: cfg.ucb_beta,
            normals: self.normals.clone(),
            shaping: cfg.train.clone(),
        }
    }
}

pub fn prepare_round(
    cfg: &MoboConfig,
    oracle: &SyntheticOracle,
    dataset: &Dataset,
    seed: u64,
    round: usize,
) -> Result<RoundContext, MoboError> {
    let m = oracle.objectives();
    let env = oracle.env;
    let r = round as u64;
    let mut surrogate = Surrogate::new(
        cfg.surrogate.clone(),
        env.feature_len(),
        m,
        &mut substream(seed, "surrogate-init", r),
    );
    let (x, y) = dataset.matrices(&env)?;
    let fit = surrogate.fit(&x, &y, &mut substream(seed, "surrogate", r))?;
    let alpha = cfg.train.dirichlet()?;
    let targets = build_target_preferences(&alpha, cfg.k_for(m), &mut substream(seed, "targets", r));
    let normals = common_normals(cfg.acquisition_samples, m, &mut substream(seed, "acq", r));
    Ok(RoundContext {
        surrogate,
        fit,
        targets,
        normals,
    })
}

/// Runs rounds until `cfg.rounds` are complete, starting from `resume` if
/// given. Every random draw comes from a substream named by component and
/// round, so a resumed run reproduces the uninterrupted one exactly.
pub fn run_mobo(
    cfg: &MoboConfig,
    oracle: &SyntheticOracle,
    seed: u64,
    resume: Option<RunState>,
    observer: &mut dyn MoboObserver,
) -> Result<RunState, MoboError> {
    let m = oracle.objectives();
    cfg.validate(m)?;
    let env = oracle.env;
    let reference = cfg.reference_for(m);
    let truth = OracleReward {
        oracle,
        scalarization: cfg.scalarization,
        shaping: cfg.train.clone(),
    };
    let cor_test = if cfg.cor_test_size > 0 && env.state_count() <= crate::env::DEFAULT_ENUMERATION_CAP {
        correlation_test_set(oracle, cfg.cor_test_size, &mut substream(seed, "cor-test", 0))?
    } else {
        Vec::new()
    };
    let mut state = match resume {
        Some(s) => {
            if s.seed != seed {
                return Err(MoboError::Config(format!(
                    "checkpoint seed {} differs from run seed {seed}",
                    s.seed
                )));
            }
            s
        }
        None => {
            let started = Instant::now();
            let dataset = init_dataset(oracle, cfg.initial, &mut substream(seed, "init", 0))?;
            let report = RoundReport {
                round: 0,
                dataset_size: dataset.len(),
                hv: dataset.hypervolume(&reference)?,
                div: div_of(&dataset.objects()),
                cor: None,
                targets: Vec::new(),
                candidates: Vec::new(),
                surrogate: None,
                final_loss: None,
                seed,
                wall_clock_secs: started.elapsed().as_secs_f64(),
            };
            let s = RunState {
                seed,
                completed_rounds: 0,
                dataset,
                model: None,
                reports: vec![report],
            };
            observer.round_done(&s)?;
            s
        }
    };
    while state.completed_rounds < cfg.rounds {
        let round = state.completed_rounds + 1;
        let started = Instant::now();
        let r = round as u64;
        let ctx = prepare_round(cfg, oracle, &state.dataset, seed, round)?;
        let acquisition = ctx.acquisition(cfg, env);
        let targets = ctx.targets.clone();
        let fit = ctx.fit.clone();
        let mut model = match state.model.take() {
            Some(mut model) if !cfg.train.full_retrain => {
                model.reinit_conditioning(&mut substream(seed, "model-reinit", r));
                model
            }
            _ => FlowModel::new(
                env,
                m,
                cfg.conditioning,
                cfg.model.clone(),
                &mut substream(seed, "model-init", r),
            )?,
        };
        let mut trainer = Trainer::new(&model, cfg.train.clone(), targets.clone(), state.dataset.objects())?;
        let mut last_loss = None;
        let mut observe_err = None;
        trainer.train(
            &mut model,
            &acquisition,
            cfg.train.steps,
            &mut substream(seed, "train", r),
            |rec, _| {
                last_loss = Some(rec.loss);
                if let Err(e) = observer.train_step(round, rec) {
                    observe_err = Some(e.to_string());
                    return Err(TrainError::Config(e.to_string()));
                }
                Ok(())
            },
        )
        .map_err(|e| match observe_err.take() {
            Some(msg) => MoboError::Observer(msg),
            None => e.into(),
        })?;
        let candidates = sample_candidates(
            &model,
            &targets,
            cfg.batch,
            &state.dataset.object_set(),
            &mut substream(seed, "candidates", r),
        )?;
        let batch_states: Vec<State> = candidates.iter().map(|c| c.state.clone()).collect();
        let points = evaluate_all(oracle, batch_states.clone(), round)?;
        let records = candidates
            .iter()
            .zip(&points)
            .map(|(c, p)| CandidateRecord {
                object: c.state.encode(),
                y: p.y.clone(),
                target: c.target,
            })
            .collect();
        state.dataset.extend(points)?;
        let cor = correlation_metric(&model, &targets, &truth, &cor_test)?;
        state.reports.push(RoundReport {
            round,
            dataset_size: state.dataset.len(),
            hv: state.dataset.hypervolume(&reference)?,
            div: div_of(&batch_states),
            cor,
            targets: targets.iter().map(|t| t.weights().to_vec()).collect(),
            candidates: records,
            surrogate: Some(fit),
            final_loss: last_loss,
            seed,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        state.model = Some(model);
        state.completed_rounds = round;
        observer.round_done(&state)?;
    }
    Ok(state)
}

/// Same budget as [`run_mobo`] but every batch is `b` novel objects from
/// uniform rollouts. Returns the cumulative hypervolume after each round.
pub fn run_random_baseline(
    cfg: &MoboConfig,
    oracle: &SyntheticOracle,
    seed: u64,
) -> Result<Vec<f64>, MoboError> {
    let reference = cfg.reference_for(oracle.objectives());
    let mut dataset = init_dataset(oracle, cfg.initial, &mut substream(seed, "init", 0))?;
    let mut hv = vec![dataset.hypervolume(&reference)?];
    for round in 1..=cfg.rounds {
        let xs = uniform_objects(
            &oracle.env,
            cfg.batch,
            &dataset.object_set(),
            &mut substream(seed, "random-baseline", round as u64),
        )?;
        dataset.extend(evaluate_all(oracle, xs, round)?)?;
        hv.push(dataset.hypervolume(&reference)?);
    }
    Ok(hv)
}
