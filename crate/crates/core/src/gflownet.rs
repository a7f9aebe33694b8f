//! Flow predictor, forward policy, trajectory sampling and the
//! flow-matching objective.
//!
//! A [`FlowModel`] is a shared state encoder (the trunk) followed by two
//! prediction heads: an action-indexed head producing log edge flows
//! `log F(s → s')` and a scalar head producing a diagnostic `log F(s)`.
//! The heads can be conditioned on a preference vector in three ways:
//!
//! * `Unconditional`: heads are plain parameters, the preference is ignored.
//! * `Concat`: the preference is appended to the trunk input.
//! * `Hypernet`: a hypernetwork maps the preference to the head parameters;
//!   the trunk is shared across all preferences.
//!
//! Flows are kept in log space. The policy at a state is the softmax of the
//! legal log edge flows, i.e. `F(s → s') / Σ F(s → ·)`.

use crate::env::{ActionId, EnvError, EnvSpec, State, Trajectory};
use crate::nn::{
    clip_global_norm, Activation, AdamState, Checkpoint, DenseMatrix, FeedForwardNet,
    ForwardCache, NetShape, NnError,
};
use crate::pareto::PreferenceVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub const DEFAULT_GRAD_CLIP: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GfnError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("a preference vector is required by {0:?} conditioning")]
    MissingPreference(Conditioning),
    #[error("preference has {got} weights, model expects {expected}")]
    PreferenceLength { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Unconditional,
    Concat,
    Hypernet,
}

impl Conditioning {
    pub fn name(self) -> &'static str {
        match self {
            Conditioning::Unconditional => "unconditional",
            Conditioning::Concat => "concat",
            Conditioning::Hypernet => "hypernet",
        }
    }

    pub fn is_conditional(self) -> bool {
        self != Conditioning::Unconditional
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowModelConfig {
    pub trunk_width: usize,
    pub trunk_depth: usize,
    /// Hidden layer sizes inside each prediction head (empty = linear head).
    pub head_hidden: Vec<usize>,
    pub hyper_width: usize,
    pub hyper_depth: usize,
    /// Scale applied to the initial weights of the hypernetwork output heads.
    pub generated_scale: f64,
}

impl Default for FlowModelConfig {
    fn default() -> Self {
        Self {
            trunk_width: 256,
            trunk_depth: 3,
            head_hidden: Vec::new(),
            hyper_width: 100,
            hyper_depth: 3,
            generated_scale: 0.1,
        }
    }
}

/// Maps a preference vector to the flat parameters of the prediction heads.
/// One linear output head per target layer block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperNet {
    pub body: FeedForwardNet,
    pub heads: Vec<FeedForwardNet>,
}

struct HyperCache {
    body: ForwardCache,
    heads: Vec<ForwardCache>,
}

impl HyperNet {
    fn new<R: Rng + ?Sized>(
        prefs: usize,
        targets: &[NetShape],
        cfg: &FlowModelConfig,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![prefs];
        sizes.extend(std::iter::repeat_n(cfg.hyper_width, cfg.hyper_depth));
        let body = FeedForwardNet::with_shape(
            NetShape::new(sizes, Activation::LeakyRelu, Activation::LeakyRelu),
            rng,
        );
        let mut heads = Vec::new();
        for target in targets {
            let base = target.init_params(rng);
            for l in 0..target.layers() {
                let (w_off, _, _, _) = target.layer_span(l);
                let len = target.layer_len(l);
                let mut head = FeedForwardNet::new(vec![cfg.hyper_width, len], rng);
                let (_, b_off, _, _) = head.shape.layer_span(0);
                for w in &mut head.params[..b_off] {
                    *w *= cfg.generated_scale;
                }
                // Biases start at an ordinary init of the target layer, so the
                // generated weights are a small preference-dependent offset.
                head.params[b_off..].copy_from_slice(&base[w_off..w_off + len]);
                heads.push(head);
            }
        }
        Self { body, heads }
    }

    fn forward(&self, pref: &[f64]) -> Result<(Vec<f64>, HyperCache), NnError> {
        let x = DenseMatrix::from_vec(1, pref.len(), pref.to_vec())?;
        let body = self.body.forward_batch(&x)?;
        let mut out = Vec::new();
        let mut heads = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let c = h.forward_batch(body.output())?;
            out.extend_from_slice(c.output().data());
            heads.push(c);
        }
        Ok((out, HyperCache { body, heads }))
    }

    /// Accumulates gradients of the generated parameters into the body and
    /// head gradient buffers.
    fn backward(
        &self,
        cache: &HyperCache,
        d_generated: &[f64],
        body_grad: &mut [f64],
        head_grads: &mut [Vec<f64>],
    ) -> Result<(), NnError> {
        let mut d_z = DenseMatrix::zeros(1, self.body.shape.output_len());
        let mut off = 0;
        for ((h, c), g) in self.heads.iter().zip(&cache.heads).zip(head_grads.iter_mut()) {
            let len = h.shape.output_len();
            let up = DenseMatrix::from_vec(1, len, d_generated[off..off + len].to_vec())?;
            off += len;
            let dz = h.shape.backward_with(&h.params, c, &up, g)?;
            for (a, b) in d_z.data_mut().iter_mut().zip(dz.data()) {
                *a += b;
            }
        }
        self.body
            .shape
            .backward_with(&self.body.params, &cache.body, &d_z, body_grad)?;
        Ok(())
    }
}

/// Anything that yields unmasked log edge flows for a batch of non-terminal
/// states, one row per state with columns indexed by [`ActionId::index`].
pub trait FlowFunction {
    fn env(&self) -> &EnvSpec;

    fn log_edge_flow_rows(
        &self,
        pref: Option<&PreferenceVector>,
        states: &[State],
    ) -> Result<DenseMatrix, GfnError>;

    /// Forward-policy probabilities per action index (0 for illegal actions).
    fn policy_rows(
        &self,
        pref: Option<&PreferenceVector>,
        states: &[State],
    ) -> Result<Vec<Vec<f64>>, GfnError> {
        let rows = self.log_edge_flow_rows(pref, states)?;
        states
            .iter()
            .enumerate()
            .map(|(i, s)| masked_softmax(&self.env().action_mask(s)?, rows.row(i)))
            .collect()
    }
}

/// Softmax restricted to legal entries; illegal entries get probability 0.
pub fn masked_softmax(mask: &[bool], logits: &[f64]) -> Result<Vec<f64>, GfnError> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GfnError::Contract(format!(
            "non-finite legal log-flows {logits:?}"
        )));
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(v, &m)| if m { (v - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// Numerically stable log Σ exp.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log flows at one state, restricted to its legal actions.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFlows {
    pub actions: Vec<ActionId>,
    pub log_flows: Vec<f64>,
    /// log Σ of the legal edge flows, the state flow used by the policy.
    pub log_state_flow: f64,
    /// Output of the state-flow head (diagnostic; not part of the objective).
    pub log_state_head: f64,
}

struct Evaluation {
    logits: DenseMatrix,
    state_head: DenseMatrix,
    head_params: Vec<f64>,
    trunk: ForwardCache,
    edge: ForwardCache,
    hyper: Option<HyperCache>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub env: EnvSpec,
    pub objectives: usize,
    pub conditioning: Conditioning,
    pub config: FlowModelConfig,
    pub trunk: FeedForwardNet,
    pub edge_shape: NetShape,
    pub state_shape: NetShape,
    /// Flat `[edge head, state head]` parameters; unused under `Hypernet`.
    pub heads: Vec<f64>,
    pub hyper: Option<HyperNet>,
}

impl FlowModel {
    pub fn new<R: Rng + ?Sized>(
        env: EnvSpec,
        objectives: usize,
        conditioning: Conditioning,
        config: FlowModelConfig,
        rng: &mut R,
    ) -> Result<Self, GfnError> {
        env.validate()?;
        if objectives == 0 {
            return Err(GfnError::Contract("at least one objective required".into()));
        }
        let input = env.feature_len()
            + if conditioning == Conditioning::Concat {
                objectives
            } else {
                0
            };
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(config.trunk_width, config.trunk_depth.max(1)));
        let trunk = FeedForwardNet::with_shape(
            NetShape::new(sizes, Activation::LeakyRelu, Activation::LeakyRelu),
            rng,
        );
        let head_sizes = |out: usize| {
            let mut s = vec![config.trunk_width];
            s.extend(&config.head_hidden);
            s.push(out);
            NetShape::new(s, Activation::LeakyRelu, Activation::Identity)
        };
        let edge_shape = head_sizes(env.action_count());
        let state_shape = head_sizes(1);
        let mut model = Self {
            env,
            objectives,
            conditioning,
            config,
            trunk,
            edge_shape,
            state_shape,
            heads: Vec::new(),
            hyper: None,
        };
        model.reinit_conditioning(rng);
        Ok(model)
    }

    /// Draws fresh head parameters (or a fresh hypernetwork) while keeping
    /// the trunk.
    pub fn reinit_conditioning<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.conditioning {
            Conditioning::Hypernet => {
                self.heads.clear();
                self.hyper = Some(HyperNet::new(
                    self.objectives,
                    &[self.edge_shape.clone(), self.state_shape.clone()],
                    &self.config,
                    rng,
                ));
            }
            _ => {
                self.hyper = None;
                self.heads = self.edge_shape.init_params(rng);
                self.heads.extend(self.state_shape.init_params(rng));
            }
        }
    }

    pub fn head_param_count(&self) -> usize {
        self.edge_shape.param_count() + self.state_shape.param_count()
    }

    fn check_pref<'a>(
        &self,
        pref: Option<&'a PreferenceVector>,
    ) -> Result<Option<&'a PreferenceVector>, GfnError> {
        match (self.conditioning, pref) {
            (Conditioning::Unconditional, _) => Ok(None),
            (c, None) => Err(GfnError::MissingPreference(c)),
            (_, Some(p)) if p.len() != self.objectives => Err(GfnError::PreferenceLength {
                expected: self.objectives,
                got: p.len(),
            }),
            (_, Some(p)) => Ok(Some(p)),
        }
    }

    /// Flat `[edge head, state head]` parameters in effect for `pref`.
    pub fn head_params(&self, pref: Option<&PreferenceVector>) -> Result<Vec<f64>, GfnError> {
        let pref = self.check_pref(pref)?;
        match (&self.hyper, pref) {
            (Some(h), Some(p)) => Ok(h.forward(p.weights())?.0),
            _ => Ok(self.heads.clone()),
        }
    }

    fn features(&self, pref: Option<&PreferenceVector>, states: &[State]) -> DenseMatrix {
        let fl = self.env.feature_len();
        let concat = self.conditioning == Conditioning::Concat;
        let width = self.trunk.shape.input_len();
        let mut x = DenseMatrix::zeros(states.len(), width);
        for (i, s) in states.iter().enumerate() {
            let row = x.row_mut(i);
            self.env.featurize_into(s, &mut row[..fl]);
            if concat {
                row[fl..].copy_from_slice(pref.expect("checked").weights());
            }
        }
        x
    }

    fn evaluate(
        &self,
        pref: Option<&PreferenceVector>,
        states: &[State],
    ) -> Result<Evaluation, GfnError> {
        let pref = self.check_pref(pref)?;
        if let Some(s) = states.iter().find(|s| s.terminal) {
            return Err(GfnError::Contract(format!(
                "edge flows requested at terminal state {s}"
            )));
        }
        let (head_params, hyper) = match (&self.hyper, pref) {
            (Some(h), Some(p)) => {
                let (params, cache) = h.forward(p.weights())?;
                (params, Some(cache))
            }
            _ => (self.heads.clone(), None),
        };
        let x = self.features(pref, states);
        let trunk = self.trunk.forward_batch(&x)?;
        let split = self.edge_shape.param_count();
        let edge = self
            .edge_shape
            .forward_with(&head_params[..split], trunk.output())?;
        let state = self
            .state_shape
            .forward_with(&head_params[split..], trunk.output())?;
        Ok(Evaluation {
            logits: edge.output().clone(),
            state_head: state.output().clone(),
            head_params,
            trunk,
            edge,
            hyper,
        })
    }

    pub fn log_edge_flows(
        &self,
        pref: Option<&PreferenceVector>,
        s: &State,
    ) -> Result<EdgeFlows, GfnError> {
        let eval = self.evaluate(pref, std::slice::from_ref(s))?;
        let actions = self.env.allowed_actions(s)?;
        let log_flows: Vec<f64> = actions.iter().map(|a| eval.logits.get(0, a.index())).collect();
        Ok(EdgeFlows {
            log_state_flow: log_sum_exp(&log_flows),
            actions,
            log_flows,
            log_state_head: eval.state_head.get(0, 0),
        })
    }

    /// Legal actions at `s` with their forward-policy probabilities.
    pub fn forward_policy(
        &self,
        pref: Option<&PreferenceVector>,
        s: &State,
    ) -> Result<Vec<(ActionId, f64)>, GfnError> {
        let probs = self.policy_rows(pref, std::slice::from_ref(s))?;
        Ok(self
            .env
            .allowed_actions(s)?
            .into_iter()
            .map(|a| (a, probs[0][a.index()]))
            .collect())
    }

    pub fn sample_trajectory<R: Rng + ?Sized>(
        &self,
        pref: Option<&PreferenceVector>,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Trajectory, GfnError> {
        Ok(self.sample_trajectories(pref, epsilon, 1, rng)?.remove(0))
    }

    /// Rolls out `n` trajectories in lockstep. At each step an action is
    /// drawn uniformly among the legal ones with probability `epsilon`,
    /// otherwise from the forward policy.
    pub fn sample_trajectories<R: Rng + ?Sized>(
        &self,
        pref: Option<&PreferenceVector>,
        epsilon: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Trajectory>, GfnError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(GfnError::Contract(format!("epsilon {epsilon} not in [0,1]")));
        }
        let mut steps: Vec<Vec<(State, ActionId)>> = vec![Vec::new(); n];
        let mut active: Vec<(usize, State)> =
            (0..n).map(|i| (i, self.env.initial_state())).collect();
        while !active.is_empty() {
            let states: Vec<State> = active.iter().map(|(_, s)| s.clone()).collect();
            let needs_policy = epsilon < 1.0;
            let probs = if needs_policy {
                Some(self.policy_rows(pref, &states)?)
            } else {
                None
            };
            let mut next = Vec::with_capacity(active.len());
            for (k, (i, s)) in active.into_iter().enumerate() {
                let legal = self.env.allowed_actions(&s)?;
                let a = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                    legal[rng.random_range(0..legal.len())]
                } else {
                    let row = &probs.as_ref().expect("policy evaluated")[k];
                    sample_index(row, rng).map(ActionId::from_index).ok_or_else(|| {
                        GfnError::Contract(format!("degenerate policy row {row:?}"))
                    })?
                };
                let child = self.env.apply_action(&s, a)?;
                steps[i].push((s, a));
                if !child.terminal {
                    next.push((i, child));
                }
            }
            active = next;
        }
        Ok(steps.into_iter().map(|steps| Trajectory { steps }).collect())
    }

    /// Flow-matching loss on `batch` and its gradient with respect to every
    /// trainable parameter group.
    pub fn fm_loss(
        &self,
        pref: Option<&PreferenceVector>,
        batch: &FmBatch,
    ) -> Result<(f64, ModelGrads), GfnError> {
        let (states, index) = batch.evaluation_states();
        let eval = self.evaluate(pref, &states)?;
        let (loss, d_logits) = fm_terms(&self.env, batch, &index, &eval.logits)?;
        let grads = self.backward(&eval, &d_logits)?;
        Ok((loss, grads))
    }

    fn backward(&self, eval: &Evaluation, d_logits: &DenseMatrix) -> Result<ModelGrads, GfnError> {
        let split = self.edge_shape.param_count();
        let mut d_heads = vec![0.0; self.head_param_count()];
        let d_enc = self.edge_shape.backward_with(
            &eval.head_params[..split],
            &eval.edge,
            d_logits,
            &mut d_heads[..split],
        )?;
        let mut trunk_grad = vec![0.0; self.trunk.param_count()];
        self.trunk
            .shape
            .backward_with(&self.trunk.params, &eval.trunk, &d_enc, &mut trunk_grad)?;
        let mut groups = vec![trunk_grad];
        match (&self.hyper, &eval.hyper) {
            (Some(h), Some(cache)) => {
                let mut body = vec![0.0; h.body.param_count()];
                let mut heads: Vec<Vec<f64>> =
                    h.heads.iter().map(|n| vec![0.0; n.param_count()]).collect();
                h.backward(cache, &d_heads, &mut body, &mut heads)?;
                groups.push(body);
                groups.extend(heads);
            }
            _ => groups.push(d_heads),
        }
        Ok(ModelGrads { groups })
    }

    /// Trainable parameter groups in a fixed order: trunk, then either the
    /// heads or the hypernetwork body followed by its output heads.
    pub fn param_groups(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.trunk.params];
        match &self.hyper {
            Some(h) => {
                out.push(&h.body.params);
                out.extend(h.heads.iter().map(|n| n.params.as_slice()));
            }
            None => out.push(&self.heads),
        }
        out
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.trunk.params];
        match &mut self.hyper {
            Some(h) => {
                out.push(&mut h.body.params);
                out.extend(h.heads.iter_mut().map(|n| n.params.as_mut_slice()));
            }
            None => out.push(&mut self.heads),
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.tags
            .insert("conditioning".into(), self.conditioning.name().into());
        ck.tags.insert("env".into(), self.env.spec_hash());
        ck.tags
            .insert("objectives".into(), self.objectives.to_string());
        ck.push_net("trunk", &self.trunk.shape, &self.trunk.params);
        match &self.hyper {
            Some(h) => {
                ck.push_net("hyper.body", &h.body.shape, &h.body.params);
                for (i, head) in h.heads.iter().enumerate() {
                    ck.push_net(&format!("hyper.head{i}"), &head.shape, &head.params);
                }
            }
            None => {
                let split = self.edge_shape.param_count();
                ck.push_net("edge_head", &self.edge_shape, &self.heads[..split]);
                ck.push_net("state_head", &self.state_shape, &self.heads[split..]);
            }
        }
        ck
    }

    /// Loads parameters into a model of identical architecture.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), GfnError> {
        let expect = |key: &str, value: String| -> Result<(), GfnError> {
            match ck.tags.get(key) {
                Some(v) if *v == value => Ok(()),
                other => Err(GfnError::Contract(format!(
                    "checkpoint tag {key} = {other:?}, expected {value}"
                ))),
            }
        };
        expect("conditioning", self.conditioning.name().into())?;
        expect("env", self.env.spec_hash())?;
        self.trunk.params = ck.read_net("trunk", &self.trunk.shape)?;
        match &mut self.hyper {
            Some(h) => {
                h.body.params = ck.read_net("hyper.body", &h.body.shape)?;
                for (i, head) in h.heads.iter_mut().enumerate() {
                    head.params = ck.read_net(&format!("hyper.head{i}"), &head.shape)?;
                }
            }
            None => {
                let mut heads = ck.read_net("edge_head", &self.edge_shape)?;
                heads.extend(ck.read_net("state_head", &self.state_shape)?);
                self.heads = heads;
            }
        }
        Ok(())
    }
}

impl FlowFunction for FlowModel {
    fn env(&self) -> &EnvSpec {
        &self.env
    }

    fn log_edge_flow_rows(
        &self,
        pref: Option<&PreferenceVector>,
        states: &[State],
    ) -> Result<DenseMatrix, GfnError> {
        if states.is_empty() {
            return Ok(DenseMatrix::zeros(0, self.env.action_count()));
        }
        Ok(self.evaluate(pref, states)?.logits)
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Gradient buffers aligned with [`FlowModel::param_groups`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub groups: Vec<Vec<f64>>,
}

/// Adam over every parameter group of a [`FlowModel`] with global-norm
/// clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptimizer {
    pub adams: Vec<AdamState>,
    pub clip_norm: f64,
}

impl FlowOptimizer {
    pub fn new(model: &FlowModel, learning_rate: f64) -> Self {
        Self {
            adams: model
                .param_groups()
                .iter()
                .map(|g| AdamState::new(g.len(), learning_rate))
                .collect(),
            clip_norm: DEFAULT_GRAD_CLIP,
        }
    }

    /// Clips, then applies one Adam step. Returns the pre-clip gradient norm.
    pub fn step(&mut self, model: &mut FlowModel, mut grads: ModelGrads) -> Result<f64, GfnError> {
        let norm = clip_global_norm(&mut grads.groups, self.clip_norm);
        let mut groups = model.param_groups_mut();
        if groups.len() != self.adams.len() || grads.groups.len() != self.adams.len() {
            return Err(GfnError::Contract(
                "optimizer does not match model parameter groups".into(),
            ));
        }
        for ((adam, params), g) in self.adams.iter_mut().zip(groups.iter_mut()).zip(&grads.groups) {
            adam.step(params, g)?;
        }
        Ok(norm)
    }
}

/// One state of a flow-matching minibatch with its full parent set.
#[derive(Clone, Debug, PartialEq)]
pub struct FmSample {
    pub state: State,
    pub parents: Vec<(State, ActionId)>,
    /// `ln R(x)` for terminal states; interior states carry no reward.
    pub log_reward: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FmBatch {
    pub samples: Vec<FmSample>,
}

impl FmBatch {
    /// Every non-initial state visited by each trajectory, with
    /// `rewards[i] = R(terminal of trajectory i)`.
    pub fn from_trajectories(
        env: &EnvSpec,
        trajectories: &[Trajectory],
        rewards: &[f64],
    ) -> Result<Self, GfnError> {
        if trajectories.len() != rewards.len() {
            return Err(GfnError::Contract(format!(
                "{} trajectories but {} rewards",
                trajectories.len(),
                rewards.len()
            )));
        }
        let mut samples = Vec::new();
        for (t, &r) in trajectories.iter().zip(rewards) {
            if !(r > 0.0 && r.is_finite()) {
                return Err(GfnError::Contract(format!("reward {r} must be positive")));
            }
            for s in t.visited() {
                let parents = env.parents(&s)?;
                let log_reward = s.terminal.then(|| r.ln());
                samples.push(FmSample {
                    state: s,
                    parents,
                    log_reward,
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct non-terminal states whose edge flows the loss reads.
    fn evaluation_states(&self) -> (Vec<State>, HashMap<State, usize>) {
        let mut index = HashMap::new();
        let mut states = Vec::new();
        let mut add = |s: &State| {
            if !index.contains_key(s) {
                index.insert(s.clone(), states.len());
                states.push(s.clone());
            }
        };
        for sample in &self.samples {
            for (p, _) in &sample.parents {
                add(p);
            }
            if !sample.state.terminal {
                add(&sample.state);
            }
        }
        (states, index)
    }
}

/// Mean over samples of `(log inflow − log(R + outflow))²` computed from
/// log edge flow rows, and its gradient with respect to those rows.
fn fm_terms(
    env: &EnvSpec,
    batch: &FmBatch,
    index: &HashMap<State, usize>,
    logits: &DenseMatrix,
) -> Result<(f64, DenseMatrix), GfnError> {
    if batch.is_empty() {
        return Err(GfnError::Contract("empty flow-matching batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    for sample in &batch.samples {
        if sample.parents.is_empty() {
            return Err(GfnError::Contract(format!(
                "state {} has no parents (initial state in batch)",
                sample.state
            )));
        }
        let inflow: Vec<f64> = sample
            .parents
            .iter()
            .map(|(p, a)| logits.get(index[p], a.index()))
            .collect();
        let log_in = log_sum_exp(&inflow);
        let (log_out, outflow) = if sample.state.terminal {
            let r = sample.log_reward.ok_or_else(|| {
                GfnError::Contract(format!("terminal {} without reward", sample.state))
            })?;
            (r, Vec::new())
        } else {
            let row = index[&sample.state];
            let out: Vec<(usize, f64)> = env
                .allowed_actions(&sample.state)?
                .into_iter()
                .map(|a| (a.index(), logits.get(row, a.index())))
                .collect();
            let vals: Vec<f64> = out.iter().map(|(_, v)| *v).collect();
            (log_sum_exp(&vals), out)
        };
        let diff = log_in - log_out;
        loss += diff * diff / n;
        let scale = 2.0 * diff / n;
        for ((p, a), v) in sample.parents.iter().zip(&inflow) {
            let w = (v - log_in).exp();
            grad.row_mut(index[p])[a.index()] += scale * w;
        }
        if !outflow.is_empty() {
            let row = index[&sample.state];
            for (a, v) in outflow {
                let w = (v - log_out).exp();
                grad.row_mut(row)[a] -= scale * w;
            }
        }
    }
    Ok((loss, grad))
}

/// Flow-matching loss of any [`FlowFunction`] (no gradients).
pub fn fm_loss_value<F: FlowFunction + ?Sized>(
    flows: &F,
    pref: Option<&PreferenceVector>,
    batch: &FmBatch,
) -> Result<f64, GfnError> {
    let (states, index) = batch.evaluation_states();
    let logits = flows.log_edge_flow_rows(pref, &states)?;
    Ok(fm_terms(flows.env(), batch, &index, &logits)?.0)
}

/// Log edge flows stored per state; used for exact constructions and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFlows {
    pub env: EnvSpec,
    pub table: HashMap<State, Vec<f64>>,
}

impl FlowFunction for TabularFlows {
    fn env(&self) -> &EnvSpec {
        &self.env
    }

    fn log_edge_flow_rows(
        &self,
        _pref: Option<&PreferenceVector>,
        states: &[State],
    ) -> Result<DenseMatrix, GfnError> {
        let width = self.env.action_count();
        let mut out = DenseMatrix::zeros(states.len(), width);
        for (i, s) in states.iter().enumerate() {
            let row = self
                .table
                .get(s)
                .ok_or_else(|| GfnError::Contract(format!("no flows stored for {s}")))?;
            out.row_mut(i).copy_from_slice(row);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const GRID: EnvSpec = EnvSpec::HyperGrid { dims: 2, side: 3 };

    fn small_cfg() -> FlowModelConfig {
        FlowModelConfig {
            trunk_width: 8,
            trunk_depth: 2,
            head_hidden: vec![],
            hyper_width: 6,
            hyper_depth: 2,
            generated_scale: 0.1,
        }
    }

    fn model(c: Conditioning, seed: u64) -> FlowModel {
        FlowModel::new(GRID, 2, c, small_cfg(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn pref(w: &[f64]) -> PreferenceVector {
        PreferenceVector::new(w.to_vec()).unwrap()
    }

    #[test]
    fn unconditional_heads_ignore_preference() {
        let m = model(Conditioning::Unconditional, 1);
        assert_eq!(
            m.head_params(Some(&pref(&[0.2, 0.8]))).unwrap(),
            m.head_params(None).unwrap()
        );
    }

    #[test]
    fn conditional_models_require_preference() {
        for c in [Conditioning::Concat, Conditioning::Hypernet] {
            let m = model(c, 1);
            let s0 = GRID.initial_state();
            assert_eq!(
                m.log_edge_flows(None, &s0).unwrap_err(),
                GfnError::MissingPreference(c)
            );
        }
    }

    #[test]
    fn hypernet_with_zero_weights_emits_its_biases() {
        let mut m = model(Conditioning::Hypernet, 2);
        let h = m.hyper.as_mut().unwrap();
        h.body.params.iter_mut().for_each(|p| *p = 0.0);
        let mut biases = Vec::new();
        for head in &mut h.heads {
            let (_, b_off, _, _) = head.shape.layer_span(0);
            head.params[..b_off].iter_mut().for_each(|p| *p = 0.0);
            biases.extend_from_slice(&head.params[b_off..]);
        }
        for w in [[0.1, 0.9], [0.7, 0.3]] {
            assert_eq!(m.head_params(Some(&pref(&w))).unwrap(), biases);
        }
        assert_eq!(biases.len(), m.head_param_count());
    }

    #[test]
    fn hypernet_heads_depend_on_preference() {
        let m = model(Conditioning::Hypernet, 3);
        let a = m.head_params(Some(&pref(&[0.4, 0.6]))).unwrap();
        let b = m.head_params(Some(&pref(&[0.6, 0.4]))).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn concat_and_hypernet_differ() {
        let c = model(Conditioning::Concat, 4);
        let h = model(Conditioning::Hypernet, 4);
        let p = pref(&[0.5, 0.5]);
        let s = GRID.initial_state();
        let fc = c.log_edge_flows(Some(&p), &s).unwrap();
        let fh = h.log_edge_flows(Some(&p), &s).unwrap();
        assert!(fc.log_flows.iter().all(|v| v.is_finite()));
        assert!(fh.log_flows.iter().all(|v| v.is_finite()));
        assert_ne!(fc.log_flows, fh.log_flows);
    }

    #[test]
    fn terminal_states_have_no_edge_flows() {
        let m = model(Conditioning::Unconditional, 1);
        let t = State {
            components: vec![0, 0],
            terminal: true,
        };
        assert!(matches!(
            m.log_edge_flows(None, &t),
            Err(GfnError::Contract(_))
        ));
    }

    #[test]
    fn masked_softmax_cases() {
        let p = masked_softmax(&[true, true, true], &[0.5, 0.5, 0.5]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = masked_softmax(&[true, false], &[0.0, 100.0]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        let p = masked_softmax(&[true, true], &[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn policy_masks_illegal_actions() {
        let m = model(Conditioning::Unconditional, 5);
        let s = State {
            components: vec![2, 0],
            terminal: false,
        };
        let rows = m.policy_rows(None, std::slice::from_ref(&s)).unwrap();
        assert_eq!(rows[0][ActionId::Extend(0).index()], 0.0);
        assert!((rows[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pol = m.forward_policy(None, &s).unwrap();
        assert_eq!(pol.len(), 2);
    }

    #[test]
    fn uniform_rollouts_respect_caps() {
        let m = model(Conditioning::Unconditional, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ts = m.sample_trajectories(None, 1.0, 200, &mut rng).unwrap();
        for t in &ts {
            GRID.validate_trajectory(t).unwrap();
        }
        let ts = m.sample_trajectories(None, 0.05, 50, &mut rng).unwrap();
        assert!(ts.iter().all(|t| t.len() <= GRID.max_trajectory_len()));
    }

    #[test]
    fn deterministic_policy_gives_unique_trajectory() {
        let mut m = model(Conditioning::Unconditional, 7);
        // Edge head: zero weights, bias strongly favouring Extend(0), then Stop.
        let split = m.edge_shape.param_count();
        let (_, b_off, _, _) = m.edge_shape.layer_span(0);
        m.heads[..split].iter_mut().for_each(|p| *p = 0.0);
        m.heads[b_off] = 0.0;
        m.heads[b_off + 1] = 200.0;
        m.heads[b_off + 2] = -200.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts = m.sample_trajectories(None, 0.0, 5, &mut rng).unwrap();
        for t in &ts {
            assert_eq!(t.terminal().components, vec![2, 0]);
            assert_eq!(t, &ts[0]);
        }
    }

    #[test]
    fn fm_loss_of_doubled_edge_is_ln2_squared() {
        // Terminal x=(0,0)! with parent s0 via Stop; F(s0→x) = 2R.
        let env = EnvSpec::HyperGrid { dims: 1, side: 2 };
        let s0 = env.initial_state();
        let r: f64 = 0.3;
        let mut table = HashMap::new();
        table.insert(s0.clone(), vec![(2.0 * r).ln(), 0.0]);
        let flows = TabularFlows { env, table };
        let x = State {
            components: vec![0],
            terminal: true,
        };
        let batch = FmBatch {
            samples: vec![FmSample {
                parents: env.parents(&x).unwrap(),
                state: x,
                log_reward: Some(r.ln()),
            }],
        };
        let loss = fm_loss_value(&flows, None, &batch).unwrap();
        assert!((loss - 2f64.ln().powi(2)).abs() < 1e-12);
        assert!((loss - 0.4805).abs() < 1e-4);
    }

    #[test]
    fn fm_gradient_matches_finite_differences() {
        for c in [Conditioning::Unconditional, Conditioning::Concat, Conditioning::Hypernet] {
            let mut m = model(c, 21);
            let p = pref(&[0.35, 0.65]);
            let pr = c.is_conditional().then_some(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let ts = m.sample_trajectories(pr, 0.3, 5, &mut rng).unwrap();
            let rewards = [0.2, 1.5, 0.7, 3.0, 0.05];
            let batch = FmBatch::from_trajectories(&GRID, &ts, &rewards).unwrap();
            let (_, g) = m.fm_loss(pr, &batch).unwrap();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for (gi, grad) in g.groups.iter().enumerate() {
                let n = grad.len();
                for j in (0..n).step_by((n / 15).max(1)) {
                    let orig = m.param_groups()[gi][j];
                    m.param_groups_mut()[gi][j] = orig + h;
                    let up = m.fm_loss(pr, &batch).unwrap().0;
                    m.param_groups_mut()[gi][j] = orig - h;
                    let down = m.fm_loss(pr, &batch).unwrap().0;
                    m.param_groups_mut()[gi][j] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let rel = (fd - grad[j]).abs() / (1e-6 + fd.abs().max(grad[j].abs()));
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-4, "{c:?}: worst relative error {worst}");
        }
    }

    #[test]
    fn fm_rejects_initial_state() {
        let m = model(Conditioning::Unconditional, 8);
        let batch = FmBatch {
            samples: vec![FmSample {
                state: GRID.initial_state(),
                parents: vec![],
                log_reward: None,
            }],
        };
        assert!(matches!(
            m.fm_loss(None, &batch),
            Err(GfnError::Contract(_))
        ));
    }

    #[test]
    fn hypernet_training_leaves_trunk_shared() {
        // The trunk is a single parameter vector regardless of λ.
        let mut m = model(Conditioning::Hypernet, 9);
        let mut opt = FlowOptimizer::new(&m, 1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = pref(&[0.3, 0.7]);
        let ts = m.sample_trajectories(Some(&p), 0.5, 4, &mut rng).unwrap();
        let batch = FmBatch::from_trajectories(&GRID, &ts, &[1.0; 4]).unwrap();
        let (_, g) = m.fm_loss(Some(&p), &batch).unwrap();
        assert_eq!(g.groups.len(), m.param_groups().len());
        let before = m.trunk.params.clone();
        opt.step(&mut m, g).unwrap();
        assert_ne!(before, m.trunk.params);
        let q = pref(&[0.9, 0.1]);
        let s = GRID.initial_state();
        // Same trunk encodes the state for both preferences; only heads move.
        let ea = m.evaluate(Some(&p), std::slice::from_ref(&s)).unwrap();
        let eb = m.evaluate(Some(&q), std::slice::from_ref(&s)).unwrap();
        assert_eq!(ea.trunk.output(), eb.trunk.output());
        assert_ne!(ea.head_params, eb.head_params);
    }

    #[test]
    fn checkpoint_round_trip() {
        for c in [Conditioning::Unconditional, Conditioning::Hypernet] {
            let m = model(c, 10);
            let text = m.to_checkpoint().to_json().unwrap();
            let mut fresh = model(c, 11);
            fresh
                .load_checkpoint(&Checkpoint::from_json(&text).unwrap())
                .unwrap();
            assert_eq!(fresh, m);
        }
        let m = model(Conditioning::Hypernet, 10);
        let mut other = model(Conditioning::Unconditional, 10);
        assert!(other.load_checkpoint(&m.to_checkpoint()).is_err());
    }
}
