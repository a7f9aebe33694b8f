//! Exact oracles over enumerable environments: the terminal distribution a
//! policy induces, the reward-proportional target, consistent flow tables,
//! exhaustive Pareto fronts and a Monte Carlo hypervolume estimator.

use crate::env::{index_states, ActionId, EnvError, EnvSpec, State};
use crate::gflownet::{FlowFunction, GfnError, TabularFlows};
use crate::pareto::{ParetoError, ParetoFront, PreferenceVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Rows of policy evaluated per batch during the forward DP.
const POLICY_CHUNK: usize = 2048;
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gfn(#[from] GfnError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("terminal mass {0} does not sum to 1")]
    MassLost(f64),
    #[error("fixture mismatch: {0}")]
    Fixture(String),
}

/// A probability distribution over the terminal states of an environment,
/// listed in enumeration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub terminals: Vec<State>,
    pub probs: Vec<f64>,
    /// Σ R(x) when the distribution was derived from a reward.
    pub partition: Option<f64>,
}

impl ExactDistribution {
    pub fn prob(&self, x: &State) -> f64 {
        self.terminals
            .iter()
            .position(|t| t == x)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn to_map(&self) -> HashMap<State, f64> {
        self.terminals
            .iter()
            .cloned()
            .zip(self.probs.iter().copied())
            .collect()
    }

    /// Σ |p(x) − q(x)| over the union of supports.
    pub fn l1(&self, other: &ExactDistribution) -> f64 {
        let mut q = other.to_map();
        let mut total = 0.0;
        for (x, p) in self.terminals.iter().zip(&self.probs) {
            total += (p - q.remove(x).unwrap_or(0.0)).abs();
        }
        total + q.values().map(|v| v.abs()).sum::<f64>()
    }
}

/// Pushes unit mass from the initial state through the forward policy of
/// `flows` in topological order and collects it at the terminals.
pub fn exact_policy_distribution<F: FlowFunction + ?Sized>(
    flows: &F,
    pref: Option<&PreferenceVector>,
) -> Result<ExactDistribution, OracleError> {
    let env = *flows.env();
    let states = env.enumerate_states()?;
    let index = index_states(&states);
    let interior: Vec<State> = states.iter().filter(|s| !s.terminal).cloned().collect();
    let mut policy: HashMap<&State, Vec<f64>> = HashMap::with_capacity(interior.len());
    for chunk in interior.chunks(POLICY_CHUNK) {
        for (s, row) in chunk.iter().zip(flows.policy_rows(pref, chunk)?) {
            policy.insert(s, row);
        }
    }
    let mut mass = vec![0.0; states.len()];
    mass[index[&env.initial_state()]] = 1.0;
    for (i, s) in states.iter().enumerate() {
        if s.terminal || mass[i] == 0.0 {
            continue;
        }
        let row = &policy[s];
        for a in env.allowed_actions(s)? {
            let p = row[a.index()];
            if p > 0.0 {
                let child = env.apply_action(s, a)?;
                mass[index[&child]] += mass[i] * p;
            }
        }
    }
    let mut terminals = Vec::new();
    let mut probs = Vec::new();
    for (s, m) in states.iter().zip(&mass) {
        if s.terminal {
            terminals.push(s.clone());
            probs.push(*m);
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(OracleError::MassLost(total));
    }
    Ok(ExactDistribution {
        terminals,
        probs,
        partition: None,
    })
}

/// π*(x) = R(x) / Σ R over all terminals.
pub fn exact_target_distribution(
    env: &EnvSpec,
    reward: impl Fn(&State) -> f64,
) -> Result<ExactDistribution, OracleError> {
    let terminals = env.enumerate_terminals()?;
    let rewards: Vec<f64> = terminals.iter().map(&reward).collect();
    if let Some(r) = rewards.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(OracleError::Undefined(format!("reward {r} is not a finite nonnegative value")));
    }
    let z: f64 = rewards.iter().sum();
    if z <= 0.0 {
        return Err(OracleError::Undefined("all rewards are zero".into()));
    }
    Ok(ExactDistribution {
        terminals,
        probs: rewards.iter().map(|r| r / z).collect(),
        partition: Some(z),
    })
}

/// Log edge flows satisfying flow consistency exactly for `reward`, built
/// backwards from `F(x) = R(x)` with a uniform backward policy
/// `F(s → c) = F(c) / |parents(c)|`. Illegal action slots hold 0.
pub fn consistent_flows(
    env: &EnvSpec,
    reward: impl Fn(&State) -> f64,
) -> Result<TabularFlows, OracleError> {
    let states = env.enumerate_states()?;
    let mut state_flow: HashMap<State, f64> = HashMap::with_capacity(states.len());
    let mut table = HashMap::new();
    for s in states.iter().rev() {
        if s.terminal {
            let r = reward(s);
            if !(r > 0.0 && r.is_finite()) {
                return Err(OracleError::Undefined(format!("reward {r} at {s} must be positive")));
            }
            state_flow.insert(s.clone(), r);
            continue;
        }
        let mut row = vec![0.0; env.action_count()];
        let mut total = 0.0;
        for a in env.allowed_actions(s)? {
            let child = env.apply_action(s, a)?;
            let parents = if a == ActionId::Stop {
                1
            } else {
                env.parents(&child)?.len()
            };
            let edge = state_flow[&child] / parents as f64;
            row[a.index()] = edge.ln();
            total += edge;
        }
        state_flow.insert(s.clone(), total);
        table.insert(s.clone(), row);
    }
    Ok(TabularFlows { env: *env, table })
}

/// Pareto front over the objective vectors of every terminal. Member
/// indices refer to `env.enumerate_terminals()`.
pub fn exact_pareto_front(
    env: &EnvSpec,
    objectives: impl Fn(&State) -> Vec<f64>,
    reference: &[f64],
) -> Result<(Vec<State>, ParetoFront), OracleError> {
    let terminals = env.enumerate_terminals()?;
    let points: Vec<Vec<f64>> = terminals.iter().map(objectives).collect();
    Ok((terminals, ParetoFront::from_points(&points, reference)))
}

/// Hypervolume estimate from uniform samples in the box between `reference`
/// and the component-wise maximum. Returns `(estimate, standard error)`.
pub fn mc_hypervolume<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    reference: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), OracleError> {
    if points.is_empty() {
        return Ok((0.0, 0.0));
    }
    if samples == 0 {
        return Err(OracleError::Undefined("zero samples".into()));
    }
    let m = reference.len();
    let mut upper = reference.to_vec();
    for p in points {
        let p = p.as_ref();
        if p.len() != m {
            return Err(ParetoError::Length(m, p.len()).into());
        }
        for (u, v) in upper.iter_mut().zip(p) {
            *u = u.max(*v);
        }
    }
    let volume: f64 = upper.iter().zip(reference).map(|(u, r)| u - r).product();
    if volume <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut hits = 0usize;
    let mut z = vec![0.0; m];
    for _ in 0..samples {
        for ((zi, r), u) in z.iter_mut().zip(reference).zip(&upper) {
            *zi = r + rng.random::<f64>() * (u - r);
        }
        if points
            .iter()
            .any(|p| p.as_ref().iter().zip(&z).all(|(a, b)| a >= b))
        {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let se = (frac * (1.0 - frac) / samples as f64).sqrt() * volume;
    Ok((frac * volume, se))
}

/// Ground-truth front for an environment and objective set, stored on disk
/// so regret metrics do not need to re-enumerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontFixture {
    pub spec_hash: String,
    pub terminals: usize,
    pub reference: Vec<f64>,
    /// `(encoded state, objective vector)` for every front member.
    pub front: Vec<(String, Vec<f64>)>,
    pub hv_star: f64,
}

impl FrontFixture {
    pub fn build(
        env: &EnvSpec,
        objectives: impl Fn(&State) -> Vec<f64>,
        reference: &[f64],
    ) -> Result<Self, OracleError> {
        let (terminals, front) = exact_pareto_front(env, objectives, reference)?;
        Ok(Self {
            spec_hash: env.spec_hash(),
            terminals: terminals.len(),
            reference: reference.to_vec(),
            hv_star: front.hypervolume()?,
            front: front
                .members
                .iter()
                .map(|(i, y)| (terminals[*i].encode(), y.clone()))
                .collect(),
        })
    }

    /// Fails if the fixture was produced for a different environment.
    pub fn check(&self, env: &EnvSpec) -> Result<(), OracleError> {
        if self.spec_hash != env.spec_hash() {
            return Err(OracleError::Fixture(format!(
                "spec hash {} does not match {}",
                self.spec_hash,
                env.spec_hash()
            )));
        }
        let count = env.enumerate_terminals()?.len();
        if count != self.terminals {
            return Err(OracleError::Fixture(format!(
                "fixture has {} terminals, environment has {count}",
                self.terminals
            )));
        }
        Ok(())
    }
}

/// Zero log flows at every interior state, i.e. the uniform forward policy.
pub fn uniform_flows(env: &EnvSpec) -> Result<TabularFlows, OracleError> {
    let mut table = HashMap::new();
    for s in env.enumerate_states()?.into_iter().filter(|s| !s.terminal) {
        table.insert(s, vec![0.0; env.action_count()]);
    }
    Ok(TabularFlows { env: *env, table })
}
