//! Enumerable compositional environments laid out as DAGs.
//!
//! Two families are provided. `HyperGrid` walks a point from the origin of a
//! `D`-dimensional grid of side `H` by unit increments. `BagBuilder` grows a
//! multiset over `V` tokens up to `T` items. Both terminate through an explicit
//! `Stop` action that turns a state into its terminal twin.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

pub const DEFAULT_ENUMERATION_CAP: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("environment has {count} states, above the enumeration cap of {cap}")]
    TooLarge { count: usize, cap: usize },
    #[error("invalid environment: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    HyperGrid { dims: usize, side: usize },
    BagBuilder { vocab: usize, max_items: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionId {
    Stop,
    Extend(usize),
}

impl ActionId {
    /// Position of the action in the edge-flow head: `Stop` is 0,
    /// `Extend(i)` is `i + 1`.
    pub fn index(self) -> usize {
        match self {
            ActionId::Stop => 0,
            ActionId::Extend(i) => i + 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            ActionId::Stop
        } else {
            ActionId::Extend(i - 1)
        }
    }
}

/// Grid coordinates or bag token counts, plus the terminal flag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub components: Vec<u16>,
    pub terminal: bool,
}

impl State {
    pub fn total(&self) -> usize {
        self.components.iter().map(|&c| c as usize).sum()
    }

    /// The non-terminal state with the same content.
    pub fn interior(&self) -> State {
        State {
            components: self.components.clone(),
            terminal: false,
        }
    }

    /// Topological key: component total first, then the terminal flag.
    pub fn topo_key(&self) -> (usize, bool) {
        (self.total(), self.terminal)
    }

    /// Space-free encoding, e.g. `3-0-7` or `3-0-7!` for a terminal state.
    pub fn encode(&self) -> String {
        let body = self
            .components
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("-");
        if self.terminal {
            format!("{body}!")
        } else {
            body
        }
    }

    pub fn decode(text: &str) -> Result<State, EnvError> {
        let (body, terminal) = match text.strip_suffix('!') {
            Some(b) => (b, true),
            None => (text, false),
        };
        let components = body
            .split('-')
            .map(|c| {
                c.parse::<u16>()
                    .map_err(|_| EnvError::Invalid(format!("bad state encoding {text:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(State {
            components,
            terminal,
        })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Root-to-terminal sequence of `(state, action)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(State, ActionId)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn terminal(&self) -> State {
        let (s, _) = self.steps.last().expect("empty trajectory");
        State {
            components: s.components.clone(),
            terminal: true,
        }
    }

    /// Every state reached after the initial one, ending with the terminal.
    pub fn visited(&self) -> Vec<State> {
        let mut out: Vec<State> = self.steps.iter().skip(1).map(|(s, _)| s.clone()).collect();
        out.push(self.terminal());
        out
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = match *self {
            EnvSpec::HyperGrid { dims, side } => dims >= 1 && side >= 2 && side <= u16::MAX as usize,
            EnvSpec::BagBuilder { vocab, max_items } => {
                vocab >= 1 && max_items >= 1 && max_items <= u16::MAX as usize
            }
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::Invalid(format!("{self:?}")))
        }
    }

    /// Number of components in a state (grid dimensions or vocabulary size).
    pub fn components(&self) -> usize {
        match *self {
            EnvSpec::HyperGrid { dims, .. } => dims,
            EnvSpec::BagBuilder { vocab, .. } => vocab,
        }
    }

    /// Width of the action alphabet: `Stop` plus one `Extend` per component.
    pub fn action_count(&self) -> usize {
        self.components() + 1
    }

    pub fn max_trajectory_len(&self) -> usize {
        match *self {
            EnvSpec::HyperGrid { dims, side } => dims * (side - 1) + 1,
            EnvSpec::BagBuilder { max_items, .. } => max_items + 1,
        }
    }

    /// Number of distinct contents (each appears once as interior and once
    /// as terminal).
    pub fn content_count(&self) -> usize {
        match *self {
            EnvSpec::HyperGrid { dims, side } => side.saturating_pow(dims as u32),
            // Σ_{k=0..T} C(k+V-1, V-1) = C(V+T, T)
            EnvSpec::BagBuilder { vocab, max_items } => binomial(vocab + max_items, max_items),
        }
    }

    pub fn state_count(&self) -> usize {
        self.content_count().saturating_mul(2)
    }

    pub fn initial_state(&self) -> State {
        State {
            components: vec![0; self.components()],
            terminal: false,
        }
    }

    pub fn is_initial(&self, s: &State) -> bool {
        !s.terminal && s.components.iter().all(|&c| c == 0)
    }

    fn can_extend(&self, s: &State, i: usize) -> bool {
        match *self {
            EnvSpec::HyperGrid { side, .. } => (s.components[i] as usize) < side - 1,
            EnvSpec::BagBuilder { max_items, .. } => s.total() < max_items,
        }
    }

    fn check_shape(&self, s: &State) -> Result<(), EnvError> {
        if s.components.len() != self.components() {
            return Err(EnvError::Contract(format!(
                "state {s} has {} components, expected {}",
                s.components.len(),
                self.components()
            )));
        }
        let in_range = match *self {
            EnvSpec::HyperGrid { side, .. } => s.components.iter().all(|&c| (c as usize) < side),
            EnvSpec::BagBuilder { max_items, .. } => s.total() <= max_items,
        };
        if in_range {
            Ok(())
        } else {
            Err(EnvError::Contract(format!("state {s} is outside {self:?}")))
        }
    }

    pub fn allowed_actions(&self, s: &State) -> Result<Vec<ActionId>, EnvError> {
        self.check_shape(s)?;
        if s.terminal {
            return Err(EnvError::Contract(format!(
                "terminal state {s} has no actions"
            )));
        }
        let mut actions = vec![ActionId::Stop];
        actions.extend(
            (0..self.components())
                .filter(|&i| self.can_extend(s, i))
                .map(ActionId::Extend),
        );
        Ok(actions)
    }

    /// Legality mask over action indices.
    pub fn action_mask(&self, s: &State) -> Result<Vec<bool>, EnvError> {
        let mut mask = vec![false; self.action_count()];
        for a in self.allowed_actions(s)? {
            mask[a.index()] = true;
        }
        Ok(mask)
    }

    pub fn apply_action(&self, s: &State, a: ActionId) -> Result<State, EnvError> {
        self.check_shape(s)?;
        if s.terminal {
            return Err(EnvError::Contract(format!("cannot act from terminal {s}")));
        }
        match a {
            ActionId::Stop => Ok(State {
                components: s.components.clone(),
                terminal: true,
            }),
            ActionId::Extend(i) if i < self.components() && self.can_extend(s, i) => {
                let mut next = s.clone();
                next.components[i] += 1;
                Ok(next)
            }
            ActionId::Extend(i) => Err(EnvError::Contract(format!(
                "action Extend({i}) is illegal at {s}"
            ))),
        }
    }

    /// All `(parent, action)` pairs leading to `s`. Empty for the initial
    /// state; a terminal state has its interior twin as the only parent.
    pub fn parents(&self, s: &State) -> Result<Vec<(State, ActionId)>, EnvError> {
        self.check_shape(s)?;
        if s.terminal {
            return Ok(vec![(s.interior(), ActionId::Stop)]);
        }
        Ok((0..self.components())
            .filter(|&i| s.components[i] > 0)
            .map(|i| {
                let mut p = s.clone();
                p.components[i] -= 1;
                (p, ActionId::Extend(i))
            })
            .collect())
    }

    /// Every state exactly once, parents before children.
    pub fn enumerate_states(&self) -> Result<Vec<State>, EnvError> {
        self.enumerate_states_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_states_capped(&self, cap: usize) -> Result<Vec<State>, EnvError> {
        self.validate()?;
        let count = self.state_count();
        if count > cap {
            return Err(EnvError::TooLarge { count, cap });
        }
        let contents = self.enumerate_contents();
        let mut states = Vec::with_capacity(count);
        for c in contents {
            states.push(State {
                components: c.clone(),
                terminal: false,
            });
            states.push(State {
                components: c,
                terminal: true,
            });
        }
        states.sort_by(|a, b| {
            a.topo_key()
                .cmp(&b.topo_key())
                .then_with(|| a.components.cmp(&b.components))
        });
        Ok(states)
    }

    /// Terminal states in topological order.
    pub fn enumerate_terminals(&self) -> Result<Vec<State>, EnvError> {
        Ok(self
            .enumerate_states()?
            .into_iter()
            .filter(|s| s.terminal)
            .collect())
    }

    fn enumerate_contents(&self) -> Vec<Vec<u16>> {
        let n = self.components();
        let mut out = Vec::new();
        let mut current = vec![0u16; n];
        match *self {
            EnvSpec::HyperGrid { side, .. } => loop {
                out.push(current.clone());
                let mut i = 0;
                while i < n {
                    if (current[i] as usize) + 1 < side {
                        current[i] += 1;
                        break;
                    }
                    current[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            },
            EnvSpec::BagBuilder { max_items, .. } => {
                fn rec(i: usize, left: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
                    if i == cur.len() {
                        out.push(cur.clone());
                        return;
                    }
                    for c in 0..=left {
                        cur[i] = c as u16;
                        rec(i + 1, left - c, cur, out);
                    }
                    cur[i] = 0;
                }
                rec(0, max_items, &mut current, &mut out);
            }
        }
        out
    }

    /// Samples a trajectory ending at terminal `x` by walking uniformly random
    /// parents back to the initial state.
    pub fn backward_trajectory<R: Rng + ?Sized>(
        &self,
        x: &State,
        rng: &mut R,
    ) -> Result<Trajectory, EnvError> {
        if !x.terminal {
            return Err(EnvError::Contract(format!("{x} is not terminal")));
        }
        self.check_shape(x)?;
        let mut steps = vec![(x.interior(), ActionId::Stop)];
        let mut current = x.interior();
        while !self.is_initial(&current) {
            let parents = self.parents(&current)?;
            let (p, a) = parents[rng.random_range(0..parents.len())].clone();
            steps.push((p.clone(), a));
            current = p;
        }
        steps.reverse();
        Ok(Trajectory { steps })
    }

    /// Checks that `t` starts at the initial state, follows legal edges, and
    /// ends with `Stop` within the length cap.
    pub fn validate_trajectory(&self, t: &Trajectory) -> Result<(), EnvError> {
        let first = t
            .steps
            .first()
            .ok_or_else(|| EnvError::Contract("empty trajectory".into()))?;
        if first.0 != self.initial_state() {
            return Err(EnvError::Contract("trajectory does not start at s0".into()));
        }
        if t.len() > self.max_trajectory_len() {
            return Err(EnvError::Contract(format!(
                "trajectory length {} exceeds cap {}",
                t.len(),
                self.max_trajectory_len()
            )));
        }
        for (i, (s, a)) in t.steps.iter().enumerate() {
            let next = self.apply_action(s, *a)?;
            let last = i + 1 == t.len();
            if last != (*a == ActionId::Stop) {
                return Err(EnvError::Contract(
                    "Stop must be exactly the final action".into(),
                ));
            }
            if !last && t.steps[i + 1].0 != next {
                return Err(EnvError::Contract(format!("broken edge at step {i}")));
            }
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        match *self {
            EnvSpec::HyperGrid { dims, side } => dims * side,
            EnvSpec::BagBuilder { vocab, .. } => vocab + 1,
        }
    }

    /// Fixed-length state features: per-dimension one-hot for the grid,
    /// normalized counts plus fill fraction for bags. The terminal flag is
    /// not encoded.
    pub fn featurize(&self, s: &State) -> Vec<f64> {
        let mut f = vec![0.0; self.feature_len()];
        self.featurize_into(s, &mut f);
        f
    }

    pub fn featurize_into(&self, s: &State, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            EnvSpec::HyperGrid { side, .. } => {
                for (d, &c) in s.components.iter().enumerate() {
                    out[d * side + c as usize] = 1.0;
                }
            }
            EnvSpec::BagBuilder { vocab, max_items } => {
                let t = max_items as f64;
                for (i, &c) in s.components.iter().enumerate() {
                    out[i] = c as f64 / t;
                }
                out[vocab] = s.total() as f64 / t;
            }
        }
    }

    /// Stable content hash of the environment parameters, used to tag checkpoints and fixtures.
    pub fn spec_hash(&self) -> String {
        let canonical = match *self {
            EnvSpec::HyperGrid { dims, side } => format!("hypergrid:dims={dims}:side={side}"),
            EnvSpec::BagBuilder { vocab, max_items } => {
                format!("bagbuilder:vocab={vocab}:max_items={max_items}")
            }
        };
        hex::encode(Sha256::digest(canonical.as_bytes()))[..16].to_string()
    }
}

/// Index from state to its position in an enumeration.
pub fn index_states(states: &[State]) -> HashMap<State, usize> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}
