//! Browser demo: a preference-conditioned flow model on a small 2-d grid
//! with two synthetic objectives. Cells are indexed row-major, `a * side + b`
//! for the terminal at coordinates `(a, b)`.

use paretoflow::env::{EnvSpec, State};
use paretoflow::gflownet::{Conditioning, FlowModel, FlowModelConfig};
use paretoflow::mobo::{OracleReward, SyntheticOracle};
use paretoflow::oracle::{exact_policy_distribution, exact_target_distribution, ExactDistribution};
use paretoflow::pareto::{hypervolume, pareto_indices, PreferenceVector, Scalarization};
use paretoflow::seeds::substream;
use paretoflow::trainer::{TrainConfig, Trainer};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const MAX_SIDE: usize = 24;

#[wasm_bindgen]
pub struct Demo {
    env: EnvSpec,
    oracle: SyntheticOracle,
    shaping: TrainConfig,
    model: FlowModel,
    trainer: Trainer,
    rng: ChaCha8Rng,
}

fn pref(w1: f64) -> Result<PreferenceVector, String> {
    if !(0.0..=1.0).contains(&w1) {
        return Err(format!("weight {w1} outside [0, 1]"));
    }
    PreferenceVector::new(vec![w1, 1.0 - w1]).map_err(|e| e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(side: usize, seed: u64) -> Result<Demo, String> {
        if !(3..=MAX_SIDE).contains(&side) {
            return Err(format!("side must be between 3 and {MAX_SIDE}"));
        }
        let env = EnvSpec::HyperGrid { dims: 2, side };
        let oracle = SyntheticOracle::reference_two(env).map_err(|e| e.to_string())?;
        let shaping = TrainConfig {
            hindsight_gamma: 0.0,
            online_batch: 16,
            ..TrainConfig::default()
        };
        let cfg = FlowModelConfig {
            trunk_width: 32,
            ..FlowModelConfig::default()
        };
        let model = FlowModel::new(env, 2, Conditioning::Hypernet, cfg, &mut substream(seed, "demo-init", 0))
            .map_err(|e| e.to_string())?;
        let trainer = Trainer::new(&model, shaping.clone(), vec![PreferenceVector::uniform(2)], Vec::new())
            .map_err(|e| e.to_string())?;
        Ok(Demo {
            env,
            oracle,
            shaping,
            model,
            trainer,
            rng: substream(seed, "demo-train", 0),
        })
    }

    pub fn side(&self) -> usize {
        match self.env {
            EnvSpec::HyperGrid { side, .. } => side,
            EnvSpec::BagBuilder { .. } => unreachable!(),
        }
    }

    /// Exact distribution proportional to the shaped reward at weight `w1`
    /// on the first objective. `exponent` sharpens the reward.
    pub fn target(&self, w1: f64, exponent: f64) -> Result<Vec<f64>, String> {
        if !(exponent > 0.0 && exponent <= 64.0) {
            return Err(format!("exponent {exponent} outside (0, 64]"));
        }
        let p = pref(w1)?;
        let shaping = TrainConfig {
            reward_exponent: exponent,
            ..self.shaping.clone()
        };
        let reward = self.reward_model(shaping);
        let dist = exact_target_distribution(&self.env, |x| reward.reward(&p, x).unwrap_or(0.0))
            .map_err(|e| e.to_string())?;
        Ok(self.to_cells(&dist))
    }

    /// Objective values of every cell, interleaved `[f1, f2, f1, f2, ...]`.
    pub fn objectives(&self) -> Result<Vec<f64>, String> {
        Ok(self.objective_rows()?.concat())
    }

    /// Cells on the Pareto front of the whole grid.
    pub fn front(&self) -> Result<Vec<u32>, String> {
        let ys = self.objective_rows()?;
        Ok(pareto_indices(&ys).into_iter().map(|i| i as u32).collect())
    }

    /// Hypervolume of the cells in `cells` against the origin.
    pub fn hypervolume_of(&self, cells: Vec<u32>) -> Result<f64, String> {
        let ys = self.objective_rows()?;
        let picked: Vec<&Vec<f64>> = cells
            .iter()
            .map(|&c| ys.get(c as usize).ok_or(format!("no cell {c}")))
            .collect::<Result<_, _>>()?;
        hypervolume(&picked, &[0.0, 0.0]).map_err(|e| e.to_string())
    }

    /// Runs training steps with preferences drawn uniformly from the simplex.
    /// Returns the mean loss.
    pub fn train(&mut self, steps: usize) -> Result<f64, String> {
        let reward = OracleReward {
            oracle: &self.oracle,
            scalarization: Scalarization::WeightedSum,
            shaping: self.shaping.clone(),
        };
        let mut total = 0.0;
        for _ in 0..steps {
            let rec = self
                .trainer
                .train_step(&mut self.model, &reward, &mut self.rng)
                .map_err(|e| e.to_string())?;
            total += rec.loss;
        }
        Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
    }

    pub fn steps(&self) -> usize {
        self.trainer.step
    }

    /// Exact terminal distribution of the trained sampler at weight `w1`.
    pub fn policy(&self, w1: f64) -> Result<Vec<f64>, String> {
        let p = pref(w1)?;
        let dist = exact_policy_distribution(&self.model, Some(&p)).map_err(|e| e.to_string())?;
        Ok(self.to_cells(&dist))
    }

    /// L1 distance between the sampler and its target at weight `w1`.
    pub fn l1(&self, w1: f64) -> Result<f64, String> {
        let t = self.target(w1, self.shaping.reward_exponent)?;
        let p = self.policy(w1)?;
        Ok(t.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum())
    }
}

impl Demo {
    fn reward_model(&self, shaping: TrainConfig) -> OracleReward<'_> {
        OracleReward {
            oracle: &self.oracle,
            scalarization: Scalarization::WeightedSum,
            shaping,
        }
    }

    fn cell(&self, x: &State) -> usize {
        x.components[0] as usize * self.side() + x.components[1] as usize
    }

    fn to_cells(&self, dist: &ExactDistribution) -> Vec<f64> {
        let mut out = vec![0.0; self.side() * self.side()];
        for (x, p) in dist.terminals.iter().zip(&dist.probs) {
            out[self.cell(x)] += p;
        }
        out
    }

    fn objective_rows(&self) -> Result<Vec<Vec<f64>>, String> {
        let terminals = self.env.enumerate_terminals().map_err(|e| e.to_string())?;
        let mut rows = vec![Vec::new(); terminals.len()];
        for x in &terminals {
            rows[self.cell(x)] = self.oracle.evaluate(x).map_err(|e| e.to_string())?;
        }
        Ok(rows)
    }
}
