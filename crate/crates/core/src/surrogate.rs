//! Uncertainty-aware surrogates over object features and the UCB
//! acquisition on scalarized posteriors.
//!
//! The evidential model is one multi-task network whose output carries four
//! Normal-Inverse-Gamma evidence values per objective. The ensemble is a set
//! of independently initialised mean regressors.

use crate::env::{EnvSpec, State};
use crate::nn::{AdamState, DenseMatrix, FeedForwardNet, NnError};
use crate::pareto::{PreferenceVector, Scalarization};
use crate::trainer::{shape_reward, RewardModel, TrainConfig, TrainError};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

pub const MIN_FIT_SIZE: usize = 20;
const EVIDENCE_EPS: f64 = 1e-6;
const EVAL_EVERY: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dataset of {got} points is below the minimum of {min}")]
    TooSmall { got: usize, min: usize },
    #[error("surrogate has not been fitted")]
    Unfitted,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Evidential,
    Ensemble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub hidden: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Weight of the evidence regularizer.
    pub evidence_reg: f64,
    pub ensemble_size: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Evidential,
            hidden: 64,
            depth: 2,
            learning_rate: 1e-3,
            max_iterations: 10_000,
            patience: 500,
            validation_fraction: 0.1,
            dropout: 0.1,
            weight_decay: 1e-6,
            batch_size: 64,
            evidence_reg: 0.1,
            ensemble_size: 5,
        }
    }
}

/// Normal-Inverse-Gamma evidence for one objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Evidence {
    pub fn from_raw(raw: &[f64]) -> Self {
        Self {
            gamma: raw[0],
            nu: softplus(raw[1]) + EVIDENCE_EPS,
            alpha: softplus(raw[2]) + 1.0 + EVIDENCE_EPS,
            beta: softplus(raw[3]) + EVIDENCE_EPS,
        }
    }

    pub fn epistemic_var(&self) -> f64 {
        self.beta / (self.nu * (self.alpha - 1.0))
    }

    pub fn aleatoric_var(&self) -> f64 {
        self.beta / (self.alpha - 1.0)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood of `y` under the Student-t marginal of the
/// evidence, and its partial derivatives in (γ, ν, α, β).
pub fn evidential_nll(e: &Evidence, y: f64) -> (f64, [f64; 4]) {
    let Evidence { gamma, nu, alpha, beta } = *e;
    let omega = 2.0 * beta * (1.0 + nu);
    let r = y - gamma;
    let s = r * r * nu + omega;
    let nll = 0.5 * (std::f64::consts::PI / nu).ln() - alpha * omega.ln()
        + (alpha + 0.5) * s.ln()
        + ln_gamma(alpha)
        - ln_gamma(alpha + 0.5);
    let d_gamma = (alpha + 0.5) * (-2.0 * r * nu) / s;
    let d_nu = -0.5 / nu - alpha * 2.0 * beta / omega + (alpha + 0.5) * (r * r + 2.0 * beta) / s;
    let d_alpha = -omega.ln() + s.ln() + digamma(alpha) - digamma(alpha + 0.5);
    let d_beta = -alpha * 2.0 * (1.0 + nu) / omega + (alpha + 0.5) * 2.0 * (1.0 + nu) / s;
    (nll, [d_gamma, d_nu, d_alpha, d_beta])
}

/// Per-sample evidential loss summed over objectives, on raw network
/// outputs laid out as `[γ, ν, α, β]` per objective. Returns the loss and
/// its gradient with respect to `raw`.
pub fn evidential_loss(raw: &[f64], y: &[f64], reg: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; raw.len()];
    for (m, &ym) in y.iter().enumerate() {
        let chunk = &raw[4 * m..4 * m + 4];
        let e = Evidence::from_raw(chunk);
        let (nll, mut d) = evidential_nll(&e, ym);
        let r = ym - e.gamma;
        loss += nll + reg * r.abs() * (2.0 * e.nu + e.alpha);
        d[0] -= reg * r.signum() * (2.0 * e.nu + e.alpha);
        d[1] += reg * 2.0 * r.abs();
        d[2] += reg * r.abs();
        let g = &mut grad[4 * m..4 * m + 4];
        g[0] = d[0];
        for k in 1..4 {
            g[k] = d[k] * sigmoid(chunk[k]);
        }
    }
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Validation NLL (evidential) or MSE (ensemble) at the kept parameters.
    pub validation_loss: f64,
    pub rmse: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub cfg: SurrogateConfig,
    pub input_len: usize,
    pub objectives: usize,
    pub nets: Vec<FeedForwardNet>,
    fitted: bool,
}

impl Surrogate {
    pub fn new<R: Rng + ?Sized>(
        cfg: SurrogateConfig,
        input_len: usize,
        objectives: usize,
        rng: &mut R,
    ) -> Self {
        let mut s = Self {
            nets: Vec::new(),
            cfg,
            input_len,
            objectives,
            fitted: false,
        };
        s.reinit(rng);
        s
    }

    fn reinit<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (count, out) = match self.cfg.kind {
            SurrogateKind::Evidential => (1, 4 * self.objectives),
            SurrogateKind::Ensemble => (self.cfg.ensemble_size.max(1), self.objectives),
        };
        let mut sizes = vec![self.input_len];
        sizes.extend(std::iter::repeat_n(self.cfg.hidden, self.cfg.depth));
        sizes.push(out);
        self.nets = (0..count)
            .map(|_| FeedForwardNet::new(sizes.clone(), rng))
            .collect();
        self.fitted = false;
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Fits from scratch on `(x, y)` with a random validation split and
    /// early stopping. Each call reinitializes the parameters.
    pub fn fit<R: Rng>(
        &mut self,
        x: &DenseMatrix,
        y: &DenseMatrix,
        rng: &mut R,
    ) -> Result<FitReport, SurrogateError> {
        let n = x.rows();
        if n < MIN_FIT_SIZE {
            return Err(SurrogateError::TooSmall { got: n, min: MIN_FIT_SIZE });
        }
        if y.rows() != n || y.cols() != self.objectives || x.cols() != self.input_len {
            return Err(SurrogateError::Shape(format!(
                "x is {}x{}, y is {}x{}; expected ?x{} and ?x{}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols(),
                self.input_len,
                self.objectives
            )));
        }
        self.reinit(rng);
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, rng);
        let n_val = ((n as f64 * self.cfg.validation_fraction).round() as usize).clamp(1, n - 1);
        let (val, train) = order.split_at(n_val);
        let (xv, yv) = (gather(x, val), gather(y, val));
        let (xt, yt) = (gather(x, train), gather(y, train));
        let mut iterations = 0;
        let cfg = self.cfg.clone();
        for net in &mut self.nets {
            iterations = iterations.max(train_net(net, &cfg, &xt, &yt, &xv, &yv, rng)?);
        }
        self.fitted = true;
        let post = self.posterior_batch(&xv)?;
        let mut rmse = vec![0.0; self.objectives];
        for (i, row) in post.iter().enumerate() {
            for (m, (mu, _)) in row.iter().enumerate() {
                rmse[m] += (mu - yv.get(i, m)).powi(2) / n_val as f64;
            }
        }
        rmse.iter_mut().for_each(|v| *v = v.sqrt());
        let validation_loss =
            self.nets.iter().map(|net| val_loss(net, &cfg, &xv, &yv)).sum::<Result<f64, _>>()?
                / self.nets.len() as f64;
        Ok(FitReport { validation_loss, rmse, iterations })
    }

    /// Per object, per objective `(μ, σ)`: the evidential mean and epistemic
    /// standard deviation, or the ensemble mean and population std.
    pub fn posterior_batch(&self, x: &DenseMatrix) -> Result<Vec<Vec<(f64, f64)>>, SurrogateError> {
        if !self.fitted {
            return Err(SurrogateError::Unfitted);
        }
        let m = self.objectives;
        match self.cfg.kind {
            SurrogateKind::Evidential => {
                let out = self.nets[0].forward_batch(x)?;
                Ok((0..x.rows())
                    .map(|i| {
                        let row = out.output().row(i);
                        (0..m)
                            .map(|k| {
                                let e = Evidence::from_raw(&row[4 * k..4 * k + 4]);
                                (e.gamma, e.epistemic_var().sqrt())
                            })
                            .collect()
                    })
                    .collect())
            }
            SurrogateKind::Ensemble => {
                let outs: Vec<DenseMatrix> = self
                    .nets
                    .iter()
                    .map(|net| Ok(net.forward_batch(x)?.output().clone()))
                    .collect::<Result<_, SurrogateError>>()?;
                Ok((0..x.rows())
                    .map(|i| {
                        (0..m)
                            .map(|k| {
                                let vals: Vec<f64> = outs.iter().map(|o| o.get(i, k)).collect();
                                mean_std(&vals)
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Raw evidence per objective; only defined for the evidential kind.
    pub fn evidence(&self, x: &[f64]) -> Result<Vec<Evidence>, SurrogateError> {
        if self.cfg.kind != SurrogateKind::Evidential {
            return Err(SurrogateError::Shape("ensemble surrogates carry no evidence".into()));
        }
        if !self.fitted {
            return Err(SurrogateError::Unfitted);
        }
        let out = self.nets[0].forward(x)?;
        Ok(out.chunks(4).map(Evidence::from_raw).collect())
    }

    pub fn posterior_states(
        &self,
        env: &EnvSpec,
        states: &[State],
    ) -> Result<Vec<Vec<(f64, f64)>>, SurrogateError> {
        self.posterior_batch(&featurize_all(env, states))
    }
}

/// Population mean and standard deviation.
pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mu = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

pub fn featurize_all(env: &EnvSpec, states: &[State]) -> DenseMatrix {
    let mut x = DenseMatrix::zeros(states.len(), env.feature_len());
    for (i, s) in states.iter().enumerate() {
        env.featurize_into(s, x.row_mut(i));
    }
    x
}

fn shuffle<R: Rng + ?Sized>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

fn gather(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Mean loss over rows and the gradient of that mean w.r.t. the outputs.
fn batch_loss(
    cfg: &SurrogateConfig,
    out: &DenseMatrix,
    y: &DenseMatrix,
) -> (f64, DenseMatrix) {
    let n = out.rows() as f64;
    let mut grad = DenseMatrix::zeros(out.rows(), out.cols());
    let mut loss = 0.0;
    for i in 0..out.rows() {
        match cfg.kind {
            SurrogateKind::Evidential => {
                let (l, g) = evidential_loss(out.row(i), y.row(i), cfg.evidence_reg);
                loss += l / n;
                for (d, v) in grad.row_mut(i).iter_mut().zip(g) {
                    *d = v / n;
                }
            }
            SurrogateKind::Ensemble => {
                for (k, (o, t)) in out.row(i).iter().zip(y.row(i)).enumerate() {
                    loss += (o - t).powi(2) / n;
                    grad.row_mut(i)[k] = 2.0 * (o - t) / n;
                }
            }
        }
    }
    (loss, grad)
}

fn val_loss(
    net: &FeedForwardNet,
    cfg: &SurrogateConfig,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<f64, SurrogateError> {
    let out = net.forward_batch(x)?;
    let n = x.rows() as f64;
    Ok(match cfg.kind {
        SurrogateKind::Evidential => (0..x.rows())
            .map(|i| {
                let row = out.output().row(i);
                y.row(i)
                    .iter()
                    .enumerate()
                    .map(|(m, &t)| evidential_nll(&Evidence::from_raw(&row[4 * m..4 * m + 4]), t).0)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n,
        SurrogateKind::Ensemble => batch_loss(cfg, out.output(), y).0,
    })
}

fn train_net<R: Rng>(
    net: &mut FeedForwardNet,
    cfg: &SurrogateConfig,
    xt: &DenseMatrix,
    yt: &DenseMatrix,
    xv: &DenseMatrix,
    yv: &DenseMatrix,
    rng: &mut R,
) -> Result<usize, SurrogateError> {
    let mut adam = AdamState::new(net.param_count(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut best = (val_loss(net, cfg, xv, yv)?, net.params.clone(), 0usize);
    let mut idx: Vec<usize> = (0..xt.rows()).collect();
    let bs = cfg.batch_size.min(xt.rows());
    let mut grad = vec![0.0; net.param_count()];
    let mut it = 0;
    while it < cfg.max_iterations {
        it += 1;
        for i in 0..bs {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        let xb = gather(xt, &idx[..bs]);
        let yb = gather(yt, &idx[..bs]);
        let cache = net.shape.forward_dropout_with(&net.params, &xb, rng, cfg.dropout)?;
        let (_, d_out) = batch_loss(cfg, cache.output(), &yb);
        grad.iter_mut().for_each(|g| *g = 0.0);
        net.shape.backward_with(&net.params, &cache, &d_out, &mut grad)?;
        adam.step(&mut net.params, &grad)?;
        if it % EVAL_EVERY == 0 {
            let v = val_loss(net, cfg, xv, yv)?;
            if v < best.0 {
                best = (v, net.params.clone(), it);
            } else if it - best.2 >= cfg.patience {
                break;
            }
        }
    }
    net.params = best.1;
    Ok(it)
}

/// Fixed standard-normal draws shared by every Tchebycheff evaluation of one
/// acquisition function.
pub fn common_normals<R: Rng>(samples: usize, objectives: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|_| (0..objectives).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Mean and std of the scalarized posterior. The weighted sum propagates
/// independent Gaussians in closed form; Tchebycheff scalarizes the given
/// joint draws and takes their sample moments.
pub fn scalarized_moments(
    post: &[(f64, f64)],
    pref: &PreferenceVector,
    scalarization: Scalarization,
    normals: &[Vec<f64>],
) -> (f64, f64) {
    let w = pref.weights();
    match scalarization {
        Scalarization::WeightedSum => {
            let mu = post.iter().zip(w).map(|((m, _), l)| l * m).sum();
            let var: f64 = post.iter().zip(w).map(|((_, s), l)| (l * s).powi(2)).sum();
            (mu, var.sqrt())
        }
        Scalarization::Tchebycheff => {
            let draws: Vec<f64> = normals
                .iter()
                .map(|z| {
                    post.iter()
                        .zip(w)
                        .zip(z)
                        .map(|(((m, s), l), z)| l * (m + s * z))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            mean_std(&draws)
        }
    }
}

pub fn ucb(post: &[(f64, f64)], pref: &PreferenceVector, scalarization: Scalarization, beta: f64, normals: &[Vec<f64>]) -> f64 {
    let (mu, sigma) = scalarized_moments(post, pref, scalarization, normals);
    mu + beta * sigma
}

/// Shaped UCB reward of a fitted surrogate, ready to train a flow model on.
pub struct AcquisitionReward<'a> {
    pub surrogate: &'a Surrogate,
    pub env: EnvSpec,
    pub scalarization: Scalarization,
    pub beta: f64,
    pub normals: Vec<Vec<f64>>,
    pub shaping: TrainConfig,
}

impl AcquisitionReward<'_> {
    pub fn acquisition(&self, pref: &PreferenceVector, objects: &[State]) -> Result<Vec<f64>, SurrogateError> {
        Ok(self
            .surrogate
            .posterior_states(&self.env, objects)?
            .iter()
            .map(|p| ucb(p, pref, self.scalarization, self.beta, &self.normals))
            .collect())
    }
}

impl RewardModel for AcquisitionReward<'_> {
    fn rewards(&self, pref: &PreferenceVector, objects: &[State]) -> Result<Vec<f64>, TrainError> {
        let acq = self
            .acquisition(pref, objects)
            .map_err(|e| TrainError::Reward(e.to_string()))?;
        Ok(acq.into_iter().map(|a| shape_reward(a, &self.shaping)).collect())
    }
}
