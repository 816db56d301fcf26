use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::neuralnet::{softmax, Activation, LayerSpec, Mlp, MlpCheckpoint};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(1 − tanh²(u))`, stable for large `|u|`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let m = -2.0 * u.abs();
    2.0 * (std::f64::consts::LN_2 - u.abs() - m.exp().ln_1p())
}

/// Log-density of `a = δ·tanh(u)` with `u ~ N(μ, σ²)`, per dimension summed.
pub fn squashed_log_density(mean: &[f64], log_std: &[f64], delta: f64, raw: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(raw)
        .map(|((&mu, &ls), &u)| {
            let z = (u - mu) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI - delta.ln() - log_one_minus_tanh_sq(u)
        })
        .sum()
}

/// Diagonal Gaussian over the pre-squash action with a state-independent
/// log standard deviation; actions are `δ·tanh(u)`.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
    pub delta: f64,
}

/// Categorical distribution over flattened single-site mutations.
#[derive(Clone, Debug)]
pub struct CategoricalPolicy {
    pub logits_net: Mlp,
}

#[derive(Clone, Debug)]
pub enum Policy {
    Gaussian(GaussianPolicy),
    Categorical(CategoricalPolicy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyCheckpoint {
    Gaussian {
        mean_net: MlpCheckpoint,
        log_std: Vec<f64>,
        delta: f64,
    },
    Categorical {
        logits_net: MlpCheckpoint,
    },
}

pub(crate) fn hidden_tanh(input: usize, hidden: usize, output: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input, hidden, Activation::Tanh),
        LayerSpec::new(hidden, hidden, Activation::Tanh),
        LayerSpec::new(hidden, output, Activation::Identity),
    ]
}

impl Policy {
    pub fn gaussian<R: rand::Rng + ?Sized>(
        state_dim: usize,
        hidden: usize,
        delta: f64,
        log_std_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut mean_net = Mlp::new(hidden_tanh(state_dim, hidden, state_dim), rng)?;
        // Small output layer so the initial mean stays near zero.
        let last = mean_net.layers().len() - 1;
        let (start, len) = {
            let offset: usize = mean_net.layers()[..last]
                .iter()
                .map(|l| l.input * l.output + if l.bias { l.output } else { 0 })
                .sum();
            (offset, mean_net.layers()[last].input * mean_net.layers()[last].output)
        };
        mean_net.params_mut()[start..start + len].iter_mut().for_each(|w| *w *= 0.01);
        Ok(Policy::Gaussian(GaussianPolicy {
            mean_net,
            log_std: vec![log_std_init; state_dim],
            delta,
        }))
    }

    pub fn categorical<R: rand::Rng + ?Sized>(
        state_dim: usize,
        hidden: usize,
        actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Policy::Categorical(CategoricalPolicy {
            logits_net: Mlp::new(hidden_tanh(state_dim, hidden, actions), rng)?,
        }))
    }

    pub fn param_count(&self) -> usize {
        match self {
            Policy::Gaussian(g) => g.mean_net.param_count() + g.log_std.len(),
            Policy::Categorical(c) => c.logits_net.param_count(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Policy::Gaussian(g) => {
                let mut p = g.mean_net.params().to_vec();
                p.extend_from_slice(&g.log_std);
                p
            }
            Policy::Categorical(c) => c.logits_net.params().to_vec(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "policy parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        match self {
            Policy::Gaussian(g) => {
                let n = g.mean_net.param_count();
                g.mean_net.set_params(&params[..n])?;
                g.log_std.copy_from_slice(&params[n..]);
            }
            Policy::Categorical(c) => c.logits_net.set_params(params)?,
        }
        Ok(())
    }

    /// Samples an action and returns it with its log-probability.
    pub fn act<R: rand::Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(Action, f64)> {
        match self {
            Policy::Gaussian(g) => {
                let mean = g.mean_net.predict(state)?;
                let raw: Vec<f64> = mean
                    .iter()
                    .zip(&g.log_std)
                    .map(|(&mu, &ls)| {
                        let eps: f64 = StandardNormal.sample(rng);
                        mu + ls.exp() * eps
                    })
                    .collect();
                let logp = squashed_log_density(&mean, &g.log_std, g.delta, &raw);
                let applied = raw.iter().map(|u| g.delta * u.tanh()).collect();
                Ok((Action::Perturbation { raw, applied }, logp))
            }
            Policy::Categorical(c) => {
                let probs = softmax(&c.logits_net.predict(state)?);
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if r < acc {
                        k = i;
                        break;
                    }
                }
                Ok((Action::Mutation(k), probs[k].ln()))
            }
        }
    }

    /// Deterministic action: the squashed mean, or the most likely mutation.
    pub fn mode_action(&self, state: &[f64]) -> Result<Action> {
        match self {
            Policy::Gaussian(g) => {
                let raw = g.mean_net.predict(state)?;
                let applied = raw.iter().map(|u| g.delta * u.tanh()).collect();
                Ok(Action::Perturbation { raw, applied })
            }
            Policy::Categorical(c) => {
                let logits = c.logits_net.predict(state)?;
                let k = logits
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &l)| if l > logits[best] { i } else { best });
                Ok(Action::Mutation(k))
            }
        }
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> Result<f64> {
        let mut scratch = vec![0.0; self.param_count()];
        Ok(self.log_prob_grad(state, action, 0.0, 0.0, &mut scratch)?.0)
    }

    /// Returns `(log π(a|s), entropy)` and adds `coef·∇log π + ent_coef·∇H`
    /// into `grads` (laid out like [`Policy::params`]).
    ///
    /// The entropy of the Gaussian is taken before squashing, so it only
    /// depends on the log standard deviations.
    pub fn log_prob_grad(
        &self,
        state: &[f64],
        action: &Action,
        coef: f64,
        ent_coef: f64,
        grads: &mut [f64],
    ) -> Result<(f64, f64)> {
        match (self, action) {
            (Policy::Gaussian(g), Action::Perturbation { raw, .. }) => {
                let (mean, cache) = g.mean_net.forward(state)?;
                if raw.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        context: "action",
                        expected: mean.len(),
                        actual: raw.len(),
                    });
                }
                let logp = squashed_log_density(&mean, &g.log_std, g.delta, raw);
                let entropy: f64 = g.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum();
                let n = g.mean_net.param_count();
                let mut mean_grad = vec![0.0; mean.len()];
                for j in 0..mean.len() {
                    let var = (2.0 * g.log_std[j]).exp();
                    let diff = raw[j] - mean[j];
                    mean_grad[j] = coef * diff / var;
                    grads[n + j] += coef * (diff * diff / var - 1.0) + ent_coef;
                }
                if coef != 0.0 {
                    g.mean_net.backward_into(&cache, &mean_grad, &mut grads[..n])?;
                }
                Ok((logp, entropy))
            }
            (Policy::Categorical(c), Action::Mutation(k)) => {
                let (logits, cache) = c.logits_net.forward(state)?;
                if *k >= logits.len() {
                    return Err(Error::invalid(format!("action {k} out of range")));
                }
                let probs = softmax(&logits);
                let logp = probs[*k].ln();
                let entropy: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                if coef != 0.0 || ent_coef != 0.0 {
                    let out_grad: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| {
                            let dlogp = if i == *k { 1.0 - p } else { -p };
                            let log_p = if p > 0.0 { p.ln() } else { 0.0 };
                            let dent = -p * (log_p + entropy);
                            coef * dlogp + ent_coef * dent
                        })
                        .collect();
                    c.logits_net.backward_into(&cache, &out_grad, grads)?;
                }
                Ok((logp, entropy))
            }
            _ => Err(Error::invalid("action kind does not match the policy")),
        }
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        match self {
            Policy::Gaussian(g) => PolicyCheckpoint::Gaussian {
                mean_net: g.mean_net.to_checkpoint(),
                log_std: g.log_std.clone(),
                delta: g.delta,
            },
            Policy::Categorical(c) => PolicyCheckpoint::Categorical {
                logits_net: c.logits_net.to_checkpoint(),
            },
        }
    }

    pub fn from_checkpoint(ckpt: &PolicyCheckpoint) -> Result<Self> {
        match ckpt {
            PolicyCheckpoint::Gaussian {
                mean_net,
                log_std,
                delta,
            } => {
                let mean_net = Mlp::from_checkpoint(mean_net)?;
                if log_std.len() != mean_net.output_dim() {
                    return Err(Error::invalid("log_std length does not match the mean network"));
                }
                Ok(Policy::Gaussian(GaussianPolicy {
                    mean_net,
                    log_std: log_std.clone(),
                    delta: *delta,
                }))
            }
            PolicyCheckpoint::Categorical { logits_net } => Ok(Policy::Categorical(CategoricalPolicy {
                logits_net: Mlp::from_checkpoint(logits_net)?,
            })),
        }
    }
}
