use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::policy::{hidden_tanh, Policy, PolicyCheckpoint};
use crate::env::{Action, StateActionMode};
use crate::error::{Error, Result};
use crate::neuralnet::{clip_grad_norm, AdamConfig, AdamState, Mlp, MlpCheckpoint};
use crate::rng::{substream, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub log_std_init: f64,
    /// Active-learning rounds `E`.
    pub rounds: usize,
    /// Oracle calls per round.
    pub oracle_calls: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch_size: 64,
            learning_rate: 3e-4,
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: 64,
            log_std_init: 0.0,
            rounds: 15,
            oracle_calls: 256,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) || !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::invalid("PPO needs clip > 0 and gamma, lambda in [0, 1]"));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.hidden == 0 || self.oracle_calls == 0 {
            return Err(Error::invalid("PPO epochs, minibatch size, width and oracle calls must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::invalid("PPO needs lr >= 0 and max_grad_norm > 0"));
        }
        Ok(())
    }
}

/// One training sample gathered from a rewarded trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: Action,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Clipped surrogate loss `−min(ρA, clip(ρ, 1−ε, 1+ε)A)` and its derivative
/// with respect to `log ρ`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if clipped < unclipped {
        (-clipped, 0.0)
    } else {
        (-unclipped, -unclipped)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub config: PpoConfig,
    pub policy: PolicyCheckpoint,
    pub value: MlpCheckpoint,
}

/// Actor-critic pair with separate Adam states.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub policy: Policy,
    pub value: Mlp,
    config: PpoConfig,
    policy_opt: AdamState,
    value_opt: AdamState,
    rng: Rng,
}

impl PpoAgent {
    /// `actions` is the number of discrete mutations in mutation-action modes.
    pub fn new(
        config: PpoConfig,
        mode: StateActionMode,
        state_dim: usize,
        actions: usize,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut init = substream(seed, "agent-init");
        let policy = if mode.continuous() {
            Policy::gaussian(state_dim, config.hidden, delta, config.log_std_init, &mut init)?
        } else {
            Policy::categorical(state_dim, config.hidden, actions, &mut init)?
        };
        let value = Mlp::new(hidden_tanh(state_dim, config.hidden, 1), &mut init)?;
        Ok(Self::assemble(config, policy, value, seed))
    }

    fn assemble(config: PpoConfig, policy: Policy, value: Mlp, seed: u64) -> Self {
        let adam = AdamConfig::with_lr(config.learning_rate);
        Self {
            policy_opt: AdamState::new(policy.param_count(), adam),
            value_opt: AdamState::new(value.param_count(), adam),
            rng: substream(seed, "agent-minibatch"),
            policy,
            value,
            config,
        }
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn value_of(&self, state: &[f64]) -> Result<f64> {
        Ok(self.value.predict(state)?[0])
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            config: self.config.clone(),
            policy: self.policy.to_checkpoint(),
            value: self.value.to_checkpoint(),
        }
    }

    /// Restores weights; optimizer moments start fresh.
    pub fn from_checkpoint(ckpt: &AgentCheckpoint, seed: u64) -> Result<Self> {
        let policy = Policy::from_checkpoint(&ckpt.policy)?;
        let value = Mlp::from_checkpoint(&ckpt.value)?;
        Ok(Self::assemble(ckpt.config.clone(), policy, value, seed))
    }

    /// Runs the clipped policy-gradient update over `samples`.
    ///
    /// Advantages are normalized over the whole batch. Policy and value
    /// gradients share one global norm clip.
    pub fn update(&mut self, samples: &[Sample]) -> Result<UpdateReport> {
        if samples.is_empty() {
            return Err(Error::Empty("PPO batch"));
        }
        let cfg = self.config.clone();
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let std = (samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
        let advantages: Vec<f64> = samples
            .iter()
            .map(|s| {
                if std < 1e-8 {
                    s.advantage - mean
                } else {
                    (s.advantage - mean) / (std + 1e-8)
                }
            })
            .collect();

        let np = self.policy.param_count();
        let nv = self.value.param_count();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut report = UpdateReport::default();
        let mut kl_sum = 0.0;
        let mut clipped = 0usize;
        let mut seen = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let m = chunk.len() as f64;
                let mut grads = vec![0.0; np + nv];
                let (mut pl, mut vl, mut ent) = (0.0, 0.0, 0.0);
                for &i in chunk {
                    let s = &samples[i];
                    // First pass only for the ratio; the gradient needs its value.
                    let logp = self.policy.log_prob(&s.state, &s.action)?;
                    let log_ratio = logp - s.old_log_prob;
                    let ratio = log_ratio.exp();
                    let (loss, dloss) = clipped_surrogate(ratio, advantages[i], cfg.clip);
                    let (_, h) = self.policy.log_prob_grad(
                        &s.state,
                        &s.action,
                        dloss / m,
                        -cfg.ent_coef / m,
                        &mut grads[..np],
                    )?;
                    let (v, cache) = self.value.forward(&s.state)?;
                    let diff = v[0] - s.ret;
                    self.value
                        .backward_into(&cache, &[cfg.vf_coef * 2.0 * diff / m], &mut grads[np..])?;
                    pl += loss;
                    vl += diff * diff;
                    ent += h;
                    kl_sum += (ratio - 1.0) - log_ratio;
                    if (ratio - 1.0).abs() > cfg.clip {
                        clipped += 1;
                    }
                    seen += 1;
                }
                let total = (pl + cfg.vf_coef * vl - cfg.ent_coef * ent) / m;
                if !total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!("PPO loss {total}")));
                }
                report.grad_norm = clip_grad_norm(&mut grads, cfg.max_grad_norm);
                let mut pp = self.policy.params();
                self.policy_opt.step(&mut pp, &grads[..np])?;
                self.policy.set_params(&pp)?;
                self.value_opt.step(self.value.params_mut(), &grads[np..])?;
                report.policy_loss = pl / m;
                report.value_loss = vl / m;
                report.entropy = ent / m;
                report.minibatches += 1;
            }
        }
        report.approx_kl = kl_sum / seen as f64;
        report.clip_fraction = clipped as f64 / seen as f64;
        if !self.value.all_finite() || self.policy.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters after PPO update".into()));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::indexed;

    #[test]
    fn surrogate_cases() {
        let eps = 0.2;
        // Positive advantage above the upper bound: clipped, no gradient.
        assert_eq!(clipped_surrogate(1.5, 2.0, eps), (-2.4, 0.0));
        // Positive advantage inside the trust region.
        let (l, g) = clipped_surrogate(1.1, 2.0, eps);
        assert!((l + 2.2).abs() < 1e-12 && (g + 2.2).abs() < 1e-12);
        // Negative advantage below the lower bound: clipped.
        let (l, g) = clipped_surrogate(0.5, -1.0, eps);
        assert!((l - 0.8).abs() < 1e-12 && g == 0.0);
        // Negative advantage above the upper bound keeps the gradient.
        let (l, g) = clipped_surrogate(1.5, -1.0, eps);
        assert!((l - 1.5).abs() < 1e-12 && (g - 1.5).abs() < 1e-12);
        // Positive advantage below the lower bound keeps the gradient.
        let (l, g) = clipped_surrogate(0.5, 1.0, eps);
        assert!((l + 0.5).abs() < 1e-12 && (g + 0.5).abs() < 1e-12);
    }

    fn bandit_samples(agent: &PpoAgent, s0: f64, count: usize, rng: &mut Rng) -> (Vec<Sample>, f64) {
        let state = vec![s0];
        let value = agent.value_of(&state).unwrap();
        let mut total = 0.0;
        let samples = (0..count)
            .map(|_| {
                let (action, logp) = agent.policy.act(&state, rng).unwrap();
                let Action::Perturbation { applied, .. } = &action else { unreachable!() };
                let reward = -(s0 + applied[0]).abs();
                total += reward;
                Sample {
                    state: state.clone(),
                    action,
                    old_log_prob: logp,
                    advantage: reward - value,
                    ret: reward,
                }
            })
            .collect();
        (samples, total / count as f64)
    }

    #[test]
    fn one_dimensional_bandit_converges() {
        let config = PpoConfig {
            learning_rate: 3e-3,
            epochs: 4,
            ..PpoConfig::default()
        };
        let s0 = 0.3;
        let mut agent = PpoAgent::new(config, StateActionMode::LatLat, 1, 0, 1.0, 11).unwrap();
        for round in 0..200u64 {
            let mut rng = indexed(11, "bandit", round);
            let (samples, _) = bandit_samples(&agent, s0, 64, &mut rng);
            agent.update(&samples).unwrap();
        }
        let Action::Perturbation { applied, .. } = agent.policy.mode_action(&[s0]).unwrap() else {
            unreachable!()
        };
        assert!((applied[0] + s0).abs() < 0.05, "mean action {}", applied[0]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let config = PpoConfig {
            learning_rate: 0.0,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(config, StateActionMode::LatLat, 1, 0, 1.0, 2).unwrap();
        let before = (agent.policy.params(), agent.value.params().to_vec());
        let mut rng = indexed(2, "bandit", 0);
        let (samples, _) = bandit_samples(&agent, 0.5, 100, &mut rng);
        agent.update(&samples).unwrap();
        assert_eq!(before.0, agent.policy.params());
        assert_eq!(before.1, agent.value.params());
    }

    #[test]
    fn first_epoch_ratio_is_one() {
        let config = PpoConfig {
            epochs: 1,
            minibatch_size: 1000,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(config, StateActionMode::LatLat, 1, 0, 1.0, 3).unwrap();
        let mut rng = indexed(3, "bandit", 0);
        let (samples, _) = bandit_samples(&agent, 0.1, 50, &mut rng);
        let report = agent.update(&samples).unwrap();
        assert!(report.approx_kl.abs() < 1e-12);
        assert_eq!(report.clip_fraction, 0.0);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let mut agent = PpoAgent::new(PpoConfig::default(), StateActionMode::SeqMut, 4, 4, 1.0, 0).unwrap();
        assert!(agent.update(&[]).is_err());
    }
}
