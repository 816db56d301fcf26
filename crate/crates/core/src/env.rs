//! Latent-space episode mechanics.
//!
//! A state is the latent code of the current sequence (or its one-hot
//! encoding in the sequence-state ablation). Perturbation actions move the
//! latent state additively and the decoder applies the resulting mutations to
//! the previous sequence; mutation actions edit one position directly. Steps
//! that change more than `m_step` positions are marked invalid, and an
//! episode ends after `T_ep` steps or once it strays more than `m_total`
//! mutations from its start sequence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::buffer::FrontierBuffer;
use crate::error::{Error, Result};
use crate::landscape::{oracle_query, FitnessModel, OracleBudget};
use crate::sequence::{hamming_unchecked, Sequence};
use crate::ved::LatentCodec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Per-component action bound `δ`.
    pub delta: f64,
    /// Episode length `T_ep`.
    pub max_steps: usize,
    pub m_step: usize,
    pub m_total: usize,
    pub m_decode: usize,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("episode length must be at least 1"));
        }
        if self.m_step == 0 || self.m_step > self.m_decode {
            return Err(Error::invalid("need 1 <= m_step <= m_decode"));
        }
        if self.m_total < self.m_step {
            return Err(Error::invalid("need m_total >= m_step"));
        }
        Ok(())
    }
}

/// State and action modelling of the agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateActionMode {
    /// Latent state, latent perturbation.
    #[default]
    #[serde(rename = "lat/lat")]
    LatLat,
    /// Latent state, single-site mutation.
    #[serde(rename = "lat/mut")]
    LatMut,
    /// One-hot sequence state, single-site mutation.
    #[serde(rename = "seq/mut")]
    SeqMut,
}

impl StateActionMode {
    pub fn uses_codec(self) -> bool {
        !matches!(self, StateActionMode::SeqMut)
    }

    pub fn continuous(self) -> bool {
        matches!(self, StateActionMode::LatLat)
    }
}

impl fmt::Display for StateActionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateActionMode::LatLat => "lat/lat",
            StateActionMode::LatMut => "lat/mut",
            StateActionMode::SeqMut => "seq/mut",
        })
    }
}

impl FromStr for StateActionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lat/lat" => Ok(StateActionMode::LatLat),
            "lat/mut" => Ok(StateActionMode::LatMut),
            "seq/mut" => Ok(StateActionMode::SeqMut),
            other => Err(Error::invalid(format!("unknown state/action mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// `raw` is the pre-squash Gaussian draw, `applied` the bounded action.
    Perturbation { raw: Vec<f64>, applied: Vec<f64> },
    /// Flattened `position · V + symbol`.
    Mutation(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub next_state: Vec<f64>,
    pub next_sequence: Sequence,
    pub valid: bool,
    pub done: bool,
    pub reward: Option<f64>,
    /// Behaviour-policy log-probability of the action.
    pub log_prob: f64,
    /// Value estimate of `state` at collection time.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Sequence,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn terminal(&self) -> Option<&Transition> {
        self.transitions.last().filter(|t| t.done)
    }

    /// True when the episode ended on a valid step and will be scored.
    pub fn valid_terminal(&self) -> bool {
        self.terminal().is_some_and(|t| t.valid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub t: usize,
    pub state: Vec<f64>,
    pub current: Sequence,
    pub initial: Sequence,
    pub done: bool,
    /// Steps on which the action or the latent state had to be clamped.
    pub clamp_events: usize,
}

pub struct LatentEnv<'a> {
    config: EnvConfig,
    codec: Option<&'a dyn LatentCodec>,
    mode: StateActionMode,
    calibration: bool,
    vocab_size: usize,
}

impl<'a> LatentEnv<'a> {
    pub fn new(
        config: EnvConfig,
        codec: Option<&'a dyn LatentCodec>,
        mode: StateActionMode,
        vocab_size: usize,
    ) -> Result<Self> {
        config.validate()?;
        if mode.uses_codec() && codec.is_none() {
            return Err(Error::invalid(format!("mode {mode} needs a latent codec")));
        }
        Ok(Self {
            config,
            codec,
            mode,
            calibration: true,
            vocab_size,
        })
    }

    /// Disables calibrating steps: every step counts as valid.
    pub fn without_calibration(mut self) -> Self {
        self.calibration = false;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn mode(&self) -> StateActionMode {
        self.mode
    }

    pub fn state_dim(&self, length: usize) -> usize {
        match (self.mode, self.codec) {
            (StateActionMode::SeqMut, _) => length * self.vocab_size,
            (_, Some(codec)) => codec.latent_dim(),
            (_, None) => unreachable!("checked in new"),
        }
    }

    fn observe(&self, seq: &Sequence) -> Result<Vec<f64>> {
        match self.mode {
            StateActionMode::SeqMut => Ok(seq.one_hot(self.vocab_size)),
            _ => Ok(self.codec.expect("codec").encode(seq)?.0),
        }
    }

    pub fn reset_from(&self, initial: Sequence) -> Result<EpisodeState> {
        let state = self.observe(&initial)?;
        Ok(EpisodeState {
            t: 0,
            state,
            current: initial.clone(),
            initial,
            done: false,
            clamp_events: 0,
        })
    }

    /// Starts an episode from a buffer sample.
    pub fn reset(&self, buffer: &mut FrontierBuffer) -> Result<EpisodeState> {
        let initial = buffer.top()?;
        self.reset_from(initial)
    }

    /// Applies `action`, returning the recorded transition; `episode` advances
    /// in place. `log_prob` and `value` are left at zero for the caller.
    pub fn step(&self, episode: &mut EpisodeState, action: Action) -> Result<Transition> {
        if episode.done {
            return Err(Error::invalid("step called on a finished episode"));
        }
        let (next_state, next_sequence, action) = match action {
            Action::Perturbation { raw, mut applied } => {
                if !self.mode.continuous() {
                    return Err(Error::invalid("perturbation action in a mutation-action mode"));
                }
                if applied.len() != episode.state.len() {
                    return Err(Error::DimensionMismatch {
                        context: "action",
                        expected: episode.state.len(),
                        actual: applied.len(),
                    });
                }
                let delta = self.config.delta;
                let mut clamped = false;
                for a in applied.iter_mut() {
                    if a.abs() > delta {
                        *a = a.clamp(-delta, delta);
                        clamped = true;
                    }
                }
                let next: Vec<f64> = episode
                    .state
                    .iter()
                    .zip(&applied)
                    .map(|(s, a)| {
                        let x = s + a;
                        if x.abs() > 1.0 {
                            clamped = true;
                        }
                        x.clamp(-1.0, 1.0)
                    })
                    .collect();
                if clamped {
                    episode.clamp_events += 1;
                    log::debug!("clamped action or latent state at t = {}", episode.t);
                }
                let codec = self.codec.expect("codec");
                let decoded = codec.decode(&next, &episode.current, self.config.m_decode)?;
                (next, decoded, Action::Perturbation { raw, applied })
            }
            Action::Mutation(index) => {
                if self.mode.continuous() {
                    return Err(Error::invalid("mutation action in the latent-action mode"));
                }
                let length = episode.current.len();
                if index >= length * self.vocab_size {
                    return Err(Error::invalid(format!("mutation index {index} out of range")));
                }
                let mut next_seq = episode.current.clone();
                next_seq.set(index / self.vocab_size, (index % self.vocab_size) as u8);
                (self.observe(&next_seq)?, next_seq, Action::Mutation(index))
            }
        };
        let step_distance = hamming_unchecked(&next_sequence, &episode.current);
        let valid = !self.calibration || step_distance <= self.config.m_step;
        let done = hamming_unchecked(&next_sequence, &episode.initial) > self.config.m_total
            || episode.t + 1 == self.config.max_steps;
        let transition = Transition {
            state: std::mem::replace(&mut episode.state, next_state.clone()),
            action,
            next_state,
            next_sequence: next_sequence.clone(),
            valid,
            done,
            reward: None,
            log_prob: 0.0,
            value: 0.0,
        };
        episode.current = next_sequence;
        episode.t += 1;
        episode.done = done;
        Ok(transition)
    }
}

/// Outcome of scoring one round of trajectories.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub oracle_calls: usize,
    pub invalid_transitions: usize,
    /// Scored terminal sequences, in trajectory order.
    pub evaluated: Vec<(Sequence, f64)>,
}

/// Sparse reward assignment: −1 for invalid steps (no oracle call), the
/// reward model's value at valid terminal steps (which are also offered to
/// the buffer), 0 otherwise.
///
/// With a budget, every scored terminal is charged as one oracle call and the
/// whole batch is rejected before any reward is written if it does not fit.
pub fn assign_rewards(
    trajectories: &mut [Trajectory],
    model: &dyn FitnessModel,
    budget: Option<&mut OracleBudget>,
    buffer: &mut FrontierBuffer,
) -> Result<RewardSummary> {
    for traj in trajectories.iter() {
        if traj.terminal().is_none() {
            return Err(Error::invalid("trajectory has no terminal transition"));
        }
    }
    let to_score: Vec<Sequence> = trajectories
        .iter()
        .filter(|t| t.valid_terminal())
        .map(|t| t.terminal().expect("checked").next_sequence.clone())
        .collect();
    let scores = match budget {
        Some(budget) => oracle_query(model, &to_score, budget)?,
        None => model.evaluate_batch(&to_score)?,
    };
    let mut summary = RewardSummary {
        oracle_calls: to_score.len(),
        ..RewardSummary::default()
    };
    let mut next_score = scores.into_iter();
    for traj in trajectories.iter_mut() {
        for tr in traj.transitions.iter_mut() {
            let reward = if !tr.valid {
                summary.invalid_transitions += 1;
                -1.0
            } else if tr.done {
                let f = next_score.next().expect("one score per valid terminal");
                buffer.update(&tr.next_sequence, f);
                summary.evaluated.push((tr.next_sequence.clone(), f));
                f
            } else {
                0.0
            };
            tr.reward = Some(reward);
        }
    }
    Ok(summary)
}

/// Dense reward assignment for predictor-guided runs: every valid step is
/// scored by the model and offered to the buffer; invalid steps get −1.
pub fn assign_dense_rewards(
    trajectories: &mut [Trajectory],
    model: &dyn FitnessModel,
    buffer: &mut FrontierBuffer,
) -> Result<RewardSummary> {
    let mut summary = RewardSummary::default();
    for traj in trajectories.iter_mut() {
        for tr in traj.transitions.iter_mut() {
            let reward = if tr.valid {
                let f = model.evaluate(&tr.next_sequence)?;
                buffer.update(&tr.next_sequence, f);
                summary.evaluated.push((tr.next_sequence.clone(), f));
                f
            } else {
                summary.invalid_transitions += 1;
                -1.0
            };
            tr.reward = Some(reward);
        }
    }
    Ok(summary)
}
