use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::trajectory_advantages;
use super::update::{PpoAgent, PpoConfig, Sample, UpdateReport};
use crate::buffer::{BufferConfig, FrontierBuffer};
use crate::env::{
    assign_dense_rewards, assign_rewards, EnvConfig, LatentEnv, RewardSummary, StateActionMode, Trajectory,
};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, RoundMetrics};
use crate::landscape::{train_predictor, FitnessModel, OracleBudget, PredictorConfig, MIN_PREDICTOR_DATA};
use crate::rng::{indexed, substream, Rng};
use crate::sequence::{Dataset, ScoredSequence, Sequence};
use crate::ved::LatentCodec;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Start episodes uniformly from the initial set; the buffer only
    /// archives results.
    pub no_buffer: bool,
    /// Treat every step as valid.
    pub no_calibration: bool,
    pub mode: StateActionMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatProtConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub buffer: BufferConfig,
    #[serde(default)]
    pub ablation: AblationFlags,
    /// Episodes per round are capped at this multiple of the call budget.
    #[serde(default = "default_cap_factor")]
    pub episode_cap_factor: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub seed: u64,
}

fn default_cap_factor() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

impl LatProtConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.buffer.validate()?;
        if self.episode_cap_factor == 0 || self.workers == 0 {
            return Err(Error::invalid("episode cap factor and workers must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundKind {
    /// Rewards from the budgeted oracle.
    #[serde(rename = "O")]
    Oracle,
    /// Rewards from the surrogate predictor.
    #[serde(rename = "P")]
    Predictor,
}

/// `outer` repetitions of one oracle round followed by `inner` predictor
/// rounds, then `tail` predictor rounds.
pub fn double_loop_schedule(outer: usize, inner: usize, tail: usize) -> Vec<RoundKind> {
    let mut kinds = Vec::with_capacity(outer * (inner + 1) + tail);
    for _ in 0..outer {
        kinds.push(RoundKind::Oracle);
        kinds.extend(std::iter::repeat_n(RoundKind::Predictor, inner));
    }
    kinds.extend(std::iter::repeat_n(RoundKind::Predictor, tail));
    kinds
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub kind: Option<RoundKind>,
    pub episodes: usize,
    pub transitions: usize,
    pub valid_terminal: usize,
    pub reward_calls: usize,
    pub invalid_transitions: usize,
    pub clamp_events: usize,
    /// Episode cap hit before enough valid terminal episodes were found.
    pub starved: bool,
    pub update: Option<UpdateReport>,
}

/// Per-round view handed to observers.
pub struct RoundSnapshot<'a> {
    pub metrics: &'a RoundMetrics,
    pub report: Option<&'a RoundReport>,
    pub buffer: &'a FrontierBuffer,
    pub agent: &'a PpoAgent,
    pub trajectories: &'a [Trajectory],
}

pub type Observer<'o> = dyn FnMut(&RoundSnapshot<'_>) -> Result<()> + 'o;

#[derive(Clone, Debug)]
pub struct CampaignResult {
    pub metrics: Vec<RoundMetrics>,
    pub reports: Vec<RoundReport>,
    /// The final buffer contents, best first.
    pub final_set: Vec<ScoredSequence>,
    /// Oracle calls charged to round budgets.
    pub oracle_calls: usize,
    /// Oracle calls spent re-scoring the final set outside the budget.
    pub evaluation_calls: usize,
    /// Metrics of the oracle-rescored final set, when re-scoring happened.
    pub final_metrics: Option<RoundMetrics>,
}

/// Evaluation context shared by all drivers.
pub struct Evaluation<'a> {
    pub initial: &'a Dataset,
    pub high: Option<&'a [Sequence]>,
}

impl Evaluation<'_> {
    fn metrics(&self, round: usize, buffer: &FrontierBuffer, calls: usize) -> Result<RoundMetrics> {
        let set = buffer_set(buffer);
        let m = compute_metrics(&set, self.initial, self.high)?;
        Ok(RoundMetrics::new(round, &set, m, calls, Some(buffer.epsilon())))
    }
}

/// Buffer contents as scored sequences, best first.
pub fn buffer_set(buffer: &FrontierBuffer) -> Vec<ScoredSequence> {
    let mut set: Vec<ScoredSequence> = buffer
        .entries()
        .iter()
        .map(|e| ScoredSequence::new(e.sequence.clone(), e.fitness))
        .collect();
    set.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    set
}

#[derive(Clone, Debug, Default)]
struct Collected {
    trajectories: Vec<Trajectory>,
    episodes: usize,
    transitions: usize,
    valid_terminal: usize,
    clamp_events: usize,
    starved: bool,
}

/// Agent, buffer and environment settings of one campaign.
pub struct LatProtRunner<'a> {
    config: LatProtConfig,
    codec: Option<&'a dyn LatentCodec>,
    agent: PpoAgent,
    buffer: FrontierBuffer,
    start_pool: Vec<Sequence>,
    start_rng: Rng,
    vocab_size: usize,
    episode_counter: u64,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> LatProtRunner<'a> {
    /// `start_set` holds the initial buffer contents (the top sequences of
    /// the task data); it must contain at least `buffer.capacity` distinct
    /// sequences.
    pub fn new(config: LatProtConfig, codec: Option<&'a dyn LatentCodec>, start_set: &Dataset) -> Result<Self> {
        config.validate()?;
        let length = start_set.seq_len().ok_or(Error::Empty("start set"))?;
        let vocab_size = start_set.vocabulary().size();
        let mode = config.ablation.mode;
        if mode.uses_codec() {
            let codec = codec.ok_or_else(|| Error::invalid(format!("mode {mode} needs a latent codec")))?;
            if codec.sequence_length() != length {
                return Err(Error::LengthMismatch {
                    expected: codec.sequence_length(),
                    actual: length,
                });
            }
        }
        let state_dim = match (mode, codec) {
            (StateActionMode::SeqMut, _) => length * vocab_size,
            (_, Some(c)) => c.latent_dim(),
            (_, None) => unreachable!("checked above"),
        };
        let agent = PpoAgent::new(
            config.ppo.clone(),
            mode,
            state_dim,
            length * vocab_size,
            config.env.delta,
            config.seed,
        )?;
        let mut buffer = FrontierBuffer::new(config.buffer.clone(), config.seed)?;
        buffer.initialize(start_set)?;
        let start_pool = buffer.entries().iter().map(|e| e.sequence.clone()).collect();
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| Error::invalid(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            start_rng: substream(config.seed, "starts"),
            config,
            codec,
            agent,
            buffer,
            start_pool,
            vocab_size,
            episode_counter: 0,
            pool,
        })
    }

    pub fn config(&self) -> &LatProtConfig {
        &self.config
    }

    pub fn agent(&self) -> &PpoAgent {
        &self.agent
    }

    pub fn buffer(&self) -> &FrontierBuffer {
        &self.buffer
    }

    fn env(&self) -> Result<LatentEnv<'a>> {
        let env = LatentEnv::new(self.config.env.clone(), self.codec, self.config.ablation.mode, self.vocab_size)?;
        Ok(if self.config.ablation.no_calibration {
            env.without_calibration()
        } else {
            env
        })
    }

    fn next_start(&mut self) -> Result<Sequence> {
        if self.config.ablation.no_buffer {
            let i = self.start_rng.random_range(0..self.start_pool.len());
            Ok(self.start_pool[i].clone())
        } else {
            self.buffer.top()
        }
    }

    fn run_episode(env: &LatentEnv<'_>, agent: &PpoAgent, start: Sequence, mut rng: Rng) -> Result<(Trajectory, usize)> {
        let mut episode = env.reset_from(start.clone())?;
        let mut transitions = Vec::with_capacity(env.config().max_steps);
        while !episode.done {
            let (action, log_prob) = agent.policy.act(&episode.state, &mut rng)?;
            let value = agent.value_of(&episode.state)?;
            let mut tr = env.step(&mut episode, action)?;
            tr.log_prob = log_prob;
            tr.value = value;
            transitions.push(tr);
        }
        Ok((
            Trajectory {
                initial: start,
                transitions,
            },
            episode.clamp_events,
        ))
    }

    fn run_batch(&self, env: &LatentEnv<'_>, starts: Vec<(u64, Sequence)>) -> Result<Vec<(Trajectory, usize)>> {
        let seed = self.config.seed;
        let agent = &self.agent;
        let work = |(id, start): (u64, Sequence)| Self::run_episode(env, agent, start, indexed(seed, "episode", id));
        match &self.pool {
            Some(pool) => pool.install(|| starts.into_par_iter().map(work).collect()),
            None => starts.into_iter().map(work).collect(),
        }
    }

    /// Runs episodes until `target` of them end on a valid terminal step, or
    /// the episode cap is reached.
    fn collect(&mut self, target: usize) -> Result<Collected> {
        let env = self.env()?;
        let cap = self.config.episode_cap_factor * target;
        let mut out = Collected::default();
        while out.valid_terminal < target && out.episodes < cap {
            let batch = (target - out.valid_terminal).min(cap - out.episodes);
            let mut starts = Vec::with_capacity(batch);
            for _ in 0..batch {
                starts.push((self.episode_counter, self.next_start()?));
                self.episode_counter += 1;
            }
            for (traj, clamps) in self.run_batch(&env, starts)? {
                out.episodes += 1;
                out.transitions += traj.transitions.len();
                out.clamp_events += clamps;
                if traj.valid_terminal() {
                    out.valid_terminal += 1;
                }
                out.trajectories.push(traj);
            }
        }
        out.starved = out.valid_terminal < target;
        if out.starved {
            log::warn!(
                "episode cap reached: {} valid terminal episodes of {target} after {} episodes",
                out.valid_terminal,
                out.episodes
            );
        }
        Ok(out)
    }

    /// Collects episode steps until at least `steps` transitions exist.
    fn collect_steps(&mut self, steps: usize) -> Result<Collected> {
        let env = self.env()?;
        let per_episode = self.config.env.max_steps;
        let mut out = Collected::default();
        while out.transitions < steps {
            let batch = (steps - out.transitions).div_ceil(per_episode);
            let mut starts = Vec::with_capacity(batch);
            for _ in 0..batch {
                starts.push((self.episode_counter, self.next_start()?));
                self.episode_counter += 1;
            }
            for (traj, clamps) in self.run_batch(&env, starts)? {
                out.episodes += 1;
                out.transitions += traj.transitions.len();
                out.clamp_events += clamps;
                if traj.valid_terminal() {
                    out.valid_terminal += 1;
                }
                out.trajectories.push(traj);
            }
        }
        Ok(out)
    }

    fn train(&mut self, trajectories: &[Trajectory]) -> Result<Option<UpdateReport>> {
        let cfg = self.agent.config().clone();
        let mut samples = Vec::new();
        for traj in trajectories {
            let (adv, ret) = trajectory_advantages(traj, cfg.gamma, cfg.gae_lambda)?;
            for ((tr, a), r) in traj.transitions.iter().zip(adv).zip(ret) {
                samples.push(Sample {
                    state: tr.state.clone(),
                    action: tr.action.clone(),
                    old_log_prob: tr.log_prob,
                    advantage: a,
                    ret: r,
                });
            }
        }
        if samples.is_empty() {
            return Ok(None);
        }
        Ok(Some(self.agent.update(&samples)?))
    }

    fn report(round: usize, kind: Option<RoundKind>, c: &Collected, rewards: &RewardSummary) -> RoundReport {
        RoundReport {
            round,
            kind,
            episodes: c.episodes,
            transitions: c.transitions,
            valid_terminal: c.valid_terminal,
            reward_calls: rewards.oracle_calls,
            invalid_transitions: rewards.invalid_transitions,
            clamp_events: c.clamp_events,
            starved: c.starved,
            update: None,
        }
    }

    /// One budgeted oracle round: collect, reward, update.
    pub fn oracle_round(
        &mut self,
        round: usize,
        oracle: &dyn FitnessModel,
        budget: &mut OracleBudget,
    ) -> Result<(RoundReport, Vec<Trajectory>, RewardSummary)> {
        let mut collected = self.collect(budget.remaining())?;
        let rewards = assign_rewards(&mut collected.trajectories, oracle, Some(budget), &mut self.buffer)?;
        let mut report = Self::report(round, Some(RoundKind::Oracle), &collected, &rewards);
        report.update = self.train(&collected.trajectories)?;
        Ok((report, collected.trajectories, rewards))
    }

    /// One round with sparse terminal rewards from an unbudgeted model.
    pub fn model_round(
        &mut self,
        round: usize,
        model: &dyn FitnessModel,
    ) -> Result<(RoundReport, Vec<Trajectory>, RewardSummary)> {
        let mut collected = self.collect(self.config.ppo.oracle_calls)?;
        let rewards = assign_rewards(&mut collected.trajectories, model, None, &mut self.buffer)?;
        let mut report = Self::report(round, Some(RoundKind::Predictor), &collected, &rewards);
        report.update = self.train(&collected.trajectories)?;
        Ok((report, collected.trajectories, rewards))
    }

    /// One rollout of at least `steps` transitions with dense model rewards.
    pub fn dense_round(
        &mut self,
        round: usize,
        model: &dyn FitnessModel,
        steps: usize,
    ) -> Result<(RoundReport, Vec<Trajectory>, RewardSummary)> {
        let mut collected = self.collect_steps(steps)?;
        let rewards = assign_dense_rewards(&mut collected.trajectories, model, &mut self.buffer)?;
        let mut report = Self::report(round, Some(RoundKind::Predictor), &collected, &rewards);
        report.update = self.train(&collected.trajectories)?;
        Ok((report, collected.trajectories, rewards))
    }

    /// Re-scores the buffer with the oracle outside any round budget.
    fn rescore(&self, oracle: &dyn FitnessModel, eval: &Evaluation<'_>, round: usize, calls: usize) -> Result<(RoundMetrics, Vec<ScoredSequence>)> {
        let seqs: Vec<Sequence> = self.buffer.entries().iter().map(|e| e.sequence.clone()).collect();
        let values = oracle.evaluate_batch(&seqs)?;
        let mut set: Vec<ScoredSequence> = seqs.into_iter().zip(values).map(|(s, f)| ScoredSequence::new(s, f)).collect();
        set.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        let m = compute_metrics(&set, eval.initial, eval.high)?;
        Ok((RoundMetrics::new(round, &set, m, calls, Some(self.buffer.epsilon())), set))
    }
}

/// Active learning with the oracle as reward source for every round.
pub fn run_active_learning(
    runner: &mut LatProtRunner<'_>,
    oracle: &dyn FitnessModel,
    eval: &Evaluation<'_>,
    observer: &mut Observer<'_>,
) -> Result<CampaignResult> {
    let rounds = runner.config.ppo.rounds;
    let mut budget = OracleBudget::new(runner.config.ppo.oracle_calls);
    let mut metrics = vec![eval.metrics(0, &runner.buffer, 0)?];
    observer(&RoundSnapshot {
        metrics: &metrics[0],
        report: None,
        buffer: &runner.buffer,
        agent: &runner.agent,
        trajectories: &[],
    })?;
    let mut reports = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let (report, trajectories, _) = runner
            .oracle_round(round, oracle, &mut budget)
            .map_err(|e| round_failure(round, e))?;
        let m = eval.metrics(round, &runner.buffer, budget.total_calls())?;
        observer(&RoundSnapshot {
            metrics: &m,
            report: Some(&report),
            buffer: &runner.buffer,
            agent: &runner.agent,
            trajectories: &trajectories,
        })?;
        log::info!(
            "round {round}: median {:.4}, best {:.4}, {} episodes, {} calls",
            m.fitness,
            m.buffer_max,
            report.episodes,
            report.reward_calls
        );
        metrics.push(m);
        reports.push(report);
        budget.next_round();
    }
    Ok(CampaignResult {
        final_set: buffer_set(&runner.buffer),
        metrics,
        reports,
        oracle_calls: budget.total_calls(),
        evaluation_calls: 0,
        final_metrics: None,
    })
}

fn round_failure(round: usize, e: Error) -> Error {
    log::error!("round {round} failed: {e}");
    e
}

/// Oracle rounds interleaved with predictor rounds following `schedule`; the
/// predictor is retrained after each oracle round on every oracle-labeled
/// terminal sequence so far (padded with the initial data when too small).
pub fn run_double_loop(
    runner: &mut LatProtRunner<'_>,
    oracle: &dyn FitnessModel,
    predictor_config: &PredictorConfig,
    schedule: &[RoundKind],
    eval: &Evaluation<'_>,
    observer: &mut Observer<'_>,
) -> Result<CampaignResult> {
    let mut budget = OracleBudget::new(runner.config.ppo.oracle_calls);
    let mut metrics = vec![eval.metrics(0, &runner.buffer, 0)?];
    observer(&RoundSnapshot {
        metrics: &metrics[0],
        report: None,
        buffer: &runner.buffer,
        agent: &runner.agent,
        trajectories: &[],
    })?;
    let mut labeled: Vec<ScoredSequence> = Vec::new();
    let mut predictor = None;
    let mut reports = Vec::with_capacity(schedule.len());
    let mut oracle_rounds = 0;
    for (i, &kind) in schedule.iter().enumerate() {
        let round = i + 1;
        let (report, trajectories, rewards) = match kind {
            RoundKind::Oracle => {
                if oracle_rounds > 0 {
                    budget.next_round();
                }
                oracle_rounds += 1;
                let out = runner.oracle_round(round, oracle, &mut budget)?;
                labeled.extend(out.2.evaluated.iter().map(|(s, f)| ScoredSequence::new(s.clone(), *f)));
                let mut train = labeled.clone();
                if train.len() < MIN_PREDICTOR_DATA {
                    train.extend(eval.initial.entries().iter().cloned());
                }
                let data = Dataset::new(train, eval.initial.vocabulary().clone())?;
                let cfg = PredictorConfig {
                    seed: predictor_config.seed.wrapping_add(oracle_rounds as u64),
                    ..predictor_config.clone()
                };
                predictor = Some(train_predictor(&data, &cfg)?);
                out
            }
            RoundKind::Predictor => {
                let model = predictor
                    .as_ref()
                    .ok_or_else(|| Error::invalid("schedule starts with a predictor round"))?;
                runner.model_round(round, model)?
            }
        };
        let _ = rewards;
        let m = eval.metrics(round, &runner.buffer, budget.total_calls())?;
        observer(&RoundSnapshot {
            metrics: &m,
            report: Some(&report),
            buffer: &runner.buffer,
            agent: &runner.agent,
            trajectories: &trajectories,
        })?;
        metrics.push(m);
        reports.push(report);
    }
    let (final_metrics, final_set) = runner.rescore(oracle, eval, schedule.len(), budget.total_calls())?;
    Ok(CampaignResult {
        evaluation_calls: final_set.len(),
        final_set,
        metrics,
        reports,
        oracle_calls: budget.total_calls(),
        final_metrics: Some(final_metrics),
    })
}

/// Single-round optimization against a predictor with dense rewards for a
/// total timestep budget; the final buffer is re-scored by the oracle.
pub fn run_predictor_guided(
    runner: &mut LatProtRunner<'_>,
    predictor: &dyn FitnessModel,
    oracle: &dyn FitnessModel,
    total_timesteps: usize,
    rollout_steps: usize,
    eval: &Evaluation<'_>,
    observer: &mut Observer<'_>,
) -> Result<CampaignResult> {
    if rollout_steps == 0 {
        return Err(Error::invalid("rollout length must be positive"));
    }
    let mut metrics = vec![eval.metrics(0, &runner.buffer, 0)?];
    observer(&RoundSnapshot {
        metrics: &metrics[0],
        report: None,
        buffer: &runner.buffer,
        agent: &runner.agent,
        trajectories: &[],
    })?;
    let mut reports = Vec::new();
    let mut steps = 0;
    let mut round = 0;
    while steps < total_timesteps {
        round += 1;
        let chunk = rollout_steps.min(total_timesteps - steps);
        let (report, trajectories, _) = runner.dense_round(round, predictor, chunk)?;
        steps += report.transitions;
        let m = eval.metrics(round, &runner.buffer, 0)?;
        observer(&RoundSnapshot {
            metrics: &m,
            report: Some(&report),
            buffer: &runner.buffer,
            agent: &runner.agent,
            trajectories: &trajectories,
        })?;
        metrics.push(m);
        reports.push(report);
    }
    let (final_metrics, final_set) = runner.rescore(oracle, eval, round, 0)?;
    Ok(CampaignResult {
        evaluation_calls: final_set.len(),
        final_set,
        metrics,
        reports,
        oracle_calls: 0,
        final_metrics: Some(final_metrics),
    })
}
