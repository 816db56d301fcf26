//! Comparison optimizers sharing the oracle budget contract: CMA-ES over
//! one-hot or latent encodings, a greedy mutate-and-select search
//! (AdaLead-style), a distance-prioritized evolutionary search (PEX-style)
//! and random local search.

mod cmaes;
mod greedy;
mod pex;
mod random;

use std::collections::HashSet;

pub use cmaes::{cmaes_minimize, one_hot_decode, Cmaes, CmaesSearch, CmaesSummary, Encoding};
pub use greedy::{GreedyConfig, GreedyEvolution};
pub use pex::{pareto_frontier, DistancePrioritized};
pub use random::RandomSearch;

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, RoundMetrics};
use crate::landscape::{FitnessModel, OracleBudget};
use crate::sequence::{Dataset, ScoredSequence, Sequence};

/// Sequences evaluated during one round.
#[derive(Clone, Debug, Default)]
pub struct RoundOutcome {
    pub evaluated: Vec<ScoredSequence>,
    /// Set when the optimizer could not propose anything new.
    pub stalled: bool,
}

pub trait RoundOptimizer {
    fn name(&self) -> &'static str;

    /// Proposes and evaluates at most `budget.remaining()` sequences.
    fn run_round(&mut self, oracle: &dyn FitnessModel, budget: &mut OracleBudget) -> Result<RoundOutcome>;
}

/// Best `capacity` distinct sequences seen so far.
#[derive(Clone, Debug)]
pub struct TopK {
    capacity: usize,
    entries: Vec<ScoredSequence>,
    members: HashSet<Sequence>,
}

impl TopK {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
            members: HashSet::new(),
        }
    }

    pub fn entries(&self) -> &[ScoredSequence] {
        &self.entries
    }

    pub fn insert(&mut self, item: &ScoredSequence) {
        if self.capacity == 0 || self.members.contains(&item.sequence) {
            return;
        }
        if self.entries.len() < self.capacity {
            self.members.insert(item.sequence.clone());
            self.entries.push(item.clone());
            return;
        }
        let (worst, min) = self
            .entries
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, e)| if e.fitness < acc.1 { (i, e.fitness) } else { acc });
        if item.fitness > min {
            self.members.remove(&self.entries[worst].sequence);
            self.members.insert(item.sequence.clone());
            self.entries[worst] = item.clone();
        }
    }

    /// Entries sorted by fitness, best first.
    pub fn sorted(&self) -> Vec<ScoredSequence> {
        let mut out = self.entries.clone();
        out.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        out
    }
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub metrics: Vec<RoundMetrics>,
    pub result: Vec<ScoredSequence>,
    pub stalled_rounds: Vec<usize>,
    pub oracle_calls: usize,
}

/// Shared settings of a baseline campaign.
pub struct BaselineTask<'a> {
    pub oracle: &'a dyn FitnessModel,
    pub rounds: usize,
    pub calls_per_round: usize,
    pub top_k: usize,
    /// Initial archive, usually the start set of the task.
    pub seeds: &'a [ScoredSequence],
    pub initial: &'a Dataset,
    pub high: Option<&'a [Sequence]>,
}

/// Runs `rounds` rounds of `optimizer`, tracking the top-K archive and
/// emitting metrics after the seeds (round 0) and after every round.
pub fn run_baseline(
    optimizer: &mut dyn RoundOptimizer,
    task: &BaselineTask<'_>,
    on_round: &mut dyn FnMut(&RoundMetrics, &[ScoredSequence]) -> Result<()>,
) -> Result<BaselineRun> {
    if task.seeds.is_empty() {
        return Err(Error::Empty("seed set"));
    }
    let mut archive = TopK::new(task.top_k);
    task.seeds.iter().for_each(|s| archive.insert(s));
    let mut budget = OracleBudget::new(task.calls_per_round);
    let mut metrics = Vec::with_capacity(task.rounds + 1);
    let mut stalled_rounds = Vec::new();
    let emit = |round: usize, archive: &TopK, calls: usize, metrics: &mut Vec<RoundMetrics>, on_round: &mut dyn FnMut(&RoundMetrics, &[ScoredSequence]) -> Result<()>| -> Result<()> {
        let set = archive.sorted();
        let m = compute_metrics(&set, task.initial, task.high)?;
        let row = RoundMetrics::new(round, &set, m, calls, None);
        on_round(&row, &set)?;
        metrics.push(row);
        Ok(())
    };
    emit(0, &archive, 0, &mut metrics, on_round)?;
    for round in 1..=task.rounds {
        let outcome = optimizer.run_round(task.oracle, &mut budget)?;
        if outcome.stalled {
            log::warn!("{}: round {round} stalled after {} evaluations", optimizer.name(), outcome.evaluated.len());
            stalled_rounds.push(round);
        }
        outcome.evaluated.iter().for_each(|s| archive.insert(s));
        emit(round, &archive, budget.total_calls(), &mut metrics, on_round)?;
        budget.next_round();
    }
    Ok(BaselineRun {
        metrics,
        result: archive.sorted(),
        stalled_rounds,
        oracle_calls: budget.total_calls(),
    })
}

/// Per-round cap on proposal attempts before a round counts as stalled.
pub(crate) const ATTEMPTS_PER_CALL: usize = 50;
