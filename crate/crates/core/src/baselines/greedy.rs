use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{RoundOptimizer, RoundOutcome, ATTEMPTS_PER_CALL};
use crate::error::{Error, Result};
use crate::landscape::{oracle_query, FitnessModel, OracleBudget};
use crate::rng::{substream, Rng};
use crate::sequence::{random_mutate, ScoredSequence, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Parents are all evaluated sequences within `κ·|best|` of the best.
    pub kappa: f64,
    /// Expected mutations per child; `None` means one (rate 1/L).
    pub expected_mutations: Option<f64>,
    /// Probability that a child starts as a uniform crossover of two parents.
    pub recombination_rate: f64,
    /// Only the best parents within the threshold are used.
    pub max_parents: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            kappa: 0.05,
            expected_mutations: None,
            recombination_rate: 0.2,
            max_parents: 32,
        }
    }
}

/// Threshold-greedy mutate-and-select search.
pub struct GreedyEvolution {
    config: GreedyConfig,
    archive: Vec<ScoredSequence>,
    seen: HashSet<Sequence>,
    vocab_size: usize,
    rng: Rng,
}

impl GreedyEvolution {
    pub fn new(seeds: &[ScoredSequence], config: GreedyConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Empty("seed set"));
        }
        if !(config.kappa >= 0.0) || !(0.0..=1.0).contains(&config.recombination_rate) || config.max_parents == 0 {
            return Err(Error::invalid("greedy search needs kappa >= 0, a recombination rate in [0, 1] and max_parents >= 1"));
        }
        Ok(Self {
            config,
            archive: seeds.to_vec(),
            seen: seeds.iter().map(|s| s.sequence.clone()).collect(),
            vocab_size,
            rng: substream(seed, "greedy"),
        })
    }

    /// Current parents, best first.
    pub fn parents(&self) -> Vec<&ScoredSequence> {
        let best = self.archive.iter().map(|s| s.fitness).fold(f64::NEG_INFINITY, f64::max);
        let threshold = best - self.config.kappa * best.abs();
        let mut parents: Vec<&ScoredSequence> = self.archive.iter().filter(|s| s.fitness >= threshold).collect();
        parents.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        parents.truncate(self.config.max_parents);
        parents
    }
}

impl RoundOptimizer for GreedyEvolution {
    fn name(&self) -> &'static str {
        "greedy (AdaLead-style)"
    }

    fn run_round(&mut self, oracle: &dyn FitnessModel, budget: &mut OracleBudget) -> Result<RoundOutcome> {
        let want = budget.remaining();
        let parents: Vec<Sequence> = self.parents().into_iter().map(|p| p.sequence.clone()).collect();
        let expected = self.config.expected_mutations.unwrap_or(1.0);
        let mut children = Vec::with_capacity(want);
        let mut attempts = 0;
        while children.len() < want && attempts < ATTEMPTS_PER_CALL * want.max(1) {
            let mut parent = parents[attempts % parents.len()].clone();
            attempts += 1;
            if parents.len() > 1 && self.rng.random_bool(self.config.recombination_rate) {
                let other = &parents[self.rng.random_range(0..parents.len())];
                for pos in 0..parent.len() {
                    if self.rng.random_bool(0.5) {
                        parent.set(pos, other.get(pos));
                    }
                }
            }
            let child = random_mutate(&parent, expected, self.vocab_size, &mut self.rng)?;
            if self.seen.insert(child.clone()) {
                children.push(child);
            }
        }
        let stalled = children.len() < want;
        let values = oracle_query(oracle, &children, budget)?;
        let evaluated: Vec<ScoredSequence> =
            children.into_iter().zip(values).map(|(s, f)| ScoredSequence::new(s, f)).collect();
        self.archive.extend(evaluated.iter().cloned());
        Ok(RoundOutcome { evaluated, stalled })
    }
}
