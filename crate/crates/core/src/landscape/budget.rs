use serde::{Deserialize, Serialize};

use super::FitnessModel;
use crate::error::{Error, Result};
use crate::sequence::Sequence;

/// Per-round oracle call ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    calls_per_round: usize,
    calls_used_this_round: usize,
    round_index: usize,
    total_calls: usize,
}

impl OracleBudget {
    pub fn new(calls_per_round: usize) -> Self {
        Self {
            calls_per_round,
            calls_used_this_round: 0,
            round_index: 0,
            total_calls: 0,
        }
    }

    pub fn calls_per_round(&self) -> usize {
        self.calls_per_round
    }

    pub fn used(&self) -> usize {
        self.calls_used_this_round
    }

    pub fn remaining(&self) -> usize {
        self.calls_per_round - self.calls_used_this_round
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn total_calls(&self) -> usize {
        self.total_calls
    }

    /// Closes the current round and opens a fresh one.
    pub fn next_round(&mut self) {
        self.round_index += 1;
        self.calls_used_this_round = 0;
    }

    fn charge(&mut self, n: usize) -> Result<()> {
        if self.calls_used_this_round + n > self.calls_per_round {
            return Err(Error::BudgetExceeded {
                round: self.round_index,
                used: self.calls_used_this_round,
                requested: n,
                limit: self.calls_per_round,
            });
        }
        self.calls_used_this_round += n;
        self.total_calls += n;
        debug_assert!(self.calls_used_this_round <= self.calls_per_round);
        Ok(())
    }
}

/// Evaluates `batch` against the oracle, charging one call per sequence.
///
/// The whole batch is rejected up front when it would overrun the round
/// limit; the ledger is only charged once evaluation succeeds.
pub fn oracle_query(
    oracle: &dyn FitnessModel,
    batch: &[Sequence],
    budget: &mut OracleBudget,
) -> Result<Vec<f64>> {
    if budget.used() + batch.len() > budget.calls_per_round() {
        return Err(Error::BudgetExceeded {
            round: budget.round_index(),
            used: budget.used(),
            requested: batch.len(),
            limit: budget.calls_per_round(),
        });
    }
    let values = oracle.evaluate_batch(batch)?;
    budget.charge(batch.len())?;
    Ok(values)
}
