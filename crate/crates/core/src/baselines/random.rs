use rand::Rng as _;

use super::{RoundOptimizer, RoundOutcome};
use crate::error::Result;
use crate::landscape::{oracle_query, FitnessModel, OracleBudget};
use crate::rng::{substream, Rng};
use crate::sequence::{mutate_positions, ScoredSequence, Sequence};

/// Mutates uniformly chosen seeds at a uniform number of positions in
/// `1..=radius`; radius 0 re-evaluates the seeds themselves.
pub struct RandomSearch {
    seeds: Vec<Sequence>,
    radius: usize,
    vocab_size: usize,
    rng: Rng,
}

impl RandomSearch {
    pub fn new(seeds: Vec<Sequence>, radius: usize, vocab_size: usize, seed: u64) -> Self {
        Self {
            seeds,
            radius,
            vocab_size,
            rng: substream(seed, "random-search"),
        }
    }
}

impl RoundOptimizer for RandomSearch {
    fn name(&self) -> &'static str {
        "random"
    }

    fn run_round(&mut self, oracle: &dyn FitnessModel, budget: &mut OracleBudget) -> Result<RoundOutcome> {
        if self.seeds.is_empty() {
            return Ok(RoundOutcome {
                evaluated: Vec::new(),
                stalled: true,
            });
        }
        let batch: Vec<Sequence> = (0..budget.remaining())
            .map(|_| {
                let parent = &self.seeds[self.rng.random_range(0..self.seeds.len())];
                let k = if self.radius == 0 {
                    0
                } else {
                    self.rng.random_range(1..=self.radius)
                };
                mutate_positions(parent, k, self.vocab_size, &mut self.rng)
            })
            .collect();
        let values = oracle_query(oracle, &batch, budget)?;
        Ok(RoundOutcome {
            evaluated: batch.into_iter().zip(values).map(|(s, f)| ScoredSequence::new(s, f)).collect(),
            stalled: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{NkDescriptor, NkLandscape};

    #[test]
    fn radius_zero_only_reevaluates_seeds() {
        let nk = NkLandscape::generate(&NkDescriptor::new(8, 1, 4, 3)).unwrap();
        let seeds: Vec<Sequence> = (0..3).map(|v| Sequence::from_indices(vec![v; 8])).collect();
        let mut search = RandomSearch::new(seeds.clone(), 0, 4, 1);
        let mut budget = OracleBudget::new(10);
        let out = search.run_round(&nk, &mut budget).unwrap();
        assert_eq!(out.evaluated.len(), 10);
        assert!(out.evaluated.iter().all(|s| seeds.contains(&s.sequence)));
        assert_eq!(budget.remaining(), 0);
    }

    #[test]
    fn mutations_stay_within_radius() {
        let nk = NkLandscape::generate(&NkDescriptor::new(10, 1, 4, 3)).unwrap();
        let seed = Sequence::from_indices(vec![0; 10]);
        let mut search = RandomSearch::new(vec![seed.clone()], 3, 4, 2);
        let mut budget = OracleBudget::new(200);
        let out = search.run_round(&nk, &mut budget).unwrap();
        for s in &out.evaluated {
            let d = crate::sequence::hamming_distance(&s.sequence, &seed).unwrap();
            assert!((1..=3).contains(&d));
        }
    }
}
