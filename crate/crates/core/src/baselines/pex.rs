use std::collections::HashSet;

use rand::Rng as _;

use super::{RoundOptimizer, RoundOutcome, ATTEMPTS_PER_CALL};
use crate::error::{Error, Result};
use crate::landscape::{oracle_query, FitnessModel, OracleBudget};
use crate::rng::{substream, Rng};
use crate::sequence::{hamming_distance, hamming_unchecked, substitute, ScoredSequence, Sequence};

/// Indices of the points not dominated under (distance ascending, fitness
/// descending). Exact duplicates are all kept.
pub fn pareto_frontier(points: &[(usize, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut keep = Vec::new();
    let mut best_closer = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let d = points[order[i]].0;
        let group_best = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == d {
            if points[order[j]].1 == group_best && group_best > best_closer {
                keep.push(order[j]);
            }
            j += 1;
        }
        best_closer = best_closer.max(group_best);
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Evolutionary search that proposes single mutations of the Pareto
/// frontier of (mutations from the reference, fitness).
pub struct DistancePrioritized {
    reference: Sequence,
    archive: Vec<ScoredSequence>,
    seen: HashSet<Sequence>,
    vocab_size: usize,
    rng: Rng,
}

impl DistancePrioritized {
    pub fn new(reference: Sequence, seeds: &[ScoredSequence], vocab_size: usize, seed: u64) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Empty("seed set"));
        }
        for s in seeds {
            hamming_distance(&s.sequence, &reference)?;
        }
        Ok(Self {
            reference,
            archive: seeds.to_vec(),
            seen: seeds.iter().map(|s| s.sequence.clone()).collect(),
            vocab_size,
            rng: substream(seed, "pex"),
        })
    }

    pub fn frontier(&self) -> Vec<&ScoredSequence> {
        let points: Vec<(usize, f64)> = self
            .archive
            .iter()
            .map(|s| (hamming_unchecked(&s.sequence, &self.reference), s.fitness))
            .collect();
        pareto_frontier(&points).into_iter().map(|i| &self.archive[i]).collect()
    }
}

impl RoundOptimizer for DistancePrioritized {
    fn name(&self) -> &'static str {
        "distance-prioritized (PEX-style)"
    }

    fn run_round(&mut self, oracle: &dyn FitnessModel, budget: &mut OracleBudget) -> Result<RoundOutcome> {
        let want = budget.remaining();
        let frontier: Vec<Sequence> = self.frontier().into_iter().map(|s| s.sequence.clone()).collect();
        let length = self.reference.len();
        let mut children = Vec::with_capacity(want);
        let mut attempts = 0;
        while children.len() < want && attempts < ATTEMPTS_PER_CALL * want.max(1) && length > 0 {
            let parent = &frontier[attempts % frontier.len()];
            attempts += 1;
            let pos = self.rng.random_range(0..length);
            let mut child = parent.clone();
            child.set(pos, substitute(parent.get(pos), self.vocab_size, &mut self.rng));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn brute_force(points: &[(usize, f64)]) -> Vec<usize> {
        (0..points.len())
            .filter(|&p| {
                !points.iter().any(|q| {
                    q.0 <= points[p].0 && q.1 >= points[p].1 && (q.0 < points[p].0 || q.1 > points[p].1)
                })
            })
            .collect()
    }

    #[test]
    fn dominated_point_dropped() {
        assert_eq!(pareto_frontier(&[(1, 0.5), (2, 0.4)]), vec![0]);
        assert_eq!(pareto_frontier(&[(1, 0.5), (2, 0.6)]), vec![0, 1]);
    }

    #[test]
    fn reference_always_on_frontier() {
        let pts = [(3, 0.9), (0, 0.01), (1, 0.5)];
        assert!(pareto_frontier(&pts).contains(&1));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = substream(4, "pareto");
        for _ in 0..500 {
            let pts: Vec<(usize, f64)> = (0..50)
                .map(|_| (rng.random_range(0..8), (rng.random_range(0..20) as f64) / 20.0))
                .collect();
            assert_eq!(pareto_frontier(&pts), brute_force(&pts));
        }
    }

    #[test]
    fn children_are_single_mutants_of_the_frontier() {
        let nk = crate::landscape::NkLandscape::generate(&crate::landscape::NkDescriptor::new(8, 1, 4, 2)).unwrap();
        let reference = Sequence::from_indices(vec![0; 8]);
        let seeds = vec![ScoredSequence::new(reference.clone(), nk.fitness(&reference).unwrap())];
        let mut pex = DistancePrioritized::new(reference.clone(), &seeds, 4, 1).unwrap();
        let mut budget = OracleBudget::new(10);
        let out = pex.run_round(&nk, &mut budget).unwrap();
        assert_eq!(out.evaluated.len(), 10);
        for s in &out.evaluated {
            assert_eq!(hamming_unchecked(&s.sequence, &reference), 1);
        }
    }
}
