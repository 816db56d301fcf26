use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FitnessModel;
use crate::error::{Error, Result};
use crate::sequence::{hamming_unchecked, Dataset, Sequence};

/// What a tabular oracle does with a sequence it has no row for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    #[default]
    Strict,
    /// Mean fitness of the Hamming-nearest rows.
    NearestNeighbor,
}

/// Lookup-table oracle over measured sequences.
#[derive(Clone, Debug)]
pub struct TabularOracle {
    lookup: HashMap<Sequence, f64>,
    keys: Vec<(Sequence, f64)>,
    policy: MissPolicy,
    length: usize,
}

impl TabularOracle {
    /// Builds the table; repeated sequences keep the mean of their rows.
    pub fn new(data: &Dataset, policy: MissPolicy) -> Result<Self> {
        let length = data.seq_len().ok_or(Error::Empty("tabular oracle dataset"))?;
        let mut sums: HashMap<Sequence, (f64, usize)> = HashMap::new();
        let mut order = Vec::new();
        for e in data.entries() {
            let slot = sums.entry(e.sequence.clone()).or_insert_with(|| {
                order.push(e.sequence.clone());
                (0.0, 0)
            });
            slot.0 += e.fitness;
            slot.1 += 1;
        }
        let keys: Vec<(Sequence, f64)> = order
            .into_iter()
            .map(|s| {
                let (sum, n) = sums[&s];
                (s, sum / n as f64)
            })
            .collect();
        Ok(Self {
            lookup: keys.iter().cloned().collect(),
            keys,
            policy,
            length,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn nearest(&self, seq: &Sequence) -> f64 {
        let mut best = usize::MAX;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (key, f) in &self.keys {
            let d = hamming_unchecked(key, seq);
            if d < best {
                best = d;
                sum = 0.0;
                count = 0;
            }
            if d == best {
                sum += f;
                count += 1;
            }
        }
        sum / count as f64
    }
}

impl FitnessModel for TabularOracle {
    fn evaluate(&self, seq: &Sequence) -> Result<f64> {
        if seq.len() != self.length {
            return Err(Error::LengthMismatch {
                expected: self.length,
                actual: seq.len(),
            });
        }
        match (self.lookup.get(seq), self.policy) {
            (Some(&f), _) => Ok(f),
            (None, MissPolicy::Strict) => Err(Error::LookupMiss(format!("{seq:?}"))),
            (None, MissPolicy::NearestNeighbor) => Ok(self.nearest(seq)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{ScoredSequence, Vocabulary};

    fn data() -> Dataset {
        let v = Vocabulary::new("ACGT").unwrap();
        let rows = [("AAAA", 0.1), ("CCCC", 0.9), ("AAAC", 0.3), ("AAAA", 0.3)];
        Dataset::new(
            rows.iter().map(|(s, f)| ScoredSequence::new(v.parse(s).unwrap(), *f)).collect(),
            v,
        )
        .unwrap()
    }

    #[test]
    fn strict_hits_and_misses() {
        let oracle = TabularOracle::new(&data(), MissPolicy::Strict).unwrap();
        let v = Vocabulary::new("ACGT").unwrap();
        assert!((oracle.evaluate(&v.parse("AAAA").unwrap()).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(oracle.evaluate(&v.parse("GGGG").unwrap()), Err(Error::LookupMiss(_))));
        assert!(oracle.evaluate(&v.parse("GG").unwrap()).is_err());
    }

    #[test]
    fn nearest_neighbor_averages_ties() {
        let oracle = TabularOracle::new(&data(), MissPolicy::NearestNeighbor).unwrap();
        let v = Vocabulary::new("ACGT").unwrap();
        // AAAG: distance 1 to AAAA (0.2) and AAAC (0.3).
        let f = oracle.evaluate(&v.parse("AAAG").unwrap()).unwrap();
        assert!((f - 0.25).abs() < 1e-15);
    }
}
