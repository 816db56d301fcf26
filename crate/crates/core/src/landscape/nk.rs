use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FitnessModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::sequence::{Sequence, Vocabulary, PROTEIN_ALPHABET};

/// Largest sequence space `nk_global_optimum` will enumerate.
const MAX_ENUMERATION: u128 = 10_000_000;
const MAX_TABLE_ENTRIES: u128 = 100_000_000;

/// Seeded description from which an NK landscape regenerates exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NkDescriptor {
    pub length: usize,
    pub k: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Symbols; defaults to the first `vocab_size` amino-acid letters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<String>,
}

impl NkDescriptor {
    pub fn new(length: usize, k: usize, vocab_size: usize, seed: u64) -> Self {
        Self {
            length,
            k,
            vocab_size,
            seed,
            alphabet: None,
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.alphabet {
            Some(a) => {
                let vocab = Vocabulary::new(a)?;
                if vocab.size() != self.vocab_size {
                    return Err(Error::invalid(format!(
                        "alphabet {a:?} has {} symbols, descriptor says {}",
                        vocab.size(),
                        self.vocab_size
                    )));
                }
                Ok(vocab)
            }
            None if self.vocab_size <= PROTEIN_ALPHABET.len() => {
                Vocabulary::new(&PROTEIN_ALPHABET[..self.vocab_size])
            }
            None => Err(Error::invalid("alphabet required for vocab_size > 20")),
        }
    }
}

/// Kauffman NK landscape: fitness is the mean over positions of a random
/// contribution that depends on the position's symbol and those of its `K`
/// neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct NkLandscape {
    vocabulary: Vocabulary,
    k: usize,
    neighbors: Vec<Vec<usize>>,
    tables: Vec<Vec<f64>>,
    descriptor: Option<NkDescriptor>,
}

impl NkLandscape {
    /// Random-neighbourhood landscape with iid Uniform(0,1) contributions.
    pub fn generate(descriptor: &NkDescriptor) -> Result<Self> {
        let vocabulary = descriptor.vocabulary()?;
        let (l, k, v) = (descriptor.length, descriptor.k, descriptor.vocab_size);
        if l == 0 {
            return Err(Error::invalid("NK length must be positive"));
        }
        if k >= l {
            return Err(Error::invalid(format!("NK requires K < L, got K={k}, L={l}")));
        }
        let per_table = (v as u128).pow(k as u32 + 1);
        if per_table * l as u128 > MAX_TABLE_ENTRIES {
            return Err(Error::TooLarge(format!("{l} tables of {per_table} entries")));
        }
        let mut rng = rng::substream(descriptor.seed, "landscape");
        let neighbors: Vec<Vec<usize>> = (0..l)
            .map(|pos| {
                rand::seq::index::sample(&mut rng, l - 1, k)
                    .into_iter()
                    .map(|j| if j >= pos { j + 1 } else { j })
                    .collect()
            })
            .collect();
        let tables = (0..l)
            .map(|_| (0..per_table).map(|_| rng.random::<f64>()).collect())
            .collect();
        Ok(Self {
            vocabulary,
            k,
            neighbors,
            tables,
            descriptor: Some(descriptor.clone()),
        })
    }

    /// Landscape with explicit neighbourhoods and contribution tables.
    pub fn from_tables(
        vocabulary: Vocabulary,
        neighbors: Vec<Vec<usize>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let l = neighbors.len();
        if l == 0 || tables.len() != l {
            return Err(Error::invalid("need one neighbour list and table per position"));
        }
        let k = neighbors[0].len();
        let v = vocabulary.size();
        let expected = v.pow(k as u32 + 1);
        for (pos, (nb, table)) in neighbors.iter().zip(&tables).enumerate() {
            let mut sorted = nb.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if nb.len() != k || sorted.len() != k || nb.iter().any(|&j| j == pos || j >= l) {
                return Err(Error::invalid(format!("bad neighbour list at position {pos}")));
            }
            if table.len() != expected || table.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::invalid(format!("bad contribution table at position {pos}")));
            }
        }
        Ok(Self {
            vocabulary,
            k,
            neighbors,
            tables,
            descriptor: None,
        })
    }

    pub fn length(&self) -> usize {
        self.neighbors.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn descriptor(&self) -> Option<&NkDescriptor> {
        self.descriptor.as_ref()
    }

    /// Contribution of position `pos` for sequence `seq`.
    pub fn contribution(&self, pos: usize, seq: &Sequence) -> f64 {
        let v = self.vocabulary.size();
        let mut index = usize::from(seq.get(pos));
        let mut scale = v;
        for &j in &self.neighbors[pos] {
            index += scale * usize::from(seq.get(j));
            scale *= v;
        }
        self.tables[pos][index]
    }

    pub fn fitness(&self, seq: &Sequence) -> Result<f64> {
        if seq.len() != self.length() {
            return Err(Error::LengthMismatch {
                expected: self.length(),
                actual: seq.len(),
            });
        }
        seq.check_alphabet(self.vocabulary.size())?;
        let total: f64 = (0..self.length()).map(|pos| self.contribution(pos, seq)).sum();
        Ok(total / self.length() as f64)
    }

    /// Exact maximiser by exhaustive enumeration (per-position argmax when
    /// `K = 0`); the lowest symbol indices win ties.
    pub fn global_optimum(&self) -> Result<(Sequence, f64)> {
        let (l, v) = (self.length(), self.vocabulary.size());
        if self.k == 0 {
            let best = Sequence::from_indices(
                self.tables
                    .iter()
                    .map(|t| (0..v).fold(0, |b, s| if t[s] > t[b] { s } else { b }) as u8)
                    .collect(),
            );
            let f = self.fitness(&best)?;
            return Ok((best, f));
        }
        let space = (v as u128).checked_pow(l as u32).unwrap_or(u128::MAX);
        if space > MAX_ENUMERATION {
            return Err(Error::TooLarge(format!("{v}^{l} sequences exceeds enumeration guard")));
        }
        let mut current = Sequence::from_indices(vec![0; l]);
        let mut best = (current.clone(), self.fitness(&current)?);
        loop {
            // Odometer increment, most significant position last.
            let mut pos = 0;
            loop {
                if pos == l {
                    return Ok(best);
                }
                let next = current.get(pos) + 1;
                if usize::from(next) < v {
                    current.set(pos, next);
                    break;
                }
                current.set(pos, 0);
                pos += 1;
            }
            let f = self.fitness(&current)?;
            if f > best.1 {
                best = (current.clone(), f);
            }
        }
    }
}

impl FitnessModel for NkLandscape {
    fn evaluate(&self, seq: &Sequence) -> Result<f64> {
        self.fitness(seq)
    }
}
