//! Alphabets, sequences, datasets and Hamming-distance primitives.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The twenty canonical amino acids in one-letter code.
pub const PROTEIN_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWY";

/// Ordered set of distinct symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<char>,
    index: HashMap<char, u8>,
}

impl Vocabulary {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.len() < 2 {
            return Err(Error::invalid("vocabulary needs at least two symbols"));
        }
        if symbols.len() > usize::from(u8::MAX) + 1 {
            return Err(Error::invalid("vocabulary larger than 256 symbols"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i as u8).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn protein() -> Self {
        Self::new(PROTEIN_ALPHABET).expect("protein alphabet is valid")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, index: u8) -> char {
        self.symbols[usize::from(index)]
    }

    pub fn index_of(&self, symbol: char) -> Option<u8> {
        self.index.get(&symbol).copied()
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    /// Parses a plain character string into a sequence.
    pub fn parse(&self, text: &str) -> Result<Sequence> {
        text.chars()
            .enumerate()
            .map(|(pos, c)| {
                self.index_of(c).ok_or_else(|| {
                    Error::invalid(format!("symbol {c:?} at position {pos} not in vocabulary"))
                })
            })
            .collect::<Result<Vec<u8>>>()
            .map(Sequence::from_indices)
    }

    pub fn render(&self, seq: &Sequence) -> String {
        seq.as_slice().iter().map(|&i| self.symbol(i)).collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::protein()
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Vocabulary::new(&text).map_err(serde::de::Error::custom)
    }
}

/// Fixed-length word of symbol indices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sequence(Vec<u8>);

impl Sequence {
    pub fn from_indices(indices: Vec<u8>) -> Self {
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, pos: usize) -> u8 {
        self.0[pos]
    }

    pub fn set(&mut self, pos: usize, symbol: u8) {
        self.0[pos] = symbol;
    }

    /// Flattened `len × vocab_size` one-hot encoding.
    pub fn one_hot(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * vocab_size];
        for (pos, &s) in self.0.iter().enumerate() {
            out[pos * vocab_size + usize::from(s)] = 1.0;
        }
        out
    }

    pub fn check_alphabet(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().position(|&s| usize::from(s) >= vocab_size) {
            Some(pos) => Err(Error::invalid(format!(
                "symbol index {} at position {pos} outside vocabulary of size {vocab_size}",
                self.0[pos]
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sequence{:?}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub sequence: Sequence,
    pub fitness: f64,
}

impl ScoredSequence {
    pub fn new(sequence: Sequence, fitness: f64) -> Self {
        Self { sequence, fitness }
    }
}

/// Sequences of one common length paired with fitness values.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    entries: Vec<ScoredSequence>,
    vocabulary: Vocabulary,
}

impl Dataset {
    pub fn new(entries: Vec<ScoredSequence>, vocabulary: Vocabulary) -> Result<Self> {
        if let Some(first) = entries.first() {
            let len = first.sequence.len();
            for entry in &entries {
                if entry.sequence.len() != len {
                    return Err(Error::LengthMismatch {
                        expected: len,
                        actual: entry.sequence.len(),
                    });
                }
                entry.sequence.check_alphabet(vocabulary.size())?;
            }
        }
        Ok(Self {
            entries,
            vocabulary,
        })
    }

    pub fn entries(&self) -> &[ScoredSequence] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ScoredSequence> {
        self.entries
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Common sequence length, `None` when empty.
    pub fn seq_len(&self) -> Option<usize> {
        self.entries.first().map(|e| e.sequence.len())
    }

    pub fn sequences(&self) -> impl Iterator<Item = &Sequence> {
        self.entries.iter().map(|e| &e.sequence)
    }

    pub fn fitness_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.fitness).collect()
    }

    pub fn subset(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            entries: indices.into_iter().map(|i| self.entries[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Entry indices sorted by ascending fitness, ties by index.
    pub fn ascending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            self.entries[a]
                .fitness
                .total_cmp(&self.entries[b].fitness)
                .then(a.cmp(&b))
        });
        order
    }

    /// The `k` highest-fitness entries with distinct sequences, best first.
    pub fn top_distinct(&self, k: usize) -> Vec<ScoredSequence> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(k);
        for &i in self.ascending_order().iter().rev() {
            if out.len() == k {
                break;
            }
            let entry = &self.entries[i];
            if seen.insert(entry.sequence.clone()) {
                out.push(entry.clone());
            }
        }
        out
    }
}

pub fn hamming_distance(a: &Sequence, b: &Sequence) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(hamming_unchecked(a, b))
}

/// Hamming distance for sequences already known to share a length.
pub(crate) fn hamming_unchecked(a: &Sequence, b: &Sequence) -> usize {
    a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count()
}

/// The dataset sequence with minimum mean Hamming distance to all other
/// entries; ties go to the lowest index.
///
/// Uses per-position symbol counts: the summed distance from `x` to every
/// entry is `Σ_pos (N − count[pos][x_pos])`, so the scan is linear in `N`.
pub fn select_reference(data: &Dataset) -> Result<Sequence> {
    let len = data.seq_len().ok_or(Error::Empty("dataset"))?;
    let vocab = data.vocabulary().size();
    let n = data.len();
    let mut counts = vec![0usize; len * vocab];
    for seq in data.sequences() {
        for (pos, &s) in seq.as_slice().iter().enumerate() {
            counts[pos * vocab + usize::from(s)] += 1;
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (i, seq) in data.sequences().enumerate() {
        let total: usize = seq
            .as_slice()
            .iter()
            .enumerate()
            .map(|(pos, &s)| n - counts[pos * vocab + usize::from(s)])
            .sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((i, total));
        }
    }
    let (index, _) = best.expect("nonempty");
    Ok(data.entries()[index].sequence.clone())
}

/// Entries whose 0-based ascending fitness rank `r` satisfies
/// `lo <= 100·r/N < hi`. Entry order is preserved.
pub fn percentile_subset(data: &Dataset, lo: f64, hi: f64) -> Result<Dataset> {
    if !(0.0..100.0).contains(&lo) || hi <= lo || hi > 100.0 {
        return Err(Error::invalid(format!("percentile band [{lo}, {hi}) out of range")));
    }
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let n = data.len() as f64;
    let mut keep = vec![false; data.len()];
    for (rank, &i) in data.ascending_order().iter().enumerate() {
        let pct = 100.0 * rank as f64 / n;
        keep[i] = lo <= pct && pct < hi;
    }
    Ok(data.subset(keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)))
}

/// Independent per-position substitution with probability
/// `expected_mutations / L`; a mutated position takes a uniform symbol among
/// the other `V − 1`.
pub fn random_mutate<R: Rng + ?Sized>(
    seq: &Sequence,
    expected_mutations: f64,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Sequence> {
    let len = seq.len();
    if !(0.0..=len as f64).contains(&expected_mutations) {
        return Err(Error::invalid(format!(
            "expected mutations {expected_mutations} outside [0, {len}]"
        )));
    }
    if vocab_size < 2 {
        return Err(Error::invalid("vocabulary size must be at least 2"));
    }
    let rate = if len == 0 { 0.0 } else { expected_mutations / len as f64 };
    let mut out = seq.clone();
    for pos in 0..len {
        if rng.random::<f64>() < rate {
            out.set(pos, substitute(seq.get(pos), vocab_size, rng));
        }
    }
    Ok(out)
}

/// Uniform symbol different from `current`.
pub fn substitute<R: Rng + ?Sized>(current: u8, vocab_size: usize, rng: &mut R) -> u8 {
    let draw = rng.random_range(0..vocab_size as u8 - 1);
    if draw >= current {
        draw + 1
    } else {
        draw
    }
}

/// Mutates exactly `count` distinct positions to uniformly chosen different
/// symbols.
pub fn mutate_positions<R: Rng + ?Sized>(
    seq: &Sequence,
    count: usize,
    vocab_size: usize,
    rng: &mut R,
) -> Sequence {
    let count = count.min(seq.len());
    let mut out = seq.clone();
    for pos in rand::seq::index::sample(rng, seq.len(), count) {
        out.set(pos, substitute(seq.get(pos), vocab_size, rng));
    }
    out
}

/// Median of a slice; even counts average the central pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}
