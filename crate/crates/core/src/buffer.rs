//! Frontier buffer: a fixed-capacity archive of the best distinct sequences
//! found so far, sampled ε-greedily for episode start states.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng as StreamRng};
use crate::sequence::{Dataset, Sequence, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferConfig {
    pub capacity: usize,
    pub epsilon_init: f64,
    pub epsilon_floor: f64,
    pub epsilon_decay: f64,
    /// ε decays once every `update_period` calls to `top`.
    pub update_period: u64,
    /// Softmax temperature `c` applied to fitness in the exploit branch.
    pub temperature: f64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            capacity: 128,
            epsilon_init: 1.0,
            epsilon_floor: 0.05,
            epsilon_decay: 0.96,
            update_period: 50,
            temperature: 10.0,
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::invalid("buffer capacity must be positive"));
        }
        if !(0.0 < self.epsilon_floor && self.epsilon_floor <= self.epsilon_init && self.epsilon_init <= 1.0) {
            return Err(Error::invalid("need 0 < epsilon_floor <= epsilon_init <= 1"));
        }
        if !(0.0 < self.epsilon_decay && self.epsilon_decay <= 1.0) || self.update_period == 0 {
            return Err(Error::invalid("epsilon decay must lie in (0, 1] with a positive period"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub sequence: Sequence,
    pub fitness: f64,
    pub visits: u64,
}

/// Which rule chose an entry in [`FrontierBuffer::top`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Weight `1/√visits`.
    Explore,
    /// Weight `softmax(c · fitness)`.
    Exploit,
}

#[derive(Clone, Debug)]
pub struct FrontierBuffer {
    config: BufferConfig,
    entries: Vec<BufferEntry>,
    members: HashSet<Sequence>,
    decays: i32,
    calls: u64,
    rng: StreamRng,
}

impl FrontierBuffer {
    pub fn new(config: BufferConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            entries: Vec::new(),
            members: HashSet::new(),
            decays: 0,
            calls: 0,
            rng: rng::substream(seed, "buffer"),
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, seq: &Sequence) -> bool {
        self.members.contains(seq)
    }

    /// Number of `top` calls so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Current exploration probability, `max(floor, init · decay^k)` after
    /// `k` decay events.
    pub fn epsilon(&self) -> f64 {
        (self.config.epsilon_init * self.config.epsilon_decay.powi(self.decays)).max(self.config.epsilon_floor)
    }

    /// Fills the buffer with `capacity` distinct sequences drawn without
    /// replacement. Repeated sequences in `data` count once, at their highest
    /// fitness.
    pub fn initialize(&mut self, data: &Dataset) -> Result<()> {
        let mut best: HashMap<&Sequence, usize> = HashMap::new();
        let mut order = Vec::new();
        for (i, e) in data.entries().iter().enumerate() {
            match best.get_mut(&e.sequence) {
                Some(j) => {
                    if e.fitness > data.entries()[*j].fitness {
                        *j = i;
                    }
                }
                None => {
                    best.insert(&e.sequence, i);
                    order.push(&e.sequence);
                }
            }
        }
        let capacity = self.config.capacity;
        if order.len() < capacity {
            return Err(Error::invalid(format!(
                "buffer needs {capacity} distinct sequences, dataset has {}",
                order.len()
            )));
        }
        let mut picks = rand::seq::index::sample(&mut self.rng, order.len(), capacity).into_vec();
        picks.sort_unstable();
        self.entries = picks
            .into_iter()
            .map(|k| {
                let e = &data.entries()[best[order[k]]];
                BufferEntry {
                    sequence: e.sequence.clone(),
                    fitness: e.fitness,
                    visits: 1,
                }
            })
            .collect();
        self.members = self.entries.iter().map(|e| e.sequence.clone()).collect();
        Ok(())
    }

    /// Normalized sampling weights of one branch.
    pub fn weights(&self, branch: Branch) -> Vec<f64> {
        let raw: Vec<f64> = match branch {
            Branch::Explore => self.entries.iter().map(|e| 1.0 / (e.visits as f64).sqrt()).collect(),
            Branch::Exploit => {
                let c = self.config.temperature;
                let max = self.entries.iter().map(|e| c * e.fitness).fold(f64::NEG_INFINITY, f64::max);
                self.entries.iter().map(|e| (c * e.fitness - max).exp()).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Draws an entry index from one branch without touching counters.
    pub fn draw(&mut self, branch: Branch) -> Result<usize> {
        if self.entries.is_empty() {
            return Err(Error::Empty("frontier buffer"));
        }
        let weights = self.weights(branch);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return Ok(i);
            }
        }
        Ok(weights.len() - 1)
    }

    /// Samples an episode start sequence.
    pub fn top(&mut self) -> Result<Sequence> {
        if self.entries.is_empty() {
            return Err(Error::Empty("frontier buffer"));
        }
        self.calls += 1;
        if self.calls % self.config.update_period == 0 && self.epsilon() > self.config.epsilon_floor {
            self.decays += 1;
        }
        let branch = if self.rng.random::<f64>() < self.epsilon() {
            Branch::Explore
        } else {
            Branch::Exploit
        };
        let i = self.draw(branch)?;
        self.entries[i].visits += 1;
        Ok(self.entries[i].sequence.clone())
    }

    /// Offers a scored sequence. Present sequences are ignored; otherwise the
    /// lowest-fitness entry (first on ties) is replaced when strictly beaten.
    /// A buffer below capacity simply grows.
    pub fn update(&mut self, seq: &Sequence, fitness: f64) {
        if self.members.contains(seq) {
            return;
        }
        let entry = BufferEntry {
            sequence: seq.clone(),
            fitness,
            visits: 1,
        };
        if self.entries.len() < self.config.capacity {
            self.members.insert(seq.clone());
            self.entries.push(entry);
            return;
        }
        let mut min = 0;
        for (i, e) in self.entries.iter().enumerate() {
            if e.fitness < self.entries[min].fitness {
                min = i;
            }
        }
        if fitness > self.entries[min].fitness {
            self.members.remove(&self.entries[min].sequence);
            self.members.insert(seq.clone());
            self.entries[min] = entry;
        }
    }

    pub fn min_fitness(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.fitness).reduce(f64::min)
    }

    pub fn max_fitness(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.fitness).reduce(f64::max)
    }

    /// `sequence,fitness,visits` rows.
    pub fn write_snapshot<W: Write>(&self, writer: W, vocabulary: &Vocabulary) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sequence", "fitness", "visits"])?;
        for e in &self.entries {
            wtr.write_record([vocabulary.render(&e.sequence), e.fitness.to_string(), e.visits.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<buffer snapshot>", e))?;
        Ok(())
    }
}
