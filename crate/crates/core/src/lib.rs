//! Latent-space reinforcement learning for fixed-length sequence fitness
//! optimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`sequence`]: alphabets, sequences, datasets and Hamming geometry.
//! * [`landscape`]: black-box oracles (NK landscapes, tabular CSV data, a
//!   trainable surrogate) and per-round call budgets.
//! * [`neuralnet`]: a small dense-network substrate with Adam.
//! * [`ved`]: the variant encoder-decoder and constrained decoding.
//! * [`buffer`]: the frontier buffer of best-found sequences.
//! * [`env`]: the latent-space episode mechanics and sparse rewards.
//! * [`ppo`]: policies, GAE, the clipped-surrogate learner and round drivers.
//! * [`baselines`]: CMA-ES, greedy, distance-prioritized and random search.
//! * [`eval`]: evaluation metrics and classical MDS.

pub mod baselines;
pub mod buffer;
pub mod env;
pub mod error;
pub mod eval;
pub mod landscape;
pub mod neuralnet;
pub mod ppo;
pub mod rng;
pub mod sequence;
pub mod ved;

pub use error::{Error, Result};
pub use sequence::{Dataset, ScoredSequence, Sequence, Vocabulary};
