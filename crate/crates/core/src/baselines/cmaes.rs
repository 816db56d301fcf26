use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{RoundOptimizer, RoundOutcome};
use crate::error::{Error, Result};
use crate::landscape::{oracle_query, FitnessModel, OracleBudget};
use crate::rng::{substream, Rng};
use crate::sequence::{ScoredSequence, Sequence};
use crate::ved::LatentCodec;

const MAX_CONDITION: f64 = 1e14;

/// (μ/μ_w, λ) CMA-ES minimizer with rank-one and rank-μ covariance updates
/// and cumulative step-size adaptation.
#[derive(Clone, Debug)]
pub struct Cmaes {
    n: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c1: f64,
    c_mu: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    inv_sqrt: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    min_eigenvalue: f64,
    rng: Rng,
}

impl Cmaes {
    pub fn new(mean: Vec<f64>, sigma: f64, seed: u64) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Empty("CMA-ES mean"));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid("CMA-ES step size must be positive"));
        }
        let nf = n as f64;
        let lambda = 4 + (3.0 * nf.ln()).floor() as usize;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            n,
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu,
            chi_n,
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            inv_sqrt: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            min_eigenvalue: 1.0,
            rng: substream(seed, "cmaes"),
        })
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest covariance eigenvalue from the latest decomposition.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Samples one generation.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.n, |_, _| StandardNormal.sample(&mut self.rng));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + y * self.sigma).as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from a full generation; lower values are better.
    pub fn tell(&mut self, candidates: &[Vec<f64>], values: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || values.len() != self.lambda {
            return Err(Error::DimensionMismatch {
                context: "CMA-ES generation",
                expected: self.lambda,
                actual: candidates.len().min(values.len()),
            });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("CMA-ES objective value".into()));
        }
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let ys: Vec<DVector<f64>> = order[..self.weights.len()]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w += y * *w;
        }
        self.mean += &y_w * self.sigma;

        let cs = self.c_sigma;
        self.p_sigma = &self.p_sigma * (1.0 - cs) + (&self.inv_sqrt * &y_w) * (cs * (2.0 - cs) * self.mu_eff).sqrt();
        let gen = (self.generation + 1) as i32;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * gen)).sqrt()
            < (1.4 + 2.0 / (self.n as f64 + 1.0)) * self.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        let cc = self.c_c;
        self.p_c = &self.p_c * (1.0 - cc) + &y_w * (h * (cc * (2.0 - cc) * self.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += (y * y.transpose()) * *w;
        }
        let rank_one = &self.p_c * self.p_c.transpose() + &self.cov * ((1.0 - h) * cc * (2.0 - cc));
        self.cov = &self.cov * (1.0 - self.c1 - self.c_mu) + rank_one * self.c1 + rank_mu * self.c_mu;
        self.sigma *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.generation += 1;
        self.decompose()
    }

    fn decompose(&mut self) -> Result<()> {
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        let mut eig = SymmetricEigen::new(self.cov.clone());
        // Keep the condition number bounded so plateaus cannot collapse a
        // direction to (numerically) zero variance.
        let floor = eig.eigenvalues.max() * MAX_CONDITION.recip();
        if eig.eigenvalues.min() < floor {
            eig.eigenvalues.apply(|e| *e = e.max(floor));
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
            self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        }
        let min = eig.eigenvalues.min();
        self.min_eigenvalue = min;
        if !(min > 0.0) || !self.sigma.is_finite() {
            return Err(Error::NonFinite(format!(
                "CMA-ES covariance lost positive definiteness (min eigenvalue {min})"
            )));
        }
        self.scales = eig.eigenvalues.map(f64::sqrt);
        let inv = DMatrix::from_diagonal(&self.scales.map(|s| 1.0 / s));
        self.inv_sqrt = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
        self.basis = eig.eigenvectors;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaesSummary {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Smallest covariance eigenvalue after every generation.
    pub min_eigenvalues: Vec<f64>,
    /// Largest covariance asymmetry seen before symmetrization.
    pub max_asymmetry: f64,
}

/// Minimizes `f` with at most `max_evals` evaluations (whole generations).
pub fn cmaes_minimize(
    f: impl Fn(&[f64]) -> f64,
    x0: Vec<f64>,
    sigma: f64,
    max_evals: usize,
    seed: u64,
) -> Result<CmaesSummary> {
    let mut es = Cmaes::new(x0.clone(), sigma, seed)?;
    let mut summary = CmaesSummary {
        best_value: f(&x0),
        best: x0,
        evaluations: 1,
        min_eigenvalues: Vec::new(),
        max_asymmetry: 0.0,
    };
    while summary.evaluations + es.population_size() <= max_evals {
        let xs = es.ask();
        let values: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        summary.evaluations += xs.len();
        for (x, &v) in xs.iter().zip(&values) {
            if v < summary.best_value {
                summary.best_value = v;
                summary.best = x.clone();
            }
        }
        es.tell(&xs, &values)?;
        let c = es.covariance();
        summary.max_asymmetry = summary.max_asymmetry.max((c - c.transpose()).abs().max());
        summary.min_eigenvalues.push(es.min_eigenvalue());
    }
    Ok(summary)
}

/// Per-position argmax over consecutive blocks of `vocab_size` values;
/// ties go to the lower symbol.
pub fn one_hot_decode(x: &[f64], vocab_size: usize) -> Sequence {
    crate::ved::argmax_sequence(x, vocab_size)
}

/// Search space of a sequence-level CMA-ES run.
#[derive(Clone)]
pub enum Encoding {
    OneHot { vocab_size: usize, length: usize },
    /// Latent codes decoded against the codec's reference sequence.
    Latent {
        codec: Arc<dyn LatentCodec>,
        reference: Sequence,
        m_decode: usize,
    },
}

impl Encoding {
    fn encode(&self, seq: &Sequence) -> Result<Vec<f64>> {
        match self {
            Encoding::OneHot { vocab_size, .. } => Ok(seq.one_hot(*vocab_size)),
            Encoding::Latent { codec, .. } => Ok(codec.encode(seq)?.0),
        }
    }

    fn decode(&self, x: &[f64], reference: &Sequence) -> Result<Sequence> {
        match self {
            Encoding::OneHot { vocab_size, .. } => Ok(one_hot_decode(x, *vocab_size)),
            Encoding::Latent { codec, m_decode, .. } => codec.decode(x, reference, *m_decode),
        }
    }
}

/// CMA-ES over sequence encodings with fitness maximization. Decoded
/// sequences evaluated before are answered from a cache; a generation that
/// straddles a round boundary finishes in the next round.
pub struct CmaesSearch {
    encoding: Encoding,
    es: Cmaes,
    reference: Sequence,
    cache: HashMap<Sequence, f64>,
    pending: Vec<(Vec<f64>, Sequence)>,
    best_history: Vec<f64>,
}

const MAX_FREE_GENERATIONS: usize = 200;

impl CmaesSearch {
    /// Starts from the mean encoding of `seeds`.
    pub fn new(encoding: Encoding, seeds: &[Sequence], sigma: f64, seed: u64) -> Result<Self> {
        let first = seeds.first().ok_or(Error::Empty("seed set"))?;
        let encoded = seeds.iter().map(|s| encoding.encode(s)).collect::<Result<Vec<_>>>()?;
        let dim = encoded[0].len();
        let mean: Vec<f64> = (0..dim)
            .map(|j| encoded.iter().map(|e| e[j]).sum::<f64>() / encoded.len() as f64)
            .collect();
        let reference = match &encoding {
            Encoding::OneHot { length, .. } => {
                if first.len() != *length {
                    return Err(Error::LengthMismatch {
                        expected: *length,
                        actual: first.len(),
                    });
                }
                first.clone()
            }
            Encoding::Latent { reference, .. } => reference.clone(),
        };
        Ok(Self {
            es: Cmaes::new(mean, sigma, seed)?,
            encoding,
            reference,
            cache: HashMap::new(),
            pending: Vec::new(),
            best_history: Vec::new(),
        })
    }

    pub fn state(&self) -> &Cmaes {
        &self.es
    }

    /// Best fitness seen after each completed generation.
    pub fn best_history(&self) -> &[f64] {
        &self.best_history
    }
}

impl RoundOptimizer for CmaesSearch {
    fn name(&self) -> &'static str {
        match self.encoding {
            Encoding::OneHot { .. } => "cmaes-onehot",
            Encoding::Latent { .. } => "cmaes-ved",
        }
    }

    fn run_round(&mut self, oracle: &dyn FitnessModel, budget: &mut OracleBudget) -> Result<RoundOutcome> {
        let mut evaluated = Vec::new();
        let mut free_generations = 0;
        loop {
            if self.pending.is_empty() {
                if budget.remaining() == 0 {
                    break;
                }
                let xs = self.es.ask();
                self.pending = xs
                    .into_iter()
                    .map(|x| {
                        let seq = self.encoding.decode(&x, &self.reference)?;
                        Ok((x, seq))
                    })
                    .collect::<Result<_>>()?;
            }
            let mut missing: Vec<Sequence> = Vec::new();
            for (_, seq) in &self.pending {
                if !self.cache.contains_key(seq) && !missing.contains(seq) {
                    missing.push(seq.clone());
                }
            }
            let take = missing.len().min(budget.remaining());
            let batch = &missing[..take];
            let values = oracle_query(oracle, batch, budget)?;
            for (seq, f) in batch.iter().zip(values) {
                self.cache.insert(seq.clone(), f);
                evaluated.push(ScoredSequence::new(seq.clone(), f));
            }
            if take < missing.len() {
                break;
            }
            if take == 0 {
                free_generations += 1;
            }
            let xs: Vec<Vec<f64>> = self.pending.iter().map(|(x, _)| x.clone()).collect();
            let values: Vec<f64> = self.pending.iter().map(|(_, s)| -self.cache[s]).collect();
            self.pending.clear();
            self.es.tell(&xs, &values)?;
            let best = self.cache.values().copied().fold(f64::NEG_INFINITY, f64::max);
            self.best_history.push(best);
            if free_generations >= MAX_FREE_GENERATIONS {
                return Ok(RoundOutcome {
                    evaluated,
                    stalled: true,
                });
            }
        }
        Ok(RoundOutcome {
            evaluated,
            stalled: false,
        })
    }
}
