//! Result-set metrics, classical multidimensional scaling and dataset
//! summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{hamming_unchecked, median, Dataset, ScoredSequence, Sequence};

/// Metric columns of one round, in CSV order.
pub const METRIC_COLUMNS: [&str; 9] = [
    "round",
    "fitness",
    "diversity",
    "d_init",
    "d_high",
    "oracle_calls",
    "epsilon",
    "buffer_min",
    "buffer_max",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub fitness: f64,
    pub diversity: f64,
    pub d_init: f64,
    pub d_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub fitness: f64,
    pub diversity: f64,
    pub d_init: f64,
    pub d_high: Option<f64>,
    /// Cumulative oracle calls charged by the end of the round.
    pub oracle_calls: usize,
    pub epsilon: Option<f64>,
    pub buffer_min: f64,
    pub buffer_max: f64,
}

impl RoundMetrics {
    pub fn new(round: usize, set: &[ScoredSequence], metrics: SetMetrics, oracle_calls: usize, epsilon: Option<f64>) -> Self {
        let fit = set.iter().map(|s| s.fitness);
        Self {
            round,
            fitness: metrics.fitness,
            diversity: metrics.diversity,
            d_init: metrics.d_init,
            d_high: metrics.d_high,
            oracle_calls,
            epsilon,
            buffer_min: fit.clone().fold(f64::INFINITY, f64::min),
            buffer_max: fit.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Values in [`METRIC_COLUMNS`] order; absent values are empty strings.
    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.round.to_string(),
            self.fitness.to_string(),
            self.diversity.to_string(),
            self.d_init.to_string(),
            opt(self.d_high),
            self.oracle_calls.to_string(),
            opt(self.epsilon),
            self.buffer_min.to_string(),
            self.buffer_max.to_string(),
        ]
    }
}

/// The top 10% of `data` by fitness (at least one sequence).
pub fn high_fitness_set(data: &Dataset) -> Vec<Sequence> {
    let order = data.ascending_order();
    let keep = (data.len() as f64 * 0.1).ceil().max(1.0) as usize;
    order[order.len().saturating_sub(keep)..]
        .iter()
        .map(|&i| data.entries()[i].sequence.clone())
        .collect()
}

fn median_min_distance(set: &[ScoredSequence], targets: &[Sequence]) -> f64 {
    let mins: Vec<f64> = set
        .iter()
        .map(|g| {
            targets
                .iter()
                .map(|x| hamming_unchecked(&g.sequence, x))
                .min()
                .expect("nonempty targets") as f64
        })
        .collect();
    median(&mins).expect("nonempty set")
}

/// Median fitness, median pairwise distance, and median nearest distance to
/// the initial data and to `high` (typically [`high_fitness_set`]).
pub fn compute_metrics(set: &[ScoredSequence], initial: &Dataset, high: Option<&[Sequence]>) -> Result<SetMetrics> {
    if set.is_empty() {
        return Err(Error::Empty("result set"));
    }
    if initial.is_empty() {
        return Err(Error::Empty("initial dataset"));
    }
    let length = set[0].sequence.len();
    let all_lengths = set
        .iter()
        .map(|s| &s.sequence)
        .chain(initial.sequences())
        .chain(high.unwrap_or(&[]).iter());
    for seq in all_lengths {
        if seq.len() != length {
            return Err(Error::LengthMismatch {
                expected: length,
                actual: seq.len(),
            });
        }
    }
    let fitness = median(&set.iter().map(|s| s.fitness).collect::<Vec<_>>()).expect("nonempty");
    let mut pairs = Vec::with_capacity(set.len() * set.len().saturating_sub(1) / 2);
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            pairs.push(hamming_unchecked(&set[i].sequence, &set[j].sequence) as f64);
        }
    }
    let diversity = median(&pairs).unwrap_or(0.0);
    let initial_seqs: Vec<Sequence> = initial.sequences().cloned().collect();
    let d_init = median_min_distance(set, &initial_seqs);
    let d_high = match high {
        Some([]) => return Err(Error::Empty("high-fitness set")),
        Some(h) => Some(median_min_distance(set, h)),
        None => None,
    };
    Ok(SetMetrics {
        fitness,
        diversity,
        d_init,
        d_high,
    })
}

/// Pairwise Hamming distance matrix.
pub fn distance_matrix(seqs: &[Sequence]) -> Vec<Vec<f64>> {
    seqs.iter()
        .map(|a| seqs.iter().map(|b| hamming_unchecked(a, b) as f64).collect())
        .collect()
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest-magnitude eigenpair by power iteration.
fn dominant_eigenpair(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = m.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    normalize(&mut v);
    for _ in 0..POWER_MAX_ITER {
        let mut w = mat_vec(m, &v);
        let rayleigh: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        if normalize(&mut w) == 0.0 {
            return (0.0, v);
        }
        // Align sign so a negative eigenvalue does not look like divergence.
        if rayleigh < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if change < POWER_TOL {
            break;
        }
    }
    let lambda = mat_vec(m, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
    (lambda, v)
}

/// Algebraically largest eigenpair: shifts the spectrum when the dominant
/// eigenvalue is negative.
fn top_eigenpair(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let (lambda, v) = dominant_eigenpair(m);
    if lambda >= 0.0 {
        return (lambda, v);
    }
    let shift = -lambda;
    let shifted: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, &x)| if i == j { x + shift } else { x }).collect())
        .collect();
    let (mu, v) = dominant_eigenpair(&shifted);
    (mu - shift, v)
}

/// Classical (Torgerson) multidimensional scaling into `dims` dimensions.
///
/// Each axis is oriented so its first coordinate with magnitude above 1e-9
/// is positive; axes with non-positive eigenvalues collapse to zero.
pub fn mds_embed(distances: &[Vec<f64>], dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = distances.len();
    for (i, row) in distances.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                context: "distance matrix row",
                expected: n,
                actual: row.len(),
            });
        }
        for (j, &d) in row.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::invalid(format!("distance ({i}, {j}) = {d} is not a nonnegative number")));
            }
            if (d - distances[j][i]).abs() > 1e-9 * (1.0 + d.abs()) {
                return Err(Error::invalid(format!("distance matrix is not symmetric at ({i}, {j})")));
            }
        }
        if row[i] != 0.0 {
            return Err(Error::invalid(format!("nonzero diagonal at {i}")));
        }
    }
    let sq: Vec<Vec<f64>> = distances.iter().map(|r| r.iter().map(|d| d * d).collect()).collect();
    let row_mean: Vec<f64> = sq.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n.max(1) as f64;
    let mut b: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + grand)).collect())
        .collect();
    let mut coords = vec![vec![0.0; dims]; n];
    for axis in 0..dims {
        if n == 0 {
            break;
        }
        let (lambda, mut v) = top_eigenpair(&b);
        if lambda <= 1e-12 {
            break;
        }
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let scale = lambda.sqrt();
        for i in 0..n {
            coords[i][axis] = v[i] * scale;
        }
        for i in 0..n {
            for j in 0..n {
                b[i][j] -= lambda * v[i] * v[j];
            }
        }
    }
    Ok(coords)
}

/// Fitness summary of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub median: f64,
    pub top_128_median: f64,
    /// `(p, value)` at p = 0, 10, …, 100 by nearest rank.
    pub percentiles: Vec<(u32, f64)>,
}

pub fn dataset_stats(data: &Dataset) -> Result<DatasetStats> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut values = data.fitness_values();
    values.sort_by(f64::total_cmp);
    let top: Vec<f64> = values[values.len().saturating_sub(128)..].to_vec();
    let last = values.len() - 1;
    let percentiles = (0..=10)
        .map(|k| {
            let p = k * 10;
            let rank = ((p as f64 / 100.0) * last as f64).round() as usize;
            (p, values[rank])
        })
        .collect();
    Ok(DatasetStats {
        count: values.len(),
        median: median(&values).expect("nonempty"),
        top_128_median: median(&top).expect("nonempty"),
        percentiles,
    })
}
