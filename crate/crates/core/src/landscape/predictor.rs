use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FitnessModel;
use crate::error::{Error, Result};
use crate::neuralnet::{mse, Activation, AdamConfig, AdamState, LayerSpec, Mlp, MlpCheckpoint};
use crate::rng;
use crate::sequence::{Dataset, Sequence};

pub const MIN_PREDICTOR_DATA: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_size: usize,
    pub holdout_size: usize,
    pub epoch_loss: Vec<f64>,
    /// `None` when undefined (constant labels or predictions, or no holdout).
    pub holdout_spearman: Option<f64>,
}

/// One-hot MLP regressor standing in for a learned fitness model.
#[derive(Clone, Debug)]
pub struct SurrogatePredictor {
    network: Mlp,
    length: usize,
    vocab_size: usize,
    target_mean: f64,
    target_scale: f64,
    pub log: TrainingLog,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictorCheckpoint {
    pub network: MlpCheckpoint,
    pub length: usize,
    pub vocab_size: usize,
    pub target_mean: f64,
    pub target_scale: f64,
    pub log: TrainingLog,
}

impl SurrogatePredictor {
    pub fn predict(&self, seq: &Sequence) -> Result<f64> {
        if seq.len() != self.length {
            return Err(Error::LengthMismatch {
                expected: self.length,
                actual: seq.len(),
            });
        }
        let out = self.network.predict(&seq.one_hot(self.vocab_size))?;
        Ok(out[0] * self.target_scale + self.target_mean)
    }

    pub fn to_checkpoint(&self) -> PredictorCheckpoint {
        PredictorCheckpoint {
            network: self.network.to_checkpoint(),
            length: self.length,
            vocab_size: self.vocab_size,
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            log: self.log.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &PredictorCheckpoint) -> Result<Self> {
        let network = Mlp::from_checkpoint(&ckpt.network)?;
        if network.input_dim() != ckpt.length * ckpt.vocab_size || network.output_dim() != 1 {
            return Err(Error::invalid("predictor checkpoint shape does not match metadata"));
        }
        Ok(Self {
            network,
            length: ckpt.length,
            vocab_size: ckpt.vocab_size,
            target_mean: ckpt.target_mean,
            target_scale: ckpt.target_scale,
            log: ckpt.log.clone(),
        })
    }
}

impl FitnessModel for SurrogatePredictor {
    fn evaluate(&self, seq: &Sequence) -> Result<f64> {
        self.predict(seq)
    }
}

/// Fits a two-hidden-layer ReLU network on one-hot inputs by mean squared
/// error, holding out a fraction of rows for a rank-correlation check.
pub fn train_predictor(data: &Dataset, config: &PredictorConfig) -> Result<SurrogatePredictor> {
    if data.len() < MIN_PREDICTOR_DATA {
        return Err(Error::invalid(format!(
            "predictor needs at least {MIN_PREDICTOR_DATA} rows, got {}",
            data.len()
        )));
    }
    let length = data.seq_len().expect("nonempty");
    let vocab_size = data.vocabulary().size();
    let mut rng = rng::substream(config.seed, "predictor");

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let holdout_n = ((data.len() as f64 * config.holdout_fraction).round() as usize).min(data.len() - 1);
    let (holdout, train) = order.split_at(holdout_n);

    let targets: Vec<f64> = train.iter().map(|&i| data.entries()[i].fitness).collect();
    let target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let var = targets.iter().map(|t| (t - target_mean).powi(2)).sum::<f64>() / targets.len() as f64;
    let target_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };

    let inputs: Vec<Vec<f64>> = data.sequences().map(|s| s.one_hot(vocab_size)).collect();
    let d = length * vocab_size;
    let mut network = Mlp::new(
        vec![
            LayerSpec::new(d, config.hidden, Activation::Relu),
            LayerSpec::new(config.hidden, config.hidden, Activation::Relu),
            LayerSpec::new(config.hidden, 1, Activation::Identity),
        ],
        &mut rng,
    )?;
    // Zero output layer: training starts from the target mean.
    let n = network.param_count();
    network.params_mut()[n - config.hidden - 1..].iter_mut().for_each(|w| *w = 0.0);
    let mut adam = AdamState::new(
        network.param_count(),
        AdamConfig {
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut log = TrainingLog {
        train_size: train.len(),
        holdout_size: holdout.len(),
        ..TrainingLog::default()
    };
    let mut train_order = train.to_vec();
    let mut grads = vec![0.0; network.param_count()];
    for _ in 0..config.epochs {
        train_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_order.chunks(config.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let y = (data.entries()[i].fitness - target_mean) / target_scale;
                let (out, cache) = network.forward(&inputs[i])?;
                let (loss, dl) = mse(out[0], y);
                epoch_loss += loss;
                network.backward_into(&cache, &[dl / batch.len() as f64], &mut grads)?;
            }
            adam.step(network.params_mut(), &grads)?;
        }
        let mean_loss = epoch_loss / train_order.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite("predictor training loss".into()));
        }
        log.epoch_loss.push(mean_loss);
    }

    let mut predictor = SurrogatePredictor {
        network,
        length,
        vocab_size,
        target_mean,
        target_scale,
        log: TrainingLog::default(),
    };
    if !holdout.is_empty() {
        let truth: Vec<f64> = holdout.iter().map(|&i| data.entries()[i].fitness).collect();
        let pred = holdout
            .iter()
            .map(|&i| predictor.predict(&data.entries()[i].sequence))
            .collect::<Result<Vec<_>>>()?;
        log.holdout_spearman = spearman(&truth, &pred);
        if log.holdout_spearman.is_none() {
            log::info!("holdout Spearman correlation undefined (constant labels or predictions)");
        }
    }
    predictor.log = log;
    Ok(predictor)
}

/// Fractional ranks, ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side has zero variance.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
