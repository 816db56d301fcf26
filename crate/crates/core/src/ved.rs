//! Variant encoder-decoder.
//!
//! The encoder sees only how a sequence differs from a fixed reference: its
//! input is `one_hot(x) − one_hot(x_ref)`, pushed through bias-free layers
//! with zero-preserving activations and a final tanh, so the reference maps
//! exactly to the origin of the latent space. The decoder reads the latent
//! vector concatenated with the reference one-hot and emits `L × V` logits.
//! Constrained decoding then applies only the most confident disagreements
//! with a template sequence.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{
    softmax, softmax_cross_entropy, Activation, AdamConfig, AdamState, LayerSpec, Mlp, MlpCheckpoint,
};
use crate::rng;
use crate::sequence::{random_mutate, select_reference, Dataset, Sequence, Vocabulary};

pub const VED_FORMAT_VERSION: u32 = 1;

/// Encoder output: `R` components, each strictly inside `(−1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRep(pub Vec<f64>);

impl LatentRep {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Maps sequences into a latent space and back onto a template.
pub trait LatentCodec: Send + Sync {
    fn latent_dim(&self) -> usize;

    fn sequence_length(&self) -> usize;

    fn encode(&self, seq: &Sequence) -> Result<LatentRep>;

    fn decode(&self, z: &[f64], template: &Sequence, m_decode: usize) -> Result<Sequence>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VedTrainConfig {
    /// Latent dimension `R`; `None` picks 16 for `L ≤ 40`, else 32.
    pub latent_dim: Option<usize>,
    pub hidden: usize,
    pub augmentation_factor: usize,
    pub expected_mutations: f64,
    pub holdout_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for VedTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            hidden: 128,
            augmentation_factor: 4,
            expected_mutations: 3.0,
            holdout_fraction: 0.05,
            epochs: 32,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

impl VedTrainConfig {
    pub fn resolved_latent_dim(&self, length: usize) -> usize {
        self.latent_dim.unwrap_or(if length <= 40 { 16 } else { 32 })
    }
}

/// Holdout and training diagnostics from [`train_ved`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VedReport {
    pub train_rows: usize,
    pub holdout_rows: usize,
    /// Top-1 accuracy at holdout positions that differ from the reference.
    pub mutated_accuracy: Option<f64>,
    /// Top-1 accuracy at holdout positions equal to the reference.
    pub non_mutated_accuracy: Option<f64>,
    pub epoch_loss: Vec<f64>,
    /// Per-position reconstruction accuracy on the training rows after each epoch.
    pub epoch_train_accuracy: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VedModel {
    reference: Sequence,
    vocabulary: Vocabulary,
    latent_dim: usize,
    encoder: Mlp,
    decoder: Mlp,
    reference_one_hot: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VedCheckpoint {
    pub format_version: u32,
    pub vocabulary: String,
    pub reference: String,
    pub latent_dim: usize,
    pub encoder: MlpCheckpoint,
    pub decoder: MlpCheckpoint,
}

impl VedModel {
    /// Untrained model around `reference`.
    pub fn new(reference: Sequence, vocabulary: Vocabulary, latent_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 || hidden == 0 {
            return Err(Error::invalid("latent and hidden widths must be positive"));
        }
        if reference.is_empty() {
            return Err(Error::Empty("reference sequence"));
        }
        reference.check_alphabet(vocabulary.size())?;
        let features = reference.len() * vocabulary.size();
        let mut rng = rng::substream(seed, "ved-init");
        let encoder = Mlp::new(
            vec![
                LayerSpec::new(features, hidden, Activation::Tanh).without_bias(),
                LayerSpec::new(hidden, latent_dim, Activation::Tanh).without_bias(),
            ],
            &mut rng,
        )?;
        let decoder = Mlp::new(
            vec![
                LayerSpec::new(latent_dim + features, hidden, Activation::Relu),
                LayerSpec::new(hidden, features, Activation::Identity),
            ],
            &mut rng,
        )?;
        Ok(Self::assemble(reference, vocabulary, latent_dim, encoder, decoder))
    }

    fn assemble(reference: Sequence, vocabulary: Vocabulary, latent_dim: usize, encoder: Mlp, decoder: Mlp) -> Self {
        let reference_one_hot = reference.one_hot(vocabulary.size());
        Self {
            reference,
            vocabulary,
            latent_dim,
            encoder,
            decoder,
            reference_one_hot,
        }
    }

    pub fn reference(&self) -> &Sequence {
        &self.reference
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn check_length(&self, seq: &Sequence) -> Result<()> {
        if seq.len() != self.reference.len() {
            return Err(Error::LengthMismatch {
                expected: self.reference.len(),
                actual: seq.len(),
            });
        }
        seq.check_alphabet(self.vocabulary.size())
    }

    fn features(&self, seq: &Sequence) -> Vec<f64> {
        let mut f = seq.one_hot(self.vocabulary.size());
        for (a, b) in f.iter_mut().zip(&self.reference_one_hot) {
            *a -= b;
        }
        f
    }

    fn decoder_input(&self, z: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(z.len() + self.reference_one_hot.len());
        input.extend_from_slice(z);
        input.extend_from_slice(&self.reference_one_hot);
        input
    }

    /// Flattened `L × V` logits for latent `z`.
    pub fn decode_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                context: "latent vector",
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        self.decoder.predict(&self.decoder_input(z))
    }

    /// Unconstrained per-position argmax reconstruction.
    pub fn reconstruct(&self, seq: &Sequence) -> Result<Sequence> {
        let z = self.encode(seq)?;
        let logits = self.decode_logits(z.as_slice())?;
        Ok(argmax_sequence(&logits, self.vocabulary.size()))
    }

    pub fn constrained_decode(&self, z: &[f64], template: &Sequence, m_decode: usize) -> Result<Sequence> {
        self.check_length(template)?;
        let logits = self.decode_logits(z)?;
        constrained_decode_logits(&logits, self.vocabulary.size(), template, m_decode)
    }

    pub fn to_checkpoint(&self) -> VedCheckpoint {
        VedCheckpoint {
            format_version: VED_FORMAT_VERSION,
            vocabulary: self.vocabulary.as_string(),
            reference: self.vocabulary.render(&self.reference),
            latent_dim: self.latent_dim,
            encoder: self.encoder.to_checkpoint(),
            decoder: self.decoder.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &VedCheckpoint) -> Result<Self> {
        if ckpt.format_version != VED_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported VED format version {}", ckpt.format_version)));
        }
        let vocabulary = Vocabulary::new(&ckpt.vocabulary)?;
        let reference = vocabulary.parse(&ckpt.reference)?;
        let encoder = Mlp::from_checkpoint(&ckpt.encoder)?;
        let decoder = Mlp::from_checkpoint(&ckpt.decoder)?;
        let features = reference.len() * vocabulary.size();
        if encoder.input_dim() != features
            || encoder.output_dim() != ckpt.latent_dim
            || decoder.input_dim() != ckpt.latent_dim + features
            || decoder.output_dim() != features
        {
            return Err(Error::invalid("VED checkpoint shapes do not match reference and vocabulary"));
        }
        Ok(Self::assemble(reference, vocabulary, ckpt.latent_dim, encoder, decoder))
    }

    /// Fraction of positions reconstructed exactly, split by whether the
    /// position differs from the reference: `(mutated, non_mutated)`.
    pub fn position_accuracy<'a>(
        &self,
        seqs: impl IntoIterator<Item = &'a Sequence>,
    ) -> Result<(Option<f64>, Option<f64>)> {
        let mut hits = [0usize; 2];
        let mut totals = [0usize; 2];
        for seq in seqs {
            let rec = self.reconstruct(seq)?;
            for pos in 0..seq.len() {
                let bucket = usize::from(seq.get(pos) == self.reference.get(pos));
                totals[bucket] += 1;
                hits[bucket] += usize::from(rec.get(pos) == seq.get(pos));
            }
        }
        let frac = |b: usize| (totals[b] > 0).then(|| hits[b] as f64 / totals[b] as f64);
        Ok((frac(0), frac(1)))
    }

    fn overall_accuracy(&self, seqs: &[Sequence]) -> Result<f64> {
        let mut hits = 0usize;
        let mut total = 0usize;
        for seq in seqs {
            let rec = self.reconstruct(seq)?;
            hits += seq.as_slice().iter().zip(rec.as_slice()).filter(|(a, b)| a == b).count();
            total += seq.len();
        }
        Ok(hits as f64 / total.max(1) as f64)
    }

    /// One gradient accumulation for the reconstruction cross-entropy of
    /// `seq`; returns the mean per-position loss.
    fn accumulate(&self, seq: &Sequence, scale: f64, enc_grads: &mut [f64], dec_grads: &mut [f64]) -> Result<f64> {
        let v = self.vocabulary.size();
        let (z, enc_cache) = self.encoder.forward(&self.features(seq))?;
        let (logits, dec_cache) = self.decoder.forward(&self.decoder_input(&z))?;
        let len = seq.len() as f64;
        let mut loss = 0.0;
        let mut out_grad = vec![0.0; logits.len()];
        for pos in 0..seq.len() {
            let block = pos * v..(pos + 1) * v;
            let (l, g) = softmax_cross_entropy(&logits[block.clone()], usize::from(seq.get(pos)));
            loss += l / len;
            for (o, gi) in out_grad[block].iter_mut().zip(g) {
                *o = gi * scale / len;
            }
        }
        let input_grad = self.decoder.backward_into(&dec_cache, &out_grad, dec_grads)?;
        self.encoder
            .backward_into(&enc_cache, &input_grad[..self.latent_dim], enc_grads)?;
        Ok(loss)
    }
}

impl LatentCodec for VedModel {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn sequence_length(&self) -> usize {
        self.reference.len()
    }

    fn encode(&self, seq: &Sequence) -> Result<LatentRep> {
        self.check_length(seq)?;
        self.encoder.predict(&self.features(seq)).map(LatentRep)
    }

    fn decode(&self, z: &[f64], template: &Sequence, m_decode: usize) -> Result<Sequence> {
        self.constrained_decode(z, template, m_decode)
    }
}

fn argmax(block: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in block.iter().enumerate() {
        if x > block[best] {
            best = i;
        }
    }
    best
}

/// Per-position argmax; ties go to the lowest symbol index.
pub fn argmax_sequence(logits: &[f64], vocab_size: usize) -> Sequence {
    Sequence::from_indices(logits.chunks(vocab_size).map(|b| argmax(b) as u8).collect())
}

/// Applies to `template` the `m_decode` most probable positions where the
/// per-position argmax disagrees with it.
///
/// Candidates are ranked by the softmax probability of their argmax symbol,
/// descending, with ties broken by ascending position.
pub fn constrained_decode_logits(
    logits: &[f64],
    vocab_size: usize,
    template: &Sequence,
    m_decode: usize,
) -> Result<Sequence> {
    if logits.len() != template.len() * vocab_size {
        return Err(Error::DimensionMismatch {
            context: "decoder logits",
            expected: template.len() * vocab_size,
            actual: logits.len(),
        });
    }
    let mut candidates: Vec<(usize, u8, f64)> = logits
        .chunks(vocab_size)
        .enumerate()
        .filter_map(|(pos, block)| {
            let best = argmax(block);
            (best as u8 != template.get(pos)).then(|| (pos, best as u8, softmax(block)[best]))
        })
        .collect();
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut out = template.clone();
    for &(pos, symbol, _) in candidates.iter().take(m_decode) {
        out.set(pos, symbol);
    }
    Ok(out)
}

/// Trains a VED on `data`: picks the reference, holds out a fraction of rows,
/// augments the remainder with random mutants, then minimizes per-position
/// reconstruction cross-entropy with Adam.
pub fn train_ved(data: &Dataset, config: &VedTrainConfig) -> Result<(VedModel, VedReport)> {
    let length = data.seq_len().ok_or(Error::Empty("VED training data"))?;
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
    }
    let vocab = data.vocabulary().clone();
    let reference = select_reference(data)?;
    let latent_dim = config.resolved_latent_dim(length);
    let mut model = VedModel::new(reference, vocab.clone(), latent_dim, config.hidden, config.seed)?;
    let mut rng = rng::substream(config.seed, "ved-train");

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let holdout_n = ((data.len() as f64 * config.holdout_fraction).round() as usize).min(data.len() - 1);
    let holdout: Vec<Sequence> = order[..holdout_n]
        .iter()
        .map(|&i| data.entries()[i].sequence.clone())
        .collect();
    let originals: Vec<Sequence> = order[holdout_n..]
        .iter()
        .map(|&i| data.entries()[i].sequence.clone())
        .collect();
    let mut train = originals.clone();
    for seq in &originals {
        for _ in 0..config.augmentation_factor {
            train.push(random_mutate(seq, config.expected_mutations.min(length as f64), vocab.size(), &mut rng)?);
        }
    }

    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    };
    let mut enc_adam = AdamState::new(model.encoder.param_count(), adam_config);
    let mut dec_adam = AdamState::new(model.decoder.param_count(), adam_config);
    let mut enc_grads = vec![0.0; model.encoder.param_count()];
    let mut dec_grads = vec![0.0; model.decoder.param_count()];
    let mut report = VedReport {
        train_rows: train.len(),
        holdout_rows: holdout.len(),
        ..VedReport::default()
    };
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in idx.chunks(config.batch_size.max(1)) {
            enc_grads.iter_mut().for_each(|g| *g = 0.0);
            dec_grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += model.accumulate(&train[i], scale, &mut enc_grads, &mut dec_grads)?;
            }
            enc_adam.step(model.encoder.params_mut(), &enc_grads)?;
            dec_adam.step(model.decoder.params_mut(), &dec_grads)?;
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("VED training loss".into()));
        }
        report.epoch_loss.push(mean);
        report.epoch_train_accuracy.push(model.overall_accuracy(&train)?);
    }
    let (mutated, non_mutated) = model.position_accuracy(&holdout)?;
    report.mutated_accuracy = mutated;
    report.non_mutated_accuracy = non_mutated;
    Ok((model, report))
}
