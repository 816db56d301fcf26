//! Builds datasets, start sets and oracles from a [`TaskConfig`].

use latprot_core::eval::high_fitness_set;
use latprot_core::landscape::{
    load_csv_dataset, train_predictor, FitnessModel, NkDescriptor, NkLandscape, TabularOracle,
};
use latprot_core::rng::substream;
use latprot_core::sequence::{percentile_subset, random_mutate, select_reference};
use latprot_core::{Dataset, ScoredSequence, Sequence, Vocabulary};
use rand::Rng;

use crate::config::{OracleSpec, TaskConfig};
use crate::error::{invalid, CliError, CliResult};

/// Everything a run needs besides the optimizer itself.
pub struct Task {
    /// The full dataset `𝒟*`.
    pub full: Dataset,
    /// The rank band of `𝒟*` the run starts from.
    pub data: Dataset,
    /// Top `start_size` distinct sequences of `data`.
    pub start: Dataset,
    /// Top 10% of `full`.
    pub high: Vec<Sequence>,
    pub reference: Sequence,
    pub oracle: Box<dyn FitnessModel>,
    pub landscape: Option<NkDescriptor>,
}

impl Task {
    pub fn vocabulary(&self) -> &Vocabulary {
        self.full.vocabulary()
    }

    pub fn start_set(&self) -> &[ScoredSequence] {
        self.start.entries()
    }
}

/// Full dataset `𝒟*` of an NK task: variants of a random wild type.
pub fn nk_pool(nk: &NkLandscape, pool_size: usize, pool_mutations: f64, seed: u64) -> CliResult<Dataset> {
    let length = nk.length();
    let vocab = nk.vocabulary().size();
    let mut rng = substream(seed, "pool");
    let wild_type = Sequence::from_indices((0..length).map(|_| rng.random_range(0..vocab as u8)).collect());
    let entries = (0..pool_size)
        .map(|_| {
            let s = random_mutate(&wild_type, pool_mutations, vocab, &mut rng)?;
            let f = nk.fitness(&s)?;
            Ok(ScoredSequence::new(s, f))
        })
        .collect::<latprot_core::Result<Vec<_>>>()?;
    Ok(Dataset::new(entries, nk.vocabulary().clone())?)
}

pub fn build_task(config: &TaskConfig) -> CliResult<Task> {
    let (full, oracle, landscape): (Dataset, Box<dyn FitnessModel>, _) = match &config.oracle {
        OracleSpec::Nk {
            length,
            k,
            vocab_size,
            landscape_seed,
            pool_size,
            pool_mutations,
        } => {
            let descriptor = NkDescriptor::new(*length, *k, *vocab_size, *landscape_seed);
            let nk = invalid("nk oracle", NkLandscape::generate(&descriptor))?;
            let full = nk_pool(&nk, *pool_size, *pool_mutations, *landscape_seed)?;
            (full, Box::new(nk), Some(descriptor))
        }
        OracleSpec::Csv {
            path,
            alphabet,
            normalize,
            miss_policy,
        } => {
            let full = load_dataset(path, alphabet, *normalize)?;
            let oracle = invalid("csv oracle", TabularOracle::new(&full, *miss_policy))?;
            (full, Box::new(oracle), None)
        }
        OracleSpec::Predictor {
            path,
            alphabet,
            normalize,
            training,
        } => {
            let full = load_dataset(path, alphabet, *normalize)?;
            let model = train_predictor(&full, training)?;
            (full, Box::new(model), None)
        }
    };
    let (lo, hi) = config.task.bounds();
    let data = invalid("task band", percentile_subset(&full, lo, hi))?;
    let start_entries = data.top_distinct(config.start_size);
    if start_entries.len() < config.start_size {
        return Err(CliError::validation(format!(
            "task band holds {} distinct sequences, fewer than start_size {}",
            start_entries.len(),
            config.start_size
        )));
    }
    let start = Dataset::new(start_entries, full.vocabulary().clone())?;
    let high = high_fitness_set(&full);
    let reference = select_reference(&data)?;
    Ok(Task {
        full,
        data,
        start,
        high,
        reference,
        oracle,
        landscape,
    })
}

fn load_dataset(path: &std::path::Path, alphabet: &str, normalize: bool) -> CliResult<Dataset> {
    let vocab = invalid("alphabet", Vocabulary::new(alphabet))?;
    load_csv_dataset(path, &vocab, normalize)
        .map(|d| d.dataset)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}
