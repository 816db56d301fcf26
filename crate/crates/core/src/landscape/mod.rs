//! Black-box fitness oracles and call-budget accounting.

mod budget;
mod csv_io;
mod nk;
mod predictor;
mod tabular;

pub use budget::{oracle_query, OracleBudget};
pub use csv_io::{load_csv_dataset, parse_csv_dataset, write_csv_dataset, LoadedDataset, NormalizationBase};
pub use nk::{NkDescriptor, NkLandscape};
pub use predictor::{
    spearman, train_predictor, PredictorCheckpoint, PredictorConfig, SurrogatePredictor, TrainingLog,
    MIN_PREDICTOR_DATA,
};
pub use tabular::{MissPolicy, TabularOracle};

use crate::error::Result;
use crate::sequence::Sequence;

/// Anything that maps a sequence to a fitness value.
pub trait FitnessModel: Send + Sync {
    fn evaluate(&self, seq: &Sequence) -> Result<f64>;

    fn evaluate_batch(&self, batch: &[Sequence]) -> Result<Vec<f64>> {
        batch.iter().map(|s| self.evaluate(s)).collect()
    }
}
