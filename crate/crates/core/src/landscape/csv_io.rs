use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{Dataset, ScoredSequence, Vocabulary};

/// A dataset plus the min-max base it was normalized with, if any.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub normalization: Option<NormalizationBase>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBase {
    pub min: f64,
    pub max: f64,
}

/// Reads a `sequence,fitness` CSV file.
///
/// With `normalize`, fitness is min-max scaled to `[0, 1]` over the rows of
/// this file; a zero range maps every row to 0.
pub fn load_csv_dataset(path: &Path, vocabulary: &Vocabulary, normalize: bool) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_dataset(file, vocabulary, normalize)
}

pub fn parse_csv_dataset<R: Read>(reader: R, vocabulary: &Vocabulary, normalize: bool) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse {
                row: 0,
                message: format!("missing column {name:?}"),
            })
    };
    let seq_col = column("sequence")?;
    let fit_col = column("fitness")?;
    let mut entries = Vec::new();
    let mut length = None;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |col: usize| {
            record.get(col).map(str::trim).ok_or_else(|| Error::Parse {
                row,
                message: "missing field".into(),
            })
        };
        let seq_text = field(seq_col)?;
        let sequence = vocabulary.parse(seq_text).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let expected = *length.get_or_insert(sequence.len());
        if sequence.len() != expected {
            return Err(Error::Parse {
                row,
                message: format!("sequence length {} differs from {expected}", sequence.len()),
            });
        }
        let fitness_text = field(fit_col)?;
        let fitness: f64 = fitness_text.parse().map_err(|_| Error::Parse {
            row,
            message: format!("fitness {fitness_text:?} is not a number"),
        })?;
        if !fitness.is_finite() {
            return Err(Error::Parse {
                row,
                message: "fitness is not finite".into(),
            });
        }
        entries.push(ScoredSequence::new(sequence, fitness));
    }
    let normalization = if normalize && !entries.is_empty() {
        let min = entries.iter().map(|e| e.fitness).fold(f64::INFINITY, f64::min);
        let max = entries.iter().map(|e| e.fitness).fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        for e in &mut entries {
            e.fitness = if range > 0.0 { (e.fitness - min) / range } else { 0.0 };
        }
        Some(NormalizationBase { min, max })
    } else {
        None
    };
    Ok(LoadedDataset {
        dataset: Dataset::new(entries, vocabulary.clone())?,
        normalization,
    })
}

/// Writes `sequence,fitness` rows; floats use the shortest representation
/// that parses back to the identical value.
pub fn write_csv_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["sequence", "fitness"])?;
    for e in data.entries() {
        wtr.write_record([data.vocabulary().render(&e.sequence), e.fitness.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
