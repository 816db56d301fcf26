//! Command implementations shared by the binary and the tests.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use latprot_core::eval::{compute_metrics, dataset_stats, distance_matrix, mds_embed, DatasetStats, SetMetrics};
use latprot_core::landscape::write_csv_dataset;
use latprot_core::ved::VedReport;
use latprot_core::{ScoredSequence, Sequence, Vocabulary};
use serde::Serialize;

use crate::campaign::{self, io_error, write_json, Command, RunOutput};
use crate::config::{RunMeta, TaskConfig};
use crate::error::{CliError, CliResult};
use crate::task::build_task;

/// Overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Loads a config (or a `run_meta.json`), applies overrides and derives
/// sub-seeds.
pub fn prepare(config_path: &Path, overrides: &Overrides) -> CliResult<(TaskConfig, PathBuf)> {
    let mut config = TaskConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(workers) = overrides.workers {
        if workers == 0 {
            return Err(CliError::validation("--workers must be positive"));
        }
        config.workers = workers;
    }
    campaign::resolve_seeds(&mut config);
    let out = overrides
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::validation("no output directory: pass --out or set output_dir"))?;
    config.output_dir = Some(out.clone());
    Ok((config, out))
}

pub fn train_ved(config_path: &Path, overrides: &Overrides) -> CliResult<(PathBuf, VedReport)> {
    let (config, out) = prepare(config_path, overrides)?;
    let task = build_task(&config)?;
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let (ved, report) = campaign::train_task_ved(&config, &task)?;
    let path = out.join("ved.json");
    campaign::save_ved(&ved, &path)?;
    write_json(&out.join("ved_report.json"), &report)?;
    Ok((path, report))
}

/// Printable accuracy table of a VED report.
pub fn accuracy_table(report: &VedReport) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    format!(
        "positions     holdout accuracy\nmutated       {}\nnon-mutated   {}\n(train rows {}, holdout rows {})",
        fmt(report.mutated_accuracy),
        fmt(report.non_mutated_accuracy),
        report.train_rows,
        report.holdout_rows
    )
}

/// Runs `optimize` or `double-loop`. A `run_meta.json` config replays the
/// command it records.
pub fn optimize(config_path: &Path, overrides: &Overrides, command: Command) -> CliResult<RunOutput> {
    let command = match recorded_command(config_path)? {
        Some(recorded) => recorded,
        None => command,
    };
    let (config, out) = prepare(config_path, overrides)?;
    let task = build_task(&config)?;
    campaign::run(&config, &task, command, &out, None)
}

fn recorded_command(path: &Path) -> CliResult<Option<Command>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(v) => match v.get("command").and_then(|c| c.as_str()) {
            Some(name) if v.get("config").is_some() => Command::parse(name).map(Some),
            _ => Ok(None),
        },
        Err(_) => Ok(None),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub final_set: SetMetrics,
    pub full_dataset: DatasetStats,
    pub task_dataset: DatasetStats,
    pub mds_points: usize,
}

/// Re-derives the task of a finished run and writes `evaluation.json` and
/// `mds.csv` (one point per sequence of every buffer snapshot).
pub fn evaluate(run_dir: &Path, out: Option<&Path>) -> CliResult<EvaluationReport> {
    let meta_path = run_dir.join("run_meta.json");
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: RunMeta =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", meta_path.display())))?;
    meta.config.validate()?;
    let task = build_task(&meta.config)?;
    let vocab = task.vocabulary().clone();
    let final_set = read_scored(&run_dir.join("final_set.csv"), &vocab)?;
    let metrics = compute_metrics(&final_set, &task.data, Some(&task.high))?;

    let mut points: Vec<(usize, ScoredSequence)> = Vec::new();
    for (round, path) in buffer_snapshots(run_dir)? {
        points.extend(read_scored(&path, &vocab)?.into_iter().map(|s| (round, s)));
    }
    let seqs: Vec<Sequence> = points.iter().map(|(_, s)| s.sequence.clone()).collect();
    let coords = if seqs.is_empty() {
        Vec::new()
    } else {
        mds_embed(&distance_matrix(&seqs), 2)?
    };
    let out = out.unwrap_or(run_dir);
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mds_path = out.join("mds.csv");
    let mut w = csv::Writer::from_path(&mds_path).map_err(|e| CliError::runtime(format!("{}: {e}", mds_path.display())))?;
    let csv_err = |e: csv::Error| CliError::runtime(format!("{}: {e}", mds_path.display()));
    w.write_record(["id", "x", "y", "fitness", "round"]).map_err(csv_err)?;
    for (id, ((round, s), xy)) in points.iter().zip(&coords).enumerate() {
        w.write_record([
            id.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
            s.fitness.to_string(),
            round.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_error(&mds_path, e))?;
    let report = EvaluationReport {
        final_set: metrics,
        full_dataset: dataset_stats(&task.full)?,
        task_dataset: dataset_stats(&task.data)?,
        mds_points: points.len(),
    };
    write_json(&out.join("evaluation.json"), &report)?;
    Ok(report)
}

/// `buffer_round_<k>.csv` files of a run, ordered by round.
pub fn buffer_snapshots(run_dir: &Path) -> CliResult<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(run_dir).map_err(|e| io_error(run_dir, e))? {
        let path = entry.map_err(|e| io_error(run_dir, e))?.path();
        let round = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("buffer_round_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(round) = round {
            found.push((round, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Reads the `sequence` and `fitness` columns of a CSV.
pub fn read_scored(path: &Path, vocab: &Vocabulary) -> CliResult<Vec<ScoredSequence>> {
    let bad = |msg: String| CliError::validation(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let (si, fi) = (col("sequence")?, col("fitness")?);
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let seq = vocab.parse(&rec[si]).map_err(|e| bad(format!("row {}: {e}", row + 1)))?;
        let fitness = rec[fi]
            .parse::<f64>()
            .map_err(|_| bad(format!("row {}: bad fitness {:?}", row + 1, &rec[fi])))?;
        out.push(ScoredSequence::new(seq, fitness));
    }
    Ok(out)
}

/// Writes the full dataset, the task band and the landscape descriptor of an
/// NK task.
pub fn gen_landscape(config_path: &Path, overrides: &Overrides) -> CliResult<Vec<PathBuf>> {
    let (config, out) = prepare(config_path, overrides)?;
    let task = build_task(&config)?;
    let descriptor = task
        .landscape
        .as_ref()
        .ok_or_else(|| CliError::validation("gen-landscape needs an nk oracle"))?;
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let mut written = Vec::new();
    for (name, data) in [("dataset.csv", &task.full), ("task_dataset.csv", &task.data)] {
        let path = out.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        write_csv_dataset(BufWriter::new(file), data)?;
        written.push(path);
    }
    let path = out.join("landscape.json");
    write_json(&path, descriptor)?;
    written.push(path);
    let path = out.join("dataset_stats.json");
    write_json(&path, &dataset_stats(&task.full)?)?;
    written.push(path);
    Ok(written)
}
