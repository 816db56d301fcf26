//! Runs an optimization method end to end and writes the run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use latprot_core::baselines::{
    run_baseline, BaselineTask, CmaesSearch, DistancePrioritized, Encoding, GreedyEvolution, RandomSearch,
    RoundOptimizer,
};
use latprot_core::eval::{RoundMetrics, METRIC_COLUMNS};
use latprot_core::landscape::train_predictor;
use latprot_core::ppo::{
    double_loop_schedule, run_active_learning, run_double_loop, run_predictor_guided, CampaignResult, Evaluation,
    LatProtConfig, LatProtRunner, RoundSnapshot,
};
use latprot_core::rng::derive_seed;
use latprot_core::ved::{train_ved, LatentCodec, VedCheckpoint, VedModel, VedReport};
use latprot_core::{Error, ScoredSequence, Sequence, Vocabulary};

use crate::config::{Method, RunMeta, TaskConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::task::Task;

/// Which driver a LatProtRL run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Optimize,
    DoubleLoop,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::DoubleLoop => "double-loop",
        }
    }

    pub fn parse(name: &str) -> CliResult<Self> {
        match name {
            "optimize" => Ok(Command::Optimize),
            "double-loop" => Ok(Command::DoubleLoop),
            other => Err(CliError::validation(format!("run_meta command {other:?} cannot be replayed"))),
        }
    }
}

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub metrics: Vec<RoundMetrics>,
    pub final_metrics: Option<RoundMetrics>,
    pub final_set: Vec<ScoredSequence>,
    pub meta: RunMeta,
}

/// Replaces every sub-seed with one derived from the root seed.
pub fn resolve_seeds(config: &mut TaskConfig) {
    let root = config.seed;
    config.ved.seed = derive_seed(root, "ved");
    config.double_loop.predictor.seed = derive_seed(root, "double_loop_predictor");
    config.predictor_mode.predictor.seed = derive_seed(root, "predictor_mode");
}

pub fn method_of(config: &TaskConfig) -> Method {
    config.method.unwrap_or(Method::LatProtRl)
}

/// Whether the configured run decodes through a VED.
pub fn needs_ved(config: &TaskConfig) -> bool {
    match method_of(config) {
        Method::LatProtRl => config.ablation.mode.uses_codec(),
        Method::CmaesVed => true,
        _ => false,
    }
}

pub fn save_ved(ved: &VedModel, path: &Path) -> CliResult<()> {
    write_json(path, &ved.to_checkpoint())
}

pub fn load_ved(path: &Path) -> CliResult<VedModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read VED checkpoint {}: {e}", path.display())))?;
    let ckpt: VedCheckpoint = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    VedModel::from_checkpoint(&ckpt).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Trains a VED on the task data with the configured recipe.
pub fn train_task_ved(config: &TaskConfig, task: &Task) -> CliResult<(VedModel, VedReport)> {
    let (ved, report) = train_ved(&task.data, &config.ved)?;
    if ved.vocabulary() != task.vocabulary() {
        return Err(CliError::runtime("VED vocabulary differs from the task vocabulary"));
    }
    Ok((ved, report))
}

/// Loads the configured checkpoint, or trains a VED and stores it in `dir`.
pub fn obtain_ved(config: &TaskConfig, task: &Task, dir: &Path) -> CliResult<Arc<VedModel>> {
    let ved = match &config.ved_checkpoint {
        Some(path) => load_ved(path)?,
        None => {
            let (ved, report) = train_task_ved(config, task)?;
            save_ved(&ved, &dir.join("ved.json"))?;
            write_json(&dir.join("ved_report.json"), &report)?;
            ved
        }
    };
    if ved.vocabulary() != task.vocabulary() || ved.sequence_length() != task.reference.len() {
        return Err(CliError::validation("VED checkpoint does not match the task alphabet or length"));
    }
    Ok(Arc::new(ved))
}

/// Runs the configured method, writing outputs under `dir`.
///
/// `ved` overrides the configured checkpoint (used to share one trained VED
/// across runs).
pub fn run(
    config: &TaskConfig,
    task: &Task,
    command: Command,
    dir: &Path,
    ved: Option<Arc<VedModel>>,
) -> CliResult<RunOutput> {
    let method = method_of(config);
    if command == Command::DoubleLoop && method != Method::LatProtRl {
        return Err(CliError::validation("double-loop requires method latprotrl"));
    }
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let ved = match (needs_ved(config), ved) {
        (false, _) => None,
        (true, Some(v)) => Some(v),
        (true, None) => Some(obtain_ved(config, task, dir)?),
    };
    let mut writer = RunWriter::create(dir, task.vocabulary().clone(), config)?;
    let mut meta = RunMeta {
        schema_version: SCHEMA_VERSION,
        command: command.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        oracle_calls: 0,
        evaluation_calls: 0,
        rounds_completed: 0,
        stalled_rounds: Vec::new(),
        starved_rounds: Vec::new(),
        clamp_events: 0,
    };
    write_json(&dir.join("run_meta.json"), &meta)?;
    let (metrics, final_metrics, final_set) = match method {
        Method::LatProtRl => {
            let result = run_latprot(config, task, command, ved.as_deref(), &mut writer)?;
            meta.oracle_calls = result.oracle_calls;
            meta.evaluation_calls = result.evaluation_calls;
            meta.starved_rounds = result.reports.iter().filter(|r| r.starved).map(|r| r.round).collect();
            meta.clamp_events = result.reports.iter().map(|r| r.clamp_events).sum();
            (result.metrics, result.final_metrics, result.final_set)
        }
        _ => {
            let mut optimizer = build_baseline(method, config, task, ved)?;
            let baseline_task = BaselineTask {
                oracle: task.oracle.as_ref(),
                rounds: config.ppo.rounds,
                calls_per_round: config.ppo.oracle_calls,
                top_k: config.start_size,
                seeds: task.start_set(),
                initial: &task.data,
                high: Some(&task.high),
            };
            let vocab = task.vocabulary().clone();
            let run = run_baseline(optimizer.as_mut(), &baseline_task, &mut |m, set| {
                writer.round(m, |w| write_scored(w, set, &vocab))
            })?;
            meta.oracle_calls = run.oracle_calls;
            meta.stalled_rounds = run.stalled_rounds;
            (run.metrics, None, run.result)
        }
    };
    writer.finish()?;
    meta.rounds_completed = metrics.len().saturating_sub(1);
    let final_file = File::create(dir.join("final_set.csv")).map_err(|e| io_error(dir, e))?;
    write_scored(BufWriter::new(final_file), &final_set, task.vocabulary())?;
    if let Some(m) = &final_metrics {
        write_metrics_file(&dir.join("final_metrics.csv"), std::slice::from_ref(m))?;
    }
    write_json(&dir.join("run_meta.json"), &meta)?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        metrics,
        final_metrics,
        final_set,
        meta,
    })
}

fn run_latprot(
    config: &TaskConfig,
    task: &Task,
    command: Command,
    ved: Option<&VedModel>,
    writer: &mut RunWriter,
) -> CliResult<CampaignResult> {
    let lp_config = LatProtConfig {
        env: config.env.clone(),
        ppo: config.ppo.clone(),
        buffer: config.buffer_config(),
        ablation: config.ablation.clone(),
        episode_cap_factor: 10,
        workers: config.workers,
        seed: config.seed,
    };
    let codec = ved.map(|v| v as &dyn LatentCodec);
    let mut runner = LatProtRunner::new(lp_config, codec, &task.start)?;
    let eval = Evaluation {
        initial: &task.data,
        high: Some(&task.high),
    };
    let mut observer = |snap: &RoundSnapshot<'_>| writer.snapshot(snap);
    let result = match command {
        Command::Optimize if config.predictor_mode.enabled => {
            let settings = &config.predictor_mode;
            let predictor = train_predictor(&task.data, &settings.predictor)?;
            run_predictor_guided(
                &mut runner,
                &predictor,
                task.oracle.as_ref(),
                settings.total_timesteps,
                settings.rollout_steps,
                &eval,
                &mut observer,
            )?
        }
        Command::Optimize => run_active_learning(&mut runner, task.oracle.as_ref(), &eval, &mut observer)?,
        Command::DoubleLoop => {
            let dl = &config.double_loop;
            let schedule = double_loop_schedule(dl.outer_rounds, dl.predictor_rounds, dl.final_predictor_rounds);
            run_double_loop(
                &mut runner,
                task.oracle.as_ref(),
                &dl.predictor,
                &schedule,
                &eval,
                &mut observer,
            )?
        }
    };
    Ok(result)
}

fn build_baseline(
    method: Method,
    config: &TaskConfig,
    task: &Task,
    ved: Option<Arc<VedModel>>,
) -> CliResult<Box<dyn RoundOptimizer>> {
    let seed = derive_seed(config.seed, method.as_str());
    let vocab = task.vocabulary().size();
    let seeds: Vec<Sequence> = task.start_set().iter().map(|s| s.sequence.clone()).collect();
    let b = &config.baselines;
    Ok(match method {
        Method::Random => Box::new(RandomSearch::new(seeds, b.random_radius, vocab, seed)),
        Method::Greedy => Box::new(GreedyEvolution::new(task.start_set(), b.greedy.clone(), vocab, seed)?),
        Method::PexStyle => Box::new(DistancePrioritized::new(task.reference.clone(), task.start_set(), vocab, seed)?),
        Method::CmaesOneHot => {
            let encoding = Encoding::OneHot {
                vocab_size: vocab,
                length: task.reference.len(),
            };
            Box::new(CmaesSearch::new(encoding, &seeds, b.cmaes_sigma_onehot, seed)?)
        }
        Method::CmaesVed => {
            let codec = ved.ok_or_else(|| CliError::runtime("cmaes-ved needs a VED"))?;
            let encoding = Encoding::Latent {
                reference: codec.reference().clone(),
                codec,
                m_decode: config.env.m_decode,
            };
            Box::new(CmaesSearch::new(encoding, &seeds, b.cmaes_sigma_latent, seed)?)
        }
        Method::LatProtRl => unreachable!("handled by the LatProtRL driver"),
    })
}

/// Streams per-round outputs into a run directory.
struct RunWriter {
    dir: PathBuf,
    vocabulary: Vocabulary,
    metrics: csv::Writer<File>,
    log_trajectories: bool,
    save_checkpoints: bool,
}

impl RunWriter {
    fn create(dir: &Path, vocabulary: Vocabulary, config: &TaskConfig) -> CliResult<Self> {
        let path = dir.join("metrics.csv");
        let mut metrics = csv::Writer::from_path(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        metrics
            .write_record(METRIC_COLUMNS)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        if config.save_checkpoints && method_of(config) == Method::LatProtRl {
            fs::create_dir_all(dir.join("checkpoints")).map_err(|e| io_error(dir, e))?;
        }
        if config.log_trajectories && method_of(config) == Method::LatProtRl {
            fs::create_dir_all(dir.join("trajectories")).map_err(|e| io_error(dir, e))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            vocabulary,
            metrics,
            log_trajectories: config.log_trajectories,
            save_checkpoints: config.save_checkpoints,
        })
    }

    /// Appends a metrics row and writes `buffer_round_<k>.csv`.
    fn round(
        &mut self,
        m: &RoundMetrics,
        buffer: impl FnOnce(BufWriter<File>) -> latprot_core::Result<()>,
    ) -> latprot_core::Result<()> {
        self.metrics.write_record(m.csv_record())?;
        self.metrics.flush().map_err(|e| Error::io(self.dir.join("metrics.csv"), e))?;
        let path = self.dir.join(format!("buffer_round_{}.csv", m.round));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        buffer(BufWriter::new(file))
    }

    fn snapshot(&mut self, snap: &RoundSnapshot<'_>) -> latprot_core::Result<()> {
        let vocab = self.vocabulary.clone();
        self.round(snap.metrics, |w| snap.buffer.write_snapshot(w, &vocab))?;
        let round = snap.metrics.round;
        if self.save_checkpoints {
            let path = self.dir.join("checkpoints").join(format!("agent_round_{round}.json"));
            write_json(&path, &snap.agent.to_checkpoint()).map_err(|e| Error::invalid(e.message))?;
        }
        if self.log_trajectories && !snap.trajectories.is_empty() {
            let path = self.dir.join("trajectories").join(format!("round_{round}.jsonl"));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            for t in snap.trajectories {
                let line = serde_json::to_string(t).map_err(|e| Error::invalid(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn finish(mut self) -> CliResult<()> {
        self.metrics
            .flush()
            .map_err(|e| CliError::runtime(format!("metrics.csv: {e}")))
    }
}

/// `sequence,fitness` rows.
pub fn write_scored<W: Write>(writer: W, set: &[ScoredSequence], vocab: &Vocabulary) -> latprot_core::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sequence", "fitness"])?;
    for s in set {
        w.write_record([vocab.render(&s.sequence), s.fitness.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<sequence set>", e))?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[RoundMetrics]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(METRIC_COLUMNS)?;
        for m in rows {
            w.write_record(m.csv_record())?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}
