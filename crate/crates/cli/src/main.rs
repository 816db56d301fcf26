use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latprot_cli::campaign::Command;
use latprot_cli::commands::{self, Overrides};
use latprot_cli::report::write_report;
use latprot_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "latprot", version, about = "Latent-space reinforcement learning for sequence fitness optimization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Task configuration (JSON) or a run_meta.json to replay.
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for episode collection.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a variant encoder-decoder on the task data.
    TrainVed(Common),
    /// Run the configured optimization method.
    Optimize(Common),
    /// Run LatProtRL with predictor rounds between oracle rounds.
    DoubleLoop(Common),
    /// Compute metrics, dataset statistics and MDS coordinates of a run.
    Evaluate {
        /// Run directory holding run_meta.json.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine run metrics into a CSV and SVG line charts.
    Report {
        /// Run directories.
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the datasets of an NK task.
    GenLandscape(Common),
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Cmd::TrainVed(c) => {
            let (path, report) = commands::train_ved(&c.config, &c.overrides())?;
            println!("{}", commands::accuracy_table(&report));
            println!("checkpoint {}", path.display());
        }
        Cmd::Optimize(c) => summarize(commands::optimize(&c.config, &c.overrides(), Command::Optimize)?),
        Cmd::DoubleLoop(c) => summarize(commands::optimize(&c.config, &c.overrides(), Command::DoubleLoop)?),
        Cmd::Evaluate { run, out } => {
            let report = commands::evaluate(&run, out.as_deref())?;
            let m = &report.final_set;
            println!(
                "fitness {:.4} diversity {} d_init {} d_high {}",
                m.fitness,
                m.diversity,
                m.d_init,
                m.d_high.map(|d| d.to_string()).unwrap_or_default()
            );
        }
        Cmd::Report { runs, out } => {
            for path in write_report(&runs, &out)? {
                println!("{}", path.display());
            }
        }
        Cmd::GenLandscape(c) => {
            for path in commands::gen_landscape(&c.config, &c.overrides())? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn summarize(run: latprot_cli::campaign::RunOutput) {
    let last = run.final_metrics.as_ref().or(run.metrics.last());
    if let Some(m) = last {
        println!(
            "round {} fitness {:.4} diversity {} d_init {} oracle calls {}",
            m.round, m.fitness, m.diversity, m.d_init, run.meta.oracle_calls
        );
    }
    println!("run directory {}", run.dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            let first = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::validation(first));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
