use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latprot_cli::commands::{self, Overrides};
use latprot_cli::config::RunMeta;
use latprot_cli::report::polyline_point_counts;
use latprot_cli::task::build_task;
use latprot_core::ved::LatentCodec;

const BASE: &str = r#"{
  "schema_version": 1,
  "oracle": {"kind": "nk", "length": 12, "k": 2, "vocab_size": 4, "landscape_seed": 3, "pool_size": 600},
  "task": {"band": "hard"},
  "start_size": 16,
  "ved": {"epochs": 4},
  "env": {"delta": 0.1, "max_steps": 4, "m_step": 3, "m_total": 15, "m_decode": 12},
  "ppo": {"rounds": 3, "oracle_calls": 32}
}"#;

fn latprot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latprot")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn with_fields(extra: &str) -> String {
    BASE.replacen("\"start_size\": 16,", &format!("\"start_size\": 16, {extra}"), 1)
}

fn run_ok(args: &[&str]) -> Output {
    let out = latprot(args);
    assert!(
        out.status.success(),
        "latprot {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1, "expected one error line, got {text:?}");
    lines[0].to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_dataset_exits_2_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = BASE.replace(
        r#"{"kind": "nk", "length": 12, "k": 2, "vocab_size": 4, "landscape_seed": 3, "pool_size": 600}"#,
        r#"{"kind": "csv", "path": "/no/such/gfp.csv"}"#,
    );
    let cfg = write_config(tmp.path(), "cfg.json", &cfg);
    let out = latprot(&["train-ved", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert!(line.starts_with("error[validation]: ") && line.contains("/no/such/gfp.csv"), "{line}");
}

#[test]
fn malformed_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", &BASE.replace("\"max_steps\": 4", "\"max_steps\": -4"));
    let out = latprot(&["optimize", "--config", s(&cfg), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("line"));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let out = latprot(&["optimize", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[validation]: "));
}

#[test]
fn train_ved_checkpoint_round_trips_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = run_ok(&["train-ved", "--config", s(&cfg), "--out", s(&a)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("non-mutated"));
    run_ok(&["train-ved", "--config", s(&cfg), "--out", s(&b)]);
    assert_eq!(
        fs::read(a.join("ved_report.json")).unwrap(),
        fs::read(b.join("ved_report.json")).unwrap()
    );

    let reloaded = latprot_cli::campaign::load_ved(&a.join("ved.json")).unwrap();
    let (config, _) = commands::prepare(
        &cfg,
        &Overrides {
            out: Some(a.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    let task = build_task(&config).unwrap();
    let (trained, _) = latprot_cli::campaign::train_task_ved(&config, &task).unwrap();
    for seq in task.data.sequences().take(20) {
        assert_eq!(trained.encode(seq).unwrap(), reloaded.encode(seq).unwrap());
    }
}

#[test]
fn random_single_round_stays_within_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_fields(r#""method": "random", "ppo": {"rounds": 1, "oracle_calls": 32},"#).replacen(
        r#""ppo": {"rounds": 3, "oracle_calls": 32}"#,
        r#""seed": 4"#,
        1,
    );
    let cfg = write_config(tmp.path(), "cfg.json", &cfg);
    let run = tmp.path().join("run");
    run_ok(&["optimize", "--config", s(&cfg), "--out", s(&run)]);
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(run.join("run_meta.json")).unwrap()).unwrap();
    assert!(meta.oracle_calls <= 32);
    assert_eq!(meta.rounds_completed, 1);
    assert!(run.join("buffer_round_1.csv").is_file());
}

#[test]
fn seq_mut_mode_bypasses_the_latent_modules() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", &with_fields(r#""ablation": {"mode": "seq/mut"},"#));
    let run = tmp.path().join("run");
    run_ok(&["optimize", "--config", s(&cfg), "--out", s(&run)]);
    assert!(!run.join("ved.json").exists());
    let log = fs::read_to_string(run.join("trajectories").join("round_1.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    let action = &first["transitions"][0]["action"];
    assert!(action.get("Mutation").is_some(), "{action}");
    assert_eq!(first["transitions"][0]["state"].as_array().unwrap().len(), 12 * 4);
}

#[test]
fn seeds_change_results_and_replays_do_not() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", BASE);
    let run = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut args = vec!["optimize", "--config", s(&cfg), "--out", s(&dir)];
        args.extend_from_slice(extra);
        run_ok(&args);
        fs::read(dir.join("metrics.csv")).unwrap()
    };
    let a = run("a", &["--seed", "1"]);
    let b = run("b", &["--seed", "1"]);
    let c = run("c", &["--seed", "2"]);
    let d = run("d", &["--seed", "1", "--workers", "2"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d);
}

#[test]
fn double_loop_needs_latprotrl() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", &with_fields(r#""method": "greedy","#));
    let out = latprot(&["double-loop", "--config", s(&cfg), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn double_loop_reports_rescored_final_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = with_fields(r#""double_loop": {"outer_rounds": 2, "predictor_rounds": 1, "final_predictor_rounds": 1},"#);
    let cfg = write_config(tmp.path(), "cfg.json", &cfg);
    let run = tmp.path().join("run");
    run_ok(&["double-loop", "--config", s(&cfg), "--out", s(&run)]);
    let meta: RunMeta = serde_json::from_str(&fs::read_to_string(run.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta.command, "double-loop");
    assert_eq!(meta.rounds_completed, 5);
    assert_eq!(meta.oracle_calls, 64);
    assert_eq!(meta.evaluation_calls, 16);
    assert!(run.join("final_metrics.csv").is_file());
}

#[test]
fn report_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", &with_fields(r#""method": "greedy","#));
    let run = tmp.path().join("greedy");
    run_ok(&["optimize", "--config", s(&cfg), "--out", s(&run)]);

    let rep = tmp.path().join("report");
    run_ok(&["report", s(&run), "--out", s(&rep)]);
    let rows = fs::read_to_string(run.join("metrics.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 4);
    for metric in ["fitness", "diversity", "d_init", "d_high", "buffer_max"] {
        let svg = fs::read_to_string(rep.join(format!("{metric}.svg"))).unwrap();
        assert_eq!(polyline_point_counts(&svg), vec![rows], "{metric}");
    }
    // Baselines record no ε.
    let svg = fs::read_to_string(rep.join("epsilon.svg")).unwrap();
    assert!(polyline_point_counts(&svg).is_empty());
    let combined = fs::read_to_string(rep.join("combined_metrics.csv")).unwrap();
    assert!(combined.starts_with("run,round,fitness"));
    assert_eq!(combined.lines().count(), rows + 1);

    let out = latprot(&["report", "--out", s(&rep)]);
    assert_eq!(out.status.code(), Some(2));

    let broken = tmp.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(broken.join("metrics.csv"), "round,fitness,score\n0,1,2\n").unwrap();
    let out = latprot(&["report", s(&run), s(&broken), "--out", s(&rep)]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert!(line.contains("diversity") && line.contains("score"), "{line}");

    let out = run_ok(&["evaluate", "--run", s(&run)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("fitness"));
    let mds = fs::read_to_string(run.join("mds.csv")).unwrap();
    assert!(mds.starts_with("id,x,y,fitness,round"));
    assert_eq!(mds.lines().count() - 1, 4 * 16);
    assert!(run.join("evaluation.json").is_file());
}

#[test]
fn gen_landscape_writes_the_task_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", BASE);
    let out_dir = tmp.path().join("land");
    run_ok(&["gen-landscape", "--config", s(&cfg), "--out", s(&out_dir)]);
    let full = fs::read_to_string(out_dir.join("dataset.csv")).unwrap();
    let band = fs::read_to_string(out_dir.join("task_dataset.csv")).unwrap();
    assert_eq!(full.lines().count() - 1, 600);
    assert_eq!(band.lines().count() - 1, 120);

    // The written dataset reloads as a csv oracle task over the same band.
    let csv_cfg = BASE.replace(
        r#"{"kind": "nk", "length": 12, "k": 2, "vocab_size": 4, "landscape_seed": 3, "pool_size": 600}"#,
        &format!(r#"{{"kind": "csv", "path": "{}", "alphabet": "ACDE"}}"#, s(&out_dir.join("dataset.csv"))),
    );
    let csv_cfg = write_config(tmp.path(), "csv.json", &csv_cfg);
    let (config, _) = commands::prepare(
        &csv_cfg,
        &Overrides {
            out: Some(tmp.path().join("x")),
            ..Overrides::default()
        },
    )
    .unwrap();
    let reloaded = build_task(&config).unwrap();
    assert_eq!(reloaded.data.len(), 120);

    // Surrogate-oracle and lookup-oracle runs on the written dataset.
    let predictor_cfg = fs::read_to_string(&csv_cfg)
        .unwrap()
        .replace(r#""kind": "csv""#, r#""kind": "predictor", "training": {"epochs": 5}"#)
        .replacen("\"start_size\": 16,", "\"start_size\": 16, \"method\": \"random\",", 1);
    let predictor_cfg = write_config(tmp.path(), "predictor.json", &predictor_cfg);
    run_ok(&["optimize", "--config", s(&predictor_cfg), "--out", s(&tmp.path().join("p"))]);
    let nearest = fs::read_to_string(&csv_cfg)
        .unwrap()
        .replace(r#""alphabet": "ACDE""#, r#""alphabet": "ACDE", "miss_policy": "nearest_neighbor""#)
        .replacen("\"start_size\": 16,", "\"start_size\": 16, \"method\": \"greedy\",", 1);
    let nearest = write_config(tmp.path(), "nearest.json", &nearest);
    run_ok(&["optimize", "--config", s(&nearest), "--out", s(&tmp.path().join("n"))]);
    let strict = fs::read_to_string(&nearest).unwrap().replace(r#", "miss_policy": "nearest_neighbor""#, "");
    let strict = write_config(tmp.path(), "strict.json", &strict);
    let out = latprot(&["optimize", "--config", s(&strict), "--out", s(&tmp.path().join("s"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stderr_line(&out).starts_with("error[runtime]: "));
}
