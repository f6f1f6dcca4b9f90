//! The `kg2data` binary: exit codes and the offline commands.

use std::io::Write;
use std::process::{Command, Output, Stdio};

use kg2data::interface::{Config, Workspace};

fn kg2data(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kg2data")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(kg2data(&["--help"]).status.code(), Some(0));
    assert_eq!(kg2data(&["--version"]).status.code(), Some(0));
    assert_eq!(kg2data(&[]).status.code(), Some(1));
    assert_eq!(kg2data(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kg2data(&["eval", "--seed", "seven"]).status.code(), Some(1));
    assert_eq!(kg2data(&["chat", "--memory", "quantum"]).status.code(), Some(1));

    let missing = kg2data(&["report", "--in", "/nonexistent/report.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("error:"));
    let bad_config = kg2data(&["--config", "/nonexistent/kg2data.toml", "eval"]);
    assert_eq!(bad_config.status.code(), Some(2));
}

#[test]
fn eval_then_report_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let run = kg2data(&["eval", "--systems", "kg,vector,null", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stderr(&run));
    let table = stdout(&run);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "\tFRIR\tFRNR\tFRPR\tFRHR\tACAR");
    assert_eq!(lines[1], "KG2data\t0.00%\t0.00%\t0.00%\t0.00%\t100.00%");
    assert!(lines[2].starts_with("RAG2data\t"));
    assert!(table.contains("chat2data\t"));

    let report = kg2data(&["report", "--in", out.to_str().unwrap()]);
    assert!(report.status.success());
    assert_eq!(stdout(&report), table);

    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["reports"][0]["seed"], 7);
    assert_eq!(doc["reports"][0]["rates"]["ACAR"]["exact"], "1/1");
    assert_eq!(doc["reports"][0]["n"], 70);
}

#[test]
fn replay_without_a_recording_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let run = kg2data(&["eval", "--systems", "kg", "--seed", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("missing cassette"), "{}", stderr(&run));
    assert!(!out.exists());
}

#[test]
fn replayed_build_reproduces_the_shipped_snapshot() {
    let ws = Workspace::load(Config::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.jsonl");
    let corpus = ws.config.path(&ws.config.corpus);
    let run = kg2data(&["build-kg", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(stdout(&run).contains("entities"));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(ws.config.path(&ws.config.graph)).unwrap());
}

#[test]
fn replayed_generation_reproduces_the_shipped_cases() {
    let ws = Workspace::load(Config::default()).unwrap();
    let run = kg2data(&["gen-pairs", "--per-api", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    let generated = kg2data::eval::parse_cases(&stdout(&run), &ws.registry).unwrap();
    let shipped = ws.cases().unwrap();
    assert_eq!(generated.len(), shipped.len());
    // Intent tags and answer fields of the shipped set are curated by hand.
    for (g, s) in generated.iter().zip(&shipped) {
        assert_eq!((&g.id, &g.instruction, g.style), (&s.id, &s.instruction, s.style));
        assert_eq!((&g.gold_tool, &g.gold_params), (&s.gold_tool, &s.gold_params));
    }
}

#[test]
fn config_file_overrides_paths() {
    let dir = tempfile::tempdir().unwrap();
    let data = Config::default().data_dir;
    let config = dir.path().join("kg2data.toml");
    std::fs::write(&config, format!("data_dir = {:?}\nseed = 7\nreports = {:?}\n", data, dir.path().join("reports"))).unwrap();
    let run = kg2data(&["--config", config.to_str().unwrap(), "eval", "--systems", "null"]);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(dir.path().join("reports/latest.json").exists());
}

#[test]
fn chat_prints_steps_and_reports_misses() {
    let ws = Workspace::load(Config::default()).unwrap();
    let question = ws.cases().unwrap()[0].instruction.clone();
    let mut child = Command::new(env!("CARGO_BIN_EXE_kg2data"))
        .args(["chat", "--memory", "vector"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    writeln!(child.stdin.take().unwrap(), "{question}\nWhat is the meaning of life?").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Action: "));
    assert!(text.contains("Final Answer: "));
    assert!(text.contains("[gateway_error]"), "{text}");
}

#[test]
fn offline_environment_blocks_remote_models() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("kg2data.toml");
    std::fs::write(
        &config,
        format!(
            "data_dir = {:?}\n[llm]\nendpoint = \"https://llm.example.invalid/v1/chat/completions\"\nretries = 0\n",
            Config::default().data_dir
        ),
    )
    .unwrap();
    let out = dir.path().join("pairs.jsonl");
    let run = Command::new(env!("CARGO_BIN_EXE_kg2data"))
        .env("KG2DATA_OFFLINE", "1")
        .args(["--config", config.to_str().unwrap(), "gen-pairs", "--llm", "remote", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("forbidden"), "{}", stderr(&run));
}
