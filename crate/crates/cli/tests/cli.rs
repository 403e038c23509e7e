use std::path::Path;
use std::process::Command;

use clap::Parser;
use trace_pursuit::{generate, Model, SimDesign};
use tracepursuit_cli::{ingest_csv, read_csv, run, write_csv, Cli, CliError, Plan, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tracepursuit"))
}

fn plan(args: &[&str]) -> RunConfig {
    let mut full = vec!["tracepursuit"];
    full.extend_from_slice(args);
    match Plan::from_cli(Cli::try_parse_from(full).unwrap()).unwrap() {
        Plan::Run(cfg) => *cfg,
        Plan::Export { .. } => panic!("expected a run plan"),
    }
}

fn json_lines(args: &[&str]) -> serde_json::Value {
    let cfg = plan(args);
    let mut out = Vec::new();
    run(&cfg, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1);
    serde_json::from_str(text.trim()).unwrap()
}

/// Small deterministic table: predictors from a hashed counter, response
/// supplied by the caller.
fn write_table(path: &Path, n: usize, p: usize, seed: u64, response: impl Fn(&[f64], f64) -> f64) {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut text = String::new();
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    text.push_str(&header.join(","));
    text.push_str(",y\n");
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| next()).collect();
        let y = response(&row, next());
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        text.push_str(&format!("{},{y}\n", cells.join(",")));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn too_few_samples_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, "x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
    assert!(matches!(
        ingest_csv(&path),
        Err(CliError::TooFewSamples { n: 3 })
    ));

    let out = bin()
        .args(["select", "--input"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("too-few-samples"), "{err}");
    assert!(err.contains("hint:"));
}

#[test]
fn missing_response_names_the_columns() {
    let text = "a,b,c\n1,2,3\n";
    match read_csv(text.as_bytes()) {
        Err(e @ CliError::MissingResponse { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("a, b, c"), "{msg}");
            assert_eq!(e.category(), "missing-response");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn exported_dataset_round_trips_bit_for_bit() {
    let design = SimDesign::new(Model::I, 120, 7).with_rho(0.4).with_seed(11);
    let (data, _) = generate(&design).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model1.csv");
    write_csv(&data, std::fs::File::create(&path).unwrap()).unwrap();
    let back = ingest_csv(&path).unwrap().data;
    assert_eq!(back.n(), data.n());
    assert_eq!(back.p(), data.p());
    for (a, b) in back.x().iter().zip(data.x().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in back.y().iter().zip(data.y()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // the export subcommand writes the same bytes
    let cli_path = dir.path().join("cli.csv");
    let status = bin()
        .args([
            "export", "--model", "1", "--n", "120", "--p", "7", "--rho", "0.4", "--seed", "11",
            "--out",
        ])
        .arg(&cli_path)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&cli_path).unwrap()
    );
}

#[test]
fn screen_on_single_predictor_is_forced() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    write_table(&path, 40, 1, 3, |x, e| x[0] + 0.1 * e);
    let p = path.to_str().unwrap();
    let rec = json_lines(&[
        "screen",
        "--method",
        "sir",
        "--input",
        p,
        "--format",
        "json-lines",
    ]);
    let result = &rec["result"];
    assert_eq!(result["steps"].as_array().unwrap().len(), 1);
    assert_eq!(result["steps"][0]["index"], 1);
    assert_eq!(result["chosen"], serde_json::json!([1]));
}

#[test]
fn json_lines_are_byte_identical_across_runs() {
    let args = [
        "select",
        "--model",
        "2",
        "--method",
        "save",
        "--seed",
        "5",
        "--format",
        "json-lines",
    ];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let rec: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(rec["schema_version"], 1);
    assert_eq!(rec["command"], "select");
    assert!(rec.get("error").is_none());
}

#[test]
fn bench_row_matches_model_one_expectations() {
    let rec = json_lines(&[
        "bench",
        "--model",
        "1",
        "--method",
        "sir",
        "--p",
        "10",
        "--reps",
        "100",
        "--seed",
        "7",
        "--format",
        "json-lines",
    ]);
    let r = &rec["result"];
    let (uf, cf, of) = (
        r["uf"].as_u64().unwrap(),
        r["cf"].as_u64().unwrap(),
        r["of"].as_u64().unwrap(),
    );
    assert_eq!(uf + cf + of, r["n_reps"].as_u64().unwrap());
    assert_eq!(r["n_reps"], 100);
    assert!(cf >= 95, "CF {cf}");
}

#[test]
fn test_command_retains_null_on_pure_noise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.csv");
    let p = path.to_str().unwrap();
    let mut retained = 0;
    for seed in 0..100 {
        write_table(&path, 200, 3, 100 + seed, |_, e| e);
        let rec = json_lines(&[
            "test",
            "--input",
            p,
            "--method",
            "sir",
            "--set",
            "1",
            "--candidate",
            "2",
            "--alpha",
            "0.05",
            "--format",
            "json-lines",
        ]);
        if rec["result"]["decision"] == "retain H0" {
            retained += 1;
        }
    }
    assert!((88..=100).contains(&retained), "retained {retained}/100");
}

#[test]
fn errors_emit_a_record_and_nonzero_exit() {
    let out = bin()
        .args(["test", "--candidate", "12", "--format", "json-lines"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["error"]["category"], "index-out-of-range");
    assert!(rec["error"]["hint"].as_str().is_some());

    let out = bin().args(["select", "--alpha", "2"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn discrete_responses_are_sliced_by_value() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("classes.csv");
    write_table(&path, 150, 4, 9, |x, _| {
        if x[1] > 0.2 {
            2.0
        } else if x[1] > -0.2 {
            1.0
        } else {
            0.0
        }
    });
    let p = path.to_str().unwrap();
    let rec = json_lines(&[
        "select",
        "--input",
        p,
        "--method",
        "sir",
        "--format",
        "json-lines",
    ]);
    assert_eq!(rec["result"]["selected"], serde_json::json!([2]));
}

#[test]
fn csv_and_table_outputs_render() {
    let cfg = plan(&["screen", "--method", "dr", "--p", "6", "--format", "csv"]);
    let mut out = Vec::new();
    run(&cfg, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("step,index,trace,bic\n"));
    assert_eq!(text.lines().count(), 7);

    let cfg = plan(&["bench", "--model", "3", "--reps", "4", "--p", "6"]);
    let mut out = Vec::new();
    run(&cfg, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("UF") && text.contains("HTP-DR"), "{text}");
}
