//! End-to-end tests of the `gmrf` binary: pipelines, exit codes, output
//! formats and manifest reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmrf::ggm::GgmParams;
use gmrf::graph::make_lattice;
use gmrf::io;
use nalgebra::DVector;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmrf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gmrf_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// A 20-vertex lattice graph file plus a matching parameter file.
fn write_fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let g = make_lattice(5, 4);
    let graph_path = dir.join("city.graph");
    fs::write(&graph_path, io::graph_to_string(&g)).unwrap();
    let params =
        GgmParams::new(DVector::from_fn(20, |i, _| 0.3 + 0.02 * i as f64), 1.0, 1.5).unwrap();
    let params_path = dir.join("true.params");
    fs::write(&params_path, io::params_to_string(&params)).unwrap();
    (graph_path, params_path)
}

#[test]
fn graph_flag_accepts_road_network_files() {
    let dir = workdir("roads");
    let roads = dir.join("net.roads");
    fs::write(
        &roads,
        "road 1\nroad 2\nroad 3\nroad 4\nroad 5\nroad 6\nx 1 2 3 4\nx 3 4 5 6\n",
    )
    .unwrap();
    let params = dir.join("p.params");
    fs::write(
        &params,
        format!("xi 1.0\nj 0.5\nh {}\n", ["0.2"; 6].join(" ")),
    )
    .unwrap();
    let out = run(&[
        "sample",
        "--graph",
        roads.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--count",
        "3",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("x0,x1,x2,x3,x4,x5\n"));
}

#[test]
fn full_pipeline_sample_learn_reconstruct_evaluate() {
    let dir = workdir("pipeline");
    let (graph, params) = write_fixtures(&dir);
    let graph = graph.to_str().unwrap();
    let params = params.to_str().unwrap();

    // sample
    let data = dir.join("history.csv");
    let out = run(&[
        "sample",
        "--graph",
        graph,
        "--params",
        params,
        "--count",
        "400",
        "--seed",
        "1",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "sample: {}", stderr(&out));
    assert!(data.exists());
    assert!(dir.join("history.csv.manifest").exists());

    // learn
    let learned = dir.join("learned.params");
    let report = dir.join("fit.txt");
    let out = run(&[
        "learn",
        "--graph",
        graph,
        "--data",
        data.to_str().unwrap(),
        "--lambda-h",
        "1e-6",
        "--lambda-xi",
        "1e-6",
        "--lambda-j",
        "1e-6",
        "--report",
        report.to_str().unwrap(),
        "--out",
        learned.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "learn: {}", stderr(&out));
    let fitted = io::parse_params_file(&learned).unwrap();
    assert!((fitted.xi - 1.0).abs() < 0.3, "xi learned {}", fitted.xi);
    assert!((fitted.j - 1.5).abs() < 0.5, "j learned {}", fitted.j);
    assert!(fs::read_to_string(&report)
        .unwrap()
        .contains("converged true"));

    // reconstruct (vertices 3 and 7 missing from the first history row)
    let mask = dir.join("missing.txt");
    fs::write(&mask, "3\n7\n").unwrap();
    let filled = dir.join("filled.csv");
    let out = run(&[
        "reconstruct",
        "--graph",
        graph,
        "--params",
        learned.to_str().unwrap(),
        "--observation",
        data.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--out",
        filled.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "reconstruct: {}", stderr(&out));
    let report = stderr(&out);
    assert!(
        report.contains("sweeps"),
        "missing convergence report: {report}"
    );
    assert!(report.contains("converged true"));
    let row = io::parse_matrix_file(&filled).unwrap();
    assert_eq!(row.nrows(), 1);
    assert_eq!(row.ncols(), 20);

    // evaluate
    let quantized = dir.join("bins.csv");
    let out = run(&[
        "evaluate",
        "--graph",
        graph,
        "--params",
        learned.to_str().unwrap(),
        "--truth",
        data.to_str().unwrap(),
        "--p",
        "0.5",
        "--seed",
        "7",
        "--quantized",
        quantized.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "evaluate: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mse "), "report: {text}");
    assert!(text.contains("correlation "));
    let bins = fs::read_to_string(&quantized).unwrap();
    assert!(bins.starts_with("vertex,value,bin\n"));
    assert_eq!(bins.lines().count(), 21);

    // sweep-p
    let curve = dir.join("curve.csv");
    let out = run(&[
        "sweep-p",
        "--graph",
        graph,
        "--params",
        learned.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--p-grid",
        "0.2:0.8:0.3",
        "--trials",
        "20",
        "--seed",
        "3",
        "--out",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "sweep-p: {}", stderr(&out));
    let table = fs::read_to_string(&curve).unwrap();
    assert!(table.starts_with("p,mse_mean,mse_stderr,trials\n"));
    assert_eq!(table.lines().count(), 4); // header + 3 grid points
    assert!(curve.with_extension("csv.manifest").exists());
}

#[test]
fn outputs_are_bit_reproducible() {
    let dir = workdir("repro");
    let (graph, params) = write_fixtures(&dir);
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    for out in [&out_a, &out_b] {
        let status = run(&[
            "sample",
            "--graph",
            graph.to_str().unwrap(),
            "--params",
            params.to_str().unwrap(),
            "--count",
            "50",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(status.status.code(), Some(0));
    }
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
    // The manifests differ only in the output path line.
    let manifest = fs::read_to_string(dir.join("a.csv.manifest")).unwrap();
    assert!(manifest.contains("subcommand sample"));
    assert!(manifest.contains("seed 42"));
    assert!(manifest.contains("fnv1a:"));
}

#[test]
fn ggm_threads_caps_parallelism_without_changing_output() {
    let dir = workdir("threads");
    let (graph, params) = write_fixtures(&dir);
    let single = dir.join("single.csv");
    let multi = dir.join("multi.csv");
    let args = |out: &Path| {
        vec![
            "sample".to_string(),
            "--graph".into(),
            graph.to_str().unwrap().into(),
            "--params".into(),
            params.to_str().unwrap().into(),
            "--count".into(),
            "64".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let out = bin()
        .args(args(&single))
        .env("GGM_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = bin().args(args(&multi)).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // Per-sample RNG streams make the output independent of the thread count.
    assert_eq!(fs::read(&single).unwrap(), fs::read(&multi).unwrap());
}

#[test]
fn analyze_matched_model_is_flat_in_p() {
    let out = run(&[
        "analyze",
        "--j",
        "1",
        "--xi",
        "0.2",
        "--j0",
        "1",
        "--xi0",
        "0.2",
        "--mu-h",
        "1",
        "--sigma-h",
        "0.5",
        "--mu-eps",
        "0",
        "--sigma-eps",
        "0",
        "--sweep",
        "p",
        "--grid",
        "0:1:0.1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,analytic_E"));
    let values: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values.len(), 11);
    let first: f64 = values[0].parse().unwrap();
    assert!((first - 1.0 / 1.2).abs() < 1e-12);
    for v in &values[1..] {
        assert_eq!(*v, values[0], "matched model must be p-independent");
    }
}

#[test]
fn analyze_with_monte_carlo_column() {
    let out = run(&[
        "analyze",
        "--j",
        "1",
        "--xi",
        "0.2",
        "--mu-h",
        "1",
        "--sigma-h",
        "0.5",
        "--sweep",
        "r",
        "--grid",
        "-0.2,0,0.5",
        "--p",
        "0.5",
        "--mc-n",
        "300",
        "--mc-trials",
        "40",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("x,analytic_E,mc_E,mc_stderr\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn exit_codes_follow_the_contract() {
    // Usage errors: missing required flag, unknown subcommand (with a hint).
    let out = run(&["analyze", "--j", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--xi"), "names the missing flag");

    let out = run(&["analyse"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("analyze"),
        "suggests the right subcommand: {}",
        stderr(&out)
    );

    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in [
        "sample",
        "learn",
        "reconstruct",
        "evaluate",
        "sweep-p",
        "analyze",
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        assert!(stdout(&out).contains("--seed") || stdout(&out).contains("--graph"));
    }

    // Data errors: malformed graph file reported with its line number.
    let dir = workdir("exitcodes");
    let bad = dir.join("bad.graph");
    fs::write(&bad, "n 2\ne 0 0\n").unwrap();
    let params = dir.join("p.params");
    fs::write(&params, "xi 1.0\nj 0.5\nh 0.0 0.0\n").unwrap();
    let obs = dir.join("obs.csv");
    fs::write(&obs, "x0,x1\n0.1,0.2\n").unwrap();
    let mask = dir.join("m.txt");
    fs::write(&mask, "0\n").unwrap();
    let out = run(&[
        "reconstruct",
        "--graph",
        bad.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--observation",
        obs.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains(":2:"),
        "line number: {}",
        stderr(&out)
    );

    // Degenerate analysis parameters are data errors too.
    let out = run(&[
        "analyze",
        "--j",
        "1",
        "--xi",
        "-0.5",
        "--mu-h",
        "1",
        "--sigma-h",
        "0.5",
        "--sweep",
        "p",
        "--grid",
        "0:1:0.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reconstruct_matches_closed_form_on_a_path() {
    let dir = workdir("closedform");
    let graph = dir.join("path.graph");
    fs::write(&graph, "n 3\ne 0 1\ne 1 2\n").unwrap();
    let params = dir.join("p.params");
    fs::write(&params, "xi 1.0\nj 2.0\nh 0.0 0.0 0.0\n").unwrap();
    let obs = dir.join("obs.csv");
    fs::write(&obs, "x0,x1,x2\n0.9,0.0,0.3\n").unwrap();
    let mask = dir.join("m.txt");
    fs::write(&mask, "1\n").unwrap();
    let out = run(&[
        "reconstruct",
        "--graph",
        graph.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--observation",
        obs.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let x1: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    let expect = 2.0 * (0.9 + 0.3) / (1.0 + 2.0 * 2.0);
    assert!((x1 - expect).abs() < 1e-9, "got {x1}, want {expect}");
    // Observed entries echo the input bit-exactly.
    let x0: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert_eq!(x0, 0.9);
}

#[test]
fn evaluate_caps_excessive_missing_probability() {
    let dir = workdir("cap");
    let (graph, params) = write_fixtures(&dir);
    let truth = dir.join("t.csv");
    let status = run(&[
        "sample",
        "--graph",
        graph.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--count",
        "1",
        "--seed",
        "9",
        "--out",
        truth.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    let out = run(&[
        "evaluate",
        "--graph",
        graph.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--p",
        "1.0",
        "--seed",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("capping"), "{}", stderr(&out));
}
