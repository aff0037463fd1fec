//! End-to-end checks for the command-line interface: pipelines re-run from
//! their manifests byte-identically, outputs follow the documented schemas,
//! and failures map onto the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convrfm-cli"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn the CLI binary")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}stderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout should be UTF-8")
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    let path = dir.join(rel);
    std::fs::read(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn read_text(dir: &Path, rel: &str) -> String {
    String::from_utf8(read(dir, rel)).expect("artifact should be UTF-8")
}

const GEN_SMALL: &[&str] = &[
    "gen-data", "--task", "bars", "--n", "80", "--sigma", "0.5", "--side", "8", "--bar-len", "3",
    "--seed", "7", "--out", "data",
];

#[test]
fn gen_data_is_deterministic_and_reruns_from_its_manifest() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    run_ok(dir, GEN_SMALL);
    let mut again: Vec<String> = GEN_SMALL.iter().map(|s| s.to_string()).collect();
    *again.last_mut().expect("args") = "data-again".to_string();
    let again: Vec<&str> = again.iter().map(|s| s.as_str()).collect();
    run_ok(dir, &again);
    assert_eq!(
        read(dir, "data/dataset.dset"),
        read(dir, "data-again/dataset.dset"),
        "same seed must reproduce the dataset byte for byte"
    );

    // The manifest doubles as a config file; replaying it reproduces the run.
    run_ok(
        dir,
        &["gen-data", "--config", "data/manifest.txt", "--out", "data-replay"],
    );
    assert_eq!(
        read(dir, "data/dataset.dset"),
        read(dir, "data-replay/dataset.dset"),
        "replaying the manifest must reproduce the dataset byte for byte"
    );

    // A different seed must actually change the payload.
    run_ok(
        dir,
        &[
            "gen-data", "--task", "bars", "--n", "80", "--sigma", "0.5", "--side", "8",
            "--bar-len", "3", "--seed", "8", "--out", "data-other",
        ],
    );
    assert_ne!(
        read(dir, "data/dataset.dset"),
        read(dir, "data-other/dataset.dset"),
        "a different seed must change the generated noise"
    );
}

#[test]
fn theorem_check_reports_unit_correlation_by_default() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    let stdout = run_ok(dir, &["theorem-check", "--out", "check"]);
    assert!(
        stdout.contains("correlation 1.000000"),
        "default theorem check must print 'correlation 1.000000', got:\n{stdout}"
    );

    let csv = read_text(dir, "check/theorem.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("channels,side,q,filters,n,seed,pearson,residual,verdict"),
        "theorem report header"
    );
    let row = lines.next().expect("one data row");
    assert!(row.ends_with(",proportional"), "verdict column, got: {row}");
    assert_eq!(lines.next(), None, "a single run reports a single row");
}

#[test]
fn convrfm_pipeline_reruns_byte_identically_from_the_manifest() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    run_ok(dir, GEN_SMALL);
    run_ok(
        dir,
        &[
            "convrfm", "--data", "data/dataset.dset", "--q", "2", "--iters", "2", "--seed", "3",
            "--out", "fit",
        ],
    );
    run_ok(dir, &["convrfm", "--config", "fit/manifest.txt", "--out", "fit-replay"]);

    for artifact in ["feature-matrix.cnfm", "feature-matrix.csv", "metrics.csv"] {
        assert_eq!(
            read(dir, &format!("fit/{artifact}")),
            read(dir, &format!("fit-replay/{artifact}")),
            "replaying the manifest must reproduce {artifact} byte for byte"
        );
    }

    // Manifests agree on everything except the output directory itself.
    let strip = |text: String| -> Vec<String> {
        text.lines()
            .filter(|l| !l.starts_with("out="))
            .map(|l| l.to_string())
            .collect()
    };
    assert_eq!(
        strip(read_text(dir, "fit/manifest.txt")),
        strip(read_text(dir, "fit-replay/manifest.txt")),
        "replayed manifest must match the original apart from the out directory"
    );

    let manifest = read_text(dir, "fit/manifest.txt");
    assert!(manifest.starts_with("command=convrfm\n"), "manifest opens with the command");
    assert!(
        manifest.contains("artifact.feature-matrix.cnfm="),
        "manifest lists a hash for every artifact"
    );
}

#[test]
fn metrics_csv_follows_the_documented_schema() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    run_ok(dir, GEN_SMALL);
    run_ok(
        dir,
        &[
            "convrfm", "--data", "data/dataset.dset", "--q", "2", "--iters", "2", "--seed", "3",
            "--out", "fit",
        ],
    );

    let csv = read_text(dir, "fit/metrics.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,lambda,train_acc,val_acc,trace,eig1,eig2,eig3,eig4,eig5"),
        "metrics header"
    );
    for (i, row) in lines.enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 10, "ten columns per row, got: {row}");
        assert_eq!(fields[0], (i + 1).to_string(), "iterations are 1-based");
        for value in &fields[1..5] {
            value.parse::<f64>().unwrap_or_else(|_| panic!("numeric field in {row}"));
        }
    }
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    // 2: bad argument values and unknown configuration keys.
    let out = run(dir, &["gen-data", "--task", "nope", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2), "unknown task is a usage error");
    std::fs::write(dir.join("bad.cfg"), "task=bars\nbogus-key=3\n").expect("write config");
    let out = run(dir, &["gen-data", "--config", "bad.cfg", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2), "unknown config key is a usage error");
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(stderr.contains("bogus-key"), "error names the offending key: {stderr}");

    // 3: unreadable or malformed input files.
    let out = run(dir, &["convrfm", "--data", "missing.dset", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3), "missing input file is an input error");

    // 0: a successful run.
    let out = run(dir, GEN_SMALL);
    assert_eq!(out.status.code(), Some(0), "successful run exits cleanly");
}

#[test]
fn command_line_flags_override_config_file_values() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    std::fs::write(
        dir.join("gen.cfg"),
        "task=bars\nn=80\nsigma=0.9\nside=8\nbar-len=3\nseed=7\n",
    )
    .expect("write config");
    run_ok(
        dir,
        &["gen-data", "--config", "gen.cfg", "--sigma", "0.2", "--out", "gen"],
    );
    let manifest = read_text(dir, "gen/manifest.txt");
    assert!(
        manifest.contains("\nsigma=0.2\n"),
        "flag value must win over the config file, manifest:\n{manifest}"
    );
    assert!(manifest.contains("\nn=80\n"), "config values fill unset flags");
}

#[test]
fn benchmark_emits_one_row_per_method_and_noise_level() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    let stdout = run_ok(
        dir,
        &[
            "benchmark", "--task", "bars", "--sigmas", "0.5,1.0", "--methods",
            "fixed-kernel,convrfm", "--n-train", "80", "--n-test", "40", "--side", "8",
            "--bar-len", "3", "--q", "2", "--iters", "1", "--seed", "9", "--out", "bench",
        ],
    );
    assert!(stdout.contains("sigma"), "progress lines mention the noise level");

    let csv = read_text(dir, "bench/benchmark.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,task,sigma,accuracy"), "benchmark header");
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(|f| f.to_string()).collect())
        .collect();
    assert_eq!(rows.len(), 4, "one row per method and noise level");
    let expect = [
        ("fixed-kernel", "0.5"),
        ("convrfm", "0.5"),
        ("fixed-kernel", "1"),
        ("convrfm", "1"),
    ];
    for (row, (method, sigma)) in rows.iter().zip(expect) {
        assert_eq!(row[0], method, "method column order");
        assert_eq!(row[1], "bars", "task column");
        assert_eq!(row[2], sigma, "noise level column order");
        let accuracy: f64 = row[3].parse().expect("accuracy is numeric");
        assert!(
            (0.0..=1.0).contains(&accuracy),
            "accuracy must lie in [0, 1], got {accuracy}"
        );
    }
}
