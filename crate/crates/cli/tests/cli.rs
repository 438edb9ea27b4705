//! End-to-end exercises of the binary: exit codes, file outputs, and
//! thread-count independence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn erpca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_erpca"))
}

fn run(args: &[&str]) -> Output {
    erpca().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_bernoulli_stack(path: &Path) {
    // Cell means stay interior (no all-equal columns), so the default
    // tolerance is reachable quickly.
    let text = "\
# p=4 q=4 n=4 kind=bernoulli
1,0,1,0
0,1,0,1
1,0,1,0
0,1,0,1

1,1,1,0
0,1,0,0
1,0,1,1
0,1,0,1

0,0,1,0
1,1,0,1
1,0,1,0
0,0,0,1

1,0,0,1
0,1,1,1
1,1,1,0
1,1,0,1
";
    std::fs::write(path, text).unwrap();
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn decompose_happy_path_writes_four_files() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    for name in ["L.csv", "S.csv", "Theta.csv", "diagnostics.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["mode"], "single");
    assert_eq!(diag["converged"], true);
}

#[test]
fn decompose_block_count_mismatch_exits_1_citing_counts() {
    let dir = tmp();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "# p=2 q=2 n=3 kind=bernoulli\n1,0\n0,1\n\n1,1\n0,0\n").unwrap();
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("n=3") && err.contains("has 2"), "{err}");
}

#[test]
fn decompose_canonical_rejected_for_poisson() {
    let dir = tmp();
    let input = dir.path().join("pois.csv");
    std::fs::write(&input, "# p=2 q=2 n=1 kind=poisson\n3,1\n0,2\n").unwrap();
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--link",
        "canonical",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("canonical link supported for bernoulli only"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn decompose_canonical_bernoulli_writes_probability_view() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--link",
        "canonical",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(out_dir.join("Theta_probability.csv").exists());
}

#[test]
fn decompose_exit_3_when_iteration_cap_hit() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"max_iter": 2, "tol": 1e-12}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    // Outputs are still written.
    assert!(out_dir.join("L.csv").exists());
}

#[test]
fn decompose_rejects_unknown_config_keys() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"alpah": 2.0}"#).unwrap();
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("alpah"), "{}", stderr_of(&out));
}

#[test]
fn decompose_multi_writes_per_group_files() {
    let dir = tmp();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"p": 6, "kind": "bernoulli", "n": 16, "G": 2, "seed": 5, "disjoint_supports": true}"#,
    )
    .unwrap();
    let sim_dir = dir.path().join("sim");
    let out = run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", sim_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));

    let out_dir = dir.path().join("out");
    let g1 = sim_dir.join("stack_1.csv");
    let g2 = sim_dir.join("stack_2.csv");
    let out = run(&[
        "decompose",
        "--multi",
        "--group-inputs",
        g1.to_str().unwrap(),
        g2.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(3), "{}", stderr_of(&out));
    for name in ["L.csv", "S_1.csv", "S_2.csv", "Theta_1.csv", "Theta_2.csv", "diagnostics.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
}

#[test]
fn simulate_header_and_spike_count_and_determinism() {
    let dir = tmp();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"p": 3, "kind": "bernoulli", "n": 4, "seed": 11}"#).unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    assert_eq!(run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", out1.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", out2.to_str().unwrap()]).status.code(), Some(0));

    let stack = std::fs::read_to_string(out1.join("stack_1.csv")).unwrap();
    assert!(stack.starts_with("# p=3 q=3 n=4 kind=bernoulli\n"), "{stack}");

    // ceil(9/20) = 1 spike cell.
    let s_true = std::fs::read_to_string(out1.join("S_true_1.csv")).unwrap();
    let nonzero = s_true
        .split(['\n', ','])
        .filter(|t| !t.is_empty())
        .filter(|t| t.parse::<f64>().unwrap() != 0.0)
        .count();
    assert_eq!(nonzero, 1);

    for name in ["L_true.csv", "S_true_1.csv", "Theta_1.csv", "stack_1.csv", "manifest.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rng"], "chacha12");
    assert_eq!(manifest["seed"], 11);
}

#[test]
fn simulate_seed_override_changes_output() {
    let dir = tmp();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"p": 3, "kind": "poisson", "n": 2, "seed": 1}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["--seed", "99", "simulate", "--spec", spec.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let ma = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.json")).unwrap();
    assert!(ma.contains("\"seed\": 1"));
    assert!(mb.contains("\"seed\": 99"));
}

#[test]
fn tune_vacuous_caps_report_json_summary() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out = run(&[
        "tune",
        "--input",
        input.to_str().unwrap(),
        "--rank-cap",
        "4",
        "--sparsity-cap",
        "0.999",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is a JSON summary");
    for key in ["alpha", "beta", "rank_L", "pct_nz_S", "rounds", "satisfied"] {
        assert!(summary.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(summary["satisfied"], true);
    assert_eq!(summary["rounds"], 0);
    assert_eq!(summary["alpha"], 1.0);
}

#[test]
fn tune_unreachable_caps_exit_4_with_partial_outputs() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "tune",
        "--input",
        input.to_str().unwrap(),
        "--rank-cap",
        "1",
        "--sparsity-cap",
        "0.001",
        "--eta-alpha",
        "0.001",
        "--eta-beta",
        "0.0001",
        "--max-rounds",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("caps not met"));
    assert!(out_dir.join("L.csv").exists());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["satisfied"], false);
}

#[test]
fn tune_bad_caps_exit_1() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out = run(&[
        "tune",
        "--input",
        input.to_str().unwrap(),
        "--rank-cap",
        "9",
        "--sparsity-cap",
        "0.5",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn bench_suite(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("suite.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn bench_row_count_and_unknown_kind() {
    let dir = tmp();
    let suite = bench_suite(
        dir.path(),
        r#"{"p_list": [10], "kind": "bernoulli", "n": 8, "trials": 2, "seed": 4, "record_timing": false}"#,
    );
    let csv = dir.path().join("results.csv");
    let out = run(&["bench", "--suite", suite.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5, "header + 4 rows, got {}", lines.len());
    assert_eq!(
        lines[0],
        "method,p,kind,seed,trial,err_L,err_S,rank_L,pct_nz_S,iterations,wall_time_s,status"
    );
    assert!(dir.path().join("results.csv.manifest.json").exists());

    let bad = bench_suite(
        dir.path(),
        r#"{"p_list": [10], "kind": "weibull", "n": 8, "trials": 2}"#,
    );
    let out = run(&["bench", "--suite", bad.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_multi_mode_runs() {
    let dir = tmp();
    let suite = bench_suite(
        dir.path(),
        r#"{"p_list": [8], "kind": "bernoulli", "n": 16, "trials": 1, "mode": "multi", "seed": 2, "record_timing": false}"#,
    );
    let csv = dir.path().join("multi.csv");
    let out = run(&["bench", "--suite", suite.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("erpca") && text.contains("rpca_baseline"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tmp();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"p": 8, "kind": "poisson", "n": 10, "seed": 3}"#).unwrap();
    let sim = dir.path().join("sim");
    run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    let stack = sim.join("stack_1.csv");

    let out1 = dir.path().join("t1");
    let out4 = dir.path().join("t4");
    let a = run(&["--threads", "1", "decompose", "--input", stack.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    let b = run(&["--threads", "4", "decompose", "--input", stack.to_str().unwrap(), "--out", out4.to_str().unwrap()]);
    assert_eq!(a.status.code(), b.status.code());
    for name in ["L.csv", "S.csv", "Theta.csv", "diagnostics.json"] {
        let x = std::fs::read(out1.join(name)).unwrap();
        let y = std::fs::read(out4.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs across thread counts");
    }
}

#[test]
fn domain_invalid_entry_exits_1_naming_cell() {
    let dir = tmp();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "# p=2 q=2 n=1 kind=bernoulli\n1,0\n0,0.5\n").unwrap();
    let out = run(&[
        "decompose",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("(1, 1)") && err.contains("0.5"), "{err}");
}

#[test]
fn erpca_threads_env_is_honored_and_output_invariant() {
    let dir = tmp();
    let input = dir.path().join("stack.csv");
    write_bernoulli_stack(&input);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run_env = |threads: &str, out_dir: &Path| {
        erpca()
            .env("ERPCA_THREADS", threads)
            .args(["decompose", "--input", input.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .output()
            .unwrap()
    };
    assert_eq!(run_env("1", &out_a).status.code(), Some(0));
    assert_eq!(run_env("4", &out_b).status.code(), Some(0));
    for name in ["L.csv", "S.csv", "Theta.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(name)).unwrap(),
            std::fs::read(out_b.join(name)).unwrap()
        );
    }
}

#[test]
fn stack_roundtrip_through_simulate_and_decompose() {
    // The decompose path parses what simulate wrote; Theta stays in-domain.
    let dir = tmp();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"p": 5, "kind": {"gaussian": {"sigma2": 0.25}}, "n": 6, "seed": 8}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(
        run(&["simulate", "--spec", spec.to_str().unwrap(), "--out", sim.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let header = std::fs::read_to_string(sim.join("stack_1.csv")).unwrap();
    assert!(header.starts_with("# p=5 q=5 n=6 kind=gaussian sigma2=0.25\n"), "{header}");
    let out = run(&[
        "decompose",
        "--input",
        sim.join("stack_1.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", stderr_of(&out));
}
