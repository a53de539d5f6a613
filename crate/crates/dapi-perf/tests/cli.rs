//! End-to-end checks of the command-line interface and its exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dapi-perf"))
}

#[test]
fn no_args_is_a_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().args(["losses", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn graph_spectrum_reads_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.txt");
    std::fs::write(&path, "n 4\n0 1 1\n1 2 1\n2 3 1\n0 3 1\n").unwrap();
    let out = bin().args(["graph", "spectrum"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let values: Vec<f64> = stdout
        .trim()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let expect = [0.0, 2.0, 2.0, 4.0];
    assert_eq!(values.len(), 4);
    for (v, e) in values.iter().zip(&expect) {
        assert!((v - e).abs() < 1e-9, "{stdout}");
    }
    // missing file -> usage-style failure
    let out = bin()
        .args(["graph", "spectrum", "no-such-file.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn losses_prints_breakdown_row() {
    let out = bin()
        .args([
            "losses", "--family", "complete", "--n", "10", "--weight", "0.05", "--k", "5",
            "--tau", "0.8", "--q", "0.8", "--alpha", "1", "--eps", "1", "--gamma", "5.6",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next().unwrap(), "p_part,eta_part,total");
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[0] + row[1] - row[2]).abs() < 1e-15);
    assert!(row[2] < 0.9, "total {} should beat CAPI at gamma 5.6", row[2]);
}

#[test]
fn losses_with_comm_graph_uses_separated_form() {
    let dir = tempfile::tempdir().unwrap();
    let gp = dapi_perf::graph::WeightedGraph::ring_qfuzz(12, 1, 0.4).unwrap();
    let gc = dapi_perf::graph::WeightedGraph::ring_qfuzz(12, 2, 0.4).unwrap();
    let gp_path = dir.path().join("gp.txt");
    let gc_path = dir.path().join("gc.txt");
    gp.write_edge_list(&gp_path).unwrap();
    gc.write_edge_list(&gc_path).unwrap();
    let out = bin()
        .args(["losses", "--graph"])
        .arg(&gp_path)
        .arg("--comm-graph")
        .arg(&gc_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // a non-commuting pair is rejected as an input error
    let bad = dapi_perf::graph::WeightedGraph::path(12, 1.0).unwrap();
    let bad_path = dir.path().join("bad.txt");
    bad.write_edge_list(&bad_path).unwrap();
    let out = bin()
        .args(["losses", "--graph"])
        .arg(&gp_path)
        .arg("--comm-graph")
        .arg(&bad_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_dump_prints_matrices_and_enforces_size() {
    let out = bin()
        .args(["model", "dump", "--family", "ring", "--n", "4", "--controller", "capi"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("# A (9x9)"));
    assert!(stdout.contains("# B (9x8)"));
    assert!(stdout.contains("# C (4x9)"));
    let out = bin()
        .args(["model", "dump", "--family", "ring", "--n", "11"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tune_reports_fig2_optima() {
    let out = bin()
        .args([
            "tune", "--family", "complete", "--n", "10", "--weight", "0.05", "--eps", "1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gamma_star"), "{stdout}");
    assert!(stdout.contains("gamma_hat"), "{stdout}");
    let csv = bin()
        .args([
            "tune", "--family", "complete", "--n", "10", "--weight", "0.05", "--eps", "1",
            "--csv",
        ])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&csv.stdout);
    assert!(text.starts_with("name,gamma,p_part,eta_part,total"));
}

#[test]
fn fig2_writes_csv_and_prints_optima() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fig2", "--set", "points=40", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gamma_star"), "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    assert!(csv.starts_with("gamma,p_part,eta_part,total_with_noise,total_without_noise,capi,marker"));
    assert!(csv.contains("gamma_star_eta"));
    assert!(dir.path().join("fig2_config.ini").exists());
}

#[test]
fn experiments_honor_config_file_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.ini");
    std::fs::write(&config, "points = 40\nn = 8\nweight = 0.1\n").unwrap();
    let run = |out_name: &str| {
        let out_dir = dir.path().join(out_name);
        let out = bin()
            .args(["fig2", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("fig2.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b, "same config must give byte-identical CSV");
    let resolved = std::fs::read_to_string(dir.path().join("a").join("fig2_config.ini")).unwrap();
    assert!(resolved.contains("n = 8"));
    assert!(resolved.contains("points = 40"));
}

#[test]
fn density_and_separated_assertions_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["density", "--set", "n=8", "--out"])
        .arg(dir.path().join("density"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin()
        .args(["separated", "--set", "n=16", "--set", "q_max=3", "--out"])
        .arg(dir.path().join("separated"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("separated").join("separated.csv")).unwrap();
    assert!(csv.starts_with("q_p,q_c,p_part,eta_part,total"));
}

#[test]
fn out_dir_env_var_is_honored_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let out = bin()
        .args(["fig3", "--set", "sizes=10,20", "--set", "gammas=2"])
        .env("DAPI_PERF_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("fig3.csv").exists());

    let flag_dir = dir.path().join("from_flag");
    let out = bin()
        .args(["fig3", "--set", "sizes=10,20", "--set", "gammas=2", "--out"])
        .arg(&flag_dir)
        .env("DAPI_PERF_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.join("fig3.csv").exists());
}

#[test]
fn scaling_cli_passes_its_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["scaling", "--set", "size_min=128", "--set", "size_max=512", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("doubling ratios"), "{stdout}");
}

#[test]
fn verify_triangle_without_monte_carlo() {
    let out = bin().args(["verify", "--skip-mc"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "case,closed_form,lyapunov,per_mode,mc_mean,mc_stderr,max_rel_err"
    );
    assert!(lines.count() >= 12);
}

#[test]
fn verify_single_case_with_monte_carlo() {
    let out = bin()
        .args(["verify", "--case", "capi-complete-n10-fig2", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row = stdout.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "capi-complete-n10-fig2");
    assert!(!fields[4].is_empty(), "mc_mean must be populated: {row}");
    assert!(!fields[5].is_empty(), "mc_stderr must be populated: {row}");
}
