//! End-to-end tests through the compiled binary: artifact layout,
//! determinism, exit codes, and the CLI overrides. Every subcommand is
//! exercised once against a real output directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dnflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn dnflow")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small heat problem; `tail` supplies the [command] section body.
fn heat_cfg(tail: &str) -> String {
    format!(
        "[problem]\n\
         p = 2.0\n\
         m = 2.0\n\
         potential = zero\n\
         family = linear\n\
         kappa = 1.0\n\
         lambda = 0.0\n\
         forcing = zero\n\
         \n\
         [grid]\n\
         n = 15\n\
         length = 1.0\n\
         \n\
         [time]\n\
         h_t = 0.01\n\
         t_final = 0.5\n\
         \n\
         [command]\n\
         {tail}\n\
         \n\
         [output]\n\
         directory = unused-out\n\
         seed = 0\n"
    )
}

/// Bistable double well on [0, 4]; `tail` supplies the [command] body.
fn double_well_cfg(tail: &str) -> String {
    format!(
        "[problem]\n\
         p = 2.0\n\
         m = 2.0\n\
         potential = power\n\
         sigma = 4.0\n\
         coefficient = 4.0\n\
         family = cubic_well\n\
         kappa = 4.0\n\
         lambda = 1.0\n\
         forcing = zero\n\
         \n\
         [grid]\n\
         n = 15\n\
         length = 4.0\n\
         \n\
         [time]\n\
         h_t = 0.01\n\
         t_final = 4.0\n\
         \n\
         [command]\n\
         {tail}\n\
         \n\
         [output]\n\
         directory = unused-out\n\
         seed = 0\n"
    )
}

#[test]
fn integrate_writes_the_advertised_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "run.cfg", &heat_cfg("name = integrate\nrule = eigenvector\nscale = 1.0"));
    let out_dir = tmp.path().join("run");

    let out = dnflow(
        &["integrate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote 5 artifacts"), "stdout: {}", stdout(&out));

    for name in ["config_echo.txt", "summary.json", "trajectory.csv", "final_state.csv", "plot.gp"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "integrate");
    assert_eq!(summary["steps"], 50); // ceil(0.5 / 0.01)

    let traj = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        "t, phi, phi1, phi2, lp_norm_p, psi_step, residual"
    );
    assert_eq!(traj.lines().count(), 52); // header + 51 samples

    // The echo is the canonical rendering with overrides applied.
    let echo = std::fs::read_to_string(out_dir.join("config_echo.txt")).unwrap();
    assert!(echo.contains("name = integrate"));
    assert!(echo.contains(&format!("directory = {}", out_dir.display())));
}

#[test]
fn reruns_are_byte_identical_and_the_seed_override_matters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "run.cfg",
        &heat_cfg("name = integrate\nrule = random_fourier\namplitude = 0.5\nmodes = 4"),
    );
    let run = |dir: &str, extra: &[&str]| {
        let out_dir = tmp.path().join(dir);
        let mut args = vec!["integrate", "--config", cfg.to_str().unwrap(), "--out"];
        let out_s = out_dir.to_str().unwrap().to_owned();
        args.push(&out_s);
        args.extend_from_slice(extra);
        let out = dnflow(&args, tmp.path());
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        std::fs::read(out_dir.join("trajectory.csv")).unwrap()
    };

    let a = run("a", &[]);
    let b = run("b", &[]);
    assert_eq!(a, b, "same config and seed must reproduce bytes exactly");

    let c = run("c", &["--seed", "1"]);
    assert_ne!(a, c, "a different seed must change the random initial state");
}

#[test]
fn output_directory_comes_from_the_config_unless_overridden() {
    let tmp = TempDir::new().unwrap();
    let dir_a = tmp.path().join("from-config");
    let body = heat_cfg("name = integrate\nrule = zero")
        .replace("directory = unused-out", &format!("directory = {}", dir_a.display()));
    let cfg = write_cfg(tmp.path(), "run.cfg", &body);

    let out = dnflow(&["integrate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(dir_a.join("summary.json").is_file());

    let dir_b = tmp.path().join("override");
    let out = dnflow(
        &["integrate", "--config", cfg.to_str().unwrap(), "--out", dir_b.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(dir_b.join("summary.json").is_file());
}

#[test]
fn misspelled_key_is_rejected_with_its_line() {
    let tmp = TempDir::new().unwrap();
    let body = heat_cfg("name = integrate\nrule = zero").replace("length = 1.0", "lenght = 1.0");
    let expected_line = body.lines().position(|l| l.starts_with("lenght")).unwrap() + 1;
    let cfg = write_cfg(tmp.path(), "bad.cfg", &body);

    let out = dnflow(&["integrate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains(&format!("line {expected_line}")), "stderr: {msg}");
    assert!(msg.contains("grid.lenght"), "stderr: {msg}");
}

#[test]
fn subcommand_must_match_the_configured_command() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "run.cfg", &heat_cfg("name = integrate\nrule = zero"));

    let out = dnflow(&["diagnose", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("config declares command \"integrate\" but \"diagnose\" was requested"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn missing_config_file_is_an_io_failure() {
    let tmp = TempDir::new().unwrap();
    let out = dnflow(&["integrate", "--config", "no-such-file.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("no-such-file.cfg"), "stderr: {}", stderr(&out));
}

#[test]
fn sweep_reports_the_bracket_and_blowups_are_not_failures() {
    // lambda_1 for n = 15 on [0, 1] is about 9.84, so 5 stays bounded
    // and 25 blows up.
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "run.cfg",
        &heat_cfg("name = sweep\nstrengths = 5.0, 25.0\nrule = eigenvector\nscale = 1.0")
            .replace("t_final = 0.5", "t_final = 3.0"),
    );
    let out_dir = tmp.path().join("sweep");

    let out = dnflow(
        &["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(
        stdout(&out).contains("largest bounded gain: 5.0, smallest blow-up gain: 25.0"),
        "stdout: {}",
        stdout(&out)
    );
    assert!(out_dir.join("sweep.csv").is_file());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["entries"][0]["bounded"], true);
    assert_eq!(summary["entries"][1]["bounded"], false);
    assert_eq!(summary["ordered"], true);
}

#[test]
fn failing_gated_condition_exits_4_but_still_writes_reports() {
    // gradient_power with q2 = 3 grows too fast for the velocity bound,
    // so the growth condition fails while the report set is complete.
    let tmp = TempDir::new().unwrap();
    let body = heat_cfg("name = diagnose\nsamples = 24\neps = 0.05")
        .replace("family = linear\nkappa = 1.0", "family = gradient_power\nkappa = 1.0\nq2 = 3.0");
    let cfg = write_cfg(tmp.path(), "run.cfg", &body);
    let out_dir = tmp.path().join("diag");

    let out = dnflow(
        &["diagnose", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr(&out));
    assert!(out_dir.join("conditions.json").is_file());
    assert!(stderr(&out).contains("perturbation_growth"), "stderr: {}", stderr(&out));

    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("conditions.json")).unwrap()).unwrap();
    assert!(reports.as_array().map(|a| a.len() >= 4).unwrap_or(false));
}

#[test]
fn diagnose_passes_on_the_double_well() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "run.cfg", &double_well_cfg("name = diagnose\nsamples = 24\neps = 0.05"));
    let out_dir = tmp.path().join("diag");

    let out = dnflow(
        &["diagnose", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rate_coercivity\": holds") || text.contains("\"rate_coercivity\": holds"), "stdout: {text}");
    assert!(text.contains("attractor for all lambda"), "stdout: {text}");
}

#[test]
fn bundle_writes_entry_times() {
    let tmp = TempDir::new().unwrap();
    let tail = "name = bundle\ncount = 4\nrule = random_fourier\namplitude = 0.5\nmodes = 4\nsigma_w = 1.0\nradius = 5.0";
    let cfg = write_cfg(tmp.path(), "run.cfg", &double_well_cfg(tail));
    let out_dir = tmp.path().join("bundle");

    let out = dnflow(
        &["bundle", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for name in ["lyapunov.csv", "entry_times.csv", "plot.gp"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let entries = std::fs::read_to_string(out_dir.join("entry_times.csv")).unwrap();
    assert_eq!(entries.lines().count(), 5); // header + one row per member
}

#[test]
fn omega_writes_representatives_and_the_attraction_curve() {
    let tmp = TempDir::new().unwrap();
    let tail = "name = omega\ncount = 4\nrule = random_fourier\namplitude = 0.6\nmodes = 4\nt_tail = 3.0\ncluster_eps = 0.5";
    let cfg = write_cfg(tmp.path(), "run.cfg", &double_well_cfg(tail));
    let out_dir = tmp.path().join("omega");

    let out = dnflow(
        &["omega", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for name in ["omega_reps.csv", "attraction_curve.csv", "plot.gp"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let reps = summary["representatives"].as_u64().unwrap();
    assert!(reps >= 1, "expected at least one representative, got {reps}");
}
