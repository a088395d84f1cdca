//! Command execution and run artifacts.
//!
//! Every run owns one directory. Files are written whole to a temp name
//! and renamed into place, so a crash never leaves a truncated artifact.
//! All CSV floats use the shortest round-trip decimal form; reruns of the
//! same config and seed produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::attractor::{
    absorbing_entry, attraction_curve, lambda_sweep, omega_limit, run_bundle, AttractorError,
    SweepOutcome,
};
use crate::config::{render, CommandSpec, RunConfig};
use crate::diagnostics::{fit_dissipation, standard_reports, DiagnosticsError};
use crate::grid::{dirichlet_principal_eigenvalue, lp_pow_p};
use crate::stepper::{integrate, IntegrateError, SpecError, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid problem: {0}")]
    Spec(#[from] SpecError),
    #[error("solver failure: {0}")]
    Integrate(#[from] IntegrateError),
    #[error("bundle failure: {0}")]
    Attractor(#[from] AttractorError),
    #[error("required conditions failed: {}", failed.join(", "))]
    ConditionsFailed { failed: Vec<String> },
    #[error("no absorbing radius available: {0}")]
    Dissipation(#[from] DiagnosticsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifacts in {}: expected {}", dir.display(), expected.join(", "))]
    MissingArtifacts { dir: PathBuf, expected: Vec<String> },
}

/// Process exit code for a failed run: 2 config, 3 solver, 4 failed
/// condition check, 5 I/O. (Blow-ups found by a sweep are results, not
/// failures, and exit 0.)
pub fn exit_code(e: &RunError) -> i32 {
    match e {
        RunError::Spec(_) => 2,
        RunError::Integrate(_) => 3,
        RunError::Attractor(AttractorError::Member { .. }) => 3,
        RunError::Attractor(_) => 2,
        RunError::ConditionsFailed { .. } | RunError::Dissipation(_) => 4,
        RunError::Io { .. } | RunError::MissingArtifacts { .. } => 5,
    }
}

pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Value,
    pub artifacts: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp-{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn trajectory_csv(traj: &Trajectory, p: f64) -> String {
    let mut s = String::from("t, phi, phi1, phi2, lp_norm_p, psi_step, residual\n");
    for k in 0..traj.times.len() {
        let e = &traj.energies[k];
        let residual = if k == 0 { 0.0 } else { traj.steps[k - 1].residual };
        s.push_str(&format!(
            "{:?}, {:?}, {:?}, {:?}, {:?}, {:?}, {:?}\n",
            traj.times[k],
            e.phi,
            e.phi1,
            e.phi2,
            e.lp_pow_p.powf(1.0 / p),
            e.psi_step,
            residual,
        ));
    }
    s
}

fn state_csv(traj: &Trajectory) -> String {
    let grid = traj.grid;
    let u = traj.final_state();
    let mut s = String::from("x, u\n");
    for k in 0..grid.n() {
        s.push_str(&format!("{:?}, {:?}\n", grid.node(k), u.values()[k]));
    }
    s
}

pub fn run_command(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let dir = PathBuf::from(&cfg.directory);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let echo = render(cfg);
    write_atomic(&dir.join("config_echo.txt"), echo.as_bytes())?;

    let spec = cfg.build_spec()?;
    let mut artifacts = vec!["config_echo.txt".to_string(), "summary.json".to_string()];
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), json!(cfg.command.name()));
    summary.insert("config".into(), json!(echo));
    summary.insert("seed".into(), json!(cfg.seed));
    let mut failed_conditions: Vec<String> = Vec::new();

    match &cfg.command {
        CommandSpec::Integrate { rule } => {
            let u0 = rule.realize(cfg.seed).realize(spec.grid, 0);
            let traj = integrate(&spec, &u0, cfg.t_final)?;
            write_atomic(&dir.join("trajectory.csv"), trajectory_csv(&traj, cfg.p).as_bytes())?;
            write_atomic(&dir.join("final_state.csv"), state_csv(&traj).as_bytes())?;
            artifacts.extend(["trajectory.csv".into(), "final_state.csv".into(), "plot.gp".into()]);
            let fit = fit_dissipation(&traj, 1.0).ok();
            let max_residual = traj
                .steps
                .iter()
                .map(|s| s.residual)
                .fold(0.0, f64::max);
            summary.insert("steps".into(), json!(traj.step_count()));
            summary.insert("h_t".into(), num(cfg.h_t));
            summary.insert("t_final".into(), num(cfg.t_final));
            summary.insert("max_residual".into(), num(max_residual));
            summary.insert("phi_0".into(), num(traj.energies[0].phi));
            summary.insert(
                "final".into(),
                json!({
                    "phi": num(traj.energies.last().unwrap().phi),
                    "lp_norm_p": num(lp_pow_p(traj.final_state(), cfg.p).powf(1.0 / cfg.p)),
                }),
            );
            summary.insert(
                "dissipation".into(),
                match &fit {
                    Some(f) => serde_json::to_value(f).unwrap(),
                    None => Value::Null,
                },
            );
        }
        CommandSpec::Diagnose { samples, eps } => {
            let reports = standard_reports(&spec, *samples, *eps);
            let body = serde_json::to_string_pretty(&reports).unwrap();
            write_atomic(&dir.join("conditions.json"), body.as_bytes())?;
            artifacts.push("conditions.json".into());
            const GATED: [&str; 3] = ["rate_coercivity", "perturbation_growth", "ellipticity"];
            for r in &reports {
                if GATED.contains(&r.condition.as_str()) && !r.holds {
                    failed_conditions.push(r.condition.clone());
                }
            }
            summary.insert(
                "conditions".into(),
                Value::Array(
                    reports
                        .iter()
                        .map(|r| {
                            json!({
                                "condition": r.condition,
                                "holds": r.holds,
                                "classification": r.classification,
                            })
                        })
                        .collect(),
                ),
            );
            summary.insert("all_gated_hold".into(), json!(failed_conditions.is_empty()));
        }
        CommandSpec::Bundle { count, rule, sigma_w, radius } => {
            let bundle = run_bundle(&rule.realize(cfg.seed), *count, &spec, cfg.t_final)?;
            let radius = match radius {
                Some(r) => *r,
                None => fit_dissipation(&bundle.trajectories[0], *sigma_w)?.radius,
            };
            let entries = absorbing_entry(&bundle, radius, *sigma_w);
            let mut lyap = String::from("t");
            for i in 0..*count {
                lyap.push_str(&format!(", member_{i}"));
            }
            lyap.push('\n');
            let series: Vec<Vec<f64>> = bundle
                .trajectories
                .iter()
                .map(|t| t.lyapunov_series(*sigma_w))
                .collect();
            for k in 0..bundle.trajectories[0].times.len() {
                lyap.push_str(&format!("{:?}", bundle.trajectories[0].times[k]));
                for s in &series {
                    lyap.push_str(&format!(", {:?}", s[k]));
                }
                lyap.push('\n');
            }
            write_atomic(&dir.join("lyapunov.csv"), lyap.as_bytes())?;
            let mut ecsv = String::from("member, entry_time\n");
            for (i, e) in entries.iter().enumerate() {
                if e.is_finite() {
                    ecsv.push_str(&format!("{i}, {e:?}\n"));
                } else {
                    ecsv.push_str(&format!("{i}, inf\n"));
                }
            }
            write_atomic(&dir.join("entry_times.csv"), ecsv.as_bytes())?;
            artifacts.extend(["lyapunov.csv".into(), "entry_times.csv".into(), "plot.gp".into()]);
            summary.insert("count".into(), json!(count));
            summary.insert("radius".into(), num(radius));
            summary.insert("sigma_w".into(), num(*sigma_w));
            summary.insert(
                "entry_times".into(),
                Value::Array(entries.iter().map(|e| num(*e)).collect()),
            );
        }
        CommandSpec::Sweep { strengths, rule, cap } => {
            let report = lambda_sweep(&spec, strengths, &rule.realize(cfg.seed), cfg.t_final, *cap);
            let mut csv =
                String::from("strength, bounded, terminal_lyapunov, blowup_time, solver_failed\n");
            for e in &report.entries {
                match e.outcome {
                    SweepOutcome::Bounded { terminal_lyapunov, .. } => csv.push_str(&format!(
                        "{:?}, 1, {:?}, , 0\n",
                        e.strength, terminal_lyapunov
                    )),
                    SweepOutcome::BlowUp { time, solver_failed } => csv.push_str(&format!(
                        "{:?}, 0, , {:?}, {}\n",
                        e.strength,
                        time,
                        solver_failed as u8
                    )),
                }
            }
            write_atomic(&dir.join("sweep.csv"), csv.as_bytes())?;
            artifacts.extend(["sweep.csv".into(), "plot.gp".into()]);
            summary.insert(
                "entries".into(),
                Value::Array(
                    report
                        .entries
                        .iter()
                        .map(|e| match e.outcome {
                            SweepOutcome::Bounded { max_lyapunov, terminal_lyapunov } => json!({
                                "strength": num(e.strength),
                                "bounded": true,
                                "max_lyapunov": num(max_lyapunov),
                                "terminal_lyapunov": num(terminal_lyapunov),
                            }),
                            SweepOutcome::BlowUp { time, solver_failed } => json!({
                                "strength": num(e.strength),
                                "bounded": false,
                                "blowup_time": num(time),
                                "solver_failed": solver_failed,
                            }),
                        })
                        .collect(),
                ),
            );
            summary.insert(
                "bounded_max".into(),
                report.bounded_max.map(num).unwrap_or(Value::Null),
            );
            summary.insert(
                "blowup_min".into(),
                report.blowup_min.map(num).unwrap_or(Value::Null),
            );
            summary.insert("ordered".into(), json!(report.ordered));
            summary.insert(
                "eigenvalue_ref".into(),
                num(dirichlet_principal_eigenvalue(spec.grid)),
            );
        }
        CommandSpec::Omega { count, rule, t_tail, cluster_eps } => {
            let bundle = run_bundle(&rule.realize(cfg.seed), *count, &spec, cfg.t_final)?;
            let omega = omega_limit(&bundle, *t_tail, *cluster_eps)?;
            let mut reps = String::from("rep, x, u\n");
            for (r, u) in omega.representatives.iter().enumerate() {
                for k in 0..spec.grid.n() {
                    reps.push_str(&format!(
                        "{r}, {:?}, {:?}\n",
                        spec.grid.node(k),
                        u.values()[k]
                    ));
                }
            }
            write_atomic(&dir.join("omega_reps.csv"), reps.as_bytes())?;
            let samples: Vec<f64> = (0..=32)
                .map(|i| {
                    let t = cfg.t_final * i as f64 / 32.0;
                    (t / cfg.h_t).round() * cfg.h_t
                })
                .collect();
            let curve = attraction_curve(&bundle, &omega, &samples)?;
            let mut ccsv = String::from("t, dist\n");
            for (t, d) in curve.times.iter().zip(&curve.dists) {
                ccsv.push_str(&format!("{t:?}, {d:?}\n"));
            }
            write_atomic(&dir.join("attraction_curve.csv"), ccsv.as_bytes())?;
            artifacts.extend([
                "omega_reps.csv".into(),
                "attraction_curve.csv".into(),
                "plot.gp".into(),
            ]);
            summary.insert("count".into(), json!(count));
            summary.insert("t_tail".into(), num(*t_tail));
            summary.insert("cluster_eps".into(), num(*cluster_eps));
            summary.insert("representatives".into(), json!(omega.representatives.len()));
            summary.insert(
                "radii".into(),
                Value::Array(omega.radii.iter().map(|r| num(*r)).collect()),
            );
            summary.insert("monotone_tail".into(), json!(curve.monotone_tail));
            summary.insert(
                "final_dist".into(),
                num(*curve.dists.last().unwrap_or(&f64::NAN)),
            );
        }
    }

    summary.insert(
        "artifacts".into(),
        Value::Array(artifacts.iter().map(|a| json!(a)).collect()),
    );
    let summary = Value::Object(summary);
    let body = serde_json::to_string_pretty(&summary).unwrap();
    write_atomic(&dir.join("summary.json"), body.as_bytes())?;

    if !matches!(cfg.command, CommandSpec::Diagnose { .. }) {
        emit_plot_script(&dir)?;
    }

    if !failed_conditions.is_empty() {
        return Err(RunError::ConditionsFailed { failed: failed_conditions });
    }
    Ok(RunReport { dir, summary, artifacts })
}

fn require_artifacts(dir: &Path, names: &[&str]) -> Result<(), RunError> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !dir.join(n).is_file())
        .map(|n| n.to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(RunError::MissingArtifacts { dir: dir.to_path_buf(), expected: missing })
    }
}

/// Writes `plot.gp`, a gnuplot script over the run's artifacts, referencing
/// them by relative path. The script kind follows the summary's command.
pub fn emit_plot_script(dir: &Path) -> Result<PathBuf, RunError> {
    require_artifacts(dir, &["summary.json"])?;
    let path = dir.join("summary.json");
    let body = fs::read_to_string(&path).map_err(io_err(&path))?;
    let summary: Value = serde_json::from_str(&body).map_err(|e| RunError::Io {
        path: path.clone(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    let command = summary["command"].as_str().unwrap_or("");
    let mut s = String::from(
        "set datafile separator ','\nset terminal pngcairo size 960,640\nset grid\n",
    );
    match command {
        "integrate" => {
            require_artifacts(dir, &["trajectory.csv", "final_state.csv"])?;
            s.push_str("set output 'energy.png'\nset xlabel 't'\nset ylabel 'phi'\n");
            let overlay = summary["dissipation"].as_object().and_then(|d| {
                Some((
                    d.get("beta")?.as_f64()?,
                    d.get("F")?.as_f64()?,
                    summary["phi_0"].as_f64()?,
                ))
            });
            match overlay {
                Some((beta, f_bound, phi0)) => s.push_str(&format!(
                    "plot 'trajectory.csv' using 1:2 with lines title 'phi(t)', \\\n     {:?} / {:?} + {:?} * exp(-{:?} * x) with lines dashtype 2 title 'fitted bound'\n",
                    f_bound, beta, phi0, beta
                )),
                None => s.push_str(
                    "plot 'trajectory.csv' using 1:2 with lines title 'phi(t)'\n",
                ),
            }
            s.push_str(
                "set output 'final_state.png'\nset xlabel 'x'\nset ylabel 'u'\nplot 'final_state.csv' using 1:2 with lines title 'u(T)'\n",
            );
        }
        "bundle" => {
            require_artifacts(dir, &["lyapunov.csv", "entry_times.csv"])?;
            let count = summary["count"].as_u64().unwrap_or(1);
            let radius = summary["radius"].as_f64().unwrap_or(0.0);
            s.push_str(&format!(
                "set output 'lyapunov.png'\nset xlabel 't'\nset ylabel 'lyapunov'\nplot for [i=2:{}] 'lyapunov.csv' using 1:i with lines notitle, \\\n     {:?} with lines dashtype 2 title 'absorbing radius'\n",
                count + 1,
                radius
            ));
        }
        "sweep" => {
            require_artifacts(dir, &["sweep.csv"])?;
            let lam = summary["eigenvalue_ref"].as_f64().unwrap_or(0.0);
            s.push_str(&format!(
                "set output 'sweep.png'\nset xlabel 'gain'\nset ylabel 'terminal lyapunov'\nset arrow from {lam:?}, graph 0 to {lam:?}, graph 1 nohead dashtype 2\nplot 'sweep.csv' using 1:3 with points pointtype 7 title 'bounded runs'\n"
            ));
        }
        "omega" => {
            require_artifacts(dir, &["attraction_curve.csv", "omega_reps.csv"])?;
            s.push_str(
                "set output 'attraction.png'\nset xlabel 't'\nset ylabel 'dist'\nplot 'attraction_curve.csv' using 1:2 with linespoints title 'dist to omega set'\n",
            );
            let reps = summary["representatives"].as_u64().unwrap_or(1);
            s.push_str(&format!(
                "set output 'omega_reps.png'\nset xlabel 'x'\nset ylabel 'u'\nplot for [r=0:{}] 'omega_reps.csv' using ($1 == r ? $2 : 1/0):3 with lines title sprintf('rep %d', r)\n",
                reps.saturating_sub(1)
            ));
        }
        other => {
            return Err(RunError::MissingArtifacts {
                dir: dir.to_path_buf(),
                expected: vec![format!("plottable artifacts for command \"{other}\"")],
            })
        }
    }
    let out = dir.join("plot.gp");
    write_atomic(&out, s.as_bytes())?;
    Ok(out)
}
