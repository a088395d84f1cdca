use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use dnflow::config::{parse_config, RunConfig};
use dnflow::runner::{exit_code, run_command};

/// Minimizing-movement integrator and attractor toolkit for doubly
/// nonlinear gradient flows on a 1-D Dirichlet grid.
#[derive(Parser)]
#[command(name = "dnflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and record its energy series.
    Integrate(RunArgs),
    /// Check the structural conditions of the configured problem.
    Diagnose(RunArgs),
    /// Integrate a trajectory bundle and report absorbing entry times.
    Bundle(RunArgs),
    /// Sweep the perturbation gain and bracket the blow-up threshold.
    Sweep(RunArgs),
    /// Cluster bundle tails into an omega-limit approximation.
    Omega(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the config's output.seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Integrate(_) => "integrate",
            Command::Diagnose(_) => "diagnose",
            Command::Bundle(_) => "bundle",
            Command::Sweep(_) => "sweep",
            Command::Omega(_) => "omega",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Integrate(a)
            | Command::Diagnose(a)
            | Command::Bundle(a)
            | Command::Sweep(a)
            | Command::Omega(a) => a,
        }
    }
}

fn load(cmd: &Command) -> Result<RunConfig, (i32, String)> {
    let args = cmd.args();
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| (5, format!("{}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| (2, e.to_string()))?;
    if cfg.command.name() != cmd.name() {
        return Err((
            2,
            format!(
                "config declares command \"{}\" but \"{}\" was requested",
                cfg.command.name(),
                cmd.name()
            ),
        ));
    }
    if let Some(out) = &args.out {
        cfg.directory = out.display().to_string();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let cfg = match load(&cli.command) {
        Ok(cfg) => cfg,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            exit(code);
        }
    };
    match run_command(&cfg) {
        Ok(report) => {
            println!(
                "wrote {} artifacts to {}",
                report.artifacts.len(),
                report.dir.display()
            );
            match cfg.command.name() {
                "sweep" => {
                    let b = &report.summary["bounded_max"];
                    let u = &report.summary["blowup_min"];
                    println!("largest bounded gain: {b}, smallest blow-up gain: {u}");
                }
                "diagnose" => {
                    if let Some(reports) = report.summary["conditions"].as_array() {
                        for r in reports {
                            let verdict = if r["holds"].as_bool().unwrap_or(false) {
                                "holds"
                            } else {
                                "FAILS"
                            };
                            match r["classification"].as_str() {
                                Some(c) => println!("{}: {verdict} ({c})", r["condition"]),
                                None => println!("{}: {verdict}", r["condition"]),
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(exit_code(&e));
        }
    }
}
