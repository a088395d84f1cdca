//! Run configuration: a strict sectioned key = value format.
//!
//! Strict means: unknown sections, unknown keys, keys that do not apply to
//! the selected variant, and duplicate keys are all errors, each reported
//! with its line number and key path. Defaults are applied at parse time
//! and materialize in the returned value, so `render` echoes a canonical
//! config that reparses to an equal value.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::attractor::InitialRule;
use crate::functionals::{ConvexPotential, PerturbationFamily};
use crate::grid::{Grid1D, GridFunction};
use crate::stepper::{ProblemSpec, SpecError, StepMode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{path}: {message}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

fn err<T>(line: Option<usize>, path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, path: path.to_string(), message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    Zero,
    Constant { value: f64 },
    Sine { mode: usize, amplitude: f64 },
}

impl Forcing {
    pub fn realize(&self, grid: Grid1D) -> GridFunction {
        match self {
            Forcing::Zero => GridFunction::zero(grid),
            Forcing::Constant { value } => GridFunction::from_fn(grid, |_| *value),
            Forcing::Sine { mode, amplitude } => {
                let k = *mode as f64;
                let length = grid.length();
                GridFunction::from_fn(grid, |x| {
                    amplitude * (k * std::f64::consts::PI * x / length).sin()
                })
            }
        }
    }
}

/// Initial-state rule as configured; the seed is supplied by the output
/// section (or the CLI override) when the rule is realized.
#[derive(Clone, Debug, PartialEq)]
pub enum RuleSpec {
    Zero,
    Eigenvector { scale: f64 },
    RandomFourier { amplitude: f64, modes: usize },
}

impl RuleSpec {
    pub fn realize(&self, seed: u64) -> InitialRule {
        match self {
            RuleSpec::Zero => InitialRule::Zero,
            RuleSpec::Eigenvector { scale } => InitialRule::Eigenvector { scale: *scale },
            RuleSpec::RandomFourier { amplitude, modes } => InitialRule::RandomFourier {
                amplitude: *amplitude,
                modes: *modes,
                seed,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CommandSpec {
    Integrate { rule: RuleSpec },
    Diagnose { samples: usize, eps: f64 },
    Bundle { count: usize, rule: RuleSpec, sigma_w: f64, radius: Option<f64> },
    Sweep { strengths: Vec<f64>, rule: RuleSpec, cap: Option<f64> },
    Omega { count: usize, rule: RuleSpec, t_tail: f64, cluster_eps: f64 },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Integrate { .. } => "integrate",
            CommandSpec::Diagnose { .. } => "diagnose",
            CommandSpec::Bundle { .. } => "bundle",
            CommandSpec::Sweep { .. } => "sweep",
            CommandSpec::Omega { .. } => "omega",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub p: f64,
    pub m: f64,
    pub potential: ConvexPotential,
    pub family: PerturbationFamily,
    pub lambda: f64,
    pub forcing: Forcing,
    pub n: usize,
    pub length: f64,
    pub h_t: f64,
    pub t_final: f64,
    pub mode: StepMode,
    pub command: CommandSpec,
    pub directory: String,
    pub seed: u64,
}

impl RunConfig {
    pub fn build_spec(&self) -> Result<ProblemSpec, SpecError> {
        let grid = Grid1D::new(self.n, self.length);
        let f = self.forcing.realize(grid);
        Ok(ProblemSpec::new(
            grid,
            self.p,
            self.m,
            self.potential.clone(),
            self.family.clone(),
            self.lambda,
            f,
            self.h_t,
        )?
        .with_mode(self.mode))
    }

    pub fn step_count(&self) -> usize {
        (self.t_final / self.h_t).ceil() as usize
    }
}

struct Entry {
    line: usize,
    value: String,
    taken: bool,
}

struct Section {
    name: &'static str,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.taken = true;
            (e.line, e.value.clone())
        })
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<(usize, f64)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some((line, x))),
                _ => err(Some(line), &self.path(key), format!("expected a finite number, got \"{v}\"")),
            },
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<(usize, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<usize>() {
                Ok(x) => Ok(Some((line, x))),
                Err(_) => err(Some(line), &self.path(key), format!("expected a non-negative integer, got \"{v}\"")),
            },
        }
    }

    fn require_f64(&mut self, key: &str) -> Result<(usize, f64), ConfigError> {
        self.f64(key)?
            .ok_or_else(|| ConfigError {
                line: Some(self.line),
                path: self.path(key),
                message: "missing required key".into(),
            })
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (key, entry) in &self.entries {
            if !entry.taken {
                return err(
                    Some(entry.line),
                    &self.path(key),
                    "unknown or inapplicable key",
                );
            }
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<&'static str, Section>, ConfigError> {
    const NAMES: [&str; 5] = ["problem", "grid", "time", "command", "output"];
    let mut sections: BTreeMap<&'static str, Section> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            let canonical = NAMES.iter().find(|&&n| n == name).copied();
            match canonical {
                None => return err(Some(lineno), name, "unknown section"),
                Some(n) => {
                    if sections.contains_key(n) {
                        return err(Some(lineno), n, "section appears twice");
                    }
                    sections.insert(
                        n,
                        Section { name: n, line: lineno, entries: BTreeMap::new() },
                    );
                    current = Some(n);
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(Some(lineno), "", "expected \"key = value\" or \"[section]\"");
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(sec) = current else {
            return err(Some(lineno), &key, "key before any [section] header");
        };
        let section = sections.get_mut(sec).unwrap();
        if section.entries.contains_key(&key) {
            return err(Some(lineno), &format!("{sec}.{key}"), "duplicate key");
        }
        section.entries.insert(key, Entry { line: lineno, value, taken: false });
    }
    for name in ["problem", "grid", "time", "command", "output"] {
        if !sections.contains_key(name) {
            return err(None, name, "missing required section");
        }
    }
    Ok(sections)
}

fn parse_potential(sec: &mut Section) -> Result<ConvexPotential, ConfigError> {
    let (line, kind) = match sec.take("potential") {
        Some(v) => v,
        None => (sec.line, "zero".to_string()),
    };
    match kind.as_str() {
        "zero" => Ok(ConvexPotential::Zero),
        "power" => {
            let (sl, sigma) = sec.require_f64("sigma")?;
            if sigma < 1.0 {
                return err(Some(sl), "problem.sigma", format!("power exponent must be >= 1, got {sigma}"));
            }
            let c_j = sec.f64("coefficient")?.map(|(_, v)| v).unwrap_or(1.0);
            if c_j < 0.0 {
                return err(Some(line), "problem.coefficient", "coefficient must be >= 0");
            }
            Ok(ConvexPotential::Power { sigma, c_j })
        }
        "indicator" => {
            let (ll, a) = sec.require_f64("lower")?;
            let (_, b) = sec.require_f64("upper")?;
            if !(a <= 0.0 && 0.0 <= b && a < b) {
                return err(Some(ll), "problem.lower", format!("interval [{a}, {b}] must contain 0 with a < b"));
            }
            Ok(ConvexPotential::IndicatorInterval { a, b })
        }
        other => err(Some(line), "problem.potential", format!("expected zero | power | indicator, got \"{other}\"")),
    }
}

fn parse_family(sec: &mut Section) -> Result<PerturbationFamily, ConfigError> {
    let (line, kind) = match sec.take("family") {
        Some(v) => v,
        None => (sec.line, "linear".to_string()),
    };
    let kappa = sec.f64("kappa")?.map(|(_, v)| v).unwrap_or(0.0);
    match kind.as_str() {
        "linear" => Ok(PerturbationFamily::Linear { kappa }),
        "cubic_well" => Ok(PerturbationFamily::CubicWell { kappa }),
        "modulated" => {
            let (mdl, mode) = sec.usize("mode")?.unwrap_or((line, 1));
            if mode == 0 || mode > u32::MAX as usize {
                return err(Some(mdl), "problem.mode", "mode must be >= 1");
            }
            Ok(PerturbationFamily::SpatiallyModulated { kappa, mode: mode as u32 })
        }
        "gradient_linear" => Ok(PerturbationFamily::GradientLinear { b: kappa }),
        "gradient_power" => {
            let (ql, q2) = sec.require_f64("q2")?;
            if q2 < 1.0 {
                return err(Some(ql), "problem.q2", format!("growth exponent must be >= 1, got {q2}"));
            }
            Ok(PerturbationFamily::GradientPower { b: kappa, q2 })
        }
        other => err(
            Some(line),
            "problem.family",
            format!("expected linear | cubic_well | modulated | gradient_linear | gradient_power, got \"{other}\""),
        ),
    }
}

fn parse_forcing(sec: &mut Section) -> Result<Forcing, ConfigError> {
    let (line, kind) = match sec.take("forcing") {
        Some(v) => v,
        None => (sec.line, "zero".to_string()),
    };
    match kind.as_str() {
        "zero" => Ok(Forcing::Zero),
        "constant" => {
            let value = sec.require_f64("forcing_value")?.1;
            Ok(Forcing::Constant { value })
        }
        "sine" => {
            let (ml, mode) = sec
                .usize("forcing_mode")?
                .unwrap_or((line, 1));
            if mode == 0 {
                return err(Some(ml), "problem.forcing_mode", "mode must be >= 1");
            }
            let amplitude = sec.f64("forcing_amplitude")?.map(|(_, v)| v).unwrap_or(1.0);
            Ok(Forcing::Sine { mode, amplitude })
        }
        other => err(Some(line), "problem.forcing", format!("expected zero | constant | sine, got \"{other}\"")),
    }
}

fn parse_rule(sec: &mut Section, default: RuleSpec) -> Result<RuleSpec, ConfigError> {
    let (line, kind) = match sec.take("rule") {
        Some(v) => v,
        None => {
            // Rule-detail keys without an explicit rule refine the default.
            match &default {
                RuleSpec::Eigenvector { .. } => (sec.line, "eigenvector".to_string()),
                RuleSpec::RandomFourier { .. } => (sec.line, "random_fourier".to_string()),
                RuleSpec::Zero => (sec.line, "zero".to_string()),
            }
        }
    };
    match kind.as_str() {
        "zero" => Ok(RuleSpec::Zero),
        "eigenvector" => {
            let scale = sec.f64("scale")?.map(|(_, v)| v).unwrap_or(1.0);
            Ok(RuleSpec::Eigenvector { scale })
        }
        "random_fourier" => {
            let amplitude = sec.f64("amplitude")?.map(|(_, v)| v).unwrap_or(1.0);
            let (ml, modes) = sec.usize("modes")?.unwrap_or((line, 8));
            if modes == 0 {
                return err(Some(ml), "command.modes", "modes must be >= 1");
            }
            Ok(RuleSpec::RandomFourier { amplitude, modes })
        }
        other => err(
            Some(line),
            "command.rule",
            format!("expected zero | eigenvector | random_fourier, got \"{other}\""),
        ),
    }
}

fn parse_strengths(line: usize, value: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Result<Vec<f64>, _> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    match parts {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => err(Some(line), "command.strengths", format!("expected a comma-separated list of numbers, got \"{value}\"")),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut sections = split_sections(text)?;

    let mut problem = sections.remove("problem").unwrap();
    let (pl, p) = problem.require_f64("p")?;
    if p < 2.0 {
        return err(Some(pl), "problem.p", format!("rate exponent p must be at least 2, got {p}"));
    }
    let (ml, m) = problem.require_f64("m")?;
    if m <= 1.0 {
        return err(Some(ml), "problem.m", format!("m must exceed 1, got {m}"));
    }
    let potential = parse_potential(&mut problem)?;
    let family = parse_family(&mut problem)?;
    let (laml, lambda) = problem.f64("lambda")?.unwrap_or((problem.line, 0.0));
    if !(0.0..=1.0).contains(&lambda) {
        return err(Some(laml), "problem.lambda", format!("lambda must lie in [0, 1], got {lambda}"));
    }
    let forcing = parse_forcing(&mut problem)?;
    problem.finish()?;

    let mut grid = sections.remove("grid").unwrap();
    let (nl, n) = grid.usize("n")?.ok_or_else(|| ConfigError {
        line: Some(grid.line),
        path: "grid.n".into(),
        message: "missing required key".into(),
    })?;
    if n == 0 {
        return err(Some(nl), "grid.n", "need at least one interior node");
    }
    let (ll, length) = grid.f64("length")?.unwrap_or((grid.line, 1.0));
    if length <= 0.0 {
        return err(Some(ll), "grid.length", format!("length must be positive, got {length}"));
    }
    grid.finish()?;

    let mut time = sections.remove("time").unwrap();
    let (hl, h_t) = time.require_f64("h_t")?;
    if h_t <= 0.0 {
        return err(Some(hl), "time.h_t", format!("step size must be positive, got {h_t}"));
    }
    let (tl, t_final) = time.require_f64("t_final")?;
    if t_final < h_t {
        return err(Some(tl), "time.t_final", format!("horizon must cover at least one step, got {t_final}"));
    }
    let mode = match time.take("mode") {
        None => StepMode::SemiImplicit,
        Some((line, v)) => match v.as_str() {
            "semi_implicit" => StepMode::SemiImplicit,
            "fixed_point" => {
                let max_iter = time.usize("fp_max_iter")?.map(|(_, v)| v).unwrap_or(100);
                let (ftl, tol) = time.f64("fp_tol")?.unwrap_or((line, 1e-10));
                if tol <= 0.0 {
                    return err(Some(ftl), "time.fp_tol", "tolerance must be positive");
                }
                StepMode::FixedPoint { max_iter, tol }
            }
            other => {
                return err(Some(line), "time.mode", format!("expected semi_implicit | fixed_point, got \"{other}\""))
            }
        },
    };
    time.finish()?;

    let mut command = sections.remove("command").unwrap();
    let (cl, name) = command.take("name").ok_or_else(|| ConfigError {
        line: Some(command.line),
        path: "command.name".into(),
        message: "missing required key".into(),
    })?;
    let cmd = match name.as_str() {
        "integrate" => CommandSpec::Integrate { rule: parse_rule(&mut command, RuleSpec::Zero)? },
        "diagnose" => {
            let samples = command.usize("samples")?.map(|(_, v)| v).unwrap_or(48);
            let (el, eps) = command.f64("eps")?.unwrap_or((cl, 0.05));
            if eps <= 0.0 {
                return err(Some(el), "command.eps", "eps must be positive");
            }
            CommandSpec::Diagnose { samples, eps }
        }
        "bundle" => {
            let count = command.usize("count")?.map(|(_, v)| v).unwrap_or(16);
            let rule = parse_rule(
                &mut command,
                RuleSpec::RandomFourier { amplitude: 1.0, modes: 8 },
            )?;
            let (sl, sigma_w) = command.f64("sigma_w")?.unwrap_or((cl, 1.0));
            if sigma_w <= 0.0 {
                return err(Some(sl), "command.sigma_w", "weight must be positive");
            }
            let radius = command.f64("radius")?.map(|(_, v)| v);
            CommandSpec::Bundle { count, rule, sigma_w, radius }
        }
        "sweep" => {
            let (sl, raw) = command.take("strengths").ok_or_else(|| ConfigError {
                line: Some(command.line),
                path: "command.strengths".into(),
                message: "missing required key".into(),
            })?;
            let strengths = parse_strengths(sl, &raw)?;
            let rule = parse_rule(&mut command, RuleSpec::Eigenvector { scale: 1.0 })?;
            let cap = command.f64("cap")?.map(|(_, v)| v);
            CommandSpec::Sweep { strengths, rule, cap }
        }
        "omega" => {
            let count = command.usize("count")?.map(|(_, v)| v).unwrap_or(16);
            let rule = parse_rule(
                &mut command,
                RuleSpec::RandomFourier { amplitude: 1.0, modes: 8 },
            )?;
            let (ttl, t_tail) = command.require_f64("t_tail")?;
            if !(0.0..t_final).contains(&t_tail) {
                return err(Some(ttl), "command.t_tail", format!("tail start must lie in [0, t_final), got {t_tail}"));
            }
            let (cel, cluster_eps) = command.require_f64("cluster_eps")?;
            if cluster_eps <= 0.0 {
                return err(Some(cel), "command.cluster_eps", "cluster radius must be positive");
            }
            CommandSpec::Omega { count, rule, t_tail, cluster_eps }
        }
        other => {
            return err(
                Some(cl),
                "command.name",
                format!("expected integrate | diagnose | bundle | sweep | omega, got \"{other}\""),
            )
        }
    };
    command.finish()?;

    let mut output = sections.remove("output").unwrap();
    let directory = output
        .take("directory")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "out".to_string());
    let seed = match output.take("seed") {
        None => 0,
        Some((line, v)) => v.parse::<u64>().map_err(|_| ConfigError {
            line: Some(line),
            path: "output.seed".into(),
            message: format!("expected an unsigned integer, got \"{v}\""),
        })?,
    };
    output.finish()?;

    Ok(RunConfig {
        p,
        m,
        potential,
        family,
        lambda,
        forcing,
        n,
        length,
        h_t,
        t_final,
        mode,
        command: cmd,
        directory,
        seed,
    })
}

fn push_rule(out: &mut String, rule: &RuleSpec) {
    match rule {
        RuleSpec::Zero => writeln!(out, "rule = zero").unwrap(),
        RuleSpec::Eigenvector { scale } => {
            writeln!(out, "rule = eigenvector").unwrap();
            writeln!(out, "scale = {scale:?}").unwrap();
        }
        RuleSpec::RandomFourier { amplitude, modes } => {
            writeln!(out, "rule = random_fourier").unwrap();
            writeln!(out, "amplitude = {amplitude:?}").unwrap();
            writeln!(out, "modes = {modes}").unwrap();
        }
    }
}

/// Canonical text form: `parse_config(render(cfg)) == cfg`.
pub fn render(cfg: &RunConfig) -> String {
    let mut out = String::new();
    writeln!(out, "[problem]").unwrap();
    writeln!(out, "p = {:?}", cfg.p).unwrap();
    writeln!(out, "m = {:?}", cfg.m).unwrap();
    match &cfg.potential {
        ConvexPotential::Zero => writeln!(out, "potential = zero").unwrap(),
        ConvexPotential::Power { sigma, c_j } => {
            writeln!(out, "potential = power").unwrap();
            writeln!(out, "sigma = {sigma:?}").unwrap();
            writeln!(out, "coefficient = {c_j:?}").unwrap();
        }
        ConvexPotential::IndicatorInterval { a, b } => {
            writeln!(out, "potential = indicator").unwrap();
            writeln!(out, "lower = {a:?}").unwrap();
            writeln!(out, "upper = {b:?}").unwrap();
        }
    }
    match &cfg.family {
        PerturbationFamily::Linear { kappa } => {
            writeln!(out, "family = linear").unwrap();
            writeln!(out, "kappa = {kappa:?}").unwrap();
        }
        PerturbationFamily::CubicWell { kappa } => {
            writeln!(out, "family = cubic_well").unwrap();
            writeln!(out, "kappa = {kappa:?}").unwrap();
        }
        PerturbationFamily::SpatiallyModulated { kappa, mode } => {
            writeln!(out, "family = modulated").unwrap();
            writeln!(out, "kappa = {kappa:?}").unwrap();
            writeln!(out, "mode = {mode}").unwrap();
        }
        PerturbationFamily::GradientLinear { b } => {
            writeln!(out, "family = gradient_linear").unwrap();
            writeln!(out, "kappa = {b:?}").unwrap();
        }
        PerturbationFamily::GradientPower { b, q2 } => {
            writeln!(out, "family = gradient_power").unwrap();
            writeln!(out, "kappa = {b:?}").unwrap();
            writeln!(out, "q2 = {q2:?}").unwrap();
        }
    }
    writeln!(out, "lambda = {:?}", cfg.lambda).unwrap();
    match &cfg.forcing {
        Forcing::Zero => writeln!(out, "forcing = zero").unwrap(),
        Forcing::Constant { value } => {
            writeln!(out, "forcing = constant").unwrap();
            writeln!(out, "forcing_value = {value:?}").unwrap();
        }
        Forcing::Sine { mode, amplitude } => {
            writeln!(out, "forcing = sine").unwrap();
            writeln!(out, "forcing_mode = {mode}").unwrap();
            writeln!(out, "forcing_amplitude = {amplitude:?}").unwrap();
        }
    }
    writeln!(out).unwrap();
    writeln!(out, "[grid]").unwrap();
    writeln!(out, "n = {}", cfg.n).unwrap();
    writeln!(out, "length = {:?}", cfg.length).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[time]").unwrap();
    writeln!(out, "h_t = {:?}", cfg.h_t).unwrap();
    writeln!(out, "t_final = {:?}", cfg.t_final).unwrap();
    match cfg.mode {
        StepMode::SemiImplicit => writeln!(out, "mode = semi_implicit").unwrap(),
        StepMode::FixedPoint { max_iter, tol } => {
            writeln!(out, "mode = fixed_point").unwrap();
            writeln!(out, "fp_max_iter = {max_iter}").unwrap();
            writeln!(out, "fp_tol = {tol:?}").unwrap();
        }
    }
    writeln!(out).unwrap();
    writeln!(out, "[command]").unwrap();
    writeln!(out, "name = {}", cfg.command.name()).unwrap();
    match &cfg.command {
        CommandSpec::Integrate { rule } => push_rule(&mut out, rule),
        CommandSpec::Diagnose { samples, eps } => {
            writeln!(out, "samples = {samples}").unwrap();
            writeln!(out, "eps = {eps:?}").unwrap();
        }
        CommandSpec::Bundle { count, rule, sigma_w, radius } => {
            writeln!(out, "count = {count}").unwrap();
            push_rule(&mut out, rule);
            writeln!(out, "sigma_w = {sigma_w:?}").unwrap();
            if let Some(r) = radius {
                writeln!(out, "radius = {r:?}").unwrap();
            }
        }
        CommandSpec::Sweep { strengths, rule, cap } => {
            let list: Vec<String> = strengths.iter().map(|s| format!("{s:?}")).collect();
            writeln!(out, "strengths = {}", list.join(", ")).unwrap();
            push_rule(&mut out, rule);
            if let Some(c) = cap {
                writeln!(out, "cap = {c:?}").unwrap();
            }
        }
        CommandSpec::Omega { count, rule, t_tail, cluster_eps } => {
            writeln!(out, "count = {count}").unwrap();
            push_rule(&mut out, rule);
            writeln!(out, "t_tail = {t_tail:?}").unwrap();
            writeln!(out, "cluster_eps = {cluster_eps:?}").unwrap();
        }
    }
    writeln!(out).unwrap();
    writeln!(out, "[output]").unwrap();
    writeln!(out, "directory = {}", cfg.directory).unwrap();
    writeln!(out, "seed = {}", cfg.seed).unwrap();
    out
}
