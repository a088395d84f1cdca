//! Trajectory bundles and attractor probes: absorbing-set entry times,
//! omega-limit approximation by tail clustering under the phase metric,
//! Hausdorff semidistance decay, and the critical-gain sweep.
//!
//! The omega-limit here is a sampling approximation: finitely many
//! trajectories, one solution branch per initial state, states observed on
//! the step lattice. Reports should be read with that in mind.

use rayon::prelude::*;

use crate::grid::{metric_dx_cached, principal_eigenvector, Grid1D, GridFunction};
use crate::stepper::{integrate, step, IntegrateError, ProblemSpec, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum AttractorError {
    #[error("bundle member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: IntegrateError,
    },
    #[error("no states at or after t = {t_tail}")]
    EmptyTail { t_tail: f64 },
    #[error("state set is empty")]
    EmptySet,
    #[error("state outside the energy domain")]
    InfiniteEnergy,
}

/// How bundle members pick their initial states. Randomized rules derive
/// the member seed from the rule seed and the member index, so a bundle is
/// reproducible from (rule, count) alone.
#[derive(Clone, Debug)]
pub enum InitialRule {
    Zero,
    Eigenvector { scale: f64 },
    RandomFourier { amplitude: f64, modes: usize, seed: u64 },
    States(Vec<GridFunction>),
}

impl InitialRule {
    pub fn realize(&self, grid: Grid1D, index: usize) -> GridFunction {
        use rand::{Rng, SeedableRng};
        match self {
            InitialRule::Zero => GridFunction::zero(grid),
            InitialRule::Eigenvector { scale } => principal_eigenvector(grid).scaled(*scale),
            InitialRule::RandomFourier { amplitude, modes, seed } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                );
                let m = (*modes).clamp(1, grid.n());
                let decay = 1 + (index % 3) as i32;
                let coeffs: Vec<f64> = (1..=m)
                    .map(|k| rng.gen_range(-1.0..1.0) * (k as f64).powi(-decay))
                    .collect();
                let length = grid.length();
                GridFunction::from_fn(grid, |x| {
                    amplitude
                        * coeffs
                            .iter()
                            .enumerate()
                            .map(|(i, a)| {
                                a * ((i + 1) as f64 * std::f64::consts::PI * x / length).sin()
                            })
                            .sum::<f64>()
                })
            }
            InitialRule::States(list) => list[index % list.len()].clone(),
        }
    }
}

/// A finite sample of the set dynamics: `count` trajectories of one
/// problem over a shared horizon.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub spec: ProblemSpec,
    pub rule: InitialRule,
    pub horizon: f64,
    pub trajectories: Vec<Trajectory>,
}

/// Integrates `count` members concurrently. Failure of any member aborts
/// the bundle and names the member; partial trajectories die with it.
pub fn run_bundle(
    rule: &InitialRule,
    count: usize,
    spec: &ProblemSpec,
    t_final: f64,
) -> Result<Bundle, AttractorError> {
    let results: Vec<Result<Trajectory, IntegrateError>> = (0..count)
        .into_par_iter()
        .map(|i| integrate(spec, &rule.realize(spec.grid, i), t_final))
        .collect();
    let mut trajectories = Vec::with_capacity(count);
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => trajectories.push(t),
            Err(source) => return Err(AttractorError::Member { index, source }),
        }
    }
    Ok(Bundle {
        spec: spec.clone(),
        rule: rule.clone(),
        horizon: t_final,
        trajectories,
    })
}

/// First lattice time from which the Lyapunov value stays at or below `r`
/// through the horizon; infinity if that never happens.
pub fn absorbing_entry(bundle: &Bundle, r: f64, sigma_w: f64) -> Vec<f64> {
    bundle
        .trajectories
        .iter()
        .map(|traj| {
            let series = traj.lyapunov_series(sigma_w);
            let mut last_above: Option<usize> = None;
            for (k, &v) in series.iter().enumerate() {
                if v > r * (1.0 + 1e-12) {
                    last_above = Some(k);
                }
            }
            match last_above {
                None => 0.0,
                Some(k) if k + 1 < series.len() => traj.times[k + 1],
                Some(_) => f64::INFINITY,
            }
        })
        .collect()
}

/// Finite approximation of the omega-limit: cluster representatives of the
/// tail states, every tail state within `cluster_eps` of some
/// representative (in the metric |u - v|_p + |phi(u) - phi(v)|).
#[derive(Clone, Debug)]
pub struct OmegaSet {
    pub representatives: Vec<GridFunction>,
    pub radii: Vec<f64>,
    pub window: (f64, f64),
    pub cluster_eps: f64,
}

struct TailState {
    u: GridFunction,
    phi: f64,
}

/// Greedy leader clustering of all states observed at times >= t_tail,
/// refined by a medoid pass (leaders are kept when the medoid would break
/// the coverage radius) and a merge pass for representatives that ended up
/// within cluster_eps of each other.
pub fn omega_limit(
    bundle: &Bundle,
    t_tail: f64,
    cluster_eps: f64,
) -> Result<OmegaSet, AttractorError> {
    assert!(cluster_eps > 0.0, "cluster radius must be positive");
    let spec = &bundle.spec;
    let p = spec.p;
    let mut tail: Vec<TailState> = Vec::new();
    for traj in &bundle.trajectories {
        for (k, time) in traj.times.iter().enumerate() {
            if *time >= t_tail - 1e-12 {
                tail.push(TailState {
                    u: traj.states[k].clone(),
                    phi: traj.energies[k].phi,
                });
            }
        }
    }
    if tail.is_empty() {
        return Err(AttractorError::EmptyTail { t_tail });
    }
    if tail.iter().any(|t| !t.phi.is_finite()) {
        return Err(AttractorError::InfiniteEnergy);
    }

    let dist =
        |a: &TailState, b: &TailState| metric_dx_cached(&a.u, &b.u, p, a.phi, b.phi);

    // Leader pass.
    let mut leaders: Vec<usize> = Vec::new();
    let mut member_of: Vec<usize> = vec![0; tail.len()];
    for i in 0..tail.len() {
        let mut best: Option<(usize, f64)> = None;
        for (c, &l) in leaders.iter().enumerate() {
            let d = dist(&tail[i], &tail[l]);
            if d <= cluster_eps && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        match best {
            Some((c, _)) => member_of[i] = c,
            None => {
                member_of[i] = leaders.len();
                leaders.push(i);
            }
        }
    }

    // Medoid pass: per cluster, the member minimizing the maximum distance
    // to a subsample of its cluster; adopted only if it still covers every
    // member within cluster_eps.
    let mut reps: Vec<usize> = leaders.clone();
    for c in 0..leaders.len() {
        let members: Vec<usize> = (0..tail.len()).filter(|&i| member_of[i] == c).collect();
        if members.len() < 3 {
            continue;
        }
        let stride = members.len().div_ceil(256);
        let sample: Vec<usize> = members.iter().copied().step_by(stride).collect();
        let mut best = (reps[c], f64::INFINITY);
        for &cand in &sample {
            let worst = sample
                .iter()
                .map(|&j| dist(&tail[cand], &tail[j]))
                .fold(0.0, f64::max);
            if worst < best.1 {
                best = (cand, worst);
            }
        }
        let covers = members
            .iter()
            .all(|&j| dist(&tail[best.0], &tail[j]) <= cluster_eps);
        if covers {
            reps[c] = best.0;
        }
    }

    // Merge representatives that violate pairwise separation, keeping
    // coverage intact.
    let mut keep: Vec<bool> = vec![true; reps.len()];
    for i in 0..reps.len() {
        if !keep[i] {
            continue;
        }
        for j in (i + 1)..reps.len() {
            if !keep[j] {
                continue;
            }
            if dist(&tail[reps[i]], &tail[reps[j]]) <= cluster_eps {
                let absorbable = (0..tail.len())
                    .filter(|&s| member_of[s] == j)
                    .all(|s| dist(&tail[reps[i]], &tail[s]) <= cluster_eps);
                if absorbable {
                    keep[j] = false;
                    for s in 0..tail.len() {
                        if member_of[s] == j {
                            member_of[s] = i;
                        }
                    }
                }
            }
        }
    }

    let mut representatives = Vec::new();
    let mut radii = Vec::new();
    for (c, &rep) in reps.iter().enumerate() {
        if !keep[c] {
            continue;
        }
        let radius = (0..tail.len())
            .filter(|&s| member_of[s] == c)
            .map(|s| dist(&tail[rep], &tail[s]))
            .fold(0.0, f64::max);
        representatives.push(tail[rep].u.clone());
        radii.push(radius);
    }
    Ok(OmegaSet {
        representatives,
        radii,
        window: (t_tail, bundle.horizon),
        cluster_eps,
    })
}

/// sup over `a` of the distance to the nearest element of `b`, in the
/// phase metric induced by `phi` and p.
pub fn hausdorff_semidist(
    a: &[GridFunction],
    b: &[GridFunction],
    p: f64,
    phi: impl Fn(&GridFunction) -> f64,
) -> Result<f64, AttractorError> {
    if a.is_empty() || b.is_empty() {
        return Err(AttractorError::EmptySet);
    }
    let phi_b: Vec<f64> = b.iter().map(&phi).collect();
    if phi_b.iter().any(|v| !v.is_finite()) {
        return Err(AttractorError::InfiniteEnergy);
    }
    let mut sup = 0.0_f64;
    for u in a {
        let pu = phi(u);
        if !pu.is_finite() {
            return Err(AttractorError::InfiniteEnergy);
        }
        let inf = b
            .iter()
            .zip(&phi_b)
            .map(|(v, &pv)| metric_dx_cached(u, v, p, pu, pv))
            .fold(f64::INFINITY, f64::min);
        sup = sup.max(inf);
    }
    Ok(sup)
}

#[derive(Clone, Debug)]
pub struct AttractionCurve {
    pub times: Vec<f64>,
    pub dists: Vec<f64>,
    /// Non-increasing over the last quartile within 1e-6 slack.
    pub monotone_tail: bool,
}

/// Distance from the bundle's time-t slice to the omega-set
/// representatives, at each requested time (snapped to the step lattice).
pub fn attraction_curve(
    bundle: &Bundle,
    omega: &OmegaSet,
    sample_times: &[f64],
) -> Result<AttractionCurve, AttractorError> {
    let spec = &bundle.spec;
    let mut times = Vec::with_capacity(sample_times.len());
    let mut dists = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let slice: Vec<GridFunction> = bundle
            .trajectories
            .iter()
            .map(|traj| {
                let k = ((t / traj.h_t).round() as usize).min(traj.states.len() - 1);
                traj.states[k].clone()
            })
            .collect();
        let d = hausdorff_semidist(&slice, &omega.representatives, spec.p, |u| spec.phi(u))?;
        times.push(t);
        dists.push(d);
    }
    let tail_from = dists.len() - (dists.len() / 4).max(1);
    let monotone_tail = dists[tail_from..]
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-6);
    Ok(AttractionCurve { times, dists, monotone_tail })
}

/// Outcome of one sweep run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepOutcome {
    Bounded { max_lyapunov: f64, terminal_lyapunov: f64 },
    BlowUp { time: f64, solver_failed: bool },
}

impl SweepOutcome {
    pub fn is_bounded(&self) -> bool {
        matches!(self, SweepOutcome::Bounded { .. })
    }
}

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub strength: f64,
    pub outcome: SweepOutcome,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Largest gain classified bounded, smallest classified blow-up.
    pub bounded_max: Option<f64>,
    pub blowup_min: Option<f64>,
    /// True when every bounded gain lies below every blow-up gain.
    pub ordered: bool,
}

/// Integrates the problem once per gain value, with the perturbation
/// family rescaled to each strength at full coupling, classifying each run
/// as bounded or blow-up against `cap` (default 1e6 x the initial Lyapunov
/// value, floored at 1e6). A solver failure mid-run counts as blow-up with
/// the flag set: near criticality the subproblems degenerate exactly when
/// the state leaves every bounded set.
pub fn lambda_sweep(
    spec: &ProblemSpec,
    strengths: &[f64],
    rule: &InitialRule,
    t_final: f64,
    cap: Option<f64>,
) -> SweepReport {
    let sigma_w = 1.0;
    let entries: Vec<SweepEntry> = strengths
        .par_iter()
        .map(|&s| {
            let run_spec = ProblemSpec {
                fam: spec.fam.with_strength(s),
                lambda: 1.0,
                ..spec.clone()
            };
            let u0 = rule.realize(run_spec.grid, 0);
            let l0 = run_spec.lyapunov(&u0, sigma_w);
            let cap_v = cap.unwrap_or_else(|| 1e6 * l0.max(1.0));
            let steps = (t_final / run_spec.h_t).round().max(0.0) as usize;
            let mut u = u0;
            let mut max_l = l0;
            let mut outcome = None;
            for k in 1..=steps {
                match step(&run_spec, &u) {
                    Ok(out) => {
                        u = out.u_next;
                        let l = run_spec.lyapunov(&u, sigma_w);
                        max_l = max_l.max(l);
                        if l > cap_v {
                            outcome = Some(SweepOutcome::BlowUp {
                                time: k as f64 * run_spec.h_t,
                                solver_failed: false,
                            });
                            break;
                        }
                    }
                    Err(_) => {
                        outcome = Some(SweepOutcome::BlowUp {
                            time: k as f64 * run_spec.h_t,
                            solver_failed: true,
                        });
                        break;
                    }
                }
            }
            let outcome = outcome.unwrap_or(SweepOutcome::Bounded {
                max_lyapunov: max_l,
                terminal_lyapunov: run_spec.lyapunov(&u, sigma_w),
            });
            SweepEntry { strength: s, outcome }
        })
        .collect();

    let bounded_max = entries
        .iter()
        .filter(|e| e.outcome.is_bounded())
        .map(|e| e.strength)
        .fold(None, |a: Option<f64>, s| Some(a.map_or(s, |v| v.max(s))));
    let blowup_min = entries
        .iter()
        .filter(|e| !e.outcome.is_bounded())
        .map(|e| e.strength)
        .fold(None, |a: Option<f64>, s| Some(a.map_or(s, |v| v.min(s))));
    let ordered = match (bounded_max, blowup_min) {
        (Some(b), Some(u)) => b < u,
        _ => true,
    };
    SweepReport { entries, bounded_max, blowup_min, ordered }
}

/// Least-squares slope, intercept and R^2 of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{ConvexPotential, PerturbationFamily as Fam};
    use crate::grid::{dirichlet_principal_eigenvalue, lp_norm};

    fn heat_spec(n: usize, h_t: f64) -> ProblemSpec {
        let grid = Grid1D::new(n, 1.0);
        ProblemSpec::new(
            grid,
            2.0,
            2.0,
            ConvexPotential::Zero,
            Fam::Linear { kappa: 1.0 },
            0.0,
            GridFunction::zero(grid),
            h_t,
        )
        .unwrap()
    }

    #[test]
    fn zero_bundle_stays_zero() {
        let spec = heat_spec(9, 0.05);
        let bundle = run_bundle(&InitialRule::Zero, 1, &spec, 0.5).unwrap();
        assert_eq!(bundle.trajectories.len(), 1);
        for s in &bundle.trajectories[0].states {
            assert!(lp_norm(s, 2.0) == 0.0);
        }
        let omega = omega_limit(&bundle, 0.25, 0.1).unwrap();
        assert_eq!(omega.representatives.len(), 1);
        assert!(lp_norm(&omega.representatives[0], 2.0) < 1e-12);
    }

    #[test]
    fn bundles_are_deterministic() {
        let spec = heat_spec(15, 0.02);
        let rule = InitialRule::RandomFourier { amplitude: 1.0, modes: 8, seed: 42 };
        let a = run_bundle(&rule, 4, &spec, 0.2).unwrap();
        let b = run_bundle(&rule, 4, &spec, 0.2).unwrap();
        for (ta, tb) in a.trajectories.iter().zip(&b.trajectories) {
            assert_eq!(ta.energies.len(), tb.energies.len());
            for (ea, eb) in ta.energies.iter().zip(&tb.energies) {
                assert_eq!(ea.phi.to_bits(), eb.phi.to_bits(), "energies must be bitwise equal");
            }
        }
    }

    #[test]
    fn entry_time_zero_inside_the_ball() {
        let spec = heat_spec(15, 0.01);
        let rule = InitialRule::Eigenvector { scale: 0.01 };
        let bundle = run_bundle(&rule, 1, &spec, 0.5).unwrap();
        let entries = absorbing_entry(&bundle, 1.0, 1.0);
        assert_eq!(entries[0], 0.0);
    }

    #[test]
    fn entry_times_grow_with_initial_scale() {
        let spec = heat_spec(15, 0.01);
        let e = principal_eigenvector(spec.grid);
        let rule = InitialRule::States(vec![e.scaled(5.0), e.scaled(50.0)]);
        let bundle = run_bundle(&rule, 2, &spec, 4.0).unwrap();
        let entries = absorbing_entry(&bundle, 0.5, 1.0);
        assert!(entries[0] > 0.0 && entries[0].is_finite());
        assert!(entries[1] > entries[0], "larger start enters later: {entries:?}");
    }

    #[test]
    fn hausdorff_basics() {
        let grid = Grid1D::new(15, 1.0);
        let phi = |u: &GridFunction| crate::grid::m_dirichlet_energy(u, 2.0);
        let tent = GridFunction::from_fn(grid, |x| 1.0 - (2.0 * x - 1.0).abs());
        let zero = GridFunction::zero(grid);
        let d_aa = hausdorff_semidist(
            std::slice::from_ref(&tent),
            std::slice::from_ref(&tent),
            2.0,
            phi,
        )
        .unwrap();
        assert_eq!(d_aa, 0.0);
        let sub = hausdorff_semidist(
            std::slice::from_ref(&zero),
            &[zero.clone(), tent.clone()],
            2.0,
            phi,
        )
        .unwrap();
        assert_eq!(sub, 0.0);
        let d = hausdorff_semidist(
            std::slice::from_ref(&tent),
            std::slice::from_ref(&zero),
            2.0,
            phi,
        )
        .unwrap();
        let expected = lp_norm(&tent, 2.0) + phi(&tent);
        assert!((d - expected).abs() < 1e-12);
        assert!(matches!(
            hausdorff_semidist(&[], std::slice::from_ref(&zero), 2.0, phi),
            Err(AttractorError::EmptySet)
        ));
    }

    #[test]
    fn heat_bundle_collapses_to_zero() {
        let spec = heat_spec(15, 0.01);
        let rule = InitialRule::RandomFourier { amplitude: 1.0, modes: 6, seed: 7 };
        let bundle = run_bundle(&rule, 4, &spec, 3.0).unwrap();
        let omega = omega_limit(&bundle, 2.0, 0.1).unwrap();
        assert_eq!(omega.representatives.len(), 1);
        let d = metric_dx_cached(
            &omega.representatives[0],
            &GridFunction::zero(spec.grid),
            2.0,
            spec.phi(&omega.representatives[0]),
            0.0,
        );
        assert!(d < 0.1, "heat tail must sit at the origin, got {d}");
        assert!(matches!(
            omega_limit(&bundle, 10.0, 0.1),
            Err(AttractorError::EmptyTail { .. })
        ));
    }

    #[test]
    fn attraction_curve_is_zero_on_the_omega_set() {
        let spec = heat_spec(9, 0.05);
        let bundle = run_bundle(&InitialRule::Zero, 2, &spec, 1.0).unwrap();
        let omega = omega_limit(&bundle, 0.5, 0.1).unwrap();
        let curve = attraction_curve(&bundle, &omega, &[0.0, 0.5, 1.0]).unwrap();
        assert!(curve.dists.iter().all(|&d| d < 1e-12));
        assert!(curve.monotone_tail);
    }

    #[test]
    fn gain_sweep_brackets_the_principal_eigenvalue() {
        let spec = heat_spec(15, 0.01);
        let lam = dirichlet_principal_eigenvalue(spec.grid);
        let strengths: Vec<f64> = [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|c| c * lam).collect();
        let rule = InitialRule::Eigenvector { scale: 1.0 };
        let report = lambda_sweep(&spec, &strengths, &rule, 12.0, None);
        assert!(report.ordered, "{report:?}");
        let bounded = report.bounded_max.expect("subcritical gains stay bounded");
        let blown = report.blowup_min.expect("supercritical gains blow up");
        assert!(bounded >= lam * 0.999, "neutral gain must not blow up: {bounded} vs {lam}");
        assert!(blown <= lam * 1.101, "first blow-up at 1.1x: {blown}");
        assert!(blown - bounded <= 0.1 * lam + 1e-9, "bracket within one grid spacing");
    }
}
