//! Pointwise nonlinearities: the dissipation map alpha, the p-power
//! potential psi, the convex potential j with its proximal map, and the
//! lower-order perturbation families.
//!
//! Everything here acts nodewise; grid weights enter only through the
//! callers' quadrature. Prox maps use closed forms for the exponents that
//! admit them and a safeguarded Newton elsewhere.

use crate::grid::{backward_diff, GridFunction};

/// Duality map of the p-power potential: alpha(r) = |r|^(p-2) r.
/// Also serves as the flux nonlinearity for exponents m > 1.
pub fn alpha_apply(r: f64, p: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if p == 2.0 {
        r
    } else if p == 3.0 {
        r.abs() * r
    } else if p == 4.0 {
        r * r * r
    } else {
        r.abs().powf(p - 2.0) * r
    }
}

/// psi(u) = (1/p) h sum |u_i|^p; equals (1/p)|u|_V^p identically.
pub fn psi_eval(u: &GridFunction, p: f64) -> f64 {
    assert!(p >= 2.0, "dissipation potential needs p >= 2");
    crate::grid::lp_pow_p(u, p) / p
}

/// Nodewise subgradient of psi; the V* representative is alpha(u_i).
pub fn psi_grad(u: &GridFunction, p: f64) -> GridFunction {
    u.map(|r| alpha_apply(r, p))
}

/// Conjugate exponent p' = p/(p-1).
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Convex potential j behind the zeroth-order part of the energy.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexPotential {
    /// j = 0; the energy is pure gradient energy.
    Zero,
    /// j(r) = (c_j / sigma) |r|^sigma with sigma > 1, c_j > 0.
    Power { sigma: f64, c_j: f64 },
    /// Indicator of [a, b] with a <= 0 <= b; the obstacle case.
    IndicatorInterval { a: f64, b: f64 },
}

impl ConvexPotential {
    pub fn power(sigma: f64, c_j: f64) -> Self {
        let pot = ConvexPotential::Power { sigma, c_j };
        pot.validate().expect("invalid power potential");
        pot
    }

    pub fn indicator(a: f64, b: f64) -> Self {
        let pot = ConvexPotential::IndicatorInterval { a, b };
        pot.validate().expect("invalid indicator potential");
        pot
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ConvexPotential::Zero => Ok(()),
            ConvexPotential::Power { sigma, c_j } => {
                if !(sigma > 1.0) {
                    Err(format!("power potential needs sigma > 1, got {sigma}"))
                } else if !(c_j > 0.0) {
                    Err(format!("power potential needs c_j > 0, got {c_j}"))
                } else {
                    Ok(())
                }
            }
            ConvexPotential::IndicatorInterval { a, b } => {
                if a <= 0.0 && 0.0 <= b && a < b {
                    Ok(())
                } else {
                    Err(format!("indicator interval must satisfy a <= 0 <= b, got [{a}, {b}]"))
                }
            }
        }
    }

    /// Coercivity data (sigma, C8, C9) with C8 |r|^sigma <= j(r) + C9.
    /// Zero potential has no coercive lower bound (C8 = 0).
    pub fn coercivity(&self) -> (f64, f64, f64) {
        match *self {
            ConvexPotential::Zero => (2.0, 0.0, 0.0),
            ConvexPotential::Power { sigma, c_j } => (sigma, c_j / sigma, 0.0),
            ConvexPotential::IndicatorInterval { a, b } => {
                let r = a.abs().max(b.abs());
                (2.0, 1.0, r * r)
            }
        }
    }
}

/// j evaluated at a scalar; +infinity outside the indicator interval.
pub fn j_eval(r: f64, pot: &ConvexPotential) -> f64 {
    match *pot {
        ConvexPotential::Zero => 0.0,
        ConvexPotential::Power { sigma, c_j } => {
            if sigma == 2.0 {
                0.5 * c_j * r * r
            } else if sigma == 4.0 {
                0.25 * c_j * r * r * r * r
            } else {
                c_j / sigma * r.abs().powf(sigma)
            }
        }
        ConvexPotential::IndicatorInterval { a, b } => {
            if a <= r && r <= b {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Single-valued selection of the subdifferential where one exists.
/// Indicator endpoints take the minimal-norm selection 0; outside the
/// interval there is none.
pub fn j_derivative(r: f64, pot: &ConvexPotential) -> Option<f64> {
    match *pot {
        ConvexPotential::Zero => Some(0.0),
        ConvexPotential::Power { sigma, c_j } => Some(c_j * alpha_apply(r, sigma)),
        ConvexPotential::IndicatorInterval { a, b } => {
            if a <= r && r <= b {
                Some(0.0)
            } else {
                None
            }
        }
    }
}

/// Scalar prox Newton failed to meet its residual tolerance.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("prox solve stalled at residual {residual}")]
pub struct ProxError {
    pub residual: f64,
}

const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITER: usize = 100;

/// argmin_r (r - x)^2 / (2 tau) + j(r). Closed forms for the indicator and
/// for sigma in {2, 3, 4}; safeguarded Newton with a bisection bracket for
/// other power exponents.
pub fn j_prox(x: f64, tau: f64, pot: &ConvexPotential) -> Result<f64, ProxError> {
    debug_assert!(tau > 0.0);
    match *pot {
        ConvexPotential::Zero => Ok(x),
        ConvexPotential::IndicatorInterval { a, b } => Ok(x.clamp(a, b)),
        ConvexPotential::Power { sigma, c_j } => {
            let tc = tau * c_j;
            if x == 0.0 {
                return Ok(0.0);
            }
            let sign = x.signum();
            let rho = x.abs();
            let y = if sigma == 2.0 {
                rho / (1.0 + tc)
            } else if sigma == 3.0 {
                // y + tc y^2 = rho, stable root of the quadratic
                2.0 * rho / (1.0 + (1.0 + 4.0 * tc * rho).sqrt())
            } else if sigma == 4.0 {
                cardano_cubic(tc, rho)
            } else {
                return prox_power_newton(rho, tc, sigma).map(|y| sign * y);
            };
            Ok(sign * y)
        }
    }
}

/// Positive root of tc y^3 + y = rho via Cardano plus a Newton polish.
fn cardano_cubic(tc: f64, rho: f64) -> f64 {
    let p = 1.0 / tc;
    let q = -rho / tc;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    // q <= 0, so -q/2 + disc has no cancellation.
    let t1 = (-q / 2.0 + disc).cbrt();
    let mut y = t1 - p / (3.0 * t1);
    for _ in 0..2 {
        let f = y + tc * y * y * y - rho;
        let df = 1.0 + 3.0 * tc * y * y;
        y -= f / df;
    }
    y.max(0.0)
}

fn prox_power_newton(rho: f64, tc: f64, sigma: f64) -> Result<f64, ProxError> {
    // Root of F(y) = y + tc y^(sigma-1) - rho on [0, rho]. Driven to the
    // rounding floor, not a fixed tolerance: downstream certificates
    // divide the prox residual by tau, so anything looser than machine
    // precision here reappears amplified in the step residual.
    let mut lo = 0.0_f64;
    let mut hi = rho;
    let mut y = rho / (1.0 + tc);
    let floor = 4.0 * f64::EPSILON * rho;
    let f = |y: f64| y + tc * y.powf(sigma - 1.0) - rho;
    let mut fy = f(y);
    let mut best = (y, fy.abs());
    for _ in 0..PROX_MAX_ITER {
        if fy.abs() <= floor || hi - lo <= f64::EPSILON * y {
            return Ok(y);
        }
        if fy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dfy = 1.0 + tc * (sigma - 1.0) * y.powf(sigma - 2.0);
        let newton = y - fy / dfy;
        y = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fy = f(y);
        if fy.abs() < best.1 {
            best = (y, fy.abs());
        }
    }
    if best.1 <= PROX_TOL * rho.max(1.0) {
        Ok(best.0)
    } else {
        Err(ProxError { residual: best.1 })
    }
}

/// Lower-order perturbation families. State families act on (x, u);
/// gradient families act on the one-sided difference field of u.
#[derive(Clone, Debug, PartialEq)]
pub enum PerturbationFamily {
    /// g(x, r) = -kappa r.
    Linear { kappa: f64 },
    /// g(x, r) = -kappa r, intended alongside the quartic power potential
    /// so that j + lambda*int g forms a double well.
    CubicWell { kappa: f64 },
    /// g(x, r) = -kappa sin(k pi x / L) r.
    SpatiallyModulated { kappa: f64, mode: u32 },
    /// h(x, r, s) = b s.
    GradientLinear { b: f64 },
    /// h(x, r, s) = b |s|^(q2-2) s with q2 > 1.
    GradientPower { b: f64, q2: f64 },
}

/// Declared growth exponents of a family, depending on the kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Growth {
    /// |g(x,r)|^(p') <= a1(x) + C10 |r|^(p'(q-1)).
    State { q: f64 },
    /// Mixed growth in (r, s) with exponents (q1, q2).
    Gradient { q1: f64, q2: f64 },
}

/// Difference field was required but not supplied.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("gradient-dependent family needs the difference field")]
pub struct PerturbError;

impl PerturbationFamily {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            PerturbationFamily::SpatiallyModulated { mode, .. } if mode == 0 => {
                Err("modulated family needs mode >= 1".into())
            }
            PerturbationFamily::GradientPower { q2, .. } if !(q2 > 1.0) => {
                Err(format!("gradient power family needs q2 > 1, got {q2}"))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(
            self,
            PerturbationFamily::GradientLinear { .. } | PerturbationFamily::GradientPower { .. }
        )
    }

    /// The single strength knob (kappa or b).
    pub fn strength(&self) -> f64 {
        match *self {
            PerturbationFamily::Linear { kappa }
            | PerturbationFamily::CubicWell { kappa }
            | PerturbationFamily::SpatiallyModulated { kappa, .. } => kappa,
            PerturbationFamily::GradientLinear { b } | PerturbationFamily::GradientPower { b, .. } => b,
        }
    }

    /// Same family with the strength knob replaced; used by sweeps.
    pub fn with_strength(&self, s: f64) -> Self {
        let mut fam = self.clone();
        match &mut fam {
            PerturbationFamily::Linear { kappa }
            | PerturbationFamily::CubicWell { kappa }
            | PerturbationFamily::SpatiallyModulated { kappa, .. } => *kappa = s,
            PerturbationFamily::GradientLinear { b } | PerturbationFamily::GradientPower { b, .. } => *b = s,
        }
        fam
    }

    /// Growth exponents entering the structural conditions. State families
    /// are linear in r (q = 2); gradient families carry the minimal q1
    /// admitted by the growth floor and their declared q2.
    pub fn growth(&self, p: f64) -> Growth {
        let floor = 1.0 + 1.0 / conjugate(p);
        match *self {
            PerturbationFamily::Linear { .. }
            | PerturbationFamily::CubicWell { .. }
            | PerturbationFamily::SpatiallyModulated { .. } => Growth::State { q: 2.0 },
            PerturbationFamily::GradientLinear { .. } => Growth::Gradient { q1: floor, q2: 2.0 },
            PerturbationFamily::GradientPower { q2, .. } => Growth::Gradient { q1: floor, q2 },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PerturbationFamily::Linear { .. } => "linear",
            PerturbationFamily::CubicWell { .. } => "cubic_well",
            PerturbationFamily::SpatiallyModulated { .. } => "spatially_modulated",
            PerturbationFamily::GradientLinear { .. } => "gradient_linear",
            PerturbationFamily::GradientPower { .. } => "gradient_power",
        }
    }
}

/// Nodewise perturbation values on a state. `du` is the one-sided
/// difference field; it is only consulted by gradient families and may be
/// omitted otherwise.
pub fn perturbation_apply(
    u: &GridFunction,
    du: Option<&GridFunction>,
    fam: &PerturbationFamily,
) -> Result<GridFunction, PerturbError> {
    let grid = u.grid();
    match *fam {
        PerturbationFamily::Linear { kappa } | PerturbationFamily::CubicWell { kappa } => {
            Ok(u.map(|r| -kappa * r))
        }
        PerturbationFamily::SpatiallyModulated { kappa, mode } => {
            let l = grid.length();
            let values = u
                .values()
                .iter()
                .enumerate()
                .map(|(k, &r)| {
                    let x = grid.node(k);
                    -kappa * (mode as f64 * std::f64::consts::PI * x / l).sin() * r
                })
                .collect();
            Ok(GridFunction::new(grid, values))
        }
        PerturbationFamily::GradientLinear { b } => {
            let du = du.ok_or(PerturbError)?;
            Ok(du.map(|s| b * s))
        }
        PerturbationFamily::GradientPower { b, q2 } => {
            let du = du.ok_or(PerturbError)?;
            Ok(du.map(|s| b * alpha_apply(s, q2)))
        }
    }
}

/// `perturbation_apply` with the difference field computed on demand.
pub fn perturbation_on_state(u: &GridFunction, fam: &PerturbationFamily) -> GridFunction {
    if fam.needs_gradient() {
        let du = backward_diff(u);
        perturbation_apply(u, Some(&du), fam).expect("difference field supplied")
    } else {
        perturbation_apply(u, None, fam).expect("state family needs no difference field")
    }
}
