//! Test oracles, independent of the library's solution paths: direct
//! tridiagonal elimination, damped Newton for steady states, central
//! finite differences, and exhaustive scalar minimization.

#![allow(dead_code)]

use dnflow::grid::{Grid1D, GridFunction};

/// Solves a tridiagonal system by the Thomas algorithm. `lower` and
/// `upper` have length n-1.
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Steady state of -u'' + cubic u^3 - linear u = 0 with Dirichlet zero
/// boundary, by damped Newton from `init`. Panics if 200 iterations do
/// not reach sup-norm residual 1e-11.
pub fn newton_steady_state(init: &GridFunction, cubic: f64, linear: f64) -> GridFunction {
    let grid = init.grid();
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let mut u = init.values().to_vec();
    let res = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                (2.0 * u[i] - left - right) / h2 + cubic * u[i].powi(3) - linear * u[i]
            })
            .collect()
    };
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let mut r = res(&u);
    for _ in 0..200 {
        if sup(&r) <= 1e-11 {
            return GridFunction::new(grid, u);
        }
        let lower = vec![-1.0 / h2; n - 1];
        let upper = vec![-1.0 / h2; n - 1];
        let diag: Vec<f64> = (0..n)
            .map(|i| 2.0 / h2 + 3.0 * cubic * u[i] * u[i] - linear)
            .collect();
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = thomas_solve(&lower, &diag, &upper, &neg_r);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let rt = res(&trial);
            if sup(&rt) < sup(&r) || t < 1e-8 {
                u = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    panic!("Newton stalled at residual {}", sup(&r));
}

/// Central finite-difference gradient of a scalar function of the node
/// vector.
pub fn central_fd(f: impl Fn(&[f64]) -> f64, x: &[f64], delta: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let d = delta * x[i].abs().max(1.0);
        work[i] = x[i] + d;
        let fp = f(&work);
        work[i] = x[i] - d;
        let fm = f(&work);
        work[i] = x[i];
        g[i] = (fp - fm) / (2.0 * d);
    }
    g
}

/// argmin over [lo, hi] of j(z) + (z - x)^2 / (2 tau), by a scan over one
/// million candidates refined twice around the running best.
pub fn brute_prox(x: f64, tau: f64, j: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let obj = |z: f64| j(z) + (z - x) * (z - x) / (2.0 * tau);
    let scan = |a: f64, b: f64, count: usize| -> f64 {
        let mut best = (a, obj(a));
        for k in 1..=count {
            let z = a + (b - a) * k as f64 / count as f64;
            let v = obj(z);
            if v < best.1 {
                best = (z, v);
            }
        }
        best.0
    };
    let mut z = scan(lo, hi, 1_000_000);
    let mut w = (hi - lo) / 1_000_000.0;
    for _ in 0..2 {
        let a = (z - 2.0 * w).max(lo);
        let b = (z + 2.0 * w).min(hi);
        z = scan(a, b, 2000);
        w = (b - a) / 2000.0;
    }
    z
}

/// Eigenvector-free helper: smooth random field on the grid as a short
/// sine series with decaying coefficients.
pub fn smooth_field(grid: Grid1D, coeffs: &[f64]) -> GridFunction {
    let length = grid.length();
    GridFunction::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x / length).sin())
            .sum()
    })
}
