//! Uniform 1-D Dirichlet grid and the discrete differential calculus on it.
//!
//! The domain (0, L) is discretized by n interior nodes x_i = i*h with
//! h = L/(n+1); boundary values are implicitly zero and never stored.
//! Integrals use midpoint weights h per interior node, so the discrete
//! Lebesgue pairing is `inner(u, v) = h * sum(u_i v_i)`.

use crate::functionals::alpha_apply;

/// Interior-node grid on (0, L) with homogeneous Dirichlet boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
}

impl Grid1D {
    /// Grid with `n` interior nodes on (0, `length`).
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 1, "grid needs at least one interior node");
        assert!(length > 0.0 && length.is_finite(), "domain length must be positive");
        Grid1D { n, length }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Mesh width h = L/(n+1).
    pub fn h(&self) -> f64 {
        self.length / (self.n as f64 + 1.0)
    }

    /// Coordinate of the k-th stored value (interior node k+1).
    pub fn node(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * self.h()
    }
}

/// Values of a grid function at the interior nodes; boundary is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "value count must match grid");
        GridFunction { grid, values }
    }

    pub fn zero(grid: Grid1D) -> Self {
        GridFunction { grid, values: vec![0.0; grid.n()] }
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n()).map(|k| f(grid.node(k))).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_same_grid(self, other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        GridFunction { grid: self.grid, values }
    }
}

pub(crate) fn assert_same_grid(a: &GridFunction, b: &GridFunction) {
    assert_eq!(a.grid, b.grid, "grid functions live on different grids");
}

/// Weighted pairing h * sum(u_i v_i), the discrete duality product.
pub fn inner(u: &GridFunction, v: &GridFunction) -> f64 {
    assert_same_grid(u, v);
    let h = u.grid().h();
    h * u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

/// Discrete L^p norm (h * sum |u_i|^p)^(1/p); requires p >= 1.
pub fn lp_norm(u: &GridFunction, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1");
    let h = u.grid().h();
    if p == 2.0 {
        return (h * u.values().iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    let sum: f64 = u.values().iter().map(|v| v.abs().powf(p)).sum();
    (h * sum).powf(1.0 / p)
}

/// h * sum |u_i|^p without the final root; the Lyapunov ingredient |u|_V^p.
pub fn lp_pow_p(u: &GridFunction, p: f64) -> f64 {
    let h = u.grid().h();
    if p == 2.0 {
        return h * u.values().iter().map(|v| v * v).sum::<f64>();
    }
    h * u.values().iter().map(|v| v.abs().powf(p)).sum::<f64>()
}

/// Gradient energy (h/m) * sum over the n+1 cells of |(u_{i+1}-u_i)/h|^m,
/// with zero padding at both ends. Requires m > 1.
pub fn m_dirichlet_energy(u: &GridFunction, m: f64) -> f64 {
    assert!(m > 1.0, "gradient energy needs m > 1");
    let h = u.grid().h();
    let vals = u.values();
    let n = vals.len();
    let mut sum = 0.0;
    for k in 0..=n {
        let left = if k == 0 { 0.0 } else { vals[k - 1] };
        let right = if k == n { 0.0 } else { vals[k] };
        let d = (right - left) / h;
        sum += if m == 2.0 { d * d } else { d.abs().powf(m) };
    }
    h * sum / m
}

/// Flux-form m-Laplacian: (F_{i+1/2} - F_{i-1/2})/h with F = alpha_m of the
/// difference quotient. The negated, h-weighted result is the exact gradient
/// of `m_dirichlet_energy`.
pub fn m_laplacian(u: &GridFunction, m: f64) -> GridFunction {
    assert!(m > 1.0, "m-Laplacian needs m > 1");
    let h = u.grid().h();
    let vals = u.values();
    let n = vals.len();
    let mut flux = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let left = if k == 0 { 0.0 } else { vals[k - 1] };
        let right = if k == n { 0.0 } else { vals[k] };
        flux.push(alpha_apply((right - left) / h, m));
    }
    let values = (0..n).map(|i| (flux[i + 1] - flux[i]) / h).collect();
    GridFunction::new(u.grid(), values)
}

/// One-sided (backward) difference field, with the left boundary zero:
/// d_i = (u_i - u_{i-1})/h. Feeds gradient-dependent perturbations.
pub fn backward_diff(u: &GridFunction) -> GridFunction {
    let h = u.grid().h();
    let vals = u.values();
    let values = (0..vals.len())
        .map(|i| {
            let prev = if i == 0 { 0.0 } else { vals[i - 1] };
            (vals[i] - prev) / h
        })
        .collect();
    GridFunction::new(u.grid(), values)
}

/// A state with infinite energy is outside the metric's domain.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("state outside the energy domain: phi = {phi}")]
pub struct DomainError {
    pub phi: f64,
}

/// Phase-space metric |u - v|_p + |phi(u) - phi(v)|.
pub fn metric_dx(
    u: &GridFunction,
    v: &GridFunction,
    p: f64,
    phi: impl Fn(&GridFunction) -> f64,
) -> Result<f64, DomainError> {
    assert_same_grid(u, v);
    let pu = phi(u);
    let pv = phi(v);
    for val in [pu, pv] {
        if !val.is_finite() {
            return Err(DomainError { phi: val });
        }
    }
    Ok(lp_norm(&u.sub(v), p) + (pu - pv).abs())
}

/// Same metric from precomputed energy values; used where phi is cached.
pub(crate) fn metric_dx_cached(u: &GridFunction, v: &GridFunction, p: f64, phi_u: f64, phi_v: f64) -> f64 {
    lp_norm(&u.sub(v), p) + (phi_u - phi_v).abs()
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian:
/// (4/h^2) sin^2(pi/(2(n+1))); increases to (pi/L)^2 under refinement.
pub fn dirichlet_principal_eigenvalue(grid: Grid1D) -> f64 {
    let h = grid.h();
    let s = (std::f64::consts::PI / (2.0 * (grid.n() as f64 + 1.0))).sin();
    4.0 / (h * h) * s * s
}

/// Eigenvector sin(pi x / L) for the principal eigenvalue, scaled to unit
/// sup norm. Exact for the second difference on this grid.
pub fn principal_eigenvector(grid: Grid1D) -> GridFunction {
    let l = grid.length();
    let raw = GridFunction::from_fn(grid, |x| (std::f64::consts::PI * x / l).sin());
    let sup = raw
        .values()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    raw.scaled(1.0 / sup)
}
