//! Quadrature rules: cached Gauss-Legendre nodes, adaptive node doubling,
//! and trapezoid helpers on non-uniform grids.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights from Newton iteration on the Legendre polynomial,
    /// seeded with the Chebyshev-like asymptotic root estimate.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Gauss-Legendre rule needs at least 2 nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Process-wide cache of Gauss-Legendre rules (chart construction requests
/// the same handful of degrees millions of times).
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
        .clone()
}

/// Gauss-Legendre with node doubling until the relative change drops below
/// `rel_tol`. Returns the last value.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    n0: usize,
    rel_tol: f64,
    max_nodes: usize,
) -> Result<f64> {
    integrate_adaptive_with_floor(f, a, b, n0, rel_tol, rel_tol, max_nodes)
}

/// As `integrate_adaptive`, but when the node cap is reached the last value
/// is still accepted if the change sits below `floor_tol`. Square-root
/// endpoint integrands hit a cancellation-noise floor near trapping, where
/// the target tolerance is unreachable in double precision.
pub fn integrate_adaptive_with_floor<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n0: usize,
    rel_tol: f64,
    floor_tol: f64,
    max_nodes: usize,
) -> Result<f64> {
    let mut n = n0.max(2);
    let mut prev = gauss_legendre(n).integrate(a, b, &mut f);
    loop {
        n *= 2;
        let cur = gauss_legendre(n).integrate(a, b, &mut f);
        let scale = cur.abs().max(prev.abs()).max(1e-300);
        let change = (cur - prev).abs() / scale;
        if change < rel_tol {
            return Ok(cur);
        }
        if n * 2 > max_nodes {
            if change < floor_tol {
                return Ok(cur);
            }
            return Err(Error::QuadratureNoConvergence {
                tol: rel_tol,
                nodes: n,
                last_change: change,
            });
        }
        prev = cur;
    }
}

/// Trapezoid weights for a non-uniform, strictly increasing grid.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    w[0] = 0.5 * (xs[1] - xs[0]);
    w[n - 1] = 0.5 * (xs[n - 1] - xs[n - 2]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (xs[i + 1] - xs[i - 1]);
    }
    w
}

/// Cumulative integral of tabulated values from the right end of the grid:
/// out[i] = integral from xs[i] to xs[n-1] by the trapezoid rule.
pub fn cumulative_from_right(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        out[i] = out[i + 1] + 0.5 * (ys[i] + ys[i + 1]) * (xs[i + 1] - xs[i]);
    }
    out
}

/// Cumulative integral from the left end: out[i] = integral from xs[0] to xs[i].
pub fn cumulative_from_left(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        out[i] = out[i - 1] + 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

/// Composite Simpson weights for a uniform grid with an even interval count.
pub fn simpson_weights_uniform(n_points: usize, h: f64) -> Vec<f64> {
    assert!(n_points >= 3 && n_points % 2 == 1, "Simpson needs an odd point count");
    let mut w = vec![0.0; n_points];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == n_points - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        *wi *= h / 3.0;
    }
    w
}
