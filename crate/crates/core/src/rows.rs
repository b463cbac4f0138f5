//! Per-radius row decomposition of the foliated support.
//!
//! For each output radius R the support slice { E >= Psi_L(R) } is cut into
//! rows of constant kinetic offset z; along a row the frequency y = omega is
//! strictly monotone in L, so every y-integral can be done against a
//! piecewise-linear amplitude with the oscillatory or resolvent kernel
//! integrated exactly per cell. This is what keeps late-time force synthesis
//! and the singular Plemelj integrals accurate.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::action_angle::{angle_with_geometry, ActionChart, OrbitPoint};
use crate::error::{Error, Result};
use crate::foliation::{jacobian, l_of_circular_radius, row_l_upper, z_max};
use crate::spectral::{chart_geometry, ModeField};

#[derive(Debug, Clone, Copy)]
pub struct RowSpec {
    /// Rows per radius (odd; Simpson in u = sqrt(z / z_max)).
    pub n_u: usize,
    /// Uniform-in-L base nodes per row.
    pub n_l_base: usize,
    /// Extra nodes clustered around the circular momentum L_R.
    pub n_l_cluster: usize,
}

impl Default for RowSpec {
    fn default() -> Self {
        Self { n_u: 49, n_l_base: 48, n_l_cluster: 20 }
    }
}

/// One z-row: a contiguous slice of the per-radius node arrays, sorted by
/// increasing y.
#[derive(Debug, Clone)]
pub struct Row {
    pub z: f64,
    /// z-integration weight (Simpson in u times dz/du).
    pub weight: f64,
    pub offset: usize,
    pub len: usize,
}

/// Node data of one radius, stored structure-of-arrays.
#[derive(Debug, Clone, Default)]
pub struct NodeArrays {
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    /// Weight q = |phi'| / |P_R omega|.
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub e: Vec<f64>,
    pub sin1: Vec<f64>,
    pub cos1: Vec<f64>,
    /// Bilinear chart stencil for sampling mode fields.
    pub stencil_idx: Vec<[u32; 4]>,
    pub stencil_w: Vec<[f64; 4]>,
}

impl NodeArrays {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn push(&mut self, n: RowNodeScratch) {
        self.y.push(n.y);
        self.theta.push(n.theta);
        self.q.push(n.q);
        self.l.push(n.l);
        self.e.push(n.e);
        let ang = 2.0 * std::f64::consts::PI * n.theta;
        self.sin1.push(ang.sin());
        self.cos1.push(ang.cos());
        self.stencil_idx.push(n.stencil_idx);
        self.stencil_w.push(n.stencil_w);
    }

    /// Sample a mode slice at a node through the cached stencil.
    #[inline]
    pub fn sample(&self, k: usize, slice: &[Complex64]) -> Complex64 {
        let idx = &self.stencil_idx[k];
        let w = &self.stencil_w[k];
        slice[idx[0] as usize] * w[0]
            + slice[idx[1] as usize] * w[1]
            + slice[idx[2] as usize] * w[2]
            + slice[idx[3] as usize] * w[3]
    }
}

#[derive(Debug, Clone, Copy)]
struct RowNodeScratch {
    y: f64,
    theta: f64,
    q: f64,
    l: f64,
    e: f64,
    stencil_idx: [u32; 4],
    stencil_w: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct RadiusRows {
    pub r: f64,
    pub z_max: f64,
    pub rows: Vec<Row>,
    pub nodes: NodeArrays,
}

#[derive(Debug, Clone)]
pub struct RowSet {
    pub r_grid: Vec<f64>,
    pub radii: Vec<RadiusRows>,
}

impl RowSet {
    pub fn build(chart: &ActionChart, r_grid: Vec<f64>, spec: RowSpec) -> Result<RowSet> {
        assert!(spec.n_u >= 5 && spec.n_u % 2 == 1, "n_u must be odd and >= 5");
        let radii: Vec<RadiusRows> = r_grid
            .par_iter()
            .map(|&r| build_radius(chart, r, &spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(RowSet { r_grid, radii })
    }

    /// Transport force profile of a rotated field at time t:
    /// the stored modes are amplitudes at t = 0 and each node carries the
    /// phase e^{-2 pi i m y t}.
    pub fn force_profile(&self, field: &ModeField, t: f64) -> Vec<f64> {
        self.radii
            .par_iter()
            .map(|rad| {
                let phases: Vec<Complex64> = rad
                    .nodes
                    .y
                    .iter()
                    .map(|&y| {
                        let ang = -2.0 * std::f64::consts::PI * y * t;
                        Complex64::new(ang.cos(), ang.sin())
                    })
                    .collect();
                force_at_radius(rad, field, &phases, t)
            })
            .collect()
    }

    /// As `force_profile` with externally tracked per-node phases (one slice
    /// per radius, aligned with `radii[i].nodes`).
    pub fn force_profile_with_phases(
        &self,
        field: &ModeField,
        phases: &[Vec<Complex64>],
        t: f64,
    ) -> Vec<f64> {
        self.radii
            .par_iter()
            .zip(phases.par_iter())
            .map(|(rad, ph)| force_at_radius(rad, field, ph, t))
            .collect()
    }
}

fn build_radius(chart: &ActionChart, r: f64, spec: &RowSpec) -> Result<RadiusRows> {
    let model = &chart.model;
    let zm = z_max(chart, r);
    let mut out = RadiusRows { r, z_max: zm, rows: Vec::new(), nodes: NodeArrays::default() };
    if zm <= 1e-14 * model.e0.abs() {
        return Ok(out);
    }
    let l0 = model.params.l0;
    let du = 1.0 / (spec.n_u - 1) as f64;
    let simpson = crate::numerics::quad::simpson_weights_uniform(spec.n_u, du);
    let l_r = l_of_circular_radius(chart, r);
    for k in 1..spec.n_u {
        let u = k as f64 * du;
        let z = zm * u * u;
        let weight = simpson[k] * 2.0 * zm * u;
        let l_hi = match row_l_upper(chart, r, z) {
            Ok(l) => l,
            Err(_) => continue,
        };
        if l_hi - l0 < 1e-12 * model.l_max {
            continue;
        }
        // node momenta: uniform base plus clustering around the circular
        // momentum where the trapping depth along the row is smallest
        let mut ls: Vec<f64> = (0..spec.n_l_base)
            .map(|i| l0 + (l_hi - l0) * i as f64 / (spec.n_l_base - 1) as f64)
            .collect();
        if l_r > l0 && l_r < l_hi && spec.n_l_cluster > 0 {
            let span = 0.25 * (l_hi - l0);
            let n_c = spec.n_l_cluster / 2;
            let ratio = 1e-4f64.powf(1.0 / (n_c.max(2) - 1) as f64);
            for i in 0..n_c {
                let off = span * ratio.powi(i as i32);
                for sgn in [-1.0, 1.0] {
                    let l = l_r + sgn * off;
                    if l > l0 && l < l_hi {
                        ls.push(l);
                    }
                }
            }
            ls.push(l_r);
        }
        ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ls.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * model.l_max);

        let mut scratch: Vec<RowNodeScratch> = Vec::with_capacity(ls.len());
        let w_kin = (2.0 * z).sqrt();
        for &l in &ls {
            let e = model.e0 - model.energy_minus_psi(model.e0, r, l) + z;
            let point = OrbitPoint::new(e, l);
            let jac = jacobian(chart, r, point)?;
            let phi = model.phi_prime_abs(e, l);
            let q = phi / jac;
            let y = chart.omega_at(e, l);
            let geo = chart_geometry(chart, point);
            let theta = angle_with_geometry(
                model,
                r.clamp(geo.r_minus, geo.r_plus),
                w_kin,
                &geo,
            )?;
            let tau = chart.tau_of(e, l);
            let (idx, wst) = chart_stencil(chart, tau, l);
            scratch.push(RowNodeScratch {
                y,
                theta,
                q,
                l,
                e,
                stencil_idx: idx,
                stencil_w: wst,
            });
        }
        // sort by increasing frequency (y falls with L) and drop ties
        scratch.sort_by(|a, b| a.y.partial_cmp(&b.y).unwrap());
        scratch.dedup_by(|a, b| (a.y - b.y).abs() < 1e-15 * chart.omega_max);
        if scratch.len() < 2 {
            continue;
        }
        let offset = out.nodes.len();
        for n in &scratch {
            out.nodes.push(*n);
        }
        out.rows.push(Row { z, weight, offset, len: scratch.len() });
    }
    Ok(out)
}

fn chart_stencil(chart: &ActionChart, tau: f64, l: f64) -> ([u32; 4], [f64; 4]) {
    let (idx, w) = chart.omega_grid().bilinear_stencil(tau, l);
    ([idx[0] as u32, idx[1] as u32, idx[2] as u32, idx[3] as u32], w)
}

/// Force at one radius from rotated modes with per-node phases.
pub fn force_at_radius(
    rad: &RadiusRows,
    field: &ModeField,
    phases: &[Complex64],
    t: f64,
) -> f64 {
    if rad.rows.is_empty() {
        return 0.0;
    }
    let m_max = field.m_max;
    let mut total = 0.0;
    let n = rad.nodes.len();
    let mut pow: Vec<Complex64> = phases.to_vec();
    let mut sin_m: Vec<f64> = rad.nodes.sin1.clone();
    let mut cos_m: Vec<f64> = rad.nodes.cos1.clone();
    let mut amp: Vec<Complex64> = vec![Complex64::ZERO; n];
    for m in 1..=m_max {
        let slice = field.slice(m);
        for k in 0..n {
            let fhat = rad.nodes.sample(k, slice);
            let a = rad.nodes.q[k] / rad.nodes.y[k] * sin_m[k];
            amp[k] = fhat * a * pow[k];
        }
        let omega_m = -2.0 * std::f64::consts::PI * m as f64 * t;
        let mut acc = Complex64::ZERO;
        for row in &rad.rows {
            let ys = &rad.nodes.y[row.offset..row.offset + row.len];
            let a = &amp[row.offset..row.offset + row.len];
            acc += row.weight * filon_pwl_prephased(ys, a, omega_m);
        }
        total += 2.0 / m as f64 * acc.re;
        if m < m_max {
            for k in 0..n {
                pow[k] *= phases[k];
                let s = sin_m[k] * rad.nodes.cos1[k] + cos_m[k] * rad.nodes.sin1[k];
                let c = cos_m[k] * rad.nodes.cos1[k] - sin_m[k] * rad.nodes.sin1[k];
                sin_m[k] = s;
                cos_m[k] = c;
            }
        }
    }
    4.0 * std::f64::consts::PI / (rad.r * rad.r) * total
}

/// Integral of a piecewise-linear amplitude against e^{i omega y} when the
/// node values are already premultiplied by their phases e^{i omega y_k}.
///
/// Per cell, with x = omega h and amplitude a(s) = a0 + b s on [0, h]:
///   I = e^{i omega y0} (a0 h alpha(x) + b h^2 beta(x)),
/// and the premultiplied values are g_k = a_k e^{i omega y_k}.
pub fn filon_pwl_prephased(ys: &[f64], g: &[Complex64], omega: f64) -> Complex64 {
    debug_assert_eq!(ys.len(), g.len());
    let mut acc = Complex64::ZERO;
    for k in 0..ys.len() - 1 {
        let h = ys[k + 1] - ys[k];
        if h <= 0.0 {
            continue;
        }
        let x = omega * h;
        // e^{ix} from the phase ratio would mix amplitude into phase; keep it
        // local and exact instead
        let (alpha, beta, eix) = filon_coeffs(x);
        // g[k] = a0 * p0, g[k+1] = a1 * p0 * e^{ix}; recover a1 * p0:
        let a0p = g[k];
        let a1p = g[k + 1] * eix.conj();
        let b_h = a1p - a0p; // b * h * p0
        acc += a0p * (h * alpha) + b_h * (h * beta);
    }
    acc
}

/// (alpha, beta, e^{ix}) with alpha = int_0^1 e^{ixu} du and
/// beta = int_0^1 u e^{ixu} du.
fn filon_coeffs(x: f64) -> (Complex64, Complex64, Complex64) {
    let eix = Complex64::new(x.cos(), x.sin());
    if x.abs() < 0.25 {
        let ix = Complex64::new(0.0, x);
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut beta = Complex64::new(0.5, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for k in 1..=9usize {
            term *= ix;
            fact *= k as f64;
            alpha += term / (fact * (k + 1) as f64);
            beta += term / (fact * (k + 2) as f64);
        }
        (alpha, beta, eix)
    } else {
        let ix = Complex64::new(0.0, x);
        let alpha = (eix - 1.0) / ix;
        let beta = (eix * (ix - 1.0) + 1.0) / (ix * ix);
        (alpha, beta, eix)
    }
}

/// Integral of a piecewise-linear amplitude against the resolvent kernel
/// 1/(y + c) over the row cells, with the analytic log antiderivative per
/// cell. `c` must have a nonzero imaginary part when the singular line
/// crosses the row.
pub fn log_kernel_pwl(ys: &[f64], g: &[Complex64], c: Complex64) -> Complex64 {
    debug_assert_eq!(ys.len(), g.len());
    let mut acc = Complex64::ZERO;
    for k in 0..ys.len() - 1 {
        let h = ys[k + 1] - ys[k];
        if h <= 0.0 {
            continue;
        }
        let u0 = ys[k] + c;
        let b = (g[k + 1] - g[k]) / h;
        let ratio = h / u0;
        let log_term = if ratio.norm() < 1e-3 {
            // ln(1 + w) by series
            let w = ratio;
            w * (Complex64::new(1.0, 0.0) - w * 0.5 + w * w / 3.0 - w * w * w * 0.25)
        } else {
            ((ys[k + 1] + c) / u0).ln()
        };
        acc += (g[k] - b * u0) * log_term + b * h;
    }
    acc
}

/// Plemelj row integration with local refinement: near the singular line
/// y* = -Re(c) the amplitude is re-sampled by local cubic interpolation at
/// offsets proportional to |Im(c)| and the log rule is applied on the refined
/// partition.
pub fn log_kernel_pwl_refined(ys: &[f64], g: &[Complex64], c: Complex64) -> Complex64 {
    let y_star = -c.re;
    let eps_scale = c.im.abs();
    let (lo, hi) = (ys[0], ys[ys.len() - 1]);
    if eps_scale == 0.0 || y_star < lo - 8.0 * eps_scale || y_star > hi + 8.0 * eps_scale {
        return log_kernel_pwl(ys, g, c);
    }
    // refined abscissae around the singular line
    let mut ry: Vec<f64> = ys.to_vec();
    for s in [-8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let y = y_star + s * eps_scale;
        if y > lo && y < hi {
            ry.push(y);
        }
    }
    ry.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ry.dedup_by(|a, b| (*a - *b).abs() < 1e-4 * eps_scale.max(1e-300));
    let rg: Vec<Complex64> = ry.iter().map(|&y| cubic_sample(ys, g, y)).collect();
    log_kernel_pwl(&ry, &rg, c)
}

/// Local 4-point Lagrange interpolation of complex row amplitudes.
fn cubic_sample(ys: &[f64], g: &[Complex64], y: f64) -> Complex64 {
    let n = ys.len();
    let i = crate::numerics::interp::locate(ys, y);
    if n < 4 {
        // linear fallback
        let t = (y - ys[i]) / (ys[i + 1] - ys[i]);
        return g[i] * (1.0 - t) + g[i + 1] * t;
    }
    let i0 = i.saturating_sub(1).min(n - 4);
    let mut acc = Complex64::ZERO;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (y - ys[i0 + b]) / (ys[i0 + a] - ys[i0 + b]);
            }
        }
        acc += g[i0 + a] * w;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::ChartSpec;
    use crate::spectral::{analyze, force_from_modes};
    use crate::steady_state::{build_kepler, PolytropeParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::sync::OnceLock;

    fn chart() -> &'static ActionChart {
        static CHART: OnceLock<ActionChart> = OnceLock::new();
        CHART.get_or_init(|| {
            let model =
                build_kepler(PolytropeParams::new(3.5, 2.0, 0.0, -0.25, 1.0, 1.0)).unwrap();
            ActionChart::build(
                &model,
                ChartSpec { n_e: 129, n_l: 65, n_theta: 64, ..Default::default() },
            )
            .unwrap()
        })
    }

    fn rows() -> &'static RowSet {
        static ROWS: OnceLock<RowSet> = OnceLock::new();
        ROWS.get_or_init(|| {
            let c = chart();
            let model = &c.model;
            let n = 33;
            let grid: Vec<f64> = (0..n)
                .map(|k| model.r_min + (model.r_max - model.r_min) * k as f64 / (n - 1) as f64)
                .collect();
            RowSet::build(c, grid, RowSpec { n_u: 33, n_l_base: 40, n_l_cluster: 16 }).unwrap()
        })
    }

    #[test]
    fn filon_matches_direct_quadrature() {
        let n = 400;
        let ys: Vec<f64> = (0..n).map(|k| 0.05 + 0.1 * k as f64 / (n - 1) as f64).collect();
        let g: Vec<f64> = ys.iter().map(|&y| (y - 0.05) * (0.15 - y) * (2.0 + y)).collect();
        for omega in [0.0, 3.0, 250.0, -4000.0] {
            let phased: Vec<Complex64> = ys
                .iter()
                .zip(&g)
                .map(|(&y, &a)| {
                    let ang = omega * y;
                    a * Complex64::new(ang.cos(), ang.sin())
                })
                .collect();
            let got = filon_pwl_prephased(&ys, &phased, omega);
            let rule = crate::numerics::quad::gauss_legendre(2048);
            let re = rule.integrate(0.05, 0.15, |y| {
                (y - 0.05) * (0.15 - y) * (2.0 + y) * (omega * y).cos()
            });
            let im = rule.integrate(0.05, 0.15, |y| {
                (y - 0.05) * (0.15 - y) * (2.0 + y) * (omega * y).sin()
            });
            assert_abs_diff_eq!(got.re, re, epsilon = 3e-9);
            assert_abs_diff_eq!(got.im, im, epsilon = 3e-9);
        }
    }

    #[test]
    fn log_kernel_matches_direct_quadrature() {
        let n = 400;
        let ys: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
        let g: Vec<f64> = ys.iter().map(|&y| 1.0 / (1.0 + y * y)).collect();
        let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let c = Complex64::new(-0.3, 1e-2);
        let got = log_kernel_pwl_refined(&ys, &gc, c);
        let rule = crate::numerics::quad::gauss_legendre(8192);
        let f = |y: f64| 1.0 / (1.0 + y * y) / (y + c);
        let re = rule.integrate(-1.0, 1.0, |y| f(y).re);
        let im = rule.integrate(-1.0, 1.0, |y| f(y).im);
        assert_abs_diff_eq!(got.re, re, epsilon = 1e-5);
        assert_abs_diff_eq!(got.im, im, epsilon = 1e-5);
    }

    #[test]
    fn static_row_force_agrees_with_chart_trapezoid() {
        let c = chart();
        let rs = rows();
        let field = analyze(c, |p| p.w * (1.0 + 0.1 * p.r), 12, None).unwrap();
        let profile = rs.force_profile(&field, 0.0);
        for (i, &r) in rs.r_grid.iter().enumerate() {
            if r <= c.model.r_min + 0.05 || r >= c.model.r_max - 0.05 {
                continue;
            }
            let (direct, _) = force_from_modes(c, &field, r).unwrap();
            assert_relative_eq!(profile[i], direct, max_relative = 2e-3);
        }
    }

    #[test]
    fn rim_forces_vanish() {
        let c = chart();
        let rs = rows();
        let field = analyze(c, |p| p.w, 8, None).unwrap();
        let profile = rs.force_profile(&field, 7.0);
        assert_abs_diff_eq!(profile[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(*profile.last().unwrap(), 0.0, epsilon = 1e-13);
    }
}
