//! Fourier analysis in the angle variable: mode decomposition of phase-space
//! data on the chart grid, Green's-function modes of the radial force,
//! force/potential synthesis, and the trapping mode-scaling diagnostic.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle::{angle_with_geometry, ActionChart, OrbitGeometry, OrbitPoint};
use crate::error::{Error, Result};
use crate::numerics::fit::line_fit;
use crate::numerics::interp::Cubic1D;
use crate::numerics::quad::cumulative_from_right;
use crate::numerics::roots::brent;

/// Angle-Fourier coefficients of a real phase-space function on the chart
/// grid. Only m = 1..=m_max is stored; negative modes follow by conjugation
/// and the m = 0 channel is excluded structurally (its measured magnitude is
/// kept for diagnostics).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeField {
    pub m_max: usize,
    pub n_nodes: usize,
    pub data: Vec<Complex64>,
    /// Largest |mean-in-angle| seen during analysis.
    pub m0_residual: f64,
}

impl ModeField {
    pub fn zeros(m_max: usize, n_nodes: usize) -> Self {
        Self { m_max, n_nodes, data: vec![Complex64::ZERO; m_max * n_nodes], m0_residual: 0.0 }
    }

    #[inline]
    pub fn idx(&self, m: usize, node: usize) -> usize {
        debug_assert!(m >= 1 && m <= self.m_max);
        (m - 1) * self.n_nodes + node
    }

    /// Coefficient for signed mode index (conjugate for m < 0).
    #[inline]
    pub fn get(&self, m: i64, node: usize) -> Complex64 {
        if m == 0 {
            return Complex64::ZERO;
        }
        let c = self.data[self.idx(m.unsigned_abs() as usize, node)];
        if m > 0 {
            c
        } else {
            c.conj()
        }
    }

    #[inline]
    pub fn positive(&self, m: usize, node: usize) -> Complex64 {
        self.data[self.idx(m, node)]
    }

    pub fn slice(&self, m: usize) -> &[Complex64] {
        &self.data[(m - 1) * self.n_nodes..m * self.n_nodes]
    }
}

/// One orbit sample handed to initial-data callables.
#[derive(Debug, Clone, Copy)]
pub struct PhasePoint {
    pub r: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
    pub e: f64,
}

/// Complex exponential table e^{-2 pi i k / n} for k = 0..n.
pub struct Twiddle {
    pub n: usize,
    pub factors: Vec<Complex64>,
}

impl Twiddle {
    pub fn new(n: usize) -> Self {
        let factors = (0..n)
            .map(|k| {
                let ang = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        Self { n, factors }
    }

    #[inline]
    pub fn forward(&self, m: usize, j: usize) -> Complex64 {
        self.factors[(m * j) % self.n]
    }
}

/// Forward angle-DFT of one orbit's samples: f_hat(m) = (1/N) sum_j v_j
/// e^{-2 pi i m j / N} for m = 0..=m_max.
pub fn dft_modes(values: &[f64], m_max: usize, tw: &Twiddle) -> Vec<Complex64> {
    let n = tw.n;
    debug_assert_eq!(values.len(), n);
    let mut out = vec![Complex64::ZERO; m_max + 1];
    for (m, out_m) in out.iter_mut().enumerate() {
        let mut acc = Complex64::ZERO;
        for (j, &v) in values.iter().enumerate() {
            acc += v * tw.forward(m, j);
        }
        *out_m = acc / n as f64;
    }
    out
}

/// Mode decomposition of real initial data sampled along cached orbits.
///
/// With `strict_tol` set, a mean-in-angle magnitude above the tolerance is an
/// orthogonality error; otherwise it is only recorded.
pub fn analyze<F>(chart: &ActionChart, f0: F, m_max: usize, strict_tol: Option<f64>) -> Result<ModeField>
where
    F: Fn(&PhasePoint) -> f64 + Sync,
{
    let n_theta = chart.spec.n_theta;
    if n_theta < 4 * m_max {
        return Err(Error::InvalidParameter(format!(
            "n_theta = {n_theta} must be at least 4 m_max = {}",
            4 * m_max
        )));
    }
    let n_nodes = chart.n_nodes();
    let n_half = chart.n_half();
    let tw = Twiddle::new(n_theta);
    let n_e = chart.taus.len();
    let results: Vec<(Vec<Complex64>, f64)> = (0..n_nodes)
        .into_par_iter()
        .map(|node| {
            let j_l = node / n_e;
            let i_tau = node % n_e;
            let point = chart.node_point(i_tau, j_l);
            let (rs, ws) = chart.orbit_samples(node);
            let mut vals = vec![0.0; n_theta];
            for j in 0..n_theta {
                let (r, w, theta) = if j <= n_half {
                    (rs[j], ws[j], j as f64 / n_theta as f64)
                } else {
                    (rs[n_theta - j], -ws[n_theta - j], j as f64 / n_theta as f64)
                };
                vals[j] = f0(&PhasePoint { r, w, l: point.l, theta, e: point.e });
            }
            let modes = dft_modes(&vals, m_max, &tw);
            let m0 = modes[0].norm();
            (modes, m0)
        })
        .collect();
    let mut field = ModeField::zeros(m_max, n_nodes);
    let mut m0_max = 0.0f64;
    for (node, (modes, m0)) in results.into_iter().enumerate() {
        m0_max = m0_max.max(m0);
        for m in 1..=m_max {
            field.data[(m - 1) * n_nodes + node] = modes[m];
        }
    }
    field.m0_residual = m0_max;
    if let Some(tol) = strict_tol {
        if m0_max > tol {
            return Err(Error::Orthogonality { magnitude: m0_max, tol });
        }
    }
    Ok(field)
}

/// Orbit geometry from chart interpolation, with turning points polished by
/// Newton steps on the stable energy difference.
pub fn chart_geometry(chart: &ActionChart, point: OrbitPoint) -> OrbitGeometry {
    let model = &chart.model;
    let (r_minus, r_plus) = if model.is_kepler() {
        crate::steady_state::kepler::turning_points(model.params.central_mass, point.e, point.l)
    } else {
        let mut rm = chart.r_minus_at(point.e, point.l);
        let mut rp = chart.r_plus_at(point.e, point.l);
        for _ in 0..3 {
            let f = model.energy_minus_psi(point.e, rm, point.l);
            let d = -model.psi_prime(rm, point.l);
            if d.abs() > 1e-300 {
                rm -= f / d;
            }
        }
        for _ in 0..3 {
            let f = model.energy_minus_psi(point.e, rp, point.l);
            let d = -model.psi_prime(rp, point.l);
            if d.abs() > 1e-300 {
                rp -= f / d;
            }
        }
        (rm, rp)
    };
    OrbitGeometry {
        point,
        r_minus,
        r_plus,
        period: chart.period_at(point.e, point.l),
        e_min: chart.e_min_at(point.l),
        r_l: chart.r_l_at(point.l),
        curvature: chart.curvature_at(point.l),
    }
}

/// Angle theta(R, I) in [0, 1/2] of the radius crossing, for orbits that
/// reach R.
pub fn angle_on_radius(chart: &ActionChart, r: f64, point: OrbitPoint) -> Result<f64> {
    let z = chart.model.energy_minus_psi(point.e, r, point.l);
    if z < 0.0 {
        return Err(Error::OutsideDomain {
            what: "radius crossing angle",
            detail: format!("orbit does not reach R = {r}"),
        });
    }
    let geo = chart_geometry(chart, point);
    let w = (2.0 * z.max(0.0)).sqrt();
    angle_with_geometry(&chart.model, r.clamp(geo.r_minus, geo.r_plus), w, &geo)
}

/// Angle-Fourier mode of the force Green's function: (1/pi m) sin(2 pi m
/// theta(R, I)) on orbits crossing R, zero otherwise.
pub fn greens_mode(chart: &ActionChart, r: f64, m: i64, point: OrbitPoint) -> Result<f64> {
    assert!(m != 0, "Green's modes are defined for m != 0");
    if chart.model.energy_minus_psi(point.e, r, point.l) < 0.0 {
        return Ok(0.0);
    }
    let theta = angle_on_radius(chart, r, point)?;
    Ok((2.0 * std::f64::consts::PI * m as f64 * theta).sin() / (std::f64::consts::PI * m as f64))
}

/// A scalar radial profile on [r_min, r_max] with c/R exterior continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Exterior coefficient: profile(r) = exterior_c / r for r >= r_max.
    pub exterior_c: f64,
    interp: Cubic1D,
}

impl RadialProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, exterior_c: f64) -> Self {
        let interp = Cubic1D::new(grid.clone(), values.clone());
        Self { grid, values, exterior_c, interp }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let last = *self.grid.last().unwrap();
        if r >= last {
            if self.exterior_c == 0.0 {
                0.0
            } else {
                self.exterior_c / r
            }
        } else if r <= self.grid[0] {
            self.values[0]
        } else {
            self.interp.eval(r)
        }
    }
}

/// Quadrature weights of the clipped chart-grid trapezoid rule on
/// { E >= Psi_L(R) } at one radius: per included node, the product of the
/// (partial-cell-corrected) tau weight, the L weight, and the energy span.
pub fn clipped_weights(chart: &ActionChart, r: f64) -> Vec<(usize, f64)> {
    let n_e = chart.taus.len();
    let l_w = crate::numerics::quad::trapezoid_weights(&chart.ls);
    let mut out = Vec::new();
    for (j, &l) in chart.ls.iter().enumerate() {
        let em = chart.e_min[j];
        let delta = chart.model.e0 - em;
        if delta <= 0.0 {
            continue;
        }
        // threshold in tau where E = Psi_L(R)
        let z0 = chart.model.energy_minus_psi(chart.model.e0, r, l);
        if z0 <= 0.0 {
            continue; // no orbit at this L reaches R
        }
        let tau_star = 1.0 - z0 / delta;
        let taus = &chart.taus;
        // first included node
        let i0 = match taus.iter().position(|&t| t > tau_star) {
            Some(i) => i,
            None => continue,
        };
        for i in i0..n_e {
            let left = if i == i0 { tau_star.max(0.0) } else { taus[i - 1] };
            let right = if i + 1 < n_e { taus[i + 1] } else { taus[i] };
            let w_tau = if i == i0 {
                0.5 * (taus[i].min(right) - left) + if i + 1 < n_e { 0.5 * (right - taus[i]) } else { 0.0 }
            } else if i + 1 < n_e {
                0.5 * (right - left)
            } else {
                0.5 * (taus[i] - left)
            };
            out.push((j * n_e + i, w_tau * l_w[j] * delta));
        }
    }
    out
}

/// Static radial force synthesis of the |phi'|-weighted field from its angle
/// modes, by the clipped chart-grid trapezoid rule.
///
/// Returns (force value, imaginary residual of the complex mode sum).
pub fn force_from_modes(chart: &ActionChart, field: &ModeField, r: f64) -> Result<(f64, f64)> {
    let weights = clipped_weights(chart, r);
    let n_e = chart.taus.len();
    let mut acc = Complex64::ZERO;
    for &(node, w) in &weights {
        let j = node / n_e;
        let i = node % n_e;
        let point = chart.node_point(i, j);
        let phi = chart.model.phi_prime_abs(point.e, point.l);
        if phi == 0.0 {
            continue;
        }
        let theta = match angle_on_radius(chart, r, point) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let t_orb = chart.period[node];
        let base = 2.0 * std::f64::consts::PI * theta;
        for m in 1..=field.m_max {
            let s_m = (base * m as f64).sin();
            let term = field.get(m as i64, node) * s_m / m as f64
                + field.get(-(m as i64), node) * (-s_m) / (-(m as f64));
            acc += term * (phi * t_orb * w);
        }
    }
    let pref = 4.0 * std::f64::consts::PI / (r * r);
    Ok((pref * acc.re, (pref * acc.im).abs()))
}

/// Potential from a tabulated force profile: U(R) = -int_R^{Rmax} F dr +
/// c/Rmax, where c is the exterior coefficient (zero for mass-free data).
pub fn potential_from_force(grid: &[f64], force: &[f64], exterior_c: f64) -> RadialProfile {
    let mut u = cumulative_from_right(grid, force);
    let r_max = *grid.last().unwrap();
    let tail = if exterior_c == 0.0 { 0.0 } else { exterior_c / r_max };
    for v in u.iter_mut() {
        *v = -*v + tail;
    }
    // cumulative_from_right returns +int; U(R) = tail - int_R^{Rmax} F
    RadialProfile::new(grid.to_vec(), u, exterior_c)
}

/// Least-squares slope of log |f_hat(m, E, L)| against log(E - E_min^L)
/// along one L slice of the chart, restricted to the given depth window.
pub fn mode_scaling_exponent(
    chart: &ActionChart,
    field: &ModeField,
    j_l: usize,
    m: usize,
    eps_window: (f64, f64),
) -> Result<(f64, f64, usize)> {
    let n_e = chart.taus.len();
    let delta = chart.model.e0 - chart.e_min[j_l];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 1..n_e {
        let eps = chart.taus[i] * delta;
        if eps < eps_window.0 || eps > eps_window.1 {
            continue;
        }
        let mag = field.positive(m, j_l * n_e + i).norm();
        if mag > 0.0 {
            xs.push(eps.ln());
            ys.push(mag.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "only {} usable nodes in the depth window {:?}",
            xs.len(),
            eps_window
        )));
    }
    let (slope, _, res) = line_fit(&xs, &ys);
    Ok((slope, res, xs.len()))
}

/// Brute-force reference: theta(R, I) located by bisection on the monotone
/// half-orbit of the ODE flow (independent of the angle quadrature).
pub fn crossing_angle_by_ode(chart: &ActionChart, r: f64, point: OrbitPoint) -> Result<f64> {
    let model = &chart.model;
    let geo = crate::action_angle::orbit_geometry(model, point)?;
    if r <= geo.r_minus {
        return Ok(0.0);
    }
    if r >= geo.r_plus {
        return Ok(0.5);
    }
    let f = |theta: f64| -> f64 {
        let (rr, _) = crate::action_angle::orbit_position_with_geometry(
            model,
            theta,
            &geo,
            crate::numerics::ode::OdeTol::default(),
        )
        .unwrap_or((f64::NAN, 0.0));
        rr - r
    };
    brent(f, 0.0, 0.5, 1e-12, 200, "orbit radius crossing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::ChartSpec;
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
                ChartSpec { n_e: 97, n_l: 49, n_theta: 64, ..Default::default() },
            )
            .unwrap()
        })
    }

    #[test]
    fn analyze_odd_data_gives_imaginary_modes() {
        let field = analyze(chart(), |p| p.w * (p.e + 0.5), 8, Some(1e-12)).unwrap();
        for m in 1..=8usize {
            for node in (0..field.n_nodes).step_by(97) {
                let c = field.positive(m, node);
                assert!(c.re.abs() < 1e-12, "w-odd data must be purely imaginary, got {c}");
            }
        }
    }

    #[test]
    fn analyze_isotropic_data_has_no_modes() {
        let field = analyze(chart(), |p| p.e * p.e + p.l, 8, None).unwrap();
        let max: f64 = field.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(max < 1e-12, "angle-independent data must have no nonzero modes, got {max}");
    }

    #[test]
    fn analyze_radial_offset_matches_slow_dft_oracle() {
        let c = chart();
        let field = analyze(c, |p| p.r, 6, None).unwrap();
        // off-cache slow DFT at one node via the ODE flow
        let (i, j) = (60usize, 25usize);
        let node = c.node_index(i, j);
        let point = c.node_point(i, j);
        let geo = crate::action_angle::orbit_geometry(&c.model, point).unwrap();
        let n = 799usize;
        for m in [1usize, 3] {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                let theta = k as f64 / n as f64;
                let (r, _) = crate::action_angle::orbit_position_with_geometry(
                    &c.model,
                    theta,
                    &geo,
                    crate::numerics::ode::OdeTol::default(),
                )
                .unwrap();
                let ang = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                acc += r * Complex64::new(ang.cos(), ang.sin());
            }
            acc /= n as f64;
            let got = field.positive(m, node);
            assert_abs_diff_eq!(got.re, acc.re, epsilon = 1e-8);
            assert_abs_diff_eq!(got.im, acc.im, epsilon = 1e-8);
            // r - r_L data has real coefficients
            assert!(got.im.abs() < 1e-10);
        }
    }

    #[test]
    fn plancherel_at_sample_nodes() {
        let c = chart();
        let f0 = |p: &PhasePoint| p.w + 0.3 * (p.r - 2.0);
        let n_theta = c.spec.n_theta;
        let n_half = c.n_half();
        let tw = Twiddle::new(n_theta);
        for &(i, j) in &[(50usize, 20usize), (80, 5), (30, 40)] {
            let node = c.node_index(i, j);
            let point = c.node_point(i, j);
            let (rs, ws) = c.orbit_samples(node);
            let mut vals = vec![0.0; n_theta];
            let mut quad = 0.0;
            for (k, val) in vals.iter_mut().enumerate() {
                let (r, w) = if k <= n_half {
                    (rs[k], ws[k])
                } else {
                    (rs[n_theta - k], -ws[n_theta - k])
                };
                *val = f0(&PhasePoint { r, w, l: point.l, theta: 0.0, e: point.e });
                quad += *val * *val / n_theta as f64;
            }
            // full-bin discrete Parseval: |m| <= N/2 with a single Nyquist bin
            let modes = dft_modes(&vals, n_half, &tw);
            let mut sum = modes[0].norm_sqr() + modes[n_half].norm_sqr();
            for m in modes.iter().take(n_half).skip(1) {
                sum += 2.0 * m.norm_sqr();
            }
            assert_relative_eq!(sum, quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn greens_mode_closed_values() {
        let c = chart();
        let point = OrbitPoint::new(-0.3, 1.2);
        let geo = chart_geometry(c, point);
        // at the outer turning point theta = 1/2 and every mode vanishes
        // (the angle approaches 1/2 like sqrt(r_plus - r), so stay exact)
        for m in [1i64, 2, 5] {
            let v = greens_mode(c, geo.r_plus, m, point).unwrap();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-7);
        }
        // bound |h_m| <= 1/(pi |m|)
        for m in [1i64, -3, 7] {
            for r in [1.0, 1.7, 2.9] {
                let v = greens_mode(c, r, m, point).unwrap();
                assert!(v.abs() <= 1.0 / (std::f64::consts::PI * m.unsigned_abs() as f64) + 1e-14);
            }
        }
        // quarter-angle value for m = 1 is 1/pi
        let f = |r: f64| angle_on_radius(c, r, point).unwrap() - 0.25;
        let r_quarter = brent(f, geo.r_minus, geo.r_plus, 1e-12, 100, "quarter").unwrap();
        let v = greens_mode(c, r_quarter, 1, point).unwrap();
        assert_relative_eq!(v, 1.0 / std::f64::consts::PI, max_relative = 1e-8);
    }

    #[test]
    fn greens_identity_against_ode_dft() {
        let c = chart();
        let point = OrbitPoint::new(-0.31, 1.15);
        let r = 2.4;
        let theta_ode = crossing_angle_by_ode(c, r, point).unwrap();
        // brute DFT of the orbit indicator with the crossing pinned by the ODE
        let n = 1usize << 20;
        for m in [1i64, 4, 9, 16] {
            let mf = m as f64;
            let mut acc = 0.0;
            // indicator is 1 for |theta| <= theta_ode (wrap-around interval);
            // sum the real part of the DFT over the support
            let j_max = (theta_ode * n as f64).floor() as usize;
            for j in 0..=j_max {
                let ang = 2.0 * std::f64::consts::PI * mf * j as f64 / n as f64;
                acc += if j == 0 { ang.cos() } else { 2.0 * ang.cos() };
            }
            let dft = acc / n as f64;
            let formula = greens_mode(c, r, m, point).unwrap();
            assert_abs_diff_eq!(dft, formula, epsilon = 1e-5);
        }
    }

    #[test]
    fn force_of_isotropic_data_vanishes() {
        let c = chart();
        let field = analyze(c, |p| (p.e + 0.4) * p.l, 8, None).unwrap();
        let (f, im) = force_from_modes(c, &field, 2.0).unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-12);
        assert!(im < 1e-12);
    }

    #[test]
    fn force_matches_direct_phase_space_quadrature() {
        let c = chart();
        let model = &c.model;
        let f0 = |p: &PhasePoint| p.w;
        let field = analyze(c, f0, 16, None).unwrap();
        let rule = crate::numerics::quad::gauss_legendre(96);
        for &r in &[1.2, 1.9, 2.6, 3.1] {
            let (force, im) = force_from_modes(c, &field, r).unwrap();
            assert!(im <= 1e-10 * force.abs().max(1e-12));
            // direct (s, w, L) quadrature of |phi'| f0 over {s <= R}
            let direct = rule.integrate(model.r_min, r, |s| {
                rule.integrate(model.params.l0, model.l_max, |l| {
                    let z0 = model.energy_minus_psi(model.e0, s, l);
                    if z0 <= 0.0 {
                        return 0.0;
                    }
                    let wmax = (2.0 * z0).sqrt();
                    rule.integrate(-wmax, wmax, |w| {
                        let e = model.e0 - (z0 - 0.5 * w * w);
                        model.phi_prime_abs(e, l) * w
                    })
                })
            });
            let direct = direct * 4.0 * std::f64::consts::PI * std::f64::consts::PI / (r * r);
            assert_relative_eq!(force, direct, max_relative = 1e-4);
        }
    }

    #[test]
    fn mass_free_force_integrates_to_zero_potential_at_the_rim() {
        let c = chart();
        let field = analyze(c, |p| p.w * (1.0 + 0.2 * p.r), 16, None).unwrap();
        let model = &c.model;
        let n = 96;
        let grid: Vec<f64> = (0..n)
            .map(|k| model.r_min + (model.r_max - model.r_min) * k as f64 / (n - 1) as f64)
            .collect();
        let force: Vec<f64> =
            grid.iter().map(|&r| force_from_modes(c, &field, r).unwrap().0).collect();
        let u = potential_from_force(&grid, &force, 0.0);
        assert_abs_diff_eq!(u.eval(model.r_max), 0.0, epsilon = 1e-14);
        // the potential is the integral of the force: spot check the slope
        let mid = 0.5 * (model.r_min + model.r_max);
        let h = 1e-4;
        let slope = (u.eval(mid + h) - u.eval(mid - h)) / (2.0 * h);
        let f_mid = force_from_modes(c, &field, mid).unwrap().0;
        assert_relative_eq!(slope, f_mid, max_relative = 1e-3);
    }

    #[test]
    fn mode_scaling_exponents_near_trapping() {
        let c = chart();
        let field = analyze(c, |p| p.w, 4, None).unwrap();
        for m in 1..=4usize {
            let (slope, _res, n) =
                mode_scaling_exponent(c, &field, 24, m, (1e-6, 1e-2)).unwrap();
            assert!(n >= 10);
            assert_abs_diff_eq!(slope, m as f64 / 2.0, epsilon = 0.1);
        }
    }
}
