//! Limiting-absorption pipeline: Plemelj singular integrals on the row
//! cache, the resolvent source term, Neumann inversion of the nonlocal force
//! operator, near-resonant mode bookkeeping, and spectral (Stone-type)
//! reconstruction of the force evolution.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::action_angle::ActionChart;
use crate::error::{Error, Result};
use crate::numerics::interp::Cubic1D;
use crate::rows::{log_kernel_pwl_refined, RadiusRows, RowSet};
use crate::spectral::{ModeField, Twiddle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// A point of the spectral plane at which the regularised resolvent is
/// evaluated.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralPoint {
    pub lambda: f64,
    pub epsilon: f64,
    pub branch: Branch,
}

impl SpectralPoint {
    pub fn new(lambda: f64, epsilon: f64, branch: Branch) -> Self {
        Self { lambda, epsilon, branch }
    }

    /// Kernel offset c_m = (lambda ± i eps) / (2 pi m) for signed m.
    pub fn offset(&self, m: i64) -> Complex64 {
        Complex64::new(self.lambda, self.branch.sign() * self.epsilon)
            / (2.0 * std::f64::consts::PI * m as f64)
    }
}

/// Near-resonant angle modes at frequency lambda: m with some orbital
/// frequency within mu_tilde * omega_min of the singular line.
pub fn near_resonant_set(
    chart: &ActionChart,
    lambda: f64,
    mu_tilde: f64,
    m_cap: i64,
) -> Vec<i64> {
    let lo = chart.omega_min - mu_tilde * chart.omega_min;
    let hi = chart.omega_max + mu_tilde * chart.omega_min;
    let mut out = Vec::new();
    for m in 1..=m_cap {
        for sgn in [-1i64, 1] {
            let mm = sgn * m;
            let y_star = -lambda / (2.0 * std::f64::consts::PI * mm as f64);
            if y_star >= lo && y_star <= hi {
                out.push(mm);
            }
        }
    }
    out
}

/// Which regular factor multiplies the possibly singular field inside the
/// Plemelj integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlemeljWeight {
    /// q(R, y, z)
    Q,
    /// q(R, y, z) / y (equals q times the orbital period)
    QOverY,
}

/// The possibly singular field of the Plemelj integral.
pub enum PlemeljField<'a> {
    /// f_hat_0(m, I) S_m(theta(R, I)) from analysed initial data.
    InitialData(&'a ModeField),
    /// V_hat_m(I) S_m(theta(R, I)) from angle modes of a radial profile
    /// (even in theta, so V_hat_{-m} = V_hat_m).
    ProfileModes(&'a [Complex64]),
}

/// Resolvent workspace tied to one chart/row cache and one initial datum.
pub struct ResolventCtx<'a> {
    pub chart: &'a ActionChart,
    pub rows: &'a RowSet,
    pub f0: &'a ModeField,
    pub m_max: usize,
    pub eta: f64,
    pub mu_tilde: f64,
    pub neumann_tol: f64,
    pub max_iter: usize,
    twiddle: Twiddle,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventSolution {
    pub lambda: f64,
    pub epsilon: f64,
    pub branch: Branch,
    pub u: Vec<Complex64>,
    pub iterations: usize,
    pub contraction: f64,
}

impl<'a> ResolventCtx<'a> {
    pub fn new(
        chart: &'a ActionChart,
        rows: &'a RowSet,
        f0: &'a ModeField,
        m_max: usize,
        eta: f64,
    ) -> Self {
        let mu_tilde = 0.5 * chart.omega_min / chart.omega_max;
        Self {
            chart,
            rows,
            f0,
            m_max,
            eta,
            mu_tilde,
            neumann_tol: 1e-10,
            max_iter: 60,
            twiddle: Twiddle::new(chart.spec.n_theta),
        }
    }

    /// Plemelj singular integral over the foliated slice at one radius:
    /// int Q V / (y + c_m) d(y, z), rows integrated with the exact log rule
    /// and local refinement near the singular line.
    pub fn plemelj(
        &self,
        rad: &RadiusRows,
        m: i64,
        sp: SpectralPoint,
        weight: PlemeljWeight,
        field: &PlemeljField,
    ) -> Complex64 {
        let c = sp.offset(m);
        let nodes = &rad.nodes;
        let m_abs = m.unsigned_abs() as usize;
        let mut acc = Complex64::ZERO;
        let mut amp: Vec<Complex64> = Vec::new();
        for row in &rad.rows {
            amp.clear();
            for k in row.offset..row.offset + row.len {
                let s_m = sin_m(nodes.sin1[k], nodes.cos1[k], m_abs);
                let s_m = if m > 0 { s_m } else { -s_m };
                let v = match field {
                    PlemeljField::InitialData(f) => {
                        let fm = nodes.sample(k, f.slice(m_abs));
                        if m > 0 {
                            fm
                        } else {
                            fm.conj()
                        }
                    }
                    PlemeljField::ProfileModes(v) => {
                        // even in theta: same coefficient for both signs
                        sample_profile_mode(nodes, k, v, m_abs, self.chart.n_nodes())
                    }
                };
                let q = match weight {
                    PlemeljWeight::Q => nodes.q[k],
                    PlemeljWeight::QOverY => nodes.q[k] / nodes.y[k],
                };
                amp.push(v * (q * s_m));
            }
            let ys = &nodes.y[row.offset..row.offset + row.len];
            acc += row.weight * log_kernel_pwl_refined(ys, &amp, c);
        }
        acc
    }

    /// Angle modes of a complex radial profile along every cached orbit
    /// (cosine transform; even in theta).
    pub fn profile_modes(&self, profile: &[Complex64]) -> Vec<Complex64> {
        let grid = &self.rows.r_grid;
        let re = Cubic1D::new(grid.clone(), profile.iter().map(|c| c.re).collect());
        let im = Cubic1D::new(grid.clone(), profile.iter().map(|c| c.im).collect());
        let r_max = *grid.last().unwrap();
        let r_min = grid[0];
        let chart = self.chart;
        let n_half = chart.n_half();
        let n_theta = chart.spec.n_theta;
        let n_nodes = chart.n_nodes();
        let m_max = self.m_max;
        let cols: Vec<Vec<Complex64>> = (0..n_nodes)
            .into_par_iter()
            .map(|node| {
                let (rs, _) = chart.orbit_samples(node);
                let mut u = vec![Complex64::ZERO; n_half + 1];
                for (j, &r) in rs.iter().enumerate() {
                    let rc = r.clamp(r_min, r_max);
                    u[j] = Complex64::new(re.eval(rc), im.eval(rc));
                }
                let mut modes = vec![Complex64::ZERO; m_max];
                for (mi, mode) in modes.iter_mut().enumerate() {
                    let m = mi + 1;
                    let mut acc = u[0];
                    for (j, &v) in u.iter().enumerate().take(n_half).skip(1) {
                        acc += 2.0 * v * self.twiddle.forward(m, j).re;
                    }
                    acc += u[n_half] * if m % 2 == 0 { 1.0 } else { -1.0 };
                    *mode = acc / n_theta as f64;
                }
                modes
            })
            .collect();
        let mut out = vec![Complex64::ZERO; m_max * n_nodes];
        for (node, modes) in cols.into_iter().enumerate() {
            for (mi, &v) in modes.iter().enumerate() {
                out[mi * n_nodes + node] = v;
            }
        }
        out
    }

    /// Integrated source profile: the right-hand side of the fixed-point
    /// equation for the resolvent potential,
    /// S(R) = - sum_m (1/m^2) int_R^{Rmax} (2/r^2) Pl_m[q/y, f0_m S_m] dr.
    pub fn source_term(&self, sp: SpectralPoint) -> Vec<Complex64> {
        let grid = &self.rows.r_grid;
        let inner: Vec<Complex64> = self
            .rows
            .radii
            .par_iter()
            .map(|rad| {
                let mut acc = Complex64::ZERO;
                for m_abs in 1..=self.m_max as i64 {
                    for m in [m_abs, -m_abs] {
                        let pl = self.plemelj(
                            rad,
                            m,
                            sp,
                            PlemeljWeight::QOverY,
                            &PlemeljField::InitialData(self.f0),
                        );
                        acc += pl / (m * m) as f64;
                    }
                }
                acc * (-2.0 / (rad.r * rad.r))
            })
            .collect();
        cumulative_complex_from_right(grid, &inner)
    }

    /// The Neumann update K[V](R) = eta sum_m (1/m) int_R^{Rmax} (4 pi / r^2)
    /// Pl_m[q, V_hat_m S_m] dr, so that the resolvent potential solves
    /// U = source + K[U].
    pub fn apply_k(&self, sp: SpectralPoint, v: &[Complex64]) -> Vec<Complex64> {
        let v_modes = self.profile_modes(v);
        let grid = &self.rows.r_grid;
        let inner: Vec<Complex64> = self
            .rows
            .radii
            .par_iter()
            .map(|rad| {
                let mut acc = Complex64::ZERO;
                for m_abs in 1..=self.m_max as i64 {
                    for m in [m_abs, -m_abs] {
                        let pl = self.plemelj(
                            rad,
                            m,
                            sp,
                            PlemeljWeight::Q,
                            &PlemeljField::ProfileModes(&v_modes),
                        );
                        acc += pl / m as f64;
                    }
                }
                acc * (4.0 * std::f64::consts::PI * self.eta / (rad.r * rad.r))
            })
            .collect();
        cumulative_complex_from_right(grid, &inner)
    }

    /// Neumann iteration for the resolvent potential at one spectral point.
    pub fn solve(&self, sp: SpectralPoint) -> Result<ResolventSolution> {
        let source = self.source_term(sp);
        let scale = sup_norm(&source).max(1e-300);
        let mut u = source.clone();
        let mut last_update = f64::INFINITY;
        let mut contraction = 0.0f64;
        let mut iterations = 0;
        if self.eta != 0.0 {
            loop {
                iterations += 1;
                let ku = self.apply_k(sp, &u);
                let mut update = 0.0f64;
                let mut u_next = source.clone();
                for (i, un) in u_next.iter_mut().enumerate() {
                    *un += ku[i];
                    update = update.max((*un - u[i]).norm());
                }
                u = u_next;
                if last_update.is_finite() && last_update > 0.0 {
                    let ratio = update / last_update;
                    contraction = contraction.max(ratio);
                    if ratio >= 1.0 {
                        return Err(Error::ContractionFailure {
                            factor: ratio,
                            lambda: sp.lambda,
                            eta: self.eta,
                        });
                    }
                }
                last_update = update;
                if update < self.neumann_tol * scale {
                    break;
                }
                if iterations >= self.max_iter {
                    return Err(Error::ContractionFailure {
                        factor: contraction,
                        lambda: sp.lambda,
                        eta: self.eta,
                    });
                }
            }
        }
        Ok(ResolventSolution {
            lambda: sp.lambda,
            epsilon: sp.epsilon,
            branch: sp.branch,
            u,
            iterations,
            contraction,
        })
    }

    /// Spectral correction kernel of the force reconstruction at one lambda:
    /// G(lambda, R) = (2 i eta / R^2) sum_m (1/m)
    ///   [ Pl^-_m[q, U^-_m S_m] - Pl^+_m[q, U^+_m S_m] ](R).
    pub fn correction_kernel(
        &self,
        lambda: f64,
        epsilon: f64,
        u_plus: &[Complex64],
        u_minus: &[Complex64],
    ) -> Vec<Complex64> {
        let plus_modes = self.profile_modes(u_plus);
        let minus_modes = self.profile_modes(u_minus);
        let sp_plus = SpectralPoint::new(lambda, epsilon, Branch::Plus);
        let sp_minus = SpectralPoint::new(lambda, epsilon, Branch::Minus);
        self.rows
            .radii
            .par_iter()
            .map(|rad| {
                let mut acc = Complex64::ZERO;
                for m_abs in 1..=self.m_max as i64 {
                    for m in [m_abs, -m_abs] {
                        let a = self.plemelj(
                            rad,
                            m,
                            sp_minus,
                            PlemeljWeight::Q,
                            &PlemeljField::ProfileModes(&minus_modes),
                        );
                        let b = self.plemelj(
                            rad,
                            m,
                            sp_plus,
                            PlemeljWeight::Q,
                            &PlemeljField::ProfileModes(&plus_modes),
                        );
                        acc += (a - b) / m as f64;
                    }
                }
                acc * Complex64::new(0.0, 2.0 * self.eta / (rad.r * rad.r))
            })
            .collect()
    }
}

fn sin_m(s1: f64, c1: f64, m: usize) -> f64 {
    // Chebyshev-style recurrence on sin(m theta)
    let mut s = s1;
    let mut c = c1;
    for _ in 1..m {
        let sn = s * c1 + c * s1;
        let cn = c * c1 - s * s1;
        s = sn;
        c = cn;
    }
    s
}

fn sample_profile_mode(
    nodes: &crate::rows::NodeArrays,
    k: usize,
    v: &[Complex64],
    m: usize,
    n_nodes: usize,
) -> Complex64 {
    let slice = &v[(m - 1) * n_nodes..m * n_nodes];
    nodes.sample(k, slice)
}

fn cumulative_complex_from_right(grid: &[f64], values: &[Complex64]) -> Vec<Complex64> {
    let n = grid.len();
    let mut out = vec![Complex64::ZERO; n];
    for i in (0..n.saturating_sub(1)).rev() {
        out[i] =
            out[i + 1] + 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
    }
    out
}

fn sup_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Classical 1D Plemelj integral over a finite window: int g(y)/(y - (x ± i
/// eps)) dy computed with the same log-kernel machinery as the production
/// integrals.
pub fn plemelj_1d<F: Fn(f64) -> f64>(
    g: F,
    window: (f64, f64),
    n: usize,
    x: f64,
    eps: f64,
    branch: Branch,
) -> Complex64 {
    let ys: Vec<f64> =
        (0..n).map(|k| window.0 + (window.1 - window.0) * k as f64 / (n - 1) as f64).collect();
    let gs: Vec<Complex64> = ys.iter().map(|&y| Complex64::new(g(y), 0.0)).collect();
    // 1/(y - x -+ i eps) = 1/(y + c) with c = -x -+ i eps
    let c = Complex64::new(-x, -branch.sign() * eps);
    log_kernel_pwl_refined(&ys, &gs, c)
}

/// Principal-value Hilbert transform (1/pi) PV int g(y)/(x - y) dy on a
/// finite window, by explicit singularity subtraction. Reference oracle for
/// the classical limit checks.
pub fn hilbert_pv<F: Fn(f64) -> f64 + Copy>(g: F, window: (f64, f64), x: f64) -> f64 {
    let rule = crate::numerics::quad::gauss_legendre(512);
    let gx = g(x);
    let smooth = rule.integrate(window.0, window.1, |y| {
        if (y - x).abs() < 1e-14 {
            return 0.0;
        }
        (gx - g(y)) / (y - x)
    });
    let log_part = gx * ((window.1 - x).abs() / (x - window.0).abs()).ln();
    (smooth + log_part) / std::f64::consts::PI
}

/// lambda grid for resolvent sweeps: refined near lambda_min, then uniform
/// steps capped so that e^{i lambda t} stays resolved up to t_max.
pub fn lambda_grid(lambda_min: f64, lambda_cut: f64, t_max: f64, base_step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let fine = lambda_min * 1e-3;
    // geometric refinement leaving lambda_min
    let mut off = fine;
    out.push(lambda_min + 1e-6 * lambda_min);
    while off < 12.0 * base_step {
        out.push(lambda_min + off);
        off *= 1.7;
    }
    let step = base_step.min(0.5 / t_max.max(1.0));
    let mut lam = out.last().copied().unwrap() + step;
    while lam < lambda_cut {
        out.push(lam);
        lam += step;
    }
    out.push(lambda_cut);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::ChartSpec;
    use crate::initial_data::InitialData;
    use crate::rows::{RowSet, RowSpec};
    use crate::spectral::analyze;
    use crate::steady_state::{build_selfconsistent, PolytropeParams, SteadyStateNumerics};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::sync::OnceLock;

    struct Fixture {
        chart: ActionChart,
        rows: RowSet,
        f0: ModeField,
    }

    fn fixture() -> &'static Fixture {
        static FIX: OnceLock<Fixture> = OnceLock::new();
        FIX.get_or_init(|| {
            let p = PolytropeParams::new(3.5, 2.0, 0.01, -0.25, 1.0, 1.0);
            let model = build_selfconsistent(
                p,
                &SteadyStateNumerics { n_radial: 1024, ..Default::default() },
            )
            .unwrap();
            let chart = ActionChart::build(
                &model,
                ChartSpec { n_e: 97, n_l: 49, n_theta: 64, ..Default::default() },
            )
            .unwrap();
            let n_r = 41;
            let grid: Vec<f64> = (0..n_r)
                .map(|k| model.r_min + (model.r_max - model.r_min) * k as f64 / (n_r - 1) as f64)
                .collect();
            let rows =
                RowSet::build(&chart, grid, RowSpec { n_u: 25, n_l_base: 32, n_l_cluster: 12 })
                    .unwrap();
            let f0 = analyze(&chart, |p| InitialData::WSmooth { amplitude: 1.0 }.eval(p), 6, None)
                .unwrap();
            Fixture { chart, rows, f0 }
        })
    }

    #[test]
    fn classical_plemelj_limit_1d() {
        let g = |y: f64| 1.0 / (1.0 + y * y);
        let hg = |x: f64| x / (1.0 + x * x);
        let x = 0.4;
        let window = (-60.0, 60.0);
        // expected boundary-value: (g + i H g)/2 for the plus branch
        let expect = Complex64::new(0.5 * g(x), 0.5 * hg(x));
        let mut errs = Vec::new();
        for eps in [1e-3, 5e-4] {
            let v = plemelj_1d(g, window, 6001, x, eps, Branch::Plus)
                / Complex64::new(0.0, 2.0 * std::f64::consts::PI);
            errs.push((v - expect).norm());
        }
        assert!(errs[0] <= 1e-3, "classical limit error {} at eps = 1e-3", errs[0]);
        let ratio = errs[0] / errs[1];
        assert!((1.5..=2.5).contains(&ratio), "eps halving ratio {ratio}");
    }

    #[test]
    fn pv_oracle_matches_analytic_hilbert_transform() {
        let g = |y: f64| 1.0 / (1.0 + y * y);
        for x in [-0.7, 0.2, 1.3] {
            let full = hilbert_pv(g, (-300.0, 300.0), x);
            assert_abs_diff_eq!(full, x / (1.0 + x * x), epsilon = 1e-5);
        }
    }

    #[test]
    fn approximation_of_unity_kernel() {
        // int H^eps dy = -2 pi i sign(m) as eps -> 0, with Q = V = 1
        let ys: Vec<f64> = (0..4001).map(|k| -4.0 + 8.0 * k as f64 / 4000.0).collect();
        let ones: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); ys.len()];
        for m in [1i64, -2] {
            let lambda = 1.0;
            let eps = 1e-4;
            let cp = SpectralPoint::new(lambda, eps, Branch::Plus).offset(m);
            let cm = SpectralPoint::new(lambda, eps, Branch::Minus).offset(m);
            let diff = log_kernel_pwl_refined(&ys, &ones, cp)
                - log_kernel_pwl_refined(&ys, &ones, cm);
            let expect = Complex64::new(0.0, -2.0 * std::f64::consts::PI * m.signum() as f64);
            assert_abs_diff_eq!(diff.re, expect.re, epsilon = 2e-3);
            assert_abs_diff_eq!(diff.im, expect.im, epsilon = 2e-3);
        }
    }

    #[test]
    fn near_resonant_set_examples() {
        let f = fixture();
        let chart = &f.chart;
        let lam_min = 2.0 * std::f64::consts::PI * chart.omega_min;
        let mu = 0.5 * chart.omega_min / chart.omega_max;
        // slightly above the gap edge only |m| = 1 resonates
        let res = near_resonant_set(chart, 1.05 * lam_min, mu, 64);
        assert!(!res.is_empty());
        assert!(res.iter().all(|&m| m.unsigned_abs() == 1), "{res:?}");
        // far beyond the cap nothing can resonate
        let res = near_resonant_set(chart, 1e4, mu, 8);
        assert!(res.is_empty());
        // |Res| <= C |lambda| and min |m| >= c |lambda| across a sweep
        let mut c0: f64 = 0.0;
        let mut cmin = f64::INFINITY;
        for k in 1..40 {
            let lam = lam_min * (1.0 + 0.35 * k as f64);
            let res = near_resonant_set(chart, lam, mu, 100_000);
            c0 = c0.max(res.len() as f64 / lam);
            if let Some(m) = res.iter().map(|m| m.unsigned_abs()).min() {
                cmin = cmin.min(m as f64 / lam);
            }
        }
        assert!(c0.is_finite() && c0 > 0.0);
        assert!(cmin > 0.0);
    }

    #[test]
    fn eta_zero_resolvent_is_the_source() {
        let f = fixture();
        let mut ctx = ResolventCtx::new(&f.chart, &f.rows, &f.f0, 6, 0.0);
        ctx.mu_tilde = 0.4 * f.chart.omega_min / f.chart.omega_max;
        let sp = SpectralPoint::new(0.6, 1e-2, Branch::Plus);
        let sol = ctx.solve(sp).unwrap();
        let src = ctx.source_term(sp);
        assert_eq!(sol.iterations, 0);
        for (a, b) in sol.u.iter().zip(&src) {
            assert_eq!(a, b);
        }
        // vanishing on the outer rim
        assert_eq!(sol.u.last().unwrap().norm(), 0.0);
    }

    #[test]
    fn contraction_scales_with_eta_and_rim_vanishes() {
        let f = fixture();
        let ctx1 = ResolventCtx::new(&f.chart, &f.rows, &f.f0, 6, 0.01);
        let ctx2 = ResolventCtx::new(&f.chart, &f.rows, &f.f0, 6, 0.005);
        let sp = SpectralPoint::new(0.8, 5e-3, Branch::Plus);
        let s1 = ctx1.solve(sp).unwrap();
        let s2 = ctx2.solve(sp).unwrap();
        assert!(s1.contraction < 0.2, "contraction {}", s1.contraction);
        let ratio = s1.contraction / s2.contraction;
        assert!((ratio - 2.0).abs() < 0.5, "eta halving ratio {ratio}");
        assert_eq!(s1.u.last().unwrap().norm(), 0.0);
    }

    #[test]
    fn conjugation_symmetry_of_branches() {
        let f = fixture();
        let ctx = ResolventCtx::new(&f.chart, &f.rows, &f.f0, 6, 0.01);
        for lambda in [0.45, 1.1] {
            let plus = ctx.solve(SpectralPoint::new(lambda, 5e-3, Branch::Plus)).unwrap();
            let minus = ctx.solve(SpectralPoint::new(lambda, 5e-3, Branch::Minus)).unwrap();
            let scale = plus.u.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
            for (a, b) in plus.u.iter().zip(&minus.u) {
                assert!((a.conj() - b).norm() <= 1e-8 * scale.max(1e-30));
            }
        }
    }

    #[test]
    fn nonresonant_lambda_is_epsilon_stable() {
        let f = fixture();
        let ctx = ResolventCtx::new(&f.chart, &f.rows, &f.f0, 4, 0.01);
        // singular lines outside [omega_min, omega_max] for every |m| <= 4:
        // lambda / (2 pi) > 4 * omega_max
        let lambda = 2.0 * std::f64::consts::PI * 4.0 * f.chart.omega_max * 1.3;
        let a = ctx.solve(SpectralPoint::new(lambda, 1e-2, Branch::Plus)).unwrap();
        let b = ctx.solve(SpectralPoint::new(lambda, 1e-4, Branch::Plus)).unwrap();
        let sa = sup_norm(&a.u);
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).norm() <= 1e-3 * sa.max(1e-30), "eps drift {}", (x - y).norm() / sa);
        }
    }

    #[test]
    fn lambda_grid_shape() {
        let grid = lambda_grid(0.3536, 8.0, 20.0, 0.03);
        assert!(grid.len() > 100);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(grid[0], 0.3536, max_relative = 1e-3);
        assert_relative_eq!(*grid.last().unwrap(), 8.0, max_relative = 1e-12);
    }
}
