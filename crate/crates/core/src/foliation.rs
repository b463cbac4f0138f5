//! The per-radius frequency foliation (R, y, z) with y = omega(E, L) and
//! z = E - Psi_L(R): forward and inverse maps, the measure Jacobian, and the
//! singular-integral weight q.

use serde::Serialize;

use crate::action_angle::{ActionChart, OrbitPoint};
use crate::error::{Error, Result};
use crate::numerics::roots::brent;

/// A point of the foliated support at fixed radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoliationPoint {
    pub r: f64,
    pub y: f64,
    pub z: f64,
}

/// Forward map: y = omega(I), z = E - Psi_L(R).
pub fn to_yz(chart: &ActionChart, r: f64, point: OrbitPoint) -> Result<FoliationPoint> {
    let z = chart.model.energy_minus_psi(point.e, r, point.l);
    if z < 0.0 {
        return Err(Error::OutsideDomain {
            what: "frequency foliation",
            detail: format!(
                "E = {} below the effective potential at R = {r} (z = {z})",
                point.e
            ),
        });
    }
    Ok(FoliationPoint { r, y: chart.omega_at(point.e, point.l), z })
}

/// Inverse map by damped 2D Newton iteration, seeded from the point-mass
/// closed form; falls back to a 1D bracketed solve along the exact
/// L-elimination of the z-equation.
pub fn from_yz(chart: &ActionChart, r: f64, y: f64, z: f64) -> Result<OrbitPoint> {
    let model = &chart.model;
    let m = model.params.central_mass;
    // point-mass seed: omega depends on E only
    let mut e = -(std::f64::consts::PI * m * y / 2f64.sqrt()).powf(2.0 / 3.0);
    let psi_offset = model.u_self(r) - m / r;
    let l_of_e = |e: f64| 2.0 * r * r * (e - z - psi_offset);
    let mut l = l_of_e(e).clamp(model.params.l0, model.l_max);
    let res = |e: f64, l: f64| {
        let f1 = chart.omega_at(e, l) - y;
        let f2 = model.energy_minus_psi(e, r, l) - z;
        (f1, f2)
    };
    let norm = |f: (f64, f64)| (f.0 * f.0 + f.1 * f.1).sqrt();
    let scale = y.abs().max(chart.omega_min);
    let tol = 1e-13 * scale;
    let mut f = res(e, l);
    for _ in 0..50 {
        if norm(f) < tol {
            return Ok(OrbitPoint::new(e, l));
        }
        let j11 = chart.d_omega_de(e, l);
        let j12 = chart.d_omega_dl(e, l);
        let j21 = 1.0;
        let j22 = -0.5 / (r * r);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            break;
        }
        let de = (f.0 * j22 - f.1 * j12) / det;
        let dl = (j11 * f.1 - j21 * f.0) / det;
        // line search on the residual norm
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let e_new = e - step * de;
            let l_new = (l - step * dl).clamp(model.params.l0, model.l_max);
            let f_new = res(e_new, l_new);
            if norm(f_new) < norm(f) {
                e = e_new;
                l = l_new;
                f = f_new;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if norm(f) < tol {
        return Ok(OrbitPoint::new(e, l));
    }
    // fallback: eliminate L through the (linear) z-equation and bracket in E
    let g = |e: f64| chart.omega_at(e, l_of_e(e).clamp(model.params.l0, model.l_max)) - y;
    let (mut lo, mut hi) = (model.e0 + 2.0 * (chart.e_min_at(model.params.l0) - model.e0), model.e0);
    if g(lo) * g(hi) > 0.0 {
        lo = chart.e_min_at(model.params.l0);
        hi = model.e0;
    }
    let e = brent(g, lo, hi, 1e-14 * model.e0.abs(), 200, "foliation inverse").map_err(|_| {
        Error::NewtonDivergence { what: "foliation inverse", iters: 50, residual: norm(f) }
    })?;
    let l = l_of_e(e).clamp(model.params.l0, model.l_max);
    let f = res(e, l);
    if norm(f) < 1e6 * tol {
        Ok(OrbitPoint::new(e, l))
    } else {
        Err(Error::NewtonDivergence { what: "foliation inverse", iters: 50, residual: norm(f) })
    }
}

/// Measure factor -P_R omega = -(omega'/(2R^2) + d_L omega) of the change of
/// variables; positive for admissible eta.
pub fn jacobian(chart: &ActionChart, r: f64, point: OrbitPoint) -> Result<f64> {
    let value = -(chart.d_omega_de(point.e, point.l) / (2.0 * r * r)
        + chart.d_omega_dl(point.e, point.l));
    if value <= 0.0 {
        return Err(Error::FoliationNotMonotone { r, e: point.e, l: point.l, value });
    }
    Ok(value)
}

/// Singular-integral weight q = |phi'(E, L)| / |P_R omega|; zero outside the
/// support.
pub fn weight_q(chart: &ActionChart, r: f64, point: OrbitPoint) -> f64 {
    let phi = chart.model.phi_prime_abs(point.e, point.l);
    if phi == 0.0 {
        return 0.0;
    }
    match jacobian(chart, r, point) {
        Ok(j) => phi / j,
        Err(_) => 0.0,
    }
}

/// Momentum of the circular orbit with radius R, with a monotone linear
/// extension outside [r_{L0}, r_{Lmax}].
pub fn l_of_circular_radius(chart: &ActionChart, r: f64) -> f64 {
    let l0 = chart.model.params.l0;
    let l_max = chart.model.l_max;
    let r_lo = chart.r_l[0];
    let r_hi = chart.r_l[chart.r_l.len() - 1];
    if r <= r_lo {
        let alpha = chart.curvature[0];
        return l0 - alpha * r_lo * r_lo * r_lo * (r_lo - r);
    }
    if r >= r_hi {
        let alpha = chart.curvature[chart.curvature.len() - 1];
        return l_max + alpha * r_hi * r_hi * r_hi * (r - r_hi);
    }
    brent(|l| chart.r_l_at(l) - r, l0, l_max, 1e-13 * l_max, 200, "circular momentum")
        .unwrap_or(l0)
}

/// Upper endpoint of a z-level row: the momentum at which E(R, y, z) reaches
/// the cutoff energy. Rows always terminate on the vacuum boundary.
pub fn row_l_upper(chart: &ActionChart, r: f64, z: f64) -> Result<f64> {
    let model = &chart.model;
    let f = |l: f64| model.energy_minus_psi(model.e0, r, l) - z;
    // Psi_L(R) increases in L, so f decreases in L
    if f(model.params.l0) < 0.0 {
        return Err(Error::OutsideDomain {
            what: "row endpoint",
            detail: format!("z = {z} exceeds the row range at R = {r}"),
        });
    }
    brent(f, model.params.l0, model.l_max, 1e-14 * model.l_max, 200, "row endpoint")
}

/// Largest kinetic offset at radius R: z_max = E0 - Psi_{L0}(R).
pub fn z_max(chart: &ActionChart, r: f64) -> f64 {
    chart.model.energy_minus_psi(chart.model.e0, r, chart.model.params.l0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::ChartSpec;
    use crate::steady_state::{build_kepler, build_selfconsistent, kepler, PolytropeParams,
        SteadyStateNumerics};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::sync::OnceLock;

    fn kepler_chart() -> &'static ActionChart {
        static CHART: OnceLock<ActionChart> = OnceLock::new();
        CHART.get_or_init(|| {
            let model =
                build_kepler(PolytropeParams::new(3.5, 2.0, 0.0, -0.25, 1.0, 1.0)).unwrap();
            ActionChart::build(&model, ChartSpec { n_e: 97, n_l: 49, n_theta: 32, ..Default::default() })
                .unwrap()
        })
    }

    fn eta_chart() -> &'static ActionChart {
        static CHART: OnceLock<ActionChart> = OnceLock::new();
        CHART.get_or_init(|| {
            let p = PolytropeParams::new(3.5, 2.0, 0.01, -0.25, 1.0, 1.0);
            let model = build_selfconsistent(
                p,
                &SteadyStateNumerics { n_radial: 1024, ..Default::default() },
            )
            .unwrap();
            ActionChart::build(&model, ChartSpec { n_e: 97, n_l: 49, n_theta: 32, ..Default::default() })
                .unwrap()
        })
    }

    #[test]
    fn z_vanishes_at_the_moving_boundary() {
        let chart = kepler_chart();
        let r = 2.0;
        let e = chart.model.effective_potential(r, 1.2);
        let p = to_yz(chart, r, OrbitPoint::new(e, 1.2)).unwrap();
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kepler_frequency_is_l_independent() {
        let chart = kepler_chart();
        for &l in &[1.0, 1.4, 1.9] {
            let e = -0.3;
            if e < kepler::e_min(1.0, l) {
                continue;
            }
            let p = to_yz(chart, 2.0, OrbitPoint::new(e, l)).unwrap();
            assert_relative_eq!(p.y, kepler::omega(1.0, e), max_relative = 1e-5);
        }
    }

    #[test]
    fn roundtrip_inversion() {
        for chart in [kepler_chart(), eta_chart()] {
            let r = 1.8;
            for &(e, l) in &[(-0.3, 1.1), (-0.27, 1.5), (-0.42, 1.02)] {
                let em = chart.e_min_at(l);
                if e <= em || chart.model.energy_minus_psi(e, r, l) <= 0.0 {
                    continue;
                }
                let p = to_yz(chart, r, OrbitPoint::new(e, l)).unwrap();
                let back = from_yz(chart, r, p.y, p.z).unwrap();
                assert_abs_diff_eq!(back.e, e, epsilon = 1e-9);
                assert_abs_diff_eq!(back.l, l, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_kepler_closed_form() {
        let chart = kepler_chart();
        let r = 2.1;
        let point = OrbitPoint::new(-0.3, 1.2);
        let j = jacobian(chart, r, point).unwrap();
        // d omega / dE = 3 sqrt(2) (-E)^(1/2) / (2 pi M); no L dependence
        let slope = 1.5 * 2f64.sqrt() * 0.3f64.sqrt() / std::f64::consts::PI;
        assert_relative_eq!(j, slope / (2.0 * r * r), max_relative = 1e-4);
    }

    #[test]
    fn jacobian_positive_across_support() {
        let chart = eta_chart();
        let model = &chart.model;
        for a in 0..8 {
            let r = model.r_min + (model.r_max - model.r_min) * (a as f64 + 0.5) / 8.0;
            for b in 0..8 {
                let l = model.params.l0 + (model.l_max - model.params.l0) * b as f64 / 7.9;
                let em = chart.e_min_at(l);
                for c in 1..8 {
                    let e = em + (model.e0 - em) * c as f64 / 8.0;
                    if model.energy_minus_psi(e, r, l) < 0.0 {
                        continue;
                    }
                    assert!(jacobian(chart, r, OrbitPoint::new(e, l)).is_ok());
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_of_forward_map() {
        let chart = eta_chart();
        let r = 1.9;
        let point = OrbitPoint::new(-0.3, 1.2);
        let j = jacobian(chart, r, point).unwrap();
        let h = 1e-6;
        let f = |e: f64, l: f64| {
            let p = to_yz(chart, r, OrbitPoint::new(e, l)).unwrap();
            (p.y, p.z)
        };
        let (ype, zpe) = f(point.e + h, point.l);
        let (yme, zme) = f(point.e - h, point.l);
        let (ypl, zpl) = f(point.e, point.l + h);
        let (yml, zml) = f(point.e, point.l - h);
        let det = ((ype - yme) / (2.0 * h)) * ((zpl - zml) / (2.0 * h))
            - ((ypl - yml) / (2.0 * h)) * ((zpe - zme) / (2.0 * h));
        assert_relative_eq!(det.abs(), j, max_relative = 1e-4);
    }

    #[test]
    fn weight_q_vanishing_orders_at_vacuum() {
        let chart = eta_chart();
        let model = &chart.model;
        let r = 2.0;
        // energy direction: q ~ (E0 - E)^(mu - 1)
        let l = 1.3;
        let q = |de: f64| weight_q(chart, r, OrbitPoint::new(model.e0 - de, l));
        let slope_e = ((q(2e-3) / q(1e-3)).ln()) / 2f64.ln();
        assert_abs_diff_eq!(slope_e, model.params.mu - 1.0, epsilon = 0.05);
        // momentum direction: q ~ (L - L0)^nu
        let e = -0.3;
        let q = |dl: f64| weight_q(chart, r, OrbitPoint::new(e, model.params.l0 + dl));
        let slope_l = ((q(2e-3) / q(1e-3)).ln()) / 2f64.ln();
        assert_abs_diff_eq!(slope_l, model.params.nu, epsilon = 0.05);
        // exactly zero on the boundary
        assert_eq!(weight_q(chart, r, OrbitPoint::new(model.e0, l)), 0.0);
        assert_eq!(weight_q(chart, r, OrbitPoint::new(e, model.params.l0)), 0.0);
    }

    #[test]
    fn momentum_deviation_follows_square_root_law() {
        let chart = eta_chart();
        let model = &chart.model;
        let r = chart.r_l_at(1.3);
        let l_r = l_of_circular_radius(chart, r);
        assert_relative_eq!(l_r, 1.3, max_relative = 1e-6);
        // trace the set E = E_min(L) + eps intersected with E >= Psi_L(R) and
        // record the widest |L - L_R|
        let mut logs = Vec::new();
        for k in 0..6 {
            let eps = 1e-5 * 4f64.powi(k);
            let h = |l: f64| {
                model.effective_potential(r, l) - chart.e_min_at(l) - eps
            };
            let lo = brent(h, model.params.l0, l_r, 1e-12, 200, "dev-lo").unwrap();
            let hi = brent(h, l_r, model.l_max, 1e-12, 200, "dev-hi").unwrap();
            let dev = (l_r - lo).abs().max((hi - l_r).abs());
            logs.push((eps.ln(), dev.ln()));
        }
        let xs: Vec<f64> = logs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = logs.iter().map(|p| p.1).collect();
        let (slope, _, _) = crate::numerics::fit::line_fit(&xs, &ys);
        assert_abs_diff_eq!(slope, 0.5, epsilon = 0.05);
    }

    #[test]
    fn z_rows_end_on_the_vacuum_boundary() {
        let chart = eta_chart();
        let model = &chart.model;
        let r = 1.7;
        let zm = z_max(chart, r);
        assert!(zm > 0.0);
        for frac in [0.1, 0.5, 0.9] {
            let z = frac * zm;
            let l_hi = row_l_upper(chart, r, z).unwrap();
            assert!(l_hi < model.l_max, "row must close on E = E0 before L_max");
            // at the upper endpoint the energy reaches the cutoff
            let e_hi = model.e0 - model.energy_minus_psi(model.e0, r, l_hi) + z;
            assert_abs_diff_eq!(e_hi, model.e0, epsilon = 1e-10);
        }
    }
}
