//! Free phase mixing: the transport flow acts diagonally on angle modes, and
//! the induced gravitational force decays algebraically with a rate set by
//! the regularity of the equilibrium weight and of the data.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::action_angle::ActionChart;
use crate::numerics::fit::{fit_decay, DecayFit};
use crate::rows::RowSet;
use crate::spectral::ModeField;

/// Exact mode-space transport solution at time t:
/// f_hat(t, m, I) = e^{-2 pi i m t omega(I)} f_hat(0, m, I).
pub fn evolve_pure_transport(chart: &ActionChart, field0: &ModeField, t: f64) -> ModeField {
    let n_nodes = field0.n_nodes;
    let mut out = field0.clone();
    let base: Vec<Complex64> = chart
        .omega
        .iter()
        .map(|&om| {
            let ang = -2.0 * std::f64::consts::PI * om * t;
            Complex64::new(ang.cos(), ang.sin())
        })
        .collect();
    let mut pow = base.clone();
    for m in 1..=field0.m_max {
        for node in 0..n_nodes {
            out.data[(m - 1) * n_nodes + node] *= pow[node];
        }
        if m < field0.m_max {
            for node in 0..n_nodes {
                pow[node] *= base[node];
            }
        }
    }
    out
}

/// Weighted invariant of the transport flow:
/// sum_m int |phi'| |f_hat|^2 T dI over the chart grid (trapezoid).
pub fn weighted_norm_sq(chart: &ActionChart, field: &ModeField) -> f64 {
    let n_e = chart.taus.len();
    let tau_w = crate::numerics::quad::trapezoid_weights(&chart.taus);
    let l_w = crate::numerics::quad::trapezoid_weights(&chart.ls);
    let mut acc = 0.0;
    for j in 0..chart.ls.len() {
        let delta = chart.model.e0 - chart.e_min[j];
        for i in 0..n_e {
            let node = j * n_e + i;
            let point = chart.node_point(i, j);
            let phi = chart.model.phi_prime_abs(point.e, point.l);
            if phi == 0.0 {
                continue;
            }
            let w = tau_w[i] * l_w[j] * delta * phi * chart.period[node];
            let mut s = 0.0;
            for m in 1..=field.m_max {
                s += 2.0 * field.positive(m, node).norm_sqr();
            }
            acc += w * s;
        }
    }
    acc
}

/// Force profiles of the transported field at the requested times.
/// Rows carry the oscillatory kernel exactly, so late times cost the same as
/// early ones.
pub fn transport_force_series(
    rows: &RowSet,
    field0: &ModeField,
    times: &[f64],
) -> Vec<Vec<f64>> {
    times.par_iter().map(|&t| rows.force_profile(field0, t)).collect()
}

/// Geometric sampling times t_j = t0 rho^j capped at t_end.
pub fn geometric_times(t0: f64, t_end: f64, rho: f64) -> Vec<f64> {
    assert!(rho > 1.0 && t0 > 0.0 && t_end > t0);
    let mut out = vec![t0];
    loop {
        let next = out.last().unwrap() * rho;
        if next > t_end * (1.0 + 1e-12) {
            break;
        }
        out.push(next);
    }
    out
}

/// Decay-exponent fit of sup_R |force| against (1 + t) over a window.
pub fn fit_decay_rate(
    times: &[f64],
    profiles: &[Vec<f64>],
    window: (f64, f64),
    envelope_threshold: f64,
) -> DecayFit {
    let mut ts = Vec::new();
    let mut sup = Vec::new();
    for (&t, profile) in times.iter().zip(profiles) {
        if t < window.0 || t > window.1 {
            continue;
        }
        ts.push(t);
        sup.push(profile.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
    }
    fit_decay(&ts, &sup, envelope_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::ChartSpec;
    use crate::spectral::analyze;
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
    fn transport_identity_and_modulus() {
        let c = chart();
        let f0 = analyze(c, |p| p.w, 8, None).unwrap();
        let same = evolve_pure_transport(c, &f0, 0.0);
        assert_eq!(same.data, f0.data);
        let later = evolve_pure_transport(c, &f0, 37.5);
        for (a, b) in later.data.iter().zip(&f0.data) {
            assert_abs_diff_eq!(a.norm(), b.norm(), epsilon = 1e-14);
        }
    }

    #[test]
    fn phases_return_after_one_period_at_a_node() {
        let c = chart();
        let f0 = analyze(c, |p| p.w + 0.1 * p.r, 6, None).unwrap();
        let node = c.node_index(40, 20);
        let t = c.period[node];
        let later = evolve_pure_transport(c, &f0, t);
        for m in 1..=6usize {
            let a = f0.positive(m, node);
            let b = later.positive(m, node);
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12 * a.norm().max(1e-30));
        }
    }

    #[test]
    fn weighted_norm_exactly_conserved() {
        let c = chart();
        let f0 = analyze(c, |p| p.w * (1.0 + 0.2 * p.l), 8, None).unwrap();
        let n0 = weighted_norm_sq(c, &f0);
        let n1 = weighted_norm_sq(c, &evolve_pure_transport(c, &f0, 123.4));
        assert_relative_eq!(n0, n1, max_relative = 1e-13);
    }

    #[test]
    fn geometric_times_cover_window() {
        let ts = geometric_times(10.0, 250.0, 1.15);
        assert!(ts.len() > 15);
        assert!(*ts.last().unwrap() <= 250.0 * (1.0 + 1e-9));
    }
}
