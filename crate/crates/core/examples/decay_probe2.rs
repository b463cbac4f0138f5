use num_complex::Complex64;
use shellmix::action_angle::*;
use shellmix::initial_data::InitialData;
use shellmix::spectral::*;
use shellmix::steady_state::*;
use shellmix::transport::*;
use rayon::prelude::*;

// Spec-style force synthesis: clipped trapezoid on the chart grid with a
// theta cache per (R, node), modes summed with transported phases.
fn run(mu: f64, nu: f64, data: InitialData, label: &str, m_max: usize) {
    let model = build_kepler(PolytropeParams::new(mu, nu, 0.0, -0.25, 1.0, 1.0)).unwrap();
    let chart = ActionChart::build(
        &model,
        ChartSpec { n_e: 257, n_l: 129, n_theta: 64, ..Default::default() },
    )
    .unwrap();
    let n_r = 33;
    let grid: Vec<f64> = (1..n_r - 1)
        .map(|k| model.r_min + (model.r_max - model.r_min) * k as f64 / (n_r - 1) as f64)
        .collect();
    let f0 = analyze(&chart, |p| data.eval(p), m_max, None).unwrap();
    let n_e = chart.taus.len();
    // cache: per R, list of (node, weight*|phi'|*T, theta)
    let caches: Vec<Vec<(usize, f64, f64)>> = grid
        .par_iter()
        .map(|&r| {
            clipped_weights(&chart, r)
                .into_iter()
                .filter_map(|(node, w)| {
                    let j = node / n_e;
                    let i = node % n_e;
                    let point = chart.node_point(i, j);
                    let phi = chart.model.phi_prime_abs(point.e, point.l);
                    if phi == 0.0 {
                        return None;
                    }
                    let theta = angle_on_radius(&chart, r, point).ok()?;
                    Some((node, w * phi * chart.period[node], theta))
                })
                .collect()
        })
        .collect();
    let times = geometric_times(10.0, 250.0, 1.15);
    let profiles: Vec<Vec<f64>> = times
        .par_iter()
        .map(|&t| {
            grid.iter()
                .zip(&caches)
                .map(|(&r, cache)| {
                    let mut total = 0.0;
                    for &(node, w, theta) in cache {
                        let om = chart.omega[node];
                        let base = -2.0 * std::f64::consts::PI * om * t;
                        let ang0 = 2.0 * std::f64::consts::PI * theta;
                        for m in 1..=m_max {
                            let phase = Complex64::new((base * m as f64).cos(), (base * m as f64).sin());
                            let fm = f0.positive(m, node) * phase;
                            total += 2.0 / m as f64 * fm.re * (ang0 * m as f64).sin() * w;
                        }
                    }
                    4.0 * std::f64::consts::PI / (r * r) * total
                })
                .collect()
        })
        .collect();
    print!("{label}: ");
    for (t, p) in times.iter().zip(&profiles) {
        let sup = p.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        print!("({t:.0},{sup:.2e}) ");
    }
    println!();
    let fit = fit_decay_rate(&times, &profiles, (20.0, 200.0), 0.12);
    println!("  [20,200] exponent = {:.3} (env {}, res {:.3})", fit.exponent, fit.used_envelope, fit.residual);
}

fn main() {
    run(3.5, 2.0, InitialData::WSmooth { amplitude: 1.0 }, "mu35nu2 trapezoid", 16);
}
