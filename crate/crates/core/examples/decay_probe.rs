use shellmix::action_angle::*;
use shellmix::initial_data::InitialData;
use shellmix::rows::*;
use shellmix::spectral::analyze;
use shellmix::steady_state::*;
use shellmix::transport::*;

fn main() {
    let p = PolytropeParams::new(3.5, 2.0, 0.01, -0.25, 1.0, 1.0);
    let model = build_selfconsistent(p, &SteadyStateNumerics::default()).unwrap();
    let chart = ActionChart::build(
        &model,
        ChartSpec { n_e: 257, n_l: 129, n_theta: 64, ..Default::default() },
    )
    .unwrap();
    let n_r = 65;
    let grid: Vec<f64> = (0..n_r)
        .map(|k| model.r_min + (model.r_max - model.r_min) * k as f64 / (n_r - 1) as f64)
        .collect();
    let rows = RowSet::build(&chart, grid, RowSpec { n_u: 49, n_l_base: 48, n_l_cluster: 20 }).unwrap();
    for (data, label) in [
        (InitialData::WSmooth { amplitude: 1.0 }, "eta=0.01 mu35nu2 w-smooth"),
        (InitialData::ThetaBump { amplitude: 1.0 }, "eta=0.01 mu35nu2 theta-bump"),
    ] {
        let f0 = analyze(&chart, |pp| data.eval(pp), 16, None).unwrap();
        let times = geometric_times(10.0, 250.0, 1.15);
        let profiles = transport_force_series(&rows, &f0, &times);
        let fit = fit_decay_rate(&times, &profiles, (20.0, 200.0), 0.12);
        println!("{label}: exponent = {:.3} (env {}, res {:.3})", fit.exponent, fit.used_envelope, fit.residual);
    }
}
