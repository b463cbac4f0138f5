//! The coupled linearised flow in angle-Fourier space:
//!
//!   d/dt f_hat(m, I) = -2 pi i m omega(I) ( f_hat(m, I) + eta U_hat(m, I) ),
//!
//! integrated in the back-rotated variable g = e^{+2 pi i m omega t} f_hat.
//! The free rotation is then exact and the state stays smooth on the chart
//! grid, so force synthesis keeps its accuracy at late times; only the O(eta)
//! coupling is stepped explicitly (classical RK4).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::action_angle::ActionChart;
use crate::error::{Error, Result};
use crate::rows::RowSet;
use crate::spectral::{potential_from_force, ModeField, RadialProfile, Twiddle};
use crate::transport::weighted_norm_sq;

#[derive(Debug, Clone, Serialize)]
pub struct EvolveSpec {
    pub eta: f64,
    pub m_max: usize,
    /// dt = dt_factor / (m_max * omega_max); stability requires
    /// dt_factor < 0.449 (RK4 imaginary-axis limit over 2 pi).
    pub dt_factor: f64,
    pub t_end: f64,
    /// Diagnostics cadence in steps.
    pub output_every: usize,
    /// Times at which full mode-field snapshots are kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveSpec {
    fn default() -> Self {
        Self {
            eta: 0.01,
            m_max: 8,
            dt_factor: 0.2,
            t_end: 200.0,
            output_every: 4,
            snapshot_times: Vec::new(),
        }
    }
}

/// Instantaneous state of the coupled flow: back-rotated modes at time t.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    /// Back-rotated modes g(m, I) = e^{+2 pi i m omega t} f_hat(m, I).
    pub g: ModeField,
}

impl SimState {
    /// Physical (rotated) modes f_hat at the state's time.
    pub fn physical_field(&self, chart: &ActionChart) -> ModeField {
        crate::transport::evolve_pure_transport(chart, &self.g, self.t)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub norm_sq: f64,
    pub cross: f64,
    pub antonov: f64,
    pub mass_residual: f64,
    pub m0_residual: f64,
    pub sup_force: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub times: Vec<f64>,
    pub force_profiles: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<SimState>,
    pub dt: f64,
}

/// Driver owning the phase trackers and scratch state.
pub struct Linearized<'a> {
    pub chart: &'a ActionChart,
    pub rows: &'a RowSet,
    pub spec: EvolveSpec,
    dt: f64,
    // phase state at the current time
    node_phase: Vec<Complex64>,
    row_phase: Vec<Vec<Complex64>>,
    // half-step multipliers
    node_half: Vec<Complex64>,
    row_half: Vec<Vec<Complex64>>,
    twiddle: Twiddle,
    steps_done: usize,
}

impl<'a> Linearized<'a> {
    pub fn new(chart: &'a ActionChart, rows: &'a RowSet, spec: EvolveSpec) -> Result<Self> {
        let max_dt = 0.449 / (spec.m_max as f64 * chart.omega_max);
        let dt = spec.dt_factor / (spec.m_max as f64 * chart.omega_max);
        if dt > max_dt {
            return Err(Error::CflViolation { dt, max_dt, m_max: spec.m_max });
        }
        let node_phase = vec![Complex64::new(1.0, 0.0); chart.n_nodes()];
        let node_half = chart
            .omega
            .iter()
            .map(|&om| {
                let ang = 2.0 * std::f64::consts::PI * om * 0.5 * dt;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        let row_phase: Vec<Vec<Complex64>> = rows
            .radii
            .iter()
            .map(|rad| vec![Complex64::new(1.0, 0.0); rad.nodes.len()])
            .collect();
        let row_half: Vec<Vec<Complex64>> = rows
            .radii
            .iter()
            .map(|rad| {
                rad.nodes
                    .y
                    .iter()
                    .map(|&y| {
                        let ang = -2.0 * std::f64::consts::PI * y * 0.5 * dt;
                        Complex64::new(ang.cos(), ang.sin())
                    })
                    .collect()
            })
            .collect();
        let twiddle = Twiddle::new(chart.spec.n_theta);
        Ok(Self {
            chart,
            rows,
            spec,
            dt,
            node_phase,
            row_phase,
            node_half,
            row_half,
            twiddle,
            steps_done: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Gravitational potential profile of the physical field at phase state
    /// `stage` (0, 1, or 2 half-steps past the current time).
    fn potential(&self, g: &ModeField, stage: usize, t: f64) -> (Vec<f64>, RadialProfile) {
        let phases: Vec<Vec<Complex64>> = self
            .row_phase
            .iter()
            .zip(&self.row_half)
            .map(|(ph, half)| {
                ph.iter()
                    .zip(half)
                    .map(|(&p, &h)| match stage {
                        0 => p,
                        1 => p * h,
                        _ => p * h * h,
                    })
                    .collect()
            })
            .collect();
        let force = self.rows.force_profile_with_phases(g, &phases, t);
        let u = potential_from_force(&self.rows.r_grid, &force, 0.0);
        (force, u)
    }

    /// Angle-Fourier coefficients of U along every cached orbit.
    pub fn potential_modes(&self, u: &RadialProfile) -> Vec<f64> {
        let n_half = self.chart.n_half();
        let n_theta = self.chart.spec.n_theta;
        let m_max = self.spec.m_max;
        let n_nodes = self.chart.n_nodes();
        let mut out = vec![0.0; m_max * n_nodes];
        let chunks: Vec<Vec<f64>> = (0..n_nodes)
            .into_par_iter()
            .map(|node| {
                let (rs, _) = self.chart.orbit_samples(node);
                let mut u_samp = vec![0.0; n_half + 1];
                for (j, &r) in rs.iter().enumerate() {
                    u_samp[j] = u.eval(r);
                }
                // cosine transform of the even extension
                let mut modes = vec![0.0; m_max];
                for (m, mode) in modes.iter_mut().enumerate() {
                    let mm = m + 1;
                    let mut acc = u_samp[0];
                    let mut sign_acc = 0.0;
                    for (j, &v) in u_samp.iter().enumerate().take(n_half).skip(1) {
                        acc += 2.0 * v * self.twiddle.forward(mm, j).re;
                    }
                    sign_acc += u_samp[n_half] * if mm % 2 == 0 { 1.0 } else { -1.0 };
                    *mode = (acc + sign_acc) / n_theta as f64;
                }
                modes
            })
            .collect();
        for (node, modes) in chunks.into_iter().enumerate() {
            for m in 0..m_max {
                out[m * n_nodes + node] = modes[m];
            }
        }
        out
    }

    /// Time derivative of the back-rotated modes:
    /// dg/dt = -2 pi i m omega eta e^{+2 pi i m omega t} U_hat_m.
    fn rhs(&self, g: &ModeField, stage: usize, t: f64) -> ModeField {
        let n_nodes = g.n_nodes;
        let mut out = ModeField::zeros(g.m_max, n_nodes);
        if self.spec.eta == 0.0 {
            return out;
        }
        let (_, u) = self.potential(g, stage, t);
        let u_modes = self.potential_modes(&u);
        let rotation: Vec<Complex64> = self
            .node_phase
            .iter()
            .zip(&self.node_half)
            .map(|(&p, &h)| match stage {
                0 => p,
                1 => p * h,
                _ => p * h * h,
            })
            .collect();
        let mut rot_m = rotation.clone();
        for m in 1..=g.m_max {
            let coeff = -2.0 * std::f64::consts::PI * self.spec.eta * m as f64;
            for node in 0..n_nodes {
                let om = self.chart.omega[node];
                let rhs = Complex64::new(0.0, coeff * om)
                    * rot_m[node]
                    * u_modes[(m - 1) * n_nodes + node];
                out.data[(m - 1) * n_nodes + node] = rhs;
            }
            if m < g.m_max {
                for node in 0..n_nodes {
                    rot_m[node] *= rotation[node];
                }
            }
        }
        out
    }

    /// One classical RK4 step of the back-rotated system; advances the phase
    /// trackers.
    pub fn step(&mut self, state: &mut SimState) {
        let dt = self.dt;
        let g = &state.g;
        let k1 = self.rhs(g, 0, state.t);
        let g2 = axpy(g, &k1, 0.5 * dt);
        let k2 = self.rhs(&g2, 1, state.t + 0.5 * dt);
        let g3 = axpy(g, &k2, 0.5 * dt);
        let k3 = self.rhs(&g3, 1, state.t + 0.5 * dt);
        let g4 = axpy(g, &k3, dt);
        let k4 = self.rhs(&g4, 2, state.t + dt);
        let n = state.g.data.len();
        for i in 0..n {
            state.g.data[i] += dt / 6.0
                * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
        }
        state.t += dt;
        // advance phases by one full step
        for (p, h) in self.node_phase.iter_mut().zip(&self.node_half) {
            *p *= h * h;
        }
        for (ph, half) in self.row_phase.iter_mut().zip(&self.row_half) {
            for (p, h) in ph.iter_mut().zip(half) {
                *p *= h * h;
            }
        }
        self.steps_done += 1;
        if self.steps_done % 512 == 0 {
            for p in self.node_phase.iter_mut() {
                *p /= p.norm();
            }
            for ph in self.row_phase.iter_mut() {
                for p in ph.iter_mut() {
                    *p /= p.norm();
                }
            }
        }
    }

    /// Antonov quadratic form (L f, f): the T-weighted mode norm plus the
    /// eta cross term with the self-potential. Exactly conserved by the
    /// continuous flow.
    pub fn antonov_parts(&self, state: &SimState) -> (f64, f64) {
        let f_hat = state.physical_field(self.chart);
        let norm_sq = weighted_norm_sq(self.chart, &f_hat);
        if self.spec.eta == 0.0 {
            return (norm_sq, 0.0);
        }
        let force = self.rows.force_profile(&state.g, state.t);
        let u = potential_from_force(&self.rows.r_grid, &force, 0.0);
        let u_modes = self.potential_modes(&u);
        let chart = self.chart;
        let n_e = chart.taus.len();
        let tau_w = crate::numerics::quad::trapezoid_weights(&chart.taus);
        let l_w = crate::numerics::quad::trapezoid_weights(&chart.ls);
        let n_nodes = chart.n_nodes();
        let mut cross = 0.0;
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
                for m in 1..=f_hat.m_max {
                    s += 2.0 * f_hat.positive(m, node).re * u_modes[(m - 1) * n_nodes + node];
                }
                cross += w * s;
            }
        }
        (norm_sq, cross)
    }

    /// Residuals of the structurally conserved quantities: total mass of the
    /// reconstructed perturbation and its largest angle average.
    pub fn structural_residuals(&self, state: &SimState) -> (f64, f64) {
        let f_hat = state.physical_field(self.chart);
        let chart = self.chart;
        let n_e = chart.taus.len();
        let n_theta = chart.spec.n_theta;
        let tau_w = crate::numerics::quad::trapezoid_weights(&chart.taus);
        let l_w = crate::numerics::quad::trapezoid_weights(&chart.ls);
        let mut mass = 0.0;
        let mut m0 = 0.0f64;
        for j in 0..chart.ls.len() {
            let delta = chart.model.e0 - chart.e_min[j];
            for i in 0..n_e {
                let node = j * n_e + i;
                // angle average of the reconstruction
                let mut mean = Complex64::ZERO;
                for m in 1..=f_hat.m_max {
                    let mut acc = Complex64::ZERO;
                    for jj in 0..n_theta {
                        acc += self.twiddle.forward(m, jj).conj();
                    }
                    mean += f_hat.positive(m, node) * acc / n_theta as f64;
                }
                let avg = 2.0 * mean.re;
                m0 = m0.max(avg.abs());
                mass += tau_w[i] * l_w[j] * delta * chart.period[node] * avg;
            }
        }
        (mass.abs(), m0)
    }

    /// Evolve from initial physical modes to t_end, recording diagnostics and
    /// force profiles on the output cadence.
    pub fn run(&mut self, f0: &ModeField, observers: bool) -> Result<RunOutput> {
        let mut state = SimState { t: 0.0, g: f0.clone() };
        let n_steps = (self.spec.t_end / self.dt).ceil() as usize;
        let mut times = Vec::new();
        let mut force_profiles = Vec::new();
        let mut diagnostics = Vec::new();
        let mut snapshots = Vec::new();
        let mut next_snapshot = 0usize;
        let record = |this: &Self,
                      state: &SimState,
                      times: &mut Vec<f64>,
                      profiles: &mut Vec<Vec<f64>>,
                      diags: &mut Vec<Diagnostics>,
                      observers: bool| {
            let force = this.rows.force_profile_with_phases(
                &state.g,
                &this.row_phase,
                state.t,
            );
            let sup = force.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if observers {
                let (norm_sq, cross) = this.antonov_parts(state);
                let (mass, m0) = this.structural_residuals(state);
                diags.push(Diagnostics {
                    t: state.t,
                    norm_sq,
                    cross,
                    antonov: norm_sq + this.spec.eta * cross,
                    mass_residual: mass,
                    m0_residual: m0,
                    sup_force: sup,
                });
            }
            times.push(state.t);
            profiles.push(force);
        };
        record(self, &state, &mut times, &mut force_profiles, &mut diagnostics, observers);
        for step_idx in 1..=n_steps {
            self.step(&mut state);
            if next_snapshot < self.spec.snapshot_times.len()
                && state.t >= self.spec.snapshot_times[next_snapshot] - 0.5 * self.dt
            {
                snapshots.push(state.clone());
                next_snapshot += 1;
            }
            if step_idx % self.spec.output_every == 0 || step_idx == n_steps {
                let observe = observers
                    && (step_idx % (self.spec.output_every * 8) == 0 || step_idx == n_steps);
                record(self, &state, &mut times, &mut force_profiles, &mut diagnostics, observe);
            }
        }
        Ok(RunOutput { times, force_profiles, diagnostics, snapshots, dt: self.dt })
    }
}

fn axpy(g: &ModeField, k: &ModeField, a: f64) -> ModeField {
    let mut out = g.clone();
    for (o, &kv) in out.data.iter_mut().zip(&k.data) {
        *o += kv * a;
    }
    out
}

/// Fraction of windowed spectral power strictly inside |lambda| < cut, for a
/// uniformly sampled real signal. A Hann window controls leakage from the
/// finite record.
pub fn spectral_gap_fraction(signal: &[f64], dt: f64, cut: f64) -> f64 {
    let n = signal.len();
    assert!(n >= 16, "gap check needs a reasonable record");
    let windowed: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let w = 0.5
                * (1.0
                    - (2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64).cos());
            v * w
        })
        .collect();
    let mut inside = 0.0;
    let mut total = 0.0;
    let half = n / 2;
    for k in 0..=half {
        let mut acc = Complex64::ZERO;
        for (j, &v) in windowed.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
            acc += v * Complex64::new(ang.cos(), ang.sin());
        }
        // one-sided power (bins k and n-k merged)
        let p = if k == 0 || (k == half && n % 2 == 0) {
            acc.norm_sqr()
        } else {
            2.0 * acc.norm_sqr()
        };
        let lambda = 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * dt);
        total += p;
        if lambda < cut {
            inside += p;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

/// Cauchy increments of the back-rotated field: || g(2t) - g(t) || in the
/// weighted norm, for each t with both snapshots available.
pub fn scattering_increments(
    chart: &ActionChart,
    snapshots: &[SimState],
    base_times: &[f64],
) -> Vec<(f64, f64)> {
    let find = |t: f64| -> Option<&SimState> {
        snapshots
            .iter()
            .find(|s| (s.t - t).abs() < 0.05 * t.max(1.0))
    };
    let mut out = Vec::new();
    for &t in base_times {
        let (Some(a), Some(b)) = (find(t), find(2.0 * t)) else { continue };
        let mut diff = a.g.clone();
        for (d, &bv) in diff.data.iter_mut().zip(&b.g.data) {
            *d -= bv;
        }
        out.push((t, weighted_norm_sq(chart, &diff).sqrt()));
    }
    out
}
