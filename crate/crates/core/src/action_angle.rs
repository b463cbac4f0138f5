//! Action-angle geometry of the radial motion: turning points, period and
//! area integrals with endpoint desingularisation, the angle map, orbit
//! inversion, and a tabulated chart over the (E, L) support.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::interp::{Cubic1D, Grid2};
use crate::numerics::ode::{OdeTol, OrbitIntegrator};
use crate::numerics::quad::{gauss_legendre, integrate_adaptive_with_floor};
use crate::numerics::roots::brent;
use crate::steady_state::PolytropeModel;

/// An energy / squared-angular-momentum pair inside the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub e: f64,
    pub l: f64,
}

impl OrbitPoint {
    pub fn new(e: f64, l: f64) -> Self {
        Self { e, l }
    }
}

/// Turning points, period, and energy data for one orbit, reusable by the
/// angle map and sampling routines.
#[derive(Debug, Clone, Copy)]
pub struct OrbitGeometry {
    pub point: OrbitPoint,
    pub r_minus: f64,
    pub r_plus: f64,
    pub period: f64,
    pub e_min: f64,
    pub r_l: f64,
    pub curvature: f64,
}

impl OrbitGeometry {
    /// Trapping depth of the orbit.
    pub fn energy_above_minimum(&self) -> f64 {
        self.point.e - self.e_min
    }
}

/// Below this fraction of the energy scale the harmonic-well closed forms
/// replace the singular quadratures.
fn harmonic_cutoff(model: &PolytropeModel) -> f64 {
    1e-10 * model.e0.abs().max(1.0)
}

/// Turning points r- < r_L < r+ with Psi_L(r+-) = E.
pub fn turning_points(model: &PolytropeModel, point: OrbitPoint) -> Result<(f64, f64)> {
    let min = model.potential_minimum(point.l)?;
    turning_points_with_min(model, point, &min)
}

pub(crate) fn turning_points_with_min(
    model: &PolytropeModel,
    point: OrbitPoint,
    min: &crate::steady_state::PotentialMinimum,
) -> Result<(f64, f64)> {
    let eps = point.e - min.e_min;
    if eps <= 0.0 {
        return Err(Error::DegenerateOrbit { e: point.e, e_min: min.e_min, l: point.l });
    }
    if model.is_kepler() {
        return Ok(crate::steady_state::kepler::turning_points(
            model.params.central_mass,
            point.e,
            point.l,
        ));
    }
    if eps < harmonic_cutoff(model) {
        let a = (2.0 * eps / min.curvature).sqrt();
        return Ok((min.r - a, min.r + a));
    }
    let f = |r: f64| -model.energy_minus_psi(point.e, r, point.l);
    let tol = 1e-14 * min.r;
    // inner: walk down from r_L until the potential exceeds E
    let mut lo = min.r * 0.75 + 0.0;
    let mut guard = 0;
    while f(lo) < 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return Err(Error::RootBracket { what: "inner turning point", a: lo, b: min.r });
        }
    }
    let r_minus = brent(f, lo, min.r, tol, 200, "inner turning point")?;
    // outer: walk up
    let mut hi = min.r * 1.5;
    guard = 0;
    while f(hi) < 0.0 {
        hi *= 1.5;
        guard += 1;
        if guard > 200 {
            return Err(Error::RootBracket { what: "outer turning point", a: min.r, b: hi });
        }
    }
    let r_plus = brent(f, min.r, hi, tol, 200, "outer turning point")?;
    Ok((r_minus, r_plus))
}

/// Full orbit geometry for one support point.
pub fn orbit_geometry(model: &PolytropeModel, point: OrbitPoint) -> Result<OrbitGeometry> {
    let min = model.potential_minimum(point.l)?;
    let (r_minus, r_plus) = turning_points_with_min(model, point, &min)?;
    let period = period_from_turning(model, point, r_minus, r_plus, min.curvature)?;
    Ok(OrbitGeometry {
        point,
        r_minus,
        r_plus,
        period,
        e_min: min.e_min,
        r_l: min.r,
        curvature: min.curvature,
    })
}

/// Smooth positive factor S(r) in the exact factorisation
/// E - Psi_L(r) = (r - r_minus)(r_plus - r) S(r).
///
/// Within a relative distance `BLEND` of a turning point the direct ratio is
/// replaced by the first-order Taylor form built from Psi' and Psi'' at that
/// endpoint, which involves no cancelling difference.
struct EnergyFactor<'a> {
    model: &'a PolytropeModel,
    e: f64,
    l: f64,
    r_minus: f64,
    r_plus: f64,
    width: f64,
    dpsi_minus: f64,
    dpsi_plus: f64,
    ddpsi_minus: f64,
    ddpsi_plus: f64,
    floor: f64,
}

const BLEND: f64 = 1e-5;

impl<'a> EnergyFactor<'a> {
    fn new(model: &'a PolytropeModel, point: OrbitPoint, r_minus: f64, r_plus: f64) -> Self {
        let mid = 0.5 * (r_minus + r_plus);
        let den = (mid - r_minus) * (r_plus - mid);
        let s_ref = (model.energy_minus_psi(point.e, mid, point.l) / den).abs();
        Self {
            model,
            e: point.e,
            l: point.l,
            r_minus,
            r_plus,
            width: r_plus - r_minus,
            dpsi_minus: model.psi_prime(r_minus, point.l),
            dpsi_plus: model.psi_prime(r_plus, point.l),
            ddpsi_minus: model.psi_second(r_minus, point.l),
            ddpsi_plus: model.psi_second(r_plus, point.l),
            floor: 1e-8 * s_ref.max(1e-300),
        }
    }

    /// `dm` and `dp` are the distances to the turning points, supplied by
    /// the caller in exact product form (width * sin^2, width * cos^2).
    fn s(&self, r: f64, dm: f64, dp: f64) -> f64 {
        if dm < BLEND * self.width {
            let num = -self.dpsi_minus - 0.5 * self.ddpsi_minus * dm;
            return (num / dp.max(1e-300)).max(self.floor);
        }
        if dp < BLEND * self.width {
            let num = self.dpsi_plus - 0.5 * self.ddpsi_plus * dp;
            return (num / dm.max(1e-300)).max(self.floor);
        }
        let den = dm * dp;
        (self.model.energy_minus_psi(self.e, r, self.l) / den).max(self.floor)
    }
}

fn period_from_turning(
    model: &PolytropeModel,
    point: OrbitPoint,
    r_minus: f64,
    r_plus: f64,
    curvature: f64,
) -> Result<f64> {
    if r_plus - r_minus < 1e-12 * r_plus {
        return Ok(2.0 * std::f64::consts::PI / curvature.sqrt());
    }
    let width = r_plus - r_minus;
    let factor = EnergyFactor::new(model, point, r_minus, r_plus);
    // with r = r- + (r+ - r-) sin^2(phi) the radicand factors through
    // sin(phi) cos(phi) exactly and the integrand is smooth:
    let integrand = |phi: f64| {
        let sn = phi.sin();
        let cs = phi.cos();
        let dm = width * sn * sn;
        let dp = width * cs * cs;
        2f64.sqrt() / factor.s(r_minus + dm, dm, dp).sqrt()
    };
    let val = integrate_adaptive_with_floor(
        integrand,
        0.0,
        std::f64::consts::FRAC_PI_2,
        64,
        1e-10,
        1e-6,
        2048,
    )?;
    Ok(2.0 * val)
}

/// Radial libration period T = 2 * integral dr / sqrt(2E - 2 Psi_L), with the
/// sin^2 endpoint substitution.
pub fn period(model: &PolytropeModel, point: OrbitPoint) -> Result<f64> {
    let min = model.potential_minimum(point.l)?;
    let eps = point.e - min.e_min;
    if eps <= 0.0 {
        return Err(Error::DegenerateOrbit { e: point.e, e_min: min.e_min, l: point.l });
    }
    if eps < harmonic_cutoff(model) {
        return Ok(2.0 * std::f64::consts::PI / min.curvature.sqrt());
    }
    let (r_minus, r_plus) = turning_points_with_min(model, point, &min)?;
    period_from_turning(model, point, r_minus, r_plus, min.curvature)
}

/// Phase-plane area A = 2 * integral sqrt(2E - 2 Psi_L) dr.
pub fn area(model: &PolytropeModel, point: OrbitPoint) -> Result<f64> {
    let min = model.potential_minimum(point.l)?;
    let eps = point.e - min.e_min;
    if eps <= 0.0 {
        return Err(Error::DegenerateOrbit { e: point.e, e_min: min.e_min, l: point.l });
    }
    if eps < harmonic_cutoff(model) {
        return Ok(2.0 * std::f64::consts::PI * eps / min.curvature.sqrt());
    }
    let (r_minus, r_plus) = turning_points_with_min(model, point, &min)?;
    let width = r_plus - r_minus;
    let factor = EnergyFactor::new(model, point, r_minus, r_plus);
    let integrand = |phi: f64| {
        let t = (2.0 * phi).sin();
        let sn = phi.sin();
        let cs = phi.cos();
        let dm = width * sn * sn;
        let dp = width * cs * cs;
        width * width * 0.5 * t * t * (2.0 * factor.s(r_minus + dm, dm, dp)).sqrt()
    };
    let val = integrate_adaptive_with_floor(integrand, 0.0, std::f64::consts::FRAC_PI_2, 64, 1e-10, 1e-6, 2048)?;
    Ok(2.0 * val)
}

/// Angle of a phase-space point, normalised to [0, 1): zero at the inner
/// turning point, 1/2 at the outer one, reflected for w < 0.
pub fn angle(model: &PolytropeModel, r: f64, w: f64, l: f64) -> Result<f64> {
    let e = 0.5 * w * w + model.try_effective_potential(r, l)?;
    let geo = orbit_geometry(model, OrbitPoint::new(e, l))?;
    angle_with_geometry(model, r, w, &geo)
}

/// Angle when the orbit geometry is already known.
pub fn angle_with_geometry(
    model: &PolytropeModel,
    r: f64,
    w: f64,
    geo: &OrbitGeometry,
) -> Result<f64> {
    let point = geo.point;
    let eps = geo.energy_above_minimum();
    let span = geo.r_plus - geo.r_minus;
    let tol_r = 1e-9 * geo.r_plus;
    if r < geo.r_minus - tol_r || r > geo.r_plus + tol_r {
        return Err(Error::OutsideDomain {
            what: "angle",
            detail: format!("r = {r} outside [{}, {}]", geo.r_minus, geo.r_plus),
        });
    }
    let r = r.clamp(geo.r_minus, geo.r_plus);
    let theta_half = if eps < harmonic_cutoff(model) || span <= 0.0 {
        let a = 0.5 * span;
        let c = if a > 0.0 { ((geo.r_l - r) / a).clamp(-1.0, 1.0) } else { 1.0 };
        c.acos() / (2.0 * std::f64::consts::PI)
    } else if r - geo.r_minus <= geo.r_plus - r {
        // integrate up from the inner turning point
        let width = r - geo.r_minus;
        if width == 0.0 {
            0.0
        } else {
            let factor = EnergyFactor::new(model, point, geo.r_minus, geo.r_plus);
            let integrand = |phi: f64| {
                let sn = phi.sin();
                let dm = width * sn * sn;
                let dp = (geo.r_plus - geo.r_minus) - dm;
                2.0 * width.sqrt() * phi.cos()
                    / ((2.0 * factor.s(geo.r_minus + dm, dm, dp)).sqrt() * dp.sqrt())
            };
            let v =
                integrate_adaptive_with_floor(integrand, 0.0, std::f64::consts::FRAC_PI_2, 64, 1e-10, 1e-6, 2048)?;
            v / geo.period
        }
    } else {
        // integrate down from the outer turning point
        let width = geo.r_plus - r;
        if width == 0.0 {
            0.5
        } else {
            let factor = EnergyFactor::new(model, point, geo.r_minus, geo.r_plus);
            let integrand = |phi: f64| {
                let sn = phi.sin();
                let dp = width * sn * sn;
                let dm = (geo.r_plus - geo.r_minus) - dp;
                2.0 * width.sqrt() * phi.cos()
                    / ((2.0 * factor.s(geo.r_plus - dp, dm, dp)).sqrt() * dm.sqrt())
            };
            let v =
                integrate_adaptive_with_floor(integrand, 0.0, std::f64::consts::FRAC_PI_2, 64, 1e-10, 1e-6, 2048)?;
            0.5 - v / geo.period
        }
    };
    let theta_half = theta_half.clamp(0.0, 0.5);
    Ok(if w >= 0.0 { theta_half } else { (1.0 - theta_half).rem_euclid(1.0) })
}

/// Invert the angle map by integrating the radial flow from (r-, 0) for time
/// theta * T.
pub fn orbit_position(model: &PolytropeModel, theta: f64, point: OrbitPoint) -> Result<(f64, f64)> {
    let geo = orbit_geometry(model, point)?;
    orbit_position_with_geometry(model, theta, &geo, OdeTol::default())
}

pub fn orbit_position_with_geometry(
    model: &PolytropeModel,
    theta: f64,
    geo: &OrbitGeometry,
    tol: OdeTol,
) -> Result<(f64, f64)> {
    let theta = theta.rem_euclid(1.0);
    let (theta_half, flip) = if theta <= 0.5 { (theta, false) } else { (1.0 - theta, true) };
    let eps = geo.energy_above_minimum();
    let (r, w) = if eps < harmonic_cutoff(model) {
        let a = 0.5 * (geo.r_plus - geo.r_minus);
        let ang = 2.0 * std::f64::consts::PI * theta_half;
        (geo.r_l - a * ang.cos(), a * geo.curvature.sqrt() * ang.sin())
    } else {
        let l = geo.point.l;
        let integ = OrbitIntegrator::new(|r: f64| model.psi_prime(r, l), tol);
        let y = integ.advance([geo.r_minus, 0.0], theta_half * geo.period)?;
        (y[0], y[1])
    };
    Ok(if flip { (r, -w) } else { (r, w) })
}

/// Node layout of the chart in the rescaled energy coordinate
/// tau = (E - E_min^L) / (E0 - E_min^L).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChartSpec {
    pub n_e: usize,
    pub n_l: usize,
    /// Smallest positive tau node (geometric clustering at trapping).
    pub tau_min_trap: f64,
    /// Smallest 1 - tau node (geometric clustering at the vacuum boundary).
    pub tau_min_vac: f64,
    /// Angle samples per orbit (full circle).
    pub n_theta: usize,
    pub ode_tol: f64,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            n_e: 257,
            n_l: 129,
            tau_min_trap: 1e-6,
            tau_min_vac: 1e-4,
            n_theta: 128,
            ode_tol: 1e-11,
        }
    }
}

fn tau_grid(spec: &ChartSpec) -> Vec<f64> {
    let n = spec.n_e;
    assert!(n >= 16, "chart needs at least 16 energy nodes");
    let interior = n - 2;
    let n_left = interior / 2 + 1; // includes tau = 1/2
    let n_right = interior - n_left;
    let mut taus = Vec::with_capacity(n);
    taus.push(0.0);
    let (lo, hi) = (spec.tau_min_trap.ln(), 0.5f64.ln());
    for i in 0..n_left {
        let u = i as f64 / (n_left - 1) as f64;
        taus.push((lo + u * (hi - lo)).exp());
    }
    let (lo_v, hi_v) = (spec.tau_min_vac.ln(), 0.5f64.ln());
    for i in (0..n_right).rev() {
        let u = i as f64 / n_right as f64;
        taus.push(1.0 - (lo_v + u * (hi_v - lo_v)).exp());
    }
    taus.push(1.0);
    taus
}

/// Tabulated action-angle geometry over the (E, L) support, with C^1
/// interpolation in the (tau, L) plane and cached orbit samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionChart {
    pub model: PolytropeModel,
    pub spec: ChartSpec,
    pub taus: Vec<f64>,
    pub ls: Vec<f64>,
    /// Per-L data: minimum energy, its location and curvature.
    pub e_min: Vec<f64>,
    pub r_l: Vec<f64>,
    pub curvature: Vec<f64>,
    /// Per-node arrays, index = j_l * n_e + i_tau.
    pub r_minus: Vec<f64>,
    pub r_plus: Vec<f64>,
    pub period: Vec<f64>,
    pub area: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Smallest |d omega / d E| observed on the grid.
    pub min_omega_slope: f64,
    period_interp: Grid2,
    area_interp: Grid2,
    omega_interp: Grid2,
    r_minus_interp: Grid2,
    r_plus_interp: Grid2,
    e_min_interp: Cubic1D,
    r_l_interp: Cubic1D,
    curvature_interp: Cubic1D,
    /// Orbit samples r(theta_j), w(theta_j) for theta_j = j / n_theta,
    /// j = 0..=n_theta/2 (the second half follows by reflection).
    pub orbit_r: Vec<f64>,
    pub orbit_w: Vec<f64>,
}

impl ActionChart {
    pub fn n_nodes(&self) -> usize {
        self.taus.len() * self.ls.len()
    }

    pub fn node_index(&self, i_tau: usize, j_l: usize) -> usize {
        j_l * self.taus.len() + i_tau
    }

    pub fn node_point(&self, i_tau: usize, j_l: usize) -> OrbitPoint {
        let em = self.e_min[j_l];
        OrbitPoint::new(em + self.taus[i_tau] * (self.model.e0 - em), self.ls[j_l])
    }

    pub fn n_half(&self) -> usize {
        self.spec.n_theta / 2
    }

    /// Orbit sample slice (inner turning point to outer) for one node.
    pub fn orbit_samples(&self, node: usize) -> (&[f64], &[f64]) {
        let n = self.n_half() + 1;
        (&self.orbit_r[node * n..(node + 1) * n], &self.orbit_w[node * n..(node + 1) * n])
    }

    pub fn build(model: &PolytropeModel, spec: ChartSpec) -> Result<ActionChart> {
        let taus = tau_grid(&spec);
        let n_e = taus.len();
        let n_l = spec.n_l;
        // cosine-clustered L grid over [L0, Lmax]
        let ls: Vec<f64> = (0..n_l)
            .map(|j| {
                let s = j as f64 / (n_l - 1) as f64;
                let t = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
                model.params.l0 + (model.l_max - model.params.l0) * t
            })
            .collect();

        let mins: Vec<crate::steady_state::PotentialMinimum> = ls
            .par_iter()
            .map(|&l| model.potential_minimum(l))
            .collect::<Result<Vec<_>>>()?;
        let e_min: Vec<f64> = mins.iter().map(|m| m.e_min).collect();
        let r_l: Vec<f64> = mins.iter().map(|m| m.r).collect();
        let curvature: Vec<f64> = mins.iter().map(|m| m.curvature).collect();

        let n_half = spec.n_theta / 2;
        let mut r_minus = vec![0.0; n_e * n_l];
        let mut r_plus = vec![0.0; n_e * n_l];
        let mut period_v = vec![0.0; n_e * n_l];
        let mut area_v = vec![0.0; n_e * n_l];
        let mut orbit_r = vec![0.0; n_e * n_l * (n_half + 1)];
        let mut orbit_w = vec![0.0; n_e * n_l * (n_half + 1)];

        struct Column {
            r_minus: Vec<f64>,
            r_plus: Vec<f64>,
            period: Vec<f64>,
            area: Vec<f64>,
            orbit_r: Vec<f64>,
            orbit_w: Vec<f64>,
        }

        let columns: Vec<Column> = (0..n_l)
            .into_par_iter()
            .map(|j| -> Result<Column> {
                let l = ls[j];
                let min = mins[j];
                let mut col = Column {
                    r_minus: vec![0.0; n_e],
                    r_plus: vec![0.0; n_e],
                    period: vec![0.0; n_e],
                    area: vec![0.0; n_e],
                    orbit_r: vec![0.0; n_e * (n_half + 1)],
                    orbit_w: vec![0.0; n_e * (n_half + 1)],
                };
                let delta = model.e0 - min.e_min;
                let degenerate_column = delta <= harmonic_cutoff(model);
                let t_harmonic = 2.0 * std::f64::consts::PI / min.curvature.sqrt();
                // below this depth the period quadrature on a tabulated
                // potential is noise-bound; those nodes are filled from the
                // harmonic value afterwards (exact closed forms make the
                // quadrature clean at any depth for eta = 0)
                let eps_reliable =
                    if model.is_kepler() { 1e-7 * model.e0.abs() } else { 1e-4 * model.e0.abs() };
                for i in 0..n_e {
                    let tau = taus[i];
                    let e = min.e_min + tau * delta;
                    let point = OrbitPoint::new(e, l);
                    if tau == 0.0 || degenerate_column {
                        col.r_minus[i] = min.r;
                        col.r_plus[i] = min.r;
                        col.period[i] = t_harmonic;
                        col.area[i] = 2.0 * std::f64::consts::PI * tau * delta
                            / min.curvature.sqrt();
                        for k in 0..=n_half {
                            col.orbit_r[i * (n_half + 1) + k] = min.r;
                            col.orbit_w[i * (n_half + 1) + k] = 0.0;
                        }
                        continue;
                    }
                    let (rm, rp) = turning_points_with_min(model, point, &min)?;
                    col.r_minus[i] = rm;
                    col.r_plus[i] = rp;
                    let eps = tau * delta;
                    if eps >= eps_reliable && eps >= harmonic_cutoff(model) {
                        col.period[i] = period_from_turning(model, point, rm, rp, min.curvature)?;
                        col.area[i] = area(model, point)?;
                    } else {
                        col.period[i] = f64::NAN; // filled below
                    }
                }
                // harmonic-anchored fill of noise-bound nodes: linear-in-E
                // period between the trapping value and the first reliable one
                if !degenerate_column {
                    if let Some(i_ref) = (1..n_e).find(|&i| col.period[i].is_finite()) {
                        let eps_ref = taus[i_ref] * delta;
                        let t_ref = col.period[i_ref];
                        for i in 1..i_ref {
                            let eps = taus[i] * delta;
                            col.period[i] = t_harmonic + (t_ref - t_harmonic) * eps / eps_ref;
                            col.area[i] = t_harmonic * eps
                                + 0.5 * (t_ref - t_harmonic) * eps * eps / eps_ref;
                        }
                    } else {
                        for i in 1..n_e {
                            let eps = taus[i] * delta;
                            col.period[i] = t_harmonic;
                            col.area[i] = t_harmonic * eps;
                        }
                    }
                }
                // orbit samples over half a period
                for i in 0..n_e {
                    let tau = taus[i];
                    if tau == 0.0 || degenerate_column {
                        continue;
                    }
                    let eps = tau * delta;
                    let rm = col.r_minus[i];
                    let rp = col.r_plus[i];
                    if eps < harmonic_cutoff(model) {
                        let a = 0.5 * (rp - rm);
                        for k in 0..=n_half {
                            let ang = 2.0 * std::f64::consts::PI * k as f64 / spec.n_theta as f64;
                            col.orbit_r[i * (n_half + 1) + k] = min.r - a * ang.cos();
                            col.orbit_w[i * (n_half + 1) + k] =
                                a * min.curvature.sqrt() * ang.sin();
                        }
                    } else {
                        let integ = OrbitIntegrator::new(
                            |r: f64| model.psi_prime(r, l),
                            OdeTol { rtol: spec.ode_tol, atol: spec.ode_tol * 1e-2 },
                        );
                        let t = col.period[i];
                        let times: Vec<f64> = (1..=n_half)
                            .map(|k| t * k as f64 / spec.n_theta as f64)
                            .collect();
                        let states = integ.sample_at([rm, 0.0], &times)?;
                        col.orbit_r[i * (n_half + 1)] = rm;
                        col.orbit_w[i * (n_half + 1)] = 0.0;
                        for (k, y) in states.iter().enumerate() {
                            col.orbit_r[i * (n_half + 1) + k + 1] = y[0];
                            col.orbit_w[i * (n_half + 1) + k + 1] = y[1];
                        }
                    }
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;

        for (j, col) in columns.into_iter().enumerate() {
            for i in 0..n_e {
                let idx = j * n_e + i;
                r_minus[idx] = col.r_minus[i];
                r_plus[idx] = col.r_plus[i];
                period_v[idx] = col.period[i];
                area_v[idx] = col.area[i];
                let src = &col.orbit_r[i * (n_half + 1)..(i + 1) * (n_half + 1)];
                orbit_r[idx * (n_half + 1)..(idx + 1) * (n_half + 1)].copy_from_slice(src);
                let src = &col.orbit_w[i * (n_half + 1)..(i + 1) * (n_half + 1)];
                orbit_w[idx * (n_half + 1)..(idx + 1) * (n_half + 1)].copy_from_slice(src);
            }
        }

        let omega: Vec<f64> = period_v.iter().map(|&t| 1.0 / t).collect();
        let omega_min = omega.iter().cloned().fold(f64::INFINITY, f64::min);
        let omega_max = omega.iter().cloned().fold(0.0, f64::max);

        let period_interp = Grid2::new(taus.clone(), ls.clone(), period_v.clone());
        let area_interp = Grid2::new(taus.clone(), ls.clone(), area_v.clone());
        let omega_interp = Grid2::new(taus.clone(), ls.clone(), omega.clone());
        let r_minus_interp = Grid2::new(taus.clone(), ls.clone(), r_minus.clone());
        let r_plus_interp = Grid2::new(taus.clone(), ls.clone(), r_plus.clone());
        let dem: Vec<f64> = r_l.iter().map(|&r| 0.5 / (r * r)).collect();
        let e_min_interp = Cubic1D::with_slopes(ls.clone(), e_min.clone(), dem);
        let drl: Vec<f64> =
            r_l.iter().zip(&curvature).map(|(&r, &a)| 1.0 / (a * r * r * r)).collect();
        let r_l_interp = Cubic1D::with_slopes(ls.clone(), r_l.clone(), drl);
        let curvature_interp = Cubic1D::new(ls.clone(), curvature.clone());

        let mut chart = ActionChart {
            model: model.clone(),
            spec,
            taus,
            ls,
            e_min,
            r_l,
            curvature,
            r_minus,
            r_plus,
            period: period_v,
            area: area_v,
            omega,
            omega_min,
            omega_max,
            min_omega_slope: 0.0,
            period_interp,
            area_interp,
            omega_interp,
            r_minus_interp,
            r_plus_interp,
            e_min_interp,
            r_l_interp,
            curvature_interp,
            orbit_r,
            orbit_w,
        };
        chart.min_omega_slope = chart.measure_min_omega_slope()?;
        Ok(chart)
    }

    /// Verify that omega decreases in E on every L slice and return the
    /// smallest |d omega / d E|. Nodes below the reliable trapping depth of
    /// a tabulated potential carry interpolated periods and are skipped.
    fn measure_min_omega_slope(&self) -> Result<f64> {
        let n_e = self.taus.len();
        let eps_reliable =
            if self.model.is_kepler() { 1e-7 * self.model.e0.abs() } else { 1e-4 * self.model.e0.abs() };
        let mut min_abs = f64::INFINITY;
        for j in 0..self.ls.len() {
            let delta = self.model.e0 - self.e_min[j];
            if delta <= 1e-10 * self.model.e0.abs().max(1.0) {
                continue;
            }
            for i in 1..n_e - 1 {
                if self.taus[i - 1] * delta < eps_reliable {
                    continue;
                }
                let de = (self.taus[i + 1] - self.taus[i - 1]) * delta;
                let slope =
                    (self.omega[j * n_e + i + 1] - self.omega[j * n_e + i - 1]) / de;
                if slope >= 0.0 {
                    return Err(Error::OutsideDomain {
                        what: "frequency monotonicity",
                        detail: format!(
                            "d omega / d E = {slope} >= 0 at tau = {}, L = {}",
                            self.taus[i], self.ls[j]
                        ),
                    });
                }
                min_abs = min_abs.min(slope.abs());
            }
        }
        Ok(min_abs)
    }

    /// Interpolation grid of the frequency table (shared node layout for
    /// stencil-based field sampling).
    pub fn omega_grid(&self) -> &Grid2 {
        &self.omega_interp
    }

    pub fn e_min_at(&self, l: f64) -> f64 {
        self.e_min_interp.eval(l)
    }

    pub fn r_l_at(&self, l: f64) -> f64 {
        self.r_l_interp.eval(l)
    }

    pub fn curvature_at(&self, l: f64) -> f64 {
        self.curvature_interp.eval(l)
    }

    pub fn tau_of(&self, e: f64, l: f64) -> f64 {
        let em = self.e_min_at(l);
        ((e - em) / (self.model.e0 - em)).clamp(0.0, 1.0)
    }

    pub fn omega_at(&self, e: f64, l: f64) -> f64 {
        self.omega_interp.eval(self.tau_of(e, l), l)
    }

    pub fn period_at(&self, e: f64, l: f64) -> f64 {
        self.period_interp.eval(self.tau_of(e, l), l)
    }

    pub fn area_at(&self, e: f64, l: f64) -> f64 {
        self.area_interp.eval(self.tau_of(e, l), l)
    }

    pub fn r_minus_at(&self, e: f64, l: f64) -> f64 {
        self.r_minus_interp.eval(self.tau_of(e, l), l)
    }

    pub fn r_plus_at(&self, e: f64, l: f64) -> f64 {
        self.r_plus_interp.eval(self.tau_of(e, l), l)
    }

    /// d omega / d E at fixed L.
    pub fn d_omega_de(&self, e: f64, l: f64) -> f64 {
        let em = self.e_min_at(l);
        let delta = self.model.e0 - em;
        let tau = ((e - em) / delta).clamp(0.0, 1.0);
        self.omega_interp.deriv_x(tau, l) / delta
    }

    /// d omega / d L at fixed E.
    pub fn d_omega_dl(&self, e: f64, l: f64) -> f64 {
        let em = self.e_min_at(l);
        let delta = self.model.e0 - em;
        let tau = ((e - em) / delta).clamp(0.0, 1.0);
        let dem = self.e_min_interp.deriv(l);
        self.omega_interp.deriv_y(tau, l)
            - self.omega_interp.deriv_x(tau, l) * dem * (1.0 - tau) / delta
    }

    /// Membership test for the closed support.
    pub fn contains(&self, point: OrbitPoint) -> bool {
        if point.l < self.model.params.l0 || point.l > self.model.l_max {
            return false;
        }
        let em = self.e_min_at(point.l);
        point.e >= em && point.e <= self.model.e0
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::{build_kepler, build_selfconsistent, kepler, PolytropeParams,
        SteadyStateNumerics};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn kepler_model() -> PolytropeModel {
        build_kepler(PolytropeParams::new(3.5, 2.0, 0.0, -0.25, 1.0, 1.0)).unwrap()
    }

    fn eta_model() -> PolytropeModel {
        let p = PolytropeParams::new(3.5, 2.0, 0.01, -0.25, 1.0, 1.0);
        build_selfconsistent(p, &SteadyStateNumerics { n_radial: 1024, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn kepler_turning_points_match_closed_form() {
        let model = kepler_model();
        let (rm, rp) = turning_points(&model, OrbitPoint::new(-0.25, 1.0)).unwrap();
        assert_abs_diff_eq!(rm, 2.0 - 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rp, 2.0 + 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn turning_points_collapse_to_r_l() {
        let model = kepler_model();
        let e = -0.5 + 1e-12;
        let (rm, rp) = turning_points(&model, OrbitPoint::new(e, 1.0)).unwrap();
        assert_abs_diff_eq!(rm, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(rp, 1.0, epsilon = 1e-5);
        assert!(rm < 1.0 && rp > 1.0);
    }

    #[test]
    fn degenerate_orbit_rejected() {
        let model = kepler_model();
        assert!(matches!(
            turning_points(&model, OrbitPoint::new(-0.6, 1.0)),
            Err(Error::DegenerateOrbit { .. })
        ));
    }

    #[test]
    fn eta_turning_points_match_bisection_oracle() {
        let model = eta_model();
        let point = OrbitPoint::new(-0.3, 1.0);
        let (rm, rp) = turning_points(&model, point).unwrap();
        // independent bisection on Psi_L - E
        let f = |r: f64| model.effective_potential(r, point.l) - point.e;
        let bisect = |mut a: f64, mut b: f64| {
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if f(a) * f(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        };
        let r_l = model.potential_minimum(point.l).unwrap().r;
        assert_abs_diff_eq!(rm, bisect(0.3, r_l), epsilon = 1e-10);
        assert_abs_diff_eq!(rp, bisect(r_l, 6.0), epsilon = 1e-10);
    }

    #[test]
    fn kepler_period_closed_form() {
        let model = kepler_model();
        let t = period(&model, OrbitPoint::new(-0.25, 1.0)).unwrap();
        assert_relative_eq!(t, kepler::period(1.0, -0.25), max_relative = 1e-9);
        let t2 = period(&model, OrbitPoint::new(-0.5 + 1e-4, 1.0)).unwrap();
        assert_relative_eq!(t2, kepler::period(1.0, -0.5 + 1e-4), max_relative = 1e-9);
        // independence of L at fixed E
        let t3 = period(&model, OrbitPoint::new(-0.25, 1.7)).unwrap();
        assert_relative_eq!(t, t3, max_relative = 1e-9);
    }

    #[test]
    fn area_harmonic_limit() {
        let model = kepler_model();
        let min = model.potential_minimum(1.0).unwrap();
        for eps in [1e-5, 1e-6] {
            let a = area(&model, OrbitPoint::new(min.e_min + eps, 1.0)).unwrap();
            let harmonic = 2.0 * std::f64::consts::PI * eps / min.curvature.sqrt();
            assert_relative_eq!(a, harmonic, max_relative = 2e-4);
        }
    }

    #[test]
    fn area_derivative_is_period() {
        let model = eta_model();
        let point = OrbitPoint::new(-0.3, 1.2);
        let h = 1e-6;
        let ap = area(&model, OrbitPoint::new(point.e + h, point.l)).unwrap();
        let am = area(&model, OrbitPoint::new(point.e - h, point.l)).unwrap();
        let t = period(&model, point).unwrap();
        assert_relative_eq!((ap - am) / (2.0 * h), t, max_relative = 1e-6);
    }

    #[test]
    fn kepler_area_against_plain_quadrature() {
        let model = kepler_model();
        let point = OrbitPoint::new(-0.3, 1.1);
        let a = area(&model, point).unwrap();
        // same integral, naive quadrature with a fine fixed rule
        let (rm, rp) = turning_points(&model, point).unwrap();
        let rule = gauss_legendre(4096);
        let naive = 2.0
            * rule.integrate(rm, rp, |r| {
                (2.0 * (point.e - model.effective_potential(r, point.l))).max(0.0).sqrt()
            });
        assert_relative_eq!(a, naive, max_relative = 1e-6);
    }

    #[test]
    fn angle_at_turning_points() {
        let model = eta_model();
        let point = OrbitPoint::new(-0.3, 1.0);
        let (rm, rp) = turning_points(&model, point).unwrap();
        assert_abs_diff_eq!(angle(&model, rp, 0.0, point.l).unwrap(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(angle(&model, rm, 0.0, point.l).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn angle_reflection_symmetry() {
        let model = eta_model();
        let r = 1.3;
        let w = 0.21;
        let th = angle(&model, r, w, 1.0).unwrap();
        let th_neg = angle(&model, r, -w, 1.0).unwrap();
        assert_abs_diff_eq!(th + th_neg, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn angle_matches_ode_clock() {
        let model = kepler_model();
        let point = OrbitPoint::new(-0.35, 1.2);
        let geo = orbit_geometry(&model, point).unwrap();
        for theta in [0.05, 0.21, 0.37, 0.49] {
            let (r, w) =
                orbit_position_with_geometry(&model, theta, &geo, OdeTol::default()).unwrap();
            let th = angle_with_geometry(&model, r, w, &geo).unwrap();
            assert_abs_diff_eq!(th, theta, epsilon = 1e-7);
        }
    }

    #[test]
    fn orbit_position_endpoints_and_energy() {
        let model = eta_model();
        let point = OrbitPoint::new(-0.32, 1.1);
        let geo = orbit_geometry(&model, point).unwrap();
        let (r0, w0) = orbit_position(&model, 0.0, point).unwrap();
        assert_abs_diff_eq!(r0, geo.r_minus, epsilon = 1e-10);
        assert_abs_diff_eq!(w0, 0.0, epsilon = 1e-12);
        let (rh, wh) = orbit_position(&model, 0.5, point).unwrap();
        assert_abs_diff_eq!(rh, geo.r_plus, epsilon = 1e-8);
        assert_abs_diff_eq!(wh, 0.0, epsilon = 1e-7);
        // energy drift along one period
        for theta in [0.1, 0.33, 0.62, 0.95] {
            let (r, w) = orbit_position(&model, theta, point).unwrap();
            let e = 0.5 * w * w + model.effective_potential(r, point.l);
            assert_abs_diff_eq!(e, point.e, epsilon = 1e-9);
        }
    }

    #[test]
    fn chart_kepler_frequency_extrema() {
        let model = kepler_model();
        let spec = ChartSpec { n_e: 65, n_l: 33, n_theta: 32, ..Default::default() };
        let chart = ActionChart::build(&model, spec).unwrap();
        let om_min = kepler::omega(1.0, -0.25);
        let om_max = kepler::omega(1.0, -0.5);
        assert_relative_eq!(chart.omega_min, om_min, max_relative = 1e-8);
        assert_relative_eq!(chart.omega_max, om_max, max_relative = 1e-8);
        assert!(chart.min_omega_slope > 0.0);
    }

    #[test]
    fn chart_interpolation_consistency() {
        let model = eta_model();
        let spec = ChartSpec { n_e: 65, n_l: 33, n_theta: 32, ..Default::default() };
        let chart = ActionChart::build(&model, spec).unwrap();
        // off-node: interpolated period against a fresh quadrature
        let l = 1.37;
        let em = model.potential_minimum(l).unwrap().e_min;
        let e = em + 0.4 * (model.e0 - em);
        let t_direct = period(&model, OrbitPoint::new(e, l)).unwrap();
        assert_relative_eq!(chart.period_at(e, l), t_direct, max_relative = 1e-5);
        // angle additivity at random points: flowing for time s advances the
        // angle by s * omega
        let point = OrbitPoint::new(e, l);
        let geo = orbit_geometry(&model, point).unwrap();
        let om = 1.0 / geo.period;
        let mut rng = 411u64;
        for _ in 0..10 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let theta0 = (rng >> 11) as f64 / (1u64 << 53) as f64;
            let s = 0.77 * geo.period;
            let (r0, w0) =
                orbit_position_with_geometry(&model, theta0, &geo, OdeTol::default()).unwrap();
            let integ = OrbitIntegrator::new(|r: f64| model.psi_prime(r, point.l), OdeTol::default());
            let y = integ.advance([r0, w0], s).unwrap();
            let th1 = angle_with_geometry(&model, y[0], y[1], &geo).unwrap();
            let expected = (theta0 + s * om).rem_euclid(1.0);
            let diff = (th1 - expected).abs();
            let diff = diff.min((1.0 - diff).abs());
            assert!(diff < 1e-6, "angle additivity violated: {diff}");
        }
    }
}
