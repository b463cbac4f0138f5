//! Polytropic shell equilibria around a central point mass.
//!
//! The equilibrium phase-space density is eta * (E0 - E)_+^mu * (L - L0)_+^nu
//! supported on a spherical shell. At eta = 0 the self-potential vanishes and
//! every geometric quantity has a closed form; for small eta > 0 the
//! self-consistent potential is produced by a Picard iteration on the radial
//! Poisson equation in enclosed-mass form.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::interp::Cubic1D;
use crate::numerics::quad::cumulative_from_left;
use crate::numerics::roots::{brent, expand_bracket_down, expand_bracket_up};

pub const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Parameters of the polytropic ansatz and the central point mass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolytropeParams {
    /// Energy exponent, mu > 2.
    pub mu: f64,
    /// Squared-angular-momentum exponent, nu > 1.
    pub nu: f64,
    /// Amplitude of the shell, 0 <= eta <= eta_max.
    pub eta: f64,
    /// Relative potential depth at the origin, inside the single-gap window.
    pub kappa: f64,
    /// Central point mass M > 0.
    pub central_mass: f64,
    /// Minimal squared angular momentum L0 > 0.
    pub l0: f64,
    /// Configurable smallness cap on eta.
    pub eta_max: f64,
}

impl PolytropeParams {
    pub fn new(mu: f64, nu: f64, eta: f64, kappa: f64, central_mass: f64, l0: f64) -> Self {
        Self { mu, nu, eta, kappa, central_mass, l0, eta_max: 0.1 }
    }

    /// Lower end of the admissible kappa window (single-gap condition).
    pub fn kappa_lower(&self) -> f64 {
        -(2f64.powf(-2.0 / 3.0)) * self.central_mass * self.central_mass / (2.0 * self.l0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 2.0) {
            return Err(Error::InvalidParameter(format!("mu = {} must exceed 2", self.mu)));
        }
        if !(self.nu > 1.0) {
            return Err(Error::InvalidParameter(format!("nu = {} must exceed 1", self.nu)));
        }
        if !(self.central_mass > 0.0) {
            return Err(Error::InvalidParameter("central mass must be positive".into()));
        }
        if !(self.l0 > 0.0) {
            return Err(Error::InvalidParameter("l0 must be positive".into()));
        }
        if !(self.eta >= 0.0 && self.eta <= self.eta_max) {
            return Err(Error::InvalidParameter(format!(
                "eta = {} outside [0, {}]",
                self.eta, self.eta_max
            )));
        }
        let lower = self.kappa_lower();
        if !(self.kappa > lower && self.kappa < 0.0) {
            return Err(Error::SingleGapViolation { kappa: self.kappa, lower });
        }
        Ok(())
    }

    /// Normalisation of the shell density: the closed Beta/Gamma product for
    /// the double integral of the ansatz over (w, L) at fixed radius.
    pub fn ansatz_norm(&self) -> f64 {
        let (mu, nu) = (self.mu, self.nu);
        2f64.powf(nu + 1.5) * std::f64::consts::PI.powf(1.5) * gamma(mu + 1.0) * gamma(nu + 1.0)
            / gamma(mu + nu + 2.5)
    }

    /// Regularity index N = max { n : n < mu + nu + 3/2 }.
    pub fn regularity_n(&self) -> u32 {
        let x = self.mu + self.nu + 1.5;
        let f = x.floor();
        let n = if f == x { f - 1.0 } else { f };
        n as u32
    }

    /// Decay index for maximally smooth data: floor(min(mu - 1, nu)).
    pub fn k_default(&self) -> u32 {
        (self.mu - 1.0).min(self.nu).floor() as u32
    }

    /// min(mu - 1, nu): the steady-state contribution to the decay index.
    pub fn k_steady(&self) -> f64 {
        (self.mu - 1.0).min(self.nu)
    }
}

/// Closed-form quantities for the pure point-mass (eta = 0) configuration.
pub mod kepler {
    /// Effective potential -M/r + L/(2 r^2).
    pub fn psi(m: f64, l: f64, r: f64) -> f64 {
        -m / r + 0.5 * l / (r * r)
    }

    pub fn r_l(m: f64, l: f64) -> f64 {
        l / m
    }

    pub fn e_min(m: f64, l: f64) -> f64 {
        -m * m / (2.0 * l)
    }

    /// Turning points of the radial motion, in cancellation-stable form.
    pub fn turning_points(m: f64, e: f64, l: f64) -> (f64, f64) {
        let disc = m * m + 2.0 * e * l;
        let s = disc.max(0.0).sqrt();
        (l / (m + s), (m + s) / (-2.0 * e))
    }

    /// Radial period, independent of L.
    pub fn period(m: f64, e: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 * 2f64.sqrt() * m / (-e).powf(1.5)
    }

    pub fn omega(m: f64, e: f64) -> f64 {
        1.0 / period(m, e)
    }

    pub fn l_max(m: f64, kappa: f64) -> f64 {
        -m * m / (2.0 * kappa)
    }
}

/// Tabulated self-consistent shell potential with exterior c/r continuation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfPotential {
    pub r_lo: f64,
    pub r_hi: f64,
    pub total_mass: f64,
    pub u_inner: f64,
    u: Cubic1D,
    mass: Cubic1D,
    rho: Cubic1D,
}

impl SelfPotential {
    pub fn u(&self, r: f64) -> f64 {
        if r <= self.r_lo {
            self.u_inner
        } else if r >= self.r_hi {
            -self.total_mass / r
        } else {
            self.u.eval(r)
        }
    }

    pub fn u_prime(&self, r: f64) -> f64 {
        if r <= self.r_lo {
            0.0
        } else if r >= self.r_hi {
            self.total_mass / (r * r)
        } else {
            self.mass.eval(r) / (r * r)
        }
    }

    pub fn u_second(&self, r: f64) -> f64 {
        if r <= self.r_lo {
            0.0
        } else if r >= self.r_hi {
            -2.0 * self.total_mass / (r * r * r)
        } else {
            FOUR_PI * self.rho.eval(r).max(0.0) - 2.0 * self.mass.eval(r) / (r * r * r)
        }
    }

    pub fn rho(&self, r: f64) -> f64 {
        if r <= self.r_lo || r >= self.r_hi {
            0.0
        } else {
            self.rho.eval(r).max(0.0)
        }
    }

    pub fn grid(&self) -> &[f64] {
        self.u.xs()
    }
}

/// A constructed equilibrium: parameters, derived constants, and (for
/// eta > 0) the converged self-potential table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytropeModel {
    pub params: PolytropeParams,
    /// Cutoff energy E0 = kappa + U(0).
    pub e0: f64,
    pub l_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub regularity_n: u32,
    pub k_default: u32,
    pub ansatz_norm: f64,
    pub potential: Option<SelfPotential>,
    pub iterations: usize,
    pub contraction: f64,
}

/// Grid/tolerance knobs for the self-consistent solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SteadyStateNumerics {
    pub n_radial: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Picard relaxation factor (1 = plain iteration).
    pub relax: f64,
}

impl Default for SteadyStateNumerics {
    fn default() -> Self {
        Self { n_radial: 2048, tol: 1e-12, max_iter: 200, relax: 1.0 }
    }
}

/// Exact eta = 0 model from the point-mass closed forms.
pub fn build_kepler(params: PolytropeParams) -> Result<PolytropeModel> {
    params.validate()?;
    if params.eta != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "build_kepler requires eta = 0, got {}",
            params.eta
        )));
    }
    let m = params.central_mass;
    let disc = m * m + 2.0 * params.kappa * params.l0;
    if disc < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "M^2 + 2 kappa L0 = {disc} < 0: no turning points at the cutoff energy"
        )));
    }
    let (r_min, r_max) = kepler::turning_points(m, params.kappa, params.l0);
    Ok(PolytropeModel {
        params,
        e0: params.kappa,
        l_max: kepler::l_max(m, params.kappa),
        r_min,
        r_max,
        regularity_n: params.regularity_n(),
        k_default: params.k_default(),
        ansatz_norm: params.ansatz_norm(),
        potential: None,
        iterations: 0,
        contraction: 0.0,
    })
}

/// Radial master grid: node density boosted around the estimated support
/// edges, where the shell density loses smoothness.
fn radial_grid(r_lo: f64, r_hi: f64, edge_lo: f64, edge_hi: f64, n: usize) -> Vec<f64> {
    let fine = 16 * n;
    let sigma = 0.05 * (edge_hi - edge_lo);
    let weight = |r: f64| {
        1.0 + 6.0
            * ((-0.5 * ((r - edge_lo) / sigma).powi(2)).exp()
                + (-0.5 * ((r - edge_hi) / sigma).powi(2)).exp())
    };
    let mut cdf = Vec::with_capacity(fine + 1);
    let mut acc = 0.0;
    let h = (r_hi - r_lo) / fine as f64;
    cdf.push(0.0);
    let mut w_prev = weight(r_lo);
    for i in 1..=fine {
        let r = r_lo + i as f64 * h;
        let w = weight(r);
        acc += 0.5 * (w + w_prev) * h;
        w_prev = w;
        cdf.push(acc);
    }
    let total = acc;
    let mut grid = Vec::with_capacity(n);
    let mut j = 0usize;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while j + 1 < cdf.len() && cdf[j + 1] < target {
            j += 1;
        }
        let r = if j + 1 >= cdf.len() {
            r_hi
        } else {
            let f0 = cdf[j];
            let f1 = cdf[j + 1];
            let t = if f1 > f0 { (target - f0) / (f1 - f0) } else { 0.0 };
            r_lo + (j as f64 + t) * h
        };
        grid.push(r);
    }
    grid[0] = r_lo;
    grid[n - 1] = r_hi;
    grid
}

/// Self-consistent model by Picard iteration on the enclosed-mass Poisson
/// solve. eta = 0 falls back to the closed forms.
pub fn build_selfconsistent(
    params: PolytropeParams,
    numerics: &SteadyStateNumerics,
) -> Result<PolytropeModel> {
    params.validate()?;
    if params.eta == 0.0 {
        return build_kepler(params);
    }
    let m = params.central_mass;
    let l0 = params.l0;
    let (rk_min, rk_max) = kepler::turning_points(m, params.kappa, l0);
    let r_lo = 0.7 * rk_min;
    let r_hi = 1.4 * rk_max;
    let grid = radial_grid(r_lo, r_hi, rk_min, rk_max, numerics.n_radial);
    let n = grid.len();
    let c_norm = params.ansatz_norm();
    let p = params.mu + params.nu + 1.5;

    let mut u = vec![0.0; n];
    let mut e0 = params.kappa;
    let mut last_update = f64::INFINITY;
    let mut contraction = 0.0;
    let mut rho = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        // shell density from the current potential iterate
        let mut any_positive = false;
        for i in 0..n {
            let r = grid[i];
            let psi = u[i] - m / r + 0.5 * l0 / (r * r);
            let delta = e0 - psi;
            rho[i] = if delta > 0.0 {
                any_positive = true;
                params.eta * c_norm * r.powf(2.0 * params.nu) * delta.powf(p)
            } else {
                0.0
            };
        }
        if !any_positive {
            return Err(Error::DegenerateState);
        }
        if rho[0] > 0.0 || rho[n - 1] > 0.0 {
            return Err(Error::InvalidParameter(
                "shell support touches the radial window; eta too large for the grid padding".into(),
            ));
        }
        // enclosed mass and inward potential integration
        let integrand: Vec<f64> =
            grid.iter().zip(&rho).map(|(&r, &d)| FOUR_PI * d * r * r).collect();
        mass = cumulative_from_left(&grid, &integrand);
        let m_tot = mass[n - 1];
        let mut u_new = vec![0.0; n];
        u_new[n - 1] = -m_tot / grid[n - 1];
        for i in (0..n - 1).rev() {
            let g0 = mass[i] / (grid[i] * grid[i]);
            let g1 = mass[i + 1] / (grid[i + 1] * grid[i + 1]);
            u_new[i] = u_new[i + 1] - 0.5 * (g0 + g1) * (grid[i + 1] - grid[i]);
        }
        let mut diff = 0.0f64;
        for i in 0..n {
            diff = diff.max((u_new[i] - u[i]).abs());
            u[i] = numerics.relax * u_new[i] + (1.0 - numerics.relax) * u[i];
        }
        e0 = params.kappa + u[0];
        if last_update.is_finite() && last_update > 0.0 {
            contraction = diff / last_update;
        }
        last_update = diff;
        if diff < numerics.tol {
            break;
        }
        if iterations >= numerics.max_iter {
            return Err(Error::FixedPointNoConvergence {
                iters: iterations,
                last_update: diff,
                contraction,
            });
        }
    }

    // interpolants with exact node derivatives where available
    let d_mass: Vec<f64> = grid.iter().zip(&rho).map(|(&r, &d)| FOUR_PI * d * r * r).collect();
    let mass_interp = Cubic1D::with_slopes(grid.clone(), mass.clone(), d_mass);
    let du: Vec<f64> = grid.iter().zip(&mass).map(|(&r, &mm)| mm / (r * r)).collect();
    let u_interp = Cubic1D::with_slopes(grid.clone(), u.clone(), du);
    let rho_interp = Cubic1D::new(grid.clone(), rho.clone());
    let potential = SelfPotential {
        r_lo,
        r_hi,
        total_mass: mass[n - 1],
        u_inner: u[0],
        u: u_interp,
        mass: mass_interp,
        rho: rho_interp,
    };

    let mut model = PolytropeModel {
        params,
        e0,
        l_max: 0.0,
        r_min: 0.0,
        r_max: 0.0,
        regularity_n: params.regularity_n(),
        k_default: params.k_default(),
        ansatz_norm: c_norm,
        potential: Some(potential),
        iterations,
        contraction,
    };
    let min0 = model.potential_minimum(l0)?;
    let scale = model.r_of_kepler_scale();
    model.r_min = brent(
        |r| model.effective_potential(r, l0) - e0,
        r_lo,
        min0.r,
        1e-13 * scale,
        200,
        "inner support edge",
    )?;
    model.r_max = brent(
        |r| model.effective_potential(r, l0) - e0,
        min0.r,
        r_hi,
        1e-13 * scale,
        200,
        "outer support edge",
    )?;
    // maximal momentum: E_min(L) grows with L and meets the cutoff energy
    let lk_max = kepler::l_max(m, params.kappa);
    let f = |l: f64| model.potential_minimum(l).map(|mn| mn.e_min - e0).unwrap_or(f64::NAN);
    let (bl, bh) = expand_bracket_up(f, l0, 1.05 * lk_max, 1.3, 40, "l_max bracket")?;
    model.l_max = brent(f, bl, bh, 1e-13 * lk_max, 200, "l_max")?;
    Ok(model)
}

/// Location and curvature of the effective-potential minimum at fixed L.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PotentialMinimum {
    pub r: f64,
    pub e_min: f64,
    /// alpha_L = Psi_L''(r_L) > 0.
    pub curvature: f64,
}

impl PolytropeModel {
    pub fn is_kepler(&self) -> bool {
        self.potential.is_none()
    }

    fn r_of_kepler_scale(&self) -> f64 {
        self.params.l0 / self.params.central_mass
    }

    /// Shell self-potential (zero at eta = 0).
    pub fn u_self(&self, r: f64) -> f64 {
        self.potential.as_ref().map_or(0.0, |p| p.u(r))
    }

    pub fn u_self_prime(&self, r: f64) -> f64 {
        self.potential.as_ref().map_or(0.0, |p| p.u_prime(r))
    }

    pub fn u_self_second(&self, r: f64) -> f64 {
        self.potential.as_ref().map_or(0.0, |p| p.u_second(r))
    }

    /// Effective potential Psi_L(r) = U(r) - M/r + L/(2 r^2).
    pub fn effective_potential(&self, r: f64, l: f64) -> f64 {
        assert!(r > 0.0, "effective potential requires r > 0");
        self.u_self(r) - self.params.central_mass / r + 0.5 * l / (r * r)
    }

    /// Checked variant returning a domain error for r <= 0.
    pub fn try_effective_potential(&self, r: f64, l: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::OutsideDomain {
                what: "effective potential",
                detail: format!("r = {r} must be positive"),
            });
        }
        Ok(self.effective_potential(r, l))
    }

    /// E - Psi_L(r) in a cancellation-resistant form: the point-mass part is
    /// factored through its closed-form roots, so only the O(eta) shell
    /// potential enters as a difference.
    pub fn energy_minus_psi(&self, e: f64, r: f64, l: f64) -> f64 {
        let m = self.params.central_mass;
        let disc = m * m + 2.0 * e * l;
        let kepler_part = if disc >= 0.0 && e < -1e-300 {
            let s = disc.sqrt();
            let rho_minus = (-m + s) / (2.0 * e);
            let rho_plus = (-m - s) / (2.0 * e);
            e * (r - rho_minus) * (r - rho_plus) / (r * r)
        } else {
            e + m / r - 0.5 * l / (r * r)
        };
        kepler_part - self.u_self(r)
    }

    pub fn psi_prime(&self, r: f64, l: f64) -> f64 {
        self.u_self_prime(r) + self.params.central_mass / (r * r) - l / (r * r * r)
    }

    pub fn psi_second(&self, r: f64, l: f64) -> f64 {
        self.u_self_second(r) - 2.0 * self.params.central_mass / (r * r * r)
            + 3.0 * l / (r * r * r * r)
    }

    /// Minimum of the effective potential at fixed L by bracketed root
    /// finding on Psi_L'.
    pub fn potential_minimum(&self, l: f64) -> Result<PotentialMinimum> {
        let m = self.params.central_mass;
        let seed = kepler::r_l(m, l);
        let f = |r: f64| self.psi_prime(r, l);
        let (mut lo, mut hi) = (0.6 * seed, 1.6 * seed);
        if f(lo) >= 0.0 {
            let (a, b) = expand_bracket_down(f, lo, hi, 1.5, 60, "potential minimum")?;
            lo = a;
            hi = b;
        } else if f(hi) <= 0.0 {
            let (a, b) = expand_bracket_up(f, lo, hi, 1.5, 60, "potential minimum")?;
            lo = a;
            hi = b;
        }
        let r = brent(f, lo, hi, 1e-13 * seed, 200, "potential minimum")?;
        let curvature = self.psi_second(r, l);
        if curvature <= 0.0 {
            return Err(Error::OutsideDomain {
                what: "potential minimum",
                detail: format!("non-convex minimum at r = {r}, L = {l}"),
            });
        }
        Ok(PotentialMinimum { r, e_min: self.effective_potential(r, l), curvature })
    }

    /// Shell density at radius r implied by the stored cutoff energy.
    pub fn shell_density(&self, r: f64) -> f64 {
        let delta = self.e0 - self.effective_potential(r, self.params.l0);
        if delta <= 0.0 {
            return 0.0;
        }
        self.params.eta
            * self.ansatz_norm
            * r.powf(2.0 * self.params.nu)
            * delta.powf(self.params.mu + self.params.nu + 1.5)
    }

    /// Ansatz energy derivative magnitude |phi'(E, L)| (eta-normalised).
    pub fn phi_prime_abs(&self, e: f64, l: f64) -> f64 {
        let de = self.e0 - e;
        let dl = l - self.params.l0;
        if de <= 0.0 || dl <= 0.0 {
            return 0.0;
        }
        self.params.mu * de.powf(self.params.mu - 1.0) * dl.powf(self.params.nu)
    }

    /// Ansatz value phi(E, L) (eta-normalised).
    pub fn phi(&self, e: f64, l: f64) -> f64 {
        let de = self.e0 - e;
        let dl = l - self.params.l0;
        if de <= 0.0 || dl <= 0.0 {
            return 0.0;
        }
        de.powf(self.params.mu) * dl.powf(self.params.nu)
    }

    /// Re-solve the Poisson equation from the model's own density and return
    /// the sup-norm discrepancy against the stored potential.
    pub fn poisson_residual(&self) -> f64 {
        let Some(pot) = &self.potential else { return 0.0 };
        let grid = pot.grid().to_vec();
        let n = grid.len();
        let rho: Vec<f64> = grid.iter().map(|&r| self.shell_density(r)).collect();
        let integrand: Vec<f64> =
            grid.iter().zip(&rho).map(|(&r, &d)| FOUR_PI * d * r * r).collect();
        let mass = cumulative_from_left(&grid, &integrand);
        let mut u_new = vec![0.0; n];
        u_new[n - 1] = -mass[n - 1] / grid[n - 1];
        for i in (0..n - 1).rev() {
            let g0 = mass[i] / (grid[i] * grid[i]);
            let g1 = mass[i + 1] / (grid[i + 1] * grid[i + 1]);
            u_new[i] = u_new[i + 1] - 0.5 * (g0 + g1) * (grid[i + 1] - grid[i]);
        }
        grid.iter()
            .zip(&u_new)
            .map(|(&r, &v)| (v - pot.u(r)).abs())
            .fold(0.0, f64::max)
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
