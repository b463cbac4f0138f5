//! Adaptive Dormand-Prince 5(4) integrator for the planar radial-motion
//! system dr/dt = w, dw/dt = -g(r).

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
// 5th order solution weights (b) and embedded 4th order weights (b*)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const BS1: f64 = 5179.0 / 57600.0;
const BS3: f64 = 7571.0 / 16695.0;
const BS4: f64 = 393.0 / 640.0;
const BS5: f64 = -92097.0 / 339200.0;
const BS6: f64 = 187.0 / 2100.0;
const BS7: f64 = 1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeTol {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTol {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-13 }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitIntegrator<F: Fn(f64) -> f64> {
    /// Radial force: dw/dt = -force(r).
    pub force: F,
    pub tol: OdeTol,
}

impl<F: Fn(f64) -> f64> OrbitIntegrator<F> {
    pub fn new(force: F, tol: OdeTol) -> Self {
        Self { force, tol }
    }

    fn rhs(&self, y: [f64; 2]) -> [f64; 2] {
        [y[1], -(self.force)(y[0])]
    }

    /// One accepted adaptive macro-step of length `dt` (internally subdivided).
    pub fn advance(&self, y0: [f64; 2], dt: f64) -> Result<[f64; 2]> {
        if dt == 0.0 {
            return Ok(y0);
        }
        let mut t = 0.0;
        let mut y = y0;
        let mut h = dt;
        let mut k1 = self.rhs(y);
        let mut steps = 0usize;
        while t < dt {
            if t + h > dt {
                h = dt - t;
            }
            let (ynew, k7, err) = self.step(y, k1, h);
            let scale = self.tol.atol
                + self.tol.rtol * y.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
            let e = err / scale;
            if e <= 1.0 {
                t += h;
                y = ynew;
                k1 = k7; // FSAL
            }
            let fac = (0.9 * e.powf(-0.2)).clamp(0.2, 5.0);
            h *= fac;
            if h.abs() < 1e-16 * dt.abs() {
                return Err(Error::OdeFailure(format!(
                    "step size underflow at t = {t} of {dt}"
                )));
            }
            steps += 1;
            if steps > 2_000_000 {
                return Err(Error::OdeFailure("step budget exhausted".into()));
            }
        }
        Ok(y)
    }

    fn step(&self, y: [f64; 2], k1: [f64; 2], h: f64) -> ([f64; 2], [f64; 2], f64) {
        let add = |y: [f64; 2], terms: &[(f64, [f64; 2])]| {
            let mut out = y;
            for &(c, k) in terms {
                out[0] += h * c * k[0];
                out[1] += h * c * k[1];
            }
            out
        };
        let k2 = self.rhs(add(y, &[(A21, k1)]));
        let k3 = self.rhs(add(y, &[(A31, k1), (A32, k2)]));
        let k4 = self.rhs(add(y, &[(A41, k1), (A42, k2), (A43, k3)]));
        let k5 = self.rhs(add(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
        let k6 = self.rhs(add(y, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]));
        let y5 = add(y, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        let k7 = self.rhs(y5);
        let y4 = add(
            y,
            &[(BS1, k1), (BS3, k3), (BS4, k4), (BS5, k5), (BS6, k6), (BS7, k7)],
        );
        let err = ((y5[0] - y4[0]).powi(2) + (y5[1] - y4[1]).powi(2)).sqrt();
        (y5, k7, err)
    }

    /// Integrate from `y0` and record the state at each of the (increasing)
    /// `times`, measured from t = 0.
    pub fn sample_at(&self, y0: [f64; 2], times: &[f64]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(times.len());
        let mut y = y0;
        let mut t = 0.0;
        for &target in times {
            y = self.advance(y, target - t)?;
            t = target;
            out.push(y);
        }
        Ok(out)
    }
}
