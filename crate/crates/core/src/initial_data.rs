//! Library of initial perturbations used by the transport and coupled runs.
//! All entries have vanishing angle average, so they satisfy the
//! orthogonality constraint structurally.

use serde::{Deserialize, Serialize};

use crate::spectral::PhasePoint;

/// Modified Bessel I0(1), the angular mean of exp(cos).
const MEAN_EXP_COS: f64 = 1.2660658777520083;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// w times a smooth function of (E, L); analytic in phase space.
    WSmooth { amplitude: f64 },
    /// Smooth bump in the angle times a smooth (E, L) profile. Generic mode
    /// content; not smooth at the trapping curve in phase-space coordinates.
    ThetaBump { amplitude: f64 },
    /// |w| w times a smooth profile: C^1 but not C^2 across w = 0, the
    /// deliberately low-regularity datum for the regularity-ceiling test.
    WKink { amplitude: f64 },
}

impl InitialData {
    pub fn eval(&self, p: &PhasePoint) -> f64 {
        match *self {
            InitialData::WSmooth { amplitude } => amplitude * p.w * (1.0 + 0.25 * p.e),
            InitialData::ThetaBump { amplitude } => {
                let b = (2.0 * std::f64::consts::PI * p.theta).cos().exp() - MEAN_EXP_COS;
                amplitude * b * (1.0 + 0.3 * p.l)
            }
            InitialData::WKink { amplitude } => amplitude * p.w.abs() * p.w,
        }
    }

    /// Phase-space smoothness class of the datum (usize::MAX for smooth).
    pub fn regularity(&self) -> usize {
        match self {
            InitialData::WSmooth { .. } => usize::MAX,
            InitialData::ThetaBump { .. } => usize::MAX,
            InitialData::WKink { .. } => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_bump_has_zero_mean() {
        let d = InitialData::ThetaBump { amplitude: 1.0 };
        let n = 4096;
        let mut acc = 0.0;
        for j in 0..n {
            let theta = j as f64 / n as f64;
            acc += d.eval(&PhasePoint { r: 1.0, w: 0.0, l: 1.0, theta, e: -0.3 });
        }
        assert!((acc / n as f64).abs() < 1e-12);
    }

    #[test]
    fn odd_data_is_odd() {
        for d in [InitialData::WSmooth { amplitude: 2.0 }, InitialData::WKink { amplitude: 1.0 }] {
            let a = d.eval(&PhasePoint { r: 1.3, w: 0.4, l: 1.0, theta: 0.2, e: -0.3 });
            let b = d.eval(&PhasePoint { r: 1.3, w: -0.4, l: 1.0, theta: 0.8, e: -0.3 });
            assert_eq!(a, -b);
        }
    }
}
