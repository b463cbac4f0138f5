//! Least-squares line fitting and log-log envelope extraction for decay-rate
//! measurements.

/// Ordinary least squares y = slope*x + intercept.
/// Returns (slope, intercept, rms residual).
pub fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 2.0, "need at least two points to fit a line");
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - slope * x - intercept;
        ss += r * r;
    }
    (slope, intercept, (ss / n).sqrt())
}

/// Per-block maxima of an oscillating positive series over dyadic time
/// blocks [t0*2^k, t0*2^(k+1)). Returns (time of block max, block max).
pub fn dyadic_envelope(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    assert_eq!(times.len(), values.len());
    if times.is_empty() {
        return Vec::new();
    }
    let t0 = times[0].max(1e-12);
    let mut blocks: Vec<(f64, f64)> = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        let k = ((t / t0).log2().floor()).max(0.0) as usize;
        if blocks.len() <= k {
            blocks.resize(k + 1, (0.0, f64::NEG_INFINITY));
        }
        if v > blocks[k].1 {
            blocks[k] = (t, v);
        }
    }
    blocks
        .into_iter()
        .filter(|b| b.1.is_finite() && b.1 > 0.0)
        .collect()
}

/// Decay-exponent fit of a positive series against (1 + t).
///
/// Fits log(v) vs log(1+t) directly; if the rms residual exceeds
/// `envelope_threshold` the series is treated as oscillation-dominated and
/// the fit is repeated on per-dyadic-block maxima.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DecayFit {
    /// Magnitude of the fitted slope (decay exponent b in (1+t)^-b).
    pub exponent: f64,
    pub residual: f64,
    pub used_envelope: bool,
    pub n_points: usize,
}

pub fn fit_decay(times: &[f64], values: &[f64], envelope_threshold: f64) -> DecayFit {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| ((1.0 + t).ln(), v.ln()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, _, res) = line_fit(&xs, &ys);
    if res <= envelope_threshold {
        return DecayFit {
            exponent: -slope,
            residual: res,
            used_envelope: false,
            n_points: xs.len(),
        };
    }
    let env = dyadic_envelope(times, values);
    let xs: Vec<f64> = env.iter().map(|p| (1.0 + p.0).ln()).collect();
    let ys: Vec<f64> = env.iter().map(|p| p.1.ln()).collect();
    let (slope, _, res) = line_fit(&xs, &ys);
    DecayFit {
        exponent: -slope,
        residual: res,
        used_envelope: true,
        n_points: xs.len(),
    }
}
