//! Bracketed scalar root finding (Brent's method) and bracket expansion.

use crate::error::{Error, Result};

/// Brent's method on a sign-changing bracket [a, b].
///
/// `tol` is an absolute tolerance on the abscissa; iteration also stops when
/// the residual underflows.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::RootBracket { what, a, b });
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = 0.25 * (3.0 * a + b);
        let cond = !(s.min(b) > lo.min(b) && s.max(b) < lo.max(b))
            || (mflag && (s - b).abs() >= 0.5 * (b - c).abs())
            || (!mflag && (s - b).abs() >= 0.5 * (c - d).abs())
            || (mflag && (b - c).abs() < tol)
            || (!mflag && (c - d).abs() < tol);
        if cond {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Err(Error::RootNoConvergence { what, iters: max_iter })
}

/// Expand [lo, hi] geometrically towards +infinity until `f` changes sign,
/// starting from f(lo). Returns the final bracket.
pub fn expand_bracket_up<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    mut hi: f64,
    factor: f64,
    max_steps: usize,
    what: &'static str,
) -> Result<(f64, f64)> {
    let flo = f(lo);
    let mut a = lo;
    for _ in 0..max_steps {
        let fhi = f(hi);
        if flo * fhi <= 0.0 {
            return Ok((a, hi));
        }
        a = hi;
        hi *= factor;
    }
    Err(Error::RootBracket { what, a: lo, b: hi })
}

/// Shrink the lower end of [lo, hi] towards zero until `f` changes sign.
pub fn expand_bracket_down<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    hi: f64,
    factor: f64,
    max_steps: usize,
    what: &'static str,
) -> Result<(f64, f64)> {
    let fhi = f(hi);
    let mut b = hi;
    for _ in 0..max_steps {
        let flo = f(lo);
        if flo * fhi <= 0.0 {
            return Ok((lo, b));
        }
        b = lo;
        lo /= factor;
    }
    Err(Error::RootBracket { what, a: lo, b: hi })
}
