//! Piecewise-cubic Hermite interpolation on non-uniform grids, in one and
//! two dimensions. Node slopes come from three-point finite differences, so
//! the interpolant is C^1 and local.

/// Locate the cell index i with xs[i] <= x < xs[i+1], clamped to valid cells.
pub fn locate(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    // binary search
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Three-point slope estimates on a non-uniform grid (second-order accurate
/// in the interior, one-sided quadratic at the ends).
pub fn slopes_3pt(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    assert!(n >= 2);
    let mut d = vec![0.0; n];
    if n == 2 {
        let s = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        d[0] = s;
        d[1] = s;
        return d;
    }
    for i in 0..n {
        let (i0, i1, i2) = if i == 0 {
            (0, 1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (i - 1, i, i + 1)
        };
        let (x0, x1, x2) = (xs[i0], xs[i1], xs[i2]);
        let (y0, y1, y2) = (ys[i0], ys[i1], ys[i2]);
        let x = xs[i];
        // derivative of the quadratic through the three points
        let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        d[i] = y0 * l0 + y1 * l1 + y2 * l2;
    }
    d
}

fn hermite_eval(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn hermite_deriv(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
}

/// C^1 cubic interpolant of tabulated values on a strictly increasing grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Cubic1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Cubic1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let ds = slopes_3pt(&xs, &ys);
        Self { xs, ys, ds }
    }

    /// Interpolant with externally supplied exact node derivatives.
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert_eq!(xs.len(), ds.len());
        Self { xs, ys, ds }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = locate(&self.xs, x);
        hermite_eval(
            self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1], x,
        )
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = locate(&self.xs, x);
        hermite_deriv(
            self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1], x,
        )
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Tensor-product cubic Hermite interpolant over a rectangular (x, y) grid.
/// Values are stored row-major with the x index fastest: v[j*nx + i].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl Grid2 {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Self {
        let nx = xs.len();
        let ny = ys.len();
        assert_eq!(values.len(), nx * ny);
        let mut dx = vec![0.0; nx * ny];
        let mut dy = vec![0.0; nx * ny];
        let mut row = vec![0.0; nx];
        for j in 0..ny {
            row.copy_from_slice(&values[j * nx..(j + 1) * nx]);
            let s = slopes_3pt(&xs, &row);
            dx[j * nx..(j + 1) * nx].copy_from_slice(&s);
        }
        let mut col = vec![0.0; ny];
        let mut ycol = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = values[j * nx + i];
            }
            let s = slopes_3pt(&ys, &col);
            for j in 0..ny {
                ycol[j] = s[j];
            }
            for j in 0..ny {
                dy[j * nx + i] = ycol[j];
            }
        }
        Self { xs, ys, values, dx, dy }
    }

    fn gather(&self, field: &[f64], j: usize, i0: usize, i1: usize) -> (f64, f64) {
        (field[j * self.xs.len() + i0], field[j * self.xs.len() + i1])
    }

    /// Interpolated value: cubic in x within the two bracketing rows of the
    /// y-cell, then cubic across y with finite-difference cross slopes.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_generic(x, y, false, false)
    }

    /// Partial derivative with respect to the first coordinate.
    pub fn deriv_x(&self, x: f64, y: f64) -> f64 {
        self.eval_generic(x, y, true, false)
    }

    /// Partial derivative with respect to the second coordinate.
    pub fn deriv_y(&self, x: f64, y: f64) -> f64 {
        self.eval_generic(x, y, false, true)
    }

    fn eval_generic(&self, x: f64, y: f64, ddx: bool, ddy: bool) -> f64 {
        let j = locate(&self.ys, y);
        // evaluate (or x-differentiate) along the 4 neighbouring rows and
        // fit a cubic across y through the two bracketing rows
        let jm = j.saturating_sub(1);
        let jp = (j + 2).min(self.ys.len() - 1);
        let rows = [jm, j, j + 1, jp];
        let mut vals = [0.0; 4];
        for (k, &jr) in rows.iter().enumerate() {
            vals[k] = self.eval_row(jr, x, ddx);
        }
        // slopes in y at rows j and j+1 from the gathered values
        let y_m = self.ys[jm];
        let y_0 = self.ys[j];
        let y_1 = self.ys[j + 1];
        let y_p = self.ys[jp];
        let d0 = if jm == j {
            (vals[2] - vals[1]) / (y_1 - y_0)
        } else {
            three_point_slope(y_m, y_0, y_1, vals[0], vals[1], vals[2], y_0)
        };
        let d1 = if jp == j + 1 {
            (vals[2] - vals[1]) / (y_1 - y_0)
        } else {
            three_point_slope(y_0, y_1, y_p, vals[1], vals[2], vals[3], y_1)
        };
        if ddy {
            hermite_deriv(y_0, y_1, vals[1], vals[2], d0, d1, y)
        } else {
            hermite_eval(y_0, y_1, vals[1], vals[2], d0, d1, y)
        }
    }

    fn eval_row(&self, j: usize, x: f64, ddx: bool) -> f64 {
        let i = locate(&self.xs, x);
        let (y0, y1) = self.gather(&self.values, j, i, i + 1);
        let (d0, d1) = self.gather(&self.dx, j, i, i + 1);
        if ddx {
            hermite_deriv(self.xs[i], self.xs[i + 1], y0, y1, d0, d1, x)
        } else {
            hermite_eval(self.xs[i], self.xs[i + 1], y0, y1, d0, d1, x)
        }
    }

    /// Bilinear stencil (indices and weights on the value array) for fast
    /// repeated sampling of co-located fields.
    pub fn bilinear_stencil(&self, x: f64, y: f64) -> ([usize; 4], [f64; 4]) {
        let i = locate(&self.xs, x);
        let j = locate(&self.ys, y);
        let tx = ((x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])).clamp(0.0, 1.0);
        let ty = ((y - self.ys[j]) / (self.ys[j + 1] - self.ys[j])).clamp(0.0, 1.0);
        let nx = self.xs.len();
        (
            [j * nx + i, j * nx + i + 1, (j + 1) * nx + i, (j + 1) * nx + i + 1],
            [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        )
    }
}

fn three_point_slope(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, at: f64) -> f64 {
    let l0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
    y0 * l0 + y1 * l1 + y2 * l2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cubic1d_reproduces_cubic_polynomial_nodes() {
        let xs: Vec<f64> = (0..20).map(|i| (i as f64 / 19.0).powf(1.5)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 1.0 + x + x * x).collect();
        let c = Cubic1D::new(xs.clone(), ys);
        // quadratics are reproduced exactly (3-point slopes are exact)
        for k in 0..50 {
            let x = 0.97 * k as f64 / 49.0;
            assert_abs_diff_eq!(c.eval(x), 1.0 + x + x * x, epsilon = 1e-12);
            assert_abs_diff_eq!(c.deriv(x), 1.0 + 2.0 * x, epsilon = 1e-10);
        }
    }

    #[test]
    fn grid2_smooth_function() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = (0..30).map(|j| j as f64 / 29.0).collect();
        let mut v = vec![0.0; 40 * 30];
        for j in 0..30 {
            for i in 0..40 {
                v[j * 40 + i] = (2.0 * xs[i]).sin() * (1.5 * ys[j]).cos();
            }
        }
        let g = Grid2::new(xs, ys, v);
        let f = |x: f64, y: f64| (2.0 * x).sin() * (1.5 * y).cos();
        let fx = |x: f64, y: f64| 2.0 * (2.0 * x).cos() * (1.5 * y).cos();
        let fy = |x: f64, y: f64| -1.5 * (2.0 * x).sin() * (1.5 * y).sin();
        for &(x, y) in &[(0.31, 0.42), (0.77, 0.11), (0.05, 0.93), (0.5, 0.5)] {
            assert_abs_diff_eq!(g.eval(x, y), f(x, y), epsilon = 5e-5);
            assert_abs_diff_eq!(g.deriv_x(x, y), fx(x, y), epsilon = 5e-3);
            assert_abs_diff_eq!(g.deriv_y(x, y), fy(x, y), epsilon = 5e-3);
        }
    }

    #[test]
    fn bilinear_stencil_partition_of_unity() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..8).map(|j| j as f64 * 2.0).collect();
        let v = vec![1.0; 80];
        let g = Grid2::new(xs, ys, v.clone());
        let (idx, w) = g.bilinear_stencil(4.3, 7.9);
        let s: f64 = idx.iter().zip(&w).map(|(&i, &wi)| v[i] * wi).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
    }
}
