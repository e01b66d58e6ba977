//! Interpolation and sequence-limit helpers for the inverse pipeline:
//! natural cubic splines over the (nearly uniform) node abscissas, 3-point
//! quadratic extrapolation for endpoint values, and limits of sequences with
//! inverse-power remainders.

use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissas must be strictly increasing (violation at index {0})")]
    NotIncreasing(usize),
}

/// Cubic spline through strictly increasing knots with not-a-knot boundary
/// conditions (third derivative continuous across the second and second-to-
/// last knots), so no artificial boundary layer forms at the ends. With 3
/// knots it is the interpolating parabola, with 2 the chord. Evaluation
/// outside the knot range continues the boundary cubic.
#[derive(Debug, Clone)]
pub struct CubicSpline<T: Scalar> {
    xs: Vec<T>,
    ys: Vec<T>,
    second: Vec<T>,
}

impl<T: Scalar> CubicSpline<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self, SplineError> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(SplineError::TooFewKnots(n.min(ys.len())));
        }
        for i in 0..n - 1 {
            if xs[i + 1] <= xs[i] {
                return Err(SplineError::NotIncreasing(i + 1));
            }
        }
        let six = real::<T>(6.0);
        let two = real::<T>(2.0);
        let mut second = vec![T::zero(); n];
        if n == 3 {
            // interpolating parabola: constant second derivative
            let h0 = xs[1] - xs[0];
            let h1 = xs[2] - xs[1];
            let dd = ((ys[2] - ys[1]) / h1 - (ys[1] - ys[0]) / h0) / (h0 + h1);
            let m = two * dd;
            second = vec![m; 3];
        } else if n > 3 {
            // Interior equations
            //   h_{i-1} M_{i-1} + 2(h_{i-1}+h_i) M_i + h_i M_{i+1} = R_i
            // with the not-a-knot ends folded in:
            //   M_0 = M_1 (1 + h_0/h_1) - M_2 h_0/h_1, and mirrored on the right.
            let m = n - 2;
            let mut lower = vec![T::zero(); m];
            let mut diag = vec![T::zero(); m];
            let mut upper = vec![T::zero(); m];
            let mut rhs = vec![T::zero(); m];
            for i in 0..m {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                lower[i] = h0;
                diag[i] = two * (h0 + h1);
                upper[i] = h1;
                rhs[i] = six * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            {
                let h0 = xs[1] - xs[0];
                let h1 = xs[2] - xs[1];
                diag[0] += h0 * (T::one() + h0 / h1);
                upper[0] -= h0 * h0 / h1;
            }
            {
                let h_last = xs[n - 1] - xs[n - 2];
                let h_prev = xs[n - 2] - xs[n - 3];
                diag[m - 1] += h_last * (T::one() + h_last / h_prev);
                lower[m - 1] -= h_last * h_last / h_prev;
            }
            for i in 1..m {
                let w = lower[i] / diag[i - 1];
                diag[i] = diag[i] - w * upper[i - 1];
                rhs[i] = rhs[i] - w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (1..m).rev() {
                second[i] = (rhs[i - 1] - upper[i - 1] * second[i + 1]) / diag[i - 1];
            }
            let h0 = xs[1] - xs[0];
            let h1 = xs[2] - xs[1];
            second[0] = second[1] * (T::one() + h0 / h1) - second[2] * (h0 / h1);
            let h_last = xs[n - 1] - xs[n - 2];
            let h_prev = xs[n - 2] - xs[n - 3];
            second[n - 1] =
                second[n - 2] * (T::one() + h_last / h_prev) - second[n - 3] * (h_last / h_prev);
        }
        Ok(Self { xs, ys, second })
    }

    fn segment(&self, x: T) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 1] {
            return n - 2;
        }
        // binary search for the containing segment
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn eval(&self, x: T) -> T {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let six = real::<T>(6.0);
        let two = real::<T>(2.0);
        let t = x - self.xs[i];
        let m0 = self.second[i];
        let m1 = self.second[i + 1];
        let slope = (self.ys[i + 1] - self.ys[i]) / h - h / six * (two * m0 + m1);
        self.ys[i] + t * (slope + t * (m0 / two + t * (m1 - m0) / (six * h)))
    }

    pub fn deriv(&self, x: T) -> T {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let six = real::<T>(6.0);
        let two = real::<T>(2.0);
        let t = x - self.xs[i];
        let m0 = self.second[i];
        let m1 = self.second[i + 1];
        let slope = (self.ys[i + 1] - self.ys[i]) / h - h / six * (two * m0 + m1);
        slope + t * (m0 + t * (m1 - m0) / (two * h))
    }
}

/// Least-squares Chebyshev polynomial fit on [lo, hi]; a smoothness prior
/// for quantities that are analytically smooth but carried by noisy samples.
#[derive(Debug, Clone)]
pub struct ChebyshevFit<T: Scalar> {
    lo: T,
    hi: T,
    coeffs: Vec<T>,
}

impl<T: Scalar> ChebyshevFit<T> {
    pub fn fit(xs: &[T], ys: &[T], degree: usize) -> Result<Self, SplineError> {
        let n = xs.len();
        if n < degree + 1 || n < 2 {
            return Err(SplineError::TooFewKnots(n));
        }
        let lo = xs[0];
        let hi = xs[n - 1];
        let k = degree + 1;
        let two = real::<T>(2.0);
        // design matrix rows by the three-term recurrence
        let mut ata = vec![vec![T::zero(); k]; k];
        let mut atb = vec![T::zero(); k];
        let mut row = vec![T::zero(); k];
        for (&x, &y) in xs.iter().zip(ys) {
            let t = (two * (x - lo) / (hi - lo)) - T::one();
            row[0] = T::one();
            if k > 1 {
                row[1] = t;
            }
            for i in 2..k {
                row[i] = two * t * row[i - 1] - row[i - 2];
            }
            for i in 0..k {
                for j in 0..k {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i] += row[i] * y;
            }
        }
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&a, &b| {
                    ata[a][col]
                        .abs()
                        .partial_cmp(&ata[b][col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            ata.swap(col, pivot);
            atb.swap(col, pivot);
            for r in col + 1..k {
                let w = ata[r][col] / ata[col][col];
                for c in col..k {
                    ata[r][c] = ata[r][c] - w * ata[col][c];
                }
                atb[r] = atb[r] - w * atb[col];
            }
        }
        let mut coeffs = vec![T::zero(); k];
        for r in (0..k).rev() {
            let mut acc = atb[r];
            for c in r + 1..k {
                acc -= ata[r][c] * coeffs[c];
            }
            coeffs[r] = acc / ata[r][r];
        }
        Ok(Self { lo, hi, coeffs })
    }

    pub fn eval(&self, x: T) -> T {
        let two = real::<T>(2.0);
        let t = (two * (x - self.lo) / (self.hi - self.lo)) - T::one();
        // Clenshaw
        let mut b1 = T::zero();
        let mut b2 = T::zero();
        for &c in self.coeffs.iter().rev() {
            let b0 = two * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        b1 - t * b2
    }
}

/// Value at `x` of the parabola through three points.
pub fn quadratic_extrapolate<T: Scalar>(pts: &[(T, T); 3], x: T) -> T {
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[1];
    let (x2, y2) = pts[2];
    let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    y0 * l0 + y1 * l1 + y2 * l2
}

/// Limit of a sequence a(n) = f + b/n [+ c/n^2] from 1-3 samples at distinct
/// indices: solves the small Vandermonde system in powers of 1/n and returns
/// the constant term. With the dyadic pair (n, 2n) this is the classical
/// 2 a(2n) - a(n) elimination.
pub fn inv_power_limit<T: Scalar>(samples: &[(T, T)]) -> T {
    match samples.len() {
        0 => panic!("inv_power_limit needs at least one sample"),
        1 => samples[0].1,
        2 => {
            let (n1, a1) = samples[0];
            let (n2, a2) = samples[1];
            (n2 * a2 - n1 * a1) / (n2 - n1)
        }
        _ => {
            // rows [1, 1/n, 1/n^2] [f, b, c]^T = a
            let mut m = [[T::zero(); 4]; 3];
            for (row, &(n, a)) in samples.iter().take(3).enumerate() {
                let inv = n.recip();
                m[row][0] = T::one();
                m[row][1] = inv;
                m[row][2] = inv * inv;
                m[row][3] = a;
            }
            for col in 0..2 {
                let pivot = (col..3)
                    .max_by(|&i, &j| {
                        m[i][col]
                            .abs()
                            .partial_cmp(&m[j][col].abs())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap();
                m.swap(col, pivot);
                for row in col + 1..3 {
                    let w = m[row][col] / m[col][col];
                    for k in col..4 {
                        m[row][k] = m[row][k] - w * m[col][k];
                    }
                }
            }
            let c = m[2][3] / m[2][2];
            let b = (m[1][3] - m[1][2] * c) / m[1][1];
            m[0][3] - m[0][1] * b - m[0][2] * c
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubics_exactly() {
        let xs: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let f = |x: f64| 1.0 + 2.0 * x - 0.5 * x * x + 0.25 * x * x * x;
        let df = |x: f64| 2.0 - x + 0.75 * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let sp = CubicSpline::new(xs, ys).unwrap();
        // exact everywhere, including continuation beyond the knots
        for &x in &[0.05, 0.33, 1.0, 1.97, -0.2, 2.3] {
            assert!((sp.eval(x) - f(x)).abs() < 1e-10, "at {x}");
            assert!((sp.deriv(x) - df(x)).abs() < 1e-10, "slope at {x}");
        }
    }

    #[test]
    fn spline_interpolates_smooth_function() {
        let xs: Vec<f64> = (0..65).map(|i| i as f64 / 64.0 * 3.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| x.sin()).collect();
        let sp = CubicSpline::new(xs.clone(), ys).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=640 {
            let x = i as f64 / 640.0 * 3.0;
            worst = worst.max((sp.eval(x) - x.sin()).abs());
        }
        assert!(worst < 1e-6, "sup error {worst:e}");
    }

    #[test]
    fn three_knot_spline_is_the_parabola() {
        let f = |x: f64| 1.0 - x + 2.0 * x * x;
        let sp = CubicSpline::new(
            vec![0.0, 0.7, 1.2],
            vec![f(0.0), f(0.7), f(1.2)],
        )
        .unwrap();
        for &x in &[0.1, 0.5, 0.9, 1.4] {
            assert!((sp.eval(x) - f(x)).abs() < 1e-12, "at {x}");
        }
    }

    #[test]
    fn spline_rejects_bad_knots() {
        assert!(CubicSpline::new(vec![0.0f64], vec![1.0]).is_err());
        assert!(CubicSpline::new(vec![0.0f64, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn quadratic_extrapolation_is_exact_for_parabolas() {
        let f = |x: f64| 2.0 - x + 3.0 * x * x;
        let pts = [(0.5, f(0.5)), (1.0, f(1.0)), (1.7, f(1.7))];
        assert!((quadratic_extrapolate(&pts, 0.0) - f(0.0)).abs() < 1e-12);
        assert!((quadratic_extrapolate(&pts, 2.0) - f(2.0)).abs() < 1e-12);
    }

    #[test]
    fn inverse_power_limits() {
        let f = 0.7;
        let a = |n: f64| f + 3.0 / n + 5.0 / (n * n);
        // two-point kills the 1/n term
        let two = inv_power_limit(&[(32.0, a(32.0)), (64.0, a(64.0))]);
        assert!((two - f).abs() < 5.0 / (32.0 * 64.0) * 2.0 + 1e-12);
        // three-point is exact for this family
        let three = inv_power_limit(&[(16.0, a(16.0)), (32.0, a(32.0)), (64.0, a(64.0))]);
        assert!((three - f).abs() < 1e-10, "{three}");
        // dyadic two-point equals 2 a(2n) - a(n)
        let d = inv_power_limit(&[(10.0, a(10.0)), (20.0, a(20.0))]);
        assert!((d - (2.0 * a(20.0) - a(10.0))).abs() < 1e-12);
    }
}
