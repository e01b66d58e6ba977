//! Conformable calculus on the s-grid.
//!
//! Under s = x^alpha/alpha the conformable derivative D^alpha becomes d/ds and
//! the alpha-integral becomes an ordinary integral in s, so second-order
//! stencils and the composite trapezoid rule apply without any endpoint
//! singularity for alpha < 1.

use std::sync::Arc;

use crate::grid::{GridError, GridFn};
use crate::scalar::{real, Scalar};

/// D^alpha f on the same grid: central differences in s at interior points,
/// second-order one-sided stencils at both endpoints.
pub fn frac_derivative<T: Scalar>(f: &GridFn<T>) -> Result<GridFn<T>, GridError> {
    let n = f.values().len();
    if n < 3 {
        return Err(GridError::TooFewPoints { min: 3, got: n });
    }
    let h = f.grid().h();
    let two_h = h + h;
    let v = f.values();
    let mut d = Vec::with_capacity(n);
    let c3 = real::<T>(3.0);
    let c4 = real::<T>(4.0);
    d.push((-c3 * v[0] + c4 * v[1] - v[2]) / two_h);
    for k in 1..n - 1 {
        d.push((v[k + 1] - v[k - 1]) / two_h);
    }
    d.push((c3 * v[n - 1] - c4 * v[n - 2] + v[n - 3]) / two_h);
    GridFn::from_values(Arc::clone(f.grid()), d)
}

/// Cumulative alpha-integral I_alpha f(x_k) = int_0^{s_k} f ds by composite
/// trapezoid; the value at x_0 is 0.
pub fn frac_integral<T: Scalar>(f: &GridFn<T>) -> GridFn<T> {
    let values = cumulative_trapezoid(f.grid().h(), f.values());
    GridFn::from_values(Arc::clone(f.grid()), values).expect("integral of finite samples")
}

pub(crate) fn cumulative_trapezoid<T: Scalar>(h: T, v: &[T]) -> Vec<T> {
    let half_h = h / real::<T>(2.0);
    let mut out = Vec::with_capacity(v.len());
    let mut acc = T::zero();
    out.push(acc);
    for k in 1..v.len() {
        acc += half_h * (v[k - 1] + v[k]);
        out.push(acc);
    }
    out
}

/// Centered moving average with window shrinking near the endpoints.
/// `window` is the full width; values <= 1 return the input unchanged.
pub fn smooth_moving_average<T: Scalar>(f: &GridFn<T>, window: usize) -> GridFn<T> {
    if window <= 1 {
        return f.clone();
    }
    let v = f.values();
    let n = v.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let w = half.min(k).min(n - 1 - k);
        let mut acc = T::zero();
        for j in k - w..=k + w {
            acc += v[j];
        }
        out.push(acc / real::<T>((2 * w + 1) as f64));
    }
    GridFn::from_values(Arc::clone(f.grid()), out).expect("average of finite samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AlphaOrder, SGrid};

    fn grid(a: f64, n: usize) -> Arc<SGrid<f64>> {
        SGrid::shared(AlphaOrder::new(a).unwrap(), n).unwrap()
    }

    fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn derivative_of_s_is_one() {
        for a in [0.3, 0.5, 1.0] {
            let g = grid(a, 513);
            let f = GridFn::from_values(Arc::clone(&g), g.s_values().to_vec()).unwrap();
            let d = frac_derivative(&f).unwrap();
            assert!(sup_gap(d.values(), &vec![1.0; 513]) < 1e-10);
        }
    }

    #[test]
    fn derivative_chain_rule_in_s() {
        // f(x) = sin(2 x^alpha/alpha) has D^alpha f = 2 cos(2 x^alpha/alpha)
        let g = grid(0.5, 2049);
        let f = GridFn::from_values(
            Arc::clone(&g),
            g.s_values().iter().map(|&s| (2.0 * s).sin()).collect(),
        )
        .unwrap();
        let d = frac_derivative(&f).unwrap();
        let exact: Vec<f64> = g.s_values().iter().map(|&s| 2.0 * (2.0 * s).cos()).collect();
        let h = g.h();
        assert!(sup_gap(d.values(), &exact) < 4.0 * h * h);
    }

    #[test]
    fn derivative_of_x_matches_power_rule() {
        // D^alpha x = x^{1-alpha}; at alpha = 0.5, x = 0.25 this is 0.5
        let g = grid(0.5, 4097);
        let f = GridFn::sample(Arc::clone(&g), |x| x).unwrap();
        let d = frac_derivative(&f).unwrap();
        assert!((d.value_at_x(0.25).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn derivative_rejects_tiny_grids() {
        assert!(SGrid::<f64>::new(AlphaOrder::new(1.0).unwrap(), 2).is_err());
    }

    #[test]
    fn integral_of_one_is_s() {
        for a in [0.3, 0.8, 1.0] {
            let g = grid(a, 257);
            let f = GridFn::from_values(Arc::clone(&g), vec![1.0; 257]).unwrap();
            let int = frac_integral(&f);
            assert!(sup_gap(int.values(), g.s_values()) < 1e-12);
            assert_eq!(int.value(0), 0.0);
        }
    }

    #[test]
    fn integral_power_rule() {
        // int_0^x t^{alpha-1} t^alpha dt = x^{2 alpha}/(2 alpha); at alpha = 0.5, x = 1 -> 1
        let g = grid(0.5, 4097);
        let f = GridFn::sample(Arc::clone(&g), |x| x.powf(0.5)).unwrap();
        let int = frac_integral(&f);
        // quadrature is exact here (integrand linear in s); the residual is
        // the linear-interpolation error of the quadratic antiderivative
        assert!((int.value_at_x(1.0).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn integral_of_derivative_recovers_shift() {
        // I_alpha D^alpha g = g - g(0) for g = cos(x^alpha/alpha)
        let g = grid(0.5, 2049);
        let f = GridFn::from_values(
            Arc::clone(&g),
            g.s_values().iter().map(|&s| s.cos()).collect(),
        )
        .unwrap();
        let back = frac_integral(&frac_derivative(&f).unwrap());
        let exact: Vec<f64> = g.s_values().iter().map(|&s| s.cos() - 1.0).collect();
        let h = g.h();
        assert!(sup_gap(back.values(), &exact) < 2.0 * h * h);
    }

    #[test]
    fn moving_average_preserves_linears() {
        let g = grid(1.0, 129);
        let f = GridFn::from_values(
            Arc::clone(&g),
            g.s_values().iter().map(|&s| 2.0 * s + 1.0).collect(),
        )
        .unwrap();
        let sm = smooth_moving_average(&f, 5);
        assert!(sup_gap(sm.values(), f.values()) < 1e-12);
    }
}
