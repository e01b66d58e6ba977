use std::sync::Arc;

use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("fractional order must satisfy 0 < alpha <= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("coordinate map requires x >= 0, got {0}")]
    NegativeAbscissa(f64),
    #[error("coordinate map requires s >= 0, got {0}")]
    NegativeArcCoordinate(f64),
    #[error("grid needs at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("value array length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at grid index {index}")]
    NonFiniteSample { index: usize },
    #[error("operands live on different grids")]
    GridMismatch,
}

/// Order of the conformable derivative/integral, constrained to (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaOrder<T: Scalar> {
    value: T,
}

impl<T: Scalar> AlphaOrder<T> {
    pub fn new(value: T) -> Result<Self, GridError> {
        if !value.is_finite() || value <= T::zero() || value > T::one() {
            return Err(GridError::InvalidAlpha(value.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { value })
    }

    #[inline]
    pub fn value(&self) -> T {
        self.value
    }

    /// True exactly at alpha = 1, where the coordinate map is the identity.
    #[inline]
    pub fn is_unit(&self) -> bool {
        self.value == T::one()
    }
}

/// Flattened coordinate s = x^alpha / alpha.
pub fn s_of_x<T: Scalar>(x: T, alpha: AlphaOrder<T>) -> Result<T, GridError> {
    if x < T::zero() {
        return Err(GridError::NegativeAbscissa(x.to_f64().unwrap_or(f64::NAN)));
    }
    if alpha.is_unit() {
        return Ok(x);
    }
    Ok(x.powf(alpha.value()) / alpha.value())
}

/// Inverse of [`s_of_x`]: x = (alpha * s)^(1/alpha).
pub fn x_of_s<T: Scalar>(s: T, alpha: AlphaOrder<T>) -> Result<T, GridError> {
    if s < T::zero() {
        return Err(GridError::NegativeArcCoordinate(
            s.to_f64().unwrap_or(f64::NAN),
        ));
    }
    if alpha.is_unit() {
        return Ok(s);
    }
    Ok((alpha.value() * s).powf(alpha.value().recip()))
}

/// Uniform grid in the flattened coordinate s over [0, pi^alpha/alpha], with
/// the paired x-coordinates. All calculus stencils run in s, where the
/// conformable derivative is an ordinary derivative and the alpha-integral an
/// ordinary integral.
#[derive(Debug)]
pub struct SGrid<T: Scalar> {
    alpha: AlphaOrder<T>,
    s: Vec<T>,
    x: Vec<T>,
    h: T,
}

impl<T: Scalar> SGrid<T> {
    pub fn new(alpha: AlphaOrder<T>, n_points: usize) -> Result<Self, GridError> {
        if n_points < 3 {
            return Err(GridError::TooFewPoints {
                min: 3,
                got: n_points,
            });
        }
        let s_max = s_of_x(T::PI(), alpha)?;
        let denom = real::<T>((n_points - 1) as f64);
        let h = s_max / denom;
        let mut s = Vec::with_capacity(n_points);
        let mut x = Vec::with_capacity(n_points);
        for k in 0..n_points {
            let sk = if k == n_points - 1 {
                s_max
            } else {
                s_max * real::<T>(k as f64) / denom
            };
            s.push(sk);
            x.push(x_of_s(sk, alpha)?);
        }
        Ok(Self { alpha, s, x, h })
    }

    pub fn shared(alpha: AlphaOrder<T>, n_points: usize) -> Result<Arc<Self>, GridError> {
        Ok(Arc::new(Self::new(alpha, n_points)?))
    }

    #[inline]
    pub fn alpha(&self) -> AlphaOrder<T> {
        self.alpha
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.s.len()
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    #[inline]
    pub fn s_max(&self) -> T {
        *self.s.last().unwrap()
    }

    #[inline]
    pub fn s_values(&self) -> &[T] {
        &self.s
    }

    #[inline]
    pub fn x_values(&self) -> &[T] {
        &self.x
    }

    #[inline]
    pub fn s(&self, k: usize) -> T {
        self.s[k]
    }

    #[inline]
    pub fn x(&self, k: usize) -> T {
        self.x[k]
    }

    /// Index of the cell [s_k, s_{k+1}] containing s, clamped to the grid.
    pub fn cell_of_s(&self, s: T) -> usize {
        let n = self.n_points();
        let raw = (s / self.h).floor().to_usize().unwrap_or(0);
        raw.min(n - 2)
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
            || (self.alpha == other.alpha && self.n_points() == other.n_points())
    }
}

/// A real function sampled at every point of an [`SGrid`].
#[derive(Debug, Clone)]
pub struct GridFn<T: Scalar> {
    grid: Arc<SGrid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> GridFn<T> {
    pub fn from_values(grid: Arc<SGrid<T>>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.n_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteSample { index });
        }
        Ok(Self { grid, values })
    }

    /// Sample an analytic function of x at the grid abscissas.
    pub fn sample(grid: Arc<SGrid<T>>, f: impl Fn(T) -> T) -> Result<Self, GridError> {
        let values: Vec<T> = grid.x_values().iter().map(|&x| f(x)).collect();
        Self::from_values(grid, values)
    }

    pub fn zeros(grid: Arc<SGrid<T>>) -> Self {
        let values = vec![T::zero(); grid.n_points()];
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<SGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn value(&self, k: usize) -> T {
        self.values[k]
    }

    #[inline]
    pub fn first(&self) -> T {
        self.values[0]
    }

    #[inline]
    pub fn last(&self) -> T {
        *self.values.last().unwrap()
    }

    /// Linear interpolation in the s-coordinate, clamped to the grid range.
    pub fn interp_s(&self, s: T) -> T {
        let grid = &self.grid;
        if s <= T::zero() {
            return self.values[0];
        }
        if s >= grid.s_max() {
            return *self.values.last().unwrap();
        }
        let k = grid.cell_of_s(s);
        let w = (s - grid.s(k)) / grid.h();
        self.values[k] * (T::one() - w) + self.values[k + 1] * w
    }

    pub fn value_at_x(&self, x: T) -> Result<T, GridError> {
        let s = s_of_x(x, self.grid.alpha())?;
        Ok(self.interp_s(s))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        if !self.grid.same_grid(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(v: f64) -> AlphaOrder<f64> {
        AlphaOrder::new(v).unwrap()
    }

    #[test]
    fn alpha_order_rejects_out_of_range() {
        assert!(AlphaOrder::new(0.0).is_err());
        assert!(AlphaOrder::new(-0.5).is_err());
        assert!(AlphaOrder::new(1.0 + 1e-12).is_err());
        assert!(AlphaOrder::new(f64::NAN).is_err());
        assert!(AlphaOrder::new(1.0).is_ok());
    }

    #[test]
    fn coordinate_map_examples() {
        // identity at alpha = 1
        assert_eq!(s_of_x(std::f64::consts::PI, alpha(1.0)).unwrap(), std::f64::consts::PI);
        // 1^{0.5} / 0.5 = 2
        assert!((s_of_x(1.0, alpha(0.5)).unwrap() - 2.0).abs() < 1e-15);
        // round-trip at x = 0.25
        let s = s_of_x(0.25, alpha(0.5)).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!((x_of_s(1.0, alpha(0.5)).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn coordinate_map_rejects_negative() {
        assert!(s_of_x(-1.0, alpha(0.5)).is_err());
        assert!(x_of_s(-1.0, alpha(0.5)).is_err());
    }

    #[test]
    fn grid_endpoints_and_spacing() {
        for a in [0.3, 0.5, 0.8, 1.0] {
            let g = SGrid::new(alpha(a), 257).unwrap();
            assert_eq!(g.s(0), 0.0);
            assert_eq!(g.x(0), 0.0);
            let s_max = std::f64::consts::PI.powf(a) / a;
            assert!((g.s_max() - s_max).abs() <= 1e-12);
            assert!((g.x(256) - std::f64::consts::PI).abs() <= 1e-12);
            for k in 0..256 {
                assert!(g.s(k + 1) > g.s(k));
                assert!(g.x(k + 1) > g.x(k));
                assert!(((g.s(k + 1) - g.s(k)) - g.h()).abs() <= 1e-12);
            }
            // s_of(x_of(s)) round trip at every grid point
            for k in 0..=256 {
                let back = s_of_x(g.x(k), g.alpha()).unwrap();
                assert!((back - g.s(k)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unit_alpha_grid_is_identity() {
        let g = SGrid::new(alpha(1.0), 1025).unwrap();
        assert_eq!(g.s_values(), g.x_values());
    }

    #[test]
    fn grid_fn_validation() {
        let g = SGrid::shared(alpha(1.0), 9).unwrap();
        assert!(GridFn::from_values(Arc::clone(&g), vec![0.0; 8]).is_err());
        assert!(GridFn::from_values(Arc::clone(&g), vec![f64::NAN; 9]).is_err());
        let f = GridFn::sample(Arc::clone(&g), |x| x * x).unwrap();
        assert_eq!(f.values().len(), 9);
        assert!((f.value_at_x(1.0).unwrap() - 1.0).abs() < 5e-2);
    }

    #[test]
    fn grid_fn_interp_is_exact_for_linear() {
        let g = SGrid::shared(alpha(0.5), 33).unwrap();
        let f = GridFn::from_values(
            Arc::clone(&g),
            g.s_values().iter().map(|&s| 3.0 * s - 1.0).collect(),
        )
        .unwrap();
        for &s in &[0.1, 0.37, 1.0, 2.3] {
            assert!((f.interp_s(s) - (3.0 * s - 1.0)).abs() < 1e-13);
        }
    }
}
