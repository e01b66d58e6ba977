//! Closed-form evaluators for the large-lambda / large-n expansions of the
//! solution, the characteristic function, the eigenvalues, and the nodal
//! points, plus the exact limit functions f and g that drive the inverse
//! algorithm. Everything is driven by the potential functionals mu, upsilon,
//! K and L.
//!
//! Where the lambda^{-1} substitution is involved (the 1/n terms of the
//! eigenvalue and node expansions, and the normalization of the g-limit), the
//! forms implemented here are the ones consistent with the characteristic
//! function expansion; they reduce to the familiar alpha = 1 formulas.

use thiserror::Error;

use crate::calculus::frac_integral;
use crate::grid::{GridError, GridFn};
use crate::model::{Kernel, Model, ModelError};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The potential functionals of the expansion:
/// mu = (1/2) I_alpha(p + r), upsilon = (p - r)/2,
/// K = I_alpha(M11(t,t) - M22(t,t)), L = I_alpha(M12(t,t) - M21(t,t)),
/// and the running integral of upsilon^2.
#[derive(Debug, Clone)]
pub struct PotentialFunctionals<T: Scalar> {
    pub mu: GridFn<T>,
    pub upsilon: GridFn<T>,
    pub upsilon0: T,
    pub k_fn: GridFn<T>,
    pub l_fn: GridFn<T>,
    pub upsilon_sq_int: GridFn<T>,
}

impl<T: Scalar> PotentialFunctionals<T> {
    pub fn mu_pi(&self) -> T {
        self.mu.last()
    }

    pub fn l_pi(&self) -> T {
        self.l_fn.last()
    }

    pub fn k_pi(&self) -> T {
        self.k_fn.last()
    }

    pub fn upsilon_sq_pi(&self) -> T {
        self.upsilon_sq_int.last()
    }

    /// Functionals identically zero (free problem) on the given grid.
    pub fn zero(grid: std::sync::Arc<crate::grid::SGrid<T>>) -> Self {
        Self {
            mu: GridFn::zeros(std::sync::Arc::clone(&grid)),
            upsilon: GridFn::zeros(std::sync::Arc::clone(&grid)),
            upsilon0: T::zero(),
            k_fn: GridFn::zeros(std::sync::Arc::clone(&grid)),
            l_fn: GridFn::zeros(std::sync::Arc::clone(&grid)),
            upsilon_sq_int: GridFn::zeros(grid),
        }
    }
}

/// Compute all functionals on the model grid.
pub fn potential_functionals<T: Scalar>(
    model: &Model<T>,
) -> Result<PotentialFunctionals<T>, AsymptoticsError> {
    let grid = model.grid();
    let n = grid.n_points();
    let coeffs = model.coeffs();
    let half = real::<T>(0.5);

    let p: Vec<T> = (0..n).map(|k| coeffs.p_half[2 * k]).collect();
    let r: Vec<T> = (0..n).map(|k| coeffs.r_half[2 * k]).collect();

    let sum = GridFn::from_values(
        std::sync::Arc::clone(grid),
        p.iter().zip(&r).map(|(&a, &b)| half * (a + b)).collect(),
    )
    .map_err(AsymptoticsError::Grid)?;
    let upsilon = GridFn::from_values(
        std::sync::Arc::clone(grid),
        p.iter().zip(&r).map(|(&a, &b)| half * (a - b)).collect(),
    )
    .map_err(AsymptoticsError::Grid)?;

    let (diag, offdiag) = match &coeffs.kernel {
        Kernel::None => (vec![T::zero(); n], vec![T::zero(); n]),
        Kernel::TOnly { m } => (
            (0..n).map(|k| m[0][2 * k] - m[3][2 * k]).collect(),
            (0..n).map(|k| m[1][2 * k] - m[2][2 * k]).collect(),
        ),
        Kernel::General => {
            let mut d = Vec::with_capacity(n);
            let mut o = Vec::with_capacity(n);
            for k in 0..n {
                let t = grid.x(k);
                let m11 = model.kernel_at(0, t, t).map_err(|source| {
                    ModelError::Sample {
                        field: "m11",
                        x: t.to_f64().unwrap_or(f64::NAN),
                        t: t.to_f64().unwrap_or(f64::NAN),
                        source,
                    }
                })?;
                let m12 = model.kernel_at(1, t, t).map_err(|source| ModelError::Sample {
                    field: "m12",
                    x: t.to_f64().unwrap_or(f64::NAN),
                    t: t.to_f64().unwrap_or(f64::NAN),
                    source,
                })?;
                let m21 = model.kernel_at(2, t, t).map_err(|source| ModelError::Sample {
                    field: "m21",
                    x: t.to_f64().unwrap_or(f64::NAN),
                    t: t.to_f64().unwrap_or(f64::NAN),
                    source,
                })?;
                let m22 = model.kernel_at(3, t, t).map_err(|source| ModelError::Sample {
                    field: "m22",
                    x: t.to_f64().unwrap_or(f64::NAN),
                    t: t.to_f64().unwrap_or(f64::NAN),
                    source,
                })?;
                d.push(m11 - m22);
                o.push(m12 - m21);
            }
            (d, o)
        }
    };

    let diag = GridFn::from_values(std::sync::Arc::clone(grid), diag)?;
    let offdiag = GridFn::from_values(std::sync::Arc::clone(grid), offdiag)?;
    let upsilon_sq = upsilon.map(|v| v * v);

    Ok(PotentialFunctionals {
        mu: frac_integral(&sum),
        upsilon0: upsilon.first(),
        k_fn: frac_integral(&diag),
        l_fn: frac_integral(&offdiag),
        upsilon_sq_int: frac_integral(&upsilon_sq),
        upsilon,
    })
}

/// Solution estimate with every 1/(2 lambda) correction term, omitting only
/// the o(1/lambda) remainder.
pub fn phi_estimate<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    lambda: T,
    x: T,
) -> Result<(T, T), GridError> {
    assert!(lambda != T::zero(), "phi_estimate requires lambda != 0");
    let alpha = fns.mu.grid().alpha();
    let s = crate::grid::s_of_x(x, alpha)?;
    let w = lambda * s - fns.mu.interp_s(s) - theta;
    let two = real::<T>(2.0);
    let c = (two * lambda).recip();
    let ups_x = fns.upsilon.interp_s(s);
    let v2 = fns.upsilon_sq_int.interp_s(s);
    let kx = fns.k_fn.interp_s(s);
    let lx = fns.l_fn.interp_s(s);
    let two_theta = two * theta;

    let phi1 = w.cos()
        + c * (ups_x * w.cos() - fns.upsilon0 * (w + two_theta).cos() + w.sin() * v2
            - kx * w.cos()
            - lx * w.sin());
    let phi2 = w.sin()
        + c * (-ups_x * w.sin() - fns.upsilon0 * (w + two_theta).sin() - w.cos() * v2
            - kx * w.sin()
            + lx * w.cos());
    Ok((phi1, phi2))
}

/// Characteristic-function estimate at the right endpoint with all
/// 1/(2 lambda) terms.
pub fn delta_estimate<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    beta: T,
    lambda: T,
) -> T {
    assert!(lambda != T::zero(), "delta_estimate requires lambda != 0");
    let grid = fns.mu.grid();
    let s_max = grid.s_max();
    let w = lambda * s_max - fns.mu_pi() - theta;
    let two = real::<T>(2.0);
    let c = (two * lambda).recip();
    let a = w + beta;
    a.sin()
        - c * fns.upsilon.last() * (w - beta).sin()
        - c * fns.upsilon0 * (w + two * theta + beta).sin()
        - c * a.cos() * fns.upsilon_sq_pi()
        - c * fns.k_pi() * a.sin()
        + c * fns.l_pi() * a.cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateOrder {
    /// Leading term plus the n-independent shift.
    Order1,
    /// Adds the 1/n correction.
    Order2,
}

/// Combination of functionals entering the 1/n eigenvalue correction, as it
/// falls out of the characteristic-function expansion.
fn spectral_correction<T: Scalar>(fns: &PotentialFunctionals<T>, theta: T, beta: T) -> T {
    let two = real::<T>(2.0);
    -fns.upsilon.last() * (two * beta).sin() + fns.upsilon0 * (two * theta).sin()
        + fns.upsilon_sq_pi()
        - fns.l_pi()
}

/// Eigenvalue estimate: lambda_n ~ n alpha pi^{1-alpha}
/// + alpha (theta + mu(pi) - beta)/pi^alpha [+ correction/(2 n pi)].
pub fn eigenvalue_estimate<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    beta: T,
    n: i32,
    order: EstimateOrder,
) -> T {
    assert!(n != 0, "eigenvalue index must be nonzero");
    let alpha = fns.mu.grid().alpha().value();
    let pi = T::PI();
    let nn = real::<T>(n as f64);
    let leading = nn * alpha * pi.powf(T::one() - alpha);
    let shift = alpha * (theta + fns.mu_pi() - beta) / pi.powf(alpha);
    match order {
        EstimateOrder::Order1 => leading + shift,
        EstimateOrder::Order2 => {
            let two = real::<T>(2.0);
            leading + shift + spectral_correction(fns, theta, beta) / (two * nn * pi)
        }
    }
}

/// Nodal-point estimate: the (x_n^j)^alpha expansion with the implicit
/// functional arguments resolved by one fixed-point pass from the leading
/// term. Returns the x-abscissa.
pub fn node_estimate<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    beta: T,
    n: i32,
    j: i32,
) -> Result<T, GridError> {
    assert!(n >= 1, "node estimate needs n >= 1");
    assert!(j >= 0 && j < n, "node index out of range");
    let alpha = fns.mu.grid().alpha();
    let a = alpha.value();
    let pi = T::PI();
    let two = real::<T>(2.0);
    let nn = real::<T>(n as f64);
    let lead = (real::<T>(j as f64) + real::<T>(0.5)) * pi.powf(a) / nn;

    // leading-term abscissa, then evaluate the functionals there
    let x0 = crate::grid::x_of_s(lead / a, alpha)?;
    let s0 = lead / a;
    let mu0 = fns.mu.interp_s(s0);
    let g0 = fns.upsilon0 * (two * theta).sin() + fns.upsilon_sq_int.interp_s(s0)
        - fns.l_fn.interp_s(s0);
    let _ = x0;

    let shift = theta + fns.mu_pi() - beta;
    let x_alpha = lead + (mu0 + theta) / (nn * pi.powf(T::one() - a))
        - lead * shift / (nn * pi)
        - shift * (mu0 + theta) / (pi.powf(two - a) * nn * nn)
        + pi.powf(two * a - two) * g0 / (two * a * nn * nn);
    crate::grid::x_of_s(x_alpha / a, alpha)
}

/// Exact limit f(x) = (mu(x) + theta)/pi^{1-alpha} - (x^alpha/pi)(theta + mu(pi) - beta).
pub fn f_exact<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    beta: T,
    x: T,
) -> Result<T, GridError> {
    let alpha = fns.mu.grid().alpha();
    let s = crate::grid::s_of_x(x, alpha)?;
    let pi = T::PI();
    let x_alpha = alpha.value() * s;
    Ok((fns.mu.interp_s(s) + theta) / pi.powf(T::one() - alpha.value())
        - x_alpha / pi * (theta + fns.mu_pi() - beta))
}

/// Exact limit g(x) = alpha (upsilon(0) sin 2 theta + int_0^x upsilon^2 - L(x)).
pub fn g_exact<T: Scalar>(
    fns: &PotentialFunctionals<T>,
    theta: T,
    x: T,
) -> Result<T, GridError> {
    let alpha = fns.mu.grid().alpha();
    let s = crate::grid::s_of_x(x, alpha)?;
    let two = real::<T>(2.0);
    Ok(alpha.value()
        * (fns.upsilon0 * (two * theta).sin() + fns.upsilon_sq_int.interp_s(s)
            - fns.l_fn.interp_s(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelSpec};

    const PI: f64 = std::f64::consts::PI;

    fn model(spec: &ModelSpec<f64>) -> Model<f64> {
        Model::from_spec(spec).unwrap()
    }

    #[test]
    fn functionals_vanish_for_free_problem() {
        let m = model(&ModelSpec::free(0.7, 0.0, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        assert_eq!(fns.mu.max_abs(), 0.0);
        assert_eq!(fns.upsilon.max_abs(), 0.0);
        assert_eq!(fns.k_fn.max_abs(), 0.0);
        assert_eq!(fns.l_fn.max_abs(), 0.0);
        assert_eq!(fns.upsilon_sq_int.max_abs(), 0.0);
    }

    #[test]
    fn functionals_for_cosine_potential() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 4097);
        spec.p = "cos(2*x)".into();
        spec.r = "cos(2*x)".into();
        let m = model(&spec);
        let fns = potential_functionals(&m).unwrap();
        // mu(x) = sin(2x)/2, upsilon = 0, mu(pi) = 0
        let worst = m
            .grid()
            .x_values()
            .iter()
            .zip(fns.mu.values())
            .map(|(&x, &v)| (v - (2.0 * x).sin() / 2.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7);
        assert!(fns.mu_pi().abs() < 1e-10);
        assert_eq!(fns.upsilon.max_abs(), 0.0);
    }

    #[test]
    fn kernel_trace_functionals() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 2049);
        spec.m12 = "1".into();
        let m = model(&spec);
        let fns = potential_functionals(&m).unwrap();
        // L(x) = x, K = 0 at alpha = 1
        let worst = m
            .grid()
            .x_values()
            .iter()
            .zip(fns.l_fn.values())
            .map(|(&x, &v)| (v - x).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10);
        assert_eq!(fns.k_fn.max_abs(), 0.0);
    }

    #[test]
    fn phi_estimate_reduces_to_free_solution() {
        let m = model(&ModelSpec::free(0.5, 0.25, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        let (lambda, x) = (7.0, 1.3);
        let s = crate::grid::s_of_x(x, m.alpha()).unwrap();
        let (p1, p2) = phi_estimate(&fns, 0.25, lambda, x).unwrap();
        assert!((p1 - (lambda * s - 0.25).cos()).abs() < 1e-12);
        assert!((p2 - (lambda * s - 0.25).sin()).abs() < 1e-12);
    }

    #[test]
    fn delta_estimate_free_forms() {
        let m = model(&ModelSpec::free(1.0, 0.0, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        let lambda = 9.0;
        assert!((delta_estimate(&fns, 0.0, 0.0, lambda) - (lambda * PI).sin()).abs() < 1e-12);
        assert!(
            (delta_estimate(&fns, 0.0, 0.4, lambda) - (lambda * PI + 0.4).sin()).abs() < 1e-12
        );
    }

    #[test]
    fn eigenvalue_estimate_closed_forms() {
        let m = model(&ModelSpec::free(0.5, 0.0, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        let est = eigenvalue_estimate(&fns, 0.0, 0.0, 4, EstimateOrder::Order1);
        assert!((est - 2.0 * PI.sqrt()).abs() < 1e-12);

        let m = model(&ModelSpec::free(1.0, 0.2, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        let est = eigenvalue_estimate(&fns, 0.2, 0.0, 3, EstimateOrder::Order1);
        assert!((est - (3.0 + 0.2 / PI)).abs() < 1e-12);
    }

    #[test]
    fn node_estimate_closed_forms() {
        // zero potential: (x_n^j)^alpha = (j + 1/2) pi^alpha / n
        let m = model(&ModelSpec::free(1.0, 0.0, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        let x = node_estimate(&fns, 0.0, 0.0, 5, 2).unwrap();
        assert!((x - PI / 2.0).abs() < 1e-12);

        // direct substitution with theta = 0.2 at alpha = 1, n = 10, j = 0
        let fns = potential_functionals(&model(&ModelSpec::free(1.0, 0.2, 0.0, 513))).unwrap();
        let x = node_estimate(&fns, 0.2, 0.0, 10, 0).unwrap();
        let expect = PI / 20.0 + 0.2 / 10.0 - (PI / 20.0) * (0.2 / (10.0 * PI))
            - 0.2 * 0.2 / (PI * 100.0);
        assert!((x - expect).abs() < 1e-12, "{x} vs {expect}");
    }

    #[test]
    fn f_exact_closed_forms() {
        let m = model(&ModelSpec::free(1.0, 0.2, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        for x in [0.3, 1.0, 2.2] {
            let f = f_exact(&fns, 0.2, 0.0, x).unwrap();
            assert!((f - 0.2 * (1.0 - x / PI)).abs() < 1e-12);
        }
        // f(0) = theta pi^{alpha-1}, f(pi) = beta pi^{alpha-1} when mu(pi) = 0
        let m = model(&ModelSpec::free(0.5, 0.3, 0.1, 513));
        let fns = potential_functionals(&m).unwrap();
        let f0 = f_exact(&fns, 0.3, 0.1, 0.0).unwrap();
        let fpi = f_exact(&fns, 0.3, 0.1, PI).unwrap();
        assert!((f0 - 0.3 * PI.powf(-0.5)).abs() < 1e-12);
        assert!((fpi - 0.1 * PI.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn g_exact_closed_forms() {
        let m = model(&ModelSpec::free(0.4, 0.1, 0.0, 513));
        let fns = potential_functionals(&m).unwrap();
        assert_eq!(g_exact(&fns, 0.1, 1.0).unwrap(), 0.0);

        // upsilon = sin x from p = sin x, r = -sin x; g = x/2 - sin(2x)/4 at alpha = 1
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 4097);
        spec.p = "sin(x)".into();
        spec.r = "-sin(x)".into();
        let fns = potential_functionals(&model(&spec)).unwrap();
        for x in [0.5, 1.5, 3.0] {
            let g = g_exact(&fns, 0.0, x).unwrap();
            let exact = x / 2.0 - (2.0 * x).sin() / 4.0;
            assert!((g - exact).abs() < 1e-7, "{g} vs {exact}");
        }
    }

    #[test]
    fn k_cancels_out_of_f_and_g() {
        // equal diagonal kernel traces change neither f nor g
        let mut spec = ModelSpec::<f64>::free(1.0, 0.2, 0.1, 1025);
        spec.p = "cos(x)".into();
        spec.r = "0.5*cos(x)".into();
        let base = potential_functionals(&model(&spec)).unwrap();
        spec.m11 = "cos(t)".into();
        spec.m22 = "-cos(t)".into();
        let bumped = potential_functionals(&model(&spec)).unwrap();
        for x in [0.7, 2.0] {
            assert_eq!(
                f_exact(&base, 0.2, 0.1, x).unwrap(),
                f_exact(&bumped, 0.2, 0.1, x).unwrap()
            );
            assert_eq!(
                g_exact(&base, 0.2, x).unwrap(),
                g_exact(&bumped, 0.2, x).unwrap()
            );
        }
        assert!(bumped.k_fn.max_abs() > 0.1);
    }
}
