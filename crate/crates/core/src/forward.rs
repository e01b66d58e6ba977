//! Initial-value solves of the Dirac-type system in s-coordinates.
//!
//! The system is integrated as
//!     phi1' = (r - lambda) phi2 + V_b(s),
//!     phi2' = (lambda - p) phi1 - V_a(s),
//! with the Volterra memory terms
//!     V_a(s) = int_0^s (M11 phi1 + M12 phi2) ds',
//!     V_b(s) = int_0^s (M21 phi1 + M22 phi2) ds',
//! and the initial value phi(0) = (cos theta, -sin theta).
//!
//! Stepping is classical fixed-step RK4. For kernels that do not depend on x
//! the memory integral is accumulated by trapezoid alongside the steps, with
//! half-step predictors for the intermediate stages. Kernels that depend on x
//! force a history sum per stage; that path exists for cross-checks.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::ExprError;
use crate::grid::{GridError, GridFn};
use crate::model::{Kernel, Model};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solution became non-finite at grid index {index} (potential blow-up)")]
    NonFinite { index: usize },
    #[error("successive approximations did not converge: last increment {residual:e}")]
    PicardNoConvergence { residual: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The solution pair sampled along the grid for a fixed lambda, with
/// s-derivatives.
#[derive(Debug, Clone)]
pub struct SolutionTrace<T: Scalar> {
    pub lambda: T,
    pub phi1: GridFn<T>,
    pub phi2: GridFn<T>,
    pub dphi1: GridFn<T>,
    pub dphi2: GridFn<T>,
}

#[inline]
fn rhs<T: Scalar>(p: T, r: T, lambda: T, u: (T, T), va: T, vb: T) -> (T, T) {
    ((r - lambda) * u.1 + vb, (lambda - p) * u.0 - va)
}

enum MemEngine<'m, T: Scalar> {
    None,
    TOnly {
        m: &'m [Vec<T>; 4],
        acc: (T, T),
        integrand: (T, T),
    },
    General {
        model: &'m Model<T>,
        hist1: Vec<T>,
        hist2: Vec<T>,
    },
}

#[inline]
fn t_only_integrand<T: Scalar>(m: &[Vec<T>; 4], half_idx: usize, u: (T, T)) -> (T, T) {
    (
        m[0][half_idx] * u.0 + m[1][half_idx] * u.1,
        m[2][half_idx] * u.0 + m[3][half_idx] * u.1,
    )
}

impl<'m, T: Scalar> MemEngine<'m, T> {
    fn new(model: &'m Model<T>, u0: (T, T)) -> Self {
        match &model.coeffs().kernel {
            Kernel::None => MemEngine::None,
            Kernel::TOnly { m } => MemEngine::TOnly {
                m,
                acc: (T::zero(), T::zero()),
                integrand: t_only_integrand(m, 0, u0),
            },
            Kernel::General => MemEngine::General {
                model,
                hist1: vec![u0.0],
                hist2: vec![u0.1],
            },
        }
    }

    /// Memory at the grid point s_k over the accepted history.
    fn at_grid(&self, k: usize) -> Result<(T, T), SolveError> {
        match self {
            MemEngine::None => Ok((T::zero(), T::zero())),
            MemEngine::TOnly { acc, .. } => Ok(*acc),
            MemEngine::General { model, hist1, hist2 } => {
                history_trapezoid(model, model.grid().x(k), hist1, hist2, k)
            }
        }
    }

    /// Memory at s_k + h/2 with a predicted mid-step state.
    fn at_half(&self, k: usize, u_pred: (T, T), h: T) -> Result<(T, T), SolveError> {
        let quarter_h = h / real::<T>(4.0);
        match self {
            MemEngine::None => Ok((T::zero(), T::zero())),
            MemEngine::TOnly { m, acc, integrand } => {
                let mid = t_only_integrand(m, 2 * k + 1, u_pred);
                Ok((
                    acc.0 + quarter_h * (integrand.0 + mid.0),
                    acc.1 + quarter_h * (integrand.1 + mid.1),
                ))
            }
            MemEngine::General { model, hist1, hist2 } => {
                let x_star = model.coeffs().xs_half[2 * k + 1];
                let (mut va, mut vb) = history_trapezoid(model, x_star, hist1, hist2, k)?;
                let wk = kernel_dot(model, x_star, model.grid().x(k), (hist1[k], hist2[k]))?;
                let ws = kernel_dot(model, x_star, x_star, u_pred)?;
                va += quarter_h * (wk.0 + ws.0);
                vb += quarter_h * (wk.1 + ws.1);
                Ok((va, vb))
            }
        }
    }

    /// Memory at s_{k+1} with a predicted end-step state.
    fn at_end(&self, k: usize, u_pred: (T, T), h: T) -> Result<(T, T), SolveError> {
        let half_h = h / real::<T>(2.0);
        match self {
            MemEngine::None => Ok((T::zero(), T::zero())),
            MemEngine::TOnly { m, acc, integrand } => {
                let end = t_only_integrand(m, 2 * k + 2, u_pred);
                Ok((
                    acc.0 + half_h * (integrand.0 + end.0),
                    acc.1 + half_h * (integrand.1 + end.1),
                ))
            }
            MemEngine::General { model, hist1, hist2 } => {
                let x_star = model.grid().x(k + 1);
                let (mut va, mut vb) = history_trapezoid(model, x_star, hist1, hist2, k)?;
                let wk = kernel_dot(model, x_star, model.grid().x(k), (hist1[k], hist2[k]))?;
                let ws = kernel_dot(model, x_star, x_star, u_pred)?;
                va += half_h * (wk.0 + ws.0);
                vb += half_h * (wk.1 + ws.1);
                Ok((va, vb))
            }
        }
    }

    /// Fold the accepted state at k+1 into the running memory.
    fn advance(&mut self, k: usize, u_next: (T, T), h: T) {
        match self {
            MemEngine::None => {}
            MemEngine::TOnly { m, acc, integrand } => {
                let next = t_only_integrand(m, 2 * k + 2, u_next);
                let half_h = h / real::<T>(2.0);
                acc.0 += half_h * (integrand.0 + next.0);
                acc.1 += half_h * (integrand.1 + next.1);
                *integrand = next;
            }
            MemEngine::General { hist1, hist2, .. } => {
                hist1.push(u_next.0);
                hist2.push(u_next.1);
            }
        }
    }
}

/// Kernel row dotted with a state: (M11 M12; M21 M22)(x, t) . u.
#[inline]
fn kernel_dot<T: Scalar>(model: &Model<T>, x: T, t: T, u: (T, T)) -> Result<(T, T), SolveError> {
    let m11 = model.kernel_at(0, x, t)?;
    let m12 = model.kernel_at(1, x, t)?;
    let m21 = model.kernel_at(2, x, t)?;
    let m22 = model.kernel_at(3, x, t)?;
    Ok((m11 * u.0 + m12 * u.1, m21 * u.0 + m22 * u.1))
}

/// Trapezoid of the kernel-weighted history over [0, s_k], outer point x_star.
fn history_trapezoid<T: Scalar>(
    model: &Model<T>,
    x_star: T,
    hist1: &[T],
    hist2: &[T],
    k: usize,
) -> Result<(T, T), SolveError> {
    let grid = model.grid();
    let half_h = grid.h() / real::<T>(2.0);
    let mut acc = (T::zero(), T::zero());
    if k == 0 {
        return Ok(acc);
    }
    let mut prev = kernel_dot(model, x_star, grid.x(0), (hist1[0], hist2[0]))?;
    for j in 1..=k {
        let cur = kernel_dot(model, x_star, grid.x(j), (hist1[j], hist2[j]))?;
        acc.0 += half_h * (prev.0 + cur.0);
        acc.1 += half_h * (prev.1 + cur.1);
        prev = cur;
    }
    Ok(acc)
}

fn integrate<T: Scalar>(
    model: &Model<T>,
    lambda: T,
    record: bool,
) -> Result<((T, T), Option<[Vec<T>; 4]>), SolveError> {
    let grid = model.grid();
    let n = grid.n_points();
    let h = grid.h();
    let half_h = h / real::<T>(2.0);
    let sixth_h = h / real::<T>(6.0);
    let two = real::<T>(2.0);
    let coeffs = model.coeffs();
    let p = &coeffs.p_half;
    let r = &coeffs.r_half;

    let mut u = (model.theta().cos(), -model.theta().sin());
    let mut mem = MemEngine::new(model, u);

    let mut arrays = if record {
        let mut a: [Vec<T>; 4] = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        a[0].push(u.0);
        a[1].push(u.1);
        Some(a)
    } else {
        None
    };

    for k in 0..n - 1 {
        let (va0, vb0) = mem.at_grid(k)?;
        let k1 = rhs(p[2 * k], r[2 * k], lambda, u, va0, vb0);
        if let Some(a) = arrays.as_mut() {
            a[2].push(k1.0);
            a[3].push(k1.1);
        }

        let ua = (u.0 + half_h * k1.0, u.1 + half_h * k1.1);
        let (va2, vb2) = mem.at_half(k, ua, h)?;
        let k2 = rhs(p[2 * k + 1], r[2 * k + 1], lambda, ua, va2, vb2);

        let ub = (u.0 + half_h * k2.0, u.1 + half_h * k2.1);
        let (va3, vb3) = mem.at_half(k, ub, h)?;
        let k3 = rhs(p[2 * k + 1], r[2 * k + 1], lambda, ub, va3, vb3);

        let uc = (u.0 + h * k3.0, u.1 + h * k3.1);
        let (va4, vb4) = mem.at_end(k, uc, h)?;
        let k4 = rhs(p[2 * k + 2], r[2 * k + 2], lambda, uc, va4, vb4);

        u = (
            u.0 + sixth_h * (k1.0 + two * (k2.0 + k3.0) + k4.0),
            u.1 + sixth_h * (k1.1 + two * (k2.1 + k3.1) + k4.1),
        );
        if !u.0.is_finite() || !u.1.is_finite() {
            return Err(SolveError::NonFinite { index: k + 1 });
        }
        mem.advance(k, u, h);
        if let Some(a) = arrays.as_mut() {
            a[0].push(u.0);
            a[1].push(u.1);
        }
    }

    if let Some(a) = arrays.as_mut() {
        let (va, vb) = mem.at_grid(n - 1)?;
        let dn = rhs(p[2 * (n - 1)], r[2 * (n - 1)], lambda, u, va, vb);
        a[2].push(dn.0);
        a[3].push(dn.1);
    }

    Ok((u, arrays))
}

/// Solve the initial-value problem at a fixed real lambda, returning the full
/// trace with s-derivatives.
pub fn solve_phi<T: Scalar>(model: &Model<T>, lambda: T) -> Result<SolutionTrace<T>, SolveError> {
    let (_, arrays) = integrate(model, lambda, true)?;
    let [phi1, phi2, dphi1, dphi2] = arrays.expect("recorded");
    let grid = Arc::clone(model.grid());
    Ok(SolutionTrace {
        lambda,
        phi1: GridFn::from_values(Arc::clone(&grid), phi1)?,
        phi2: GridFn::from_values(Arc::clone(&grid), phi2)?,
        dphi1: GridFn::from_values(Arc::clone(&grid), dphi1)?,
        dphi2: GridFn::from_values(grid, dphi2)?,
    })
}

/// Characteristic function Delta(lambda) = phi1(pi) sin(beta) + phi2(pi) cos(beta).
pub fn char_delta<T: Scalar>(model: &Model<T>, lambda: T) -> Result<T, SolveError> {
    let (end, _) = integrate(model, lambda, false)?;
    Ok(end.0 * model.beta().sin() + end.1 * model.beta().cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn sup2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_potential_closed_form() {
        for alpha in [1.0, 0.5] {
            let model =
                Model::from_spec(&ModelSpec::<f64>::free(alpha, 0.0, 0.0, 4097)).unwrap();
            let lambda = 5.0;
            let tr = solve_phi(&model, lambda).unwrap();
            let s = model.grid().s_values();
            let exact1: Vec<f64> = s.iter().map(|&s| (lambda * s).cos()).collect();
            let exact2: Vec<f64> = s.iter().map(|&s| (lambda * s).sin()).collect();
            assert!(sup2(tr.phi1.values(), &exact1) < 1e-6);
            assert!(sup2(tr.phi2.values(), &exact2) < 1e-6);
        }
    }

    #[test]
    fn initial_condition_is_exact() {
        let theta = 0.3f64;
        let model = Model::from_spec(&ModelSpec {
            theta,
            ..ModelSpec::free(1.0, theta, 0.0, 129)
        })
        .unwrap();
        let tr = solve_phi(&model, 2.0).unwrap();
        assert_eq!(tr.phi1.value(0), theta.cos());
        assert_eq!(tr.phi2.value(0), -theta.sin());
    }

    #[test]
    fn constant_potential_rotation() {
        // p = r = c at alpha = 1 rotates by (lambda - c) x - theta
        let c = 0.7;
        let theta = 0.3;
        let mut spec = ModelSpec::<f64>::free(1.0, theta, 0.0, 8193);
        spec.p = "0.7".into();
        spec.r = "0.7".into();
        let model = Model::from_spec(&spec).unwrap();
        let lambda = 4.0;
        let tr = solve_phi(&model, lambda).unwrap();
        let xs = model.grid().x_values();
        let exact1: Vec<f64> = xs.iter().map(|&x| ((lambda - c) * x - theta).cos()).collect();
        let exact2: Vec<f64> = xs.iter().map(|&x| ((lambda - c) * x - theta).sin()).collect();
        assert!(sup2(tr.phi1.values(), &exact1) < 1e-6);
        assert!(sup2(tr.phi2.values(), &exact2) < 1e-6);
    }

    #[test]
    fn unitary_when_p_equals_r() {
        let mut spec = ModelSpec::<f64>::free(0.8, 0.25, 0.0, 4097);
        spec.p = "cos(2*x)".into();
        spec.r = "cos(2*x)".into();
        let model = Model::from_spec(&spec).unwrap();
        let tr = solve_phi(&model, 3.0).unwrap();
        let worst = tr
            .phi1
            .values()
            .iter()
            .zip(tr.phi2.values())
            .map(|(a, b)| (a * a + b * b - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "norm drift {worst:e}");
    }

    #[test]
    fn char_delta_closed_forms() {
        // zero potential, theta = beta = 0: Delta = sin(lambda pi^alpha/alpha)
        let model = Model::from_spec(&ModelSpec::<f64>::free(1.0, 0.0, 0.0, 4097)).unwrap();
        assert!(char_delta(&model, 3.0).unwrap().abs() < 1e-8);
        // beta = pi/2: Delta = phi1(pi) = cos(lambda pi)
        let model =
            Model::from_spec(&ModelSpec::<f64>::free(1.0, 0.0, std::f64::consts::FRAC_PI_2, 4097))
                .unwrap();
        assert!(char_delta(&model, 2.5).unwrap().abs() < 1e-8);
        // constant shift: zeros at lambda = n + 0.3
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 4097);
        spec.p = "0.3".into();
        spec.r = "0.3".into();
        let model = Model::from_spec(&spec).unwrap();
        assert!(char_delta(&model, 4.3).unwrap().abs() < 1e-8);
    }

    #[test]
    fn convergence_order_zero_potential() {
        let lambda = 6.0;
        let err_at = |n: usize| {
            let model = Model::from_spec(&ModelSpec::<f64>::free(1.0, 0.0, 0.0, n)).unwrap();
            let tr = solve_phi(&model, lambda).unwrap();
            let s = model.grid().s_values();
            let exact: Vec<f64> = s.iter().map(|&s| (lambda * s).cos()).collect();
            sup2(tr.phi1.values(), &exact)
        };
        let coarse = err_at(513);
        let fine = err_at(1025);
        assert!(coarse / fine >= 3.7, "ratio {}", coarse / fine);
    }

    #[test]
    fn convergence_order_with_memory() {
        let lambda = 4.0;
        let err_pair = |n: usize| {
            let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, n);
            spec.m11 = "0.2".into();
            spec.m22 = "0.2".into();
            let model = Model::from_spec(&spec).unwrap();
            solve_phi(&model, lambda).unwrap()
        };
        // order from three dyadic resolutions against each other
        let a = err_pair(513);
        let b = err_pair(1025);
        let c = err_pair(2049);
        let gap_ab = a
            .phi1
            .values()
            .iter()
            .step_by(1)
            .zip(b.phi1.values().iter().step_by(2))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let gap_bc = b
            .phi1
            .values()
            .iter()
            .step_by(1)
            .zip(c.phi1.values().iter().step_by(2))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let order = (gap_ab / gap_bc).log2();
        assert!(order >= 1.9, "observed order {order}");
    }
}
