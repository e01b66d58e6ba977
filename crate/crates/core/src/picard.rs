//! Successive-approximation solution of the Volterra integral equations,
//! used as the independent oracle for the Runge-Kutta path.
//!
//! The series starts from
//!     phi1_0 = cos(lambda s - theta),  phi2_0 = sin(lambda s - theta),
//! and each new term applies the integral operator of the governing
//! equations to the previous one. The single integrals carry oscillatory
//! kernels sin/cos(lambda (s - sigma)); both are expanded by the angle
//! difference identity so every quadrature is a cumulative trapezoid.

use std::sync::Arc;

use crate::forward::{SolutionTrace, SolveError};
use crate::grid::GridFn;
use crate::model::{Kernel, Model};
use crate::scalar::{real, Scalar};

struct Osc<T> {
    sin: Vec<T>,
    cos: Vec<T>,
    h: T,
}

impl<T: Scalar> Osc<T> {
    /// int_0^s sin(lambda (s - sigma)) w(sigma) d sigma for all grid s.
    fn conv_sin(&self, w: &[T]) -> Vec<T> {
        let (c, s) = self.moments(w);
        (0..w.len())
            .map(|k| self.sin[k] * c[k] - self.cos[k] * s[k])
            .collect()
    }

    /// int_0^s cos(lambda (s - sigma)) w(sigma) d sigma for all grid s.
    fn conv_cos(&self, w: &[T]) -> Vec<T> {
        let (c, s) = self.moments(w);
        (0..w.len())
            .map(|k| self.cos[k] * c[k] + self.sin[k] * s[k])
            .collect()
    }

    fn moments(&self, w: &[T]) -> (Vec<T>, Vec<T>) {
        let cw: Vec<T> = w.iter().zip(&self.cos).map(|(&a, &b)| a * b).collect();
        let sw: Vec<T> = w.iter().zip(&self.sin).map(|(&a, &b)| a * b).collect();
        (
            crate::calculus::cumulative_trapezoid(self.h, &cw),
            crate::calculus::cumulative_trapezoid(self.h, &sw),
        )
    }
}

enum InnerKernel<T> {
    None,
    TOnly { m: [Vec<T>; 4] },
    /// Lower-triangular kernel matrices M_ij(t_i, xi_j), j <= i.
    General { rows: [Vec<Vec<T>>; 4] },
}

impl<T: Scalar> InnerKernel<T> {
    /// Inner integrals A(t) = int_0^t (M11 phi1 + M12 phi2) and the M21/M22
    /// companion, sampled at every grid point.
    fn inner(&self, h: T, t1: &[T], t2: &[T]) -> Option<(Vec<T>, Vec<T>)> {
        match self {
            InnerKernel::None => None,
            InnerKernel::TOnly { m } => {
                let wa: Vec<T> = (0..t1.len())
                    .map(|k| m[0][k] * t1[k] + m[1][k] * t2[k])
                    .collect();
                let wb: Vec<T> = (0..t1.len())
                    .map(|k| m[2][k] * t1[k] + m[3][k] * t2[k])
                    .collect();
                Some((
                    crate::calculus::cumulative_trapezoid(h, &wa),
                    crate::calculus::cumulative_trapezoid(h, &wb),
                ))
            }
            InnerKernel::General { rows } => {
                let n = t1.len();
                let half_h = h / real::<T>(2.0);
                let mut a = Vec::with_capacity(n);
                let mut b = Vec::with_capacity(n);
                for k in 0..n {
                    let mut acc_a = T::zero();
                    let mut acc_b = T::zero();
                    let row = |i: usize, j: usize| rows[i][k][j];
                    let wa = |j: usize| row(0, j) * t1[j] + row(1, j) * t2[j];
                    let wb = |j: usize| row(2, j) * t1[j] + row(3, j) * t2[j];
                    for j in 1..=k {
                        acc_a += half_h * (wa(j - 1) + wa(j));
                        acc_b += half_h * (wb(j - 1) + wb(j));
                    }
                    a.push(acc_a);
                    b.push(acc_b);
                }
                Some((a, b))
            }
        }
    }
}

/// Solve by summing the successive-approximation series with the given number
/// of terms beyond the zeroth. Reports non-convergence when the last term is
/// still large against 1e-8 * (1 + max |phi|).
pub fn picard_solve<T: Scalar>(
    model: &Model<T>,
    lambda: T,
    iterations: usize,
) -> Result<SolutionTrace<T>, SolveError> {
    assert!(iterations >= 1, "picard_solve needs at least one iteration");
    let grid = model.grid();
    let n = grid.n_points();
    let h = grid.h();
    let theta = model.theta();
    let coeffs = model.coeffs();

    let p: Vec<T> = (0..n).map(|k| coeffs.p_half[2 * k]).collect();
    let r: Vec<T> = (0..n).map(|k| coeffs.r_half[2 * k]).collect();
    let osc = Osc {
        sin: grid.s_values().iter().map(|&s| (lambda * s).sin()).collect(),
        cos: grid.s_values().iter().map(|&s| (lambda * s).cos()).collect(),
        h,
    };

    let inner_kernel = match &coeffs.kernel {
        Kernel::None => InnerKernel::None,
        Kernel::TOnly { m } => InnerKernel::TOnly {
            m: [
                (0..n).map(|k| m[0][2 * k]).collect(),
                (0..n).map(|k| m[1][2 * k]).collect(),
                (0..n).map(|k| m[2][2 * k]).collect(),
                (0..n).map(|k| m[3][2 * k]).collect(),
            ],
        },
        Kernel::General => {
            let mut rows: [Vec<Vec<T>>; 4] = [vec![], vec![], vec![], vec![]];
            for (i, row_set) in rows.iter_mut().enumerate() {
                *row_set = (0..n)
                    .map(|k| {
                        (0..=k)
                            .map(|j| model.kernel_at(i, grid.x(k), grid.x(j)))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
            }
            InnerKernel::General { rows }
        }
    };

    let mut term1: Vec<T> = grid
        .s_values()
        .iter()
        .map(|&s| (lambda * s - theta).cos())
        .collect();
    let mut term2: Vec<T> = grid
        .s_values()
        .iter()
        .map(|&s| (lambda * s - theta).sin())
        .collect();
    term1[0] = theta.cos();
    term2[0] = -theta.sin();
    let mut phi1 = term1.clone();
    let mut phi2 = term2.clone();

    let mut last_increment = T::zero();
    for _ in 0..iterations {
        let w1: Vec<T> = p.iter().zip(&term1).map(|(&a, &b)| a * b).collect();
        let w2: Vec<T> = r.iter().zip(&term2).map(|(&a, &b)| a * b).collect();
        let inner = inner_kernel.inner(h, &term1, &term2);

        let sin_w1 = osc.conv_sin(&w1);
        let cos_w1 = osc.conv_cos(&w1);
        let sin_w2 = osc.conv_sin(&w2);
        let cos_w2 = osc.conv_cos(&w2);

        let mut next1: Vec<T> = (0..n).map(|k| sin_w1[k] + cos_w2[k]).collect();
        let mut next2: Vec<T> = (0..n).map(|k| -cos_w1[k] + sin_w2[k]).collect();
        if let Some((a_in, b_in)) = inner {
            let sin_a = osc.conv_sin(&a_in);
            let cos_a = osc.conv_cos(&a_in);
            let sin_b = osc.conv_sin(&b_in);
            let cos_b = osc.conv_cos(&b_in);
            for k in 0..n {
                next1[k] += sin_a[k] + cos_b[k];
                next2[k] += -cos_a[k] + sin_b[k];
            }
        }

        last_increment = T::zero();
        for k in 0..n {
            phi1[k] += next1[k];
            phi2[k] += next2[k];
            last_increment = last_increment.max(next1[k].abs()).max(next2[k].abs());
        }
        term1 = next1;
        term2 = next2;
    }

    let amplitude = phi1
        .iter()
        .chain(phi2.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let budget = real::<T>(1e-8) * (T::one() + amplitude);
    if last_increment > budget {
        return Err(SolveError::PicardNoConvergence {
            residual: last_increment.to_f64().unwrap_or(f64::NAN),
        });
    }

    // derivatives from the governing equations with the summed solution
    let mem = inner_kernel.inner(h, &phi1, &phi2);
    let (mem_a, mem_b) = mem.unwrap_or_else(|| (vec![T::zero(); n], vec![T::zero(); n]));
    let dphi1: Vec<T> = (0..n)
        .map(|k| (r[k] - lambda) * phi2[k] + mem_b[k])
        .collect();
    let dphi2: Vec<T> = (0..n)
        .map(|k| (lambda - p[k]) * phi1[k] - mem_a[k])
        .collect();

    let g = Arc::clone(grid);
    Ok(SolutionTrace {
        lambda,
        phi1: GridFn::from_values(Arc::clone(&g), phi1)?,
        phi2: GridFn::from_values(Arc::clone(&g), phi2)?,
        dphi1: GridFn::from_values(Arc::clone(&g), dphi1)?,
        dphi2: GridFn::from_values(g, dphi2)?,
    })
}
