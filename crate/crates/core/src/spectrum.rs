//! Eigenvalue search on the real line and nodal-point extraction.
//!
//! Eigenvalues are the zeros of the characteristic function. Each index is
//! seeded from the two leading terms of the eigenvalue expansion, bracketed
//! over the asymptotic gap, and refined by a bracketed secant/bisection
//! hybrid. Nodes of the first component are located from the stored trace by
//! sign-change scanning plus safeguarded Newton on the Hermite cubic.

use rayon::prelude::*;
use thiserror::Error;

use crate::asymptotics::{
    eigenvalue_estimate, potential_functionals, AsymptoticsError, EstimateOrder,
    PotentialFunctionals,
};
use crate::forward::{char_delta, solve_phi, SolutionTrace, SolveError};
use crate::grid::x_of_s;
use crate::model::Model;
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("empty index range: n_lo {n_lo} > n_hi {n_hi}")]
    EmptyRange { n_lo: i32, n_hi: i32 },
    #[error("indices {a} and {b} converged to the same eigenvalue {lambda}")]
    DuplicateRoot { a: i32, b: i32, lambda: f64 },
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumEntry<T: Scalar> {
    pub n: i32,
    pub lambda: T,
    pub residual: T,
}

#[derive(Debug, Clone)]
pub struct SpectrumFailure {
    pub n: i32,
    pub message: String,
}

/// Indexed eigenvalues with per-index residuals; failed indices are recorded
/// rather than fatal.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Scalar> {
    pub entries: Vec<SpectrumEntry<T>>,
    pub failures: Vec<SpectrumFailure>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn lambda(&self, n: i32) -> Option<T> {
        self.entries
            .iter()
            .find(|e| e.n == n)
            .map(|e| e.lambda)
    }
}

/// Root search for the characteristic function over an index range, seeded by
/// the asymptotic estimates. Runs as a parallel map over indices; results are
/// merged by index.
pub fn find_eigenvalues<T: Scalar>(
    model: &Model<T>,
    n_lo: i32,
    n_hi: i32,
) -> Result<Spectrum<T>, SpectrumError> {
    if n_lo > n_hi {
        return Err(SpectrumError::EmptyRange { n_lo, n_hi });
    }
    let fns = potential_functionals(model)?;
    let gap = model.alpha().value() * T::PI().powf(T::one() - model.alpha().value());

    let outcomes: Vec<(i32, Result<(T, T), String>)> = (n_lo..=n_hi)
        .into_par_iter()
        .map(|n| (n, locate_eigenvalue(model, &fns, n, gap)))
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (n, outcome) in outcomes {
        match outcome {
            Ok((lambda, residual)) => entries.push(SpectrumEntry { n, lambda, residual }),
            Err(message) => failures.push(SpectrumFailure { n, message }),
        }
    }

    for pair in entries.windows(2) {
        let sep = pair[1].lambda - pair[0].lambda;
        let tol = real::<T>(1e-9) * T::one().max(pair[1].lambda.abs());
        if sep <= tol {
            return Err(SpectrumError::DuplicateRoot {
                a: pair[0].n,
                b: pair[1].n,
                lambda: pair[1].lambda.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    Ok(Spectrum { entries, failures })
}

fn locate_eigenvalue<T: Scalar>(
    model: &Model<T>,
    fns: &PotentialFunctionals<T>,
    n: i32,
    gap: T,
) -> Result<(T, T), String> {
    let seed = if n == 0 {
        eigenvalue_estimate(fns, model.theta(), model.beta(), 1, EstimateOrder::Order1)
            - gap
    } else {
        eigenvalue_estimate(fns, model.theta(), model.beta(), n, EstimateOrder::Order1)
    };
    let half = real::<T>(0.5);
    let delta = |lambda: T| char_delta(model, lambda).map_err(|e| e.to_string());

    // Scan panels across the bracket and refine the sign change nearest the
    // seed; a single wide bracket can capture a neighboring root when small
    // indices cluster. No panel may span more than the base gap / 8.
    for factor in [1.0, 1.6, 2.56, 4.0] {
        let w = gap * real::<T>(factor);
        let lo = seed - half * w;
        let panels = (8.0 * factor).ceil() as usize;
        let step = w / real::<T>(panels as f64);
        let mut best: Option<(T, T, T, T, T)> = None; // lo, hi, flo, fhi, dist
        let mut left = lo;
        let mut f_left = delta(left)?;
        for k in 0..panels {
            let right = if k + 1 == panels {
                seed + half * w
            } else {
                lo + step * real::<T>((k + 1) as f64)
            };
            let f_right = delta(right)?;
            if f_left == T::zero() {
                return Ok((left, T::zero()));
            }
            if (f_left > T::zero()) != (f_right > T::zero()) {
                let mid = left + (right - left) * half;
                let dist = (mid - seed).abs();
                if best.as_ref().is_none_or(|b| dist < b.4) {
                    best = Some((left, right, f_left, f_right, dist));
                }
            }
            left = right;
            f_left = f_right;
        }
        if f_left == T::zero() {
            return Ok((left, T::zero()));
        }
        if let Some((blo, bhi, bflo, bfhi, _)) = best {
            return refine_root(&delta, blo, bhi, bflo, bfhi);
        }
    }
    Err(format!(
        "no sign change of the characteristic function around seed {seed} after 4x expansion"
    ))
}

/// Bracketed secant/bisection hybrid. Stops at |Delta| <= 1e-10 max(1, scale)
/// or bracket width <= 1e-11 (widened for coarse scalar types).
fn refine_root<T: Scalar>(
    f: &dyn Fn(T) -> Result<T, String>,
    mut lo: T,
    mut hi: T,
    mut flo: T,
    mut fhi: T,
) -> Result<(T, T), String> {
    let scale = flo.abs().max(fhi.abs());
    let ftol = real::<T>(1e-10) * T::one().max(scale);
    let wtol = real::<T>(1e-11).max(T::epsilon() * real::<T>(8.0) * hi.abs());
    let half = real::<T>(0.5);
    let margin = real::<T>(0.01);

    let mut stale = 0usize; // consecutive updates on the same side
    let mut last_side = 0i8;
    for _ in 0..200 {
        let width = hi - lo;
        let mid = lo + half * width;
        let secant_ok = fhi != flo;
        let cand = if secant_ok && stale < 2 {
            let sec = hi - fhi * width / (fhi - flo);
            if sec > lo + margin * width && sec < hi - margin * width {
                sec
            } else {
                mid
            }
        } else {
            mid
        };
        let fc = f(cand)?;
        if fc == T::zero() {
            return Ok((cand, T::zero()));
        }
        let side = if (fc > T::zero()) == (flo > T::zero()) {
            lo = cand;
            flo = fc;
            -1
        } else {
            hi = cand;
            fhi = fc;
            1
        };
        stale = if side == last_side { stale + 1 } else { 0 };
        last_side = side;
        if fc.abs() <= ftol || (hi - lo) <= wtol {
            let (best, fbest) = if flo.abs() <= fhi.abs() {
                (lo, flo)
            } else {
                (hi, fhi)
            };
            let (best, fbest) = if fc.abs() <= fbest.abs() {
                (cand, fc)
            } else {
                (best, fbest)
            };
            return Ok((best, fbest.abs()));
        }
    }
    Err("root refinement exceeded the iteration budget".to_string())
}

/// Zeros of the first trace component inside (0, pi).
///
/// Sign-change brackets are refined by safeguarded Newton on the Hermite
/// cubic built from the stored values and s-derivatives; a grid point with
/// |phi1| < 1e-14 counts as one node on its own.
pub fn find_nodes<T: Scalar>(trace: &SolutionTrace<T>) -> Vec<T> {
    let grid = trace.phi1.grid();
    let n = grid.n_points();
    let phi = trace.phi1.values();
    let dphi = trace.dphi1.values();
    let on_node = real::<T>(1e-14);
    let mut nodes = Vec::new();

    for k in 0..n {
        if phi[k].abs() <= on_node {
            if k > 0 && k + 1 < n {
                nodes.push(grid.s(k));
            }
            continue;
        }
        if k + 1 < n
            && phi[k + 1].abs() > on_node
            && (phi[k] > T::zero()) != (phi[k + 1] > T::zero())
        {
            let s = hermite_zero(
                grid.s(k),
                grid.h(),
                phi[k],
                dphi[k],
                phi[k + 1],
                dphi[k + 1],
            );
            nodes.push(s);
        }
    }

    nodes
        .into_iter()
        .filter_map(|s| {
            let x = x_of_s(s, grid.alpha()).ok()?;
            (x > T::zero() && x < T::PI()).then_some(x)
        })
        .collect()
}

/// Zero of the cubic Hermite interpolant on [s0, s0 + h] with endpoint values
/// and derivatives (f0, d0), (f1, d1); f0 and f1 have opposite signs.
fn hermite_zero<T: Scalar>(s0: T, h: T, f0: T, d0: T, f1: T, d1: T) -> T {
    let two = real::<T>(2.0);
    let three = real::<T>(3.0);
    let slope = (f1 - f0) / h;
    let c2 = (three * slope - two * d0 - d1) / h;
    let c3 = (d0 + d1 - two * slope) / (h * h);
    let eval = |xi: T| f0 + xi * (d0 + xi * (c2 + xi * c3));
    let eval_d = |xi: T| d0 + xi * (two * c2 + three * c3 * xi);

    // secant start inside the bracket
    let mut lo = T::zero();
    let mut hi = h;
    let mut flo = f0;
    let mut xi = h * f0 / (f0 - f1);
    for _ in 0..60 {
        let fx = eval(xi);
        if fx == T::zero() {
            return s0 + xi;
        }
        if (fx > T::zero()) == (flo > T::zero()) {
            lo = xi;
            flo = fx;
        } else {
            hi = xi;
        }
        let dfx = eval_d(xi);
        let mut next = if dfx != T::zero() { xi - fx / dfx } else { lo };
        if !(next > lo && next < hi) {
            next = lo + (hi - lo) / two;
        }
        if (next - xi).abs() <= T::epsilon() * h {
            return s0 + next;
        }
        xi = next;
    }
    s0 + (lo + hi) / two
}

#[derive(Debug, Clone)]
pub struct NodalLine<T: Scalar> {
    pub n: i32,
    pub nodes: Vec<T>,
}

/// Per-eigenvalue node abscissas with the count diagnostic: n_min is the
/// smallest index from which every computed line has exactly n nodes.
#[derive(Debug, Clone)]
pub struct NodalSet<T: Scalar> {
    pub lines: Vec<NodalLine<T>>,
    pub n_min: Option<i32>,
    pub count_mismatches: Vec<(i32, usize)>,
}

/// Solve the trace at every spectrum entry (parallel map) and extract nodes.
pub fn collect_nodes<T: Scalar>(
    model: &Model<T>,
    spectrum: &Spectrum<T>,
) -> Result<NodalSet<T>, SpectrumError> {
    let lines: Vec<NodalLine<T>> = spectrum
        .entries
        .par_iter()
        .map(|entry| {
            let trace = solve_phi(model, entry.lambda)?;
            Ok(NodalLine {
                n: entry.n,
                nodes: find_nodes(&trace),
            })
        })
        .collect::<Result<_, SolveError>>()?;

    let count_mismatches: Vec<(i32, usize)> = lines
        .iter()
        .filter(|l| l.n >= 1 && l.nodes.len() != l.n as usize)
        .map(|l| (l.n, l.nodes.len()))
        .collect();

    let mut n_min = None;
    let mut candidate = None;
    for line in lines.iter().filter(|l| l.n >= 1) {
        if line.nodes.len() == line.n as usize {
            if candidate.is_none() {
                candidate = Some(line.n);
            }
        } else {
            candidate = None;
        }
    }
    if let Some(c) = candidate {
        n_min = Some(c);
    }

    Ok(NodalSet {
        lines,
        n_min,
        count_mismatches,
    })
}
