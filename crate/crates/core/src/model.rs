use std::sync::Arc;

use thiserror::Error;

use crate::expr::{ExprError, Expression, Var};
use crate::grid::{AlphaOrder, GridError, SGrid};
use crate::scalar::{real, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("field `{field}`: {source}")]
    Parse {
        field: &'static str,
        source: ExprError,
    },
    #[error("potential `{field}` may only reference x, not t")]
    PotentialUsesT { field: &'static str },
    #[error("field `{field}` is not finite at (x, t) = ({x}, {t}): {source}")]
    Sample {
        field: &'static str,
        x: f64,
        t: f64,
        source: ExprError,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Textual description of a problem instance; parsed into a [`Model`].
#[derive(Debug, Clone)]
pub struct ModelSpec<T: Scalar> {
    pub alpha: T,
    pub theta: T,
    pub beta: T,
    pub p: String,
    pub r: String,
    pub m11: String,
    pub m12: String,
    pub m21: String,
    pub m22: String,
    pub grid_points: usize,
}

impl<T: Scalar> ModelSpec<T> {
    /// Zero-potential instance, the base case every closed form reduces to.
    pub fn free(alpha: T, theta: T, beta: T, grid_points: usize) -> Self {
        Self {
            alpha,
            theta,
            beta,
            p: "0".into(),
            r: "0".into(),
            m11: "0".into(),
            m12: "0".into(),
            m21: "0".into(),
            m22: "0".into(),
            grid_points,
        }
    }
}

/// Kernel samples used by the forward solver, classified by how the entries
/// depend on the outer variable x.
#[derive(Debug)]
pub(crate) enum Kernel<T: Scalar> {
    /// All four entries identically zero: no memory term at all.
    None,
    /// Entries depend only on t: the memory integral accumulates step by
    /// step. Samples are at half-grid resolution (index 2k = grid point k).
    TOnly { m: [Vec<T>; 4] },
    /// Entries depend on x as well; rows are evaluated on demand.
    General,
}

/// Coefficient samples at half-grid resolution (2n-1 points: index 2k is the
/// grid point k, 2k+1 the cell midpoint), as the Runge-Kutta stages need.
#[derive(Debug)]
pub(crate) struct Coeffs<T: Scalar> {
    pub p_half: Vec<T>,
    pub r_half: Vec<T>,
    pub xs_half: Vec<T>,
    pub kernel: Kernel<T>,
}

/// A full problem instance: fractional order, boundary angles, potentials,
/// kernel, and the working grid. Immutable after construction; solves borrow
/// it concurrently.
#[derive(Debug)]
pub struct Model<T: Scalar> {
    alpha: AlphaOrder<T>,
    theta: T,
    beta: T,
    p: Expression,
    r: Expression,
    m: [Expression; 4],
    grid: Arc<SGrid<T>>,
    coeffs: Coeffs<T>,
}

/// Normalize an angle into (-pi/2, pi/2]; the boundary conditions are
/// invariant under shifts by pi.
fn normalize_angle<T: Scalar>(v: T) -> T {
    let pi = T::PI();
    let half = pi / real::<T>(2.0);
    let k = ((v - half) / pi).ceil();
    v - pi * k
}

impl<T: Scalar> Model<T> {
    pub fn from_spec(spec: &ModelSpec<T>) -> Result<Self, ModelError> {
        let parse = |field: &'static str, src: &str| {
            Expression::parse(src).map_err(|source| ModelError::Parse { field, source })
        };
        let p = parse("p", &spec.p)?;
        let r = parse("r", &spec.r)?;
        let m = [
            parse("m11", &spec.m11)?,
            parse("m12", &spec.m12)?,
            parse("m21", &spec.m21)?,
            parse("m22", &spec.m22)?,
        ];
        if p.uses_var(Var::T) {
            return Err(ModelError::PotentialUsesT { field: "p" });
        }
        if r.uses_var(Var::T) {
            return Err(ModelError::PotentialUsesT { field: "r" });
        }
        let alpha = AlphaOrder::new(spec.alpha)?;
        let grid = SGrid::shared(alpha, spec.grid_points)?;
        let coeffs = sample_coeffs(alpha, &grid, &p, &r, &m)?;
        Ok(Self {
            alpha,
            theta: normalize_angle(spec.theta),
            beta: normalize_angle(spec.beta),
            p,
            r,
            m,
            grid,
            coeffs,
        })
    }

    /// Rebuild the same model on a different grid resolution.
    pub fn with_grid_points(&self, n_points: usize) -> Result<Self, ModelError> {
        let grid = SGrid::shared(self.alpha, n_points)?;
        let coeffs = sample_coeffs(self.alpha, &grid, &self.p, &self.r, &self.m)?;
        Ok(Self {
            alpha: self.alpha,
            theta: self.theta,
            beta: self.beta,
            p: self.p.clone(),
            r: self.r.clone(),
            m: self.m.clone(),
            grid,
            coeffs,
        })
    }

    #[inline]
    pub fn alpha(&self) -> AlphaOrder<T> {
        self.alpha
    }

    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.beta
    }

    #[inline]
    pub fn grid(&self) -> &Arc<SGrid<T>> {
        &self.grid
    }

    pub fn p_expr(&self) -> &Expression {
        &self.p
    }

    pub fn r_expr(&self) -> &Expression {
        &self.r
    }

    pub fn kernel_exprs(&self) -> &[Expression; 4] {
        &self.m
    }

    pub(crate) fn coeffs(&self) -> &Coeffs<T> {
        &self.coeffs
    }

    /// Kernel entry M_ij evaluated at (x, t); used on the general path.
    pub(crate) fn kernel_at(&self, idx: usize, x: T, t: T) -> Result<T, ExprError> {
        self.m[idx].eval_with_alpha(x, t, self.alpha.value())
    }
}

/// Evaluate a one-variable coefficient at x; at x = 0 a non-finite evaluation
/// retries just right of zero (the limit from the right).
fn eval_potential<T: Scalar>(
    field: &'static str,
    e: &Expression,
    x: T,
    alpha: T,
) -> Result<T, ModelError> {
    match e.eval_with_alpha(x, T::zero(), alpha) {
        Ok(v) => Ok(v),
        Err(err) if x == T::zero() => {
            let eps = real::<T>(2.0f64.powi(-40));
            e.eval_with_alpha(eps, T::zero(), alpha)
                .map_err(|_| ModelError::Sample {
                    field,
                    x: 0.0,
                    t: 0.0,
                    source: err,
                })
        }
        Err(source) => Err(ModelError::Sample {
            field,
            x: x.to_f64().unwrap_or(f64::NAN),
            t: 0.0,
            source,
        }),
    }
}

fn sample_coeffs<T: Scalar>(
    alpha: AlphaOrder<T>,
    grid: &Arc<SGrid<T>>,
    p: &Expression,
    r: &Expression,
    m: &[Expression; 4],
) -> Result<Coeffs<T>, ModelError> {
    let n = grid.n_points();
    let half_h = grid.h() / real::<T>(2.0);
    let mut xs_half = Vec::with_capacity(2 * n - 1);
    for i in 0..2 * n - 1 {
        let s = if i % 2 == 0 {
            grid.s(i / 2)
        } else {
            grid.s(i / 2) + half_h
        };
        xs_half.push(crate::grid::x_of_s(s, alpha)?);
    }
    let a = alpha.value();
    let p_half = xs_half
        .iter()
        .map(|&x| eval_potential("p", p, x, a))
        .collect::<Result<Vec<_>, _>>()?;
    let r_half = xs_half
        .iter()
        .map(|&x| eval_potential("r", r, x, a))
        .collect::<Result<Vec<_>, _>>()?;

    let names = ["m11", "m12", "m21", "m22"];
    let uses_x = m.iter().any(|e| e.uses_var(Var::X));

    // finiteness probe over [0, pi]^2 as seen by the solver
    let mut probe_max = T::zero();
    for (e, name) in m.iter().zip(names) {
        for i in (0..n).step_by((n / 16).max(1)) {
            for j in (0..n).step_by((n / 16).max(1)) {
                let (x, t) = (grid.x(i), grid.x(j));
                let v = e
                    .eval_with_alpha(x, t, a)
                    .map_err(|source| ModelError::Sample {
                        field: name,
                        x: x.to_f64().unwrap_or(f64::NAN),
                        t: t.to_f64().unwrap_or(f64::NAN),
                        source,
                    })?;
                probe_max = probe_max.max(v.abs());
            }
        }
    }

    let kernel = if probe_max == T::zero() && !uses_x {
        Kernel::None
    } else if !uses_x {
        let mut samples: [Vec<T>; 4] = [vec![], vec![], vec![], vec![]];
        for (idx, (e, name)) in m.iter().zip(names).enumerate() {
            samples[idx] = xs_half
                .iter()
                .map(|&t| {
                    e.eval_with_alpha(t, t, a).map_err(|source| ModelError::Sample {
                        field: name,
                        x: t.to_f64().unwrap_or(f64::NAN),
                        t: t.to_f64().unwrap_or(f64::NAN),
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        Kernel::TOnly { m: samples }
    } else {
        Kernel::General
    };

    Ok(Coeffs {
        p_half,
        r_half,
        xs_half,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_normalization() {
        let pi = std::f64::consts::PI;
        assert!((normalize_angle(0.6 * pi) - (-0.4 * pi)).abs() < 1e-14);
        assert!((normalize_angle(pi / 2.0) - pi / 2.0).abs() < 1e-14);
        assert!((normalize_angle(-pi / 2.0) - pi / 2.0).abs() < 1e-14);
        assert!((normalize_angle(0.3f64) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn potentials_reject_t() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 65);
        spec.p = "sin(t)".into();
        assert!(matches!(
            Model::from_spec(&spec),
            Err(ModelError::PotentialUsesT { field: "p" })
        ));
    }

    #[test]
    fn kernel_classification() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 65);
        let m = Model::from_spec(&spec).unwrap();
        assert!(matches!(m.coeffs().kernel, Kernel::None));

        spec.m11 = "cos(t)".into();
        let m = Model::from_spec(&spec).unwrap();
        assert!(matches!(m.coeffs().kernel, Kernel::TOnly { .. }));

        spec.m12 = "0.5*(x - t)".into();
        let m = Model::from_spec(&spec).unwrap();
        assert!(matches!(m.coeffs().kernel, Kernel::General));
    }

    #[test]
    fn limit_from_the_right_at_zero() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 65);
        spec.p = "sin(x)/x".into();
        let m = Model::from_spec(&spec).unwrap();
        assert!((m.coeffs().p_half[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singular_potential_is_rejected() {
        let mut spec = ModelSpec::<f64>::free(1.0, 0.0, 0.0, 65);
        spec.p = "1/(0*x)".into();
        assert!(matches!(
            Model::from_spec(&spec),
            Err(ModelError::Sample { field: "p", .. })
        ));
    }
}
