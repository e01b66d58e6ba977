//! Inverse nodal problem: recover the boundary angles, D^alpha mu, |upsilon|,
//! and then (p, r) given L — or L given (p, r) — from a dense set of nodal
//! points.
//!
//! The pipeline follows the four reconstruction steps: nodal approximants for
//! the limit functions f and g, boundary angles from the endpoint values of
//! f, D^alpha mu from f, |upsilon| from g and L, and finally the potentials
//! (or L). The whole procedure assumes mu(pi) = 0, which nodal data cannot
//! determine.
//!
//! Numerically, approximants are evaluated at the node abscissas themselves
//! (where the nearest-node selection is exact), extrapolated in 1/n across
//! the stored indices, and carried to the working grid by a cubic spline in
//! the s-coordinate. The g-stage applies the cross term and the alpha scale
//! factor that relate the raw nodal limit to g as the step-3 algebra defines
//! it; both corrections are the identity at alpha = 1 with equal boundary
//! angles.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::calculus::{frac_derivative, frac_integral, smooth_moving_average};
use crate::grid::{s_of_x, AlphaOrder, GridError, GridFn, SGrid};
use crate::scalar::{real, Scalar};
use crate::spline::{
    inv_power_limit, quadratic_extrapolate, ChebyshevFit, CubicSpline, SplineError,
};

#[derive(Debug, Error)]
pub enum InverseError {
    #[error("need n_max >= 16 for extrapolation, dataset has {0}")]
    InsufficientData(i32),
    #[error("index {0} is not present in the nodal dataset")]
    MissingIndex(i32),
    #[error("nodal dataset invalid: {0}")]
    InvalidDataset(String),
    #[error("dataset fractional order does not match the target grid")]
    AlphaMismatch,
    #[error("abscissa {0} outside the open interval (0, pi)")]
    OutOfInterval(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Nodal data indexed by eigenvalue number: for each stored n, the full
/// ordered list of the n nodes inside (0, pi).
#[derive(Debug, Clone)]
pub struct NodalDataset<T: Scalar> {
    alpha: AlphaOrder<T>,
    entries: BTreeMap<i32, Vec<T>>,
}

impl<T: Scalar> NodalDataset<T> {
    pub fn new(
        alpha: AlphaOrder<T>,
        entries: BTreeMap<i32, Vec<T>>,
    ) -> Result<Self, InverseError> {
        for (&n, nodes) in &entries {
            if n < 1 {
                return Err(InverseError::InvalidDataset(format!(
                    "index {n} must be >= 1"
                )));
            }
            if nodes.len() != n as usize {
                return Err(InverseError::InvalidDataset(format!(
                    "index {n} carries {} nodes, expected {n}",
                    nodes.len()
                )));
            }
            let mut prev = T::zero();
            for (j, &x) in nodes.iter().enumerate() {
                if !(x > T::zero() && x < T::PI()) {
                    return Err(InverseError::InvalidDataset(format!(
                        "node ({n},{j}) outside (0, pi)"
                    )));
                }
                if j > 0 && x <= prev {
                    return Err(InverseError::InvalidDataset(format!(
                        "nodes of index {n} not strictly increasing at {j}"
                    )));
                }
                prev = x;
            }
        }
        Ok(Self { alpha, entries })
    }

    /// Keep only the conforming lines of a solver [`crate::NodalSet`];
    /// returns the dataset and the indices that were dropped.
    pub fn from_nodal_set(
        alpha: AlphaOrder<T>,
        set: &crate::spectrum::NodalSet<T>,
    ) -> (Self, Vec<i32>) {
        let mut entries = BTreeMap::new();
        let mut dropped = Vec::new();
        for line in &set.lines {
            if line.n >= 1 && line.nodes.len() == line.n as usize {
                entries.insert(line.n, line.nodes.clone());
            } else {
                dropped.push(line.n);
            }
        }
        (Self { alpha, entries }, dropped)
    }

    #[inline]
    pub fn alpha(&self) -> AlphaOrder<T> {
        self.alpha
    }

    pub fn n_max(&self) -> Option<i32> {
        self.entries.keys().next_back().copied()
    }

    pub fn indices(&self) -> impl Iterator<Item = i32> + '_ {
        self.entries.keys().copied()
    }

    pub fn nodes(&self, n: i32) -> Option<&[T]> {
        self.entries.get(&n).map(|v| v.as_slice())
    }

    /// Node of index n nearest to x; ties break toward the smaller j.
    pub fn nearest_node(&self, n: i32, x: T) -> Result<(usize, T), InverseError> {
        let nodes = self
            .entries
            .get(&n)
            .ok_or(InverseError::MissingIndex(n))?;
        let mut best = 0usize;
        let mut best_d = (nodes[0] - x).abs();
        for (j, &v) in nodes.iter().enumerate().skip(1) {
            let d = (v - x).abs();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        Ok((best, nodes[best]))
    }

    /// First-limit approximant n ((x_n^{j(n)})^alpha - (j + 1/2) pi^alpha / n)
    /// with j(n) the node nearest to x.
    pub fn approximant_f(&self, x: T, n: i32) -> Result<T, InverseError> {
        if !(x > T::zero() && x < T::PI()) {
            return Err(InverseError::OutOfInterval(x.to_f64().unwrap_or(f64::NAN)));
        }
        let (j, node) = self.nearest_node(n, x)?;
        Ok(node_value_f(self.alpha, n, j, node))
    }

    /// Second-limit approximant: the displayed 2n^2 (...) expression with
    /// mu(x_n^j) supplied by the caller and mu(pi) = 0 assumed.
    pub fn approximant_g(
        &self,
        x: T,
        n: i32,
        theta: T,
        beta: T,
        mu_of_x: T,
    ) -> Result<T, InverseError> {
        if !(x > T::zero() && x < T::PI()) {
            return Err(InverseError::OutOfInterval(x.to_f64().unwrap_or(f64::NAN)));
        }
        let (j, node) = self.nearest_node(n, x)?;
        Ok(node_value_g(self.alpha, n, j, node, theta, beta, mu_of_x))
    }
}

fn node_value_f<T: Scalar>(alpha: AlphaOrder<T>, n: i32, j: usize, node: T) -> T {
    let a = alpha.value();
    let nn = real::<T>(n as f64);
    let x_alpha = node.powf(a);
    let lead = (real::<T>(j as f64) + real::<T>(0.5)) * T::PI().powf(a) / nn;
    nn * (x_alpha - lead)
}

fn node_value_g<T: Scalar>(
    alpha: AlphaOrder<T>,
    n: i32,
    j: usize,
    node: T,
    theta: T,
    beta: T,
    mu_at_node: T,
) -> T {
    let a = alpha.value();
    let pi = T::PI();
    let two = real::<T>(2.0);
    let nn = real::<T>(n as f64);
    let x_alpha = node.powf(a);
    let lead = (real::<T>(j as f64) + real::<T>(0.5)) * pi.powf(a) / nn;
    let shift = theta - beta; // theta + mu(pi) - beta with mu(pi) = 0
    two * nn
        * nn
        * (x_alpha - lead - (mu_at_node + theta) / (nn * pi.powf(T::one() - a))
            + lead * shift / (nn * pi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    /// Three indices when the dataset is deep enough, else two, else one.
    #[default]
    Auto,
    /// The two largest dyadic indices only.
    TwoPoint,
    /// Plain evaluation at the largest index.
    LargestOnly,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOptions {
    pub extrapolation: Extrapolation,
    /// Moving-average width applied to the sampled limit functions; 0 = off.
    pub smoothing_window: usize,
}

/// Output of the limit-extraction stage.
#[derive(Debug, Clone)]
pub struct LimitExtraction<T: Scalar> {
    pub f_hat: GridFn<T>,
    pub g_hat: GridFn<T>,
    pub theta_hat: T,
    pub beta_hat: T,
    pub used_indices: Vec<i32>,
    pub warnings: Vec<String>,
    /// s-range where g_hat rests on fitted data rather than extension, with
    /// the fit's abscissa spacing.
    pub g_span: Option<GSpan<T>>,
}

/// Data-supported s-range of the g-stage fit.
#[derive(Debug, Clone, Copy)]
pub struct GSpan<T: Scalar> {
    pub lo: T,
    pub hi: T,
    pub spacing: T,
}

/// Pick the extrapolation ladder n_max, ~n_max/2, ~n_max/4 from the stored
/// indices.
fn pick_indices<T: Scalar>(
    data: &NodalDataset<T>,
    mode: Extrapolation,
) -> Result<Vec<i32>, InverseError> {
    let n_max = data.n_max().ok_or(InverseError::InsufficientData(0))?;
    if n_max < 16 {
        return Err(InverseError::InsufficientData(n_max));
    }
    let le = |bound: i32| data.entries.range(..=bound).next_back().map(|(&n, _)| n);
    let n2 = le(n_max / 2).filter(|&n| n < n_max && n >= 4);
    let n1 = n2.and_then(|n2v| le(n_max / 4).filter(|&n| n < n2v && n >= 4));
    let ladder = match mode {
        Extrapolation::LargestOnly => vec![n_max],
        Extrapolation::TwoPoint => match n2 {
            Some(n2v) => vec![n2v, n_max],
            None => vec![n_max],
        },
        Extrapolation::Auto => match (n1, n2) {
            (Some(n1v), Some(n2v)) if n_max >= 32 => vec![n1v, n2v, n_max],
            (_, Some(n2v)) => vec![n2v, n_max],
            _ => vec![n_max],
        },
    };
    Ok(ladder)
}

/// One per-index stage: values anchored at the index's own nodes, carried by
/// a spline over the node s-abscissas.
struct IndexCurve<T: Scalar> {
    n: i32,
    spline: CubicSpline<T>,
    s_nodes: Vec<T>,
    values: Vec<T>,
}

fn index_curve<T: Scalar>(
    data: &NodalDataset<T>,
    n: i32,
    value: impl Fn(usize, T) -> T,
) -> Result<IndexCurve<T>, InverseError> {
    let nodes = data.nodes(n).ok_or(InverseError::MissingIndex(n))?;
    let alpha = data.alpha();
    let mut s_nodes = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len());
    for (j, &x) in nodes.iter().enumerate() {
        s_nodes.push(s_of_x(x, alpha)?);
        values.push(value(j, x));
    }
    let spline = CubicSpline::new(s_nodes.clone(), values.clone())?;
    Ok(IndexCurve {
        n,
        spline,
        s_nodes,
        values,
    })
}

/// Extrapolate the per-index curves to n -> infinity at the abscissas of the
/// largest index, then extend to the closed interval with quadratic endpoint
/// extrapolation and resample on the grid.
fn combine_curves<T: Scalar>(
    curves: &[IndexCurve<T>],
    grid: &Arc<SGrid<T>>,
    smoothing_window: usize,
) -> Result<(GridFn<T>, T, T), InverseError> {
    let top = curves.last().expect("at least one curve");
    let m = top.s_nodes.len();
    let mut limits = Vec::with_capacity(m);
    for j in 0..m {
        let sj = top.s_nodes[j];
        let samples: Vec<(T, T)> = curves
            .iter()
            .map(|c| {
                let v = if c.n == top.n {
                    c.values[j]
                } else {
                    c.spline.eval(sj)
                };
                (real::<T>(c.n as f64), v)
            })
            .collect();
        limits.push(inv_power_limit(&samples));
    }

    // endpoint values from the first/last three node-anchored limits
    let at0 = quadratic_extrapolate(
        &[
            (top.s_nodes[0], limits[0]),
            (top.s_nodes[1], limits[1]),
            (top.s_nodes[2], limits[2]),
        ],
        T::zero(),
    );
    let s_max = grid.s_max();
    let at_end = quadratic_extrapolate(
        &[
            (top.s_nodes[m - 3], limits[m - 3]),
            (top.s_nodes[m - 2], limits[m - 2]),
            (top.s_nodes[m - 1], limits[m - 1]),
        ],
        s_max,
    );

    let mut knots_s = Vec::with_capacity(m + 2);
    let mut knots_v = Vec::with_capacity(m + 2);
    knots_s.push(T::zero());
    knots_v.push(at0);
    knots_s.extend_from_slice(&top.s_nodes);
    knots_v.extend_from_slice(&limits);
    knots_s.push(s_max);
    knots_v.push(at_end);
    let spline = CubicSpline::new(knots_s, knots_v)?;

    let sampled = GridFn::from_values(
        Arc::clone(grid),
        grid.s_values().iter().map(|&s| spline.eval(s)).collect(),
    )?;
    let sampled = if smoothing_window > 1 {
        smooth_moving_average(&sampled, smoothing_window)
    } else {
        sampled
    };
    Ok((sampled, at0, at_end))
}

/// Steps 1-3 of the reconstruction: build f_hat and g_hat on the grid and
/// recover the boundary angles from the endpoint values of f.
pub fn extract_limits<T: Scalar>(
    data: &NodalDataset<T>,
    grid: &Arc<SGrid<T>>,
    options: &ExtractOptions,
) -> Result<LimitExtraction<T>, InverseError> {
    if grid.alpha() != data.alpha() {
        return Err(InverseError::AlphaMismatch);
    }
    let ladder = pick_indices(data, options.extrapolation)?;
    let alpha = data.alpha();
    let a = alpha.value();
    let pi = T::PI();
    let two = real::<T>(2.0);
    let mut warnings = Vec::new();

    // f-stage
    let f_curves: Vec<IndexCurve<T>> = ladder
        .iter()
        .map(|&n| index_curve(data, n, |j, x| node_value_f(alpha, n, j, x)))
        .collect::<Result<_, _>>()?;
    if f_curves.len() == 3 {
        // conditioning probe: successive approximant gaps should shrink
        let top = &f_curves[2];
        let mut bad = 0usize;
        let probes = [top.s_nodes.len() / 4, top.s_nodes.len() / 2, 3 * top.s_nodes.len() / 4];
        for &j in &probes {
            let sj = top.s_nodes[j];
            let d21 = (f_curves[1].spline.eval(sj) - f_curves[0].spline.eval(sj)).abs();
            let d32 = (top.values[j] - f_curves[1].spline.eval(sj)).abs();
            if d32 > d21 + real::<T>(1e-12) {
                bad += 1;
            }
        }
        if bad >= 2 {
            warnings.push("non-monotone f-approximant sequence; extrapolation may be poorly conditioned".to_string());
        }
    }
    let (f_hat, f0, f_end) = combine_curves(&f_curves, grid, options.smoothing_window)?;
    let scale = pi.powf(T::one() - a);
    let theta_hat = scale * f0;
    let beta_hat = scale * f_end;

    // mu restored from f (mu(pi) = 0): mu(s) = pi^{1-a} f(s) - theta + a s (theta - beta)/pi^a.
    // The g-stage needs mu smooth at the node-spacing scale (gap filters of
    // different widths leak short-wavelength noise), so f is carried by a
    // low-order Chebyshev fit of the extrapolated limits rather than by the
    // interpolating spline.
    let f_fit = {
        let top = f_curves.last().unwrap();
        let m = top.s_nodes.len();
        let mut limits = Vec::with_capacity(m);
        for j in 0..m {
            let sj = top.s_nodes[j];
            let samples: Vec<(T, T)> = f_curves
                .iter()
                .map(|c| {
                    let v = if c.n == top.n {
                        c.values[j]
                    } else {
                        c.spline.eval(sj)
                    };
                    (real::<T>(c.n as f64), v)
                })
                .collect();
            limits.push(inv_power_limit(&samples));
        }
        let mut ks = vec![T::zero()];
        let mut kv = vec![f0];
        ks.extend_from_slice(&top.s_nodes);
        kv.extend_from_slice(&limits);
        ks.push(grid.s_max());
        kv.push(f_end);
        let degree = 12.min(ks.len() / 3).max(3);
        ChebyshevFit::fit(&ks, &kv, degree)?
    };
    let shift = theta_hat - beta_hat;
    let mu_hat = move |s: T| -> T {
        scale * f_fit.eval(s) - theta_hat + a * s * shift / pi.powf(a)
    };

    // g-stage. The limit function g is recovered through its derivative
    // D^alpha G, extracted from node gaps: differencing the nodal phase
    // equation gives, per gap,
    //     (pi + mu(s_{j+1}) - mu(s_j)) / (s_{j+1} - s_j)
    //         = lambda_n - D^alpha G(mid) / (2 lambda_n) + ...,
    // so a per-abscissa polynomial fit in 1/(2 lambda_n) across several
    // stored indices isolates D^alpha G up to an additive constant. Errors in
    // mu_hat are index-independent and cancel in the fit, which the direct
    // 2n^2-approximant route (amplifying them by 2n) cannot achieve. The lost
    // additive constant is the gauge fixed downstream where L (or the
    // potentials) are known.
    let mut g_span = None;
    let g_hat = match gap_g_ladder(data, options.extrapolation) {
        Some(g_ladder) if g_ladder.len() >= 2 => {
            let dg = gap_derivative_fit(data, &g_ladder, theta_hat, beta_hat)?;
            let lo = dg.0[0];
            let hi = *dg.0.last().unwrap();
            g_span = Some(GSpan {
                lo,
                hi,
                spacing: (hi - lo) / real::<T>((dg.0.len() - 1).max(1) as f64),
            });
            gap_g_from_derivative(grid, &dg)?
        }
        _ => {
            // single stored index: evaluate the displayed approximant at its
            // own nodes and normalize it to the step-3 scale
            warnings.push(
                "single-index dataset: g_hat from the raw approximant without extrapolation"
                    .to_string(),
            );
            let n = data.n_max().ok_or(InverseError::InsufficientData(0))?;
            let curve = index_curve(data, n, |j, x| {
                let s = s_of_x(x, alpha).unwrap_or_else(|_| x);
                node_value_g(alpha, n, j, x, theta_hat, beta_hat, mu_hat(s))
            })?;
            let (g_raw, _, _) = combine_curves(std::slice::from_ref(&curve), grid, 0)?;
            let cross = |s: T| {
                two * shift * (mu_hat(s) + theta_hat) / pi.powf(two - a)
                    - two * (a * s) * shift * shift / (pi * pi)
            };
            let factor = a * a * pi.powf(two - two * a);
            let values: Vec<T> = grid
                .s_values()
                .iter()
                .zip(g_raw.values())
                .map(|(&s, &v)| factor * (v + cross(s)))
                .collect();
            GridFn::from_values(Arc::clone(grid), values)?
        }
    };
    let g_hat = if options.smoothing_window > 1 {
        smooth_moving_average(&g_hat, options.smoothing_window)
    } else {
        g_hat
    };

    Ok(LimitExtraction {
        f_hat,
        g_hat,
        theta_hat,
        beta_hat,
        used_indices: ladder,
        warnings,
        g_span,
    })
}

/// Indices used for the gap fit: four levels near n_max, 3n_max/4, n_max/2,
/// n_max/4, from whatever the dataset stores. The per-abscissa fit is kept
/// exactly determined (order = levels - 1): that annihilates every
/// contamination component lying in the polynomial basis, which an
/// overdetermined fit would smear into the slope. The coarsest level is the
/// abscissa base (so it enters exactly); the финer curves are interpolated,
/// where their own small spacing keeps the error far below the fit weights.
fn gap_g_ladder<T: Scalar>(data: &NodalDataset<T>, mode: Extrapolation) -> Option<Vec<i32>> {
    if mode == Extrapolation::LargestOnly {
        return None;
    }
    let n_max = data.n_max()?;
    let avail: Vec<i32> = data.indices().filter(|&n| n >= 4).collect();
    let mut picked: Vec<i32> = Vec::new();
    for target in [n_max, 3 * n_max / 4, n_max / 2, n_max / 4] {
        if target < 4 {
            continue;
        }
        let best = *avail
            .iter()
            .min_by_key(|&&n| ((n - target).abs(), n))
            .unwrap();
        if !picked.contains(&best) {
            picked.push(best);
        }
    }
    picked.sort_unstable();
    Some(picked)
}

/// Per-gap observables of one index: midpoints and R_j = pi / (s_{j+1} - s_j)
/// minus the leading eigenvalue. Everything that does not scale like
/// 1/(2 lambda_n) — the running mean of the potentials included — is
/// index-independent at fixed abscissa and falls into the constant term of
/// the cross-index fit.
struct GapCurve<T: Scalar> {
    u: T,
    mids: Vec<T>,
    values: Vec<T>,
    spline: CubicSpline<T>,
}

fn gap_curve<T: Scalar>(
    data: &NodalDataset<T>,
    n: i32,
    theta_hat: T,
    beta_hat: T,
) -> Result<GapCurve<T>, InverseError> {
    let alpha = data.alpha();
    let a = alpha.value();
    let pi = T::PI();
    let nodes = data.nodes(n).ok_or(InverseError::MissingIndex(n))?;
    let lambda_leading =
        real::<T>(n as f64) * a * pi.powf(T::one() - a) + a * (theta_hat - beta_hat) / pi.powf(a);
    let mut mids = Vec::with_capacity(nodes.len() - 1);
    let mut values = Vec::with_capacity(nodes.len() - 1);
    let mut s_prev = s_of_x(nodes[0], alpha)?;
    for &x in &nodes[1..] {
        let s = s_of_x(x, alpha)?;
        let ds = s - s_prev;
        mids.push(s_prev + ds / real::<T>(2.0));
        values.push(pi / ds - lambda_leading);
        s_prev = s;
    }
    let spline = CubicSpline::new(mids.clone(), values.clone())?;
    Ok(GapCurve {
        u: (real::<T>(2.0) * lambda_leading).recip(),
        mids,
        values,
        spline,
    })
}

/// D^alpha G, mean-free, at the midpoints of the coarsest ladder level.
///
/// The working fit is the exactly-determined quadratic across the three
/// dyadic levels at the coarsest level's own midpoints (full span, no curve
/// evaluated beyond its data). Its leading defect is the unabsorbed u^3 term
/// of the gap expansion; when the dataset also stores an n_max/8 level, that
/// coefficient is estimated by cubic fits over the interior the extra level
/// covers and subtracted everywhere, which keeps the correction seamless.
fn gap_derivative_fit<T: Scalar>(
    data: &NodalDataset<T>,
    ladder: &[i32],
    theta_hat: T,
    beta_hat: T,
) -> Result<(Vec<T>, Vec<T>), InverseError> {
    let curves: Vec<GapCurve<T>> = ladder
        .iter()
        .map(|&n| gap_curve(data, n, theta_hat, beta_hat))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&GapCurve<T>> = curves.iter().collect();
    let (mids, mut dg) = gap_fit_pass(&refs);

    // The full ladder has the best truncation order but large fit weights;
    // per-level noise (kernel-bearing models push node errors well above the
    // clean-model level) can blow up through them. When a lower-order dyadic
    // sub-ladder yields a visibly smoother derivative, prefer it.
    if curves.len() == 4 {
        let sub = [&curves[0], &curves[1], &curves[3]];
        let (_, dg3) = gap_fit_pass(&sub);
        if total_variation(&dg3) < real::<T>(0.5) * total_variation(&dg) {
            dg = dg3;
        }
    }

    let mean = dg.iter().copied().sum::<T>() / real::<T>(dg.len() as f64);
    for v in &mut dg {
        *v -= mean;
    }
    Ok((mids, dg))
}

fn total_variation<T: Scalar>(v: &[T]) -> T {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Exactly-determined per-abscissa fit at the coarsest curve's midpoints.
fn gap_fit_pass<T: Scalar>(curves: &[&GapCurve<T>]) -> (Vec<T>, Vec<T>) {
    let base = curves[0];
    let u_scale = base.u;
    let us: Vec<T> = curves.iter().map(|c| c.u / u_scale).collect();
    let order = curves.len() - 1;

    let mut mids = Vec::with_capacity(base.mids.len());
    let mut dg = Vec::with_capacity(base.mids.len());
    for (j, &m) in base.mids.iter().enumerate() {
        let vals: Vec<T> = curves
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { c.values[j] } else { c.spline.eval(m) })
            .collect();
        let sol = poly_fit_coeffs(&us, &vals, order);
        mids.push(m);
        dg.push(-sol[1] / u_scale);
    }
    (mids, dg)
}

/// Least-squares coefficients of a degree-`order` polynomial through
/// (u_i, v_i), constant term first.
fn poly_fit_coeffs<T: Scalar>(us: &[T], vals: &[T], order: usize) -> Vec<T> {
    let k = order + 1;
    let mut ata = vec![vec![T::zero(); k]; k];
    let mut atb = vec![T::zero(); k];
    for (&u, &v) in us.iter().zip(vals) {
        let mut pow = vec![T::one(); k];
        for i in 1..k {
            pow[i] = pow[i - 1] * u;
        }
        for i in 0..k {
            for j in 0..k {
                ata[i][j] += pow[i] * pow[j];
            }
            atb[i] += pow[i] * v;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| {
                ata[x][col]
                    .abs()
                    .partial_cmp(&ata[y][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        ata.swap(col, pivot);
        atb.swap(col, pivot);
        for row in col + 1..k {
            let w = ata[row][col] / ata[col][col];
            for c in col..k {
                ata[row][c] = ata[row][c] - w * ata[col][c];
            }
            atb[row] = atb[row] - w * atb[col];
        }
    }
    let mut sol = vec![T::zero(); k];
    for row in (0..k).rev() {
        let mut acc = atb[row];
        for c in row + 1..k {
            acc -= ata[row][c] * sol[c];
        }
        sol[row] = acc / ata[row][row];
    }
    sol
}

/// Integrate the mean-free D^alpha G into g_hat on the grid; g_hat(0) = 0 by
/// convention. The end knots beyond the fitted span come from windowed
/// parabolas in the x-coordinate with their fall capped at the vertex, so a
/// steeply decaying tail cannot be extrapolated through its own floor.
fn gap_g_from_derivative<T: Scalar>(
    grid: &Arc<SGrid<T>>,
    (mids, dg): &(Vec<T>, Vec<T>),
) -> Result<GridFn<T>, InverseError> {
    let a = grid.alpha().value();
    let alpha = grid.alpha();
    let m = mids.len();
    let s_max = grid.s_max();

    let window = (m / 4).clamp(3, 8);
    let to_x = |pairs: &[(T, T)]| -> Result<Vec<(T, T)>, InverseError> {
        pairs
            .iter()
            .map(|&(s, v)| Ok((crate::grid::x_of_s(s, alpha)?, v)))
            .collect()
    };
    let left: Vec<(T, T)> = (0..window).map(|i| (mids[i], dg[i])).collect();
    let right: Vec<(T, T)> = (m - window..m).map(|i| (mids[i], dg[i])).collect();
    let at0 = bounded_end_value(&to_x(&left)?, T::zero());
    let at_end = bounded_end_value(&to_x(&right)?, T::PI());
    let mut ks = Vec::with_capacity(m + 2);
    let mut kv = Vec::with_capacity(m + 2);
    ks.push(T::zero());
    kv.push(at0);
    ks.extend_from_slice(mids);
    kv.extend_from_slice(dg);
    ks.push(s_max);
    kv.push(at_end);
    let spline = CubicSpline::new(ks, kv)?;
    let sampled: Vec<T> = grid.s_values().iter().map(|&s| spline.eval(s)).collect();
    let integral = crate::calculus::cumulative_trapezoid(grid.h(), &sampled);
    let values: Vec<T> = integral.into_iter().map(|v| v * a).collect();
    Ok(GridFn::from_values(Arc::clone(grid), values)?)
}

/// Step-2 derivative recovery (mu(pi) = 0):
/// D^alpha mu = pi^{1-alpha} (D^alpha f + (alpha/pi)(theta - beta)).
pub fn recover_mu_derivative<T: Scalar>(
    f_hat: &GridFn<T>,
    theta_hat: T,
    beta_hat: T,
) -> Result<GridFn<T>, InverseError> {
    let alpha = f_hat.grid().alpha().value();
    let pi = T::PI();
    let scale = pi.powf(T::one() - alpha);
    let offset = alpha / pi * (theta_hat - beta_hat);
    let df = frac_derivative(f_hat)?;
    Ok(df.map(|v| scale * (v + offset)))
}

/// Step-3 inversion: |upsilon| = sqrt(max(0, D^alpha(g + alpha L)) / alpha).
/// Returns the recovered function and the count of clamped points.
pub fn recover_upsilon<T: Scalar>(
    g_hat: &GridFn<T>,
    l_known: &GridFn<T>,
) -> Result<(GridFn<T>, usize), InverseError> {
    if !g_hat.grid().same_grid(l_known.grid()) {
        return Err(InverseError::Grid(GridError::GridMismatch));
    }
    let alpha = g_hat.grid().alpha().value();
    let combined = g_hat.zip(l_known, |g, l| g + alpha * l)?;
    let derivative = frac_derivative(&combined)?;
    let mut clamped = 0usize;
    let values: Vec<T> = derivative
        .values()
        .iter()
        .map(|&d| {
            let radicand = d / alpha;
            if radicand < T::zero() {
                clamped += 1;
                T::zero()
            } else {
                radicand.sqrt()
            }
        })
        .collect();
    Ok((
        GridFn::from_values(Arc::clone(g_hat.grid()), values)?,
        clamped,
    ))
}

/// Step-4 potentials: p = upsilon + D^alpha mu, r = D^alpha mu - upsilon.
pub fn recover_pr<T: Scalar>(
    dmu_hat: &GridFn<T>,
    upsilon_hat: &GridFn<T>,
) -> Result<(GridFn<T>, GridFn<T>), InverseError> {
    let p = dmu_hat.zip(upsilon_hat, |d, u| d + u)?;
    let r = dmu_hat.zip(upsilon_hat, |d, u| d - u)?;
    Ok((p, r))
}

/// Step-4 alternative with known potentials:
/// L = upsilon(0) sin(2 theta) + int_0^x upsilon^2 - g/alpha.
pub fn recover_l<T: Scalar>(
    g_hat: &GridFn<T>,
    upsilon: &GridFn<T>,
    theta: T,
) -> Result<GridFn<T>, InverseError> {
    if !g_hat.grid().same_grid(upsilon.grid()) {
        return Err(InverseError::Grid(GridError::GridMismatch));
    }
    let alpha = g_hat.grid().alpha().value();
    let two = real::<T>(2.0);
    let head = upsilon.first() * (two * theta).sin();
    let sq_int = frac_integral(&upsilon.map(|u| u * u));
    let values: Vec<T> = sq_int
        .values()
        .iter()
        .zip(g_hat.values())
        .map(|(&v2, &g)| head + v2 - g / alpha)
        .collect();
    Ok(GridFn::from_values(Arc::clone(g_hat.grid()), values)?)
}

/// What the caller already knows when reconstructing.
#[derive(Debug, Clone)]
pub enum KnownData<T: Scalar> {
    /// L(x) known: recover the potentials.
    OffdiagTrace(GridFn<T>),
    /// p and r known: recover L(x).
    Potentials { p: GridFn<T>, r: GridFn<T> },
}

#[derive(Debug, Clone, Default)]
pub struct ReconDiagnostics {
    pub clamped_points: usize,
    /// Additive constant applied to the recovered upsilon^2 so that its
    /// infimum over [0, pi] is zero (known-L mode): nodal data determines
    /// upsilon^2 only up to a constant, and this gauge is exact whenever the
    /// true half-difference of the potentials vanishes somewhere.
    pub upsilon_sq_gauge: f64,
    pub warnings: Vec<String>,
    pub used_indices: Vec<i32>,
}

/// Full reconstruction output. Exactly one of (p_hat, r_hat) and l_hat is
/// present, matching what was supplied as known.
#[derive(Debug, Clone)]
pub struct ReconstructionResult<T: Scalar> {
    pub theta_hat: T,
    pub beta_hat: T,
    pub f_hat: GridFn<T>,
    pub g_hat: GridFn<T>,
    pub dmu_hat: GridFn<T>,
    pub upsilon_abs_hat: GridFn<T>,
    pub p_hat: Option<GridFn<T>>,
    pub r_hat: Option<GridFn<T>>,
    pub l_hat: Option<GridFn<T>>,
    pub diagnostics: ReconDiagnostics,
}

/// Chain the reconstruction steps over a nodal dataset.
pub fn reconstruct<T: Scalar>(
    data: &NodalDataset<T>,
    known: &KnownData<T>,
    grid: &Arc<SGrid<T>>,
    options: &ExtractOptions,
) -> Result<ReconstructionResult<T>, InverseError> {
    let limits = extract_limits(data, grid, options)?;
    let dmu_hat = recover_mu_derivative(&limits.f_hat, limits.theta_hat, limits.beta_hat)?;

    let mut diagnostics = ReconDiagnostics {
        clamped_points: 0,
        upsilon_sq_gauge: 0.0,
        warnings: limits.warnings.clone(),
        used_indices: limits.used_indices.clone(),
    };

    let (g_hat, upsilon_abs_hat, p_hat, r_hat, l_hat) = match known {
        KnownData::OffdiagTrace(l_known) => {
            // Fix the additive gauge in upsilon^2: shift g by c x^alpha so
            // the radicand's infimum is zero, then invert.
            let g_fixed = gauge_fix_g(&limits.g_hat, l_known, limits.g_span, &mut diagnostics)?;
            let (ups, clamped) = recover_upsilon(&g_fixed, l_known)?;
            diagnostics.clamped_points = clamped;
            let (p, r) = recover_pr(&dmu_hat, &ups)?;
            (g_fixed, ups, Some(p), Some(r), None)
        }
        KnownData::Potentials { p, r } => {
            let upsilon = p.zip(r, |a, b| (a - b) / real::<T>(2.0))?;
            let l_raw = recover_l(&limits.g_hat, &upsilon, limits.theta_hat)?;
            // re-anchor at L(0) = 0 (true by definition; a no-op on exact g)
            let l0 = l_raw.first();
            let l_hat = l_raw.map(|v| v - l0);
            (
                limits.g_hat,
                upsilon.map(|u| u.abs()),
                None,
                None,
                Some(l_hat),
            )
        }
    };

    Ok(ReconstructionResult {
        theta_hat: limits.theta_hat,
        beta_hat: limits.beta_hat,
        f_hat: limits.f_hat,
        g_hat,
        dmu_hat,
        upsilon_abs_hat,
        p_hat,
        r_hat,
        l_hat,
        diagnostics,
    })
}

/// Shift g by c x^alpha (the direction nodal data cannot see) so that the
/// recovered upsilon^2 = D^alpha(g + alpha L)/alpha has infimum zero.
///
/// The infimum is estimated from the radicand over the data-supported span,
/// plus per-end floor estimates: at an end where the radicand is still
/// falling, upsilon^2 can keep dropping beyond the data, but — being
/// nonnegative and smooth — by no more than the vertex drop of the local
/// parabola in x. A raw extrapolation can cross below that floor and inflate
/// the gauge; the vertex bound cannot.
fn gauge_fix_g<T: Scalar>(
    g_hat: &GridFn<T>,
    l_known: &GridFn<T>,
    g_span: Option<GSpan<T>>,
    diagnostics: &mut ReconDiagnostics,
) -> Result<GridFn<T>, InverseError> {
    if !g_hat.grid().same_grid(l_known.grid()) {
        return Err(InverseError::Grid(GridError::GridMismatch));
    }
    let grid = g_hat.grid();
    let alpha = grid.alpha().value();
    let combined = g_hat.zip(l_known, |g, l| g + alpha * l)?;
    let derivative = frac_derivative(&combined)?;
    let span = g_span.unwrap_or(GSpan {
        lo: T::zero(),
        hi: grid.s_max(),
        spacing: T::zero(),
    });

    // in-span samples; the segments adjacent to the extension junctions are
    // excluded from the minimum (residual spline bending lives there)
    let mut min_radicand = T::infinity();
    let mut samples: Vec<(T, T)> = Vec::new(); // (x, radicand) inside the span
    for k in 0..grid.n_points() {
        let s = grid.s(k);
        if s < span.lo || s > span.hi {
            continue;
        }
        let rad = derivative.value(k) / alpha;
        samples.push((grid.x(k), rad));
        let margin = span.spacing + span.spacing;
        if s >= span.lo + margin && s <= span.hi - margin && rad < min_radicand {
            min_radicand = rad;
            if std::env::var_os("CONFDIRAC_GAUGE_DEBUG").is_some() {
                eprintln!("gauge debug: span min {rad:?} at s={s:?}");
            }
        }
    }

    // Per-end floors from a windowed parabola in x, discounted by how large
    // the predicted unseen drop is against the drop already observed inside
    // the window: a floor claim far below anything seen is mostly
    // extrapolation and is trusted proportionally less.
    let window = (samples.len() / 20).max(8).min(samples.len());
    let left: Vec<(T, T)> = samples[..window].to_vec();
    let right: Vec<(T, T)> = samples[samples.len() - window..].to_vec();
    for (end, toward) in [(left, T::zero()), (right, T::PI())] {
        if let Some(floor) = vertex_floor(&end, toward) {
            let edge_idx = if toward < end[0].0 { 0 } else { end.len() - 1 };
            let edge_v = end[edge_idx].1;
            let seen_range = end
                .iter()
                .map(|&(_, v)| v)
                .fold(T::neg_infinity(), T::max)
                - end.iter().map(|&(_, v)| v).fold(T::infinity(), T::min);
            let drop = (edge_v - floor).max(T::zero());
            let rel = drop / seen_range.max(T::epsilon());
            let trust = (T::one() + real::<T>(0.5) * rel * rel).recip();
            let adjusted = edge_v - trust * drop;
            if std::env::var_os("CONFDIRAC_GAUGE_DEBUG").is_some() {
                eprintln!(
                    "gauge debug: floor toward {toward:?}: raw {floor:?} edge {edge_v:?} rel {rel:?} adj {adjusted:?}"
                );
            }
            min_radicand = min_radicand.min(adjusted);
        }
    }

    let gauge = -min_radicand;
    if std::env::var_os("CONFDIRAC_GAUGE_DEBUG").is_some() {
        eprintln!(
            "gauge debug: span=({:?},{:?},{:?}) min={min_radicand:?}",
            span.lo, span.hi, span.spacing
        );
    }
    diagnostics.upsilon_sq_gauge = gauge.to_f64().unwrap_or(f64::NAN);
    let values: Vec<T> = grid
        .s_values()
        .iter()
        .zip(g_hat.values())
        .map(|(&s, &g)| g + gauge * (alpha * s))
        .collect();
    Ok(GridFn::from_values(Arc::clone(grid), values)?)
}

/// Quadratic least-squares fit t -> a t^2 + b t + c of (x, v) samples around
/// t = x - x0; returns (a, b, c).
fn quadratic_lsq<T: Scalar>(samples: &[(T, T)], x0: T) -> (T, T, T) {
    let n = real::<T>(samples.len() as f64);
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    let mut s4 = T::zero();
    let mut b0 = T::zero();
    let mut b1 = T::zero();
    let mut b2 = T::zero();
    for &(x, v) in samples {
        let t = x - x0;
        let t2 = t * t;
        s1 += t;
        s2 += t2;
        s3 += t2 * t;
        s4 += t2 * t2;
        b0 += v;
        b1 += v * t;
        b2 += v * t2;
    }
    let mut m = [[s4, s3, s2, b2], [s3, s2, s1, b1], [s2, s1, n, b0]];
    for col in 0..2 {
        let piv = (col..3)
            .max_by(|&i, &j| {
                m[i][col]
                    .abs()
                    .partial_cmp(&m[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..3 {
            let w = m[row][col] / m[col][col];
            for c in col..4 {
                m[row][c] = m[row][c] - w * m[col][c];
            }
        }
    }
    let c_coef = m[2][3] / m[2][2];
    let b_coef = (m[1][3] - m[1][2] * c_coef) / m[1][1];
    let a_coef = (m[0][3] - m[0][1] * b_coef - m[0][2] * c_coef) / m[0][0];
    (a_coef, b_coef, c_coef)
}

/// Value at the boundary abscissa `toward` of the windowed parabola through
/// the end samples, with its fall capped at the vertex (upward-opening) or
/// continued linearly (downward-opening) so the continuation cannot dive.
fn bounded_end_value<T: Scalar>(samples: &[(T, T)], toward: T) -> T {
    let x0 = samples[0].0;
    let (a, b, c) = quadratic_lsq(samples, x0);
    let edge = if toward < x0 {
        samples[0].0
    } else {
        samples[samples.len() - 1].0
    };
    let te = edge - x0;
    let two = real::<T>(2.0);
    let slope = two * a * te + b;
    let eval = |t: T| a * t * t + b * t + c;
    let t_boundary = toward - x0;
    let falling = if toward < edge {
        slope > T::zero()
    } else {
        slope < T::zero()
    };
    if !falling {
        return eval(t_boundary);
    }
    if a > T::zero() {
        let t_vertex = -b / (two * a);
        let in_range = if toward < edge {
            t_vertex > t_boundary && t_vertex < te
        } else {
            t_vertex > te && t_vertex < t_boundary
        };
        eval(if in_range { t_vertex } else { t_boundary })
    } else {
        eval(te) + slope * (t_boundary - te)
    }
}

/// Boundary-ward floor estimate of the radicand: the bounded end value when
/// the edge falls toward the boundary, otherwise nothing new.
fn vertex_floor<T: Scalar>(samples: &[(T, T)], toward: T) -> Option<T> {
    if samples.len() < 3 {
        return None;
    }
    let x0 = samples[0].0;
    let (a, b, _) = quadratic_lsq(samples, x0);
    let edge = if toward < x0 {
        samples[0].0
    } else {
        samples[samples.len() - 1].0
    };
    let te = edge - x0;
    let slope = real::<T>(2.0) * a * te + b;
    let falling = if toward < edge {
        slope > T::zero()
    } else {
        slope < T::zero()
    };
    falling.then(|| bounded_end_value(samples, toward))
}
