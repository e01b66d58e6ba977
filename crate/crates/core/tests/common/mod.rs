//! Shared harness pieces for the integration tests: solver-generated nodal
//! datasets, mu(pi) = 0 enforcement, and interior sup-norm comparison.

use std::collections::BTreeMap;
use std::sync::Arc;

use confdirac::{
    collect_nodes, find_eigenvalues, potential_functionals, GridFn, Model, ModelSpec,
    NodalDataset, SGrid, Scalar,
};

pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sup-norm of f - truth over x in [0.1 pi, 0.9 pi].
pub fn interior_sup_err(f: &GridFn<f64>, truth: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    let lo = 0.1 * std::f64::consts::PI;
    let hi = 0.9 * std::f64::consts::PI;
    let mut worst: f64 = 0.0;
    for k in 0..grid.n_points() {
        let x = grid.x(k);
        if x >= lo && x <= hi {
            worst = worst.max((f.value(k) - truth(x)).abs());
        }
    }
    worst
}

/// Solve the spectrum at exactly the given indices and extract their nodes.
pub fn solver_dataset(model: &Model<f64>, indices: &[i32]) -> NodalDataset<f64> {
    let mut entries = BTreeMap::new();
    for &n in indices {
        let spectrum = find_eigenvalues(model, n, n).expect("eigenvalue search");
        assert!(
            spectrum.failures.is_empty(),
            "index {n} failed: {:?}",
            spectrum.failures
        );
        let nodal = collect_nodes(model, &spectrum).expect("node extraction");
        let line = &nodal.lines[0];
        assert_eq!(
            line.nodes.len(),
            n as usize,
            "index {n} produced {} nodes",
            line.nodes.len()
        );
        entries.insert(n, line.nodes.clone());
    }
    NodalDataset::new(model.alpha(), entries).expect("valid dataset")
}

/// Constant to subtract from both potentials so that mu(pi) = 0, computed on
/// the model's own grid: c = alpha mu(pi) / pi^alpha.
pub fn mu_pi_shift(model: &Model<f64>) -> f64 {
    let fns = potential_functionals(model).expect("functionals");
    let a = model.alpha().value();
    a * fns.mu_pi() / std::f64::consts::PI.powf(a)
}

/// Build a model, then (if needed) shift p and r by the constant that
/// enforces mu(pi) = 0; upsilon is unchanged by the shift.
pub fn model_with_mu_pi_zero(spec: &ModelSpec<f64>) -> (Model<f64>, f64) {
    let raw = Model::from_spec(spec).expect("model");
    let c = mu_pi_shift(&raw);
    if c.abs() < 1e-13 {
        return (raw, 0.0);
    }
    let mut shifted = spec.clone();
    shifted.p = format!("{} - ({:.17e})", spec.p, c);
    shifted.r = format!("{} - ({:.17e})", spec.r, c);
    let model = Model::from_spec(&shifted).expect("shifted model");
    // one more pass: the shift constant itself was computed by quadrature
    let c2 = mu_pi_shift(&model);
    assert!(
        c2.abs() < 1e-10,
        "mu(pi) residual {c2:e} after enforcement"
    );
    (model, c)
}

#[allow(dead_code)]
pub fn zeros_on(grid: &Arc<SGrid<f64>>) -> GridFn<f64> {
    GridFn::zeros(Arc::clone(grid))
}
