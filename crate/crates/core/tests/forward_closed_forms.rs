//! Closed-form checks of the forward solver: zero-potential and constant
//! potential models have explicit traces, characteristic functions,
//! eigenvalues, and nodal points.

mod common;

use common::sup_gap;
use confdirac::{
    char_delta, collect_nodes, find_eigenvalues, solve_phi, Model, ModelSpec,
};

const PI: f64 = std::f64::consts::PI;
const GRID: usize = 16385;

fn free_model(alpha: f64) -> Model<f64> {
    Model::from_spec(&ModelSpec::free(alpha, 0.0, 0.0, GRID)).unwrap()
}

fn constant_model(alpha: f64, c: f64) -> Model<f64> {
    let mut spec = ModelSpec::free(alpha, 0.0, 0.0, GRID);
    spec.p = format!("{c}");
    spec.r = format!("{c}");
    Model::from_spec(&spec).unwrap()
}

#[test]
fn traces_match_closed_forms() {
    for alpha in [0.5, 1.0] {
        let model = free_model(alpha);
        let lambda = 5.0;
        let tr = solve_phi(&model, lambda).unwrap();
        let s = model.grid().s_values();
        let exact1: Vec<f64> = s.iter().map(|&v| (lambda * v).cos()).collect();
        let exact2: Vec<f64> = s.iter().map(|&v| (lambda * v).sin()).collect();
        assert!(sup_gap(tr.phi1.values(), &exact1) <= 1e-7);
        assert!(sup_gap(tr.phi2.values(), &exact2) <= 1e-7);

        let c = 0.3;
        let model = constant_model(alpha, c);
        let tr = solve_phi(&model, lambda).unwrap();
        let exact1: Vec<f64> = s.iter().map(|&v| ((lambda - c) * v).cos()).collect();
        let exact2: Vec<f64> = s.iter().map(|&v| ((lambda - c) * v).sin()).collect();
        assert!(sup_gap(tr.phi1.values(), &exact1) <= 1e-7);
        assert!(sup_gap(tr.phi2.values(), &exact2) <= 1e-7);
    }
}

#[test]
fn characteristic_function_closed_forms() {
    for alpha in [0.5, 1.0] {
        let s_max = PI.powf(alpha) / alpha;
        let model = free_model(alpha);
        for lambda in [1.3, 2.7, 6.1] {
            let delta = char_delta(&model, lambda).unwrap();
            assert!(
                (delta - (lambda * s_max).sin()).abs() <= 1e-7,
                "free delta at alpha {alpha}, lambda {lambda}"
            );
        }
        let c = 0.3;
        let model = constant_model(alpha, c);
        for lambda in [1.3, 2.7, 6.1] {
            let delta = char_delta(&model, lambda).unwrap();
            assert!(
                (delta - ((lambda - c) * s_max).sin()).abs() <= 1e-7,
                "constant delta at alpha {alpha}, lambda {lambda}"
            );
        }
    }
}

#[test]
fn eigenvalues_to_n_fifty() {
    for alpha in [0.5, 1.0] {
        let shift = alpha * PI.powf(1.0 - alpha);
        let model = free_model(alpha);
        let spectrum = find_eigenvalues(&model, 1, 50).unwrap();
        assert!(spectrum.failures.is_empty());
        assert_eq!(spectrum.entries.len(), 50);
        for e in &spectrum.entries {
            let exact = e.n as f64 * shift;
            assert!(
                (e.lambda - exact).abs() <= 1e-7,
                "free lambda_{} at alpha {alpha}: {} vs {exact}",
                e.n,
                e.lambda
            );
        }

        let c = 0.3;
        let model = constant_model(alpha, c);
        let spectrum = find_eigenvalues(&model, 1, 50).unwrap();
        assert!(spectrum.failures.is_empty());
        for e in &spectrum.entries {
            let exact = e.n as f64 * shift + c;
            assert!(
                (e.lambda - exact).abs() <= 1e-7,
                "constant lambda_{} at alpha {alpha}: {} vs {exact}",
                e.n,
                e.lambda
            );
        }
    }
}

#[test]
fn nodes_match_the_lattice() {
    // (x_n^j)^alpha = (j + 1/2) pi^alpha / n for both model families
    for alpha in [0.5, 1.0] {
        for (label, model) in [
            ("free", free_model(alpha)),
            ("constant", constant_model(alpha, 0.3)),
        ] {
            let spectrum = find_eigenvalues(&model, 1, 50).unwrap();
            let nodal = collect_nodes(&model, &spectrum).unwrap();
            assert!(nodal.count_mismatches.is_empty(), "{label} alpha {alpha}");
            assert_eq!(nodal.n_min, Some(1));
            for line in &nodal.lines {
                let n = line.n as f64;
                for (j, &x) in line.nodes.iter().enumerate() {
                    let exact = ((j as f64 + 0.5) * PI.powf(alpha) / n).powf(1.0 / alpha);
                    assert!(
                        (x - exact).abs() <= 1e-8,
                        "{label} node ({}, {j}) at alpha {alpha}: {x} vs {exact}",
                        line.n
                    );
                }
            }
        }
    }
}

#[test]
fn beta_boundary_moves_the_spectrum() {
    // beta = 0.4 turns the free characteristic function into sin(lambda S + 0.4)
    let spec = ModelSpec::<f64>::free(1.0, 0.0, 0.4, 8193);
    let model = Model::from_spec(&spec).unwrap();
    let spectrum = find_eigenvalues(&model, 1, 10).unwrap();
    for e in &spectrum.entries {
        let exact = e.n as f64 - 0.4 / PI;
        assert!((e.lambda - exact).abs() <= 1e-7);
    }
}
