mod common;
use common::model_with_mu_pi_zero;
use confdirac::{find_eigenvalues, find_nodes, node_estimate, potential_functionals, solve_phi, ModelSpec};

#[test]
#[ignore]
fn c5_sequences() {
    for (p, r, alpha) in [("cos(2*x)", "cos(2*x)", 1.0), ("sin(x)", "-sin(x)", 0.5)] {
        let mut spec = ModelSpec::<f64>::free(alpha, 0.0, 0.0, 8193);
        spec.p = p.into();
        spec.r = r.into();
        let (model, _) = model_with_mu_pi_zero(&spec);
        let fns = potential_functionals(&model).unwrap();
        for x_star in [0.8f64, 1.5, 2.2] {
            let mut row = String::new();
            for n in [8i32, 16, 32, 64] {
                let lambda = find_eigenvalues(&model, n, n).unwrap().entries[0].lambda;
                let trace = solve_phi(&model, lambda).unwrap();
                let nodes = find_nodes(&trace);
                let (j, &xs) = nodes.iter().enumerate().min_by(|a, b| (a.1 - x_star).abs().partial_cmp(&(b.1 - x_star).abs()).unwrap()).unwrap();
                let est = node_estimate(&fns, 0.0, 0.0, n, j as i32).unwrap();
                row.push_str(&format!(" n{n}:{:.3e}", (n as f64).powi(2) * (xs - est).abs()));
            }
            println!("({p},{r}) a={alpha} x*={x_star}: {row}");
        }
    }
}
