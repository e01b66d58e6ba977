//! Deterministic JSON and CSV writers: fixed float formatting, fixed key
//! order, no timestamps.

use confdirac::io::fmt_float;
use confdirac::{GridFn, NodalSet, PotentialFunctionals, Spectrum};

pub fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn spectrum_csv(
    spectrum: &Spectrum<f64>,
    fns: &PotentialFunctionals<f64>,
    theta: f64,
    beta: f64,
) -> String {
    let mut out = String::from("n,lambda_n,lambda_est_order1,lambda_est_order2,residual\n");
    for e in &spectrum.entries {
        let est1 =
            confdirac::eigenvalue_estimate(fns, theta, beta, e.n, confdirac::EstimateOrder::Order1);
        let est2 =
            confdirac::eigenvalue_estimate(fns, theta, beta, e.n, confdirac::EstimateOrder::Order2);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.n,
            fmt_float(e.lambda),
            fmt_float(est1),
            fmt_float(est2),
            fmt_float(e.residual)
        ));
    }
    out
}

pub fn spectrum_json(spectrum: &Spectrum<f64>, alpha: f64, n_lo: i32, n_hi: i32) -> String {
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"alpha\": {},\n", fmt_float(alpha)));
    out.push_str(&format!("  \"n_lo\": {n_lo},\n  \"n_hi\": {n_hi},\n"));
    out.push_str("  \"entries\": [\n");
    for (i, e) in spectrum.entries.iter().enumerate() {
        out.push_str(&format!(
            "    {{\"n\": {}, \"lambda\": {}, \"residual\": {}}}{}\n",
            e.n,
            fmt_float(e.lambda),
            fmt_float(e.residual),
            if i + 1 < spectrum.entries.len() { "," } else { "" }
        ));
    }
    out.push_str("  ],\n  \"failures\": [\n");
    for (i, f) in spectrum.failures.iter().enumerate() {
        out.push_str(&format!(
            "    {{\"n\": {}, \"message\": {}}}{}\n",
            f.n,
            json_str(&f.message),
            if i + 1 < spectrum.failures.len() { "," } else { "" }
        ));
    }
    out.push_str("  ]\n}\n");
    out
}

pub fn nodes_vs_asymptotic_csv(
    nodal: &NodalSet<f64>,
    fns: &PotentialFunctionals<f64>,
    theta: f64,
    beta: f64,
) -> String {
    let mut out = String::from("n,j,x_solver,x_asymptotic,n2_gap\n");
    for line in &nodal.lines {
        if line.n < 1 || line.nodes.len() != line.n as usize {
            continue;
        }
        for (j, &x) in line.nodes.iter().enumerate() {
            let est = confdirac::node_estimate(fns, theta, beta, line.n, j as i32)
                .unwrap_or(f64::NAN);
            let gap = (line.n as f64).powi(2) * (x - est).abs();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                line.n,
                j,
                fmt_float(x),
                fmt_float(est),
                fmt_float(gap)
            ));
        }
    }
    out
}

pub fn gridfn_csv_file(f: &GridFn<f64>, name: &str) -> String {
    confdirac::io::gridfn_csv(f, name)
}
