//! The batch commands: spectrum, nodes, invert, roundtrip, selftest.
//!
//! Exit codes: 0 success, 1 configuration error (raised as an error by the
//! caller), 2 partial numerical failure, 3 insufficient data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use confdirac::io::fmt_float;
use confdirac::{
    collect_nodes, find_eigenvalues, frac_derivative, frac_integral, potential_functionals,
    AlphaOrder, Expression, ExtractOptions, Extrapolation, GridFn, InverseError, KnownData, Model,
    ModelSpec, NodalDataset, NodalSet, PotentialFunctionals, ReconstructionResult, SGrid, Spectrum,
};

use crate::config::{ExperimentConfig, KnownKind};
use crate::report;

pub struct Overrides {
    pub out: Option<PathBuf>,
    pub grid: Option<usize>,
}

fn build_model(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<Model<f64>> {
    let spec = ModelSpec {
        alpha: cfg.model.alpha,
        theta: cfg.model.theta,
        beta: cfg.model.beta,
        p: cfg.model.p.clone(),
        r: cfg.model.r.clone(),
        m11: cfg.model.m11.clone(),
        m12: cfg.model.m12.clone(),
        m21: cfg.model.m21.clone(),
        m22: cfg.model.m22.clone(),
        grid_points: overrides.grid.unwrap_or(cfg.solver.grid_points),
    };
    Model::from_spec(&spec).context("building the model")
}

fn out_dir(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<PathBuf> {
    let dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    // canonical form of the configuration that produced the outputs
    write(&dir, "config.txt", &cfg.serialize())?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn wants(cfg: &ExperimentConfig, format: &str) -> bool {
    cfg.output.formats.split(',').any(|f| f.trim() == format)
}

fn extrapolation_mode(cfg: &ExperimentConfig) -> Extrapolation {
    match cfg.inverse.extrapolation.as_str() {
        "two_point" => Extrapolation::TwoPoint,
        "largest" => Extrapolation::LargestOnly,
        _ => Extrapolation::Auto,
    }
}

struct SpectrumStage {
    model: Model<f64>,
    fns: PotentialFunctionals<f64>,
    spectrum: Spectrum<f64>,
}

fn run_spectrum_stage(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<SpectrumStage> {
    let model = build_model(cfg, overrides)?;
    let fns = potential_functionals(&model)?;
    let spectrum = find_eigenvalues(&model, cfg.spectrum.n_lo, cfg.spectrum.n_hi)?;
    Ok(SpectrumStage { model, fns, spectrum })
}

fn write_spectrum_outputs(
    stage: &SpectrumStage,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<()> {
    let theta = stage.model.theta();
    let beta = stage.model.beta();
    if wants(cfg, "csv") {
        write(
            dir,
            "spectrum.csv",
            &report::spectrum_csv(&stage.spectrum, &stage.fns, theta, beta),
        )?;
    }
    if wants(cfg, "json") {
        write(
            dir,
            "spectrum.json",
            &report::spectrum_json(
                &stage.spectrum,
                cfg.model.alpha,
                cfg.spectrum.n_lo,
                cfg.spectrum.n_hi,
            ),
        )?;
    }
    Ok(())
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<i32> {
    let dir = out_dir(cfg, overrides)?;
    let stage = run_spectrum_stage(cfg, overrides)?;
    write_spectrum_outputs(&stage, cfg, &dir)?;
    if stage.spectrum.failures.is_empty() {
        Ok(0)
    } else {
        eprintln!(
            "{} of {} indices failed root bracketing",
            stage.spectrum.failures.len(),
            cfg.spectrum.n_hi - cfg.spectrum.n_lo + 1
        );
        Ok(2)
    }
}

struct NodesStage {
    stage: SpectrumStage,
    nodal: NodalSet<f64>,
    dataset: NodalDataset<f64>,
    dropped: Vec<i32>,
}

fn run_nodes_stage(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<NodesStage> {
    let stage = run_spectrum_stage(cfg, overrides)?;
    let nodal = collect_nodes(&stage.model, &stage.spectrum)?;
    let (dataset, dropped) = NodalDataset::from_nodal_set(stage.model.alpha(), &nodal);
    Ok(NodesStage {
        stage,
        nodal,
        dataset,
        dropped,
    })
}

fn write_nodes_outputs(nodes: &NodesStage, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write(dir, "nodes.json", &confdirac::io::write_nodal_json(&nodes.dataset))?;
    if wants(cfg, "csv") {
        write(
            dir,
            "nodes_vs_asymptotic.csv",
            &report::nodes_vs_asymptotic_csv(
                &nodes.nodal,
                &nodes.stage.fns,
                nodes.stage.model.theta(),
                nodes.stage.model.beta(),
            ),
        )?;
    }
    Ok(())
}

pub fn cmd_nodes(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<i32> {
    let dir = out_dir(cfg, overrides)?;
    let nodes = run_nodes_stage(cfg, overrides)?;
    write_spectrum_outputs(&nodes.stage, cfg, &dir)?;
    write_nodes_outputs(&nodes, cfg, &dir)?;
    let ok = nodes.stage.spectrum.failures.is_empty() && nodes.dropped.is_empty();
    if !ok {
        eprintln!(
            "partial failure: {} spectrum failures, dropped node lines {:?}",
            nodes.stage.spectrum.failures.len(),
            nodes.dropped
        );
    }
    Ok(if ok { 0 } else { 2 })
}

struct InvertProducts {
    rec: ReconstructionResult<f64>,
    errors: Vec<(String, f64)>,
    mu_pi: f64,
}

fn interior_sup(f: &GridFn<f64>, truth: impl Fn(f64) -> f64) -> f64 {
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

fn run_invert_stage(
    cfg: &ExperimentConfig,
    overrides: &Overrides,
    dataset: &NodalDataset<f64>,
) -> Result<InvertProducts, InverseError> {
    let grid = SGrid::shared(
        AlphaOrder::new(cfg.model.alpha).map_err(InverseError::Grid)?,
        overrides.grid.unwrap_or(cfg.solver.grid_points),
    )
    .map_err(InverseError::Grid)?;
    let alpha = cfg.model.alpha;
    let eval = |src: &str, x: f64| -> f64 {
        Expression::parse(src)
            .ok()
            .and_then(|e| e.eval_with_alpha(x, 0.0, alpha).ok())
            .unwrap_or(f64::NAN)
    };
    let known = match cfg.inverse.known {
        KnownKind::OffdiagTrace => KnownData::OffdiagTrace(
            GridFn::sample(Arc::clone(&grid), |x| eval(&cfg.inverse.l, x))
                .map_err(InverseError::Grid)?,
        ),
        KnownKind::Potentials => KnownData::Potentials {
            p: GridFn::sample(Arc::clone(&grid), |x| eval(&cfg.model.p, x))
                .map_err(InverseError::Grid)?,
            r: GridFn::sample(Arc::clone(&grid), |x| eval(&cfg.model.r, x))
                .map_err(InverseError::Grid)?,
        },
    };
    let options = ExtractOptions {
        extrapolation: extrapolation_mode(cfg),
        smoothing_window: cfg.inverse.smoothing_window,
    };
    let rec = confdirac::reconstruct(dataset, &known, &grid, &options)?;

    // error norms against the configured truth expressions
    let p_truth = |x: f64| eval(&cfg.model.p, x);
    let r_truth = |x: f64| eval(&cfg.model.r, x);
    let dmu_truth = |x: f64| 0.5 * (p_truth(x) + r_truth(x));
    let ups_truth = |x: f64| (0.5 * (p_truth(x) - r_truth(x))).abs();
    let mut errors = vec![
        ("theta_hat".to_string(), (rec.theta_hat - cfg.model.theta).abs()),
        ("beta_hat".to_string(), (rec.beta_hat - cfg.model.beta).abs()),
        ("dmu_hat".to_string(), interior_sup(&rec.dmu_hat, dmu_truth)),
        (
            "upsilon_abs_hat".to_string(),
            interior_sup(&rec.upsilon_abs_hat, ups_truth),
        ),
    ];
    if let (Some(p_hat), Some(r_hat)) = (&rec.p_hat, &rec.r_hat) {
        errors.push(("p_hat".to_string(), interior_sup(p_hat, p_truth)));
        errors.push(("r_hat".to_string(), interior_sup(r_hat, r_truth)));
    }
    if let Some(l_hat) = &rec.l_hat {
        // L truth from the kernel's antisymmetric diagonal trace
        let trace = |x: f64| {
            Expression::parse(&cfg.model.m12)
                .ok()
                .and_then(|e| e.eval_with_alpha(x, x, alpha).ok())
                .unwrap_or(f64::NAN)
                - Expression::parse(&cfg.model.m21)
                    .ok()
                    .and_then(|e| e.eval_with_alpha(x, x, alpha).ok())
                    .unwrap_or(f64::NAN)
        };
        let l_truth = frac_integral(
            &GridFn::sample(Arc::clone(&grid), trace).map_err(InverseError::Grid)?,
        );
        let worst = l_hat
            .values()
            .iter()
            .zip(l_truth.values())
            .zip(grid.x_values())
            .filter(|(_, &x)| {
                x >= 0.1 * std::f64::consts::PI && x <= 0.9 * std::f64::consts::PI
            })
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0f64, f64::max);
        errors.push(("l_hat".to_string(), worst));
    }

    let mu_pi = {
        let sum = GridFn::sample(Arc::clone(&grid), |x| 0.5 * (p_truth(x) + r_truth(x)))
            .map_err(InverseError::Grid)?;
        frac_integral(&sum).last()
    };

    Ok(InvertProducts { rec, errors, mu_pi })
}

fn write_invert_outputs(
    products: &InvertProducts,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<()> {
    let rec = &products.rec;
    let mut files = Vec::new();
    if wants(cfg, "csv") {
        for (name, f) in [
            ("f_hat", Some(&rec.f_hat)),
            ("g_hat", Some(&rec.g_hat)),
            ("dmu_hat", Some(&rec.dmu_hat)),
            ("upsilon_abs_hat", Some(&rec.upsilon_abs_hat)),
            ("p_hat", rec.p_hat.as_ref()),
            ("r_hat", rec.r_hat.as_ref()),
            ("l_hat", rec.l_hat.as_ref()),
        ] {
            if let Some(f) = f {
                let file = format!("{name}.csv");
                write(dir, &file, &report::gridfn_csv_file(f, name))?;
                files.push(file);
            }
        }
    }

    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"alpha\": {},", fmt_float(cfg.model.alpha));
    let _ = writeln!(out, "  \"n_max\": {},", cfg.inverse.n_max);
    let _ = writeln!(
        out,
        "  \"known\": {},",
        report::json_str(match cfg.inverse.known {
            KnownKind::OffdiagTrace => "L",
            KnownKind::Potentials => "pr",
        })
    );
    let _ = writeln!(out, "  \"theta_hat\": {},", fmt_float(rec.theta_hat));
    let _ = writeln!(out, "  \"beta_hat\": {},", fmt_float(rec.beta_hat));
    let _ = writeln!(
        out,
        "  \"grid\": {{\"points\": {}, \"s_max\": {}}},",
        rec.f_hat.grid().n_points(),
        fmt_float(rec.f_hat.grid().s_max())
    );
    let _ = writeln!(out, "  \"mu_pi_of_truth\": {},", fmt_float(products.mu_pi));
    let _ = writeln!(out, "  \"diagnostics\": {{");
    let _ = writeln!(
        out,
        "    \"clamped_points\": {},",
        rec.diagnostics.clamped_points
    );
    let _ = writeln!(
        out,
        "    \"upsilon_sq_gauge\": {},",
        fmt_float(rec.diagnostics.upsilon_sq_gauge)
    );
    let indices: Vec<String> = rec
        .diagnostics
        .used_indices
        .iter()
        .map(|n| n.to_string())
        .collect();
    let _ = writeln!(out, "    \"used_indices\": [{}],", indices.join(", "));
    let warnings: Vec<String> = rec
        .diagnostics
        .warnings
        .iter()
        .map(|w| report::json_str(w))
        .collect();
    let _ = writeln!(out, "    \"warnings\": [{}]", warnings.join(", "));
    let _ = writeln!(out, "  }},");
    let _ = writeln!(out, "  \"interior_sup_errors\": {{");
    for (i, (name, value)) in products.errors.iter().enumerate() {
        let _ = writeln!(
            out,
            "    {}: {}{}",
            report::json_str(name),
            fmt_float(*value),
            if i + 1 < products.errors.len() { "," } else { "" }
        );
    }
    let _ = writeln!(out, "  }},");
    let file_names: Vec<String> = files.iter().map(|f| report::json_str(f)).collect();
    let _ = writeln!(out, "  \"files\": [{}]", file_names.join(", "));
    out.push_str("}\n");
    write(dir, "reconstruction.json", &out)
}

pub fn cmd_invert(
    cfg: &ExperimentConfig,
    overrides: &Overrides,
    nodes_path: &Path,
) -> Result<i32> {
    let dir = out_dir(cfg, overrides)?;
    let text = fs::read_to_string(nodes_path)
        .with_context(|| format!("reading {}", nodes_path.display()))?;
    let dataset = confdirac::io::read_nodal_json(&text)?;
    match run_invert_stage(cfg, overrides, &dataset) {
        Ok(products) => {
            write_invert_outputs(&products, cfg, &dir)?;
            Ok(0)
        }
        Err(InverseError::InsufficientData(n)) => {
            eprintln!("insufficient nodal data: n_max = {n}, need at least 16");
            Ok(3)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_roundtrip(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<i32> {
    let dir = out_dir(cfg, overrides)?;
    let nodes = run_nodes_stage(cfg, overrides)?;
    write_spectrum_outputs(&nodes.stage, cfg, &dir)?;
    write_nodes_outputs(&nodes, cfg, &dir)?;

    let products = match run_invert_stage(cfg, overrides, &nodes.dataset) {
        Ok(p) => p,
        Err(InverseError::InsufficientData(n)) => {
            eprintln!("insufficient nodal data: n_max = {n}, need at least 16");
            return Ok(3);
        }
        Err(e) => return Err(e.into()),
    };
    write_invert_outputs(&products, cfg, &dir)?;

    // verdict table
    let mut table = String::new();
    let _ = writeln!(table, "{:<22} {:>14} {:>12} {:>8}", "metric", "value", "threshold", "status");
    let mut all_ok = true;
    let mut row = |name: &str, value: f64, tol: f64| {
        let ok = value <= tol;
        all_ok &= ok;
        let _ = writeln!(
            table,
            "{:<22} {:>14.6e} {:>12.2e} {:>8}",
            name,
            value,
            tol,
            if ok { "pass" } else { "FAIL" }
        );
    };
    for (name, value) in &products.errors {
        let tol = match name.as_str() {
            "theta_hat" => cfg.verify.theta_tol,
            "beta_hat" => cfg.verify.beta_tol,
            _ => cfg.verify.sup_tol,
        };
        row(name, *value, tol);
    }
    if products.mu_pi.abs() > 1e-6 {
        let _ = writeln!(
            table,
            "note: mu(pi) = {:.3e}; the reconstruction assumes mu(pi) = 0",
            products.mu_pi
        );
    }
    let partial = !nodes.stage.spectrum.failures.is_empty() || !nodes.dropped.is_empty();
    if partial {
        let _ = writeln!(table, "note: partial forward failures occurred");
    }
    print!("{table}");
    write(&dir, "verdict.txt", &table)?;
    Ok(if all_ok && !partial { 0 } else { 2 })
}

pub fn cmd_selftest() -> Result<i32> {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "ok  " } else { "FAIL" }, name);
        if !ok {
            failures += 1;
        }
    };

    for alpha in [0.3, 0.5, 0.8, 1.0] {
        let grid = SGrid::shared(AlphaOrder::new(alpha).unwrap(), 4097).unwrap();
        let smax = grid.s_max();
        let functions: Vec<(&str, Box<dyn Fn(f64) -> f64>)> = vec![
            ("sin(s)", Box::new(|s: f64| s.sin())),
            ("cos(s)", Box::new(|s: f64| s.cos())),
            ("exp(-s/2)", Box::new(|s: f64| (-s / 2.0).exp())),
            ("1/(1+s)", Box::new(|s: f64| 1.0 / (1.0 + s))),
            ("s(1-s/S)", Box::new(move |s: f64| s * (1.0 - s / smax))),
        ];
        // round trip of the coordinate maps at every grid point
        let roundtrip_ok = grid
            .x_values()
            .iter()
            .zip(grid.s_values())
            .all(|(&x, &s)| (confdirac::s_of_x(x, grid.alpha()).unwrap() - s).abs() <= 1e-12);
        check(&format!("coordinate round trip (alpha = {alpha})"), roundtrip_ok);

        let mut worst_d_i: f64 = 0.0;
        let mut worst_i_d: f64 = 0.0;
        let mut worst_parts: f64 = 0.0;
        for (i, (_, f)) in functions.iter().enumerate() {
            let fv = GridFn::from_values(
                Arc::clone(&grid),
                grid.s_values().iter().map(|&s| f(s)).collect(),
            )
            .unwrap();
            let di = frac_derivative(&frac_integral(&fv)).unwrap();
            worst_d_i = worst_d_i.max(
                di.values()
                    .iter()
                    .zip(fv.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
            let id = frac_integral(&frac_derivative(&fv).unwrap());
            worst_i_d = worst_i_d.max(
                id.values()
                    .iter()
                    .zip(fv.values())
                    .map(|(a, b)| (a - (b - fv.value(0))).abs())
                    .fold(0.0, f64::max),
            );
            let (_, g) = &functions[(i + 1) % functions.len()];
            let gv = GridFn::from_values(
                Arc::clone(&grid),
                grid.s_values().iter().map(|&s| g(s)).collect(),
            )
            .unwrap();
            let left = frac_integral(&fv.zip(&frac_derivative(&gv).unwrap(), |a, b| a * b).unwrap())
                .last()
                + frac_integral(&gv.zip(&frac_derivative(&fv).unwrap(), |a, b| a * b).unwrap())
                    .last();
            let boundary = fv.last() * gv.last() - fv.value(0) * gv.value(0);
            worst_parts = worst_parts.max((left - boundary).abs());
        }
        check(
            &format!("derivative of integral (alpha = {alpha}), sup {worst_d_i:.2e}"),
            worst_d_i <= 1e-6,
        );
        check(
            &format!("integral of derivative (alpha = {alpha}), sup {worst_i_d:.2e}"),
            worst_i_d <= 1e-6,
        );
        check(
            &format!("integration by parts (alpha = {alpha}), sup {worst_parts:.2e}"),
            worst_parts <= 1e-6,
        );
    }

    // oscillatory decay at alpha = 0.5
    {
        let grid = SGrid::shared(AlphaOrder::new(0.5).unwrap(), 4097).unwrap();
        let f = |s: f64| 1.0 / (1.0 + s);
        let mut prev = f64::INFINITY;
        let mut ok = true;
        for lambda in [10.0, 20.0, 40.0, 80.0] {
            let integrand = GridFn::from_values(
                Arc::clone(&grid),
                grid.s_values()
                    .iter()
                    .map(|&s| f(s) * (lambda * s).cos())
                    .collect(),
            )
            .unwrap();
            let v = frac_integral(&integrand).last().abs();
            ok &= v < prev && v <= 4.0 / lambda;
            prev = v;
        }
        check("oscillatory integral decay (alpha = 0.5)", ok);
    }

    Ok(if failures == 0 { 0 } else { 2 })
}
