//! Experiment configuration: a small flat-section text format parsed by the
//! tool itself, with JSON accepted as an alternative input encoding.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use confdirac::io::fmt_float;
use confdirac::{Expression, Var};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub p: String,
    pub r: String,
    pub m11: String,
    pub m12: String,
    pub m21: String,
    pub m22: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub grid_points: usize,
    pub picard_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSection {
    pub n_lo: i32,
    pub n_hi: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownKind {
    OffdiagTrace,
    Potentials,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseSection {
    pub n_max: i32,
    pub known: KnownKind,
    pub l: String,
    pub smoothing_window: usize,
    pub extrapolation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub formats: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySection {
    pub theta_tol: f64,
    pub beta_tol: f64,
    pub sup_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub spectrum: SpectrumSection,
    pub inverse: InverseSection,
    pub output: OutputSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSection {
                alpha: 1.0,
                theta: 0.0,
                beta: 0.0,
                p: "0".into(),
                r: "0".into(),
                m11: "0".into(),
                m12: "0".into(),
                m21: "0".into(),
                m22: "0".into(),
            },
            solver: SolverSection {
                grid_points: 4097,
                picard_iterations: 30,
            },
            spectrum: SpectrumSection { n_lo: 1, n_hi: 16 },
            inverse: InverseSection {
                n_max: 16,
                known: KnownKind::OffdiagTrace,
                l: "0".into(),
                smoothing_window: 0,
                extrapolation: "auto".into(),
            },
            output: OutputSection {
                dir: "out".into(),
                formats: "csv,json".into(),
            },
            verify: VerifySection {
                theta_tol: 5e-3,
                beta_tol: 5e-3,
                sup_tol: 2e-2,
            },
        }
    }
}

/// JSON mirror with every field optional.
#[derive(Deserialize, Default)]
struct RawConfig {
    model: Option<RawModel>,
    solver: Option<RawSolver>,
    spectrum: Option<RawSpectrum>,
    inverse: Option<RawInverse>,
    output: Option<RawOutput>,
    verify: Option<RawVerify>,
}

#[derive(Deserialize, Default)]
struct RawModel {
    alpha: Option<f64>,
    theta: Option<f64>,
    beta: Option<f64>,
    p: Option<String>,
    r: Option<String>,
    m11: Option<String>,
    m12: Option<String>,
    m21: Option<String>,
    m22: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawSolver {
    grid_points: Option<usize>,
    picard_iterations: Option<usize>,
}

#[derive(Deserialize, Default)]
struct RawSpectrum {
    n_lo: Option<i32>,
    n_hi: Option<i32>,
}

#[derive(Deserialize, Default)]
struct RawInverse {
    n_max: Option<i32>,
    known: Option<String>,
    l: Option<String>,
    smoothing_window: Option<usize>,
    extrapolation: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<String>,
}

#[derive(Deserialize, Default)]
struct RawVerify {
    theta_tol: Option<f64>,
    beta_tol: Option<f64>,
    sup_tol: Option<f64>,
}

impl ExperimentConfig {
    /// Parse either encoding, keyed off the leading non-space byte.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let raw: RawConfig = serde_json::from_str(text).context("json config")?;
            Self::from_raw(raw)
        } else {
            Self::parse_sections(text)
        }
    }

    fn parse_sections(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = strip_comment(line).trim().to_string();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: unterminated section header"))?;
                section = name.trim().to_string();
                match section.as_str() {
                    "model" => {
                        raw.model.get_or_insert_with(Default::default);
                    }
                    "solver" => {
                        raw.solver.get_or_insert_with(Default::default);
                    }
                    "spectrum" => {
                        raw.spectrum.get_or_insert_with(Default::default);
                    }
                    "inverse" => {
                        raw.inverse.get_or_insert_with(Default::default);
                    }
                    "output" => {
                        raw.output.get_or_insert_with(Default::default);
                    }
                    "verify" => {
                        raw.verify.get_or_insert_with(Default::default);
                    }
                    other => bail!("line {line_no}: unknown section `{other}`"),
                }
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let key = key.trim();
            let value = parse_value(value.trim())
                .map_err(|e| anyhow!("line {line_no}: {e}"))?;
            set_key(&mut raw, &section, key, value)
                .map_err(|e| anyhow!("line {line_no}: {e}"))?;
        }
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(m) = raw.model {
            if let Some(v) = m.alpha {
                cfg.model.alpha = v;
            }
            if let Some(v) = m.theta {
                cfg.model.theta = v;
            }
            if let Some(v) = m.beta {
                cfg.model.beta = v;
            }
            for (dst, src) in [
                (&mut cfg.model.p, m.p),
                (&mut cfg.model.r, m.r),
                (&mut cfg.model.m11, m.m11),
                (&mut cfg.model.m12, m.m12),
                (&mut cfg.model.m21, m.m21),
                (&mut cfg.model.m22, m.m22),
            ] {
                if let Some(v) = src {
                    *dst = v;
                }
            }
        }
        if let Some(s) = raw.solver {
            if let Some(v) = s.grid_points {
                cfg.solver.grid_points = v;
            }
            if let Some(v) = s.picard_iterations {
                cfg.solver.picard_iterations = v;
            }
        }
        if let Some(s) = raw.spectrum {
            if let Some(v) = s.n_lo {
                cfg.spectrum.n_lo = v;
            }
            if let Some(v) = s.n_hi {
                cfg.spectrum.n_hi = v;
            }
        }
        if let Some(s) = raw.inverse {
            if let Some(v) = s.n_max {
                cfg.inverse.n_max = v;
            }
            if let Some(v) = s.known {
                cfg.inverse.known = match v.as_str() {
                    "L" | "l" => KnownKind::OffdiagTrace,
                    "pr" => KnownKind::Potentials,
                    other => bail!("inverse.known must be `L` or `pr`, got `{other}`"),
                };
            }
            if let Some(v) = s.l {
                cfg.inverse.l = v;
            }
            if let Some(v) = s.smoothing_window {
                cfg.inverse.smoothing_window = v;
            }
            if let Some(v) = s.extrapolation {
                cfg.inverse.extrapolation = v;
            }
        }
        if let Some(s) = raw.output {
            if let Some(v) = s.dir {
                cfg.output.dir = v;
            }
            if let Some(v) = s.formats {
                cfg.output.formats = v;
            }
        }
        if let Some(s) = raw.verify {
            if let Some(v) = s.theta_tol {
                cfg.verify.theta_tol = v;
            }
            if let Some(v) = s.beta_tol {
                cfg.verify.beta_tol = v;
            }
            if let Some(v) = s.sup_tol {
                cfg.verify.sup_tol = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.model.alpha > 0.0 && self.model.alpha <= 1.0) {
            bail!("model.alpha must lie in (0, 1], got {}", self.model.alpha);
        }
        if self.spectrum.n_lo < 1 || self.spectrum.n_hi < self.spectrum.n_lo {
            bail!(
                "spectrum range must satisfy n_hi >= n_lo >= 1, got {}..{}",
                self.spectrum.n_lo,
                self.spectrum.n_hi
            );
        }
        if self.solver.grid_points < 3 {
            bail!("solver.grid_points must be at least 3");
        }
        for (name, src, t_allowed) in [
            ("model.p", &self.model.p, false),
            ("model.r", &self.model.r, false),
            ("model.m11", &self.model.m11, true),
            ("model.m12", &self.model.m12, true),
            ("model.m21", &self.model.m21, true),
            ("model.m22", &self.model.m22, true),
            ("inverse.l", &self.inverse.l, false),
        ] {
            let expr = Expression::parse(src).with_context(|| format!("{name} = `{src}`"))?;
            if !t_allowed && expr.uses_var(Var::T) {
                bail!("{name} may only reference x");
            }
        }
        match self.inverse.extrapolation.as_str() {
            "auto" | "two_point" | "largest" => {}
            other => bail!("inverse.extrapolation must be auto|two_point|largest, got `{other}`"),
        }
        Ok(())
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[model]");
        let _ = writeln!(out, "alpha = {}", fmt_float(self.model.alpha));
        let _ = writeln!(out, "theta = {}", fmt_float(self.model.theta));
        let _ = writeln!(out, "beta = {}", fmt_float(self.model.beta));
        let _ = writeln!(out, "p = \"{}\"", self.model.p);
        let _ = writeln!(out, "r = \"{}\"", self.model.r);
        let _ = writeln!(out, "m11 = \"{}\"", self.model.m11);
        let _ = writeln!(out, "m12 = \"{}\"", self.model.m12);
        let _ = writeln!(out, "m21 = \"{}\"", self.model.m21);
        let _ = writeln!(out, "m22 = \"{}\"", self.model.m22);
        let _ = writeln!(out, "\n[solver]");
        let _ = writeln!(out, "grid_points = {}", self.solver.grid_points);
        let _ = writeln!(out, "picard_iterations = {}", self.solver.picard_iterations);
        let _ = writeln!(out, "\n[spectrum]");
        let _ = writeln!(out, "n_lo = {}", self.spectrum.n_lo);
        let _ = writeln!(out, "n_hi = {}", self.spectrum.n_hi);
        let _ = writeln!(out, "\n[inverse]");
        let _ = writeln!(out, "n_max = {}", self.inverse.n_max);
        let _ = writeln!(
            out,
            "known = \"{}\"",
            match self.inverse.known {
                KnownKind::OffdiagTrace => "L",
                KnownKind::Potentials => "pr",
            }
        );
        let _ = writeln!(out, "l = \"{}\"", self.inverse.l);
        let _ = writeln!(out, "smoothing_window = {}", self.inverse.smoothing_window);
        let _ = writeln!(out, "extrapolation = \"{}\"", self.inverse.extrapolation);
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "dir = \"{}\"", self.output.dir);
        let _ = writeln!(out, "formats = \"{}\"", self.output.formats);
        let _ = writeln!(out, "\n[verify]");
        let _ = writeln!(out, "theta_tol = {}", fmt_float(self.verify.theta_tol));
        let _ = writeln!(out, "beta_tol = {}", fmt_float(self.verify.beta_tol));
        let _ = writeln!(out, "sup_tol = {}", fmt_float(self.verify.sup_tol));
        out
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Debug)]
enum Value {
    Number(f64),
    Text(String),
}

fn parse_value(raw: &str) -> Result<Value> {
    if let Some(stripped) = raw.strip_prefix('"') {
        let inner = stripped
            .strip_suffix('"')
            .ok_or_else(|| anyhow!("unterminated string"))?;
        if inner.contains('"') {
            bail!("embedded quotes are not supported");
        }
        return Ok(Value::Text(inner.to_string()));
    }
    if let Ok(n) = raw.parse::<f64>() {
        return Ok(Value::Number(n));
    }
    // bare word
    Ok(Value::Text(raw.to_string()))
}

fn set_key(raw: &mut RawConfig, section: &str, key: &str, value: Value) -> Result<()> {
    let num = |v: &Value| -> Result<f64> {
        match v {
            Value::Number(n) => Ok(*n),
            Value::Text(t) => bail!("expected a number, got `{t}`"),
        }
    };
    let text = |v: Value| -> String {
        match v {
            Value::Number(n) => n.to_string(),
            Value::Text(t) => t,
        }
    };
    let int = |v: &Value| -> Result<i64> {
        let n = num(v)?;
        if n.fract() != 0.0 {
            bail!("expected an integer, got {n}");
        }
        Ok(n as i64)
    };
    match (section, key) {
        ("model", "alpha") => raw.model.get_or_insert_with(Default::default).alpha = Some(num(&value)?),
        ("model", "theta") => raw.model.get_or_insert_with(Default::default).theta = Some(num(&value)?),
        ("model", "beta") => raw.model.get_or_insert_with(Default::default).beta = Some(num(&value)?),
        ("model", "p") => raw.model.get_or_insert_with(Default::default).p = Some(text(value)),
        ("model", "r") => raw.model.get_or_insert_with(Default::default).r = Some(text(value)),
        ("model", "m11") => raw.model.get_or_insert_with(Default::default).m11 = Some(text(value)),
        ("model", "m12") => raw.model.get_or_insert_with(Default::default).m12 = Some(text(value)),
        ("model", "m21") => raw.model.get_or_insert_with(Default::default).m21 = Some(text(value)),
        ("model", "m22") => raw.model.get_or_insert_with(Default::default).m22 = Some(text(value)),
        ("solver", "grid_points") => {
            raw.solver.get_or_insert_with(Default::default).grid_points = Some(int(&value)? as usize)
        }
        ("solver", "picard_iterations") => {
            raw.solver
                .get_or_insert_with(Default::default)
                .picard_iterations = Some(int(&value)? as usize)
        }
        ("spectrum", "n_lo") => {
            raw.spectrum.get_or_insert_with(Default::default).n_lo = Some(int(&value)? as i32)
        }
        ("spectrum", "n_hi") => {
            raw.spectrum.get_or_insert_with(Default::default).n_hi = Some(int(&value)? as i32)
        }
        ("inverse", "n_max") => {
            raw.inverse.get_or_insert_with(Default::default).n_max = Some(int(&value)? as i32)
        }
        ("inverse", "known") => {
            raw.inverse.get_or_insert_with(Default::default).known = Some(text(value))
        }
        ("inverse", "l") => raw.inverse.get_or_insert_with(Default::default).l = Some(text(value)),
        ("inverse", "smoothing_window") => {
            raw.inverse
                .get_or_insert_with(Default::default)
                .smoothing_window = Some(int(&value)? as usize)
        }
        ("inverse", "extrapolation") => {
            raw.inverse.get_or_insert_with(Default::default).extrapolation = Some(text(value))
        }
        ("output", "dir") => raw.output.get_or_insert_with(Default::default).dir = Some(text(value)),
        ("output", "formats") => {
            raw.output.get_or_insert_with(Default::default).formats = Some(text(value))
        }
        ("verify", "theta_tol") => {
            raw.verify.get_or_insert_with(Default::default).theta_tol = Some(num(&value)?)
        }
        ("verify", "beta_tol") => {
            raw.verify.get_or_insert_with(Default::default).beta_tol = Some(num(&value)?)
        }
        ("verify", "sup_tol") => {
            raw.verify.get_or_insert_with(Default::default).sup_tol = Some(num(&value)?)
        }
        _ => bail!("unknown key `{section}.{key}`"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.alpha = 0.5;
        cfg.model.p = "cos(2*x) + sin(x)".into();
        cfg.spectrum.n_hi = 64;
        cfg.inverse.n_max = 64;
        let text = cfg.serialize();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn accepts_json() {
        let cfg = ExperimentConfig::parse(
            r#"{"model": {"alpha": 0.5, "p": "sin(x)"}, "spectrum": {"n_hi": 8}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.alpha, 0.5);
        assert_eq!(cfg.model.p, "sin(x)");
        assert_eq!(cfg.spectrum.n_hi, 8);
        assert_eq!(cfg.solver.grid_points, 4097);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("[model]\nalpha = 1.5").is_err());
        assert!(ExperimentConfig::parse("[model]\np = \"sin(t)\"").is_err());
        assert!(ExperimentConfig::parse("[spectrum]\nn_lo = 5\nn_hi = 2").is_err());
        assert!(ExperimentConfig::parse("[mystery]\nkey = 1").is_err());
        let err = ExperimentConfig::parse("[model]\nalpha 1.0").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn comments_and_bare_words() {
        let cfg = ExperimentConfig::parse(
            "# experiment\n[inverse]\nknown = pr  # potentials given\nn_max = 32\n",
        )
        .unwrap();
        assert_eq!(cfg.inverse.known, KnownKind::Potentials);
        assert_eq!(cfg.inverse.n_max, 32);
    }
}
