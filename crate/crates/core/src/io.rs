//! File formats: the nodal dataset JSON, CSV export of grid functions, and
//! the fixed float formatting shared by every artifact output.
//!
//! Nodal dataset JSON: `{"alpha": <real>, "nodes": {"<n>": [x ascending]}}`.
//! CSV exports carry a header row and the columns x, s, value.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::grid::{AlphaOrder, GridFn};
use crate::inverse::{InverseError, NodalDataset};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("json parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad nodal index key `{0}`")]
    BadIndex(String),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Fixed 17-significant-digit scientific formatting; round-trips f64 exactly
/// and keeps every output byte-stable.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Deserialize)]
struct RawNodal {
    alpha: f64,
    nodes: BTreeMap<String, Vec<f64>>,
}

pub fn read_nodal_json(text: &str) -> Result<NodalDataset<f64>, IoError> {
    let raw: RawNodal = serde_json::from_str(text)?;
    let alpha = AlphaOrder::new(raw.alpha)?;
    let mut entries = BTreeMap::new();
    for (key, nodes) in raw.nodes {
        let n: i32 = key.parse().map_err(|_| IoError::BadIndex(key.clone()))?;
        entries.insert(n, nodes);
    }
    Ok(NodalDataset::new(alpha, entries)?)
}

pub fn write_nodal_json(data: &NodalDataset<f64>) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!(
        "  \"alpha\": {},\n  \"nodes\": {{\n",
        fmt_float(data.alpha().value())
    ));
    let indices: Vec<i32> = data.indices().collect();
    for (i, n) in indices.iter().enumerate() {
        let nodes = data.nodes(*n).unwrap();
        let row: Vec<String> = nodes.iter().map(|&x| fmt_float(x)).collect();
        out.push_str(&format!("    \"{n}\": [{}]", row.join(", ")));
        out.push_str(if i + 1 < indices.len() { ",\n" } else { "\n" });
    }
    out.push_str("  }\n}\n");
    out
}

/// CSV with columns x, s, <name>; one row per grid point.
pub fn gridfn_csv(f: &GridFn<f64>, name: &str) -> String {
    let grid = f.grid();
    let mut out = format!("x,s,{name}\n");
    for k in 0..grid.n_points() {
        out.push_str(&fmt_float(grid.x(k)));
        out.push(',');
        out.push_str(&fmt_float(grid.s(k)));
        out.push(',');
        out.push_str(&fmt_float(f.value(k)));
        out.push('\n');
    }
    out
}
