use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::insar::Map2;
use crate::metrics::EvalSummary;

/// Serializes a map as CSV: one `#` header line with `rows`, `cols`,
/// `quantity` and `units`, then one line per row with `{:.6}` values.
pub fn map_to_csv(map: &Map2, quantity: &str, units: &str) -> String {
    let mut out = String::with_capacity(map.data.len() * 12 + 64);
    let _ = writeln!(out, "# rows={} cols={} quantity={quantity} units={units}", map.rows, map.cols);
    for row in map.data.chunks(map.cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn write_map_csv(path: &Path, map: &Map2, quantity: &str, units: &str) -> Result<()> {
    fs::write(path, map_to_csv(map, quantity, units)).map_err(|e| Error::io(path, e))
}

fn header_field(header: &str, key: &str) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| Error::Format(format!("map header lacks {key}")))?
        .parse()
        .map_err(|e| Error::Format(format!("bad {key} in map header: {e}")))
}

pub fn map_from_csv(text: &str) -> Result<Map2> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Format("map CSV must start with a '#' header".into()))?;
    let rows = header_field(header, "rows")?;
    let cols = header_field(header, "cols")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (r, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let before = data.len();
        for field in line.split(',') {
            let v: f64 =
                field.trim().parse().map_err(|e| Error::Format(format!("row {r}: bad value {field:?}: {e}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Format(format!("row {r} has {} values, expected {cols}", data.len() - before)));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Map2::from_vec(rows, cols, data)
}

pub fn read_map_csv(path: &Path) -> Result<Map2> {
    map_from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// One row of the method comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub summary: EvalSummary,
    pub mean_coherence: Option<f64>,
}

pub const SUMMARY_HEADER: &str =
    "method,sd_deformation,bias_deformation,sd_elevation,bias_elevation,n_valid_pixels,mean_coherence";

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.method,
            s.sd_deformation,
            s.bias_deformation,
            s.sd_elevation,
            s.bias_elevation,
            s.n_valid_pixels,
            r.mean_coherence.map(|c| format!("{c:.6}")).unwrap_or_default()
        );
    }
    out
}
