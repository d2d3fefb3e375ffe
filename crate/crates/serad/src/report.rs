//! Canonical JSON and CSV report writing.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::variants::AreaRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("serializing report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Pretty JSON with object keys sorted at every level, newline-terminated.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    // serde_json's default map is ordered by key, so a round trip through
    // `Value` sorts struct fields too
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(value: &T, path: &Path) -> Result<(), ReportError> {
    let s = to_canonical_json(value)?;
    std::fs::write(path, s).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Area comparison as CSV, one row per variant.
pub fn area_csv(rows: &[AreaRow]) -> String {
    let mut s = String::from("variant,cycle_time_ps,comb_area,seq_area,total_area,increase_pct\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{:.1}\n",
            r.variant,
            r.cycle_time,
            r.area.comb_area,
            r.area.seq_area,
            r.area.total_area,
            r.increase_pct
        ));
    }
    s
}

/// Area comparison as an aligned text table.
pub fn area_table_text(rows: &[AreaRow]) -> String {
    let mut s = format!(
        "{:<8} {:>10} {:>8} {:>8} {:>8} {:>9}\n",
        "variant", "cycle(ps)", "comb", "seq", "total", "increase"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<8} {:>10} {:>8} {:>8} {:>8} {:>8.1}%\n",
            r.variant.name(),
            r.cycle_time,
            r.area.comb_area,
            r.area.seq_area,
            r.area.total_area,
            r.increase_pct
        ));
    }
    s
}
