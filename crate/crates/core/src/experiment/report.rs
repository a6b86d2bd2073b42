use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::harness::ResultRow;
use crate::error::Result;

pub const CSV_HEADER: &str =
    "k,n,geometry,replicate,seed,empirical_excess,std_error,bound_eq2,bound_rate,audit_min_residual";

/// Write rows to CSV with the fixed header. A missing audit residual is an
/// empty field.
pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.n.to_string(),
            r.geometry.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.empirical_excess.to_string(),
            r.std_error.to_string(),
            r.bound_eq2.to_string(),
            r.bound_rate.to_string(),
            r.audit_min_residual
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_csv(fs::File::create(path)?, rows)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryKind;

    #[test]
    fn header_and_row_layout() {
        let row = ResultRow {
            k: 4,
            n: 10,
            geometry: GeometryKind::BlockPower,
            replicate: 1,
            seed: 10007,
            empirical_excess: 0.25,
            std_error: 0.01,
            bound_eq2: 1.5,
            bound_rate: 2.0,
            audit_min_residual: None,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "4,10,block-power,1,10007,0.25,0.01,1.5,2,"
        );
        assert!(lines.next().is_none());
    }
}
