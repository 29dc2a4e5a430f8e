//! Delimited record files for sweep output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, ErrorCategory, Result};
use crate::steady::RESIDUAL_TOL;

/// Column names in file order.
pub const COLUMNS: [&str; 9] =
    ["sweep_value", "n_multi", "n_single", "ratio", "g12", "gamma12", "residual", "sweep_value_2", "flag"];

/// Status of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub enum RowFlag {
    Ok,
    /// Solved, but the residual exceeds the acceptance tolerance.
    Residual,
    /// The solve failed; numeric columns are NaN.
    Failed(ErrorCategory, String),
}

impl RowFlag {
    fn render(&self) -> String {
        match self {
            RowFlag::Ok => "ok".into(),
            RowFlag::Residual => "residual".into(),
            // keep the record a single comma-free field
            RowFlag::Failed(_, msg) => format!("error: {}", msg.replace([',', '\n', '\r'], ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub sweep_value_2: Option<f64>,
    pub n_multi: f64,
    pub n_single: f64,
    pub ratio: f64,
    pub g12: f64,
    pub gamma12: f64,
    pub residual: f64,
    pub flag: RowFlag,
}

impl SweepRow {
    /// Row for a successful solve; flags residuals above tolerance.
    pub fn solved(sweep_value: f64, n_multi: f64, n_single: f64, g12: f64, gamma12: f64, residual: f64) -> Self {
        let flag = if residual <= RESIDUAL_TOL { RowFlag::Ok } else { RowFlag::Residual };
        Self { sweep_value, sweep_value_2: None, n_multi, n_single, ratio: n_multi / n_single, g12, gamma12, residual, flag }
    }

    pub fn failed(sweep_value: f64, n_single: f64, g12: f64, gamma12: f64, error: &Error) -> Self {
        Self {
            sweep_value,
            sweep_value_2: None,
            n_multi: f64::NAN,
            n_single,
            ratio: f64::NAN,
            g12,
            gamma12,
            residual: f64::NAN,
            flag: RowFlag::Failed(error.category(), error.to_string()),
        }
    }

    pub fn with_second(mut self, value: f64) -> Self {
        self.sweep_value_2 = Some(value);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.flag == RowFlag::Ok
    }
}

/// One sweep's rows plus the metadata written into the header block.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub title: String,
    /// Meaning and unit of `sweep_value`.
    pub sweep_variable: String,
    /// Meaning and unit of `sweep_value_2`, if used.
    pub second_variable: Option<String>,
    /// Extra `key: value` lines for the header (parameters, labels).
    pub notes: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepRecord {
    pub fn new(title: impl Into<String>, sweep_variable: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            sweep_variable: sweep_variable.into(),
            second_variable: None,
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Row with the smallest finite ratio.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().filter(|r| r.ratio.is_finite()).min_by(|a, b| a.ratio.total_cmp(&b.ratio))
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.is_ok())
    }

    /// Full file contents.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        let _ = writeln!(out, "# units: lengths in transition wavelengths, energies and rates in trap frequency nu, angles in radians");
        let _ = writeln!(out, "# sweep_value: {}", self.sweep_variable);
        if let Some(second) = &self.second_variable {
            let _ = writeln!(out, "# sweep_value_2: {second}");
        }
        let _ = writeln!(out, "# n_multi, n_single: target phonon occupation with and without neighbours (dimensionless)");
        let _ = writeln!(out, "# ratio: n_multi / n_single; g12, gamma12: target-neighbour shift and decay (units of nu)");
        let _ = writeln!(out, "# residual: 2-norm of L vec(rho); flag: ok | residual (above {RESIDUAL_TOL:e}) | error: <message>");
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            let second = row.sweep_value_2.map(fmt_float).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_float(row.sweep_value),
                fmt_float(row.n_multi),
                fmt_float(row.n_single),
                fmt_float(row.ratio),
                fmt_float(row.g12),
                fmt_float(row.gamma12),
                fmt_float(row.residual),
                second,
                row.flag.render()
            );
        }
        out
    }
}

/// Twelve significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.11e}")
    }
}

/// Writes `record` to `path` via a temporary file in the same directory and an atomic rename.
pub fn write_records(record: &SweepRecord, path: &Path) -> Result<()> {
    write_atomic(path, record.render().as_bytes())
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SweepRecord {
        let mut rec = SweepRecord::new("test", "spacing");
        rec.rows.push(SweepRow::solved(0.5, 8e-4, 1e-3, 0.01, 0.05, 1e-16));
        rec.rows.push(SweepRow::solved(0.6, 8e-4, 1e-3, 0.01, 0.05, 1e-6));
        rec.rows.push(SweepRow::failed(0.7, 1e-3, 0.0, 0.0, &Error::Solver("a, b".into())).with_second(2.0));
        rec
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(0.7133), "7.13300000000e-1");
        assert_eq!(fmt_float(-1.0 / 3.0), "-3.33333333333e-1");
        assert_eq!(fmt_float(f64::NAN), "nan");
    }

    #[test]
    fn rendering_has_fixed_header_and_flags() {
        let text = sample().render();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], "sweep_value,n_multi,n_single,ratio,g12,gamma12,residual,sweep_value_2,flag");
        assert!(lines[1].ends_with(",,ok"));
        assert!(lines[2].ends_with(",,residual"));
        assert!(lines[3].contains("2.00000000000e0,error: linear solver failure: a; b"));
        assert!(lines.iter().all(|l| l.split(',').count() == COLUMNS.len()));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        std::fs::write(&path, "old").unwrap();
        write_records(&sample(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), sample().render());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn write_into_missing_directory_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        assert!(matches!(write_records(&sample(), &path), Err(Error::Io { .. })));
    }
}
