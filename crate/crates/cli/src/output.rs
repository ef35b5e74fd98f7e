//! CSV tables and atomic file writes.

use std::fs;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Index(usize),
    Value(f64),
}

impl Cell {
    fn key(self) -> f64 {
        match self {
            Cell::Index(i) => i as f64,
            Cell::Value(v) => v,
        }
    }
}

/// Seventeen significant digits: enough to reproduce every `f64` bit for bit.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// One time series. Columns are `(name, unit)` pairs.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[(&str, &str)]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|(c, u)| (c.to_string(), u.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: impl Into<String>, columns: Vec<(String, String)>) -> Self {
        Table {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Header with units, then rows ordered by the first column and then the
    /// second (stable, so ties keep insertion order).
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<&Vec<Cell>> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            let ka = (a[0].key(), a.get(1).map_or(0.0, |c| c.key()));
            let kb = (b[0].key(), b.get(1).map_or(0.0, |c| c.key()));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        let mut out = self
            .columns
            .iter()
            .map(|(c, u)| if u.is_empty() { c.clone() } else { format!("{c} [{u}]") })
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .map(|c| match *c {
                    Cell::Index(i) => i.to_string(),
                    Cell::Value(v) => format_float(v),
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_is_two_lines() {
        let mut t = Table::new("v", &[("t", "time"), ("target_id", ""), ("V", "energy")]);
        t.push(vec![Cell::Value(1.0), Cell::Index(0), Cell::Value(0.1)]);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), "t [time],target_id,V [energy]");
        assert!(csv.contains("1.0000000000000000e0,0,1.0000000000000001e-1"));
    }

    #[test]
    fn rows_sorted_by_time_then_target() {
        let mut t = Table::new("v", &[("t", ""), ("id", "")]);
        t.push(vec![Cell::Value(2.0), Cell::Index(1)]);
        t.push(vec![Cell::Value(1.0), Cell::Index(1)]);
        t.push(vec![Cell::Value(2.0), Cell::Index(0)]);
        let csv = t.to_csv();
        let body: Vec<&str> = csv.lines().skip(1).map(|l| &l[..1]).collect();
        assert_eq!(body, ["1", "2", "2"]);
        assert!(csv.lines().nth(2).unwrap().ends_with(",0"));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
