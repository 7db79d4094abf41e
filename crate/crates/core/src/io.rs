//! CSV data files with a `# key = value` header.
//!
//! Every number is written as `{:.16e}` (17 significant digits), so values
//! survive a write/read cycle bit for bit. Grid vectors use lexicographic
//! block order: block `j` holds the nodes on row `y_j`, `x` varies fastest.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::forward::Trajectory;
use crate::inversion::{IterationRecord, MeasurementSet};
use crate::tensor::PrincipalField;

pub const ORDERING: &str = "block-j, x-within-block";

/// A header of ordered key/value pairs, column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Table {
    pub fn new(kind: &str, columns: Vec<String>) -> Self {
        Self {
            kind: kind.to_string(),
            meta: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "# anisodiff {}", self.kind).expect("string write");
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}").expect("string write");
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(std::str::from_utf8(&bytes).expect("ascii output"));
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Format {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().peekable();
        let kind = match lines.next() {
            Some((_, l)) if l.starts_with("# anisodiff ") => l["# anisodiff ".len()..].trim().to_string(),
            _ => return Err(fail(1, "missing '# anisodiff <kind>' header".into())),
        };
        let mut meta = Vec::new();
        let mut body_start = 1;
        while let Some((no, l)) = lines.peek() {
            let Some(rest) = l.strip_prefix('#') else { break };
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| fail(no + 1, format!("malformed header line '{l}'")))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
            body_start = no + 1;
            lines.next();
        }
        let body: String = text.lines().skip(body_start).map(|l| format!("{l}\n")).collect();
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| fail(body_start + 1, e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let line = body_start + 2 + k;
            let rec = rec.map_err(|e| fail(line, e.to_string()))?;
            if rec.len() != columns.len() {
                return Err(fail(line, format!("expected {} fields, got {}", columns.len(), rec.len())));
            }
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| fail(line, format!("'{s}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self {
            kind,
            meta,
            columns,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn expect_kind(&self, kind: &str, path: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format {
                path: path.to_string(),
                line: 1,
                message: format!("expected a {kind} file, found {}", self.kind),
            });
        }
        Ok(())
    }

    fn meta_value<T: std::str::FromStr>(&self, key: &str, path: &str) -> Result<T> {
        let line = 2 + self.meta.iter().position(|(k, _)| k == key).unwrap_or(0);
        let raw = self.get(key).ok_or_else(|| Error::Format {
            path: path.to_string(),
            line: 1,
            message: format!("missing header key '{key}'"),
        })?;
        raw.parse().map_err(|_| Error::Format {
            path: path.to_string(),
            line,
            message: format!("invalid value '{raw}' for '{key}'"),
        })
    }
}

fn state_columns(prefix: &str, len: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..len).map(|k| format!("{prefix}{k}")))
        .collect()
}

/// Snapshots of a trajectory, keeping every `every`-th step plus the last.
pub fn snapshot_table(traj: &Trajectory, n: usize, t_final: f64, steps: usize, every: usize) -> Table {
    let len = (n + 1) * (n + 1);
    let mut t = Table::new("snapshots", state_columns("u", len))
        .with_meta("n", n)
        .with_meta("t_final", fmt_f64(t_final))
        .with_meta("steps", steps)
        .with_meta("ordering", ORDERING);
    let every = every.max(1);
    let last = traj.len() - 1;
    for (i, (time, u)) in traj.times.iter().zip(&traj.states).enumerate() {
        if i % every == 0 || i == last {
            t.rows.push(std::iter::once(*time).chain(u.iter().copied()).collect());
        }
    }
    t
}

/// Snapshot rows as `(times, states)`.
pub fn read_snapshots(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let p = path.display().to_string();
    let t = Table::read(path)?;
    t.expect_kind("snapshots", &p)?;
    let times = t.rows.iter().map(|r| r[0]).collect();
    let states = t.rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect();
    Ok((times, states))
}

pub fn measurement_table(m: &MeasurementSet, n: usize) -> Table {
    let len = (n + 1) * (n + 1);
    let mut t = Table::new("measurements", state_columns("u", len))
        .with_meta("n", n)
        .with_meta("delta", fmt_f64(m.delta))
        .with_meta("interpolated", m.interpolated)
        .with_meta("ordering", ORDERING);
    if let Some(mask) = &m.mask {
        let s: String = mask.iter().map(|&b| if b { '1' } else { '0' }).collect();
        t = t.with_meta("mask", s);
    }
    for (time, u) in m.times.iter().zip(&m.data) {
        t.rows.push(std::iter::once(*time).chain(u.iter().copied()).collect());
    }
    t
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let p = path.display().to_string();
    let t = Table::read(path)?;
    t.expect_kind("measurements", &p)?;
    let mask = match t.get("mask") {
        Some(s) => Some(
            s.chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::Format {
                        path: p.clone(),
                        line: 1,
                        message: format!("invalid mask character '{c}'"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(MeasurementSet {
        times: t.rows.iter().map(|r| r[0]).collect(),
        data: t.rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect(),
        delta: t.meta_value("delta", &p)?,
        mask,
        interpolated: t.meta_value("interpolated", &p)?,
    })
}

/// One row per node: `i, j, x, y, k11, k22`.
pub fn field_table(field: &PrincipalField, nodes: &[f64]) -> Table {
    let n = field.degree();
    let mut t = Table::new(
        "field",
        ["i", "j", "x", "y", "k11", "k22"].map(String::from).to_vec(),
    )
    .with_meta("n", n)
    .with_meta("ordering", ORDERING);
    for j in 0..=n {
        for i in 0..=n {
            t.rows.push(vec![
                i as f64,
                j as f64,
                nodes[i],
                nodes[j],
                field.k11(i, j),
                field.k22(i, j),
            ]);
        }
    }
    t
}

pub fn read_field(path: &Path) -> Result<PrincipalField> {
    let p = path.display().to_string();
    let t = Table::read(path)?;
    t.expect_kind("field", &p)?;
    let n: usize = t.meta_value("n", &p)?;
    let len = (n + 1) * (n + 1);
    if t.rows.len() != len {
        return Err(Error::Format {
            path: p,
            line: 1,
            message: format!("expected {len} nodes, found {}", t.rows.len()),
        });
    }
    let mut k11 = vec![0.0; len];
    let mut k22 = vec![0.0; len];
    for r in &t.rows {
        let k = r[0] as usize + r[1] as usize * (n + 1);
        k11[k] = r[4];
        k22[k] = r[5];
    }
    PrincipalField::new(n, k11, k22)
}

pub fn history_table(history: &[IterationRecord]) -> Table {
    let mut t = Table::new(
        "history",
        ["iteration", "phi", "residual_norm", "mu", "step_norm", "rejections"]
            .map(String::from)
            .to_vec(),
    );
    for h in history {
        t.rows.push(vec![
            h.iteration as f64,
            h.phi,
            h.residual_norm,
            h.mu,
            h.step_norm,
            h.rejections as f64,
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip_is_bit_exact() {
        let mut t = Table::new("demo", vec!["a".into(), "b".into()]).with_meta("n", 3);
        let vals = [
            0.1,
            -1.0 / 3.0,
            f64::MIN_POSITIVE,
            1e300,
            -0.0,
            std::f64::consts::PI,
            f64::NAN,
            5e-324,
        ];
        for pair in vals.chunks(2) {
            t.rows.push(pair.to_vec());
        }
        let text = t.to_csv_string().unwrap();
        assert!(!text.contains('\r'));
        let back = Table::parse(&text, "mem").unwrap();
        assert_eq!(back.meta, t.meta);
        for (r, s) in back.rows.iter().zip(&t.rows) {
            for (a, b) in r.iter().zip(s) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "# anisodiff demo\n# n = 2\na,b\n1.0,2.0\n1.0,oops\n";
        match Table::parse(text, "f.csv") {
            Err(Error::Format { line, path, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(path, "f.csv");
            }
            other => panic!("{other:?}"),
        }
        assert!(Table::parse("a,b\n", "f.csv").is_err());
    }
}
