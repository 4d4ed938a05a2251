//! CSV and JSON artifacts.
//!
//! - path files: header `t,x`, one row per observation;
//! - dispersion files: header `t,sigma`, one row per knot;
//! - chain files: header `t_0,…,t_m`, one row per retained sample.
//!
//! Floats are written with 17 significant digits so files round-trip
//! exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ClassParams, DispersionFn, ObservationPath};

/// Full-precision float formatting (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // keep the sign-free form for the path origin
        return "0".to_string();
    }
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(io_err(path))?;
    Ok(s)
}

/// Renders a path as CSV. Optional comment lines (`# ...`) go first.
pub fn path_to_csv(path: &ObservationPath, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("t,x\n");
    let n = path.n();
    for (i, x) in path.x().iter().enumerate() {
        out.push_str(&fmt_f64(i as f64 / n as f64));
        out.push(',');
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    out
}

pub fn write_path(file: &Path, path: &ObservationPath, comments: &[String]) -> Result<()> {
    let mut w = create(file)?;
    w.write_all(path_to_csv(path, comments).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(file))
}

/// Parses two-column numeric CSV with the given header, skipping `#`
/// comment lines. Errors name the offending line.
fn parse_two_columns(text: &str, what: &str, header: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let head = rdr.headers()?.clone();
    if head.len() != 2 || head.get(0) != Some(header[0]) || head.get(1) != Some(header[1]) {
        return Err(Error::Parse {
            what: what.into(),
            line: rdr.position().line(),
            msg: format!("expected header `{},{}`", header[0], header[1]),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            what: what.into(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| "missing column".to_string())
                .and_then(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
                .map_err(|msg| Error::Parse {
                    what: what.into(),
                    line,
                    msg,
                })
        };
        if rec.len() != 2 {
            return Err(Error::Parse {
                what: what.into(),
                line,
                msg: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        rows.push((parse(0)?, parse(1)?));
    }
    Ok(rows)
}

pub fn parse_path(text: &str) -> Result<ObservationPath> {
    let rows = parse_two_columns(text, "path csv", ["t", "x"])?;
    if rows.len() < 2 {
        return Err(Error::Parse {
            what: "path csv".into(),
            line: 0,
            msg: "need at least two observations".into(),
        });
    }
    let n = rows.len() - 1;
    for (i, (t, _)) in rows.iter().enumerate() {
        if (t - i as f64 / n as f64).abs() > 1e-12 {
            return Err(Error::Parse {
                what: "path csv".into(),
                line: i as u64 + 2,
                msg: format!("time {t} is not on the grid i/n = {}", i as f64 / n as f64),
            });
        }
    }
    ObservationPath::new(rows.into_iter().map(|(_, x)| x).collect())
}

pub fn read_path(file: &Path) -> Result<ObservationPath> {
    parse_path(&read_to_string(file)?)
}

pub fn dispersion_to_csv(sigma: &DispersionFn, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("t,sigma\n");
    for (j, v) in sigma.values().iter().enumerate() {
        out.push_str(&fmt_f64(sigma.knot(j)));
        out.push(',');
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn write_dispersion(file: &Path, sigma: &DispersionFn, comments: &[String]) -> Result<()> {
    let mut w = create(file)?;
    w.write_all(dispersion_to_csv(sigma, comments).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(file))
}

/// Reads knot values; the knots must be uniform on `[0, 1]`.
pub fn parse_dispersion(text: &str, params: ClassParams) -> Result<DispersionFn> {
    let rows = parse_two_columns(text, "dispersion csv", ["t", "sigma"])?;
    if rows.len() < 2 {
        return Err(Error::Parse {
            what: "dispersion csv".into(),
            line: 0,
            msg: "need at least two knots".into(),
        });
    }
    let m = rows.len() - 1;
    for (j, (t, _)) in rows.iter().enumerate() {
        if (t - j as f64 / m as f64).abs() > 1e-12 {
            return Err(Error::Parse {
                what: "dispersion csv".into(),
                line: j as u64 + 2,
                msg: format!("knot {t} is not uniform (expected {})", j as f64 / m as f64),
            });
        }
    }
    DispersionFn::new(rows.into_iter().map(|(_, v)| v).collect(), params)
}

pub fn read_dispersion(file: &Path, params: ClassParams) -> Result<DispersionFn> {
    parse_dispersion(&read_to_string(file)?, params)
}

/// Chain samples, one row per sample, columns `t_0 … t_m`.
pub fn write_samples(file: &Path, samples: &[DispersionFn], comments: &[String]) -> Result<()> {
    let mut w = create(file)?;
    let mut write = || -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        if let Some(first) = samples.first() {
            let head: Vec<String> = (0..=first.m()).map(|j| format!("t_{j}")).collect();
            writeln!(w, "{}", head.join(","))?;
        }
        for s in samples {
            let row: Vec<String> = s.values().iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    write().map_err(io_err(file))
}

pub fn write_json<T: serde::Serialize>(file: &Path, value: &T) -> Result<()> {
    let mut w = create(file)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(file))
}

pub fn write_text(file: &Path, text: &str) -> Result<()> {
    let mut w = create(file)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(file))
}

/// Hex SHA-256 of a JSON-serialisable value; identifies configurations.
pub fn config_hash<T: serde::Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_path;
    use proptest::prelude::*;

    #[test]
    fn path_csv_round_trips_exactly() {
        let p = ClassParams::new(0.5, 2.0, 2.0).unwrap();
        let s = DispersionFn::affine(0.7, 1.1, 30, p).unwrap();
        let path = simulate_path(&s, 57, 3).unwrap();
        let text = path_to_csv(&path, &["config_hash: abc".into()]);
        assert!(text.starts_with("# config_hash: abc\nt,x\n0,0\n"));
        assert_eq!(parse_path(&text).unwrap(), path);
        let back = parse_dispersion(&dispersion_to_csv(&s, &[]), p).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let text = "t,x\n0,0\n0.5,abc\n1,2\n";
        match parse_path(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "t,x\n0,0\n0.5\n1,2\n";
        assert!(matches!(parse_path(text), Err(Error::Parse { .. })));
        assert!(matches!(parse_path("a,b\n0,0\n1,1\n"), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn float_format_round_trips(x in proptest::num::f64::NORMAL) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
