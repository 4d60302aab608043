//! Artifact readers and writers.
//!
//! All floats are written with the shortest representation that parses
//! back to the identical bit pattern, so re-running a config reproduces
//! byte-identical files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use degdiff_core::field::GridField;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

/// Two-column dump `x,value`.
pub fn write_field_csv(path: &Path, field: &GridField) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "x,value")?;
    let grid = field.grid();
    for (i, v) in field.values().iter().enumerate() {
        writeln!(out, "{},{}", grid.node(i), v)?;
    }
    Ok(())
}

/// Read a two-column `x,value` CSV.
pub fn read_field_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file =
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue;
        }
        let mut cols = line.split(',');
        let x: f64 = parse_col(&mut cols, path, lineno)?;
        let v: f64 = parse_col(&mut cols, path, lineno)?;
        xs.push(x);
        vs.push(v);
    }
    Ok((xs, vs))
}

/// Snapshot dump `x,u,eta,chi`.
pub fn write_snapshot_csv(
    path: &Path,
    u: &GridField,
    eta: &GridField,
    chi: &GridField,
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "x,u,eta,chi")?;
    let grid = u.grid();
    for i in 0..grid.len() {
        writeln!(
            out,
            "{},{},{},{}",
            grid.node(i),
            u.values()[i],
            eta.values()[i],
            chi.values()[i]
        )?;
    }
    Ok(())
}

/// Columns of a snapshot CSV: `(x, u, eta, chi)`.
pub type SnapshotColumns = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Read a snapshot CSV back as its four columns.
pub fn read_snapshot_csv(path: &Path) -> Result<SnapshotColumns> {
    let file =
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let (mut xs, mut us, mut es, mut cs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != "x,u,eta,chi" {
                bail!("{}: unexpected header {line:?}", path.display());
            }
            continue;
        }
        let mut cols = line.split(',');
        xs.push(parse_col(&mut cols, path, lineno)?);
        us.push(parse_col(&mut cols, path, lineno)?);
        es.push(parse_col(&mut cols, path, lineno)?);
        cs.push(parse_col(&mut cols, path, lineno)?);
    }
    Ok((xs, us, es, cs))
}

fn parse_col<'a>(
    cols: &mut impl Iterator<Item = &'a str>,
    path: &Path,
    lineno: usize,
) -> Result<f64> {
    let raw = cols
        .next()
        .with_context(|| format!("{}:{}: missing column", path.display(), lineno + 1))?;
    raw.trim()
        .parse()
        .with_context(|| format!("{}:{}: bad float {raw:?}", path.display(), lineno + 1))
}

/// Ensemble dump `t,quantile,position`: the 999 plotting quantiles of
/// the sorted sample, or every particle when `full` is set.
pub fn write_ensemble_csv(path: &Path, time: f64, positions: &[f64], full: bool) -> Result<()> {
    let mut sorted = positions.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut out = create(path)?;
    writeln!(out, "t,quantile,position")?;
    if full {
        for (k, y) in sorted.iter().enumerate() {
            writeln!(out, "{},{},{}", time, (k as f64 + 0.5) / n as f64, y)?;
        }
    } else {
        for k in 1..1000 {
            let q = k as f64 / 1000.0;
            let idx = ((q * n as f64) as usize).min(n - 1);
            writeln!(out, "{},{},{}", time, q, sorted[idx])?;
        }
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use degdiff_core::field::Grid;

    #[test]
    fn field_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let grid = Grid::new(1.5, 7).unwrap();
        let f = GridField::from_fn(grid, |x| (x * core::f64::consts::PI).sin() / 3.0);
        write_field_csv(&path, &f).unwrap();
        let (xs, vs) = read_field_csv(&path).unwrap();
        for i in 0..7 {
            assert_eq!(xs[i], grid.node(i));
            assert_eq!(vs[i], f.values()[i]);
        }
    }

    #[test]
    fn snapshot_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let grid = Grid::new(1.0, 5).unwrap();
        let u = GridField::from_fn(grid, |x| x.abs());
        let e = GridField::from_fn(grid, |x| x);
        let c = GridField::from_fn(grid, |_| 0.5);
        write_snapshot_csv(&path, &u, &e, &c).unwrap();
        let (xs, us, es, cs) = read_snapshot_csv(&path).unwrap();
        assert_eq!(xs.len(), 5);
        assert_eq!(us, u.values());
        assert_eq!(es, e.values());
        assert_eq!(cs, c.values());
    }

    #[test]
    fn ensemble_csv_has_999_quantiles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let positions: Vec<f64> = (0..5000).map(|i| i as f64 / 5000.0).collect();
        write_ensemble_csv(&path, 0.25, &positions, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1000);
        assert!(text.lines().nth(500).unwrap().starts_with("0.25,0.5,"));
    }
}
