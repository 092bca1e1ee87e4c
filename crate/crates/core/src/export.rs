//! On-disk formats for intermediate artifacts.
//!
//! Arrays go to CSV with every float written at 17 significant digits, which
//! round-trips `f64` exactly. Metadata goes to JSON.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corrmat::{CorrEnsemble, CorrMatrix, Provenance, WindowSpec};
use crate::error::{Error, Result};
use crate::mpmodel::PolyBasis;
use crate::spectra::Spectrum;
use crate::stats::{CurveKind, StatCurve};
use crate::unfold::{UnfoldMethod, UnfoldedSpectrum};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse { line, message: format!("not a number: {field:?}") })
}

fn parse_usize(field: &str, line: usize) -> Result<usize> {
    field.trim().parse().map_err(|_| Error::Parse { line, message: format!("not an integer: {field:?}") })
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

/// Data rows of a CSV body with the header skipped, numbered from 1.
fn data_rows<R: BufRead>(source: R) -> Result<Vec<(usize, String)>> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate().skip(1) {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push((i + 1, line));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    team_id: String,
    block_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    spec: WindowSpec,
    members: Vec<ManifestEntry>,
    short_series: Vec<String>,
}

/// Writes one CSV per matrix plus `manifest.json` into `dir`.
pub fn write_ensemble(dir: &Path, ensemble: &CorrEnsemble) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut members = Vec::with_capacity(ensemble.len());
    for (i, m) in ensemble.matrices.iter().enumerate() {
        let file = format!("matrix_{i:05}.csv");
        let mut out = BufWriter::new(fs::File::create(dir.join(&file))?);
        let entries = m.entries();
        for r in 0..entries.nrows() {
            let row: Vec<f64> = entries.row(r).iter().copied().collect();
            writeln!(out, "{}", join_f64(&row))?;
        }
        out.flush()?;
        members.push(ManifestEntry {
            file,
            team_id: m.provenance().team_id.clone(),
            block_offset: m.provenance().block_offset,
        });
    }
    let manifest = Manifest { spec: ensemble.spec, members, short_series: ensemble.short_series.clone() };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_ensemble(dir: &Path) -> Result<CorrEnsemble> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let n = manifest.spec.n_dim;
    let mut matrices = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let reader = BufReader::new(fs::File::open(dir.join(&entry.file))?);
        let mut values = Vec::with_capacity(n * n);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                values.push(parse_f64(field, i + 1)?);
            }
        }
        if values.len() != n * n {
            return Err(Error::Parse {
                line: 0,
                message: format!("{} holds {} values, expected {}", entry.file, values.len(), n * n),
            });
        }
        let entries = DMatrix::from_row_slice(n, n, &values);
        matrices.push(CorrMatrix::from_entries(entries, Provenance::new(entry.team_id.clone(), entry.block_offset))?);
    }
    let mut ensemble = CorrEnsemble::from_matrices(manifest.spec, matrices)?;
    ensemble.short_series = manifest.short_series;
    Ok(ensemble)
}

/// One row per spectrum: `team_id,block_offset,k,eigenvalues...`.
pub fn write_spectra<W: Write>(mut out: W, spectra: &[Spectrum]) -> Result<()> {
    writeln!(out, "team_id,block_offset,k,eigenvalues")?;
    for s in spectra {
        writeln!(out, "{},{},{},{}", s.source.team_id, s.source.block_offset, s.k_removed, join_f64(&s.eigenvalues))?;
    }
    Ok(())
}

pub fn read_spectra<R: BufRead>(source: R) -> Result<Vec<Spectrum>> {
    data_rows(source)?
        .into_iter()
        .map(|(line, row)| {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() < 4 {
                return Err(Error::Parse { line, message: "spectrum row needs at least 4 fields".into() });
            }
            let eigenvalues = fields[3..].iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?;
            Ok(Spectrum {
                eigenvalues,
                source: Provenance::new(fields[0], parse_usize(fields[1], line)?),
                k_removed: parse_usize(fields[2], line)?,
            })
        })
        .collect()
}

/// Two-column CSV with the given header names.
pub fn write_xy<W: Write>(mut out: W, names: (&str, &str), x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    writeln!(out, "{},{}", names.0, names.1)?;
    for (a, b) in x.iter().zip(y) {
        writeln!(out, "{},{}", fmt_f64(*a), fmt_f64(*b))?;
    }
    Ok(())
}

pub fn read_xy<R: BufRead>(source: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (line, row) in data_rows(source)? {
        let mut fields = row.split(',');
        match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => {
                x.push(parse_f64(a, line)?);
                y.push(parse_f64(b, line)?);
            }
            _ => return Err(Error::Parse { line, message: "expected two columns".into() }),
        }
    }
    Ok((x, y))
}

pub fn write_basis<W: Write>(out: W, basis: &PolyBasis) -> Result<()> {
    serde_json::to_writer_pretty(out, basis)?;
    Ok(())
}

pub fn read_basis<R: std::io::Read>(source: R) -> Result<PolyBasis> {
    Ok(serde_json::from_reader(source)?)
}

/// One row per sequence: `team_id,block_offset,method,fit_degree,excluded,levels...`.
pub fn write_unfolded<W: Write>(mut out: W, unfolded: &[UnfoldedSpectrum]) -> Result<()> {
    writeln!(out, "team_id,block_offset,method,fit_degree,excluded,levels")?;
    for u in unfolded {
        let method = match u.method {
            UnfoldMethod::Theoretical => "THEORETICAL",
            UnfoldMethod::Numerical => "NUMERICAL",
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            u.source.team_id,
            u.source.block_offset,
            method,
            u.fit_degree,
            u.excluded,
            join_f64(&u.levels)
        )?;
    }
    Ok(())
}

pub fn read_unfolded<R: BufRead>(source: R) -> Result<Vec<UnfoldedSpectrum>> {
    data_rows(source)?
        .into_iter()
        .map(|(line, row)| {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() < 5 {
                return Err(Error::Parse { line, message: "unfolded row needs at least 5 fields".into() });
            }
            let method = match fields[2] {
                "THEORETICAL" => UnfoldMethod::Theoretical,
                "NUMERICAL" => UnfoldMethod::Numerical,
                other => return Err(Error::Parse { line, message: format!("unknown method {other:?}") }),
            };
            Ok(UnfoldedSpectrum {
                levels: fields[5..].iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?,
                method,
                fit_degree: parse_usize(fields[3], line)?,
                source: Provenance::new(fields[0], parse_usize(fields[1], line)?),
                excluded: parse_usize(fields[4], line)?,
            })
        })
        .collect()
}

/// JSON sidecar accompanying a curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSidecar {
    pub kind: CurveKind,
    pub parameters: serde_json::Value,
    /// Reference curve at the same abscissa, when one exists.
    pub reference: Option<Vec<f64>>,
}

/// Writes `<stem>.csv` and `<stem>.json`.
pub fn write_curve(dir: &Path, stem: &str, curve: &StatCurve, sidecar: &CurveSidecar) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(r) = &sidecar.reference {
        if r.len() != curve.values.len() {
            return Err(Error::Contract("reference length differs from curve length".into()));
        }
    }
    let mut out = BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
    write_xy(&mut out, ("x", "value"), &curve.abscissa, &curve.values)?;
    out.flush()?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_curve(dir: &Path, stem: &str) -> Result<(StatCurve, CurveSidecar)> {
    let sidecar: CurveSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let (x, y) = read_xy(BufReader::new(fs::File::open(dir.join(format!("{stem}.csv")))?))?;
    Ok((StatCurve::new(sidecar.kind, x, y)?, sidecar))
}
