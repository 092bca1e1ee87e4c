//! Lagged cross-correlation matrices of a single time series.
//!
//! A block of `B = 2N - 1` consecutive values is cut into `N` overlapping
//! windows of length `T = B - N + 1`; window `i` starts at position `i`.
//! Entry `(i, j)` is the Pearson correlation of windows `i` and `j`, so the
//! lag between them is `|i - j|`. An ensemble is formed by sliding the block
//! along the series by `shift` values at a time.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::ingest::{mean_std, ScoreSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n_dim: usize,
    pub block_len: usize,
    pub sub_len: usize,
    pub shift: usize,
}

impl WindowSpec {
    /// Default geometry for an `n_dim x n_dim` matrix: `B = 2N - 1`, `T = N`, shift `N`.
    pub fn new(n_dim: usize) -> Result<Self> {
        if n_dim < 2 {
            return Err(contract(format!("n_dim must be >= 2, got {n_dim}")));
        }
        Self::with_geometry(n_dim, 2 * n_dim - 1, n_dim)
    }

    pub fn with_geometry(n_dim: usize, block_len: usize, shift: usize) -> Result<Self> {
        if n_dim < 2 {
            return Err(contract(format!("n_dim must be >= 2, got {n_dim}")));
        }
        if block_len < n_dim + 1 {
            return Err(contract(format!("block_len {block_len} leaves windows shorter than 2 for n_dim {n_dim}")));
        }
        if shift == 0 {
            return Err(contract("shift must be positive"));
        }
        Ok(Self { n_dim, block_len, sub_len: block_len - n_dim + 1, shift })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let rebuilt = Self::with_geometry(self.n_dim, self.block_len, self.shift)?;
        if rebuilt.sub_len != self.sub_len {
            return Err(contract(format!(
                "sub_len {} must equal block_len - n_dim + 1 = {}",
                self.sub_len, rebuilt.sub_len
            )));
        }
        Ok(())
    }

    /// Number of ensemble members a series of `len` values yields.
    pub fn member_count(&self, len: usize) -> usize {
        if len < self.block_len {
            0
        } else {
            (len - self.block_len) / self.shift + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub team_id: String,
    pub block_offset: usize,
}

impl Provenance {
    pub fn new(team_id: impl Into<String>, block_offset: usize) -> Self {
        Self { team_id: team_id.into(), block_offset }
    }
}

/// A symmetric correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
}

impl CorrMatrix {
    /// Wraps an existing matrix after checking symmetry, unit diagonal and range.
    pub fn from_entries(entries: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let n = entries.nrows();
        if n != entries.ncols() || n < 2 {
            return Err(contract(format!("expected square matrix of size >= 2, got {}x{}", n, entries.ncols())));
        }
        for i in 0..n {
            if entries[(i, i)] != 1.0 {
                return Err(contract(format!("diagonal entry {i} is {} not 1", entries[(i, i)])));
            }
            for j in 0..i {
                let v = entries[(i, j)];
                if v != entries[(j, i)] {
                    return Err(contract(format!("matrix not symmetric at ({i}, {j})")));
                }
                if !(v.abs() <= 1.0 + 1e-12) {
                    return Err(contract(format!("entry ({i}, {j}) = {v} outside [-1, 1]")));
                }
            }
        }
        Ok(Self { entries, provenance })
    }

    pub fn n_dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Standardizes a window to zero mean and unit population standard deviation.
pub fn normalize_subsequence(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(contract(format!("subsequence needs at least 2 values, got {}", x.len())));
    }
    let (mean, std) = mean_std(x);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(std > 1e-12 * scale) || !std.is_finite() {
        return Err(Error::DegenerateSubsequence { offset: 0, window: x.to_vec() });
    }
    Ok(x.iter().map(|v| (v - mean) / std).collect())
}

/// `(1/T) * sum_t y1(t) y2(t)` for two normalized sequences.
pub fn correlation(y1: &[f64], y2: &[f64]) -> Result<f64> {
    if y1.len() != y2.len() {
        return Err(contract(format!("length mismatch: {} vs {}", y1.len(), y2.len())));
    }
    if y1.len() < 2 {
        return Err(contract("correlation needs at least 2 samples"));
    }
    Ok(dot(y1, y2) / y1.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the lagged correlation matrix of one block.
pub fn build_matrix(block: &[f64], spec: &WindowSpec, provenance: Provenance) -> Result<CorrMatrix> {
    spec.validate()?;
    if block.len() != spec.block_len {
        return Err(contract(format!("block length {} does not match spec.block_len {}", block.len(), spec.block_len)));
    }
    let n = spec.n_dim;
    let t = spec.sub_len;
    let windows = (0..n)
        .map(|i| {
            normalize_subsequence(&block[i..i + t]).map_err(|e| match e {
                Error::DegenerateSubsequence { window, .. } => {
                    Error::DegenerateSubsequence { offset: provenance.block_offset + i, window }
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = dot(&windows[i], &windows[j]) / t as f64;
            entries[(i, j)] = c;
            entries[(j, i)] = c;
        }
    }
    Ok(CorrMatrix { entries, provenance })
}

/// A set of correlation matrices sharing one window geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrEnsemble {
    pub spec: WindowSpec,
    pub matrices: Vec<CorrMatrix>,
    pub per_team_index: BTreeMap<String, Vec<usize>>,
    /// Teams whose series was shorter than one block.
    pub short_series: Vec<String>,
}

impl CorrEnsemble {
    pub fn empty(spec: WindowSpec) -> Self {
        Self { spec, matrices: Vec::new(), per_team_index: BTreeMap::new(), short_series: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Appends another ensemble with the same geometry.
    pub fn extend(&mut self, other: CorrEnsemble) -> Result<()> {
        if other.spec != self.spec {
            return Err(contract("cannot merge ensembles with different window specs"));
        }
        let base = self.matrices.len();
        for (team, idx) in other.per_team_index {
            self.per_team_index.entry(team).or_default().extend(idx.into_iter().map(|i| i + base));
        }
        self.matrices.extend(other.matrices);
        self.short_series.extend(other.short_series);
        Ok(())
    }

    pub fn team_members(&self, team: &str) -> impl Iterator<Item = &CorrMatrix> {
        self.per_team_index.get(team).into_iter().flatten().map(move |&i| &self.matrices[i])
    }

    /// Assembles an ensemble from loose matrices, indexing them by team.
    pub fn from_matrices(spec: WindowSpec, matrices: Vec<CorrMatrix>) -> Result<Self> {
        spec.validate()?;
        let mut per_team_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, m) in matrices.iter().enumerate() {
            if m.n_dim() != spec.n_dim {
                return Err(contract(format!("member {i} has n_dim {} != {}", m.n_dim(), spec.n_dim)));
            }
            per_team_index.entry(m.provenance.team_id.clone()).or_default().push(i);
        }
        for idx in per_team_index.values() {
            for w in idx.windows(2) {
                let (a, b) = (&matrices[w[0]].provenance, &matrices[w[1]].provenance);
                if b.block_offset != a.block_offset + spec.shift {
                    return Err(contract(format!(
                        "offsets for team {} must increase by {}: {} then {}",
                        a.team_id, spec.shift, a.block_offset, b.block_offset
                    )));
                }
            }
        }
        Ok(Self { spec, matrices, per_team_index, short_series: Vec::new() })
    }
}

/// Slices a series into blocks at offsets `0, shift, 2*shift, ...` while a
/// full block fits. A series shorter than one block gives an empty ensemble
/// with the team listed in `short_series`.
pub fn build_ensemble(series: &ScoreSeries, spec: &WindowSpec) -> Result<CorrEnsemble> {
    spec.validate()?;
    let count = spec.member_count(series.len());
    let mut ens = CorrEnsemble::empty(*spec);
    if count == 0 {
        ens.short_series.push(series.team_id().to_string());
        return Ok(ens);
    }
    let scores = series.scores();
    let matrices = (0..count)
        .into_par_iter()
        .map(|m| {
            let offset = m * spec.shift;
            build_matrix(&scores[offset..offset + spec.block_len], spec, Provenance::new(series.team_id(), offset))
        })
        .collect::<Result<Vec<_>>>()?;
    ens.per_team_index.insert(series.team_id().to_string(), (0..count).collect());
    ens.matrices = matrices;
    Ok(ens)
}

/// Builds and concatenates the ensembles of several series, in input order.
pub fn build_team_ensembles(series: &[ScoreSeries], spec: &WindowSpec) -> Result<CorrEnsemble> {
    let mut ens = CorrEnsemble::empty(*spec);
    for s in series {
        ens.extend(build_ensemble(s, spec)?)?;
    }
    Ok(ens)
}
