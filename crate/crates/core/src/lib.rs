//! Random-matrix analysis of lagged cross-correlation matrices built from
//! time series.
//!
//! The pipeline runs: [`ingest`] score series, slice them into ensembles of
//! lagged correlation matrices ([`corrmat`]), diagonalize with optional
//! extreme-band removal ([`spectra`]), compare the level density with the
//! Marchenko-Pastur-type law and its finite-N counterpart ([`mpmodel`]),
//! [`unfold`] the spectra, and measure fluctuation statistics against GUE
//! and Poisson baselines ([`stats`]). [`synth`] provides seeded oracles.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrmat;
pub mod error;
pub mod export;
pub mod ingest;
pub mod mpmodel;
pub mod quad;
pub mod spectra;
pub mod stats;
pub mod synth;
pub mod unfold;

pub use corrmat::{build_ensemble, build_matrix, CorrEnsemble, CorrMatrix, Provenance, WindowSpec};
pub use error::{Error, Result};
pub use ingest::{parse_scores, series_summary, FormatTag, ScoreSeries};
pub use mpmodel::{MPParams, PolyBasis};
pub use spectra::Spectrum;
pub use stats::{CurveKind, KSResult, SpacingSample, StatCurve};
pub use synth::RngSpec;
pub use unfold::{UnfoldMethod, UnfoldedSpectrum};
