//! Seeded synthetic ensembles: complex Wishart spectra, GUE levels, Poisson
//! levels and common-mode score series.
//!
//! Every generator draws from a ChaCha8 stream selected by `(seed, stream)`,
//! so batches can be produced in parallel and still be bit-reproducible.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrmat::Provenance;
use crate::error::{contract, Result};
use crate::ingest::{mean_std, FormatTag, ScoreSeries};
use crate::spectra::Spectrum;
use crate::unfold::{unfold_numerical, unfold_numerical_pooled, UnfoldedSpectrum, DEFAULT_FIT_DEGREE};

pub const ALGORITHM_ID: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub algorithm_id: String,
    #[serde(default)]
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, algorithm_id: ALGORITHM_ID.to_string(), stream: 0 }
    }

    /// The same seed on an independent stream.
    pub fn with_stream(&self, stream: u64) -> Self {
        Self { stream, ..self.clone() }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        assert_eq!(self.algorithm_id, ALGORITHM_ID, "unsupported generator family");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn complex_normal<R: Rng>(rng: &mut R) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn hermitian_eigenvalues(m: DMatrix<Complex<f64>>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn synthetic_source(label: &str, stream: u64) -> Provenance {
    Provenance::new(label, stream as usize)
}

/// Eigenvalues of `(1/T) A A^H` for a given `n x T` matrix `A`.
pub fn wishart_eigenvalues(a: &DMatrix<Complex<f64>>) -> Vec<f64> {
    let t = a.ncols() as f64;
    let w = a * a.adjoint() / Complex::new(t, 0.0);
    hermitian_eigenvalues(w)
}

/// Spectrum of `(1/T) A A^H` with `A` an `n_dim x round(q n_dim)` matrix of
/// i.i.d. standard complex normals (`E|A_ij|^2 = 1`).
pub fn sample_wishart_spectrum(n_dim: usize, q: f64, rng: &RngSpec) -> Result<Spectrum> {
    if n_dim < 2 {
        return Err(contract(format!("n_dim must be >= 2, got {n_dim}")));
    }
    if !(q >= 1.0) {
        return Err(contract(format!("samples-per-dimension ratio must be >= 1, got {q}")));
    }
    let t = (q * n_dim as f64).round() as usize;
    let mut r = rng.rng();
    let a = DMatrix::from_fn(n_dim, t, |_, _| complex_normal(&mut r));
    Ok(Spectrum { eigenvalues: wishart_eigenvalues(&a), source: synthetic_source("wishart", rng.stream), k_removed: 0 })
}

/// Raw GUE eigenvalues of `(G + G^H)/2`, `G` i.i.d. standard complex normal.
pub fn sample_gue_spectrum(n_dim: usize, rng: &RngSpec) -> Spectrum {
    let mut r = rng.rng();
    let g = DMatrix::from_fn(n_dim, n_dim, |_, _| complex_normal(&mut r));
    let h = (&g + g.adjoint()) * Complex::new(0.5, 0.0);
    Spectrum { eigenvalues: hermitian_eigenvalues(h), source: synthetic_source("gue", rng.stream), k_removed: 0 }
}

/// GUE levels unfolded numerically (degree 5) with the outer quarter on each
/// side dropped.
pub fn sample_gue_unfolded(n_dim: usize, rng: &RngSpec) -> Result<UnfoldedSpectrum> {
    if n_dim < 10 {
        return Err(contract(format!("n_dim must be >= 10, got {n_dim}")));
    }
    let spectrum = sample_gue_spectrum(n_dim, rng);
    unfold_numerical(&spectrum, DEFAULT_FIT_DEGREE)?.trim_edges(0.25)
}

/// Cumulative sums of i.i.d. unit-exponential spacings.
pub fn sample_poisson_levels(count: usize, rng: &RngSpec) -> Result<UnfoldedSpectrum> {
    if count < 2 {
        return Err(contract(format!("need at least 2 levels, got {count}")));
    }
    let mut r = rng.rng();
    let mut acc = 0.0;
    let levels = (0..count)
        .map(|_| {
            acc += r.sample::<f64, _>(Exp1);
            acc
        })
        .collect();
    Ok(UnfoldedSpectrum {
        levels,
        method: crate::unfold::UnfoldMethod::Numerical,
        fit_degree: 0,
        source: synthetic_source("poisson", rng.stream),
        excluded: 0,
    })
}

/// `gamma m(t) + sqrt(1 - gamma^2) eps(t)` where `m` is a standardized slow
/// sinusoid (period in `[length/2, length)`) plus a random linear drift, and
/// `eps` is i.i.d. standard normal.
pub fn common_mode_values(length: usize, mode_strength: f64, rng: &RngSpec) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(contract(format!("length must be >= 2, got {length}")));
    }
    if !(0.0..1.0).contains(&mode_strength) {
        return Err(contract(format!("mode strength must lie in [0, 1), got {mode_strength}")));
    }
    let mut r = rng.rng();
    let len = length as f64;
    let period = r.random_range(0.5 * len..len);
    let phase = r.random_range(0.0..2.0 * PI);
    let drift: f64 = r.sample(StandardNormal);
    let raw: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64;
            (2.0 * PI * t / period + phase).sin() + drift * (t / len - 0.5)
        })
        .collect();
    let (mean, std) = mean_std(&raw);
    let noise_scale = (1.0 - mode_strength * mode_strength).sqrt();
    Ok(raw
        .iter()
        .map(|m| {
            let mode = if std > 0.0 { (m - mean) / std } else { 0.0 };
            let eps: f64 = r.sample(StandardNormal);
            mode_strength * mode + noise_scale * eps
        })
        .collect())
}

/// Score location and scale used to turn standardized values into runs.
pub const SCORE_LOCATION: f64 = 200.0;
pub const SCORE_SCALE: f64 = 50.0;

/// A common-mode series mapped affinely onto non-negative scores
/// (`200 + 50 x`, shifted up further if needed). Correlation matrices are
/// unaffected by the affine map.
pub fn sample_common_mode_series(
    team_id: &str,
    format_tag: FormatTag,
    length: usize,
    mode_strength: f64,
    rng: &RngSpec,
) -> Result<ScoreSeries> {
    let x = common_mode_values(length, mode_strength, rng)?;
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let loc = SCORE_LOCATION.max(-SCORE_SCALE * min);
    ScoreSeries::new(team_id, format_tag, x.iter().map(|v| loc + SCORE_SCALE * v).collect())
}

/// `teams` independent common-mode series named `S01, S02, ...`, team `i`
/// drawn from stream `i`.
pub fn sample_common_mode_teams(
    teams: usize,
    format_tag: FormatTag,
    length: usize,
    mode_strength: f64,
    rng: &RngSpec,
) -> Result<Vec<ScoreSeries>> {
    (0..teams)
        .map(|i| {
            sample_common_mode_series(
                &format!("S{:02}", i + 1),
                format_tag,
                length,
                mode_strength,
                &rng.with_stream(i as u64),
            )
        })
        .collect()
}

/// `count` Wishart spectra on streams `0..count`.
pub fn wishart_batch(count: usize, n_dim: usize, q: f64, rng: &RngSpec) -> Result<Vec<Spectrum>> {
    (0..count).into_par_iter().map(|i| sample_wishart_spectrum(n_dim, q, &rng.with_stream(i as u64))).collect()
}

/// `count` GUE spectra on streams `0..count`, unfolded by one degree-5 fit
/// to their pooled staircase, outer quarter on each side dropped.
///
/// A per-matrix fit follows each spectrum's own long-wavelength
/// fluctuations and depresses the number variance at large `n`.
pub fn gue_unfolded_batch(count: usize, n_dim: usize, rng: &RngSpec) -> Result<Vec<UnfoldedSpectrum>> {
    if n_dim < 10 {
        return Err(contract(format!("n_dim must be >= 10, got {n_dim}")));
    }
    let spectra: Vec<Spectrum> =
        (0..count).into_par_iter().map(|i| sample_gue_spectrum(n_dim, &rng.with_stream(i as u64))).collect();
    unfold_numerical_pooled(&spectra, DEFAULT_FIT_DEGREE)?.iter().map(|u| u.trim_edges(0.25)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_stub_wishart() {
        let a = DMatrix::<Complex<f64>>::identity(2, 2);
        let e = wishart_eigenvalues(&a);
        assert!((e[0] - 0.5).abs() < 1e-15 && (e[1] - 0.5).abs() < 1e-15);
        assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wishart_nonnegative_and_trace_concentrates() {
        let s = sample_wishart_spectrum(60, 20.0, &RngSpec::new(8)).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| v >= -1e-12));
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum / 60.0 - 1.0).abs() < 0.05, "{sum}");
        assert!(sample_wishart_spectrum(1, 2.0, &RngSpec::new(1)).is_err());
        assert!(sample_wishart_spectrum(5, 0.5, &RngSpec::new(1)).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let r = RngSpec::new(99).with_stream(3);
        assert_eq!(sample_gue_unfolded(40, &r).unwrap(), sample_gue_unfolded(40, &r).unwrap());
        assert_eq!(sample_poisson_levels(500, &r).unwrap(), sample_poisson_levels(500, &r).unwrap());
        assert_eq!(sample_wishart_spectrum(10, 2.0, &r).unwrap(), sample_wishart_spectrum(10, 2.0, &r).unwrap());
        let a = sample_common_mode_series("A", FormatTag::Odi, 300, 0.6, &r).unwrap();
        let b = sample_common_mode_series("A", FormatTag::Odi, 300, 0.6, &r).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            sample_poisson_levels(50, &r).unwrap().levels,
            sample_poisson_levels(50, &r.with_stream(4)).unwrap().levels
        );
    }

    #[test]
    fn gue_pooled_mean_is_near_zero() {
        let spectra: Vec<Spectrum> =
            (0..50).map(|i| sample_gue_spectrum(40, &RngSpec::new(5).with_stream(i))).collect();
        let pooled: Vec<f64> = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
        let (mean, std) = mean_std(&pooled);
        // per-matrix trace fluctuations are sqrt(n/2) / n per level
        let per_matrix_means: Vec<f64> = spectra.iter().map(|s| mean_std(&s.eigenvalues).0).collect();
        let se = mean_std(&per_matrix_means).1 / (spectra.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}, std {std}");
    }

    #[test]
    fn poisson_levels_have_unit_mean_spacing() {
        let u = sample_poisson_levels(20_000, &RngSpec::new(2)).unwrap();
        assert!((u.mean_spacing() - 1.0).abs() < 0.03);
        assert!(u.levels.windows(2).all(|w| w[0] <= w[1]));
        assert!(sample_poisson_levels(1, &RngSpec::new(2)).is_err());
    }

    #[test]
    fn common_mode_scores_are_valid() {
        let s = sample_common_mode_series("X", FormatTag::Test, 900, 0.6, &RngSpec::new(1)).unwrap();
        assert_eq!(s.len(), 900);
        assert!(s.scores().iter().all(|&v| v >= 0.0));
        assert!(common_mode_values(10, 1.0, &RngSpec::new(1)).is_err());
        assert!(common_mode_values(1, 0.5, &RngSpec::new(1)).is_err());
        let pure = common_mode_values(2000, 0.0, &RngSpec::new(1)).unwrap();
        let (m, sd) = mean_std(&pure);
        assert!(m.abs() < 0.1 && (sd - 1.0).abs() < 0.05);
    }
}
