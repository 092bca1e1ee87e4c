//! Unfolding: mapping raw eigenvalues onto levels with unit mean spacing,
//! either through the integrated theoretical density or through a
//! least-squares polynomial fit to the empirical staircase.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corrmat::Provenance;
use crate::error::{contract, Error, Result};
use crate::mpmodel::{integrated_density, support_bounds, MPParams};
use crate::spectra::Spectrum;

pub const DEFAULT_FIT_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnfoldMethod {
    Theoretical,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedSpectrum {
    pub levels: Vec<f64>,
    pub method: UnfoldMethod,
    /// Polynomial degree for numerical unfolding, 0 otherwise.
    pub fit_degree: usize,
    pub source: Provenance,
    /// Eigenvalues outside `[X-, X+]` dropped by theoretical unfolding.
    pub excluded: usize,
}

impl UnfoldedSpectrum {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.levels.first(), self.levels.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn mean_spacing(&self) -> f64 {
        if self.levels.len() < 2 {
            return f64::NAN;
        }
        self.span() / (self.levels.len() - 1) as f64
    }

    /// Keeps the levels with index in `[floor(f n), n - floor(f n))`.
    pub fn trim_edges(&self, fraction: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&fraction) {
            return Err(contract(format!("edge fraction {fraction} must lie in [0, 0.5)")));
        }
        let n = self.levels.len();
        let cut = (fraction * n as f64).floor() as usize;
        Ok(Self { levels: self.levels[cut..n - cut].to_vec(), ..self.clone() })
    }
}

/// `y_k = N_in * integral_{X-}^{x_k} rho`, over eigenvalues inside the support.
pub fn unfold_theoretical(spectrum: &Spectrum, params: &MPParams) -> Result<UnfoldedSpectrum> {
    params.validate()?;
    let (lo, hi) = support_bounds(params);
    let inside: Vec<f64> = spectrum.eigenvalues.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    let excluded = spectrum.len() - inside.len();
    if inside.is_empty() {
        return Err(Error::Empty(format!("no eigenvalues inside the support [{lo}, {hi}] ({excluded} excluded)")));
    }
    let n_in = inside.len() as f64;
    let mut levels: Vec<f64> = inside.iter().map(|&x| n_in * integrated_density(x, params, 1e-10)).collect();
    // Quadrature noise must not break the ordering of tied inputs.
    for i in 1..levels.len() {
        if levels[i] < levels[i - 1] {
            levels[i] = levels[i - 1];
        }
    }
    Ok(UnfoldedSpectrum {
        levels,
        method: UnfoldMethod::Theoretical,
        fit_degree: 0,
        source: spectrum.source.clone(),
        excluded,
    })
}

/// A least-squares polynomial fit of the cumulative level count.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseFit {
    pub degree: usize,
    /// Monomial coefficients in `t = (x - center)/scale`, lowest order first.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

impl StaircaseFit {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }
}

/// Fits the staircase of one or more pooled spectra. With `m` spectra the
/// k-th pooled eigenvalue gets count `(k - 1/2) / m`, i.e. the mean
/// staircase of a single member.
pub fn fit_staircase(pooled: &[f64], members: usize, degree: usize) -> Result<StaircaseFit> {
    if degree < 1 {
        return Err(contract("fit degree must be at least 1"));
    }
    if members == 0 {
        return Err(contract("member count must be positive"));
    }
    if pooled.len() < degree + 2 {
        return Err(contract(format!(
            "numerical unfolding of degree {degree} needs at least {} levels, got {}",
            degree + 2,
            pooled.len()
        )));
    }
    let mut xs = pooled.to_vec();
    xs.sort_by(f64::total_cmp);
    let lo = xs[0];
    let hi = xs[xs.len() - 1];
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    if !(scale > 0.0) {
        return Err(Error::DegenerateFit { degree, message: "all levels coincide".into() });
    }
    let m = members as f64;
    let n = xs.len();
    let design = DMatrix::from_fn(n, degree + 1, |r, c| ((xs[r] - center) / scale).powi(c as i32));
    let target = DVector::from_fn(n, |r, _| (r as f64 + 0.5) / m);
    // Column-pivot-free QR on a well-scaled Vandermonde matrix.
    let qr = design.clone().qr();
    let r = qr.r();
    let rmax = (0..=degree).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rmin = (0..=degree).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(rmin > 1e-12 * rmax) {
        return Err(Error::DegenerateFit { degree, message: "singular least-squares system; lower the degree".into() });
    }
    let qt_b = qr.q().transpose() * &target;
    let coeffs = r
        .solve_upper_triangular(&qt_b)
        .ok_or_else(|| Error::DegenerateFit { degree, message: "triangular solve failed".into() })?;
    Ok(StaircaseFit { degree, coefficients: coeffs.iter().copied().collect(), center, scale })
}

/// Pool-adjacent-violators projection onto non-decreasing sequences.
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (v2, n2) = blocks[blocks.len() - 1];
            let (v1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let n = n1 + n2;
            blocks.push(((v1 * n1 as f64 + v2 * n2 as f64) / n as f64, n));
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Maps `eigenvalues` through a staircase fit, repairing any decrease.
pub fn apply_fit(fit: &StaircaseFit, eigenvalues: &[f64], source: Provenance) -> UnfoldedSpectrum {
    let mut xs = eigenvalues.to_vec();
    xs.sort_by(f64::total_cmp);
    let raw: Vec<f64> = xs.iter().map(|&x| fit.eval(x)).collect();
    let levels = if raw.windows(2).all(|w| w[0] <= w[1]) { raw } else { isotonic(&raw) };
    UnfoldedSpectrum { levels, method: UnfoldMethod::Numerical, fit_degree: fit.degree, source, excluded: 0 }
}

/// Unfolds one spectrum by a degree-`fit_degree` fit of its own staircase.
pub fn unfold_numerical(spectrum: &Spectrum, fit_degree: usize) -> Result<UnfoldedSpectrum> {
    let fit = fit_staircase(&spectrum.eigenvalues, 1, fit_degree)?;
    Ok(apply_fit(&fit, &spectrum.eigenvalues, spectrum.source.clone()))
}

/// Unfolds several spectra with one fit to their pooled staircase.
pub fn unfold_numerical_pooled(spectra: &[Spectrum], fit_degree: usize) -> Result<Vec<UnfoldedSpectrum>> {
    if spectra.is_empty() {
        return Err(Error::Empty("no spectra to unfold".into()));
    }
    let pooled: Vec<f64> = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
    let fit = fit_staircase(&pooled, spectra.len(), fit_degree)?;
    Ok(spectra.iter().map(|s| apply_fit(&fit, &s.eigenvalues, s.source.clone())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpmodel::mp_quantile;
    use proptest::prelude::*;

    fn spectrum(eigs: Vec<f64>) -> Spectrum {
        Spectrum { eigenvalues: eigs, source: Provenance::new("T", 0), k_removed: 0 }
    }

    fn test_params() -> MPParams {
        MPParams::new(2.75, 3.535).unwrap()
    }

    #[test]
    fn theoretical_endpoints_and_median() {
        let p = test_params();
        let (lo, hi) = support_bounds(&p);
        let med = mp_quantile(0.5, &p);
        let u = unfold_theoretical(&spectrum(vec![lo, med, hi]), &p).unwrap();
        assert_eq!(u.levels[0], 0.0);
        assert!((u.levels[1] - 1.5).abs() < 1e-9);
        assert!((u.levels[2] - 3.0).abs() < 1e-9);
        assert_eq!(u.method, UnfoldMethod::Theoretical);
    }

    #[test]
    fn theoretical_excludes_outliers() {
        let p = test_params();
        let u = unfold_theoretical(&spectrum(vec![0.1, 0.5, 1.0, 1.5, 3.0, 9.0]), &p).unwrap();
        assert_eq!(u.excluded, 3);
        assert_eq!(u.len(), 3);
        assert!(u.levels.windows(2).all(|w| w[0] <= w[1]));
        assert!(unfold_theoretical(&spectrum(vec![5.0, 6.0]), &p).is_err());
    }

    #[test]
    fn equally_spaced_linear_fit_is_exact() {
        let eigs: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let u = unfold_numerical(&spectrum(eigs), 1).unwrap();
        for w in u.levels.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_levels() {
        assert!(matches!(unfold_numerical(&spectrum(vec![1.0, 2.0, 3.0]), 5), Err(Error::Contract(_))));
        assert!(matches!(unfold_numerical(&spectrum(vec![2.0; 10]), 2), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn isotonic_projection() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn mp_sample_unfolds_to_unit_spacing() {
        let p = test_params();
        let n = 400;
        let eigs: Vec<f64> = (0..n).map(|i| mp_quantile((i as f64 + 0.5) / n as f64, &p)).collect();
        let u = unfold_numerical(&spectrum(eigs.clone()), 5).unwrap();
        assert!((u.mean_spacing() - 1.0).abs() < 0.02);
        let t = unfold_theoretical(&spectrum(eigs), &p).unwrap();
        assert!((t.mean_spacing() - 1.0).abs() < 0.01);
    }

    #[test]
    fn trim_edges_keeps_centre() {
        let u = unfold_numerical(&spectrum((0..20).map(|i| i as f64).collect()), 1).unwrap();
        let t = u.trim_edges(0.25).unwrap();
        assert_eq!(t.len(), 10);
        assert!((t.levels[0] - u.levels[5]).abs() < 1e-15);
        assert!(u.trim_edges(0.5).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariance(
            raw in prop::collection::vec(0.0f64..10.0, 30..80),
            alpha in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let mut eigs = raw.clone();
            eigs.sort_by(f64::total_cmp);
            prop_assume!(eigs.windows(2).all(|w| w[1] - w[0] > 1e-6));
            let moved: Vec<f64> = eigs.iter().map(|x| alpha * x + shift).collect();
            let u1 = unfold_numerical(&spectrum(eigs), 5).unwrap();
            let u2 = unfold_numerical(&spectrum(moved), 5).unwrap();
            for (a, b) in u1.levels.iter().zip(&u2.levels) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn numerical_levels_non_decreasing(raw in prop::collection::vec(0.0f64..5.0, 10..60), deg in 1usize..7) {
            prop_assume!(raw.len() >= deg + 2);
            let mut sorted = raw.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted[sorted.len() - 1] - sorted[0] > 1e-3);
            if let Ok(u) = unfold_numerical(&spectrum(raw), deg) {
                prop_assert!(u.levels.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
