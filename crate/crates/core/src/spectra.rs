//! Eigenvalue spectra, extreme-band removal and largest-eigenvalue tracking.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrmat::{CorrEnsemble, CorrMatrix, Provenance};
use crate::error::{contract, Error, Result};
use crate::stats::{CurveKind, StatCurve};

/// Ascending eigenvalues of one (possibly band-reduced) matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub source: Provenance,
    pub k_removed: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is non-empty")
    }
}

/// Anything that can be diagonalized as a real symmetric matrix with provenance.
pub trait SymmetricSource {
    fn matrix(&self) -> &DMatrix<f64>;
    fn source(&self) -> &Provenance;
    fn k_removed(&self) -> usize;
}

impl SymmetricSource for CorrMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        self.entries()
    }
    fn source(&self) -> &Provenance {
        self.provenance()
    }
    fn k_removed(&self) -> usize {
        0
    }
}

/// A correlation matrix with its `k` outermost super- and sub-diagonals zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct BandReduced {
    pub entries: DMatrix<f64>,
    pub provenance: Provenance,
    pub k_removed: usize,
}

impl SymmetricSource for BandReduced {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
    fn source(&self) -> &Provenance {
        &self.provenance
    }
    fn k_removed(&self) -> usize {
        self.k_removed
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(contract(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if n == 0 {
        return Err(Error::Empty("matrix has no rows".into()));
    }
    let tol = 1e-10 * m.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(contract(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Ascending eigenvalues with matching unit eigenvectors (columns).
pub fn symmetric_eigenpairs(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(m)?;
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

pub fn eigenvalues<M: SymmetricSource + ?Sized>(m: &M) -> Result<Spectrum> {
    Ok(Spectrum {
        eigenvalues: symmetric_eigenvalues(m.matrix())?,
        source: m.source().clone(),
        k_removed: m.k_removed(),
    })
}

/// Zeroes entries with `|i - j| >= n - k`: the `k` outermost diagonals on each side.
pub fn remove_extreme_bands(m: &CorrMatrix, k: usize) -> Result<BandReduced> {
    let n = m.n_dim();
    if k >= n {
        return Err(contract(format!("k = {k} out of range [0, {}]", n - 1)));
    }
    let mut entries = m.entries().clone();
    zero_extreme_bands(&mut entries, k);
    Ok(BandReduced { entries, provenance: m.provenance().clone(), k_removed: k })
}

pub(crate) fn zero_extreme_bands(entries: &mut DMatrix<f64>, k: usize) {
    let n = entries.nrows();
    if k == 0 {
        return;
    }
    let cutoff = n - k;
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) >= cutoff {
                entries[(i, j)] = 0.0;
            }
        }
    }
}

/// Spectra of every ensemble member after removing `k` extreme bands, in member order.
pub fn ensemble_spectra(ensemble: &CorrEnsemble, k: usize) -> Result<Vec<Spectrum>> {
    ensemble
        .matrices
        .par_iter()
        .map(|m| if k == 0 { eigenvalues(m) } else { eigenvalues(&remove_extreme_bands(m, k)?) })
        .collect()
}

/// Member-wise mean of sorted eigenvalue vectors (the ensemble-averaged spectrum).
pub fn averaged_spectrum(spectra: &[Spectrum]) -> Result<Vec<f64>> {
    let first = spectra.first().ok_or_else(|| Error::Empty("no spectra to average".into()))?;
    let n = first.len();
    if spectra.iter().any(|s| s.len() != n) {
        return Err(contract("spectra to average differ in length"));
    }
    let mut avg = vec![0.0; n];
    for s in spectra {
        for (a, v) in avg.iter_mut().zip(&s.eigenvalues) {
            *a += v;
        }
    }
    let m = spectra.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    Ok(avg)
}

/// Ensemble-mean of the largest eigenvalue after band removal, for each `k`.
pub fn largest_eigenvalue_vs_k(ensemble: &CorrEnsemble, k_values: &[usize]) -> Result<StatCurve> {
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble has no matrices".into()));
    }
    let n = ensemble.spec.n_dim;
    let mut values = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if k >= n {
            return Err(contract(format!("k = {k} out of range [0, {}]", n - 1)));
        }
        let spectra = ensemble_spectra(ensemble, k)?;
        values.push(spectra.iter().map(Spectrum::max).sum::<f64>() / spectra.len() as f64);
    }
    StatCurve::new(CurveKind::MaxEigVsK, k_values.iter().map(|&k| k as f64).collect(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmat::{build_matrix, WindowSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corr(entries: DMatrix<f64>) -> CorrMatrix {
        CorrMatrix::from_entries(entries, Provenance::new("T", 0)).unwrap()
    }

    fn random_corr(n: usize, seed: u64) -> CorrMatrix {
        let spec = WindowSpec::new(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block: Vec<f64> = (0..spec.block_len).map(|_| rng.random_range(0.0..10.0)).collect();
        build_matrix(&block, &spec, Provenance::new("T", 0)).unwrap()
    }

    /// Coefficients of det(xI - A), highest degree first, via Faddeev-LeVerrier.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        let id = DMatrix::<f64>::identity(n, n);
        let mut c_prev = 1.0;
        for k in 1..=n {
            m = a * &m + &id * c_prev;
            let am = a * &m;
            let c = -am.trace() / k as f64;
            coeffs.push(c);
            c_prev = c;
        }
        coeffs
    }

    fn horner(c: &[f64], x: f64) -> f64 {
        c.iter().fold(0.0, |acc, &v| acc * x + v)
    }

    /// Real roots of a polynomial with only real roots, by grid scan and bisection.
    fn real_roots(c: &[f64], lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        let mut roots = Vec::new();
        let h = (hi - lo) / steps as f64;
        for s in 0..steps {
            let (mut a, mut b) = (lo + s as f64 * h, lo + (s + 1) as f64 * h);
            let (mut fa, fb) = (horner(c, a), horner(c, b));
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa * fb > 0.0 {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = horner(c, mid);
                if fa * fm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        roots
    }

    #[test]
    fn identity_spectrum() {
        let s = eigenvalues(&corr(DMatrix::identity(7, 7))).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert_eq!(s.k_removed, 0);
    }

    #[test]
    fn two_by_two_closed_form() {
        let r = 0.3;
        let s = eigenvalues(&corr(DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]))).unwrap();
        assert!((s.eigenvalues[0] - 0.7).abs() < 1e-9);
        assert!((s.eigenvalues[1] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn six_by_six_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut a = DMatrix::<f64>::zeros(6, 6);
        for i in 0..6 {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let vals = symmetric_eigenvalues(&a).unwrap();
        let roots = real_roots(&char_poly(&a), -7.0, 7.0, 20_000);
        assert_eq!(roots.len(), 6, "roots {roots:?}");
        for (v, r) in vals.iter().zip(&roots) {
            assert!((v - r).abs() < 1e-9, "{v} vs {r}");
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(matches!(symmetric_eigenvalues(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn eigenpair_residuals() {
        let m = random_corr(12, 9);
        let (vals, vecs) = symmetric_eigenpairs(m.entries()).unwrap();
        let norm = m.entries().norm();
        for (c, &lambda) in vals.iter().enumerate() {
            let v = vecs.column(c);
            let r = (m.entries() * v - v * lambda).norm();
            assert!(r <= 1e-8 * norm);
        }
    }

    #[test]
    fn band_removal_examples() {
        let m = random_corr(6, 1);
        assert_eq!(remove_extreme_bands(&m, 0).unwrap().entries, *m.entries());
        let d = remove_extreme_bands(&m, 5).unwrap().entries;
        assert_eq!(d, DMatrix::identity(6, 6));
        assert!(matches!(remove_extreme_bands(&m, 6), Err(Error::Contract(_))));

        let ones = corr(DMatrix::from_element(3, 3, 1.0));
        let r = remove_extreme_bands(&ones, 1).unwrap().entries;
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(r, expected);
    }

    #[test]
    fn maxeig_of_identity_ensemble_and_full_removal() {
        let spec = WindowSpec::new(4).unwrap();
        let ids: Vec<CorrMatrix> = (0..3)
            .map(|i| CorrMatrix::from_entries(DMatrix::identity(4, 4), Provenance::new("I", i * 4)).unwrap())
            .collect();
        let ens = CorrEnsemble::from_matrices(spec, ids).unwrap();
        let curve = largest_eigenvalue_vs_k(&ens, &[0, 1, 2, 3]).unwrap();
        assert!(curve.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let ens2 = CorrEnsemble::from_matrices(spec, vec![random_corr(4, 7)]).unwrap();
        let full = largest_eigenvalue_vs_k(&ens2, &[3]).unwrap();
        assert_eq!(full.values[0], 1.0);

        assert!(largest_eigenvalue_vs_k(&CorrEnsemble::empty(spec), &[0]).is_err());
        assert!(largest_eigenvalue_vs_k(&ens2, &[4]).is_err());
    }

    fn spectral_norm(m: &DMatrix<f64>) -> f64 {
        symmetric_eigenvalues(m).unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    proptest! {
        #[test]
        fn trace_and_band_invariants(n in 2usize..=10, seed in any::<u64>(), kk in 0usize..10) {
            let m = random_corr(n, seed);
            let k = kk % n;
            let s = eigenvalues(&m).unwrap();
            let sum: f64 = s.eigenvalues.iter().sum();
            prop_assert!((sum - n as f64).abs() <= 1e-8 * n as f64);
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));

            let r = remove_extreme_bands(&m, k).unwrap();
            prop_assert_eq!(&r.entries.transpose(), &r.entries);
            let mut twice = r.entries.clone();
            zero_extreme_bands(&mut twice, k);
            prop_assert_eq!(&twice, &r.entries);
            for i in 0..n {
                prop_assert_eq!(r.entries[(i, i)], 1.0);
            }

            let rs = eigenvalues(&r).unwrap();
            let rsum: f64 = rs.eigenvalues.iter().sum();
            prop_assert!((rsum - n as f64).abs() <= 1e-8 * n as f64);
            let removed = m.entries() - &r.entries;
            prop_assert!(rs.max() <= s.max() + spectral_norm(&removed) + 1e-10);
        }
    }
}
