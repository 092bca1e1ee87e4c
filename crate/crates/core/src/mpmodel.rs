//! Marchenko-Pastur-type level density for the weight
//! `w(x) = x^(N beta a) exp(-N beta b x)`: support bounds, density, moment
//! fit, orthonormal polynomials on the support and the finite-N density
//! `rho_N(x) = (1/N) sum_j w(x) P_j(x)^2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::quad::{adaptive, GaussLegendre};
use crate::stats::ks_distance;

pub const DEFAULT_QUAD_ORDER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPParams {
    pub a: f64,
    pub b: f64,
    pub beta: u8,
    pub n_weight: usize,
}

impl MPParams {
    /// `beta = 2`, `n_weight = 10`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_weight(a, b, 2, 10)
    }

    pub fn with_weight(a: f64, b: f64, beta: u8, n_weight: usize) -> Result<Self> {
        let p = Self { a, b, beta, n_weight };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameters a = {}, b = {}", self.a, self.b)));
        }
        if !(self.b > 0.0) {
            return Err(Error::Domain(format!("b must be positive, got {}", self.b)));
        }
        if !(self.a >= 0.0) {
            return Err(Error::Domain(format!("a must be non-negative, got {}", self.a)));
        }
        if ![1, 2, 4].contains(&self.beta) {
            return Err(Error::Domain(format!("beta must be 1, 2 or 4, got {}", self.beta)));
        }
        if self.n_weight == 0 {
            return Err(Error::Domain("n_weight must be positive".into()));
        }
        Ok(())
    }

    pub fn with_n_weight(self, n_weight: usize) -> Result<Self> {
        Self::with_weight(self.a, self.b, self.beta, n_weight)
    }

    pub fn x_minus(&self) -> f64 {
        support_bounds(self).0
    }

    pub fn x_plus(&self) -> f64 {
        support_bounds(self).1
    }

    /// Recovers `(a, b)` from the support edges, assuming `a >= 0`
    /// (then `X- X+ = (a/b)^2` and `(X- + X+)/2 - a/b = 1/b`).
    pub fn from_bounds(x_minus: f64, x_plus: f64) -> Result<Self> {
        if !(x_plus > x_minus && x_minus >= 0.0) {
            return Err(Error::Domain(format!("invalid support [{x_minus}, {x_plus}]")));
        }
        let mid = 0.5 * (x_minus + x_plus);
        let half = 0.5 * (x_plus - x_minus);
        let g = (x_minus * x_plus).sqrt();
        let b = 1.0 / (mid - g);
        let a = g * b;
        let p = Self::new(a, b)?;
        debug_assert!(((2.0 * a + 1.0).sqrt() / b - half).abs() < 1e-8 * half.max(1.0));
        Ok(p)
    }
}

/// `X± = (a + 1)/b ± sqrt(2a + 1)/b`.
pub fn support_bounds(params: &MPParams) -> (f64, f64) {
    let mid = (params.a + 1.0) / params.b;
    let half = (2.0 * params.a + 1.0).sqrt() / params.b;
    ((mid - half).max(0.0), mid + half)
}

/// `rho(x) = b/(pi x) sqrt((x - X-)(X+ - x))` on the support, zero elsewhere.
pub fn mp_density(x: f64, params: &MPParams) -> f64 {
    let (lo, hi) = support_bounds(params);
    if !(x > lo && x < hi) {
        return 0.0;
    }
    params.b / (PI * x) * ((x - lo) * (hi - x)).sqrt()
}

/// `y(x) = integral of rho from X- to x`, by adaptive quadrature after the
/// substitution `x = X- + 2h sin^2(theta/2)` which removes the edge square roots.
pub fn integrated_density(x: f64, params: &MPParams, tol: f64) -> f64 {
    let (lo, hi) = support_bounds(params);
    if x <= lo {
        return 0.0;
    }
    let x = x.min(hi);
    let h = 0.5 * (hi - lo);
    let theta_x = (1.0 - (x - lo) / h).clamp(-1.0, 1.0).acos();
    let k = params.b / PI * h * h;
    adaptive(
        |t: f64| {
            let s = t.sin();
            let half = (0.5 * t).sin();
            let xt = lo + 2.0 * h * half * half;
            if xt > 0.0 {
                k * s * s / xt
            } else {
                // lo = 0 and t = 0: sin^2 t / (2h sin^2(t/2)) -> 2/h
                2.0 * k / h
            }
        },
        0.0,
        theta_x,
        tol,
    )
    .clamp(0.0, 1.0)
}

/// Closed-form cumulative distribution of the density.
pub fn mp_cdf(x: f64, params: &MPParams) -> f64 {
    let (lo, hi) = support_bounds(params);
    if x <= lo {
        return 0.0;
    }
    if x >= hi {
        return 1.0;
    }
    let anti = |x: f64| -> f64 {
        let r = ((x - lo) * (hi - x)).max(0.0).sqrt();
        let s1 = ((2.0 * x - lo - hi) / (hi - lo)).clamp(-1.0, 1.0).asin();
        let g = (lo * hi).sqrt();
        let s2 =
            if g > 0.0 { (((lo + hi) * x - 2.0 * lo * hi) / (x * (hi - lo))).clamp(-1.0, 1.0).asin() } else { 0.0 };
        r + 0.5 * (lo + hi) * s1 - g * s2
    };
    // anti(lo) = -pi (lo + hi)/4 + g pi/2
    let g = (lo * hi).sqrt();
    let at_lo = -0.25 * PI * (lo + hi) + 0.5 * PI * g;
    (params.b / PI * (anti(x) - at_lo)).clamp(0.0, 1.0)
}

/// Inverse of [`mp_cdf`] by bisection.
pub fn mp_quantile(p: f64, params: &MPParams) -> f64 {
    let (mut lo, mut hi) = support_bounds(params);
    let p = p.clamp(0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mp_cdf(mid, params) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// First and second moments of the density: `(2a+1)/(2b)` and `(2a+1)(a+1)/(2b^2)`.
pub fn mp_moments(params: &MPParams) -> (f64, f64) {
    let s = 2.0 * params.a + 1.0;
    (s / (2.0 * params.b), s * (params.a + 1.0) / (2.0 * params.b * params.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    Moments,
    KsGrid,
}

/// Moment matching: with `c = m2 / (2 m1^2)`, `a = (c - 1)/(1 - 2c)` and
/// `b = (2a + 1)/(2 m1)`. The family covers `1/2 < c <= 1`; samples with
/// `c <= 1/2` are rejected. For `c > 1` (a tail heavier than any member,
/// typical when outliers sit above the bulk) the estimate is projected onto
/// the boundary `a = 0` and only the mean is matched; [`MomentFit::projected`]
/// records this.
pub fn fit_mp_params(eigs: &[f64]) -> Result<MPParams> {
    fit_mp_moments(eigs).map(|f| f.params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub params: MPParams,
    pub c: f64,
    pub projected: bool,
}

pub fn fit_mp_moments(eigs: &[f64]) -> Result<MomentFit> {
    if eigs.len() < 10 {
        return Err(contract(format!("need at least 10 eigenvalues to fit, got {}", eigs.len())));
    }
    let n = eigs.len() as f64;
    let m1 = eigs.iter().sum::<f64>() / n;
    if !(m1 > 0.0) {
        return Err(contract(format!("sample mean must be positive, got {m1}")));
    }
    let m2 = eigs.iter().map(|x| x * x).sum::<f64>() / n;
    let c = m2 / (2.0 * m1 * m1);
    // Rounding can push a constant sample marginally above 1/2.
    if !(c > 0.5 * (1.0 + 1e-12)) || !c.is_finite() {
        return Err(Error::FitOutOfDomain { c });
    }
    let projected = c > 1.0;
    let a = if projected { 0.0 } else { (c - 1.0) / (1.0 - 2.0 * c) };
    let b = (2.0 * a + 1.0) / (2.0 * m1);
    Ok(MomentFit { params: MPParams::new(a, b)?, c, projected })
}

/// Grid search over `(a, b)` in `[0, 10] x (0, 10]` minimizing the KS
/// distance to the sample, refined once around the coarse optimum.
pub fn fit_mp_params_ks(eigs: &[f64]) -> Result<MPParams> {
    if eigs.len() < 10 {
        return Err(contract(format!("need at least 10 eigenvalues to fit, got {}", eigs.len())));
    }
    let mut sorted = eigs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let score = |a: f64, b: f64| -> f64 {
        match MPParams::new(a, b) {
            Ok(p) => ks_distance(&sorted, |x| mp_cdf(x, &p)),
            Err(_) => f64::INFINITY,
        }
    };
    let mut best = (f64::INFINITY, 0.0, 1.0);
    let search = |a_range: (f64, f64), b_range: (f64, f64), step: f64, best: &mut (f64, f64, f64)| {
        let na = ((a_range.1 - a_range.0) / step).round() as usize;
        let nb = ((b_range.1 - b_range.0) / step).round() as usize;
        for i in 0..=na {
            let a = a_range.0 + i as f64 * step;
            for j in 0..=nb {
                let b = b_range.0 + j as f64 * step;
                if b <= 0.0 || b > 10.0 || !(0.0..=10.0).contains(&a) {
                    continue;
                }
                let d = score(a, b);
                if d < best.0 {
                    *best = (d, a, b);
                }
            }
        }
    };
    search((0.0, 10.0), (0.1, 10.0), 0.1, &mut best);
    let (_, a0, b0) = best;
    search((a0 - 0.1, a0 + 0.1), (b0 - 0.1, b0 + 0.1), 0.005, &mut best);
    MPParams::new(best.1, best.2)
}

/// `N beta a ln x - N beta b x`.
pub fn log_weight(x: f64, params: &MPParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("log weight requires x > 0, got {x}")));
    }
    let nb = params.n_weight as f64 * params.beta as f64;
    Ok(nb * params.a * x.ln() - nb * params.b * x)
}

/// `x^(N beta a) exp(-N beta b x)`, evaluated through the log form.
pub fn weight(x: f64, params: &MPParams) -> Result<f64> {
    Ok(log_weight(x, params)?.exp())
}

/// Polynomials `P_0 .. P_{degree-1}` orthonormal under `w` on `[X-, X+]`.
///
/// Coefficients are monomial coefficients in the scaled variable
/// `t = (x - center) / half_width`, lowest order first. The weight used in
/// the construction is `w(x) exp(-log_shift)`; `phi_j = sqrt(w) P_j` is
/// independent of that constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBasis {
    pub params: MPParams,
    pub degree: usize,
    pub quad_order: usize,
    pub center: f64,
    pub half_width: f64,
    pub log_shift: f64,
    pub coefficients: Vec<Vec<f64>>,
    pub gram_residual: f64,
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

impl PolyBasis {
    /// Quadrature nodes and (scaled-weight times Gauss weight) products on the support.
    pub fn quadrature(&self) -> (Vec<f64>, Vec<f64>) {
        weighted_nodes(&self.params, self.quad_order, self.log_shift)
    }

    /// `P_j(x)` under the shifted weight.
    pub fn eval(&self, j: usize, x: f64) -> f64 {
        horner(&self.coefficients[j], (x - self.center) / self.half_width)
    }

    /// `phi_j(x) = sqrt(w(x)) P_j(x)`; zero outside the support.
    pub fn phi(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = support_bounds(&self.params);
        if !(x >= lo && x <= hi) || x <= 0.0 {
            return 0.0;
        }
        let lw = log_weight(x, &self.params).expect("x > 0") - self.log_shift;
        (0.5 * lw).exp() * self.eval(j, x)
    }

    /// Gram matrix `int P_j P_k w` evaluated on an independent `order`-point rule.
    pub fn gram(&self, order: usize) -> Vec<Vec<f64>> {
        let (x, w) = weighted_nodes(&self.params, order, self.log_shift);
        let vals: Vec<Vec<f64>> = (0..self.degree).map(|j| x.iter().map(|&xi| self.eval(j, xi)).collect()).collect();
        (0..self.degree)
            .map(|j| (0..self.degree).map(|k| (0..x.len()).map(|i| w[i] * vals[j][i] * vals[k][i]).sum()).collect())
            .collect()
    }
}

fn weighted_nodes(params: &MPParams, order: usize, log_shift: f64) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = support_bounds(params);
    let (x, gw) = GaussLegendre::new(order).mapped(lo, hi);
    let w = x
        .iter()
        .zip(&gw)
        .map(|(&xi, &g)| if xi > 0.0 { g * (log_weight(xi, params).unwrap() - log_shift).exp() } else { 0.0 })
        .collect();
    (x, w)
}

fn max_residual(g: &[Vec<f64>]) -> f64 {
    let mut r = 0.0f64;
    for (j, row) in g.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            r = r.max((v - target).abs());
        }
    }
    r
}

pub fn build_poly_basis(params: &MPParams, degree: usize) -> Result<PolyBasis> {
    build_poly_basis_with_order(params, degree, DEFAULT_QUAD_ORDER)
}

/// Modified Gram-Schmidt on `1, t, t^2, ...` with one re-orthogonalization
/// pass, under Gauss-Legendre quadrature of order `quad_order` on `[X-, X+]`.
pub fn build_poly_basis_with_order(params: &MPParams, degree: usize, quad_order: usize) -> Result<PolyBasis> {
    params.validate()?;
    if degree == 0 {
        return Err(contract("basis degree must be at least 1"));
    }
    if quad_order < 4 * degree {
        return Err(contract(format!("quadrature order {quad_order} must be at least 4 x degree = {}", 4 * degree)));
    }
    let (lo, hi) = support_bounds(params);
    let center = 0.5 * (lo + hi);
    let half_width = 0.5 * (hi - lo);

    let (x, _) = GaussLegendre::new(quad_order).mapped(lo, hi);
    let log_shift =
        x.iter().filter(|&&xi| xi > 0.0).map(|&xi| log_weight(xi, params).unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let (x, w) = weighted_nodes(params, quad_order, log_shift);
    let t: Vec<f64> = x.iter().map(|xi| (xi - center) / half_width).collect();

    let inner = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(&w).map(|((a, b), c)| a * b * c).sum() };

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(degree);
    let mut coefficients: Vec<Vec<f64>> = Vec::with_capacity(degree);
    for k in 0..degree {
        let mut v: Vec<f64> = t.iter().map(|ti| ti.powi(k as i32)).collect();
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        for _pass in 0..2 {
            for j in 0..k {
                let r = inner(&v, &values[j]);
                for (vi, pj) in v.iter_mut().zip(&values[j]) {
                    *vi -= r * pj;
                }
                for (ci, cj) in c.iter_mut().zip(&coefficients[j]) {
                    *ci -= r * cj;
                }
            }
        }
        let norm = inner(&v, &v).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::IllConditioned { residual: f64::INFINITY });
        }
        v.iter_mut().for_each(|vi| *vi /= norm);
        c.iter_mut().for_each(|ci| *ci /= norm);
        values.push(v);
        coefficients.push(c);
    }

    let mut basis = PolyBasis {
        params: *params,
        degree,
        quad_order,
        center,
        half_width,
        log_shift,
        coefficients,
        gram_residual: 0.0,
    };
    let residual = max_residual(&basis.gram(quad_order));
    if residual > 1e-6 {
        return Err(Error::IllConditioned { residual });
    }
    basis.gram_residual = residual;
    Ok(basis)
}

/// `rho_N(x) = (1/N) sum_{j<N} phi_j(x)^2` with `N` the basis degree.
pub fn finite_n_density(x: f64, basis: &PolyBasis) -> f64 {
    let (lo, hi) = support_bounds(&basis.params);
    if !(x >= lo && x <= hi) || x <= 0.0 {
        return 0.0;
    }
    let lw = log_weight(x, &basis.params).expect("x > 0") - basis.log_shift;
    let t = (x - basis.center) / basis.half_width;
    let s: f64 = basis.coefficients.iter().map(|c| horner(c, t).powi(2)).sum();
    lw.exp() * s / basis.degree as f64
}

/// Builds the basis for `params` with degree equal to `params.n_weight`.
pub fn finite_n_basis(params: &MPParams) -> Result<PolyBasis> {
    build_poly_basis(params, params.n_weight)
}
