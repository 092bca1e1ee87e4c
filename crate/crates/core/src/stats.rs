//! Fluctuation statistics of unfolded levels and their reference curves.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::quad::GaussLegendre;
use crate::unfold::{UnfoldMethod, UnfoldedSpectrum};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CurveKind {
    SpacingHist,
    NumberVariance,
    Rigidity,
    MaxEigVsK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatCurve {
    pub kind: CurveKind,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
}

impl StatCurve {
    pub fn new(kind: CurveKind, abscissa: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if abscissa.len() != values.len() {
            return Err(contract(format!(
                "curve has {} abscissa values but {} ordinates",
                abscissa.len(),
                values.len()
            )));
        }
        if !abscissa.windows(2).all(|w| w[0] < w[1]) {
            return Err(contract("curve abscissa must be strictly increasing"));
        }
        Ok(Self { kind, abscissa, values })
    }

    /// Point-wise mean of curves sharing kind and abscissa.
    pub fn mean(curves: &[StatCurve]) -> Result<StatCurve> {
        let first = curves.first().ok_or_else(|| Error::Empty("no curves to average".into()))?;
        if curves.iter().any(|c| c.abscissa != first.abscissa || c.kind != first.kind) {
            return Err(contract("curves to average must share kind and abscissa"));
        }
        let m = curves.len() as f64;
        let values = (0..first.values.len()).map(|i| curves.iter().map(|c| c.values[i]).sum::<f64>() / m).collect();
        StatCurve::new(first.kind, first.abscissa.clone(), values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSample {
    pub spacings: Vec<f64>,
    /// Mean raw spacing `D` the spacings were divided by.
    pub normalization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSResult {
    pub d_stat: f64,
    pub p_value: f64,
    pub sample_size: usize,
}

/// `s_i = (y_{i+1} - y_i) / D` with `D` the mean raw spacing.
pub fn spacings(u: &UnfoldedSpectrum) -> Result<SpacingSample> {
    spacings_of_levels(&u.levels)
}

pub fn spacings_of_levels(levels: &[f64]) -> Result<SpacingSample> {
    if levels.len() < 2 {
        return Err(Error::Empty(format!("need at least 2 levels for spacings, got {}", levels.len())));
    }
    let raw: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let d = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(d > 0.0) {
        return Err(Error::Domain("mean spacing is not positive".into()));
    }
    Ok(SpacingSample { spacings: raw.iter().map(|s| s / d).collect(), normalization: d })
}

/// GUE Wigner surmise `(32 s^2 / pi^2) exp(-4 s^2 / pi)`.
pub fn wigner_gue(s: f64) -> f64 {
    if s < 0.0 {
        return 0.0;
    }
    32.0 * s * s / (PI * PI) * (-4.0 * s * s / PI).exp()
}

pub fn poisson_pdf(s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        (-s).exp()
    }
}

pub fn poisson_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        -(-s).exp_m1()
    }
}

const SURMISE_GRID_MAX: f64 = 8.0;
const SURMISE_GRID_STEP: f64 = 1.0 / 1024.0;

fn surmise_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (SURMISE_GRID_MAX / SURMISE_GRID_STEP).round() as usize;
        let gl = GaussLegendre::new(8);
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 0..n {
            let a = i as f64 * SURMISE_GRID_STEP;
            acc += gl.integrate(wigner_gue, a, a + SURMISE_GRID_STEP);
            cdf.push(acc);
        }
        cdf
    })
}

/// CDF of the GUE surmise from a cached numerical integral, with cubic
/// Hermite interpolation between grid points (the density is the slope).
pub fn wigner_gue_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= SURMISE_GRID_MAX {
        return 1.0;
    }
    let table = surmise_table();
    let h = SURMISE_GRID_STEP;
    let i = ((s / h) as usize).min(table.len() - 2);
    let x0 = i as f64 * h;
    let t = (s - x0) / h;
    let (y0, y1) = (table[i], table[i + 1]);
    let (d0, d1) = (wigner_gue(x0) * h, wigner_gue(x0 + h) * h);
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1;
    v.clamp(0.0, 1.0)
}

/// `(1/pi^2)(ln(2 pi n) + gamma + 1)`.
pub fn sigma2_gue(n: f64) -> f64 {
    ((2.0 * PI * n).ln() + EULER_GAMMA + 1.0) / (PI * PI)
}

/// `(1/(2 pi^2))(ln(2 pi L) + gamma - 5/4)`.
pub fn delta_gue(l: f64) -> f64 {
    ((2.0 * PI * l).ln() + EULER_GAMMA - 1.25) / (2.0 * PI * PI)
}

/// `L / 15`.
pub fn delta_poisson(l: f64) -> f64 {
    l / 15.0
}

pub fn sigma2_poisson(n: f64) -> f64 {
    n
}

fn check_span(u: &UnfoldedSpectrum, args: &[f64]) -> Result<()> {
    if u.len() < 2 {
        return Err(Error::Empty("need at least 2 unfolded levels".into()));
    }
    if args.iter().any(|&a| !(a > 0.0)) {
        return Err(contract("statistic arguments must be positive"));
    }
    let max_arg = args.iter().copied().fold(0.0, f64::max);
    let span = u.span();
    if span < max_arg + 1.0 {
        return Err(Error::SpanTooShort { span, max_usable: span - 1.0 });
    }
    Ok(())
}

/// Number variance: the variance of level counts in windows `[y0, y0 + n)`
/// whose starts step by 0.5 from the first level while the window fits.
///
/// The variance is taken about the observed mean count `M1`, i.e.
/// `M2 - M1^2`; for a perfectly unfolded spectrum `M1 = n` and this equals
/// `M2 - n^2`.
pub fn number_variance(u: &UnfoldedSpectrum, n_values: &[f64]) -> Result<StatCurve> {
    check_span(u, n_values)?;
    let y = &u.levels;
    let first = y[0];
    let last = y[y.len() - 1];
    let values = n_values
        .iter()
        .map(|&n| {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            let mut windows = 0usize;
            let mut j = 0usize;
            loop {
                let start = first + 0.5 * j as f64;
                if start + n > last {
                    break;
                }
                let lo = y.partition_point(|&v| v < start);
                let hi = y.partition_point(|&v| v < start + n);
                let c = (hi - lo) as f64;
                m1 += c;
                m2 += c * c;
                windows += 1;
                j += 1;
            }
            let w = windows as f64;
            (m2 / w - (m1 / w).powi(2)).max(0.0)
        })
        .collect();
    StatCurve::new(CurveKind::NumberVariance, n_values.to_vec(), values)
}

/// Least-squares deviation of the staircase on `[alpha, alpha + l]` from its
/// best straight line, divided by `l`, evaluated exactly.
pub(crate) fn delta3_interval(y: &[f64], alpha: f64, l: f64) -> f64 {
    let beta = alpha + l;
    let mid = alpha + 0.5 * l;
    let mut count = y.partition_point(|&v| v <= alpha) as f64;
    let mut x0 = alpha;
    // integrals of N, (E - mid) N and N^2
    let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
    let mut idx = y.partition_point(|&v| v <= alpha);
    loop {
        let x1 = if idx < y.len() && y[idx] < beta { y[idx] } else { beta };
        let (u0, u1) = (x0 - mid, x1 - mid);
        i0 += count * (x1 - x0);
        i1 += count * 0.5 * (u1 * u1 - u0 * u0);
        i2 += count * count * (x1 - x0);
        if x1 >= beta {
            break;
        }
        // absorb every level at this position
        while idx < y.len() && y[idx] == x1 {
            count += 1.0;
            idx += 1;
        }
        x0 = x1;
    }
    let dev = i2 - i0 * i0 / l - i1 * i1 * 12.0 / (l * l * l);
    (dev / l).max(0.0)
}

/// Dyson-Mehta rigidity averaged over intervals `[alpha, alpha + L]` whose
/// starts step by `L/2` from the first level while the interval fits.
pub fn spectral_rigidity(u: &UnfoldedSpectrum, l_values: &[f64]) -> Result<StatCurve> {
    check_span(u, l_values)?;
    let y = &u.levels;
    let first = y[0];
    let last = y[y.len() - 1];
    let values = l_values
        .iter()
        .map(|&l| {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut j = 0usize;
            loop {
                let alpha = first + 0.5 * l * j as f64;
                if alpha + l > last {
                    break;
                }
                sum += delta3_interval(y, alpha, l);
                count += 1;
                j += 1;
            }
            sum / count as f64
        })
        .collect();
    StatCurve::new(CurveKind::Rigidity, l_values.to_vec(), values)
}

/// Kolmogorov survival function `Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`.
///
/// Below `lambda = 1` the equivalent theta-function form
/// `1 - sqrt(2 pi)/lambda sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lambda^2))`
/// is used; the alternating series converges slowly there.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.0 {
        let mut sum = 0.0;
        for k in 1..=1000u32 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * PI * PI / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < 1e-17 {
                break;
            }
        }
        return (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=1000u32 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 * sum.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sup distance between the empirical CDF of an ascending sample and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let i = i as f64;
            ((i + 1.0) / n - f).abs().max((f - i / n).abs())
        })
        .fold(0.0, f64::max)
}

/// One-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], reference_cdf: F) -> Result<KSResult> {
    if sample.is_empty() {
        return Err(Error::Empty("KS test needs a non-empty sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = ks_distance(&sorted, reference_cdf);
    let n = sorted.len();
    Ok(KSResult { d_stat: d, p_value: kolmogorov_q((n as f64).sqrt() * d), sample_size: n })
}

/// Equal-weight average of unit-area spacing histograms on `[0, s_max]`.
pub fn average_spacing_histograms(samples: &[SpacingSample], bins: usize, s_max: f64) -> Result<StatCurve> {
    if samples.is_empty() {
        return Err(Error::Empty("no spacing samples".into()));
    }
    if bins < 2 || !(s_max > 0.0) {
        return Err(contract("need at least 2 bins and a positive s_max"));
    }
    let width = s_max / bins as f64;
    let mut avg = vec![0.0; bins];
    for sample in samples {
        let mut counts = vec![0usize; bins];
        for &s in &sample.spacings {
            if (0.0..=s_max).contains(&s) {
                counts[((s / width) as usize).min(bins - 1)] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            continue;
        }
        for (a, c) in avg.iter_mut().zip(&counts) {
            *a += *c as f64 / (total as f64 * width);
        }
    }
    let m = samples.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    let centers = (0..bins).map(|i| (i as f64 + 0.5) * width).collect();
    StatCurve::new(CurveKind::SpacingHist, centers, avg)
}

/// Superposes independently unfolded sequences and rescales the merged
/// sequence to unit mean spacing.
pub fn mix_sequences(sequences: &[UnfoldedSpectrum]) -> Result<UnfoldedSpectrum> {
    let first = sequences.first().ok_or_else(|| Error::Empty("no sequences to mix".into()))?;
    let mut levels: Vec<f64> = sequences.iter().flat_map(|s| s.levels.iter().copied()).collect();
    if levels.len() < 2 {
        return Err(Error::Empty("mixed sequence has fewer than 2 levels".into()));
    }
    levels.sort_by(f64::total_cmp);
    let d = (levels[levels.len() - 1] - levels[0]) / (levels.len() - 1) as f64;
    if !(d > 0.0) {
        return Err(Error::Domain("mixed levels all coincide".into()));
    }
    levels.iter_mut().for_each(|y| *y /= d);
    Ok(UnfoldedSpectrum {
        levels,
        method: UnfoldMethod::Numerical,
        fit_degree: first.fit_degree,
        source: first.source.clone(),
        excluded: 0,
    })
}
