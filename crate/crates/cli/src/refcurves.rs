//! Analytic curves for overplotting.

use std::io::Write;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::ValueEnum;
use lagrmt_core::export::write_xy;
use lagrmt_core::mpmodel::{finite_n_basis, finite_n_density, mp_density};
use lagrmt_core::stats::{delta_gue, delta_poisson, poisson_pdf, sigma2_gue, wigner_gue};
use lagrmt_core::MPParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefKind {
    Mp,
    FiniteN,
    Wigner,
    PoissonPdf,
    Sigma2Gue,
    DeltaGue,
    DeltaPoisson,
}

impl RefKind {
    fn column(self) -> &'static str {
        match self {
            RefKind::Mp => "rho",
            RefKind::FiniteN => "rho_n",
            RefKind::Wigner | RefKind::PoissonPdf => "p",
            RefKind::Sigma2Gue => "sigma2",
            RefKind::DeltaGue | RefKind::DeltaPoisson => "delta",
        }
    }

    fn abscissa(self) -> &'static str {
        match self {
            RefKind::Mp | RefKind::FiniteN => "x",
            RefKind::Wigner | RefKind::PoissonPdf => "s",
            RefKind::Sigma2Gue => "n",
            RefKind::DeltaGue | RefKind::DeltaPoisson => "L",
        }
    }
}

impl FromStr for RefKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| {
            anyhow::anyhow!(
                "unknown curve kind {s:?}; expected one of mp, finite-n, wigner, poisson-pdf, sigma2-gue, delta-gue, delta-poisson"
            )
        })
    }
}

/// Evenly spaced inclusive grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Range {
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.to - self.from) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.from + step * i as f64).collect()
    }
}

/// Abscissa and ordinate of the requested curve. `params` is required for
/// the density kinds; the finite-N degree is `params.n_weight`.
pub fn reference_curve(kind: RefKind, range: Range, params: Option<&MPParams>) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    if range.points < 2 || !(range.from < range.to) || !range.from.is_finite() || !range.to.is_finite() {
        bail!("range needs from < to and at least 2 points");
    }
    let needs_positive = matches!(kind, RefKind::Sigma2Gue | RefKind::DeltaGue | RefKind::DeltaPoisson);
    if needs_positive && range.from <= 0.0 {
        bail!("{kind:?} is defined for positive arguments only");
    }
    let xs = range.grid();
    let ys = match kind {
        RefKind::Mp => {
            let p = params.context("the mp curve needs a and b")?;
            xs.iter().map(|&x| mp_density(x, p)).collect()
        }
        RefKind::FiniteN => {
            let basis = finite_n_basis(params.context("the finite-n curve needs a and b")?)?;
            xs.iter().map(|&x| finite_n_density(x, &basis)).collect()
        }
        RefKind::Wigner => xs.iter().map(|&s| wigner_gue(s)).collect(),
        RefKind::PoissonPdf => xs.iter().map(|&s| poisson_pdf(s)).collect(),
        RefKind::Sigma2Gue => xs.iter().map(|&n| sigma2_gue(n)).collect(),
        RefKind::DeltaGue => xs.iter().map(|&l| delta_gue(l)).collect(),
        RefKind::DeltaPoisson => xs.iter().map(|&l| delta_poisson(l)).collect(),
    };
    Ok((xs, ys))
}

/// Writes the curve as a two-column CSV.
pub fn emit_reference_curves<W: Write>(
    out: W,
    kind: RefKind,
    range: Range,
    params: Option<&MPParams>,
) -> anyhow::Result<()> {
    let (xs, ys) = reference_curve(kind, range, params)?;
    write_xy(out, (kind.abscissa(), kind.column()), &xs, &ys)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_params() -> MPParams {
        MPParams::new(2.75, 3.535).unwrap()
    }

    #[test]
    fn mp_curve_vanishes_outside_support() {
        let p = test_params();
        let (xs, ys) = reference_curve(RefKind::Mp, Range { from: 0.0, to: 2.5, points: 501 }, Some(&p)).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            if *x < 0.339601 - 1e-5 || *x > 1.78204 + 1e-5 {
                assert_eq!(*y, 0.0, "x = {x}");
            }
        }
        assert!(ys.iter().any(|&y| y > 0.5));
    }

    #[test]
    fn point_values() {
        let (_, p) = reference_curve(RefKind::PoissonPdf, Range { from: 0.0, to: 1.0, points: 2 }, None).unwrap();
        assert_eq!(p[0], 1.0);
        let (_, s) = reference_curve(RefKind::Sigma2Gue, Range { from: 1.0, to: 2.0, points: 2 }, None).unwrap();
        assert!((s[0] - 0.34603).abs() < 1e-4);
    }

    #[test]
    fn usage_errors() {
        assert!("bogus".parse::<RefKind>().is_err());
        assert_eq!("sigma2-gue".parse::<RefKind>().unwrap(), RefKind::Sigma2Gue);
        assert!(reference_curve(RefKind::Mp, Range { from: 0.0, to: 1.0, points: 10 }, None).is_err());
        assert!(reference_curve(RefKind::DeltaGue, Range { from: 0.0, to: 1.0, points: 10 }, None).is_err());
        assert!(reference_curve(RefKind::Wigner, Range { from: 1.0, to: 1.0, points: 10 }, None).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        emit_reference_curves(&mut buf, RefKind::Wigner, Range { from: 0.0, to: 3.0, points: 7 }, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("s,p"));
        assert_eq!(text.lines().count(), 8);
    }
}
