//! End-to-end run: ingest, ensembles, spectra, fit, unfolding, statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use lagrmt_core::corrmat::build_team_ensembles;
use lagrmt_core::export::{self, CurveSidecar};
use lagrmt_core::ingest::write_scores;
use lagrmt_core::mpmodel::{
    finite_n_basis, fit_mp_moments, fit_mp_params_ks, mp_cdf, mp_density, support_bounds, FitMethod,
};
use lagrmt_core::spectra::{ensemble_spectra, largest_eigenvalue_vs_k};
use lagrmt_core::stats::{
    average_spacing_histograms, delta_gue, ks_test, mix_sequences, number_variance, poisson_cdf, sigma2_gue, spacings,
    spectral_rigidity, wigner_gue, wigner_gue_cdf,
};
use lagrmt_core::unfold::{unfold_numerical, unfold_theoretical};
use lagrmt_core::{
    parse_scores, CorrEnsemble, FormatTag, KSResult, MPParams, ScoreSeries, Spectrum, StatCurve, UnfoldMethod,
    UnfoldedSpectrum, WindowSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::{MpSource, PipelineConfig};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config.json";
const DENSITY_POINTS: usize = 401;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSummary {
    pub team_id: String,
    pub format: FormatTag,
    pub length: usize,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpReport {
    pub a: f64,
    pub b: f64,
    pub x_minus: f64,
    pub x_plus: f64,
    /// `explicit`, `moments` or `ks-grid`.
    pub source: String,
    /// Moment ratio `m2 / (2 m1^2)` of the pooled eigenvalues.
    pub moment_ratio: f64,
    /// Moment fit clamped to `a = 0` because the ratio exceeded 1.
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub reference: Vec<f64>,
    pub reference_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub k: usize,
    pub mp: MpReport,
    pub mean_max_eigenvalue: f64,
    pub fraction_max_above_x_plus: f64,
    pub excluded_theoretical: usize,
    pub ks_mp: Option<KSResult>,
    pub ks_spacing_gue: Option<KSResult>,
    pub ks_mixed_poisson: Option<KSResult>,
    pub curves: BTreeMap<String, CurveReport>,
    /// Statistics that could not be evaluated, with the reason.
    pub skipped: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_dim: usize,
    pub window: WindowSpec,
    pub teams: Vec<TeamSummary>,
    pub short_series: Vec<String>,
    pub total_members: usize,
    pub bands: Vec<BandSummary>,
    pub max_eigenvalue_vs_k: Option<CurveReport>,
}

impl Summary {
    pub fn band(&self, k: usize) -> Option<&BandSummary> {
        self.bands.iter().find(|b| b.k == k)
    }
}

fn stage<T, E>(name: &str, r: Result<T, E>) -> anyhow::Result<T>
where
    E: Into<anyhow::Error>,
{
    r.map_err(Into::into).with_context(|| format!("pipeline stage `{name}` failed"))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pooled(spectra: &[Spectrum]) -> Vec<f64> {
    spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect()
}

pub fn load_series(cfg: &PipelineConfig) -> anyhow::Result<Vec<ScoreSeries>> {
    let mut series = Vec::new();
    for path in &cfg.inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        series.extend(parse_scores(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?);
    }
    if let Some(tag) = cfg.format {
        series.retain(|s| s.format_tag() == tag);
    }
    let formats: BTreeSet<FormatTag> = series.iter().map(ScoreSeries::format_tag).collect();
    if formats.len() > 1 {
        bail!("inputs mix formats {formats:?}; set `format` to analyse one of them");
    }
    let mut seen = BTreeSet::new();
    for s in &series {
        if !seen.insert(s.team_id().to_string()) {
            bail!("team {} appears more than once across inputs", s.team_id());
        }
    }
    if series.is_empty() {
        bail!("no series left after reading inputs");
    }
    Ok(series)
}

fn resolve_params(cfg: &PipelineConfig, eigs: &[f64]) -> anyhow::Result<MpReport> {
    let m1 = eigs.iter().sum::<f64>() / eigs.len() as f64;
    let m2 = eigs.iter().map(|x| x * x).sum::<f64>() / eigs.len() as f64;
    let moment_ratio = m2 / (2.0 * m1 * m1);
    let (params, source, projected) = match cfg.mp {
        MpSource::Explicit { a, b } => (MPParams::new(a, b)?, "explicit", false),
        MpSource::Fitted { method: FitMethod::Moments } => {
            let fit = fit_mp_moments(eigs)?;
            (fit.params, "moments", fit.projected)
        }
        MpSource::Fitted { method: FitMethod::KsGrid } => (fit_mp_params_ks(eigs)?, "ks-grid", false),
    };
    let (x_minus, x_plus) = support_bounds(&params);
    Ok(MpReport { a: params.a, b: params.b, x_minus, x_plus, source: source.into(), moment_ratio, projected })
}

/// Keeps the grid points usable on every member; returns `None` if none are.
pub fn usable_grid(grid: &[f64], members: &[UnfoldedSpectrum]) -> Option<Vec<f64>> {
    let min_span = members.iter().map(UnfoldedSpectrum::span).fold(f64::INFINITY, f64::min);
    let kept: Vec<f64> = grid.iter().copied().filter(|&x| x + 1.0 <= min_span).collect();
    (!kept.is_empty()).then_some(kept)
}

/// Mean over each team's members, then over teams.
pub fn team_average(
    team_index: &BTreeMap<String, Vec<usize>>,
    per_member: &[StatCurve],
) -> lagrmt_core::Result<StatCurve> {
    let team_means = team_index
        .values()
        .map(|idx| StatCurve::mean(&idx.iter().map(|&i| per_member[i].clone()).collect::<Vec<_>>()))
        .collect::<lagrmt_core::Result<Vec<_>>>()?;
    StatCurve::mean(&team_means)
}

fn curve_report(curve: &StatCurve, reference: fn(f64) -> f64, name: &str) -> CurveReport {
    CurveReport {
        x: curve.abscissa.clone(),
        values: curve.values.clone(),
        reference: curve.abscissa.iter().map(|&x| reference(x)).collect(),
        reference_name: name.into(),
    }
}

fn emit_curve(
    dir: &Path,
    stem: &str,
    curve: &StatCurve,
    report: &CurveReport,
    parameters: serde_json::Value,
) -> anyhow::Result<()> {
    let sidecar = CurveSidecar { kind: curve.kind, parameters, reference: Some(report.reference.clone()) };
    export::write_curve(dir, stem, curve, &sidecar)?;
    Ok(())
}

fn write_column(path: &Path, name: &str, values: &[f64]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{name}")?;
    for &v in values {
        writeln!(out, "{}", export::fmt_f64(v))?;
    }
    out.flush()?;
    Ok(())
}

fn analyse_band(cfg: &PipelineConfig, ensemble: &CorrEnsemble, k: usize, dir: &Path) -> anyhow::Result<BandSummary> {
    fs::create_dir_all(dir)?;
    let spectra = stage("spectra", ensemble_spectra(ensemble, k))?;
    export::write_spectra(create(&dir.join("spectra.csv"))?, &spectra)?;
    let eigs = pooled(&spectra);

    let mp = stage("mp-fit", resolve_params(cfg, &eigs))?;
    let params = MPParams::new(mp.a, mp.b)?;
    {
        let xs: Vec<f64> = (0..DENSITY_POINTS)
            .map(|i| mp.x_minus + (mp.x_plus - mp.x_minus) * i as f64 / (DENSITY_POINTS - 1) as f64)
            .collect();
        let rho: Vec<f64> = xs.iter().map(|&x| mp_density(x, &params)).collect();
        export::write_xy(create(&dir.join("mp_density.csv"))?, ("x", "rho"), &xs, &rho)?;
        let basis = stage("finite-n", finite_n_basis(&params.with_n_weight(cfg.finite_n_degree)?))?;
        export::write_basis(create(&dir.join("finite_n_basis.json"))?, &basis)?;
        let rho_n: Vec<f64> = xs.iter().map(|&x| lagrmt_core::mpmodel::finite_n_density(x, &basis)).collect();
        export::write_xy(create(&dir.join("finite_n_density.csv"))?, ("x", "rho_n"), &xs, &rho_n)?;
    }

    let maxima: Vec<f64> = spectra.iter().map(Spectrum::max).collect();
    let mean_max_eigenvalue = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let fraction_max_above_x_plus = maxima.iter().filter(|&&m| m > mp.x_plus).count() as f64 / maxima.len() as f64;

    let theoretical = stage(
        "unfold-theoretical",
        spectra.iter().map(|s| unfold_theoretical(s, &params)).collect::<lagrmt_core::Result<Vec<_>>>(),
    )?;
    export::write_unfolded(create(&dir.join("unfolded_theoretical.csv"))?, &theoretical)?;
    let excluded_theoretical = theoretical.iter().map(|u| u.excluded).sum();
    let numerical = stage(
        "unfold-numerical",
        spectra.iter().map(|s| unfold_numerical(s, cfg.unfold.degree)).collect::<lagrmt_core::Result<Vec<_>>>(),
    )?;
    export::write_unfolded(create(&dir.join("unfolded_numerical.csv"))?, &numerical)?;

    let chosen = match cfg.unfold.method {
        UnfoldMethod::Numerical => &numerical,
        UnfoldMethod::Theoretical => &theoretical,
    };
    let trimmed =
        stage("trim", chosen.iter().map(|u| u.trim_edges(cfg.edge_trim)).collect::<lagrmt_core::Result<Vec<_>>>())?;
    export::write_unfolded(create(&dir.join("unfolded_trimmed.csv"))?, &trimmed)?;

    let mut summary = BandSummary {
        k,
        mp,
        mean_max_eigenvalue,
        fraction_max_above_x_plus,
        excluded_theoretical,
        ks_mp: None,
        ks_spacing_gue: None,
        ks_mixed_poisson: None,
        curves: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    if trimmed.iter().any(|u| u.len() < 3) {
        bail!("pipeline stage `statistics` failed: some members keep fewer than 3 levels after trimming");
    }
    let curves_dir = dir.join("curves");
    let params_json = serde_json::json!({
        "k": k,
        "unfold_method": cfg.unfold.method,
        "fit_degree": cfg.unfold.degree,
        "edge_trim": cfg.edge_trim,
        "members": trimmed.len(),
        "teams": ensemble.per_team_index.len(),
    });

    let samples = stage("spacings", trimmed.iter().map(spacings).collect::<lagrmt_core::Result<Vec<_>>>())?;
    let all_spacings: Vec<f64> = samples.iter().flat_map(|s| s.spacings.iter().copied()).collect();
    write_column(&dir.join("spacings.csv"), "s", &all_spacings)?;

    if cfg.stats.ks {
        summary.ks_mp = Some(stage("ks-mp", ks_test(&eigs, |x| mp_cdf(x, &params)))?);
        summary.ks_spacing_gue = Some(stage("ks-spacing", ks_test(&all_spacings, wigner_gue_cdf))?);
        let mixed = stage("mixing", mix_sequences(&trimmed))?;
        export::write_unfolded(create(&dir.join("mixed.csv"))?, std::slice::from_ref(&mixed))?;
        let mixed_spacings = stage("mixing", spacings(&mixed))?;
        summary.ks_mixed_poisson = Some(stage("mixing", ks_test(&mixed_spacings.spacings, poisson_cdf))?);
    }

    if cfg.stats.spacing {
        let team_hists = stage(
            "spacing-histogram",
            ensemble
                .per_team_index
                .values()
                .map(|idx| {
                    let team: Vec<_> = idx.iter().map(|&i| samples[i].clone()).collect();
                    average_spacing_histograms(&team, cfg.hist_bins, cfg.hist_s_max)
                })
                .collect::<lagrmt_core::Result<Vec<_>>>(),
        )?;
        let hist = stage("spacing-histogram", StatCurve::mean(&team_hists))?;
        let report = curve_report(&hist, wigner_gue, "wigner_gue");
        emit_curve(&curves_dir, "spacing_hist", &hist, &report, params_json.clone())?;
        summary.curves.insert("spacing_hist".into(), report);
    }

    struct Fluct<'a> {
        enabled: bool,
        name: &'static str,
        grid: &'a [f64],
        stat: fn(&UnfoldedSpectrum, &[f64]) -> lagrmt_core::Result<StatCurve>,
        reference: fn(f64) -> f64,
        reference_name: &'static str,
    }
    let fluct = [
        Fluct {
            enabled: cfg.stats.number_variance,
            name: "number_variance",
            grid: &cfg.n_values,
            stat: number_variance,
            reference: sigma2_gue,
            reference_name: "sigma2_gue",
        },
        Fluct {
            enabled: cfg.stats.rigidity,
            name: "rigidity",
            grid: &cfg.l_values,
            stat: spectral_rigidity,
            reference: delta_gue,
            reference_name: "delta_gue",
        },
    ];
    for Fluct { enabled, name, grid, stat, reference, reference_name } in fluct {
        if !enabled {
            continue;
        }
        let Some(grid) = usable_grid(grid, &trimmed) else {
            summary.skipped.insert(name.into(), "unfolded members are shorter than every grid point".into());
            continue;
        };
        let per_member = stage(name, trimmed.iter().map(|u| stat(u, &grid)).collect::<lagrmt_core::Result<Vec<_>>>())?;
        let curve = stage(name, team_average(&ensemble.per_team_index, &per_member))?;
        let report = curve_report(&curve, reference, reference_name);
        emit_curve(&curves_dir, name, &curve, &report, params_json.clone())?;
        summary.curves.insert(name.into(), report);
    }
    Ok(summary)
}

/// Runs every stage and writes the artifact bundle into `cfg.output_dir`.
/// Outputs of completed stages stay on disk when a later stage fails.
pub fn run_pipeline(cfg: &PipelineConfig) -> anyhow::Result<Summary> {
    stage("config", cfg.validate())?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join(CONFIG_ECHO_FILE), cfg)?;

    let series = stage("ingest", load_series(cfg))?;
    write_scores(create(&out.join("series.csv"))?, &series)?;

    let spec = stage("ensemble", WindowSpec::new(cfg.n_dim))?;
    let ensemble = stage("ensemble", build_team_ensembles(&series, &spec))?;
    if ensemble.is_empty() {
        return Err(anyhow!("no series is long enough for one block of {} values", spec.block_len))
            .context("pipeline stage `ensemble` failed");
    }
    export::write_ensemble(&out.join("ensemble"), &ensemble)?;

    let teams = series
        .iter()
        .map(|s| TeamSummary {
            team_id: s.team_id().to_string(),
            format: s.format_tag(),
            length: s.len(),
            members: ensemble.per_team_index.get(s.team_id()).map_or(0, Vec::len),
        })
        .collect();

    let max_eigenvalue_vs_k = if cfg.stats.maxeig_vs_k && !cfg.maxeig_k_values.is_empty() {
        let curve = stage("maxeig-vs-k", largest_eigenvalue_vs_k(&ensemble, &cfg.maxeig_k_values))?;
        let sidecar = CurveSidecar {
            kind: curve.kind,
            parameters: serde_json::json!({ "members": ensemble.len() }),
            reference: None,
        };
        export::write_curve(out, "maxeig_vs_k", &curve, &sidecar)?;
        Some(CurveReport {
            x: curve.abscissa.clone(),
            values: curve.values.clone(),
            reference: Vec::new(),
            reference_name: String::new(),
        })
    } else {
        None
    };

    let mut ks: Vec<usize> = vec![0, cfg.k_bands];
    ks.dedup();
    let bands = ks
        .into_iter()
        .map(|k| analyse_band(cfg, &ensemble, k, &out.join(format!("k{k:02}"))))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let summary = Summary {
        n_dim: cfg.n_dim,
        window: spec,
        teams,
        short_series: ensemble.short_series.clone(),
        total_members: ensemble.len(),
        bands,
        max_eigenvalue_vs_k,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
