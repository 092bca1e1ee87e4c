use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lagrmt_cli::config::{MpSource, PipelineConfig};
use lagrmt_cli::pipeline::{run_pipeline, team_average, usable_grid};
use lagrmt_cli::refcurves::{emit_reference_curves, Range, RefKind};
use lagrmt_core::corrmat::build_team_ensembles;
use lagrmt_core::export::{self, CurveSidecar};
use lagrmt_core::ingest::write_scores;
use lagrmt_core::mpmodel::{
    build_poly_basis, finite_n_density, fit_mp_moments, fit_mp_params_ks, support_bounds, FitMethod,
};
use lagrmt_core::spectra::ensemble_spectra;
use lagrmt_core::stats::{
    average_spacing_histograms, ks_test, mix_sequences, number_variance, poisson_cdf, spacings, spectral_rigidity,
    wigner_gue_cdf,
};
use lagrmt_core::synth::{sample_common_mode_teams, sample_gue_spectrum, sample_poisson_levels, wishart_batch};
use lagrmt_core::unfold::{unfold_numerical, unfold_theoretical, DEFAULT_FIT_DEGREE};
use lagrmt_core::{parse_scores, series_summary, FormatTag, MPParams, RngSpec, UnfoldMethod, WindowSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lagrmt", version, about = "Random-matrix analysis of lagged cross-correlation matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse score CSV files and print per-series summaries.
    Ingest(IngestArgs),
    /// Build lagged correlation ensembles and write them to a directory.
    Ensemble(EnsembleArgs),
    /// Diagonalize an ensemble, optionally after removing extreme bands.
    Spectra(SpectraArgs),
    /// Fit the level density parameters to pooled spectra.
    FitMp(FitArgs),
    /// Build the finite-N orthonormal basis and its density.
    FiniteN(FiniteNArgs),
    /// Unfold spectra theoretically or numerically.
    Unfold(UnfoldArgs),
    /// Fluctuation statistics and KS tests of unfolded levels.
    Stats(StatsArgs),
    /// Draw seeded synthetic data.
    Synth(SynthArgs),
    /// Run the full pipeline.
    Run(RunArgs),
    /// Write an analytic reference curve.
    RefCurves(RefArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FitChoice {
    Moments,
    KsGrid,
}

impl From<FitChoice> for FitMethod {
    fn from(c: FitChoice) -> Self {
        match c {
            FitChoice::Moments => FitMethod::Moments,
            FitChoice::KsGrid => FitMethod::KsGrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum UnfoldChoice {
    Theoretical,
    Numerical,
}

impl From<UnfoldChoice> for UnfoldMethod {
    fn from(c: UnfoldChoice) -> Self {
        match c {
            UnfoldChoice::Theoretical => UnfoldMethod::Theoretical,
            UnfoldChoice::Numerical => UnfoldMethod::Numerical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    CommonMode,
    Wishart,
    Gue,
    Poisson,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Re-serialize the parsed series here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 90)]
    n_dim: usize,
    #[arg(long)]
    format: Option<FormatTag>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SpectraArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    spectra: PathBuf,
    #[arg(long, value_enum, default_value_t = FitChoice::Moments)]
    method: FitChoice,
}

#[derive(Args)]
struct FiniteNArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 10)]
    degree: usize,
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Args)]
struct UnfoldArgs {
    #[arg(long)]
    spectra: PathBuf,
    #[arg(long, value_enum, default_value_t = UnfoldChoice::Numerical)]
    method: UnfoldChoice,
    #[arg(long, default_value_t = DEFAULT_FIT_DEGREE)]
    degree: usize,
    /// Density parameters for theoretical unfolding; fitted by moments when omitted.
    #[arg(long, requires = "b", allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, requires = "a")]
    b: Option<f64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    unfolded: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    trim: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    seed: u64,
    /// Teams (common-mode) or matrices (wishart, gue).
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 900)]
    length: usize,
    #[arg(long, default_value_t = 0.6)]
    gamma: f64,
    #[arg(long, default_value = "ODI")]
    format: FormatTag,
    #[arg(long, default_value_t = 90)]
    n_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a dataset preset (n_dim and k_bands).
    #[arg(long)]
    preset: Option<FormatTag>,
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    n_dim: Option<usize>,
    #[arg(long)]
    k_bands: Option<usize>,
    #[arg(long, value_enum)]
    unfold: Option<UnfoldChoice>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_enum, conflicts_with = "a")]
    fit: Option<FitChoice>,
    #[arg(long, requires = "b", allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, requires = "a")]
    b: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RefArgs {
    #[arg(long, value_enum)]
    kind: RefKind,
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Degree of the finite-N density.
    #[arg(long, default_value_t = 10)]
    n_weight: usize,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn read_spectra(path: &Path) -> anyhow::Result<Vec<lagrmt_core::Spectrum>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(export::read_spectra(BufReader::new(file))?)
}

fn load_all(inputs: &[PathBuf]) -> anyhow::Result<Vec<lagrmt_core::ScoreSeries>> {
    let mut series = Vec::new();
    for path in inputs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        series.extend(parse_scores(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?);
    }
    Ok(series)
}

fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    let series = load_all(&args.input)?;
    if let Some(out) = &args.output {
        let mut w = create(out)?;
        write_scores(&mut w, &series)?;
        w.flush()?;
    }
    let rows: Vec<_> = series
        .iter()
        .map(|s| {
            let sum = series_summary(s);
            json!({ "team_id": s.team_id(), "format": s.format_tag(), "length": sum.length, "mean": sum.mean, "std": sum.std })
        })
        .collect();
    print_json(&json!(rows))
}

fn ensemble(args: EnsembleArgs) -> anyhow::Result<()> {
    let mut series = load_all(&args.input)?;
    if let Some(tag) = args.format {
        series.retain(|s| s.format_tag() == tag);
    }
    let spec = WindowSpec::new(args.n_dim)?;
    let ens = build_team_ensembles(&series, &spec)?;
    export::write_ensemble(&args.output, &ens)?;
    let members: BTreeMap<_, _> = ens.per_team_index.iter().map(|(t, i)| (t.clone(), i.len())).collect();
    print_json(&json!({ "window": spec, "members": members, "total": ens.len(), "short_series": ens.short_series }))
}

fn spectra(args: SpectraArgs) -> anyhow::Result<()> {
    let ens = export::read_ensemble(&args.ensemble)?;
    let spectra = ensemble_spectra(&ens, args.k)?;
    let mut w = create(&args.output)?;
    export::write_spectra(&mut w, &spectra)?;
    w.flush()?;
    Ok(())
}

fn fit_mp(args: FitArgs) -> anyhow::Result<()> {
    let eigs: Vec<f64> = read_spectra(&args.spectra)?.into_iter().flat_map(|s| s.eigenvalues).collect();
    let (params, projected) = match FitMethod::from(args.method) {
        FitMethod::Moments => {
            let fit = fit_mp_moments(&eigs)?;
            (fit.params, fit.projected)
        }
        FitMethod::KsGrid => (fit_mp_params_ks(&eigs)?, false),
    };
    let (lo, hi) = support_bounds(&params);
    print_json(&json!({ "a": params.a, "b": params.b, "x_minus": lo, "x_plus": hi, "projected": projected }))
}

fn finite_n(args: FiniteNArgs) -> anyhow::Result<()> {
    let params = MPParams::new(args.a, args.b)?.with_n_weight(args.degree)?;
    let basis = build_poly_basis(&params, args.degree)?;
    if let Some(path) = &args.basis {
        let mut w = create(path)?;
        export::write_basis(&mut w, &basis)?;
        w.flush()?;
    }
    if let Some(path) = &args.density {
        let (lo, hi) = support_bounds(&params);
        let range = Range { from: lo, to: hi, points: args.points.max(2) };
        let xs = range.grid();
        let ys: Vec<f64> = xs.iter().map(|&x| finite_n_density(x, &basis)).collect();
        let mut w = create(path)?;
        export::write_xy(&mut w, ("x", "rho_n"), &xs, &ys)?;
        w.flush()?;
    }
    print_json(&json!({ "degree": basis.degree, "quad_order": basis.quad_order, "gram_residual": basis.gram_residual }))
}

fn unfold(args: UnfoldArgs) -> anyhow::Result<()> {
    let spectra = read_spectra(&args.spectra)?;
    let unfolded = match UnfoldMethod::from(args.method) {
        UnfoldMethod::Numerical => {
            spectra.iter().map(|s| unfold_numerical(s, args.degree)).collect::<Result<Vec<_>, _>>()?
        }
        UnfoldMethod::Theoretical => {
            let params = match (args.a, args.b) {
                (Some(a), Some(b)) => MPParams::new(a, b)?,
                _ => {
                    let eigs: Vec<f64> = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
                    fit_mp_moments(&eigs)?.params
                }
            };
            spectra.iter().map(|s| unfold_theoretical(s, &params)).collect::<Result<Vec<_>, _>>()?
        }
    };
    let mut w = create(&args.output)?;
    export::write_unfolded(&mut w, &unfolded)?;
    w.flush()?;
    Ok(())
}

fn stats(args: StatsArgs) -> anyhow::Result<()> {
    let file = File::open(&args.unfolded).with_context(|| format!("opening {}", args.unfolded.display()))?;
    let unfolded = export::read_unfolded(BufReader::new(file))?;
    if unfolded.is_empty() {
        bail!("{} holds no unfolded sequences", args.unfolded.display());
    }
    let trimmed = unfolded.iter().map(|u| u.trim_edges(args.trim)).collect::<Result<Vec<_>, _>>()?;
    let mut teams: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, u) in trimmed.iter().enumerate() {
        teams.entry(u.source.team_id.clone()).or_default().push(i);
    }
    let samples = trimmed.iter().map(spacings).collect::<Result<Vec<_>, _>>()?;
    let pooled: Vec<f64> = samples.iter().flat_map(|s| s.spacings.iter().copied()).collect();
    let ks_gue = ks_test(&pooled, wigner_gue_cdf)?;
    let mixed = spacings(&mix_sequences(&trimmed)?)?;
    let ks_mixed = ks_test(&mixed.spacings, poisson_cdf)?;

    let params = json!({ "trim": args.trim, "members": trimmed.len(), "teams": teams.len() });
    let hist = average_spacing_histograms(&samples, 30, 3.0)?;
    let sidecar = |kind, reference: fn(f64) -> f64, x: &[f64]| CurveSidecar {
        kind,
        parameters: params.clone(),
        reference: Some(x.iter().map(|&v| reference(v)).collect()),
    };
    export::write_curve(
        &args.output,
        "spacing_hist",
        &hist,
        &sidecar(hist.kind, lagrmt_core::stats::wigner_gue, &hist.abscissa),
    )?;
    let n_grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let l_grid: Vec<f64> = (5..=20).map(f64::from).collect();
    let mut skipped = Vec::new();
    if let Some(grid) = usable_grid(&n_grid, &trimmed) {
        let per = trimmed.iter().map(|u| number_variance(u, &grid)).collect::<Result<Vec<_>, _>>()?;
        let c = team_average(&teams, &per)?;
        export::write_curve(
            &args.output,
            "number_variance",
            &c,
            &sidecar(c.kind, lagrmt_core::stats::sigma2_gue, &grid),
        )?;
    } else {
        skipped.push("number_variance");
    }
    if let Some(grid) = usable_grid(&l_grid, &trimmed) {
        let per = trimmed.iter().map(|u| spectral_rigidity(u, &grid)).collect::<Result<Vec<_>, _>>()?;
        let c = team_average(&teams, &per)?;
        export::write_curve(&args.output, "rigidity", &c, &sidecar(c.kind, lagrmt_core::stats::delta_gue, &grid))?;
    } else {
        skipped.push("rigidity");
    }
    print_json(&json!({ "ks_spacing_gue": ks_gue, "ks_mixed_poisson": ks_mixed, "skipped": skipped }))
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let rng = RngSpec::new(args.seed);
    let mut w = create(&args.output)?;
    match args.kind {
        SynthKind::CommonMode => {
            let series = sample_common_mode_teams(args.count, args.format, args.length, args.gamma, &rng)?;
            writeln!(w, "# synthetic common-mode series: seed {}, gamma {}", args.seed, args.gamma)?;
            write_scores(&mut w, &series)?;
        }
        SynthKind::Wishart => export::write_spectra(&mut w, &wishart_batch(args.count, args.n_dim, args.q, &rng)?)?,
        SynthKind::Gue => {
            let spectra: Vec<_> =
                (0..args.count).map(|i| sample_gue_spectrum(args.n_dim, &rng.with_stream(i as u64))).collect();
            export::write_spectra(&mut w, &spectra)?;
        }
        SynthKind::Poisson => export::write_unfolded(&mut w, &[sample_poisson_levels(args.length, &rng)?])?,
    }
    w.flush()?;
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(tag)) => PipelineConfig::preset(tag),
        (None, None) => PipelineConfig::default(),
    };
    if args.config.is_some() {
        if let Some(tag) = args.preset {
            let p = PipelineConfig::preset(tag);
            (cfg.format, cfg.n_dim, cfg.k_bands, cfg.maxeig_k_values) =
                (p.format, p.n_dim, p.k_bands, p.maxeig_k_values);
        }
    }
    if !args.input.is_empty() {
        cfg.inputs = args.input;
    }
    if let Some(n) = args.n_dim {
        cfg.n_dim = n;
    }
    if let Some(k) = args.k_bands {
        cfg.k_bands = k;
    }
    if let Some(m) = args.unfold {
        cfg.unfold.method = m.into();
    }
    if let Some(d) = args.degree {
        cfg.unfold.degree = d;
    }
    if let Some(f) = args.fit {
        cfg.mp = MpSource::Fitted { method: f.into() };
    }
    if let (Some(a), Some(b)) = (args.a, args.b) {
        cfg.mp = MpSource::Explicit { a, b };
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    let summary = run_pipeline(&cfg)?;
    for band in &summary.bands {
        let ks = band.ks_spacing_gue.map(|r| format!("D = {:.4}, p = {:.4e}", r.d_stat, r.p_value));
        println!(
            "k = {:>2}: a = {:.4}, b = {:.4}, support [{:.4}, {:.4}], spacing vs GUE {}",
            band.k,
            band.mp.a,
            band.mp.b,
            band.mp.x_minus,
            band.mp.x_plus,
            ks.unwrap_or_else(|| "not computed".into())
        );
    }
    println!("wrote {}", cfg.output_dir.join(lagrmt_cli::pipeline::SUMMARY_FILE).display());
    Ok(())
}

fn ref_curves(args: RefArgs) -> anyhow::Result<()> {
    let params = match (args.a, args.b) {
        (Some(a), Some(b)) => Some(MPParams::new(a, b)?.with_n_weight(args.n_weight)?),
        (None, None) => None,
        _ => bail!("--a and --b must be given together"),
    };
    let range = Range { from: args.from, to: args.to, points: args.points };
    match &args.output {
        Some(path) => {
            let mut w = create(path)?;
            emit_reference_curves(&mut w, args.kind, range, params.as_ref())?;
            w.flush()?;
        }
        None => emit_reference_curves(io::stdout().lock(), args.kind, range, params.as_ref())?,
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Spectra(a) => spectra(a),
        Command::FitMp(a) => fit_mp(a),
        Command::FiniteN(a) => finite_n(a),
        Command::Unfold(a) => unfold(a),
        Command::Stats(a) => stats(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::RefCurves(a) => ref_curves(a),
    }
}
