use std::path::PathBuf;

use lagrmt_cli::config::{MpSource, PipelineConfig};
use lagrmt_cli::pipeline::{run_pipeline, CONFIG_ECHO_FILE, SUMMARY_FILE};
use lagrmt_core::mpmodel::FitMethod;
use lagrmt_core::FormatTag;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/common_mode_odi.csv")
}

fn config(out: &std::path::Path) -> PipelineConfig {
    PipelineConfig { inputs: vec![fixture()], output_dir: out.to_path_buf(), seed: Some(7), ..Default::default() }
}

fn all_finite(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        serde_json::Value::Array(a) => a.iter().all(all_finite),
        serde_json::Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

#[test]
fn default_run_has_full_schema() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&config(dir.path())).unwrap();
    assert_eq!(summary.total_members, 72);
    assert_eq!(summary.bands.len(), 1);

    let text = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(all_finite(&v));
    for key in ["n_dim", "window", "teams", "total_members", "bands", "max_eigenvalue_vs_k"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let band = &v["bands"][0];
    for key in ["mp", "ks_mp", "ks_spacing_gue", "ks_mixed_poisson", "curves", "mean_max_eigenvalue"] {
        assert!(!band[key].is_null(), "missing bands[0].{key}");
    }
    for key in ["a", "b", "x_minus", "x_plus"] {
        assert!(band["mp"][key].is_number());
    }
    for curve in ["spacing_hist", "number_variance", "rigidity"] {
        let c = &band["curves"][curve];
        assert_eq!(c["x"].as_array().unwrap().len(), c["reference"].as_array().unwrap().len());
    }

    let echoed: PipelineConfig =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(CONFIG_ECHO_FILE)).unwrap()).unwrap();
    assert_eq!(echoed, config(dir.path()));
    for file in
        ["series.csv", "ensemble/manifest.json", "k00/spectra.csv", "k00/spacings.csv", "k00/curves/rigidity.json"]
    {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
}

#[test]
fn explicit_parameters_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { mp: MpSource::Explicit { a: 2.75, b: 3.535 }, ..config(dir.path()) };
    let summary = run_pipeline(&cfg).unwrap();
    let mp = &summary.bands[0].mp;
    assert!((mp.x_minus - 0.339601).abs() < 1e-5);
    assert!((mp.x_plus - 1.78204).abs() < 1e-5);
    assert_eq!(mp.source, "explicit");
}

#[test]
fn preset_band_removal_improves_spacing_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        inputs: vec![fixture()],
        output_dir: dir.path().to_path_buf(),
        ..PipelineConfig::preset(FormatTag::Odi)
    };
    let summary = run_pipeline(&cfg).unwrap();
    let p0 = summary.band(0).unwrap().ks_spacing_gue.unwrap().p_value;
    let p15 = summary.band(15).unwrap().ks_spacing_gue.unwrap().p_value;
    assert!(p15 > p0, "p(k=15) = {p15:e}, p(k=0) = {p0:e}");
    let maxeig = summary.max_eigenvalue_vs_k.unwrap();
    assert!(maxeig.values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn short_matrices_skip_long_range_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        inputs: vec![fixture()],
        output_dir: dir.path().to_path_buf(),
        format: None,
        l_values: vec![5.0, 10.0, 50.0],
        n_values: vec![40.0, 60.0],
        ..PipelineConfig::preset(FormatTag::T20)
    };
    let summary = run_pipeline(&cfg).unwrap();
    let band = summary.band(0).unwrap();
    assert!(band.skipped.contains_key("number_variance"));
    assert_eq!(band.curves["rigidity"].x, vec![5.0]);
}

#[test]
fn ks_grid_fit_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { mp: MpSource::Fitted { method: FitMethod::KsGrid }, ..config(dir.path()) };
    let summary = run_pipeline(&cfg).unwrap();
    let fitted = &summary.bands[0];
    assert_eq!(fitted.mp.source, "ks-grid");

    let moments = run_pipeline(&config(&dir.path().join("moments"))).unwrap();
    assert!(fitted.ks_mp.unwrap().d_stat <= moments.bands[0].ks_mp.unwrap().d_stat);
}

#[test]
fn failing_stage_is_named_and_earlier_outputs_kept() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { n_dim: 500, ..config(dir.path()) };
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("`ensemble`"), "{err:#}");
    assert!(dir.path().join(CONFIG_ECHO_FILE).exists());
    assert!(dir.path().join("series.csv").exists());
    assert!(!dir.path().join(SUMMARY_FILE).exists());
}

#[test]
fn missing_input_fails_in_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { inputs: vec![dir.path().join("absent.csv")], ..config(dir.path()) };
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("`ingest`"), "{err:#}");
}
