use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lagrmt_core::mpmodel::FitMethod;
use lagrmt_core::unfold::DEFAULT_FIT_DEGREE;
use lagrmt_core::{FormatTag, MPParams, UnfoldMethod};
use serde::{Deserialize, Serialize};

/// How the level density parameters are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MpSource {
    Fitted { method: FitMethod },
    Explicit { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfoldConfig {
    pub method: UnfoldMethod,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatSelection {
    pub spacing: bool,
    pub number_variance: bool,
    pub rigidity: bool,
    pub ks: bool,
    pub maxeig_vs_k: bool,
}

impl Default for StatSelection {
    fn default() -> Self {
        Self { spacing: true, number_variance: true, rigidity: true, ks: true, maxeig_vs_k: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    /// Restricts the run to one format; `None` keeps every series.
    pub format: Option<FormatTag>,
    pub n_dim: usize,
    pub k_bands: usize,
    pub unfold: UnfoldConfig,
    pub mp: MpSource,
    pub stats: StatSelection,
    /// Fraction of levels cut from each end of every unfolded member.
    pub edge_trim: f64,
    pub n_values: Vec<f64>,
    pub l_values: Vec<f64>,
    pub hist_bins: usize,
    pub hist_s_max: f64,
    pub maxeig_k_values: Vec<usize>,
    /// Degree of the finite-N basis written alongside the fit.
    pub finite_n_degree: usize,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            format: None,
            n_dim: 90,
            k_bands: 0,
            unfold: UnfoldConfig { method: UnfoldMethod::Numerical, degree: DEFAULT_FIT_DEGREE },
            mp: MpSource::Fitted { method: FitMethod::Moments },
            stats: StatSelection::default(),
            edge_trim: 0.25,
            n_values: (1..=10).map(f64::from).collect(),
            l_values: (5..=20).map(f64::from).collect(),
            hist_bins: 30,
            hist_s_max: 3.0,
            maxeig_k_values: vec![0, 5, 10, 15],
            finite_n_degree: 10,
            seed: None,
            output_dir: PathBuf::from("lagrmt-out"),
        }
    }
}

impl PipelineConfig {
    /// Dataset presets: TEST 90/5, ODI 90/15, T20 20/0.
    pub fn preset(format: FormatTag) -> Self {
        let (n_dim, k_bands) = match format {
            FormatTag::Test => (90, 5),
            FormatTag::Odi => (90, 15),
            FormatTag::T20 => (20, 0),
        };
        let maxeig_k_values = (0..=k_bands.max(15)).step_by(5).filter(|&k| k < n_dim).collect();
        Self { format: Some(format), n_dim, k_bands, maxeig_k_values, ..Self::default() }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.inputs.is_empty() {
            bail!("config lists no input files");
        }
        if self.n_dim < 2 {
            bail!("n_dim must be at least 2");
        }
        if self.k_bands >= self.n_dim {
            bail!("k_bands = {} must be below n_dim = {}", self.k_bands, self.n_dim);
        }
        if let Some(&k) = self.maxeig_k_values.iter().find(|&&k| k >= self.n_dim) {
            bail!("maxeig k value {k} must be below n_dim = {}", self.n_dim);
        }
        if !(0.0..0.5).contains(&self.edge_trim) {
            bail!("edge_trim must lie in [0, 0.5)");
        }
        if self.unfold.method == UnfoldMethod::Numerical && self.unfold.degree == 0 {
            bail!("numerical unfolding needs a positive degree");
        }
        for (name, grid) in [("n_values", &self.n_values), ("l_values", &self.l_values)] {
            if grid.iter().any(|&v| !(v > 0.0)) || !grid.windows(2).all(|w| w[0] < w[1]) {
                bail!("{name} must be positive and strictly increasing");
            }
        }
        if self.hist_bins < 2 || !(self.hist_s_max > 0.0) {
            bail!("histogram needs at least 2 bins and a positive s_max");
        }
        if let MpSource::Explicit { a, b } = self.mp {
            MPParams::new(a, b)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let t = PipelineConfig::preset(FormatTag::Test);
        assert_eq!((t.n_dim, t.k_bands), (90, 5));
        let o = PipelineConfig::preset(FormatTag::Odi);
        assert_eq!((o.n_dim, o.k_bands), (90, 15));
        let s = PipelineConfig::preset(FormatTag::T20);
        assert_eq!((s.n_dim, s.k_bands), (20, 0));
        assert_eq!(s.maxeig_k_values, vec![0, 5, 10, 15]);
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let mut cfg = PipelineConfig::preset(FormatTag::Odi);
        cfg.inputs = vec!["a.csv".into()];
        cfg.mp = MpSource::Explicit { a: 2.75, b: 3.535 };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);

        let partial: PipelineConfig = serde_json::from_str(r#"{"inputs": ["x.csv"], "k_bands": 3}"#).unwrap();
        assert_eq!(partial.k_bands, 3);
        assert_eq!(partial.n_dim, 90);
        partial.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = PipelineConfig { inputs: vec!["x".into()], ..Default::default() };
        cfg.k_bands = 90;
        assert!(cfg.validate().is_err());
        cfg.k_bands = 0;
        cfg.mp = MpSource::Explicit { a: -1.0, b: 1.0 };
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_err());
    }
}
