//! Shared inputs for the criterion benchmarks.

use lagrmt_core::synth::{sample_common_mode_teams, sample_poisson_levels};
use lagrmt_core::{FormatTag, RngSpec, ScoreSeries, UnfoldedSpectrum};

pub fn common_mode_series(teams: usize, length: usize) -> Vec<ScoreSeries> {
    sample_common_mode_teams(teams, FormatTag::Odi, length, 0.6, &RngSpec::new(7)).expect("valid parameters")
}

pub fn poisson_levels(count: usize) -> UnfoldedSpectrum {
    sample_poisson_levels(count, &RngSpec::new(7)).expect("count >= 2")
}
