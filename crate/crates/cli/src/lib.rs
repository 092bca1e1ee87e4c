//! Orchestration behind the `lagrmt` binary: configuration, the end-to-end
//! pipeline and analytic reference curves.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod refcurves;

pub use config::{MpSource, PipelineConfig, StatSelection, UnfoldConfig};
pub use pipeline::{run_pipeline, Summary};
pub use refcurves::{emit_reference_curves, RefKind};
