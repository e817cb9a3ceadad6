//! Numerical core for trial-based cost-effectiveness analysis of
//! cluster-randomised trials.
//!
//! The crate is `no_std` and needs only an allocator. It covers the whole
//! analytic chain from a merged patient-level dataset to decision metrics:
//!
//! - [`trial`]: patient/ward records, source merging and baseline tables
//! - [`missing`]: missingness profiling, the 60% resource rule, baseline
//!   within-ward imputation and chained-equation imputation by arm
//! - [`outcomes`]: value sets, area-under-the-curve QALYs and costing
//! - [`lmm`], [`regression`], [`estimation`]: random-intercept REML,
//!   seemingly unrelated regression and adjusted differences
//! - [`uncertainty`]: Rubin pooling, the ward bootstrap and CEACs
//! - [`decision`]: ICER, NHB/NMB and the MNAR rescaling scenarios
//! - [`pipeline`]: the per-imputation analysis and scenario sweep
//! - [`synth`]: a synthetic trial generator with known ground truth
//!
//! File formats, parallel execution and the command-line driver live in the
//! companion `crt-cea` crate.

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baseline;
pub mod decision;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod linalg;
pub mod lmm;
pub mod logit;
pub mod missing;
pub mod outcomes;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod special;
pub mod synth;
pub mod trial;
pub mod uncertainty;

pub use error::{CeaError, Result};
pub use exec::{Executor, Serial};
