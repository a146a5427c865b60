//! Feature screening for right-censored survival data under single-index
//! hazard models.
//!
//! Marginal screening uses the FAST statistics, which need one sweep over the
//! risk sets per feature. Selected subsets are fitted in the Lin-Ying additive
//! hazards model, optionally with a lasso, adaptive lasso or one-step SCAD
//! penalty, and the iterated variant alternates screening and selection.
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the common instantiations.
//!
//! ```
//! use hazscreen_core::{compute_fast, sis, Keep, SurvivalDataset, Variant};
//! use ndarray::array;
//!
//! let z = array![[0.3, 1.0], [-1.2, 0.5], [0.8, -0.7], [0.1, -0.8]];
//! let ds = SurvivalDataset::new(vec![2.0, 1.0, 3.5, 0.7], vec![true, true, false, true], z).unwrap();
//! let fs = compute_fast(&ds);
//! assert_eq!(fs.p, 2);
//! let top = sis(&ds, Variant::Loss, Keep::TopK(1)).unwrap();
//! assert_eq!(top.kept.len(), 1);
//! ```

// `!(x > 0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fast_stat;
pub mod linalg;
pub mod linying;
pub mod penalized;
pub mod scalar;
pub mod screening;
pub mod simgen;
pub mod survival_data;

pub use error::{Error, Result};
pub use fast_stat::{compute_fast, FastSummary, Variant};
pub use linying::{build_subset, rerecruit_scores, LinYingFit, RecruitScore, RecruitScores, SubsetModel};
pub use penalized::{
    cv_tune, fit_lambda, fit_path, lambda_grid, lambda_max, select_by_pbic, CvResult, PathOptions, PenalizedFit,
    PenaltyKind, PenaltySpec,
};
pub use scalar::Scalar;
pub use screening::{
    isis, isis_with_summary, minimum_model_size, sis, IsisOptions, IsisTrace, IsisVariant, Keep, ScreenResult,
    Termination, Tuner,
};
pub use survival_data::SurvivalDataset;
pub use survival_data::{load_dataset, DataFormat};

pub type SurvivalDatasetF64 = SurvivalDataset<f64>;
pub type SurvivalDatasetF32 = SurvivalDataset<f32>;
pub type FastSummaryF64 = FastSummary<f64>;
pub type FastSummaryF32 = FastSummary<f32>;
pub type SubsetModelF64 = SubsetModel<f64>;
pub type SubsetModelF32 = SubsetModel<f32>;
pub type LinYingFitF64 = LinYingFit<f64>;
pub type LinYingFitF32 = LinYingFit<f32>;
pub type PenalizedFitF64 = PenalizedFit<f64>;
pub type PenalizedFitF32 = PenalizedFit<f32>;
pub type IsisTraceF64 = IsisTrace<f64>;
pub type IsisTraceF32 = IsisTrace<f32>;
