//! Counterfactually invariant prediction.
//!
//! Graphical criteria for counterfactual invariance, an SCM simulator with
//! exact counterfactual replay, the HSCIC kernel regularizer with its
//! gradient, an MLP learner trained against it, the VCF audit metric and the
//! comparison baselines.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod hscic;
pub mod kernel;
pub mod learner;
pub mod rng;
pub mod scm;

pub use baselines::{train_baseline, BaselineConfig, BaselineKind};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate, gamma_search, run_experiment, vcf, EvalConfig, EvalReport, ExperimentConfig,
    GammaSearchConfig,
};
pub use graph::{AdjustmentMode, CriterionReport, Dag, NodeSet, Path};
pub use hscic::{hscic_grad_y, hscic_sq, HscicConfig, HscicState, KernelScale};
pub use kernel::{KernelSpec, KrrSolver};
pub use learner::{train_cip, Mlp, Predictor, Task, TrainConfig, TrainHistory};
pub use scm::{dgp_catalog, DgpId, DgpName, Roles, SampleBatch, Scm};
