//! Test-set metrics, the VCF audit, γ selection and experiment sweeps.

mod experiment;
mod search;
mod vcf;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::hscic::{column_scales, divide_columns, hscic_sq, hsic, HscicConfig, KernelScale};
use crate::learner::{prediction_loss, Predictor, Task, TrainConfig};
use crate::scm::{SampleBatch, Scm};

pub use experiment::{
    read_results, run_experiment, summarize, write_results, CellSummary, ExperimentConfig,
    ResultRow, RESULTS_HEADER,
};
pub use search::{gamma_search, GammaProbe, GammaSearchConfig, GammaSearchResult};
pub use vcf::{vcf, vcf_per_unit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Conditioning units; capped at the test-set size.
    pub d: usize,
    /// Intervention values per unit.
    pub k: usize,
    pub seed: u64,
    pub hscic: HscicConfig,
    /// Kernel units for the test HSCIC; standardization uses the evaluated
    /// batch's own column statistics.
    pub kernel_scale: KernelScale,
    pub targets: Option<Vec<String>>,
    pub penalty_aw: Option<Vec<String>>,
    pub penalty_s: Option<Vec<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            d: 1000,
            k: 500,
            seed: 0,
            hscic: HscicConfig::default(),
            kernel_scale: KernelScale::default(),
            targets: None,
            penalty_aw: None,
            penalty_s: None,
        }
    }
}

impl EvalConfig {
    /// Metric settings consistent with a training run: same targets,
    /// penalty roles and kernels.
    pub fn matching(train: &TrainConfig, d: usize, k: usize, seed: u64) -> Self {
        EvalConfig {
            d,
            k,
            seed,
            hscic: train.hscic,
            kernel_scale: train.kernel_scale,
            targets: train.targets.clone(),
            penalty_aw: train.penalty_aw.clone(),
            penalty_s: train.penalty_s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `mse` for regression, `accuracy` for classification.
    pub metric_name: String,
    pub metric: f64,
    pub test_hscic: f64,
    pub vcf: f64,
    pub gamma: f64,
    pub seed: u64,
    pub runtime_s: f64,
}

/// Classification accuracy at threshold 0.5.
pub fn accuracy(probs: &nalgebra::DMatrix<f64>, y: &nalgebra::DMatrix<f64>) -> f64 {
    let hits = probs
        .iter()
        .zip(y.iter())
        .filter(|(p, t)| ((**p >= 0.5) as u8 as f64) == **t)
        .count();
    hits as f64 / probs.len().max(1) as f64
}

/// Predictive metric on `batch`: MSE, or accuracy for classification.
pub fn predictive_metric(
    pred: &Predictor,
    batch: &SampleBatch,
    targets: &[String],
) -> Result<(String, f64)> {
    let out = pred.predict(batch)?;
    let y = batch.concat(targets)?;
    Ok(match pred.task {
        Task::RegressionMse => (
            "mse".into(),
            prediction_loss(Task::RegressionMse, &out, &y).0,
        ),
        Task::BinaryCe => ("accuracy".into(), accuracy(&out, &y)),
    })
}

/// HSCIC (or HSIC when the conditioning set is empty) of the predictions on
/// `batch`.
pub fn test_hscic(pred: &Predictor, batch: &SampleBatch, cfg: &EvalConfig) -> Result<f64> {
    let roles = batch.roles();
    let aw = cfg.penalty_aw.clone().unwrap_or_else(|| roles.a_union_w());
    let s = cfg.penalty_s.clone().unwrap_or_else(|| roles.s.clone());
    if aw.is_empty() {
        return config("test HSCIC needs a non-empty A ∪ W block");
    }
    let mut out = pred.predict(batch)?;
    let mut aws = batch.concat(&aw)?;
    let mut ss = batch.concat(&s)?;
    if cfg.kernel_scale == KernelScale::Standardized {
        let targets = cfg.targets.clone().unwrap_or_else(|| roles.y.clone());
        out = divide_columns(&out, &column_scales(&batch.concat(&targets)?));
        aws = divide_columns(&aws, &column_scales(&aws));
        ss = divide_columns(&ss, &column_scales(&ss));
    }
    if s.is_empty() {
        hsic(&out, &aws, &cfg.hscic.y_kernel, &cfg.hscic.aw_kernel)
    } else {
        Ok(hscic_sq(&cfg.hscic, &out, &aws, &ss)?.mean)
    }
}

pub fn evaluate(
    pred: &Predictor,
    scm: &Scm,
    test: &SampleBatch,
    cfg: &EvalConfig,
    gamma: f64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let targets = cfg
        .targets
        .clone()
        .unwrap_or_else(|| test.roles().y.clone());
    if targets.is_empty() {
        return config("evaluation needs target columns");
    }
    let (metric_name, metric) = predictive_metric(pred, test, &targets)?;
    let test_hscic = test_hscic(pred, test, cfg)?;
    let d = cfg.d.min(test.n());
    let vcf = vcf(pred, scm, test, d, cfg.k, cfg.seed)?;
    Ok(EvalReport {
        metric_name,
        metric,
        test_hscic,
        vcf,
        gamma,
        seed: cfg.seed,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
