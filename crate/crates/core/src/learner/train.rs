use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::mlp::Mlp;
use super::predictor::{Network, Predictor, Residualizer, Standardizer, Task};
use crate::error::{config, Error, Result};
use crate::hscic::{
    column_scales, divide_columns, hsic_value_and_grad, HscicConfig, HscicState, KernelScale,
};
use crate::rng::{stream, Domain};
use crate::scm::SampleBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub hscic: HscicConfig,
    pub kernel_scale: KernelScale,
    /// Predictor inputs; defaults to `A ∪ X ∪ S`.
    pub inputs: Option<Vec<String>>,
    /// Prediction targets; defaults to the `Y` role.
    pub targets: Option<Vec<String>>,
    /// Columns of the penalty's `A ∪ W` block; defaults to the roles'.
    pub penalty_aw: Option<Vec<String>>,
    /// Conditioning columns; defaults to the `S` role. Empty switches the
    /// penalty to unconditional HSIC.
    pub penalty_s: Option<Vec<String>>,
    /// Z-score the network inputs with training-set statistics.
    pub standardize_inputs: bool,
    /// Fit regression targets in z-scored units; the final layer is mapped
    /// back so predictions come out in data units. Training losses in the
    /// history are in z-scored units, test losses in data units.
    pub standardize_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            gamma: 0.0,
            task: Task::RegressionMse,
            epochs: 1000,
            batch_size: 256,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            seed: 0,
            hidden: vec![20; 8],
            hscic: HscicConfig::default(),
            kernel_scale: KernelScale::default(),
            inputs: None,
            targets: None,
            penalty_aw: None,
            penalty_s: None,
            standardize_inputs: true,
            standardize_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return config(format!(
                "gamma must be a finite non-negative number, got {}",
                self.gamma
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return config("epochs and batch_size must be positive");
        }
        if self.gamma > 0.0 && self.batch_size < 2 {
            return config("batch_size must be at least 2 when gamma > 0");
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return config("invalid optimizer settings");
        }
        if self.hidden.contains(&0) {
            return config("hidden layer widths must be positive");
        }
        if self.gamma > 0.0 {
            self.hscic.validate()?;
        }
        Ok(())
    }

    pub fn input_names(&self, batch: &SampleBatch) -> Vec<String> {
        self.inputs
            .clone()
            .unwrap_or_else(|| batch.roles().predictors())
    }

    pub fn target_names(&self, batch: &SampleBatch) -> Vec<String> {
        self.targets
            .clone()
            .unwrap_or_else(|| batch.roles().y.clone())
    }

    pub fn penalty_aw_names(&self, batch: &SampleBatch) -> Vec<String> {
        self.penalty_aw
            .clone()
            .unwrap_or_else(|| batch.roles().a_union_w())
    }

    pub fn penalty_s_names(&self, batch: &SampleBatch) -> Vec<String> {
        self.penalty_s
            .clone()
            .unwrap_or_else(|| batch.roles().s.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub pred_loss: f64,
    /// Mean minibatch penalty; absent when `gamma = 0` and it was not computed.
    pub penalty: Option<f64>,
    pub total: f64,
    pub wall_s: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,pred_loss,penalty,total,wall_s,test_loss")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                r.epoch,
                r.pred_loss,
                opt(r.penalty),
                r.total,
                r.wall_s,
                opt(r.test_loss)
            )?;
        }
        Ok(())
    }
}

/// Loss and `∂loss/∂output` for one minibatch, averaged over rows and
/// output columns.
pub fn prediction_loss(task: Task, out: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let count = out.len().max(1) as f64;
    match task {
        Task::RegressionMse => {
            let diff = out - y;
            let loss = diff.norm_squared() / count;
            (loss, diff * (2.0 / count))
        }
        Task::BinaryCe => {
            let mut loss = 0.0;
            let grad = out.zip_map(y, |p, t| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                (p - t) / (p * (1.0 - p)) / count
            });
            (loss / count, grad)
        }
    }
}

/// Predictive loss on a whole batch; accuracy at 0.5 for classification is
/// reported separately by evaluation.
pub fn dataset_loss(pred: &Predictor, batch: &SampleBatch, targets: &[String]) -> Result<f64> {
    let out = pred.predict(batch)?;
    let y = batch.concat(targets)?;
    Ok(prediction_loss(pred.task, &out, &y).0)
}

/// Minimizes `L(Ŷ) + γ·HSCIC(Ŷ, A∪W | S)` with minibatch Adam.
pub fn train_cip(data: &SampleBatch, cfg: &TrainConfig) -> Result<(Predictor, TrainHistory)> {
    train_predictor(data, cfg, None, None)
}

/// Like [`train_cip`], additionally logging the loss on `test` every epoch.
pub fn train_cip_with_test(
    data: &SampleBatch,
    cfg: &TrainConfig,
    test: &SampleBatch,
) -> Result<(Predictor, TrainHistory)> {
    train_predictor(data, cfg, None, Some(test))
}

enum Penalty {
    None,
    Conditional { aw: DMatrix<f64>, s: DMatrix<f64> },
    Marginal { aw: DMatrix<f64> },
}

/// General training entry point. A residualizer, if given, is fixed and its
/// residuals stand in for its target columns among the inputs.
fn kernel_units(scale: KernelScale, m: DMatrix<f64>) -> DMatrix<f64> {
    match scale {
        KernelScale::Raw => m,
        KernelScale::Standardized => divide_columns(&m, &column_scales(&m)),
    }
}

pub fn train_predictor(
    data: &SampleBatch,
    cfg: &TrainConfig,
    residualizer: Option<Residualizer>,
    test: Option<&SampleBatch>,
) -> Result<(Predictor, TrainHistory)> {
    cfg.validate()?;
    let inputs = cfg.input_names(data);
    let targets = cfg.target_names(data);
    if inputs.is_empty() || targets.is_empty() {
        return config("training needs at least one input and one target column");
    }
    let mut y = data.concat(&targets)?;
    if cfg.task == Task::BinaryCe && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return config("binary_ce targets must be 0 or 1");
    }
    let target_scaler =
        (cfg.standardize_targets && cfg.task == Task::RegressionMse).then(|| Standardizer::fit(&y));
    if let Some(t) = &target_scaler {
        t.apply(&mut y);
    }
    let in_dim: usize = inputs
        .iter()
        .map(|n| data.column(n).map(|c| c.ncols()))
        .sum::<Result<usize>>()?;
    let mut dims = vec![in_dim];
    dims.extend(&cfg.hidden);
    dims.push(y.ncols());
    let mlp = Mlp::init(&dims, cfg.task.output_activation(), cfg.seed)?;
    let mut pred = Predictor {
        task: cfg.task,
        network: Network {
            inputs: inputs.clone(),
            scaler: Standardizer::identity(in_dim),
            mlp,
        },
        residualizer,
    };
    let mut x = pred.design(data)?;
    if cfg.standardize_inputs {
        let scaler = Standardizer::fit(&x);
        scaler.apply(&mut x);
        pred.network.scaler = scaler;
    }

    let penalty = if cfg.gamma > 0.0 {
        let aw_names = cfg.penalty_aw_names(data);
        if aw_names.is_empty() {
            return config("penalty needs a non-empty A ∪ W block");
        }
        let aw = kernel_units(cfg.kernel_scale, data.concat(&aw_names)?);
        let s_names = cfg.penalty_s_names(data);
        if s_names.is_empty() {
            Penalty::Marginal { aw }
        } else {
            Penalty::Conditional {
                aw,
                s: kernel_units(cfg.kernel_scale, data.concat(&s_names)?),
            }
        }
    } else {
        Penalty::None
    };
    let y_scales = match cfg.kernel_scale {
        KernelScale::Raw => vec![1.0; y.ncols()],
        KernelScale::Standardized => column_scales(&y),
    };
    // Test losses are reported in data units.
    let test_y = match test {
        Some(t) => Some(t.concat(&targets)?),
        None => None,
    };
    let data_units = |mut out: DMatrix<f64>| {
        if let Some(ts) = &target_scaler {
            for (j, mut col) in out.column_iter_mut().enumerate() {
                col.apply(|v| *v = *v * ts.scale[j] + ts.mean[j]);
            }
        }
        out
    };

    let n = data.n();
    let min_batch = if cfg.gamma > 0.0 { 2 } else { 1 };
    let adam = cfg.adam();
    let mut state = AdamState::new(pred.network.mlp.params().len());
    let mut history = TrainHistory::default();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, Domain::Shuffle, epoch as u32));
        let (mut loss_sum, mut pen_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let xb = x.select_rows(chunk);
            let yb = y.select_rows(chunk);
            let tape = pred.network.mlp.forward_tape(&xb)?;
            let out = tape.output();
            let (loss, mut grad) = prediction_loss(cfg.task, out, &yb);
            let pen = match &penalty {
                Penalty::None => None,
                Penalty::Conditional { aw, s } => {
                    let st =
                        HscicState::new(cfg.hscic, &aw.select_rows(chunk), &s.select_rows(chunk))?;
                    let (v, g) = st.value_and_grad(&divide_columns(out, &y_scales))?;
                    grad += divide_columns(&g, &y_scales) * cfg.gamma;
                    Some(v.mean)
                }
                Penalty::Marginal { aw } => {
                    let (v, g) = hsic_value_and_grad(
                        &divide_columns(out, &y_scales),
                        &aw.select_rows(chunk),
                        &cfg.hscic.y_kernel,
                        &cfg.hscic.aw_kernel,
                    )?;
                    grad += divide_columns(&g, &y_scales) * cfg.gamma;
                    Some(v)
                }
            };
            let total = loss + cfg.gamma * pen.unwrap_or(0.0);
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss {loss}, penalty {pen:?}"),
                });
            }
            let grads = pred.network.mlp.backward(&tape, &grad)?;
            adam_step(
                &mut state,
                pred.network.mlp.params_mut(),
                &grads.params,
                &adam,
            )?;
            if pred.network.mlp.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite parameters after update".into(),
                });
            }
            loss_sum += loss;
            pen_sum += pen.unwrap_or(0.0);
            batches += 1;
        }
        if batches == 0 {
            return config("no minibatch has enough rows; lower batch_size or add data");
        }
        let pred_loss = loss_sum / batches as f64;
        let penalty_mean = (!matches!(penalty, Penalty::None)).then(|| pen_sum / batches as f64);
        let test_loss = match (test, &test_y) {
            (Some(t), Some(ty)) => {
                Some(prediction_loss(cfg.task, &data_units(pred.predict(t)?), ty).0)
            }
            _ => None,
        };
        history.records.push(EpochRecord {
            epoch,
            pred_loss,
            penalty: penalty_mean,
            total: pred_loss + cfg.gamma * penalty_mean.unwrap_or(0.0),
            wall_s: start.elapsed().as_secs_f64(),
            test_loss,
        });
    }
    if let Some(t) = &target_scaler {
        pred.network.mlp.rescale_output(&t.scale, &t.mean)?;
        // Recompute with the folded model so the last entry matches it exactly.
        if let (Some(t), Some(ty), Some(last)) = (test, &test_y, history.records.last_mut()) {
            last.test_loss = Some(prediction_loss(cfg.task, &pred.predict(t)?, ty).0);
        }
    }
    Ok((pred, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Roles;
    use std::collections::BTreeMap;

    fn linear_batch(n: usize) -> SampleBatch {
        let x = DMatrix::from_fn(n, 1, |r, _| -1.0 + 2.0 * r as f64 / (n - 1) as f64);
        let y = &x * 2.0;
        let cols: BTreeMap<_, _> = [("A".to_string(), x), ("Y".to_string(), y)].into();
        SampleBatch::new(
            vec!["A".into(), "Y".into()],
            cols,
            None,
            Roles::new(&["A"], &[], &[], &["Y"]),
        )
        .unwrap()
    }

    #[test]
    fn gamma_zero_fits_linear_map() {
        let data = linear_batch(64);
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 16,
            learning_rate: 1e-2,
            hidden: vec![],
            seed: 1,
            ..TrainConfig::default()
        };
        let (pred, hist) = train_cip(&data, &cfg).unwrap();
        assert_eq!(hist.len(), 300);
        assert!(hist.records.iter().all(|r| r.penalty.is_none()));
        let mse = dataset_loss(&pred, &data, &["Y".to_string()]).unwrap();
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_batch(40);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            gamma: 0.5,
            hidden: vec![6, 6],
            penalty_s: Some(vec![]),
            seed: 3,
            ..TrainConfig::default()
        };
        let (a, ha) = train_cip(&data, &cfg).unwrap();
        let (b, hb) = train_cip(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let strip = |h: &TrainHistory| {
            h.records
                .iter()
                .map(|r| (r.pred_loss, r.penalty))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&ha), strip(&hb));
        assert!(ha
            .records
            .iter()
            .all(|r| (r.total - r.pred_loss - 0.5 * r.penalty.unwrap()).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_configs() {
        let data = linear_batch(10);
        let cfg = TrainConfig {
            gamma: 1.0,
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(train_cip(&data, &cfg), Err(Error::Config(_))));
        let cfg = TrainConfig {
            gamma: -1.0,
            ..TrainConfig::default()
        };
        assert!(train_cip(&data, &cfg).is_err());
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = linear_batch(16);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 1e300,
            hidden: vec![4],
            ..TrainConfig::default()
        };
        match train_cip(&data, &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn test_loss_matches_final_model() {
        let data = linear_batch(32);
        let test = linear_batch(9);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: vec![5],
            ..TrainConfig::default()
        };
        let (pred, hist) = train_cip_with_test(&data, &cfg, &test).unwrap();
        let direct = dataset_loss(&pred, &test, &["Y".to_string()]).unwrap();
        assert_eq!(hist.last().unwrap().test_loss, Some(direct));
    }

    #[test]
    fn binary_ce_gradient_through_logistic() {
        let out = DMatrix::from_row_slice(2, 1, &[0.25, 0.8]);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (loss, g) = prediction_loss(Task::BinaryCe, &out, &y);
        let expected = -((0.75f64).ln() + (0.8f64).ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-12);
        // times p(1 − p) this is (p − y)/n
        assert!((g[(0, 0)] * 0.25 * 0.75 - 0.125).abs() < 1e-12);
    }
}
