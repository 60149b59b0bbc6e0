//! Fitted predictors: a network plus the column plumbing around it, and the
//! JSON checkpoint format.
//!
//! Checkpoint layout, fields in this order:
//!
//! ```text
//! { "format": "cip-mlp/1",
//!   "task": "regression_mse" | "binary_ce",
//!   "network": NET,
//!   "residualizer": null | { "targets": [..], "network": NET } }
//! NET = { "inputs": [..], "input_mean": [..], "input_scale": [..],
//!         "layers": [ { "activation": "relu" | "identity" | "logistic",
//!                       "weight": [[..] x in_dim],   // row-major, in × out
//!                       "bias": [..] } ] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::error::{config, Error, Result};
use crate::scm::{Regressor, SampleBatch};

pub const CHECKPOINT_FORMAT: &str = "cip-mlp/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    RegressionMse,
    BinaryCe,
}

impl Task {
    pub fn output_activation(self) -> Activation {
        match self {
            Task::RegressionMse => Activation::Identity,
            Task::BinaryCe => Activation::Logistic,
        }
    }
}

/// Named columns with a common row count.
pub trait ColumnSource {
    fn column(&self, name: &str) -> Result<&DMatrix<f64>>;
    fn rows(&self) -> usize;
}

impl ColumnSource for SampleBatch {
    fn column(&self, name: &str) -> Result<&DMatrix<f64>> {
        SampleBatch::column(self, name)
    }

    fn rows(&self) -> usize {
        self.n()
    }
}

impl ColumnSource for BTreeMap<String, DMatrix<f64>> {
    fn column(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("no column `{name}`")))
    }

    fn rows(&self) -> usize {
        self.values().next().map_or(0, |m| m.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column means and standard deviations; near-constant columns keep
    /// scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &mut DMatrix<f64>) {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.scale[j]);
        }
    }
}

/// A network reading named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub inputs: Vec<String>,
    pub scaler: Standardizer,
    pub mlp: Mlp,
}

impl Network {
    fn raw_design(
        &self,
        src: &dyn ColumnSource,
        substitute: Option<&BTreeMap<String, DMatrix<f64>>>,
    ) -> Result<DMatrix<f64>> {
        let blocks: Vec<&DMatrix<f64>> = self
            .inputs
            .iter()
            .map(|name| match substitute.and_then(|s| s.get(name)) {
                Some(m) => Ok(m),
                None => src.column(name),
            })
            .collect::<Result<_>>()?;
        let width: usize = blocks.iter().map(|b| b.ncols()).sum();
        if width != self.mlp.input_dim() {
            return Err(Error::Dimension(format!(
                "inputs {:?} span {width} columns, network expects {}",
                self.inputs,
                self.mlp.input_dim()
            )));
        }
        let mut x = DMatrix::zeros(src.rows(), width);
        let mut c = 0;
        for b in blocks {
            if b.nrows() != src.rows() {
                return Err(Error::Dimension(
                    "input columns disagree on row count".into(),
                ));
            }
            x.columns_mut(c, b.ncols()).copy_from(b);
            c += b.ncols();
        }
        Ok(x)
    }

    pub(crate) fn design(
        &self,
        src: &dyn ColumnSource,
        substitute: Option<&BTreeMap<String, DMatrix<f64>>>,
    ) -> Result<DMatrix<f64>> {
        let mut x = self.raw_design(src, substitute)?;
        self.scaler.apply(&mut x);
        Ok(x)
    }

    pub fn predict(&self, src: &dyn ColumnSource) -> Result<DMatrix<f64>> {
        self.mlp.forward(&self.design(src, None)?)
    }
}

/// Replaces each target column `t` with `t − f(regressors)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residualizer {
    pub targets: Vec<String>,
    pub network: Network,
}

impl Residualizer {
    pub fn residuals(&self, src: &dyn ColumnSource) -> Result<BTreeMap<String, DMatrix<f64>>> {
        let fitted = self.network.predict(src)?;
        let mut out = BTreeMap::new();
        let mut c = 0;
        for t in &self.targets {
            let col = src.column(t)?;
            let d = col.ncols();
            if c + d > fitted.ncols() {
                return Err(Error::Dimension(
                    "residualizer output is narrower than its targets".into(),
                ));
            }
            out.insert(t.clone(), col - fitted.columns(c, d));
            c += d;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub task: Task,
    pub network: Network,
    pub residualizer: Option<Residualizer>,
}

impl Predictor {
    pub fn inputs(&self) -> &[String] {
        &self.network.inputs
    }

    /// The standardized network input for every row of `src`.
    pub fn design(&self, src: &dyn ColumnSource) -> Result<DMatrix<f64>> {
        let subs = match &self.residualizer {
            Some(r) => Some(r.residuals(src)?),
            None => None,
        };
        self.network.design(src, subs.as_ref())
    }

    pub fn predict(&self, src: &dyn ColumnSource) -> Result<DMatrix<f64>> {
        self.network.mlp.forward(&self.design(src)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            task: self.task,
            network: NetworkFile::from(&self.network),
            residualizer: self.residualizer.as_ref().map(|r| ResidualFile {
                targets: r.targets.clone(),
                network: NetworkFile::from(&r.network),
            }),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return config(format!("unsupported checkpoint format `{}`", file.format));
        }
        let network = file.network.into_network()?;
        if network.mlp.output_activation() != file.task.output_activation() {
            return config("checkpoint head activation does not match its task");
        }
        let residualizer = match file.residualizer {
            Some(r) => Some(Residualizer {
                targets: r.targets,
                network: r.network.into_network()?,
            }),
            None => None,
        };
        Ok(Predictor {
            task: file.task,
            network,
            residualizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Predictor::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Treats the input matrix as the raw concatenation of the predictor's
/// input columns.
impl Regressor for Predictor {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.residualizer.is_some() {
            return config("a residualizing predictor needs named columns");
        }
        let mut x = inputs.clone();
        if x.ncols() != self.network.mlp.input_dim() {
            return Err(Error::Dimension(format!(
                "expected {} input columns, got {}",
                self.network.mlp.input_dim(),
                x.ncols()
            )));
        }
        self.network.scaler.apply(&mut x);
        self.network.mlp.forward(&x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    task: Task,
    network: NetworkFile,
    residualizer: Option<ResidualFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResidualFile {
    targets: Vec<String>,
    network: NetworkFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    inputs: Vec<String>,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    activation: Activation,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<&Network> for NetworkFile {
    fn from(n: &Network) -> Self {
        let m = &n.mlp;
        let layers = (0..m.layers())
            .map(|l| {
                let w = m.weight(l);
                LayerFile {
                    activation: m.activation(l),
                    weight: w.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: m.bias(l).to_vec(),
                }
            })
            .collect();
        NetworkFile {
            inputs: n.inputs.clone(),
            input_mean: n.scaler.mean.clone(),
            input_scale: n.scaler.scale.clone(),
            layers,
        }
    }
}

impl NetworkFile {
    fn into_network(self) -> Result<Network> {
        let last = self.layers.len().saturating_sub(1);
        let mut parts = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.into_iter().enumerate() {
            let expected = if l == last {
                None
            } else {
                Some(Activation::Relu)
            };
            if let Some(a) = expected {
                if layer.activation != a {
                    return config("hidden layers must use relu");
                }
            }
            let rows = layer.weight.len();
            let cols = layer.weight.first().map_or(0, Vec::len);
            if layer.weight.iter().any(|r| r.len() != cols) {
                return Err(Error::Dimension("ragged weight matrix".into()));
            }
            let w = DMatrix::from_fn(rows, cols, |i, j| layer.weight[i][j]);
            parts.push((w, layer.bias, layer.activation));
        }
        let output = parts
            .last()
            .map(|p| p.2)
            .ok_or_else(|| Error::Config("checkpoint has no layers".into()))?;
        let layers: Vec<(DMatrix<f64>, Vec<f64>)> =
            parts.into_iter().map(|(w, b, _)| (w, b)).collect();
        let mlp = Mlp::from_layers(output, &layers)?;
        if self.input_mean.len() != mlp.input_dim() || self.input_scale.len() != mlp.input_dim() {
            return Err(Error::Dimension(
                "scaler length does not match the input layer".into(),
            ));
        }
        Ok(Network {
            inputs: self.inputs,
            scaler: Standardizer {
                mean: self.input_mean,
                scale: self.input_scale,
            },
            mlp,
        })
    }
}
