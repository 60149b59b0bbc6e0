//! Structural causal models: observational sampling with retained exogenous
//! draws, hard interventions, and counterfactual replay.
//!
//! Abduction is exact for data produced here: every batch keeps the noise
//! that generated it, so a counterfactual re-runs the mechanisms on the same
//! draws with some nodes overridden.

mod augment;
mod batch;
mod dgp;
pub mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::graph::{descendants, Dag, NodeSet};
use crate::rng::{stream, Domain};

pub use augment::{augment, AugmentMode, Regressor};
pub use batch::{Roles, SampleBatch};
pub use dgp::{dgp_catalog, DgpId, DgpName, DgpParams};

/// Mechanism signature: parent values (in the node's declared parent order),
/// this row's exogenous draw, and the output slot to fill.
pub type StructuralFn = Arc<dyn Fn(&[&[f64]], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Mechanism {
    Function(StructuralFn),
    Constant(Vec<f64>),
}

impl fmt::Debug for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Function(_) => write!(f, "Function(..)"),
            Mechanism::Constant(v) => write!(f, "Constant({v:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Normal { mean: f64, variance: f64 },
}

impl NoiseSpec {
    pub fn standard() -> Self {
        NoiseSpec::Normal {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn normal(mean: f64, variance: f64) -> Self {
        NoiseSpec::Normal { mean, variance }
    }

    pub fn from_family(family: &str, mean: f64, variance: f64) -> Result<Self> {
        match family {
            "normal" | "gaussian" => {
                let spec = NoiseSpec::Normal { mean, variance };
                spec.validate()?;
                Ok(spec)
            }
            other => config(format!("unsupported noise family `{other}`")),
        }
    }

    fn validate(&self) -> Result<()> {
        let NoiseSpec::Normal { mean, variance } = *self;
        if !mean.is_finite() || !(variance >= 0.0 && variance.is_finite()) {
            return config(format!("invalid normal noise N({mean}, {variance})"));
        }
        Ok(())
    }

    #[inline]
    fn transform(&self, z: f64) -> f64 {
        let NoiseSpec::Normal { mean, variance } = *self;
        mean + variance.sqrt() * z
    }
}

#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub name: String,
    pub dim: usize,
    pub parents: Vec<String>,
    pub mechanism: Mechanism,
    pub noise: NoiseSpec,
}

impl NodeSpec {
    pub fn new<F>(name: &str, dim: usize, parents: &[&str], noise: NoiseSpec, f: F) -> Self
    where
        F: Fn(&[&[f64]], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        NodeSpec {
            name: name.to_string(),
            dim,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            mechanism: Mechanism::Function(Arc::new(f)),
            noise,
        }
    }

    /// A root whose value is its own exogenous draw.
    pub fn exogenous(name: &str, dim: usize, noise: NoiseSpec) -> Self {
        NodeSpec::new(name, dim, &[], noise, |_, u, out| out.copy_from_slice(u))
    }

    pub fn constant(name: &str, value: Vec<f64>) -> Self {
        NodeSpec {
            name: name.to_string(),
            dim: value.len(),
            parents: Vec::new(),
            mechanism: Mechanism::Constant(value),
            noise: NoiseSpec::normal(0.0, 0.0),
        }
    }
}

/// A counterfactual value for one node: the same vector for every row, or
/// one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub enum CfValue {
    Constant(Vec<f64>),
    PerRow(DMatrix<f64>),
}

impl CfValue {
    pub fn scalar(v: f64) -> Self {
        CfValue::Constant(vec![v])
    }
}

#[derive(Debug, Clone)]
pub struct Scm {
    nodes: Vec<NodeSpec>,
    graph: Dag,
    topo: Vec<usize>,
    parent_idx: Vec<Vec<usize>>,
    roles: Roles,
    source: Option<DgpId>,
}

impl Scm {
    pub fn new(nodes: Vec<NodeSpec>, roles: Roles) -> Result<Self> {
        let names: Vec<&str> = nodes.iter().map(|n| n.name.as_str()).collect();
        let mut edges = Vec::new();
        for node in &nodes {
            if node.dim == 0 {
                return config(format!("node `{}` has dimension 0", node.name));
            }
            node.noise.validate()?;
            if let Mechanism::Constant(v) = &node.mechanism {
                if v.len() != node.dim {
                    return config(format!(
                        "constant for `{}` has the wrong dimension",
                        node.name
                    ));
                }
            }
            for p in &node.parents {
                edges.push((p.clone(), node.name.clone()));
            }
        }
        let graph =
            Dag::new(names.iter().copied(), edges).map_err(|e| Error::Config(e.to_string()))?;
        let parent_idx = nodes
            .iter()
            .map(|n| {
                n.parents
                    .iter()
                    .map(|p| graph.index_of(p))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let topo = graph.topological_order();
        let scm = Scm {
            nodes,
            graph,
            topo,
            parent_idx,
            roles,
            source: None,
        };
        scm.roles.validate(|n| scm.graph.contains(n))?;
        Ok(scm)
    }

    pub(crate) fn with_source(mut self, id: DgpId) -> Self {
        self.source = Some(id);
        self
    }

    /// Catalog entry this model was built from, if any.
    pub fn source(&self) -> Option<&DgpId> {
        self.source.as_ref()
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Result<&NodeSpec> {
        Ok(&self.nodes[self.graph.index_of(name)?])
    }

    pub fn dims(&self) -> BTreeMap<String, usize> {
        self.nodes.iter().map(|n| (n.name.clone(), n.dim)).collect()
    }

    pub fn descendants_of(&self, roots: &NodeSet) -> Result<NodeSet> {
        descendants(&self.graph, roots)
    }

    /// Evaluates one unit in topological order. `noise[i]` is node `i`'s
    /// exogenous draw; overridden nodes take the supplied value instead of
    /// their mechanism.
    fn eval_row(&self, noise: &[&[f64]], overrides: &[Option<&[f64]>], values: &mut [Vec<f64>]) {
        for &i in &self.topo {
            if let Some(v) = overrides[i] {
                values[i].copy_from_slice(v);
                continue;
            }
            match &self.nodes[i].mechanism {
                Mechanism::Constant(c) => values[i].copy_from_slice(c),
                Mechanism::Function(f) => {
                    let mut out = std::mem::take(&mut values[i]);
                    {
                        let parents: Vec<&[f64]> = self.parent_idx[i]
                            .iter()
                            .map(|&p| values[p].as_slice())
                            .collect();
                        f(&parents, noise[i], &mut out);
                    }
                    values[i] = out;
                }
            }
        }
    }

    fn row_buffers(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| vec![0.0; n.dim]).collect()
    }

    /// Draws `n` units. Node `i`'s noise comes from its own stream, so
    /// interventions elsewhere never shift it.
    pub fn sample_observational(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return config("sample size must be at least 1");
        }
        let noise: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let mut rng = stream(seed, Domain::Noise, i as u32);
                (0..n * node.dim)
                    .map(|_| node.noise.transform(rng.sample(StandardNormal)))
                    .collect()
            })
            .collect();
        let mut values: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|node| vec![0.0; n * node.dim])
            .collect();
        let mut row = self.row_buffers();
        let overrides = vec![None; self.nodes.len()];
        for r in 0..n {
            let noise_row: Vec<&[f64]> = self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, node)| &noise[i][r * node.dim..(r + 1) * node.dim])
                .collect();
            self.eval_row(&noise_row, &overrides, &mut row);
            for (i, node) in self.nodes.iter().enumerate() {
                values[i][r * node.dim..(r + 1) * node.dim].copy_from_slice(&row[i]);
            }
        }
        let to_matrix = |data: &[f64], dim: usize| DMatrix::from_row_slice(n, dim, data);
        let order: Vec<String> = self.nodes.iter().map(|x| x.name.clone()).collect();
        let columns = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| (node.name.clone(), to_matrix(&values[i], node.dim)))
            .collect();
        let noise_columns = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| (node.name.clone(), to_matrix(&noise[i], node.dim)))
            .collect();
        SampleBatch::new(order, columns, Some(noise_columns), self.roles.clone())
    }

    /// Replaces each assigned node's mechanism with a constant and its noise
    /// with a point mass. `self` is left untouched.
    pub fn intervene(&self, assignments: &BTreeMap<String, Vec<f64>>) -> Result<Scm> {
        let mut nodes = self.nodes.clone();
        for (name, value) in assignments {
            let i = self
                .graph
                .index_of(name)
                .map_err(|_| Error::Config(format!("cannot intervene on unknown node `{name}`")))?;
            if value.len() != nodes[i].dim {
                return config(format!(
                    "intervention on `{name}` has dimension {}, node has {}",
                    value.len(),
                    nodes[i].dim
                ));
            }
            nodes[i] = NodeSpec {
                name: name.clone(),
                dim: value.len(),
                parents: Vec::new(),
                mechanism: Mechanism::Constant(value.clone()),
                noise: NoiseSpec::normal(0.0, 0.0),
            };
        }
        let mut scm = Scm::new(nodes, self.roles.clone())?;
        scm.source = self.source.clone();
        Ok(scm)
    }

    fn check_replay(&self, batch: &SampleBatch) -> Result<()> {
        for node in &self.nodes {
            let noise = batch.noise_column(&node.name).ok_or_else(|| {
                Error::Replay(format!(
                    "batch has no retained exogenous draws for `{}`; abduction is impossible",
                    node.name
                ))
            })?;
            if noise.ncols() != node.dim {
                return Err(Error::Replay(format!(
                    "noise for `{}` has the wrong dimension",
                    node.name
                )));
            }
        }
        Ok(())
    }

    /// Counterfactual values of `targets` for every unit of `batch`, holding
    /// each unit's exogenous draws fixed and overriding `assignments`.
    pub fn counterfactual_outputs(
        &self,
        batch: &SampleBatch,
        assignments: &BTreeMap<String, CfValue>,
        targets: &NodeSet,
    ) -> Result<BTreeMap<String, DMatrix<f64>>> {
        self.check_replay(batch)?;
        let n = batch.n();
        let mut fixed: Vec<Option<&CfValue>> = vec![None; self.nodes.len()];
        for (name, value) in assignments {
            let i = self.graph.index_of(name)?;
            let dim = self.nodes[i].dim;
            let ok = match value {
                CfValue::Constant(v) => v.len() == dim,
                CfValue::PerRow(m) => m.nrows() == n && m.ncols() == dim,
            };
            if !ok {
                return Err(Error::Dimension(format!(
                    "counterfactual value for `{name}` has the wrong shape"
                )));
            }
            fixed[i] = Some(value);
        }
        let target_ids: Vec<usize> = targets
            .iter()
            .map(|t| self.graph.index_of(t))
            .collect::<Result<_>>()?;

        let noise_cols: Vec<&DMatrix<f64>> = self
            .nodes
            .iter()
            .map(|node| batch.noise_column(&node.name).expect("checked"))
            .collect();
        let mut out: Vec<Vec<f64>> = target_ids
            .iter()
            .map(|&t| Vec::with_capacity(n * self.nodes[t].dim))
            .collect();
        let mut row = self.row_buffers();
        let mut noise_row: Vec<Vec<f64>> = self.row_buffers();
        let mut override_row: Vec<Vec<f64>> = self.row_buffers();
        for r in 0..n {
            for (i, m) in noise_cols.iter().enumerate() {
                for (k, slot) in noise_row[i].iter_mut().enumerate() {
                    *slot = m[(r, k)];
                }
                if let Some(CfValue::PerRow(m)) = fixed[i] {
                    for (k, slot) in override_row[i].iter_mut().enumerate() {
                        *slot = m[(r, k)];
                    }
                }
            }
            let overrides: Vec<Option<&[f64]>> = fixed
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    None => None,
                    Some(CfValue::Constant(c)) => Some(c.as_slice()),
                    Some(CfValue::PerRow(_)) => Some(override_row[i].as_slice()),
                })
                .collect();
            let noise_refs: Vec<&[f64]> = noise_row.iter().map(Vec::as_slice).collect();
            self.eval_row(&noise_refs, &overrides, &mut row);
            for (k, &t) in target_ids.iter().enumerate() {
                out[k].extend_from_slice(&row[t]);
            }
        }
        Ok(target_ids
            .iter()
            .zip(out)
            .map(|(&t, data)| {
                (
                    self.nodes[t].name.clone(),
                    DMatrix::from_row_slice(n, self.nodes[t].dim, &data),
                )
            })
            .collect())
    }

    /// Replays one unit under many alternative values of `nodes`: row `k` of
    /// `values` holds the concatenated override for alternative `k`. Returns
    /// the replayed `targets`, concatenated, one row per alternative.
    pub(crate) fn replay_unit(
        &self,
        batch: &SampleBatch,
        row: usize,
        nodes: &[usize],
        values: &DMatrix<f64>,
        targets: &[usize],
    ) -> Result<DMatrix<f64>> {
        let in_width: usize = nodes.iter().map(|&i| self.nodes[i].dim).sum();
        if values.ncols() != in_width {
            return Err(Error::Dimension(format!(
                "override values have {} columns, nodes need {in_width}",
                values.ncols()
            )));
        }
        let noise_row: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|nd| {
                let m = batch.noise_column(&nd.name).expect("replay checked");
                m.row(row).iter().copied().collect()
            })
            .collect();
        let noise_refs: Vec<&[f64]> = noise_row.iter().map(Vec::as_slice).collect();
        let width: usize = targets.iter().map(|&t| self.nodes[t].dim).sum();
        let mut out = DMatrix::zeros(values.nrows(), width);
        let mut buf = self.row_buffers();
        let mut fixed: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&i| vec![0.0; self.nodes[i].dim])
            .collect();
        for k in 0..values.nrows() {
            for (c, slot) in fixed.iter_mut().flat_map(|v| v.iter_mut()).enumerate() {
                *slot = values[(k, c)];
            }
            let mut overrides: Vec<Option<&[f64]>> = vec![None; self.nodes.len()];
            for (j, &i) in nodes.iter().enumerate() {
                overrides[i] = Some(&fixed[j]);
            }
            self.eval_row(&noise_refs, &overrides, &mut buf);
            let mut col = 0;
            for &t in targets {
                for &v in &buf[t] {
                    out[(k, col)] = v;
                    col += 1;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn ensure_replayable(&self, batch: &SampleBatch) -> Result<()> {
        self.check_replay(batch)
    }

    pub(crate) fn index_of(&self, name: &str) -> Result<usize> {
        self.graph.index_of(name)
    }
}

pub fn sample_observational(scm: &Scm, n: usize, seed: u64) -> Result<SampleBatch> {
    scm.sample_observational(n, seed)
}

pub fn intervene(scm: &Scm, assignments: &BTreeMap<String, Vec<f64>>) -> Result<Scm> {
    scm.intervene(assignments)
}

pub fn counterfactual_outputs(
    scm: &Scm,
    batch: &SampleBatch,
    assignments: &BTreeMap<String, CfValue>,
    targets: &NodeSet,
) -> Result<BTreeMap<String, DMatrix<f64>>> {
    scm.counterfactual_outputs(batch, assignments, targets)
}
