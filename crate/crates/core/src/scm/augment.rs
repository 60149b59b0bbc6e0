use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SampleBatch;
use crate::error::{config, Error, Result};
use crate::rng::{stream, Domain};

/// Anything that maps an `n × d_in` input matrix to `n × d_out` predictions.
pub trait Regressor {
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    Naive,
    Causal,
}

/// Expands every row into `n_aug` rows (row-major: all copies of unit 0,
/// then unit 1, ...). Copy 0 keeps the observed `A`; the others redraw it
/// from the empirical marginal. In causal mode `X` is recomputed as
/// `model([a′, s])`.
///
/// The output carries no exogenous draws: they no longer explain the
/// resampled rows.
pub fn augment(
    batch: &SampleBatch,
    mode: AugmentMode,
    n_aug: usize,
    model: Option<&dyn Regressor>,
    seed: u64,
) -> Result<SampleBatch> {
    if n_aug == 0 {
        return config("n_aug must be at least 1");
    }
    if mode == AugmentMode::Causal && model.is_none() {
        return config("causal augmentation needs a fitted model for X given (A, S)");
    }
    let roles = batch.roles();
    if roles.a.is_empty() {
        return config("augmentation needs a non-empty A role");
    }
    let n = batch.n();
    let mut rng = stream(seed, Domain::Augment, 0);
    let source: Vec<usize> = (0..n)
        .flat_map(|r| (0..n_aug).map(move |j| (r, j)))
        .map(|(r, j)| if j == 0 { r } else { rng.gen_range(0..n) })
        .collect();
    let rows: Vec<usize> = (0..n).flat_map(|r| std::iter::repeat_n(r, n_aug)).collect();

    let mut out = batch.clone().without_noise().select_rows(&rows);
    for a in &roles.a {
        let col = batch.column(a)?;
        let drawn = DMatrix::from_fn(source.len(), col.ncols(), |r, c| col[(source[r], c)]);
        out.replace_column(a, drawn)?;
    }
    if let (AugmentMode::Causal, Some(model)) = (mode, model) {
        let mut inputs_names = roles.a.clone();
        inputs_names.extend(roles.s.iter().cloned());
        let inputs = out.concat(&inputs_names)?;
        let pred = model.predict(&inputs)?;
        let width: usize = roles.x.iter().map(|x| out.dims()[x]).sum();
        if pred.shape() != (out.n(), width) {
            return Err(Error::Dimension(format!(
                "augmentation model returned {:?}, expected ({}, {width})",
                pred.shape(),
                out.n()
            )));
        }
        let mut c = 0;
        for x in &roles.x {
            let d = out.dims()[x];
            out.replace_column(x, pred.columns(c, d).into_owned())?;
            c += d;
        }
    }
    Ok(out)
}
