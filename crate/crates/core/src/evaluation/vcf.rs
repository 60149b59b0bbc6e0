use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use crate::error::{config, Result};
use crate::learner::Predictor;
use crate::rng::{stream, Domain};
use crate::scm::{SampleBatch, Scm};

/// Every column the predictor reads, directly or through its residualizer.
fn needed_columns(pred: &Predictor) -> Vec<String> {
    let mut names: Vec<String> = pred.inputs().to_vec();
    if let Some(r) = &pred.residualizer {
        names.extend(r.network.inputs.iter().cloned());
        names.extend(r.targets.iter().cloned());
    }
    let mut seen = Vec::new();
    names.retain(|n| {
        let fresh = !seen.contains(n);
        seen.push(n.clone());
        fresh
    });
    names
}

/// Variance of counterfactual predictions.
///
/// Picks `d` units without replacement and `k` intervention values of `A`
/// (rows of the batch's `A` columns, with replacement, shared by all units).
/// Each unit is replayed under every value, the predictor is evaluated on the
/// replayed inputs, and the population variance over the `k` predictions is
/// averaged over outputs and then over units.
pub fn vcf(
    pred: &Predictor,
    scm: &Scm,
    batch: &SampleBatch,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<f64> {
    Ok(vcf_per_unit(pred, scm, batch, d, k, seed)?
        .iter()
        .sum::<f64>()
        / d as f64)
}

/// The per-unit variances behind [`vcf`], in unit-selection order.
pub fn vcf_per_unit(
    pred: &Predictor,
    scm: &Scm,
    batch: &SampleBatch,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = batch.n();
    if d == 0 || k == 0 {
        return config("VCF needs d ≥ 1 and k ≥ 1");
    }
    if d > n {
        return config(format!(
            "VCF asks for {d} units without replacement from {n} rows"
        ));
    }
    let a_names = batch.roles().a.clone();
    if a_names.is_empty() {
        return config("VCF needs a non-empty A role");
    }
    scm.ensure_replayable(batch)?;
    let units = index::sample(&mut stream(seed, Domain::Vcf, 0), n, d).into_vec();
    let mut rng = stream(seed, Domain::Vcf, 1);
    let draws: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
    let values = batch.concat(&a_names)?.select_rows(&draws);

    let a_ids = a_names
        .iter()
        .map(|a| scm.index_of(a))
        .collect::<Result<Vec<_>>>()?;
    let needed = needed_columns(pred);
    let target_ids = needed
        .iter()
        .map(|c| scm.index_of(c))
        .collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = needed
        .iter()
        .map(|c| batch.column(c).map(|m| m.ncols()))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(d);
    for &u in &units {
        let replayed = scm.replay_unit(batch, u, &a_ids, &values, &target_ids)?;
        let mut cols = BTreeMap::new();
        let mut c = 0;
        for (name, &dim) in needed.iter().zip(&dims) {
            cols.insert(name.clone(), replayed.columns(c, dim).into_owned());
            c += dim;
        }
        let preds = pred.predict(&cols)?;
        out.push(mean_column_variance(&preds));
    }
    Ok(out)
}

/// Mean over columns of the population variance, by Welford's update so a
/// constant column gives exactly zero.
pub(crate) fn mean_column_variance(m: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for col in m.column_iter() {
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, &x) in col.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        total += m2 / col.len() as f64;
    }
    total / m.ncols() as f64
}
