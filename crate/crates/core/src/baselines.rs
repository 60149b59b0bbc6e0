//! Comparison predictors trained without the penalty.
//!
//! * `cf1`: only covariates that are not descendants of `A`.
//! * `cf2`: descendants of `A` replaced by residuals of an auxiliary
//!   regression on `A`, plus the non-descendants.
//! * `naive`: every covariate except `A`.
//! * `aug_naive` / `aug_causal`: every covariate including `A`, trained on a
//!   training set expanded by resampling `A`; the causal variant also
//!   recomputes `X` from a fitted model of `X` given `(A, S)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::graph::{descendants, Dag};
use crate::learner::{train_cip, train_predictor, Predictor, Residualizer, TrainConfig};
use crate::scm::{augment, AugmentMode, Roles, SampleBatch, Scm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Cf1,
    Cf2,
    Naive,
    AugNaive,
    AugCausal,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Cf1,
        BaselineKind::Cf2,
        BaselineKind::Naive,
        BaselineKind::AugNaive,
        BaselineKind::AugCausal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Cf1 => "cf1",
            BaselineKind::Cf2 => "cf2",
            BaselineKind::Naive => "naive",
            BaselineKind::AugNaive => "aug_naive",
            BaselineKind::AugCausal => "aug_causal",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

/// Settings of the auxiliary regressions (CF2 residualizer, causal
/// augmentation model) and of the augmentation itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub aux_hidden: Vec<usize>,
    pub aux_epochs: usize,
    pub aux_batch_size: usize,
    pub aux_learning_rate: f64,
    /// Also feed the non-descendants of `A` to the CF2 residualizer.
    pub cf2_with_non_descendants: bool,
    pub n_aug: usize,
    /// Epochs for the predictor trained on augmented data; `None` keeps
    /// the main training config's.
    pub aug_epochs: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            aux_hidden: vec![20; 8],
            aux_epochs: 200,
            aux_batch_size: 64,
            aux_learning_rate: 1e-3,
            cf2_with_non_descendants: false,
            n_aug: 50,
            aug_epochs: Some(100),
        }
    }
}

/// Observed covariates split by whether they descend from `A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSplit {
    pub descendants: Vec<String>,
    pub non_descendants: Vec<String>,
}

pub fn split_covariates(g: &Dag, roles: &Roles) -> Result<CovariateSplit> {
    if roles.a.is_empty() {
        return config("baselines need a non-empty A role");
    }
    let desc = descendants(g, &Roles::set(&roles.a))?;
    let covariates: Vec<String> = roles
        .predictors()
        .into_iter()
        .filter(|c| !roles.a.contains(c))
        .collect();
    let (descendants, non_descendants) = covariates.into_iter().partition(|c| desc.contains(c));
    Ok(CovariateSplit {
        descendants,
        non_descendants,
    })
}

fn aux_config(
    base: &TrainConfig,
    cfg: &BaselineConfig,
    inputs: Vec<String>,
    targets: Vec<String>,
) -> TrainConfig {
    TrainConfig {
        gamma: 0.0,
        epochs: cfg.aux_epochs,
        batch_size: cfg.aux_batch_size,
        learning_rate: cfg.aux_learning_rate,
        hidden: cfg.aux_hidden.clone(),
        inputs: Some(inputs),
        targets: Some(targets),
        task: crate::learner::Task::RegressionMse,
        ..base.clone()
    }
}

/// Fits the CF2 residualizer: descendants of `A` regressed on `A`.
pub fn fit_residualizer(
    g: &Dag,
    data: &SampleBatch,
    base: &TrainConfig,
    cfg: &BaselineConfig,
) -> Result<Option<Residualizer>> {
    let split = split_covariates(g, data.roles())?;
    if split.descendants.is_empty() {
        return Ok(None);
    }
    let mut regressors = data.roles().a.clone();
    if cfg.cf2_with_non_descendants {
        regressors.extend(split.non_descendants.iter().cloned());
    }
    let aux = aux_config(base, cfg, regressors, split.descendants.clone());
    let (model, _) = train_cip(data, &aux)?;
    Ok(Some(Residualizer {
        targets: split.descendants,
        network: model.network,
    }))
}

/// Trains one baseline. `γ` and the penalty settings of `base` are ignored.
pub fn train_baseline(
    kind: BaselineKind,
    cfg: &BaselineConfig,
    scm: &Scm,
    data: &SampleBatch,
    base: &TrainConfig,
) -> Result<Predictor> {
    let g = scm.graph();
    let roles = data.roles().clone();
    let split = split_covariates(g, &roles)?;
    let plain = |inputs: Vec<String>| TrainConfig {
        gamma: 0.0,
        inputs: Some(inputs),
        ..base.clone()
    };
    match kind {
        BaselineKind::Cf1 => {
            if split.non_descendants.is_empty() {
                return config("cf1 has no non-descendant covariates to use");
            }
            Ok(train_cip(data, &plain(split.non_descendants))?.0)
        }
        BaselineKind::Cf2 => {
            let residualizer = fit_residualizer(g, data, base, cfg)?;
            let mut inputs = split.descendants.clone();
            inputs.extend(split.non_descendants.iter().cloned());
            if inputs.is_empty() {
                return config("cf2 has no covariates to use");
            }
            Ok(train_predictor(data, &plain(inputs), residualizer, None)?.0)
        }
        BaselineKind::Naive => {
            let mut inputs = split.descendants.clone();
            inputs.extend(split.non_descendants.iter().cloned());
            let inputs: Vec<String> = roles
                .predictors()
                .into_iter()
                .filter(|c| inputs.contains(c))
                .collect();
            if inputs.is_empty() {
                return config("naive has no covariates to use");
            }
            Ok(train_cip(data, &plain(inputs))?.0)
        }
        BaselineKind::AugNaive | BaselineKind::AugCausal => {
            let model = if kind == BaselineKind::AugCausal {
                if roles.x.is_empty() {
                    return config("aug_causal needs an X role to recompute");
                }
                let mut inputs = roles.a.clone();
                inputs.extend(roles.s.iter().cloned());
                Some(train_cip(data, &aux_config(base, cfg, inputs, roles.x.clone()))?.0)
            } else {
                None
            };
            let mode = if model.is_some() {
                AugmentMode::Causal
            } else {
                AugmentMode::Naive
            };
            let expanded = augment(
                data,
                mode,
                cfg.n_aug,
                model.as_ref().map(|m| m as _),
                base.seed,
            )?;
            let mut tcfg = plain(roles.predictors());
            if let Some(e) = cfg.aug_epochs {
                tcfg.epochs = e;
            }
            Ok(train_cip(&expanded, &tcfg)?.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{dgp_catalog, DgpId, DgpName};

    #[test]
    fn covariate_split_per_dgp() {
        let scm = dgp_catalog(&DgpId::new(DgpName::Scenario2)).unwrap();
        let s = split_covariates(scm.graph(), scm.roles()).unwrap();
        assert_eq!(s.descendants, vec!["X"]);
        assert_eq!(s.non_descendants, vec!["Z"]);
        let scm = dgp_catalog(&DgpId::new(DgpName::AnticausalG1)).unwrap();
        let s = split_covariates(scm.graph(), scm.roles()).unwrap();
        assert_eq!(s.descendants, vec!["X"]);
        assert!(s.non_descendants.is_empty());
    }

    #[test]
    fn names_parse() {
        for k in BaselineKind::ALL {
            assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("pscf".parse::<BaselineKind>().is_err());
    }

    fn quick() -> (TrainConfig, BaselineConfig) {
        let t = TrainConfig {
            epochs: 3,
            batch_size: 32,
            hidden: vec![8],
            ..TrainConfig::default()
        };
        let b = BaselineConfig {
            aux_hidden: vec![8],
            aux_epochs: 3,
            n_aug: 3,
            aug_epochs: Some(2),
            ..BaselineConfig::default()
        };
        (t, b)
    }

    #[test]
    fn baseline_inputs() {
        let scm = dgp_catalog(&DgpId::new(DgpName::Scenario2)).unwrap();
        let data = scm.sample_observational(120, 1).unwrap();
        let (t, b) = quick();
        let naive = train_baseline(BaselineKind::Naive, &b, &scm, &data, &t).unwrap();
        assert_eq!(naive.inputs(), ["X", "Z"]);
        let cf1 = train_baseline(BaselineKind::Cf1, &b, &scm, &data, &t).unwrap();
        assert_eq!(cf1.inputs(), ["Z"]);
        let cf2 = train_baseline(BaselineKind::Cf2, &b, &scm, &data, &t).unwrap();
        assert_eq!(cf2.inputs(), ["X", "Z"]);
        let r = cf2.residualizer.as_ref().unwrap();
        assert_eq!(
            (r.targets.as_slice(), r.network.inputs.as_slice()),
            (&["X".to_string()][..], &["A".to_string()][..])
        );
        for kind in [BaselineKind::AugNaive, BaselineKind::AugCausal] {
            let p = train_baseline(kind, &b, &scm, &data, &t).unwrap();
            assert_eq!(p.inputs(), ["A", "X", "Z"]);
        }
    }
}
