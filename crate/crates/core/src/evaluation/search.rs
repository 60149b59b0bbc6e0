use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::predictive_metric;
use crate::error::{config, Result};
use crate::learner::{train_cip, Task, TrainConfig};
use crate::scm::SampleBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaSearchConfig {
    /// Allowed relative MSE increase (or absolute accuracy drop).
    pub alpha: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Bisection steps after the two endpoints.
    pub max_iters: usize,
    /// Grid spacing in decades.
    pub resolution: f64,
    /// Training seeds averaged per probe.
    pub seeds: Vec<u64>,
}

impl Default for GammaSearchConfig {
    fn default() -> Self {
        GammaSearchConfig {
            alpha: 0.1,
            gamma_lo: 1e-4,
            gamma_hi: 1e4,
            max_iters: 20,
            resolution: 0.25,
            seeds: vec![0],
        }
    }
}

impl GammaSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_lo > 0.0 && self.gamma_hi > self.gamma_lo && self.gamma_hi.is_finite()) {
            return config("gamma search needs 0 < gamma_lo < gamma_hi");
        }
        if !(self.alpha >= 0.0) || !(self.resolution > 0.0) || self.seeds.is_empty() {
            return config(
                "gamma search needs alpha ≥ 0, a positive resolution and at least one seed",
            );
        }
        Ok(())
    }

    /// `γ_lo · 10^(i·resolution)` up to and including `γ_hi`.
    pub fn grid(&self) -> Vec<f64> {
        let span = (self.gamma_hi / self.gamma_lo).log10() / self.resolution;
        let steps = (span - 1e-9).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|i| {
                if i == steps {
                    self.gamma_hi
                } else {
                    self.gamma_lo * 10f64.powf(i as f64 * self.resolution)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProbe {
    pub gamma: f64,
    /// Mean validation metric over the search seeds.
    pub metric: f64,
    pub per_seed: Vec<f64>,
    pub feasible: bool,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSearchResult {
    pub gamma_star: f64,
    /// False when even `γ_lo` breaks the tolerance; `gamma_star` is then `γ_lo`.
    pub feasible: bool,
    pub metric_name: String,
    pub baseline: GammaProbe,
    /// The grid point above `gamma_star`, if any, as probed.
    pub next: Option<GammaProbe>,
    /// Every probe in evaluation order, baseline first.
    pub probes: Vec<GammaProbe>,
}

/// Largest grid γ whose validation metric stays within `alpha` of the γ = 0
/// baseline, found by bisection over grid indices.
pub fn gamma_search(
    train: &SampleBatch,
    valid: &SampleBatch,
    base: &TrainConfig,
    search: &GammaSearchConfig,
) -> Result<GammaSearchResult> {
    search.validate()?;
    let targets = base.target_names(train);
    let mut metric_name = String::new();
    let mut probe = |gamma: f64, reference: Option<f64>| -> Result<GammaProbe> {
        let start = Instant::now();
        let mut per_seed = Vec::with_capacity(search.seeds.len());
        for &seed in &search.seeds {
            let cfg = TrainConfig {
                gamma,
                seed,
                ..base.clone()
            };
            let (pred, _) = train_cip(train, &cfg)?;
            let (name, m) = predictive_metric(&pred, valid, &targets)?;
            metric_name = name;
            per_seed.push(m);
        }
        let metric = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let feasible = match reference {
            None => true,
            Some(r) => match base.task {
                Task::RegressionMse => metric <= r * (1.0 + search.alpha),
                Task::BinaryCe => metric >= r - search.alpha,
            },
        };
        Ok(GammaProbe {
            gamma,
            metric,
            per_seed,
            feasible,
            runtime_s: start.elapsed().as_secs_f64(),
        })
    };

    let baseline = probe(0.0, None)?;
    let reference = Some(baseline.metric);
    let grid = search.grid();
    let mut probes = vec![baseline.clone()];
    let mut seen: BTreeMap<usize, GammaProbe> = BTreeMap::new();
    let mut at = |i: usize, probes: &mut Vec<GammaProbe>| -> Result<bool> {
        if let Some(p) = seen.get(&i) {
            return Ok(p.feasible);
        }
        let p = probe(grid[i], reference)?;
        probes.push(p.clone());
        let ok = p.feasible;
        seen.insert(i, p);
        Ok(ok)
    };

    let top = grid.len() - 1;
    let (star, feasible) = if at(top, &mut probes)? {
        (top, true)
    } else if !at(0, &mut probes)? {
        (0, false)
    } else {
        let (mut lo, mut hi) = (0, top);
        let mut iters = 0;
        while hi - lo > 1 && iters < search.max_iters {
            let mid = (lo + hi) / 2;
            if at(mid, &mut probes)? {
                lo = mid;
            } else {
                hi = mid;
            }
            iters += 1;
        }
        (lo, true)
    };
    let next = if star < top && feasible {
        at(star + 1, &mut probes)?;
        probes.iter().find(|p| p.gamma == grid[star + 1]).cloned()
    } else {
        None
    };
    Ok(GammaSearchResult {
        gamma_star: grid[star],
        feasible,
        metric_name,
        baseline,
        next,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_aligned() {
        let cfg = GammaSearchConfig {
            gamma_lo: 1e-2,
            gamma_hi: 1e2,
            ..GammaSearchConfig::default()
        };
        let g = cfg.grid();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 1e-2);
        assert_eq!(*g.last().unwrap(), 1e2);
        assert!((g[4] - 0.1).abs() < 1e-15);
        for w in g.windows(2) {
            assert!(((w[1] / w[0]).log10() - 0.25).abs() < 1e-9);
        }
        let odd = GammaSearchConfig {
            gamma_lo: 1.0,
            gamma_hi: 2.0,
            ..GammaSearchConfig::default()
        };
        let g = odd.grid();
        assert_eq!(g.len(), 3);
        assert_eq!(g[2], 2.0);
        assert!((g[1] - 10f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn invalid_ranges() {
        let bad = GammaSearchConfig {
            gamma_lo: 0.0,
            ..GammaSearchConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GammaSearchConfig {
            gamma_lo: 1.0,
            gamma_hi: 0.5,
            ..GammaSearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
