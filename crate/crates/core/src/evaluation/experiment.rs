use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig, EvalReport};
use crate::baselines::{train_baseline, BaselineConfig, BaselineKind};
use crate::error::{config, Result};
use crate::learner::{train_cip_with_test, Predictor, TrainConfig, TrainHistory};
use crate::scm::{dgp_catalog, DgpId, SampleBatch, Scm};

pub const RESULTS_HEADER: &str = "dgp,gamma,seed,metric_name,metric_value,runtime_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub dgp: DgpId,
    pub n: usize,
    pub train_fraction: f64,
    pub gammas: Vec<f64>,
    /// One dataset and one training run per seed.
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baselines: Vec<BaselineKind>,
    pub baseline: BaselineConfig,
    /// Worker threads for the grid.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            dgp: DgpId::default(),
            n: 10_000,
            train_fraction: 0.8,
            gammas: vec![0.0],
            seeds: vec![0],
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            baselines: Vec::new(),
            baseline: BaselineConfig::default(),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return config("an experiment needs at least 4 samples");
        }
        if self.gammas.is_empty() || self.seeds.is_empty() {
            return config("an experiment needs at least one gamma and one seed");
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return config("gammas must be finite and non-negative");
        }
        self.train.validate()
    }
}

/// One long-format result line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dgp: String,
    pub gamma: f64,
    pub seed: u64,
    pub metric_name: String,
    pub metric_value: f64,
    pub runtime_s: f64,
}

fn report_rows(dgp: &str, seed: u64, report: &EvalReport, runtime_s: f64) -> Vec<ResultRow> {
    [
        (report.metric_name.as_str(), report.metric),
        ("hscic", report.test_hscic),
        ("vcf", report.vcf),
    ]
    .into_iter()
    .map(|(name, value)| ResultRow {
        dgp: dgp.to_string(),
        gamma: report.gamma,
        seed,
        metric_name: name.to_string(),
        metric_value: value,
        runtime_s,
    })
    .collect()
}

fn error_row(dgp: &str, gamma: f64, seed: u64, runtime_s: f64) -> ResultRow {
    ResultRow {
        dgp: dgp.to_string(),
        gamma,
        seed,
        metric_name: "error".into(),
        metric_value: f64::NAN,
        runtime_s,
    }
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn save_run(
    dir: &Path,
    pred: &Predictor,
    history: Option<&TrainHistory>,
    report: &EvalReport,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    pred.save(&dir.join("model.json"))?;
    if let Some(h) = history {
        h.write_csv(&dir.join("history.csv"))?;
    }
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

enum Job {
    Cip(f64),
    Baseline(BaselineKind),
}

struct Cell {
    seed: u64,
    train: SampleBatch,
    test: SampleBatch,
}

fn run_job(
    cfg: &ExperimentConfig,
    scm: &Scm,
    cell: &Cell,
    job: &Job,
    out: Option<&Path>,
) -> Vec<ResultRow> {
    let dgp = cfg.dgp.name.as_str();
    let seed = cell.seed;
    let eval = EvalConfig {
        seed,
        ..cfg.eval.clone()
    };
    let start = Instant::now();
    let (label, gamma, outcome) = match *job {
        Job::Cip(gamma) => {
            let tcfg = TrainConfig {
                gamma,
                seed,
                ..cfg.train.clone()
            };
            let outcome =
                train_cip_with_test(&cell.train, &tcfg, &cell.test).and_then(|(pred, hist)| {
                    let report = evaluate(&pred, scm, &cell.test, &eval, gamma)?;
                    if let Some(dir) = out {
                        save_run(
                            &dir.join(format!("{gamma}")).join(format!("{seed}")),
                            &pred,
                            Some(&hist),
                            &report,
                        )?;
                    }
                    Ok(report)
                });
            (dgp.to_string(), gamma, outcome)
        }
        Job::Baseline(kind) => {
            let tcfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let outcome =
                train_baseline(kind, &cfg.baseline, scm, &cell.train, &tcfg).and_then(|pred| {
                    let report = evaluate(&pred, scm, &cell.test, &eval, 0.0)?;
                    if let Some(dir) = out {
                        save_run(
                            &dir.join(kind.as_str()).join(format!("{seed}")),
                            &pred,
                            None,
                            &report,
                        )?;
                    }
                    Ok(report)
                });
            (format!("{dgp}/{}", kind.as_str()), 0.0, outcome)
        }
    };
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(report) => report_rows(&label, seed, &report, secs),
        Err(e) => {
            eprintln!("{label} gamma={gamma} seed={seed}: {e}");
            vec![error_row(&label, gamma, seed, secs)]
        }
    }
}

/// Generates one dataset per seed, trains and evaluates every γ (and every
/// requested baseline), and returns long-format rows in grid order. Failures
/// become `error` rows and the sweep continues. Cells run on `jobs` worker
/// threads. With `out`, per-run artifacts go to `out/{gamma}/{seed}/`
/// (baselines to `out/{kind}/{seed}/`) and all rows to `out/results.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let scm = dgp_catalog(&cfg.dgp)?;
    let mut cells = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (train, test) = scm
            .sample_observational(cfg.n, seed)?
            .split(cfg.train_fraction)?;
        cells.push(Cell { seed, train, test });
    }
    let mut tasks = Vec::new();
    for (c, _) in cells.iter().enumerate() {
        tasks.extend(cfg.gammas.iter().map(|&g| (c, Job::Cip(g))));
        tasks.extend(cfg.baselines.iter().map(|&k| (c, Job::Baseline(k))));
    }

    let results: Mutex<Vec<Option<Vec<ResultRow>>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((c, job)) = tasks.get(i) else { break };
                let rows = run_job(cfg, &scm, &cells[*c], job, out);
                results.lock().expect("result sink poisoned")[i] = Some(rows);
            });
        }
    });
    let rows: Vec<ResultRow> = results
        .into_inner()
        .expect("result sink poisoned")
        .into_iter()
        .flat_map(|r| r.unwrap_or_default())
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_results(&rows, &dir.join("results.csv"))?;
    }
    Ok(rows)
}

/// Wide view of one (dgp, γ, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub dgp: String,
    pub gamma: f64,
    pub seed: u64,
    pub metric: f64,
    pub hscic: f64,
    pub vcf: f64,
}

/// Pivots long-format rows into one summary per complete cell, in first-seen
/// order. Cells with an error row are dropped.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut order: Vec<(String, u64, u64)> = Vec::new();
    let mut cells: BTreeMap<(String, u64, u64), BTreeMap<String, f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.dgp.clone(), r.gamma.to_bits(), r.seed);
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells
            .entry(key)
            .or_default()
            .insert(r.metric_name.clone(), r.metric_value);
    }
    order
        .into_iter()
        .filter_map(|key| {
            let m = &cells[&key];
            if m.contains_key("error") {
                return None;
            }
            let metric = m.get("mse").or_else(|| m.get("accuracy"))?;
            Some(CellSummary {
                dgp: key.0.clone(),
                gamma: f64::from_bits(key.1),
                seed: key.2,
                metric: *metric,
                hscic: *m.get("hscic")?,
                vcf: *m.get("vcf")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_round_trip_and_summary() {
        let rows = vec![
            ResultRow {
                dgp: "scenario2".into(),
                gamma: 0.1,
                seed: 3,
                metric_name: "mse".into(),
                metric_value: 1.5,
                runtime_s: 2.0,
            },
            ResultRow {
                dgp: "scenario2".into(),
                gamma: 0.1,
                seed: 3,
                metric_name: "hscic".into(),
                metric_value: 0.01,
                runtime_s: 2.0,
            },
            ResultRow {
                dgp: "scenario2".into(),
                gamma: 0.1,
                seed: 3,
                metric_name: "vcf".into(),
                metric_value: 0.2,
                runtime_s: 2.0,
            },
            error_row("scenario2/cf2", 0.0, 3, 1.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(RESULTS_HEADER));
        let back = read_results(&path).unwrap();
        assert_eq!(back[..3], rows[..3]);
        assert!(back[3].metric_value.is_nan());
        let s = summarize(&back);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].metric, s[0].hscic, s[0].vcf), (1.5, 0.01, 0.2));
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        use crate::scm::DgpName;
        let cfg = ExperimentConfig {
            dgp: DgpId::new(DgpName::Scenario2),
            n: 60,
            gammas: vec![0.0, 0.5],
            seeds: vec![1, 2],
            train: TrainConfig {
                epochs: 2,
                batch_size: 16,
                hidden: vec![4],
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                d: 5,
                k: 4,
                ..EvalConfig::default()
            },
            baselines: vec![BaselineKind::Naive],
            ..ExperimentConfig::default()
        };
        let strip = |rows: Vec<ResultRow>| -> Vec<(String, f64, u64, String, f64)> {
            rows.into_iter()
                .map(|r| (r.dgp, r.gamma, r.seed, r.metric_name, r.metric_value))
                .collect()
        };
        let serial = strip(run_experiment(&cfg, None).unwrap());
        let parallel = strip(
            run_experiment(
                &ExperimentConfig {
                    jobs: 3,
                    ..cfg.clone()
                },
                None,
            )
            .unwrap(),
        );
        assert_eq!(serial.len(), 2 * 3 * 3);
        assert_eq!(serial, parallel);
    }
}
