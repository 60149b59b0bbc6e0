use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use cip_core::evaluation::{run_experiment, summarize};
use cip_core::graph::{
    build_duplicate_graph, check_ci_criterion, d_separated, is_valid_adjustment_with,
};
use cip_core::learner::train_cip_with_test;
use cip_core::scm::io::{read_dataset, write_dataset, Sidecar};
use cip_core::{
    dgp_catalog, evaluate, train_baseline, AdjustmentMode, BaselineKind, Dag, NodeSet, Predictor,
    SampleBatch, Scm,
};
use clap::{Args, Subcommand, ValueEnum};

use crate::config::CliConfig;
use crate::{ConfigArgs, EXIT_RUNTIME, EXIT_USAGE};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure {
            code: EXIT_USAGE,
            error: e.into(),
        })
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure {
            code: EXIT_RUNTIME,
            error: e.into(),
        })
    }
}

/// Bad input maps to the usage code, failed computations to the runtime code.
fn core<T>(r: cip_core::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure {
        code: if e.is_usage() {
            EXIT_USAGE
        } else {
            EXIT_RUNTIME
        },
        error: e.into(),
    })
}

fn load(args: &ConfigArgs, extra: Vec<String>) -> Outcome<CliConfig> {
    let mut overrides = args.overrides.clone();
    overrides.extend(extra);
    CliConfig::load(args.config.as_deref(), &overrides).usage()
}

fn require(path: &Path) -> Outcome {
    if path.exists() {
        Ok(())
    } else {
        Err(anyhow!("{} does not exist", path.display())).usage()
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value).runtime()?);
    Ok(())
}

fn catalog_model(sidecar: &Sidecar, data: &Path) -> Outcome<Scm> {
    let id = sidecar.dgp.as_ref().ok_or_else(|| Failure {
        code: EXIT_USAGE,
        error: anyhow!(
            "{} was not generated from a catalog model; its sidecar names no dgp",
            data.display()
        ),
    })?;
    core(dgp_catalog(id))
}

fn read_split(data: &Path, cfg: &CliConfig) -> Outcome<(SampleBatch, SampleBatch, Sidecar)> {
    require(data)?;
    let (batch, sidecar) = core(read_dataset(data))?;
    let (train, test) = core(batch.split(cfg.train_fraction))?;
    Ok((train, test, sidecar))
}

pub fn generate(
    args: &ConfigArgs,
    dgp: Option<String>,
    n: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Outcome {
    let mut extra = Vec::new();
    if let Some(d) = dgp {
        extra.push(format!("dgp.name={d}"));
    }
    if let Some(n) = n {
        extra.push(format!("n={n}"));
    }
    if let Some(s) = seed {
        extra.push(format!("seeds=[{s}]"));
    }
    if let Some(o) = &out {
        extra.push(format!(
            "out={}",
            toml::Value::String(o.display().to_string())
        ));
    }
    let cfg = load(args, extra)?;
    let seed = cfg.seeds[0];
    let scm = core(dgp_catalog(&cfg.dgp))?;
    let batch = core(scm.sample_observational(cfg.n, seed))?;
    std::fs::create_dir_all(&cfg.out).runtime()?;
    let path = cfg.out.join(format!("{}.csv", cfg.dgp.name));
    core(write_dataset(&batch, Some(seed), Some(&cfg.dgp), &path))?;
    std::fs::write(
        cfg.out.join(format!("{}.config.toml", cfg.dgp.name)),
        cfg.to_toml().runtime()?,
    )
    .runtime()?;
    println!(
        "wrote {} rows (seed {seed}) to {}",
        batch.n(),
        path.display()
    );
    Ok(())
}

pub fn train(
    args: &ConfigArgs,
    data: &Path,
    gamma: Option<f64>,
    seed: Option<u64>,
    baseline: Option<String>,
    out: &Path,
) -> Outcome {
    let mut extra = Vec::new();
    if let Some(g) = gamma {
        extra.push(format!("train.gamma={g:?}"));
    }
    if let Some(s) = seed {
        extra.push(format!("train.seed={s}"));
    }
    let cfg = load(args, extra)?;
    let (train, test, sidecar) = read_split(data, &cfg)?;
    cfg.echo(out).runtime()?;
    let model = out.join("model.json");
    match baseline {
        Some(name) => {
            let kind: BaselineKind = core(name.parse())?;
            let scm = catalog_model(&sidecar, data)?;
            let pred = core(train_baseline(
                kind,
                &cfg.baseline,
                &scm,
                &train,
                &cfg.train,
            ))?;
            core(pred.save(&model))?;
            println!("trained {kind} baseline; checkpoint {}", model.display());
        }
        None => {
            let (pred, history) = core(train_cip_with_test(&train, &cfg.train, &test))?;
            core(pred.save(&model))?;
            core(history.write_csv(&out.join("history.csv")))?;
            let last = history.last().and_then(|r| r.test_loss).unwrap_or(f64::NAN);
            println!(
                "trained gamma={} for {} epochs; final test loss {last}; checkpoint {}",
                cfg.train.gamma,
                history.len(),
                model.display()
            );
        }
    }
    Ok(())
}

pub fn eval(
    args: &ConfigArgs,
    model: &Path,
    data: &Path,
    all: bool,
    gamma: f64,
    out: Option<&Path>,
) -> Outcome {
    let cfg = load(args, Vec::new())?;
    require(model)?;
    let pred = core(Predictor::load(model))?;
    let (batch, sidecar) = {
        require(data)?;
        core(read_dataset(data))?
    };
    let scm = catalog_model(&sidecar, data)?;
    let batch = if all {
        batch
    } else {
        core(batch.split(cfg.train_fraction))?.1
    };
    let report = core(evaluate(&pred, &scm, &batch, &cfg.eval, gamma))?;
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).runtime()?;
        }
        std::fs::write(path, serde_json::to_string_pretty(&report).runtime()?).runtime()?;
    }
    print_json(&report)
}

pub fn sweep(args: &ConfigArgs, out: Option<PathBuf>, jobs: Option<usize>) -> Outcome {
    let mut extra = Vec::new();
    if let Some(o) = &out {
        extra.push(format!(
            "out={}",
            toml::Value::String(o.display().to_string())
        ));
    }
    if let Some(j) = jobs {
        extra.push(format!("jobs={j}"));
    }
    let cfg = load(args, extra)?;
    let dir = cfg.out.join(&cfg.name);
    cfg.echo(&dir).runtime()?;
    let rows = core(run_experiment(&cfg.experiment(), Some(&dir)))?;
    for cell in summarize(&rows) {
        println!(
            "{:<24} gamma={:<8} seed={:<4} metric={:.6} hscic={:.4e} vcf={:.4e}",
            cell.dgp, cell.gamma, cell.seed, cell.metric, cell.hscic, cell.vcf
        );
    }
    let failed = rows.iter().filter(|r| r.metric_name == "error").count();
    println!(
        "{} rows written to {}",
        rows.len(),
        dir.join("results.csv").display()
    );
    if failed > 0 {
        return Err(anyhow!("{failed} cells failed; see the error rows")).runtime();
    }
    Ok(())
}

pub fn gamma_search(args: &ConfigArgs, out: Option<PathBuf>) -> Outcome {
    let mut extra = Vec::new();
    if let Some(o) = &out {
        extra.push(format!(
            "out={}",
            toml::Value::String(o.display().to_string())
        ));
    }
    let cfg = load(args, extra)?;
    let dir = cfg.out.join(&cfg.name);
    cfg.echo(&dir).runtime()?;
    let scm = core(dgp_catalog(&cfg.dgp))?;
    let data = core(scm.sample_observational(cfg.n, cfg.seeds[0]))?;
    let (train, valid) = core(data.split(cfg.train_fraction))?;
    let result = core(cip_core::gamma_search(
        &train,
        &valid,
        &cfg.train,
        &cfg.search,
    ))?;
    let path = dir.join("gamma_search.json");
    std::fs::write(&path, serde_json::to_string_pretty(&result).runtime()?)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()?;
    for p in &result.probes {
        println!(
            "gamma={:<12.6} {}={:.6} feasible={}",
            p.gamma, result.metric_name, p.metric, p.feasible
        );
    }
    println!(
        "gamma_star={} feasible={}",
        result.gamma_star, result.feasible
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Mode {
    #[default]
    Literal,
    Proper,
}

impl From<Mode> for AdjustmentMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Literal => AdjustmentMode::Literal,
            Mode::Proper => AdjustmentMode::Proper,
        }
    }
}

#[derive(Args, Debug)]
pub struct GraphFile {
    /// Graph JSON: `{"nodes": [...], "edges": [[parent, child], ...]}`.
    #[arg(long, short = 'g')]
    pub graph: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum GraphQuery {
    /// Is X d-separated from Y given S?
    Dsep {
        #[command(flatten)]
        file: GraphFile,
        #[arg(short = 'x', value_delimiter = ',', required = true)]
        x: Vec<String>,
        #[arg(short = 'y', value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(short = 's', value_delimiter = ',')]
        s: Vec<String>,
    },
    /// Is S a valid adjustment set for (X, Y)?
    Adjust {
        #[command(flatten)]
        file: GraphFile,
        #[arg(short = 'x', value_delimiter = ',', required = true)]
        x: Vec<String>,
        #[arg(short = 'y', value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(short = 's', value_delimiter = ',')]
        s: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        mode: Mode,
    },
    /// Graphical counterfactual-invariance check for a predictor of Y.
    Criterion {
        #[command(flatten)]
        file: GraphFile,
        #[arg(short = 'a', value_delimiter = ',', required = true)]
        a: Vec<String>,
        #[arg(short = 'w', value_delimiter = ',')]
        w: Vec<String>,
        #[arg(short = 'y', value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(short = 's', value_delimiter = ',')]
        s: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        mode: Mode,
    },
    /// Graph extended with duplicate copies of A ∪ W.
    Duplicate {
        #[command(flatten)]
        file: GraphFile,
        #[arg(short = 'a', value_delimiter = ',', required = true)]
        a: Vec<String>,
        #[arg(short = 'w', value_delimiter = ',')]
        w: Vec<String>,
    },
}

fn read_graph(file: &GraphFile) -> Outcome<Dag> {
    require(&file.graph)?;
    let text = std::fs::read_to_string(&file.graph).runtime()?;
    Dag::from_json(&text)
        .with_context(|| format!("cannot parse graph {}", file.graph.display()))
        .usage()
}

fn set(names: &[String]) -> NodeSet {
    let mut s = NodeSet::new();
    for n in names.iter().filter(|n| !n.is_empty()) {
        s.insert(n.clone());
    }
    s
}

pub fn graph(query: &GraphQuery) -> Outcome {
    match query {
        GraphQuery::Dsep { file, x, y, s } => {
            let g = read_graph(file)?;
            println!("{}", core(d_separated(&g, &set(x), &set(y), &set(s)))?);
        }
        GraphQuery::Adjust {
            file,
            x,
            y,
            s,
            mode,
        } => {
            let g = read_graph(file)?;
            println!(
                "{}",
                core(is_valid_adjustment_with(
                    &g,
                    &set(x),
                    &set(y),
                    &set(s),
                    (*mode).into()
                ))?
            );
        }
        GraphQuery::Criterion {
            file,
            a,
            w,
            y,
            s,
            mode,
        } => {
            let g = read_graph(file)?;
            print_json(&core(check_ci_criterion(
                &g,
                &set(a),
                &set(w),
                &set(y),
                &set(s),
                (*mode).into(),
            ))?)?;
        }
        GraphQuery::Duplicate { file, a, w } => {
            let g = read_graph(file)?;
            print_json(&core(build_duplicate_graph(&g, &set(a), &set(w)))?)?;
        }
    }
    Ok(())
}
