use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cip_core::baselines::BaselineKind;
use cip_core::evaluation::{EvalConfig, ExperimentConfig, GammaSearchConfig};
use cip_core::{BaselineConfig, DgpId, TrainConfig};
use serde::{Deserialize, Serialize};

/// Everything a command can be configured with. Every command reads the same
/// file and uses the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    /// Experiment name; sweeps and searches write under `out/name/`.
    pub name: String,
    pub out: PathBuf,
    pub dgp: DgpId,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub gammas: Vec<f64>,
    pub baselines: Vec<BaselineKind>,
    pub jobs: usize,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
    pub search: GammaSearchConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        CliConfig {
            name: exp.name,
            out: PathBuf::from("out"),
            dgp: exp.dgp,
            n: exp.n,
            seeds: exp.seeds,
            train_fraction: exp.train_fraction,
            gammas: exp.gammas,
            baselines: exp.baselines,
            jobs: exp.jobs,
            train: exp.train,
            eval: exp.eval,
            baseline: exp.baseline,
            search: GammaSearchConfig::default(),
        }
    }
}

impl CliConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order and
    /// checks the result against the schema.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("config {} is not valid TOML", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            set(&mut doc, item)?;
        }
        let cfg: CliConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("config schema error: {}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie strictly between 0 and 1");
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        self.experiment().validate()?;
        self.search.validate()?;
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            name: self.name.clone(),
            dgp: self.dgp.clone(),
            n: self.n,
            train_fraction: self.train_fraction,
            gammas: self.gammas.clone(),
            seeds: self.seeds.clone(),
            train: self.train.clone(),
            eval: self.eval.clone(),
            baselines: self.baselines.clone(),
            baseline: self.baseline.clone(),
            jobs: self.jobs,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Writes the resolved configuration next to a command's outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML value
/// when it parses as one and as a bare string otherwise.
pub fn set(doc: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty component");
    }
    let value = parse_value(raw.trim());
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{part}` is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = CliConfig::load(
            None,
            &[
                "train.epochs=7".into(),
                "gammas=[0.0, 0.5]".into(),
                "dgp.name=scenario2".into(),
                "train.hscic.lambda=0.05".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.gammas, vec![0.0, 0.5]);
        assert_eq!(cfg.dgp.name.as_str(), "scenario2");
        assert_eq!(cfg.train.hscic.lambda, 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = CliConfig::load(None, &["train.epoch=3".into()]).unwrap_err();
        assert!(err.to_string().contains("epoch"), "{err}");
        assert!(CliConfig::load(None, &["colour=1".into()]).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(CliConfig::load(None, &["train_fraction=1.5".into()]).is_err());
        assert!(CliConfig::load(None, &["gammas=[-1.0]".into()]).is_err());
        assert!(CliConfig::load(None, &["dgp.name=nope".into()]).is_err());
        assert!(set(&mut toml::Table::new(), "novalue").is_err());
    }

    #[test]
    fn echo_reloads_to_the_same_config() {
        let cfg = CliConfig::load(
            None,
            &[
                "train.inputs=[\"A\", \"X\"]".into(),
                "baselines=[\"cf1\"]".into(),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        cfg.echo(dir.path()).unwrap();
        let back = CliConfig::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
        assert_eq!(back, cfg);
    }
}
