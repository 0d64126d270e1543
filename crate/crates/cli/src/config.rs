//! TOML configuration. Experiment settings are plain tables merged key by key (flags over
//! variant over defaults) and only then read as an `ExperimentConfig`, so every layer may
//! be partial. Relative paths resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use argmine::corpus::SplitName;
use argmine::inference::{ModelConfig, API_KEY_ENV};
use argmine::pipeline::{ExperimentConfig, Setup};
use argmine::prompt::TaskKind;
use serde::Deserialize;
use toml::{Table, Value};

use crate::args::ExperimentFlags;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub corpus: Option<PathBuf>,
    pub split: Option<SplitName>,
    pub train_split: Option<SplitName>,
    pub out: Option<PathBuf>,
    pub experiment: Table,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFile {
    pub corpus: Option<PathBuf>,
    pub split: Option<SplitName>,
    pub train_split: Option<SplitName>,
    pub out: Option<PathBuf>,
    pub defaults: Table,
    #[serde(alias = "variant")]
    pub variants: Vec<Table>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub addr: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub allow_origins: Vec<String>,
    pub corpus: Option<PathBuf>,
    pub train_split: Option<SplitName>,
    pub shots: Option<usize>,
    pub models: Vec<ModelConfig>,
}

/// Reads a TOML file; also returns its text for hashing.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<(T, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: T = toml::from_str(&text).with_context(|| format!("invalid configuration {}", path.display()))?;
    Ok((value, text))
}

/// Resolves a path from a config file against that file's directory.
pub fn rebase(base: &Path, path: Option<PathBuf>) -> Option<PathBuf> {
    let dir = base.parent().unwrap_or(Path::new(""));
    path.map(|p| if p.is_relative() { dir.join(p) } else { p })
}

/// Recursively overlays `top` onto `base`; nested tables merge, everything else replaces.
pub fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn put<T: serde::Serialize>(table: &mut Table, key: &str, value: Option<T>) -> anyhow::Result<()> {
    if let Some(v) = value {
        table.insert(key.into(), Value::try_from(v)?);
    }
    Ok(())
}

impl ExperimentFlags {
    /// The flags that were given, as an experiment table.
    pub fn to_table(&self) -> anyhow::Result<Table> {
        let mut t = Table::new();
        put(&mut t, "name", self.name.clone())?;
        put(&mut t, "task", self.task)?;
        put(&mut t, "setup", self.setup)?;
        put(&mut t, "segmentation", self.segmentation)?;
        put(&mut t, "mode", self.mode)?;
        put(&mut t, "shots", self.shots)?;
        put(&mut t, "runs", self.runs)?;
        put(&mut t, "parallelism", self.parallelism)?;
        let mut model = Table::new();
        put(&mut model, "model", self.model.clone())?;
        put(&mut model, "endpoint", self.endpoint.clone())?;
        put(&mut model, "api", self.api)?;
        put(&mut model, "seed", self.seed)?;
        put(&mut model, "temperature", self.temperature)?;
        put(&mut model, "timeout_secs", self.timeout_secs)?;
        if !model.is_empty() {
            t.insert("model".into(), Value::Table(model));
        }
        Ok(t)
    }
}

/// Reads a merged experiment table. A `setup` key picks the task when none is given and
/// must agree with it otherwise. The API key comes from the environment only.
pub fn experiment_from_table(mut table: Table) -> anyhow::Result<ExperimentConfig> {
    let setup = match table.remove("setup") {
        Some(v) => Some(v.as_str().context("setup must be a string")?.parse::<Setup>().map_err(anyhow::Error::msg)?),
        None => None,
    };
    let task_given = table.contains_key("task");
    let mut config: ExperimentConfig = table.try_into().context("invalid experiment settings")?;
    match setup {
        Some(Setup::Joint) if !task_given => config.task = TaskKind::TypeAndQuality,
        Some(Setup::Individual) if !task_given => bail!("setup individual needs a task (type or quality)"),
        Some(s) if s != config.setup() => bail!("setup {s} does not fit task {}", config.task),
        _ => {}
    }
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        if !key.trim().is_empty() {
            config.model.api_key = Some(key);
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use argmine::metrics::SegmentationSource;
    use argmine::prompt::PromptMode;

    #[test]
    fn layers_merge_key_by_key() {
        let mut base: Table = toml::from_str("runs = 3\n[model]\nendpoint = \"mock:gold\"\nmodel = \"a\"").unwrap();
        let top: Table = toml::from_str("task = \"quality_only\"\n[model]\nmodel = \"b\"").unwrap();
        merge(&mut base, top);
        let c = experiment_from_table(base).unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.task, TaskKind::QualityOnly);
        assert_eq!(c.model.endpoint, "mock:gold");
        assert_eq!(c.model.model, "b");
    }

    #[test]
    fn flags_become_a_partial_table() {
        let flags = ExperimentFlags {
            mode: Some(PromptMode::FineTuned),
            segmentation: Some(SegmentationSource::Inferred),
            seed: Some(7),
            ..Default::default()
        };
        let c = experiment_from_table(flags.to_table().unwrap()).unwrap();
        assert_eq!(c.mode, PromptMode::FineTuned);
        assert_eq!(c.segmentation, SegmentationSource::Inferred);
        assert_eq!(c.model.seed, Some(7));
        assert_eq!(c.model.model, ModelConfig::default().model);
    }

    #[test]
    fn setup_must_agree_with_task() {
        let joint: Table = toml::from_str("setup = \"joint\"").unwrap();
        assert_eq!(experiment_from_table(joint).unwrap().task, TaskKind::TypeAndQuality);
        let clash: Table = toml::from_str("setup = \"joint\"\ntask = \"type_only\"").unwrap();
        assert!(experiment_from_table(clash).is_err());
        let vague: Table = toml::from_str("setup = \"individual\"").unwrap();
        assert!(experiment_from_table(vague).is_err());
    }
}
