//! Run configuration: TOML file, `SGED_SEED`, and command-line overrides.
//!
//! Resolution order, later wins: built-in defaults, `SGED_SEED`, the
//! config file, flags. The resolved config is written back as the run
//! manifest in the same format, so `--config <manifest>` repeats a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::datagen::DatasetConfig;
use crate::ged::CostModel;
use crate::policy::{Baseline, RewardMode, TrainConfig};
use crate::scene::Attribute;
use crate::Preset;

pub const SEED_ENV: &str = "SGED_SEED";
pub const MANIFEST_FILE: &str = "run_manifest.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Subcommand the config was resolved for; informational in manifests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub paths: Paths,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub cost: CostOverrides,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub queries: usize,
    pub db_scenes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_objects: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_objects: Option<usize>,
    pub max_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub make_attributes: Option<Vec<Attribute>>,
    pub include_add: bool,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let d = DatasetConfig::new(Preset::Css, 0);
        GenerateSection {
            queries: d.queries,
            db_scenes: d.db_scenes,
            min_objects: None,
            max_objects: None,
            max_len: d.max_len,
            make_attributes: None,
            include_add: d.include_add,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabMode {
    /// Every non-add token of the variant plus the add tokens in the training golds.
    #[default]
    Full,
    /// Only tokens that occur in the training golds.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub gamma: f64,
    pub learning_rate: f64,
    /// Defaults per preset when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_learning_rate: Option<f64>,
    pub pretrain_epochs: usize,
    /// Fraction of training queries annotated for pretraining.
    pub pretrain_fraction: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub early_stop_patience: usize,
    pub eval_every: usize,
    pub baseline: Baseline,
    pub baseline_decay: f64,
    pub reward: RewardMode,
    pub validation_fraction: f64,
    pub vocab: VocabMode,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            gamma: t.gamma,
            learning_rate: t.learning_rate,
            pretrain_learning_rate: None,
            pretrain_epochs: t.pretrain_epochs,
            pretrain_fraction: 0.1,
            batch_size: t.batch_size,
            iterations: t.iterations,
            early_stop_patience: t.early_stop_patience,
            eval_every: t.eval_every,
            baseline: t.baseline,
            baseline_decay: t.baseline_decay,
            reward: t.reward,
            validation_fraction: t.validation_fraction,
            vocab: VocabMode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
    /// `gold` or `policy:<model file>`.
    pub programs: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { k: 1, programs: "gold".into() }
    }
}

/// Per-term replacements for the preset cost model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_delete: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_insert: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attr_substitution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_substitution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wildcard_matches: Option<bool>,
}

impl CostOverrides {
    pub fn apply(&self, base: CostModel) -> CostModel {
        CostModel {
            node_delete: self.node_delete.unwrap_or(base.node_delete),
            node_insert: self.node_insert.unwrap_or(base.node_insert),
            attr_substitution: self.attr_substitution.unwrap_or(base.attr_substitution),
            edge_substitution: self.edge_substitution.unwrap_or(base.edge_substitution),
            wildcard_matches: self.wildcard_matches.unwrap_or(base.wildcard_matches),
        }
    }
}

/// How `eval` obtains programs.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgramSource {
    Gold,
    Policy(PathBuf),
}

impl ProgramSource {
    pub fn parse(s: &str) -> Result<ProgramSource, CliError> {
        match s.split_once(':') {
            None if s == "gold" => Ok(ProgramSource::Gold),
            Some(("policy", path)) if !path.is_empty() => Ok(ProgramSource::Policy(PathBuf::from(path))),
            _ => Err(CliError::Config(format!("programs must be gold or policy:<model file>, got {s:?}"))),
        }
    }
}

impl RunConfig {
    pub fn preset_or(&self, fallback: Preset) -> Preset {
        self.preset.unwrap_or(fallback)
    }

    pub fn cost_model(&self, preset: Preset) -> Result<CostModel, CliError> {
        let m = self.cost.apply(preset.cost_model());
        m.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(m)
    }

    pub fn dataset_config(&self, preset: Preset) -> DatasetConfig {
        let base = DatasetConfig::new(preset, self.seed);
        let g = &self.generate;
        DatasetConfig {
            queries: g.queries,
            db_scenes: g.db_scenes,
            min_objects: g.min_objects.unwrap_or(base.min_objects),
            max_objects: g.max_objects.unwrap_or(base.max_objects),
            max_len: g.max_len,
            make_attributes: g.make_attributes.clone().unwrap_or(base.make_attributes.clone()),
            include_add: g.include_add,
            ..base
        }
    }

    pub fn train_config(&self, preset: Preset) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            gamma: t.gamma,
            learning_rate: t.learning_rate,
            pretrain_learning_rate: t
                .pretrain_learning_rate
                .unwrap_or(TrainConfig::for_preset(preset).pretrain_learning_rate),
            pretrain_epochs: t.pretrain_epochs,
            batch_size: t.batch_size,
            iterations: t.iterations,
            early_stop_patience: t.early_stop_patience,
            eval_every: t.eval_every,
            baseline: t.baseline,
            baseline_decay: t.baseline_decay,
            reward: t.reward,
            validation_fraction: t.validation_fraction,
            seed: self.seed,
        }
    }

    /// Checks every section that does not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let preset = self.preset_or(Preset::Css);
        self.cost_model(preset)?;
        self.train_config(preset).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.train.pretrain_fraction) || self.train.pretrain_fraction == 0.0 {
            return Err(CliError::Config(format!(
                "train.pretrain_fraction must lie in (0, 1], got {}",
                self.train.pretrain_fraction
            )));
        }
        if self.eval.k == 0 {
            return Err(CliError::Config("eval.k must be positive".into()));
        }
        ProgramSource::parse(&self.eval.programs)?;
        if self.generate.max_len == 0 {
            return Err(CliError::Config("generate.max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn write_manifest(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))
    }
}

/// Parses a config file, applying `SGED_SEED` when the file sets no seed.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, std::env::var(SEED_ENV).ok().as_deref())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses config text. `env_seed` fills the seed only if the text has none.
pub fn parse_config(text: &str, env_seed: Option<&str>) -> Result<RunConfig, String> {
    let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let has_seed = table.contains_key("seed");
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if !has_seed {
        cfg.seed = env_seed_value(env_seed)?.unwrap_or(cfg.seed);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn env_seed_value(raw: Option<&str>) -> Result<Option<u64>, String> {
    raw.map(|s| s.trim().parse::<u64>().map_err(|_| format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = parse_config("preset = \"crir\"\n", None).unwrap();
        assert_eq!(cfg.preset, Some(Preset::Crir));
        assert_eq!(cfg.eval.k, 1);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train_config(Preset::Crir).pretrain_learning_rate, 7e-4);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_config("[cost]\nedge_substitution = -1.0\n", None).is_err());
        assert!(parse_config("colour = 3\n", None).is_err());
        let err = parse_config("seed = \n", None).unwrap_err();
        assert!(err.contains("line 1"), "{err}");
        assert!(parse_config("[train]\nreward = \"banana\"\n", None).is_err());
    }

    #[test]
    fn env_seed_only_fills_gaps() {
        assert_eq!(parse_config("", Some("42")).unwrap().seed, 42);
        assert_eq!(parse_config("seed = 3\n", Some("42")).unwrap().seed, 3);
        assert!(parse_config("", Some("x")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut cfg = parse_config("preset = \"css\"\nseed = 5\n[eval]\nk = 3\n", None).unwrap();
        cfg.command = Some("eval".into());
        cfg.paths.dataset = Some("data/test".into());
        let again = parse_config(&cfg.to_toml(), None).unwrap();
        assert_eq!(cfg, again);
    }
}
