//! Experiment configuration: flat `section.key = value` lines (TOML dotted
//! keys) with command-line overrides of the same form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{FilterConfig, SyntheticTask};
use crate::distill::KdConfig;
use crate::error::{Error, Result};
use crate::model::{DecodeConfig, ModelConfig};
use crate::quantizer::QuantConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub task: SyntheticTask,
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            task: SyntheticTask::Cipher,
            size: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSettings {
    /// Layer counts to remove, each yielding one pruned model.
    pub targets: Vec<usize>,
    pub parallel_candidates: bool,
    pub finetune_between_steps: bool,
}

impl Default for PruneSettings {
    fn default() -> Self {
        Self {
            targets: vec![2, 4],
            parallel_candidates: true,
            finetune_between_steps: false,
        }
    }
}

/// Where distilled targets come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TeacherSpec {
    /// The exact synthetic transform.
    Oracle,
    /// The trained baseline of the same run.
    Baseline,
    /// A model file.
    Path(PathBuf),
}

impl TeacherSpec {
    pub fn parse(s: &str) -> Self {
        match s {
            "oracle" => Self::Oracle,
            "baseline" => Self::Baseline,
            path => Self::Path(PathBuf::from(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdSettings {
    pub enabled: bool,
    /// `oracle`, `baseline` or a model path.
    pub teacher: String,
    /// Cap on held-out sources sent to the teacher.
    pub max_sources: usize,
    pub quality_threshold: f64,
    pub dedup_against_authentic: bool,
    pub max_in_flight: usize,
    pub seed: u64,
}

impl Default for KdSettings {
    fn default() -> Self {
        let kd = KdConfig::default();
        Self {
            enabled: true,
            teacher: "oracle".into(),
            max_sources: 5_000,
            quality_threshold: kd.quality_threshold,
            dedup_against_authentic: kd.dedup_against_authentic,
            max_in_flight: kd.max_in_flight,
            seed: 0,
        }
    }
}

impl KdSettings {
    pub fn config(&self, max_new_tokens: usize) -> KdConfig {
        KdConfig {
            quality_threshold: self.quality_threshold,
            dedup_against_authentic: self.dedup_against_authentic,
            max_new_tokens,
            max_in_flight: self.max_in_flight,
        }
    }

    pub fn teacher(&self) -> TeacherSpec {
        TeacherSpec::parse(&self.teacher)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSettings {
    pub enabled: bool,
    pub bits: u8,
    pub group_size: usize,
    pub include_embeddings: bool,
}

impl Default for QuantSettings {
    fn default() -> Self {
        let q = QuantConfig::default();
        Self {
            enabled: true,
            bits: q.bits,
            group_size: q.group_size,
            include_embeddings: q.include_embeddings,
        }
    }
}

impl QuantSettings {
    pub fn config(&self) -> QuantConfig {
        QuantConfig {
            bits: self.bits,
            group_size: self.group_size,
            include_embeddings: self.include_embeddings,
            ..QuantConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Leading pairs of the test split used for dev scoring and importance sweeps.
    pub dev_size: usize,
    pub decode: DecodeConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            dev_size: 128,
            decode: DecodeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub prompts: usize,
    pub repetitions: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            prompts: 64,
            repetitions: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSettings,
    pub filter: FilterConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub prune: PruneSettings,
    pub kd: KdSettings,
    pub quant: QuantSettings,
    pub eval: EvalSettings,
    pub bench: BenchSettings,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSettings::default(),
            filter: FilterConfig {
                sample_size: Some(10_000),
                ..FilterConfig::default()
            },
            model: ModelConfig::default(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 16,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                learning_rate: 5e-4,
                batch_size: 16,
                ..TrainConfig::default()
            },
            prune: PruneSettings::default(),
            kd: KdSettings::default(),
            quant: QuantSettings::default(),
            eval: EvalSettings::default(),
            bench: BenchSettings::default(),
            output_dir: PathBuf::from("runs/desk"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.size == 0 {
            return Err(Error::Config("corpus.size must be positive".into()));
        }
        self.filter.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.finetune.validate()?;
        self.quant.config().validate()?;
        self.kd.config(self.eval.decode.max_new_tokens).validate()?;
        let t = &self.prune.targets;
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("prune.targets must be strictly increasing".into()));
        }
        if t.iter().any(|&k| k == 0 || k >= self.model.n_layers) {
            return Err(Error::Config(format!(
                "prune.targets must lie in 1..{}",
                self.model.n_layers
            )));
        }
        if self.eval.dev_size == 0 || self.eval.dev_size > self.filter.test_size {
            return Err(Error::Config("eval.dev_size must be in 1..=filter.test_size".into()));
        }
        if self.bench.repetitions < 3 || self.bench.prompts == 0 {
            return Err(Error::Config("bench needs prompts > 0 and repetitions >= 3".into()));
        }
        Ok(())
    }

    /// Parses config text and applies `key=value` overrides in order.
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_text(&text, overrides)
    }

    /// Flat `section.key = value` rendering that [`Self::from_text`] reads
    /// back. Unset optional keys are omitted.
    pub fn to_flat_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serialises");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.join("\n") + "\n"
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        v => out.push(format!("{prefix} = {v}")),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, o: &str) -> Result<()> {
    let (key, raw) = o
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for s in sections {
        let entry = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{s}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
