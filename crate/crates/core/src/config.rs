//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! mode = multilingual
//! seed = 7
//! train.en = data/train.en.conll
//! embeddings.en-es = data/embeddings.en-es.txt
//! output_dir = out
//! rounds = 3
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::codemix::{CodeMixConfig, Strategy};
use crate::corpus::Lang;
use crate::error::{Error, Result};
use crate::generate::SamplingMode;
use crate::masking::MaskingConfig;
use crate::mlm::{ModelConfig, Optimizer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Monolingual,
    Multilingual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub seed: u64,
    pub train: BTreeMap<Lang, PathBuf>,
    pub dev: BTreeMap<Lang, PathBuf>,
    pub test: BTreeMap<Lang, PathBuf>,
    pub embeddings: BTreeMap<(Lang, Lang), PathBuf>,
    pub output_dir: PathBuf,
    /// Sentences sampled per language from each training file; all when `None`.
    pub split_n: Option<usize>,
    pub masking: MaskingConfig,
    pub sampling: SamplingMode,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub min_freq: usize,
    /// Initialize label marker embeddings from the class words.
    pub label_init: bool,
    pub codemix: CodeMixConfig,
    pub tagger_epochs: usize,
    pub dedup: bool,
    pub eval_seeds: Vec<u64>,
    /// Worker threads; 0 uses every core. Does not affect results.
    pub workers: usize,
    pub save_checkpoint: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Monolingual,
            seed: 0,
            train: BTreeMap::new(),
            dev: BTreeMap::new(),
            test: BTreeMap::new(),
            embeddings: BTreeMap::new(),
            output_dir: PathBuf::from("melm-out"),
            split_n: None,
            masking: MaskingConfig::default(),
            sampling: SamplingMode::Uniform,
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            min_freq: 1,
            label_init: true,
            codemix: CodeMixConfig::default(),
            tagger_epochs: 10,
            dedup: true,
            eval_seeds: vec![1, 2, 3],
            workers: 0,
            save_checkpoint: true,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn lang(key: &str, id: &str) -> Result<Lang> {
    Lang::new(id).map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

impl PipelineConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            cfg.set(key.trim(), value.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        if let Some((kind, rest)) = key.split_once('.') {
            match kind {
                "train" | "dev" | "test" => {
                    let map = match kind {
                        "train" => &mut self.train,
                        "dev" => &mut self.dev,
                        _ => &mut self.test,
                    };
                    map.insert(lang(key, rest)?, path());
                    return Ok(());
                }
                "embeddings" => {
                    let (a, b) = rest.split_once('-').ok_or_else(|| {
                        Error::Config(format!("`{key}`: expected embeddings.<src>-<tgt>"))
                    })?;
                    self.embeddings.insert((lang(key, a)?, lang(key, b)?), path());
                    return Ok(());
                }
                _ => {}
            }
        }
        let m = &mut self.model;
        let t = &mut self.training;
        match key {
            "mode" => {
                self.mode = match value {
                    "monolingual" => Mode::Monolingual,
                    "multilingual" => Mode::Multilingual,
                    _ => return Err(Error::Config(format!("`mode`: unknown mode `{value}`"))),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "output_dir" => self.output_dir = path(),
            "split.n" => self.split_n = Some(parse_num(key, value)?),
            "eta" => {
                self.masking.eta = parse_num(key, value)?;
                t.eta = self.masking.eta;
            }
            "mu" => self.masking.mu = parse_num(key, value)?,
            "rounds" => self.masking.rounds = parse_num(key, value)?,
            "top_k" => self.masking.top_k = parse_num(key, value)?,
            "sampling" => {
                self.sampling = match value {
                    "uniform" => SamplingMode::Uniform,
                    "renormalized" => SamplingMode::Renormalized,
                    _ => return Err(Error::Config(format!("`sampling`: unknown mode `{value}`"))),
                }
            }
            "mlm.dim" => m.dim = parse_num(key, value)?,
            "mlm.layers" => m.layers = parse_num(key, value)?,
            "mlm.heads" => m.heads = parse_num(key, value)?,
            "mlm.ff_dim" => m.ff_dim = parse_num(key, value)?,
            "mlm.max_len" => m.max_len = parse_num(key, value)?,
            "mlm.init_std" => m.init_std = parse_num(key, value)?,
            "mlm.epochs" => t.epochs = parse_num(key, value)?,
            "mlm.batch_size" => t.batch_size = parse_num(key, value)?,
            "mlm.lr" => t.lr = parse_num(key, value)?,
            "mlm.momentum" => t.momentum = parse_num(key, value)?,
            "mlm.clip_norm" => t.clip_norm = parse_num(key, value)?,
            "mlm.optimizer" => {
                t.optimizer = match value {
                    "momentum" => Optimizer::Momentum,
                    "adam" => Optimizer::Adam,
                    _ => return Err(Error::Config(format!("`{key}`: unknown optimizer `{value}`"))),
                }
            }
            "mlm.min_freq" => self.min_freq = parse_num(key, value)?,
            "mlm.label_init" => self.label_init = parse_bool(key, value)?,
            "mlm.save_checkpoint" => self.save_checkpoint = parse_bool(key, value)?,
            "codemix.strategy" => {
                self.codemix.strategy = match value {
                    "ess" => Strategy::Ess,
                    "random" => Strategy::Random,
                    _ => return Err(Error::Config(format!("`{key}`: unknown strategy `{value}`"))),
                }
            }
            "codemix.substitution_prob" => self.codemix.substitution_prob = parse_num(key, value)?,
            "tagger.epochs" => self.tagger_epochs = parse_num(key, value)?,
            "filter.dedup" => self.dedup = parse_bool(key, value)?,
            "eval.seeds" => {
                self.eval_seeds = value
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "workers" => self.workers = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides, e.g. from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String], base: &Path) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim(), base)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.masking.validate()?;
        self.model.validate()?;
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || !(t.lr > 0.0) {
            return Err(Error::Config("mlm.epochs, mlm.batch_size and mlm.lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.codemix.substitution_prob) {
            return Err(Error::Config("codemix.substitution_prob must be in [0, 1]".into()));
        }
        if self.tagger_epochs == 0 {
            return Err(Error::Config("tagger.epochs must be positive".into()));
        }
        Ok(())
    }

    /// Checks that every configured input file exists.
    pub fn validate_paths(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Config("no training files configured (train.<lang>)".into()));
        }
        if self.mode == Mode::Multilingual && self.train.len() < 2 {
            return Err(Error::Config("multilingual mode needs training files for two languages".into()));
        }
        let inputs = self
            .train
            .values()
            .chain(self.dev.values())
            .chain(self.test.values())
            .chain(self.embeddings.values());
        for p in inputs {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        Ok(())
    }

    /// Every setting that influences results, one `key = value` per line in
    /// key order. Output location and worker count are left out.
    pub fn canonical(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("mode", format!("{:?}", self.mode).to_lowercase());
        put("seed", self.seed.to_string());
        for (name, map) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            for (l, p) in map {
                put(&format!("{name}.{l}"), p.display().to_string());
            }
        }
        for ((a, b), p) in &self.embeddings {
            put(&format!("embeddings.{a}-{b}"), p.display().to_string());
        }
        if let Some(n) = self.split_n {
            put("split.n", n.to_string());
        }
        put("eta", self.masking.eta.to_string());
        put("mu", self.masking.mu.to_string());
        put("rounds", self.masking.rounds.to_string());
        put("top_k", self.masking.top_k.to_string());
        put("sampling", format!("{:?}", self.sampling).to_lowercase());
        let m = &self.model;
        put("mlm.dim", m.dim.to_string());
        put("mlm.layers", m.layers.to_string());
        put("mlm.heads", m.heads.to_string());
        put("mlm.ff_dim", m.ff_dim.to_string());
        put("mlm.max_len", m.max_len.to_string());
        put("mlm.init_std", m.init_std.to_string());
        let t = &self.training;
        put("mlm.epochs", t.epochs.to_string());
        put("mlm.batch_size", t.batch_size.to_string());
        put("mlm.lr", t.lr.to_string());
        put("mlm.momentum", t.momentum.to_string());
        put("mlm.clip_norm", t.clip_norm.to_string());
        put("mlm.optimizer", format!("{:?}", t.optimizer).to_lowercase());
        put("mlm.min_freq", self.min_freq.to_string());
        put("mlm.label_init", self.label_init.to_string());
        put("codemix.strategy", format!("{:?}", self.codemix.strategy).to_lowercase());
        put("codemix.substitution_prob", self.codemix.substitution_prob.to_string());
        put("tagger.epochs", self.tagger_epochs.to_string());
        put("filter.dedup", self.dedup.to_string());
        put(
            "eval.seeds",
            self.eval_seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Training configuration with the masking rate and marker mode applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.masking.eta,
            language_markers: self.mode == Mode::Multilingual,
            ..self.training.clone()
        }
    }
}
