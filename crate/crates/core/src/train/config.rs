//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compute::AdamConfig;
use crate::error::{Error, Result};
use crate::model::ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub vocab_cap: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Directory holding the prepared splits and vocabulary.
    pub data_dir: Option<PathBuf>,
    /// Component bank for MoG and combination models.
    pub bank: Option<PathBuf>,
    /// Optional pretrained embedding file for the input table.
    pub pretrained: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Softmax,
            dim: 50,
            vocab_cap: 1000,
            dropout: 0.1,
            adam: AdamConfig::default(),
            patience: 3,
            max_epochs: 50,
            seed: 0,
            data_dir: None,
            bank: None,
            pretrained: None,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 15] = [
        "model",
        "dim",
        "vocab_cap",
        "dropout",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "patience",
        "max_epochs",
        "seed",
        "data_dir",
        "bank",
        "pretrained",
        "out",
    ];

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "model" => self.model = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "dim" => self.dim = parse_num(key, value)?,
            "vocab_cap" => self.vocab_cap = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "learning_rate" => self.adam.learning_rate = parse_num(key, value)?,
            "beta1" => self.adam.beta1 = parse_num(key, value)?,
            "beta2" => self.adam.beta2 = parse_num(key, value)?,
            "epsilon" => self.adam.epsilon = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "data_dir" => self.data_dir = path(),
            "bank" => self.bank = path(),
            "pretrained" => self.pretrained = path(),
            "out" => self.out = path(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults, unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("`dim` must be positive".into()));
        }
        if self.vocab_cap == 0 {
            return Err(Error::Config("`vocab_cap` must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`dropout` must lie in [0, 1)".into()));
        }
        if self.adam.learning_rate <= 0.0 {
            return Err(Error::Config("`learning_rate` must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", self.model.name().to_string());
        kv("dim", self.dim.to_string());
        kv("vocab_cap", self.vocab_cap.to_string());
        kv("dropout", format!("{:?}", self.dropout));
        kv("learning_rate", format!("{:?}", self.adam.learning_rate));
        kv("beta1", format!("{:?}", self.adam.beta1));
        kv("beta2", format!("{:?}", self.adam.beta2));
        kv("epsilon", format!("{:?}", self.adam.epsilon));
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("seed", self.seed.to_string());
        for (k, v) in [
            ("data_dir", &self.data_dir),
            ("bank", &self.bank),
            ("pretrained", &self.pretrained),
            ("out", &self.out),
        ] {
            if let Some(p) = v {
                kv(k, p.display().to_string());
            }
        }
        s
    }
}
