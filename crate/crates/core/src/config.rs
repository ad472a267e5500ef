//! Run configuration from flat `key = value` files, and the manifest that
//! accompanies every trained model.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{IndexBase, SplitFractions};
use crate::error::{RafmError, Result};
use crate::model::{RankLadder, Task};
use crate::train::{ConstraintLoss, TrainConfig};

pub const KEYS: &[&str] = &[
    "task",
    "seed",
    "index_base",
    "split",
    "ranks",
    "rho_f",
    "rho_d",
    "l2",
    "epochs",
    "init_sigma",
    "constraint_loss",
    "out_dir",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub index_base: IndexBase,
    pub split: SplitFractions,
    pub ranks: Vec<usize>,
    pub rho_f: f64,
    pub rho_d: f64,
    pub l2: f64,
    pub epochs: usize,
    pub init_sigma: f64,
    /// `None` picks the default for the task.
    pub constraint_loss: Option<ConstraintLoss>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::new(Task::Classification);
        RunConfig {
            task: Task::Classification,
            seed: 0,
            index_base: IndexBase::Zero,
            split: SplitFractions::default(),
            ranks: vec![4, 32],
            rho_f: t.rho_f,
            rho_d: t.rho_d,
            l2: t.l2,
            epochs: t.epochs,
            init_sigma: t.init_sigma,
            constraint_loss: None,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| RafmError::input(format!("{key}: cannot parse '{value}'")))
}

/// Parses `a,b,c` into split fractions.
pub fn parse_split(value: &str) -> Result<SplitFractions> {
    let parts: Vec<f64> = value.split(',').map(|p| parse_num("split", p.trim())).collect::<Result<_>>()?;
    match parts[..] {
        [a, b, c] => SplitFractions::new(a, b, c),
        _ => Err(RafmError::input(format!("split needs three fractions, got '{value}'"))),
    }
}

/// Parses `4,32` into a validated rank ladder.
pub fn parse_ranks(value: &str) -> Result<RankLadder> {
    let ranks: Vec<usize> = value.split(',').map(|p| parse_num("ranks", p.trim())).collect::<Result<_>>()?;
    RankLadder::new(ranks)
}

impl RunConfig {
    /// Applies one key. Values are trimmed.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "task" => self.task = value.parse()?,
            "seed" => self.seed = parse_num(key, value)?,
            "index_base" => self.index_base = IndexBase::from_digit(parse_num(key, value)?)?,
            "split" => self.split = parse_split(value)?,
            "ranks" => self.ranks = parse_ranks(value)?.ranks().to_vec(),
            "rho_f" => self.rho_f = parse_num(key, value)?,
            "rho_d" => self.rho_d = parse_num(key, value)?,
            "l2" => self.l2 = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "init_sigma" => self.init_sigma = parse_num(key, value)?,
            "constraint_loss" => self.constraint_loss = Some(value.parse()?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(RafmError::input(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| RafmError::Parse {
                line: n + 1,
                msg: format!("expected key=value, got '{line}'"),
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                RafmError::Input(msg) => RafmError::Parse { line: n + 1, msg },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| RafmError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn ladder(&self) -> Result<RankLadder> {
        RankLadder::new(self.ranks.clone())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            rho_f: self.rho_f,
            rho_d: self.rho_d,
            l2: self.l2,
            epochs: self.epochs,
            seed: self.seed,
            task: self.task,
            constraint_loss: self.constraint_loss.unwrap_or(ConstraintLoss::default_for(self.task)),
            init_sigma: self.init_sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its effective value, defaults resolved.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let s = &self.split;
        let loss = self.constraint_loss.unwrap_or(ConstraintLoss::default_for(self.task));
        let ranks: Vec<String> = self.ranks.iter().map(ToString::to_string).collect();
        [
            ("task", self.task.to_string()),
            ("seed", self.seed.to_string()),
            ("index_base", self.index_base.offset().to_string()),
            ("split", format!("{},{},{}", s.train, s.valid, s.test)),
            ("ranks", ranks.join(",")),
            ("rho_f", self.rho_f.to_string()),
            ("rho_d", self.rho_d.to_string()),
            ("l2", self.l2.to_string()),
            ("epochs", self.epochs.to_string()),
            ("init_sigma", self.init_sigma.to_string()),
            ("constraint_loss", loss.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Resolved config in the same `key = value` format it is read from.
    pub fn to_text(&self) -> String {
        self.resolved().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        Ok(InputDigest {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

/// Written next to every trained model as `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputDigest>,
    pub feature_count: usize,
    /// `|F_k|` for each level.
    pub set_sizes: Vec<usize>,
    pub model_sha256: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, inputs: Vec<InputDigest>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.resolved(),
            inputs,
            feature_count: 0,
            set_sizes: Vec::new(),
            model_sha256: String::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
