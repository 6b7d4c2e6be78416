//! `key = value` text format for network configurations.
//!
//! ```text
//! # two filter stages on 310 ms of raw samples
//! input = raw
//! w_in_ms = 310
//! rate = 16000
//! stages = 2
//! stage1.kw = 30
//! stage1.dw = 10
//! stage1.d_out = 80
//! stage1.pool_kw = 3
//! stage1.pool_stride = 3
//! stage2.kw = 7
//! ...
//! classifier = slp
//! num_classes = 40
//! learning_rate = 0.0001
//! ```
//!
//! `pool_stride` defaults to `pool_kw` and `dw` to 1. Cepstral inputs use
//! `input = cepstral` with `context` and `feature_dim` instead of `w_in_ms`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{ClassifierKind, ClassifierSpec, ConvStageSpec, InputSpec, NetworkConfig};
use crate::error::{Error, Result};

/// Parsed `key = value` lines, remembering the line each key came from.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
        let key = k.trim().to_string();
        if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(Error::Config { line: i + 1, msg: format!("duplicate key `{key}`") });
        }
    }
    Ok(KeyValues { entries })
}

impl KeyValues {
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config { line: *line, msg: format!("invalid value `{v}` for `{key}`") }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config { line: 0, msg: format!("missing key `{key}`") })
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| Error::Config {
                    line: self.line(key),
                    msg: format!("invalid list item `{}` for `{key}`", item.trim()),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn error(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { line: self.line(key), msg: msg.into() }
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

impl NetworkConfig {
    /// Builds a config from parsed keys. Stage keys are read for
    /// `stage1 ..= stages`; unknown keys are ignored so grid files can
    /// share the format.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let input = match kv.get_or("input", "raw".to_string())?.as_str() {
            "raw" => InputSpec::Raw { w_in_ms: kv.require("w_in_ms")?, rate: kv.get_or("rate", 16000)? },
            "cepstral" => InputSpec::Cepstral { context: kv.require("context")?, dim: kv.require("feature_dim")? },
            other => return Err(kv.error("input", format!("unknown input kind `{other}`"))),
        };
        let n: usize = kv.get_or("stages", 0)?;
        let stages = (1..=n)
            .map(|i| {
                let key = |f: &str| format!("stage{i}.{f}");
                let pool_kw: usize = kv.require(&key("pool_kw"))?;
                Ok(ConvStageSpec {
                    kw: kv.require(&key("kw"))?,
                    dw: kv.get_or(&key("dw"), 1)?,
                    d_out: kv.require(&key("d_out"))?,
                    pool_kw,
                    pool_stride: kv.get_or(&key("pool_stride"), pool_kw)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let kind = match kv.get_or("classifier", "slp".to_string())?.as_str() {
            "slp" => ClassifierKind::Slp,
            "mlp" => ClassifierKind::Mlp,
            other => return Err(kv.error("classifier", format!("unknown classifier `{other}`"))),
        };
        let hidden_units = match kind {
            ClassifierKind::Slp => 0,
            ClassifierKind::Mlp => kv.get_or("hidden_units", 500)?,
        };
        let defaults = NetworkConfig::new(input, Vec::new(), ClassifierSpec::slp(2));
        let cfg = NetworkConfig {
            input,
            stages,
            classifier: ClassifierSpec { kind, hidden_units, num_classes: kv.require("num_classes")? },
            learning_rate: kv.get_or("learning_rate", defaults.learning_rate)?,
            seed: kv.get_or("seed", defaults.seed)?,
            max_epochs: kv.get_or("max_epochs", defaults.max_epochs)?,
            patience: kv.get_or("patience", defaults.patience)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&parse_key_values(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_config_string())?;
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        match self.input {
            InputSpec::Raw { w_in_ms, rate } => {
                let _ = writeln!(s, "input = raw\nw_in_ms = {}\nrate = {rate}", fmt_f64(w_in_ms));
            }
            InputSpec::Cepstral { context, dim } => {
                let _ = writeln!(s, "input = cepstral\ncontext = {context}\nfeature_dim = {dim}");
            }
        }
        let _ = writeln!(s, "stages = {}", self.stages.len());
        for (i, st) in self.stages.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(
                s,
                "stage{n}.kw = {}\nstage{n}.dw = {}\nstage{n}.d_out = {}\nstage{n}.pool_kw = {}\nstage{n}.pool_stride = {}",
                st.kw, st.dw, st.d_out, st.pool_kw, st.pool_stride
            );
        }
        let _ = writeln!(s, "classifier = {}", self.classifier.kind.as_str());
        if self.classifier.kind == ClassifierKind::Mlp {
            let _ = writeln!(s, "hidden_units = {}", self.classifier.hidden_units);
        }
        let _ = writeln!(
            s,
            "num_classes = {}\nlearning_rate = {}\nseed = {}\nmax_epochs = {}\npatience = {}",
            self.classifier.num_classes,
            fmt_f64(self.learning_rate),
            self.seed,
            self.max_epochs,
            self.patience
        );
        s
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_config_string().as_bytes()).into()
    }
}
