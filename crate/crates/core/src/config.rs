//! Flat `key = value` configuration files and the training configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parse `key = value` lines. `#` starts a comment; blank lines are skipped;
/// later keys override earlier ones.
pub fn parse_key_values(text: &str, source_name: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(source_name, idx + 1, "expected \"key = value\""))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(source_name, idx + 1, "empty key"));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn load_key_values(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text, &path.display().to_string())
}

/// Split `KEY=VALUE`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("override {s:?} is not KEY=VALUE")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Usage(format!("override {s:?} has an empty key")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Zero target labels: source labels plus target unlabeled text.
    Zl,
    /// A little target labeled data, duplicated to the source size.
    Ll,
    /// ZL wiring without the adversarial critic.
    NoAdversZ,
    /// LL wiring without the adversarial critic.
    NoAdversL,
}

impl Regime {
    pub fn is_adversarial(self) -> bool {
        matches!(self, Regime::Zl | Regime::Ll)
    }

    /// Whether the model reads target labels (and so has trained private
    /// extractors feeding the segmenter).
    pub fn uses_target_labels(self) -> bool {
        matches!(self, Regime::Ll | Regime::NoAdversL)
    }

    /// The regime with the same adversarial setting for a given amount of
    /// target labels.
    pub fn for_target_size(self, size: usize) -> Regime {
        match (self.is_adversarial(), size > 0) {
            (true, false) => Regime::Zl,
            (true, true) => Regime::Ll,
            (false, false) => Regime::NoAdversZ,
            (false, true) => Regime::NoAdversL,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Zl => "ZL",
            Regime::Ll => "LL",
            Regime::NoAdversZ => "NOADVERS_Z",
            Regime::NoAdversL => "NOADVERS_L",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "ZL" => Ok(Regime::Zl),
            "LL" => Ok(Regime::Ll),
            "NOADVERS_Z" => Ok(Regime::NoAdversZ),
            "NOADVERS_L" => Ok(Regime::NoAdversL),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosTagset {
    Universal,
    LanguageSpecific,
}

impl fmt::Display for PosTagset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosTagset::Universal => "universal",
            PosTagset::LanguageSpecific => "language_specific",
        })
    }
}

impl FromStr for PosTagset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "universal" => Ok(PosTagset::Universal),
            "language_specific" | "different" => Ok(PosTagset::LanguageSpecific),
            _ => Err(Error::Config(format!("unknown POS tagset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub regime: Regime,
    /// Weight of the adversarial term in the generator loss.
    pub lambda: f64,
    /// Generator steps per critic round.
    pub k: usize,
    /// Critic steps per critic round.
    pub critic_steps: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub batch: usize,
    pub dropout: f64,
    pub clip_c: f64,
    pub seed: u64,
    /// Non-improving validations tolerated before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub word_dim: usize,
    pub pos_dim: usize,
    pub n_filters: usize,
    pub leaky_slope: f64,
    pub lowercase_en: bool,
    pub sigmoid_output: bool,
    pub pos_tagset: PosTagset,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            regime: Regime::Zl,
            lambda: 0.1,
            k: 5,
            critic_steps: 1,
            lr: 0.001,
            decay: 0.9,
            eps: 1e-8,
            batch: 20,
            dropout: 0.5,
            clip_c: 0.01,
            seed: 1,
            patience: 10,
            max_epochs: 50,
            word_dim: 200,
            pos_dim: 50,
            n_filters: 100,
            leaky_slope: crate::neural::DEFAULT_LEAKY_SLOPE,
            lowercase_en: true,
            sigmoid_output: false,
            pos_tagset: PosTagset::Universal,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainingConfig {
    pub const KEYS: [&'static str; 20] = [
        "regime",
        "lambda",
        "k",
        "critic_steps",
        "lr",
        "decay",
        "eps",
        "batch",
        "dropout",
        "clip_c",
        "seed",
        "patience",
        "max_epochs",
        "word_dim",
        "pos_dim",
        "n_filters",
        "leaky_slope",
        "lowercase_en",
        "sigmoid_output",
        "pos_tagset",
    ];

    /// Set one key. Returns `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "regime" => self.regime = value.parse()?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "critic_steps" => self.critic_steps = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "decay" => self.decay = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "clip_c" => self.clip_c = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "word_dim" => self.word_dim = parse_value(key, value)?,
            "pos_dim" => self.pos_dim = parse_value(key, value)?,
            "n_filters" => self.n_filters = parse_value(key, value)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, value)?,
            "lowercase_en" => self.lowercase_en = parse_bool(key, value)?,
            "sigmoid_output" => self.sigmoid_output = parse_bool(key, value)?,
            "pos_tagset" => self.pos_tagset = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Build from a key-value map, ignoring keys that are not training keys.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = TrainingConfig::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("regime", self.regime.to_string());
        put("lambda", self.lambda.to_string());
        put("k", self.k.to_string());
        put("critic_steps", self.critic_steps.to_string());
        put("lr", self.lr.to_string());
        put("decay", self.decay.to_string());
        put("eps", self.eps.to_string());
        put("batch", self.batch.to_string());
        put("dropout", self.dropout.to_string());
        put("clip_c", self.clip_c.to_string());
        put("seed", self.seed.to_string());
        put("patience", self.patience.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("word_dim", self.word_dim.to_string());
        put("pos_dim", self.pos_dim.to_string());
        put("n_filters", self.n_filters.to_string());
        put("leaky_slope", self.leaky_slope.to_string());
        put("lowercase_en", self.lowercase_en.to_string());
        put("sigmoid_output", self.sigmoid_output.to_string());
        put("pos_tagset", self.pos_tagset.to_string());
        m
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.k == 0 {
            return fail("k must be >= 1".into());
        }
        if self.critic_steps == 0 {
            return fail("critic_steps must be >= 1".into());
        }
        if self.batch == 0 {
            return fail("batch must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.clip_c > 0.0) {
            return fail(format!("clip_c must be > 0, got {}", self.clip_c));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.decay) || !(self.eps > 0.0) {
            return fail("invalid RMSProp hyper-parameters".into());
        }
        if self.word_dim == 0 || self.pos_dim == 0 || self.n_filters == 0 {
            return fail("dimensions must be > 0".into());
        }
        if (self.word_dim + self.pos_dim) % 2 != 0 {
            return fail(format!(
                "word_dim + pos_dim must be even so the BiLSTM halves match, got {}",
                self.word_dim + self.pos_dim
            ));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1".into());
        }
        Ok(())
    }
}
