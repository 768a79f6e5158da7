use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Hyper-parameters of one training run.
///
/// The flat key-value form uses exactly the field names as keys, one
/// `key = value` pair per line; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_q: f64,
    pub lambda_w: f64,
    pub lambda_m: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub stop_threshold: f64,
    pub seed: u64,
    /// Penalize `+cos` instead of `1 − cos` in the endmember term.
    pub literal_cosine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_q: 1.0,
            lambda_w: 1e-2,
            lambda_m: 1e-2,
            learning_rate: 1e-4,
            batch_size: 128,
            max_epochs: 200,
            stop_threshold: 0.01,
            seed: 0,
            literal_cosine: false,
        }
    }
}

const KEYS: [&str; 9] = [
    "lambda_q",
    "lambda_w",
    "lambda_m",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "stop_threshold",
    "seed",
    "literal_cosine",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_q", self.lambda_q),
            ("lambda_w", self.lambda_w),
            ("lambda_m", self.lambda_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a finite nonnegative number")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be at least 1"));
        }
        if !(self.stop_threshold > 0.0) {
            return Err(Error::invalid("stop_threshold must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda_q = {}", self.lambda_q);
        let _ = writeln!(s, "lambda_w = {}", self.lambda_w);
        let _ = writeln!(s, "lambda_m = {}", self.lambda_m);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "stop_threshold = {}", self.stop_threshold);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "literal_cosine = {}", self.literal_cosine);
        s
    }

    /// Parses a key-value document; missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format("config", format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::format("config", format!("bad value `{value}` for `{key}`"));
        let float = || value.parse::<f64>().map_err(|_| bad());
        let int = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "lambda_q" => self.lambda_q = float()?,
            "lambda_w" => self.lambda_w = float()?,
            "lambda_m" => self.lambda_m = float()?,
            "learning_rate" => self.learning_rate = float()?,
            "batch_size" => self.batch_size = int()?,
            "max_epochs" => self.max_epochs = int()?,
            "stop_threshold" => self.stop_threshold = float()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "literal_cosine" => self.literal_cosine = value.parse().map_err(|_| bad())?,
            other => {
                return Err(Error::format(
                    "config",
                    format!("unknown key `{other}` (known: {})", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }
}
