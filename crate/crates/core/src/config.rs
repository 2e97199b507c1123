//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! alpha = 0.45
//! epsilon = 1e-6
//! round_cap = 100000
//! seed = 7
//! kappa = 20
//! default_key = 4,7,15,3      # or `auto` to distribute a key first
//! security_degrees = 2,3,4,2,3
//! initial_states = 12, 81.5, 40.25, 3, 55
//! ```

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::keydist::{DEFAULT_DELTA, DEFAULT_KAPPA};
use crate::simnet::{DEFAULT_EPSILON, DEFAULT_ROUND_CAP};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum KeySetting {
    /// `(1, 2, …, p̄)`.
    #[default]
    Default,
    Explicit(Vec<i64>),
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub alpha: Option<f64>,
    pub epsilon: f64,
    pub round_cap: usize,
    pub seed: u64,
    pub kappa: i64,
    pub default_key: KeySetting,
    pub security_degrees: Option<Vec<usize>>,
    pub initial_states: Option<Vec<f64>>,
    pub delta: f64,
    pub n_bound: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            epsilon: DEFAULT_EPSILON,
            round_cap: DEFAULT_ROUND_CAP,
            seed: 0,
            kappa: DEFAULT_KAPPA,
            default_key: KeySetting::Default,
            security_degrees: None,
            initial_states: None,
            delta: DEFAULT_DELTA,
            n_bound: None,
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

fn list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| scalar(key, v.trim(), line))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(Error::Parse {
                line,
                msg: format!("expected `key = value`, got {body:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "alpha" => cfg.alpha = Some(scalar(key, value, line)?),
                "epsilon" => cfg.epsilon = scalar(key, value, line)?,
                "round_cap" => cfg.round_cap = scalar(key, value, line)?,
                "seed" => cfg.seed = scalar(key, value, line)?,
                "kappa" => cfg.kappa = scalar(key, value, line)?,
                "delta" => cfg.delta = scalar(key, value, line)?,
                "n_bound" => cfg.n_bound = Some(scalar(key, value, line)?),
                "default_key" => {
                    cfg.default_key = match value {
                        "auto" => KeySetting::Auto,
                        "default" => KeySetting::Default,
                        _ => KeySetting::Explicit(list(key, value, line)?),
                    }
                }
                "security_degrees" => cfg.security_degrees = Some(list(key, value, line)?),
                "initial_states" => cfg.initial_states = Some(list(key, value, line)?),
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon {} must be positive", cfg.epsilon)));
        }
        Ok(cfg)
    }
}
