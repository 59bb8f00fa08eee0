//! `key=value` experiment configuration: a config file overlaid by command
//! line pairs.

use std::collections::BTreeMap;
use std::str::FromStr;

use pomdp_core::{Belief, FinitePomdp};

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Lines `key = value`; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.insert(line).map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn insert(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("empty key in `{pair}`"));
        }
        self.values.insert(k.to_string(), v.to_string());
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.optional(key)?.ok_or_else(|| CliError::Config(format!("`{key}` is required")))
    }

    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>, CliError> {
        let v = self.raw(key).unwrap_or(default).to_string();
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect()
    }

    /// Unit interval check shared by discount factors.
    pub fn beta(&self, default: f64) -> Result<f64, CliError> {
        let b = self.get("beta", default)?;
        if !(b > 0.0 && b < 1.0) {
            return Err(CliError::Config(format!("`beta` = {b} must lie in (0, 1)")));
        }
        Ok(b)
    }

    pub fn positive(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let v = self.get(key, default)?;
        if v == 0 {
            return Err(CliError::Config(format!("`{key}` must be at least 1")));
        }
        Ok(v)
    }

    /// `uniform`, `invariant`, `dirac:<state>` or comma-separated weights.
    pub fn belief(&self, key: &str, default: &str, model: &FinitePomdp) -> Result<Belief, CliError> {
        let spec = self.raw(key).unwrap_or(default).to_string();
        let n = model.n_states();
        let bad = |why: String| CliError::Config(format!("`{key}` = `{spec}`: {why}"));
        match spec.as_str() {
            "uniform" => Ok(Belief::uniform(n)),
            "invariant" => Ok(pomdp_core::markov::invariant_prior(model)),
            s if s.starts_with("dirac:") => {
                let name = &s[6..];
                let x = model
                    .state_names()
                    .iter()
                    .position(|v| v == name)
                    .or_else(|| name.parse().ok().filter(|x| *x < n))
                    .ok_or_else(|| bad("unknown state".into()))?;
                Ok(Belief::dirac(n, x))
            }
            s => {
                let w: Vec<f64> = s
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(e.to_string()))?;
                Belief::new(w).map_err(|e| bad(e.to_string()))
            }
        }
    }

    /// Resolved key/value pairs, sorted.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    /// Supplied keys outside `allowed`.
    pub fn unknown(&self, allowed: &[&str]) -> Vec<String> {
        self.values.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect()
    }
}
