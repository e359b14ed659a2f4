//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use gl2d::{Gl2dError, Result};

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    raw: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Gl2dError::Parse(format!("config line {}: expected key = value", ln + 1)))?;
            let k = k.trim().replace('-', "_");
            if k.is_empty() {
                return Err(Gl2dError::Parse(format!("config line {}: empty key", ln + 1)));
            }
            raw.insert(k, v.trim().to_string());
        }
        Ok(RunConfig { raw, resolved: BTreeMap::new() })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?),
            None => Ok(RunConfig::default()),
        }
    }

    /// A flag given on the command line wins over the file.
    pub fn set(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.raw.insert(key.to_string(), v.to_string());
        }
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    pub fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw.get(key).cloned() {
            None => Ok(None),
            Some(s) => {
                let v = s
                    .parse()
                    .map_err(|_| Gl2dError::Validation(format!("{key}: cannot parse {s:?}")))?;
                self.record(key, s);
                Ok(Some(v))
            }
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T> {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.opt(key)?
            .ok_or_else(|| Gl2dError::Validation(format!("missing required key {key}")))
    }

    pub fn list(&mut self, key: &str, default: &str) -> Result<Vec<f64>> {
        let s = self.get(key, default.to_string())?;
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Gl2dError::Validation(format!("{key}: bad number {t:?}")))
            })
            .collect()
    }

    /// Fails on keys no resolver asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.raw.keys().filter(|k| !self.resolved.contains_key(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Gl2dError::Validation(format!("unknown keys {unknown:?}")))
        }
    }

    pub fn to_text(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::parse("# run\nkappa = 0.3\nn=64 # grid\neps-hint = 0.1\n").unwrap();
        c.set("n", Some(128));
        c.set("kappa", None::<f64>);
        assert_eq!(c.get("kappa", 0.25).unwrap(), 0.3);
        assert_eq!(c.get("n", 16usize).unwrap(), 128);
        assert_eq!(c.get("eps_hint", 0.2).unwrap(), 0.1);
        assert_eq!(c.get("tol", 1e-3).unwrap(), 1e-3);
        c.finish().unwrap();
        assert_eq!(c.to_text(), "eps_hint = 0.1\nkappa = 0.3\nn = 128\ntol = 0.001\n");
    }

    #[test]
    fn rejects_garbage() {
        assert!(RunConfig::parse("kappa 0.3").is_err());
        assert!(RunConfig::parse(" = 2").is_err());
        let mut c = RunConfig::parse("kappa = x\nextra = 1").unwrap();
        assert!(c.get("kappa", 0.25).is_err());
        assert!(c.finish().is_err());
        assert!(c.require::<f64>("missing").is_err());
    }
}
