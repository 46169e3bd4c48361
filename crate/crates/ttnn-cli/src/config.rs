//! Flat `key = value` configuration with dotted keys.
//!
//! A config file is plain text: one `key = value` pair per line, `#`
//! comments, blank lines ignored. Command-line flags override file
//! values, defaults fill the rest, and the fully resolved set is echoed
//! to the output directory so every run records exactly what it used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use crate::CommonArgs;

/// Ordered key/value store that tracks which keys were read so typos can
/// be reported after parsing.
#[derive(Debug, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got {line:?}", idx + 1);
            };
            let key = key.trim();
            if key.is_empty() {
                bail!("line {}: empty key", idx + 1);
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key {key:?}", idx + 1);
            }
        }
        Ok(FlatConfig {
            values,
            consumed: BTreeSet::new(),
        })
    }

    /// Sets `key`, replacing any file value (flag overrides).
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Sets `key` only when absent (defaults).
    pub fn set_default(&mut self, key: &str, value: impl Display) {
        self.values
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    /// Whether `key` is set, without marking it as read.
    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn raw(&mut self, key: &str) -> Option<&str> {
        let value = self.values.get(key)?;
        self.consumed.insert(key.to_string());
        Some(value.as_str())
    }

    pub fn get_str(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn require_str(&mut self, key: &str) -> Result<String> {
        self.get_str(key)
            .ok_or_else(|| anyhow::anyhow!("{key}: missing required value"))
    }

    pub fn get<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(text) => match text.parse() {
                Ok(value) => Ok(Some(value)),
                Err(e) => bail!("{key}: cannot parse {text:?} ({e})"),
            },
        }
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| anyhow::anyhow!("{key}: missing required value"))
    }

    /// Comma-separated list, e.g. `ranks = 8,8,4`.
    pub fn get_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(text) = self.raw(key).map(str::to_string) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            match part.parse() {
                Ok(value) => out.push(value),
                Err(e) => bail!("{key}: cannot parse list element {part:?} ({e})"),
            }
        }
        Ok(Some(out))
    }

    pub fn require_list<T>(&mut self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get_list(key)?
            .ok_or_else(|| anyhow::anyhow!("{key}: missing required value"))
    }

    /// Errors on any key that was never read; catches misspelled options
    /// before they silently fall back to defaults.
    pub fn reject_unknown(&self) -> Result<()> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            bail!("unrecognized config keys: {}", unknown.join(", "));
        }
        Ok(())
    }

    /// The resolved configuration as sorted `key = value` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    /// Writes the resolved configuration to `dir/config.resolved`.
    pub fn echo_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.resolved");
        fs::write(&path, self.render())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Settings shared by every subcommand, after merging flags over the
/// config file.
#[derive(Debug)]
pub struct CommonSettings {
    pub seed: u64,
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
}

/// Loads the config file named by `--config` (if any) and applies the
/// shared flag overrides.
pub fn resolve_common(common: &CommonArgs) -> Result<FlatConfig> {
    let mut cfg = match &common.config {
        Some(path) => FlatConfig::from_file(path)?,
        None => FlatConfig::new(),
    };
    if let Some(seed) = common.seed {
        cfg.set("seed", seed);
    }
    if let Some(threads) = common.threads {
        cfg.set("threads", threads);
    }
    if let Some(dir) = &common.out_dir {
        cfg.set("out_dir", dir.display());
    }
    Ok(cfg)
}

/// Reads the shared keys out of a merged config, applying defaults.
pub fn take_common(cfg: &mut FlatConfig) -> Result<CommonSettings> {
    cfg.set_default("seed", 42u64);
    cfg.set_default("threads", 1usize);
    let seed = cfg.require("seed")?;
    let threads: usize = cfg.require("threads")?;
    if threads == 0 {
        bail!("threads: must be at least 1");
    }
    let out_dir = cfg.get_str("out_dir").map(PathBuf::from);
    Ok(CommonSettings {
        seed,
        threads,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_dotted_keys() {
        let cfg = FlatConfig::parse(
            "# experiment\n\nopt.lr = 0.05\nlayer.0.kind = tt\n  train.epochs=3  \n",
        )
        .unwrap();
        let mut cfg = cfg;
        assert_eq!(cfg.get_str("opt.lr").as_deref(), Some("0.05"));
        assert_eq!(cfg.require::<usize>("train.epochs").unwrap(), 3);
        assert_eq!(cfg.get_str("layer.0.kind").as_deref(), Some("tt"));
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        let err = FlatConfig::parse("just words\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = FlatConfig::parse("a = 1\na = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn flags_override_and_defaults_fill() {
        let mut cfg = FlatConfig::parse("seed = 1\n").unwrap();
        cfg.set("seed", 2u64); // flag wins
        cfg.set_default("seed", 3u64); // default loses
        cfg.set_default("threads", 4usize);
        let common = take_common(&mut cfg).unwrap();
        assert_eq!(common.seed, 2);
        assert_eq!(common.threads, 4);
    }

    #[test]
    fn unknown_keys_are_reported() {
        let mut cfg = FlatConfig::parse("opt.lr = 0.1\nopt.lrr = 0.2\n").unwrap();
        let _ = cfg.get::<f64>("opt.lr").unwrap();
        let err = cfg.reject_unknown().unwrap_err();
        assert!(err.to_string().contains("opt.lrr"));
    }

    #[test]
    fn lists_parse_with_field_path_errors() {
        let mut cfg = FlatConfig::parse("m = 4, 4 ,4\nbad = 1,x\n").unwrap();
        assert_eq!(cfg.require_list::<usize>("m").unwrap(), vec![4, 4, 4]);
        let err = cfg.require_list::<usize>("bad").unwrap_err();
        assert!(err.to_string().contains("bad"));
        assert!(err.to_string().contains('x'));
    }

    #[test]
    fn render_is_sorted_and_reparseable() {
        let mut cfg = FlatConfig::new();
        cfg.set("b.key", "two words");
        cfg.set("a.key", 1);
        let text = cfg.render();
        assert_eq!(text, "a.key = 1\nb.key = two words\n");
        let mut back = FlatConfig::parse(&text).unwrap();
        assert_eq!(back.get_str("b.key").as_deref(), Some("two words"));
    }
}
