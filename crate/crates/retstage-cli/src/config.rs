//! Flat `key = value` run configuration.
//!
//! Keys are section-prefixed with the subcommand name (`tsne.perplexity`),
//! except the global `seed`. Unknown keys are rejected at parse time.
//! Precedence: command-line flag, then config file, then built-in default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use retstage::error::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "synth.per-class",
    "synth.separation",
    "synth.sigma",
    "synth.missing-rate",
    "synth.image-side",
    "prep.ratio",
    "embed.encoder",
    "perturb.per-class",
    "perturb.rotation",
    "perturb.blur-kernel",
    "perturb.blur-sigma-min",
    "perturb.blur-sigma-max",
    "perturb.brightness",
    "perturb.contrast",
    "perturb.saturation",
    "train-tabular.epochs",
    "train-tabular.batch-size",
    "train-tabular.lr",
    "train-fusion.per-class",
    "train-fusion.epochs",
    "train-fusion.batch-size",
    "train-fusion.lr",
    "train-fusion.folds",
    "train-deferral.epochs",
    "train-deferral.batch-size",
    "train-deferral.lr",
    "train-deferral.margin",
    "train-deferral.val-fraction",
    "score.threshold",
    "tsne.perplexity",
    "tsne.iterations",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = retstage::util::read_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut values = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("config line {}: expected 'key = value'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(format!(
                    "config line {}: unknown key '{key}'",
                    line_no + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(format!(
                    "config line {}: duplicate key '{key}'",
                    line_no + 1
                )));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        debug_assert!(KNOWN_KEYS.contains(&key), "undocumented key {key}");
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::config(format!("config key '{key}': bad value '{raw}'"))
            }),
        }
    }
}

/// Flag beats config beats default.
pub fn resolve<T: FromStr>(
    flag: Option<T>,
    cfg: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(cfg.get::<T>(key)?.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = ConfigFile::parse(
            "# run config\nseed = 9\ntsne.perplexity = 12.5  # trailing comment\n\n",
        )
        .unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(9));
        assert_eq!(cfg.get::<f64>("tsne.perplexity").unwrap(), Some(12.5));
        assert_eq!(cfg.get::<f64>("score.threshold").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("bogus.key = 1").is_err());
        let cfg = ConfigFile::parse("seed = notanumber").unwrap();
        assert!(cfg.get::<u64>("seed").is_err());
    }

    #[test]
    fn flag_beats_config_beats_default() {
        let cfg = ConfigFile::parse("score.threshold = 0.6").unwrap();
        assert_eq!(resolve(Some(0.9), &cfg, "score.threshold", 0.8).unwrap(), 0.9);
        assert_eq!(resolve(None, &cfg, "score.threshold", 0.8).unwrap(), 0.6);
        let empty = ConfigFile::default();
        assert_eq!(resolve::<f64>(None, &empty, "score.threshold", 0.8).unwrap(), 0.8);
    }
}
