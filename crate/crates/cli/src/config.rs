//! `key = value` configuration files. Blank lines and `#` comments are
//! ignored. Training keys apply to every selected experiment.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use morphlab::xfer::ExperimentConfig;

pub const KEYS: &[&str] = &[
    "experiment",
    "condition",
    "seeds",
    "jobs",
    "out",
    "epochs1",
    "epochs2",
    "pretrain_epochs",
    "phase1_threshold",
    "learning_rate",
    "momentum",
    "init_min",
    "init_max",
    "eval_every",
    "root_hidden",
    "inflection_hidden",
    "production_hidden",
    "feedback_decay",
];

/// Values collected from a config file, all optional.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    pub entries: Vec<(String, String)>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", n + 1))?;
            let (k, v) = (k.trim().replace('-', "_"), v.trim().to_owned());
            if !KEYS.contains(&k.as_str()) {
                bail!(
                    "line {}: unknown key `{k}` (known keys: {})",
                    n + 1,
                    KEYS.join(", ")
                );
            }
            entries.push((k, v));
        }
        Ok(FileConfig { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.get("out").map(PathBuf::from)
    }

    /// Applies the training keys to `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        for (k, v) in &self.entries {
            let bad = |e: &dyn std::fmt::Display| anyhow!("bad value `{v}` for `{k}`: {e}");
            let float = || v.parse::<f64>().map_err(|e| bad(&e));
            let int = || v.parse::<usize>().map_err(|e| bad(&e));
            match k.as_str() {
                "epochs1" => cfg.epochs1 = int()?,
                "epochs2" => cfg.epochs2 = int()?,
                "pretrain_epochs" => cfg.pretrain_epochs = int()?,
                "phase1_threshold" => cfg.phase1_threshold = float()?,
                "learning_rate" => {
                    cfg.perception.train.learning_rate = float()?;
                    cfg.production.train.learning_rate = float()?;
                }
                "momentum" => {
                    cfg.perception.train.momentum = float()?;
                    cfg.production.train.momentum = float()?;
                }
                "init_min" => {
                    cfg.perception.train.init_range.0 = float()?;
                    cfg.production.train.init_range.0 = float()?;
                }
                "init_max" => {
                    cfg.perception.train.init_range.1 = float()?;
                    cfg.production.train.init_range.1 = float()?;
                }
                "eval_every" => {
                    cfg.perception.train.eval_every = int()?;
                    cfg.production.train.eval_every = int()?;
                }
                "root_hidden" => cfg.perception.root_hidden = int()?,
                "inflection_hidden" => cfg.perception.inflection_hidden = int()?,
                "production_hidden" => cfg.production.hidden = int()?,
                "feedback_decay" => cfg.production.feedback_decay = float()?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// `10` means seeds 0..10, `3..7` a half-open range, `1,4,9` an explicit list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        (a..b).collect()
    } else if spec.contains(',') {
        spec.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()?
    } else {
        (0..spec.parse::<u64>()?).collect()
    };
    if seeds.is_empty() {
        bail!("seed spec `{spec}` selects no seeds");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        bail!("seed spec `{spec}` repeats a seed");
    }
    Ok(seeds)
}

/// `3`, `1,2,5` or `all`.
pub fn parse_experiments(spec: &str) -> Result<Vec<u8>> {
    if spec.trim() == "all" {
        return Ok(morphlab::xfer::EXPERIMENTS.collect());
    }
    spec.split(',')
        .map(|s| {
            let n: u8 = s.trim().parse().map_err(|_| {
                anyhow!("`{s}` is not an experiment number; valid experiments are 1..5")
            })?;
            if !morphlab::xfer::EXPERIMENTS.contains(&n) {
                bail!("unknown experiment {n}; valid experiments are 1..5");
            }
            Ok(n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("9, 1").unwrap(), vec![9, 1]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("1,1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn experiments() {
        assert_eq!(parse_experiments("all").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_experiments("2,4").unwrap(), vec![2, 4]);
        assert!(parse_experiments("9")
            .unwrap_err()
            .to_string()
            .contains("1..5"));
    }

    #[test]
    fn file_keys() {
        let f =
            FileConfig::parse("# c\nepochs2 = 7\nlearning-rate=0.2 # inline\n\nout = x").unwrap();
        let mut cfg = ExperimentConfig::for_experiment(1);
        f.apply(&mut cfg).unwrap();
        assert_eq!(cfg.epochs2, 7);
        assert_eq!(cfg.perception.train.learning_rate, 0.2);
        assert_eq!(cfg.production.train.learning_rate, 0.2);
        assert_eq!(f.out(), Some(PathBuf::from("x")));
        assert!(FileConfig::parse("nonsense = 1").is_err());
        assert!(FileConfig::parse("epochs2").is_err());
        let bad = FileConfig::parse("epochs1 = -3").unwrap();
        assert!(bad.apply(&mut cfg).is_err());
    }
}
