//! Run configuration. Values come from command-line flags, then an optional
//! TOML file, then the built-in defaults.
//!
//! The file is flat:
//!
//! ```toml
//! gamma = 1.0
//! alpha = 1.0
//! kappa = 100.0
//! sigma = 1.0
//! lambda = 1.0
//! L = 20
//! iterations = 250
//! burn_in = 250
//! seeds = [0, 1, 2]
//! corpus = "data/corpus.jsonl"
//! format = "jsonl"
//! truth = "data/truth.jsonl"
//! model = "out/model.json"
//! out_dir = "out"
//! min_prob = 0.05
//! ```

use std::path::{Path, PathBuf};

use immc_core::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, IoError, Result};
use crate::io::CorpusFormat;

pub const DEFAULT_ITERATIONS: usize = 250;
pub const DEFAULT_BURN_IN: usize = 250;
pub const DEFAULT_MIN_PROB: f64 = 0.05;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "IMMC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "immc-out";

/// Every setting optional; used both for the file and for the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(rename = "L")]
    pub truncation: Option<usize>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub corpus: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub truth: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub min_prob: Option<f64>,
}

impl PartialConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    /// Fill every unset field of `self` from `lower`.
    pub fn or(self, lower: PartialConfig) -> PartialConfig {
        PartialConfig {
            gamma: self.gamma.or(lower.gamma),
            alpha: self.alpha.or(lower.alpha),
            kappa: self.kappa.or(lower.kappa),
            sigma: self.sigma.or(lower.sigma),
            lambda: self.lambda.or(lower.lambda),
            truncation: self.truncation.or(lower.truncation),
            iterations: self.iterations.or(lower.iterations),
            burn_in: self.burn_in.or(lower.burn_in),
            seeds: self.seeds.or(lower.seeds),
            corpus: self.corpus.or(lower.corpus),
            format: self.format.or(lower.format),
            truth: self.truth.or(lower.truth),
            model: self.model.or(lower.model),
            out_dir: self.out_dir.or(lower.out_dir),
            min_prob: self.min_prob.or(lower.min_prob),
        }
    }

    pub fn resolve(self) -> RunConfig {
        let d = Hyperparams::default();
        let seeds = self.seeds.filter(|s| !s.is_empty()).unwrap_or_else(|| vec![d.seed]);
        RunConfig {
            hyperparams: Hyperparams {
                gamma: self.gamma.unwrap_or(d.gamma),
                alpha: self.alpha.unwrap_or(d.alpha),
                kappa: self.kappa.unwrap_or(d.kappa),
                sigma: self.sigma.unwrap_or(d.sigma),
                lambda: self.lambda.unwrap_or(d.lambda),
                truncation: self.truncation.unwrap_or(d.truncation),
                seed: seeds[0],
            },
            iterations: self.iterations.unwrap_or(DEFAULT_ITERATIONS),
            burn_in: self.burn_in.unwrap_or(DEFAULT_BURN_IN),
            seeds,
            corpus: self.corpus,
            format: self.format,
            truth: self.truth,
            model: self.model,
            out_dir: self.out_dir.unwrap_or_else(default_out_dir),
            min_prob: self.min_prob.unwrap_or(DEFAULT_MIN_PROB),
        }
    }
}

/// `$IMMC_OUT_DIR`, or `immc-out` in the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub hyperparams: Hyperparams,
    pub iterations: usize,
    pub burn_in: usize,
    pub seeds: Vec<u64>,
    pub corpus: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub truth: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub min_prob: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: PartialConfig = toml::from_str("kappa = 5.0\nL = 7\niterations = 10\nseeds = [3, 4]").unwrap();
        let flags = PartialConfig { truncation: Some(2), ..Default::default() };
        let c = flags.or(file).resolve();
        assert_eq!(c.hyperparams.truncation, 2);
        assert_eq!(c.hyperparams.kappa, 5.0);
        assert_eq!(c.hyperparams.gamma, 1.0);
        assert_eq!(c.iterations, 10);
        assert_eq!(c.burn_in, DEFAULT_BURN_IN);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.hyperparams.seed, 3);
    }

    #[test]
    fn defaults_match_the_pinned_hyperparameters() {
        let c = PartialConfig::default().resolve();
        assert_eq!(c.hyperparams, Hyperparams::default());
        assert_eq!((c.iterations, c.burn_in), (250, 250));
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.min_prob, 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PartialConfig>("kapa = 1.0").is_err());
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "gamma = 1.0\nalpha = \"x\"\n").unwrap();
        match PartialConfig::load(&path) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
