use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::acquisition::{Mode, Rule};
use crate::al_loop::ExperimentConfig;

/// Declarative description of a sweep, stored as TOML.
///
/// ```toml
/// dataset = "reference.aloe"
/// output = "out/reference"
/// strategies = ["smallest-margin", "random"]
/// modes = ["class-aware"]
///
/// [experiment]
/// rounds = 50
/// runs = 10
/// run_seed = 1
///
/// [experiment.train]
/// epochs = 100
/// learning_rate = 0.001
/// ```
///
/// `experiment.strategy` is ignored by sweeps: each (strategy, mode) cell
/// overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub strategies: Vec<Rule>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    /// Run replicas on a thread pool. Results do not depend on it.
    #[serde(default)]
    pub parallel: bool,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::ClassAware]
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Manifest(e.to_string()))
    }

    /// Loads a manifest; relative `dataset` / `output` paths resolve against
    /// the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut manifest = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if manifest.dataset.is_relative() {
            manifest.dataset = base.join(&manifest.dataset);
        }
        if manifest.output.is_relative() {
            manifest.output = base.join(&manifest.output);
        }
        Ok(manifest)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Manifest(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.strategies.is_empty() {
            return Err(HarnessError::Manifest("strategies must not be empty".into()));
        }
        if self.modes.is_empty() {
            return Err(HarnessError::Manifest("modes must not be empty".into()));
        }
        if !self.dataset.exists() {
            return Err(HarnessError::Manifest(format!(
                "dataset {} does not exist",
                self.dataset.display()
            )));
        }
        self.experiment.validate()?;
        Ok(())
    }
}

/// Named round/run budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 25 rounds, 3 runs.
    Quick,
    /// 100 rounds, 10 runs.
    Full,
}

impl Profile {
    pub fn apply(self, config: &mut ExperimentConfig) {
        let (rounds, runs) = match self {
            Profile::Quick => (25, 3),
            Profile::Full => (100, 10),
        };
        config.rounds = rounds;
        config.runs = runs;
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Quick => "quick",
            Profile::Full => "full",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            other => Err(format!("unknown profile {other:?} (expected quick or full)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_and_nested() {
        let m = RunManifest::from_toml(
            r#"
            dataset = "d.aloe"
            output = "out"
            strategies = ["smallest-margin", "random"]

            [experiment]
            rounds = 7
            run_seed = 1

            [experiment.train]
            epochs = 12
            "#,
        )
        .unwrap();
        assert_eq!(m.strategies, vec![Rule::SmallestMargin, Rule::Random]);
        assert_eq!(m.modes, vec![Mode::ClassAware]);
        assert_eq!(m.experiment.rounds, 7);
        assert_eq!(m.experiment.seeds_per_class, 5);
        assert_eq!(m.experiment.train.epochs, 12);
        assert_eq!(m.experiment.train.learning_rate, 1e-3);
        let back = RunManifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_keys_and_strategies_rejected() {
        assert!(RunManifest::from_toml("dataset='a'\noutput='b'\nstrategies=['margin']").is_err());
        assert!(RunManifest::from_toml("dataset='a'\noutput='b'\nstrategies=['random']\nrondos=3").is_err());
    }

    #[test]
    fn profiles() {
        let mut c = ExperimentConfig::default();
        Profile::Quick.apply(&mut c);
        assert_eq!((c.rounds, c.runs), (25, 3));
        Profile::Full.apply(&mut c);
        assert_eq!((c.rounds, c.runs), (100, 10));
    }
}
