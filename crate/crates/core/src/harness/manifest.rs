use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, GameKind};
use crate::error::{Error, Result};
use crate::meanings::GameConfig;
use crate::nil::NilConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Train one pair per seed and dump its language.
    Emerge,
    /// Train on a split and track held-out accuracy.
    Generalise,
    /// Fresh listeners and speakers learning fixed languages.
    LearningSpeed,
    /// Iterated learning against plain training.
    NilCompare,
    /// Iterated learning on linear count inputs with probe tracking.
    LinearNil,
    /// Shared-numeral significance test on reference languages.
    Significance,
    /// Topographic similarity of reference languages.
    Toposim,
}

impl Recipe {
    pub const ALL: [Recipe; 7] = [
        Recipe::Emerge,
        Recipe::Generalise,
        Recipe::LearningSpeed,
        Recipe::NilCompare,
        Recipe::LinearNil,
        Recipe::Significance,
        Recipe::Toposim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Emerge => "emerge",
            Recipe::Generalise => "generalise",
            Recipe::LearningSpeed => "learning-speed",
            Recipe::NilCompare => "nil-compare",
            Recipe::LinearNil => "linear-nil",
            Recipe::Significance => "significance",
            Recipe::Toposim => "toposim",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Recipe::ALL.iter().map(|r| r.name()).collect();
                Error::Refused(format!(
                    "unknown recipe {s:?}; known recipes: {}",
                    known.join(", ")
                ))
            })
    }
}

/// Options of the learning-speed recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSpeedOptions {
    /// Accuracy a learner must reach.
    pub level: f64,
    /// Also train a pair and test its emergent language.
    pub emergent: bool,
    /// Also train fresh speakers, not only listeners.
    pub speakers: bool,
    /// Partially scrambled structured languages, by scrambled fraction.
    pub scramble: Vec<f64>,
}

impl Default for LearningSpeedOptions {
    fn default() -> Self {
        Self {
            level: 0.9,
            emergent: true,
            speakers: true,
            scramble: Vec::new(),
        }
    }
}

/// Probe languages tracked by the linear-nil recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeOptions {
    pub scramble: Vec<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            scramble: vec![0.25, 0.5, 0.75],
        }
    }
}

/// Everything a run needs; artifacts are a function of this and the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub recipe: Recipe,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub nil: Option<NilConfig>,
    #[serde(default = "default_kind")]
    pub game_kind: GameKind,
    /// Training fraction for `generalise`.
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub learning_speed: LearningSpeedOptions,
    #[serde(default)]
    pub probes: ProbeOptions,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_version")]
    pub version: String,
}

fn default_kind() -> GameKind {
    GameKind::Select
}

fn default_ratio() -> f64 {
    0.8
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

impl RunManifest {
    pub fn new(recipe: Recipe, seeds: Vec<u64>) -> Self {
        Self {
            recipe,
            seeds,
            game: GameConfig::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
            nil: None,
            game_kind: default_kind(),
            split_ratio: default_ratio(),
            learning_speed: LearningSpeedOptions::default(),
            probes: ProbeOptions::default(),
            output_dir: default_out(),
            version: default_version(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Refused(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Refused(format!("invalid manifest {}: {e}", path.display())))
    }

    /// Checks everything that can be checked before training starts.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.seeds.is_empty() {
            return Err(Error::Refused("manifest lists no seeds".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::Refused(format!("seed {s} is listed twice")));
            }
        }
        let warnings = self.game.validate()?;
        self.agent.validate()?;
        self.train.validate()?;
        if let Some(nil) = &self.nil {
            nil.validate()?;
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Refused(format!(
                "split ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        let ls = &self.learning_speed;
        if !(ls.level > 0.0 && ls.level <= 1.0) {
            return Err(Error::Refused(format!(
                "learning-speed level {} outside (0, 1]",
                ls.level
            )));
        }
        for f in ls.scramble.iter().chain(&self.probes.scramble) {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::Refused(format!("scramble fraction {f} outside [0, 1]")));
            }
        }
        Ok(warnings)
    }

    pub fn nil_config(&self) -> NilConfig {
        self.nil.unwrap_or(NilConfig {
            game: self.train,
            ..NilConfig::default()
        })
    }

    /// Directory holding this recipe's artifacts.
    pub fn recipe_dir(&self) -> PathBuf {
        self.output_dir.join(self.recipe.name())
    }
}
