//! Run configuration: one JSON document with a named base profile.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::infer::InferOptions;
use crate::loss::LossWeights;
use crate::model::NetworkConfig;
use crate::render::RenderConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-scale settings.
    #[default]
    Full,
    /// Tiny end-to-end run for plumbing checks.
    Smoke,
    /// CPU-scale run on the synthetic phantom.
    Phantom,
}

impl std::str::FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Profile::Full),
            "smoke" => Ok(Profile::Smoke),
            "phantom" => Ok(Profile::Phantom),
            other => Err(ConfigError::Invalid(format!("unknown profile `{other}` (full, smoke, phantom)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub run_id: String,
    pub output_root: PathBuf,
    pub render: RenderConfig,
    pub net: NetworkConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub infer: InferOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Full)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut cfg = RunConfig {
            profile,
            run_id: "run".into(),
            output_root: PathBuf::from("runs"),
            render: RenderConfig::default(),
            net: NetworkConfig::default(),
            loss: LossWeights::default(),
            train: TrainConfig::default(),
            infer: InferOptions::default(),
        };
        match profile {
            Profile::Full => {}
            Profile::Smoke => {
                cfg.render.k = 32;
                cfg.render.out_size = (64, 64);
                cfg.render.seeds_per_sample = 2;
                cfg.render.seed_scale_range = (0.7, 1.0);
                cfg.net = NetworkConfig::small(8);
                cfg.train.phase1_steps = 20;
                cfg.train.phase2_steps = 20;
                cfg.train.batch_size = 8;
                cfg.train.checkpoint_every = 10;
            }
            Profile::Phantom => {
                cfg.render.k = 400;
                cfg.render.out_size = (128, 128);
                cfg.net = NetworkConfig::small(8);
                cfg.train.phase1_steps = 300;
                cfg.train.phase2_steps = 300;
                cfg.train.batch_size = 8;
                cfg.train.checkpoint_every = 100;
                cfg.train.dice_subset = Some(64);
            }
        }
        cfg
    }

    /// Builds a configuration from a JSON overlay. The overlay's `profile` key
    /// (or `profile` when given) selects the base, and the overlay is merged
    /// into it key by key. Unknown keys are rejected.
    pub fn from_overlay(overlay: &Value, profile: Option<Profile>) -> Result<Self, ConfigError> {
        let chosen = match (profile, overlay.get("profile")) {
            (Some(p), _) => p,
            (None, Some(v)) => serde_json::from_value(v.clone()).map_err(|e| ConfigError::Invalid(format!("profile: {e}")))?,
            (None, None) => Profile::Full,
        };
        let mut base = serde_json::to_value(Self::for_profile(chosen)).expect("config serializes");
        merge(&mut base, overlay);
        base["profile"] = serde_json::to_value(chosen).expect("profile serializes");
        let cfg: RunConfig = serde_json::from_value(base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Option<Profile>) -> Result<Self, ConfigError> {
        let raw = crate::io::read(path)?;
        let overlay: Value = serde_json::from_slice(&raw).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        if !overlay.is_object() {
            return Err(ConfigError::Invalid(format!("{}: top level must be an object", path.display())));
        }
        Self::from_overlay(&overlay, profile)
    }

    /// Sets the render and training seeds together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.render.rng_seed = seed;
        self.train.rng_seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.render.check().map_err(|e| invalid(&e))?;
        self.net.check().map_err(|e| invalid(&e))?;
        self.loss.check().map_err(|e| invalid(&e))?;
        self.train.check().map_err(|e| invalid(&e))?;
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == "." || self.run_id == ".." {
            return Err(ConfigError::Invalid(format!("run_id `{}` is not a plain name", self.run_id)));
        }
        let (h, w) = self.render.out_size;
        if h % 32 != 0 || w % 32 != 0 {
            return Err(ConfigError::Invalid(format!("render.out_size {h}x{w} must be multiples of 32")));
        }
        if !(self.infer.threshold > 0.0 && self.infer.threshold < 1.0) {
            return Err(ConfigError::Invalid("infer.threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root.join(&self.run_id)
    }
}

/// Recursive object merge; non-object values in `overlay` replace those in `base`.
pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
