use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::AttackConfig;
use crate::classifier::TrainConfig;
use crate::data::{SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::iwgs::IwgsConfig;
use crate::rng::derive_seed;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files { cube: PathBuf, labels: PathBuf },
}

/// One JSON document driving every command. Seeds inside the component
/// sections are overwritten with streams derived from `seed`; see [`resolved`](Self::resolved).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub data: DataSource,
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub iwgs: IwgsConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "default_patch_sizes")]
    pub patch_sizes: Vec<usize>,
    /// Patch size of single-pipeline commands; defaults to the first sweep size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    /// Cap the training split at `quota` per class before training.
    #[serde(default)]
    pub undersample: bool,
    #[serde(default = "default_quota")]
    pub quota: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub palette_seed: Option<u64>,
    pub seed: u64,
}

fn default_patch_sizes() -> Vec<usize> {
    (1..=15).step_by(2).collect()
}

fn default_quota() -> usize {
    50
}

fn default_repeats() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    /// Small separable synthetic scene with defaults everywhere else.
    pub fn synthetic(spec: SyntheticSpec, seed: u64) -> Self {
        Self {
            version: CONFIG_VERSION,
            data: DataSource::Synthetic(spec),
            split: SplitSpec::uniform(20, 0),
            train: TrainConfig::default(),
            iwgs: IwgsConfig::default(),
            attack: AttackConfig::default(),
            patch_sizes: default_patch_sizes(),
            patch_size: None,
            undersample: false,
            quota: default_quota(),
            repeats: default_repeats(),
            class_names: None,
            output_dir: default_output_dir(),
            palette_seed: None,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads a config; relative data paths resolve against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (DataSource::Files { cube, labels }, Some(dir)) = (&mut config.data, path.parent()) {
            for p in [cube, labels] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.patch_sizes.is_empty() {
            return Err(Error::Config("patch_sizes is empty".into()));
        }
        for w in self.patch_sizes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(
                    "patch_sizes must be strictly ascending".into(),
                ));
            }
        }
        for &p in self.patch_sizes.iter().chain(self.patch_size.iter()) {
            if p % 2 == 0 {
                return Err(Error::Config(format!("patch size {p} is not odd")));
            }
        }
        if self.quota == 0 || self.repeats == 0 {
            return Err(Error::Config("quota and repeats must be >= 1".into()));
        }
        self.train.validate()?;
        self.attack.validate()?;
        if self.iwgs.num_bands == 0 || self.iwgs.eval_subset_size == 0 {
            return Err(Error::Config(
                "iwgs.num_bands and eval_subset_size must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Copy with every component seed derived from the master seed.
    pub fn resolved(&self) -> Self {
        self.reseeded(self.seed)
    }

    /// Like [`resolved`](Self::resolved) but with split, training, selection
    /// and attack seeds drawn from `stream`; synthetic data keeps the master seed.
    pub fn reseeded(&self, stream: u64) -> Self {
        let mut c = self.clone();
        if let DataSource::Synthetic(spec) = &mut c.data {
            spec.seed = derive_seed(self.seed, "synthetic");
        }
        c.split.seed = derive_seed(stream, "split");
        c.train.seed = derive_seed(stream, "train");
        c.iwgs.seed = derive_seed(stream, "iwgs");
        c.attack.seed = derive_seed(stream, "attack");
        c
    }

    pub fn pipeline_patch_size(&self) -> usize {
        self.patch_size.unwrap_or(self.patch_sizes[0])
    }

    pub fn palette_seed(&self) -> u64 {
        self.palette_seed.unwrap_or(self.seed)
    }

    /// Copy whose output directory is `.`, the form persisted next to run artifacts.
    pub fn relocated(&self) -> Self {
        Self {
            output_dir: PathBuf::from("."),
            ..self.clone()
        }
    }

    /// SHA-256 of the compact JSON serialization, ignoring the output directory.
    pub fn hash(&self) -> String {
        hash_json(&self.relocated())
    }
}

pub(crate) fn hash_json(value: &impl Serialize) -> String {
    let text = serde_json::to_string(value).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig::synthetic(
            SyntheticSpec {
                height: 8,
                width: 8,
                bands: 8,
                num_classes: 2,
                informative_bands: vec![2],
                noise_sigma: 0.05,
                seed: 0,
            },
            3,
        )
    }

    #[test]
    fn hash_stable_across_reserialization() {
        let c = sample();
        let again = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let mut other = c.clone();
        other.seed = 4;
        assert_ne!(c.hash(), other.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(matches!(
            ExperimentConfig::from_json(&v.to_string()),
            Err(Error::Config(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["train"]["momentum"] = serde_json::json!(0.9);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn validation() {
        assert!(sample().validate().is_ok());
        let mut c = sample();
        c.patch_sizes = vec![3, 1];
        assert!(c.validate().is_err());
        c.patch_sizes = vec![2];
        assert!(c.validate().is_err());
        let mut c = sample();
        c.version = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_derive_from_master() {
        let a = sample().resolved();
        let b = sample().resolved();
        assert_eq!(a, b);
        assert_ne!(a.train.seed, a.iwgs.seed);
        let mut c = sample();
        c.seed = 99;
        assert_ne!(c.resolved().train.seed, a.train.seed);
    }
}
