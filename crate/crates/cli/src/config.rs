//! Run configuration: a JSON file with one block per command, overridden by
//! flags, resolved once and echoed into the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soma_forge::network::NetworkConfig;
use soma_forge::reid_eval::{CameraFilter, Shot};
use soma_forge::synthset::{GenConfig, Split};
use soma_forge::training::TrainConfig;
use soma_forge::{Error, Result};

pub const CONFIG_ECHO: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives generation, splitting, initialization, training and the
    /// evaluation draws. Block-level seeds are overwritten with it.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dataset: DatasetBlock,
    pub network: NetworkBlock,
    pub training: TrainConfig,
    pub eval: EvalBlock,
    pub probe: ProbeBlock,
    pub ablation: AblationBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            threads: None,
            dataset: DatasetBlock::default(),
            network: NetworkBlock::default(),
            training: TrainConfig::default(),
            eval: EvalBlock::default(),
            probe: ProbeBlock::default(),
            ablation: AblationBlock::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    pub generate: GenConfig,
    /// An existing dataset directory. `genset` reads it when reducing;
    /// every other command reads its images from it.
    pub dir: Option<PathBuf>,
    /// Train, validation and test fractions within each subject.
    pub split: [f64; 3],
    pub reduce_poses: Option<usize>,
    pub reduce_subjects: Option<usize>,
    /// Subjects whose images all go to the test split; the others are
    /// split between training and validation in the ratio of `split`.
    pub holdout_subjects: Option<usize>,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            generate: GenConfig::default(),
            dir: None,
            split: [0.7, 0.15, 0.15],
            reduce_poses: None,
            reduce_subjects: None,
            holdout_subjects: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Mini,
    /// 16×8 input; for smoke tests.
    Tiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkBlock {
    pub profile: Profile,
    /// Images are resampled to this size before entering the mini network.
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        Self {
            profile: Profile::Mini,
            input_height: 64,
            input_width: 32,
        }
    }
}

impl NetworkBlock {
    pub fn build(&self, num_classes: usize) -> NetworkConfig {
        match self.profile {
            Profile::Mini => {
                NetworkConfig::mini_for_input(num_classes, self.input_height, self.input_width)
            }
            Profile::Tiny => NetworkConfig::tiny(num_classes),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub protocol: Shot,
    pub rounds: usize,
    pub filter: CameraFilter,
    pub split: Split,
    /// Length of the reported CMC curve.
    pub max_rank: usize,
    pub batch_size: usize,
    /// Also write an SVG plot of the CMC curve.
    pub plot: bool,
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self {
            protocol: Shot::SingleShot,
            rounds: 10,
            filter: CameraFilter::None,
            split: Split::Test,
            max_rank: 20,
            batch_size: 32,
            plot: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBlock {
    /// Attribute rule such as `gender==female` or `somatotype.endo>0.6`.
    pub attribute: Option<String>,
    pub k: usize,
    /// 0 skips the permutation test.
    pub permutations: usize,
    /// Share of the images used to localize neurons; the rest are explored.
    pub localization: f64,
    /// Restrict to one split; all records when absent.
    pub split: Option<Split>,
    /// Exploration images tiled into the contact sheet.
    pub sheet: usize,
    pub batch_size: usize,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        Self {
            attribute: None,
            k: 10,
            permutations: 1000,
            localization: 0.5,
            split: None,
            sheet: 20,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationBlock {
    /// Share of the base set kept by each matched pair of variants.
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Also train on the unreduced base set.
    pub include_full: bool,
    /// Generation seed of the held-out population the variants are
    /// evaluated on.
    pub test_seed: u64,
    pub test_subjects: usize,
    pub test_clothing: usize,
    pub test_poses: usize,
    /// Train/validation split inside each variant.
    pub val_fraction: f64,
}

impl Default for AblationBlock {
    fn default() -> Self {
        Self {
            fractions: vec![0.4],
            seeds: vec![0, 1, 2],
            include_full: true,
            test_seed: 1000,
            test_subjects: 10,
            test_clothing: 2,
            test_poses: 10,
            val_fraction: 0.15,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Pushes the global seed into every block.
    pub fn resolve(mut self) -> Result<Self> {
        self.dataset.generate.seed = self.seed;
        self.training.seed = self.seed;
        if self.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        self.training.validate()?;
        Ok(self)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Usage("no output directory (--out)".into()))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.dataset
            .dir
            .as_deref()
            .ok_or_else(|| Error::Usage("no dataset directory (--data)".into()))
    }

    /// Creates the output directory and writes the resolved configuration.
    pub fn echo(&self) -> Result<()> {
        let out = self.out_dir()?;
        std::fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
        let path = out.join(CONFIG_ECHO);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn echo_parses_back() {
        let mut c = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        c.probe.attribute = Some("gender==female".into());
        let c = c.resolve().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert_eq!(c.training.seed, 9);
        assert_eq!(c.dataset.generate.seed, 9);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"eval": {"round": 3}}"#).is_err());
    }
}
