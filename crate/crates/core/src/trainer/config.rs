use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::BlockGrid;
use crate::encoding::{select_encoder, Encoder, AMPLITUDE_DIM};
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, NUM_CLASSES};
use crate::qcnn::{CircuitLayout, KeepRule, LayoutOptions, Pairing};

use super::adam::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// IDX image/label pairs (optionally gzipped) with a fixed train/test split.
    Idx,
    /// One CSV file, split by `test_fraction`.
    Csv,
    /// Generated clusters (see [`crate::data::synthetic_clusters`]).
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderChoice {
    Amplitude,
    Angle,
    /// Picked from the feature dimension (`feature_dim`, default 256).
    Auto,
}

/// Experiment description, read from a flat `key = value` TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub source: Source,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
    pub test_fraction: f64,
    pub synthetic_noise: f64,
    pub classes: Vec<u8>,
    pub train_size: usize,
    pub test_size: usize,

    pub encoder: EncoderChoice,
    pub feature_dim: usize,
    pub block_rows: usize,
    pub block_cols: usize,

    pub recycle: bool,
    pub expansion: usize,
    pub final_layer: bool,
    pub pairing: Pairing,
    pub keep: KeepRule,
    pub pool1_survivors: Option<Vec<usize>>,
    pub pool2_survivors: Option<Vec<usize>>,

    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Test accuracy is recorded every this many iterations (and at the end).
    pub eval_every: usize,
    pub out: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            source: Source::Synthetic,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            csv_path: None,
            test_fraction: 0.2,
            synthetic_noise: 0.1,
            classes: vec![0, 1, 2, 3],
            train_size: 1000,
            test_size: 500,
            encoder: EncoderChoice::Auto,
            feature_dim: AMPLITUDE_DIM,
            block_rows: 2,
            block_cols: 4,
            recycle: true,
            expansion: 2,
            final_layer: false,
            pairing: Pairing::Brick,
            keep: KeepRule::Lower,
            pool1_survivors: None,
            pool2_survivors: None,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 16,
            iterations: 600,
            seed: 0,
            eval_every: 50,
            out: PathBuf::from("out"),
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.train_images);
        fix(&mut cfg.train_labels);
        fix(&mut cfg.test_images);
        fix(&mut cfg.test_labels);
        fix(&mut cfg.csv_path);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes.len() != NUM_CLASSES {
            return bad(format!("need {NUM_CLASSES} classes, got {:?}", self.classes));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return bad(format!("duplicate class {c}"));
            }
        }
        if self.train_size == 0 || self.test_size == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("train_size, test_size, batch_size and eval_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction {} outside [0, 1)", self.test_fraction));
        }
        if !(0.0..=0.5).contains(&self.synthetic_noise) {
            return bad(format!("synthetic_noise {} outside [0, 0.5]", self.synthetic_noise));
        }
        match self.source {
            Source::Idx => {
                if self.train_images.is_none()
                    || self.train_labels.is_none()
                    || self.test_images.is_none()
                    || self.test_labels.is_none()
                {
                    return bad("idx source needs train_images, train_labels, test_images, test_labels".into());
                }
            }
            Source::Csv => {
                if self.csv_path.is_none() {
                    return bad("csv source needs csv_path".into());
                }
            }
            Source::Synthetic => {}
        }
        self.adam().validate()?;
        self.head_config().validate()?;
        self.encoder()?;
        self.layout()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            classes: NUM_CLASSES,
            expansion: self.expansion,
            final_layer: self.final_layer,
            recycle: self.recycle,
        }
    }

    pub fn encoder(&self) -> Result<Encoder> {
        match self.encoder {
            EncoderChoice::Amplitude => Ok(Encoder::Amplitude),
            EncoderChoice::Angle => Ok(Encoder::Angle),
            EncoderChoice::Auto => select_encoder(self.feature_dim),
        }
    }

    pub fn grid(&self) -> BlockGrid {
        BlockGrid { rows: self.block_rows, cols: self.block_cols }
    }

    pub fn layout(&self) -> Result<CircuitLayout> {
        CircuitLayout::build(&LayoutOptions {
            pairing: self.pairing,
            keep: self.keep,
            pool1_survivors: self.pool1_survivors.clone(),
            pool2_survivors: self.pool2_survivors.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = TrainConfig::parse("seed = 3\nrecycle = false\npool2_survivors = [7, 1]\npool1_survivors = [1, 3, 5, 7]\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert!(!cfg.recycle);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.iterations, 600);
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.layout().unwrap().retained_wires, [7, 1]);
        assert_eq!(cfg.encoder().unwrap(), Encoder::Amplitude);
        assert_eq!(TrainConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_invalid() {
        assert!(TrainConfig::parse("classes = [1, 1, 2, 3]").is_err());
        assert!(TrainConfig::parse("classes = [1, 2, 3]").is_err());
        assert!(TrainConfig::parse("batch_size = 0").is_err());
        assert!(TrainConfig::parse("bogus = 1").is_err());
        assert!(TrainConfig::parse("source = \"idx\"").is_err());
        assert!(TrainConfig::parse("encoder = \"auto\"\nfeature_dim = 13").is_err());
        assert!(TrainConfig::parse("pool2_survivors = [1, 3]").is_err());
        assert!(TrainConfig::parse("learning_rate = -1.0").is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            "source = \"csv\"\ncsv_path = \"data/x.csv\"\nout = \"runs/a\"\n",
        )
        .unwrap();
        let cfg = TrainConfig::load(&p).unwrap();
        assert_eq!(cfg.csv_path.unwrap(), dir.path().join("data/x.csv"));
        assert_eq!(cfg.out, dir.path().join("runs/a"));
    }
}
