//! Run configuration stored as TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sketchlab_core::corpus::Domain;
use sketchlab_core::draw::DrawConfig;
use sketchlab_core::nets::ArchId;
use sketchlab_core::train::{Strategy, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};

use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SKETCHLAB_OUT";
pub const DEFAULT_OUT: &str = "sketchlab-out";

pub const DEFAULT_FRACTIONS: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// `$SKETCHLAB_OUT`, or `sketchlab-out` in the working directory.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeToggles {
    pub regions: bool,
    pub region_percentile: f64,
    pub tuning: bool,
    pub tuning_images: usize,
    pub pca: bool,
    pub pca_theta: f64,
    /// Cue-conflict folder; shape bias is measured when set.
    pub cue_conflict: Option<PathBuf>,
}

impl Default for ProbeToggles {
    fn default() -> Self {
        ProbeToggles {
            regions: false,
            region_percentile: 85.0,
            tuning: false,
            tuning_images: 500,
            pca: false,
            pca_theta: 0.9,
            cue_conflict: None,
        }
    }
}

impl ProbeToggles {
    pub fn any(&self) -> bool {
        self.regions || self.tuning || self.pca || self.cue_conflict.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillSettings {
    pub temperature: f64,
    pub alpha: f64,
    pub students: Vec<ArchId>,
}

impl Default for DistillSettings {
    fn default() -> Self {
        DistillSettings {
            temperature: 4.0,
            alpha: 0.9,
            students: vec![ArchId::Resnet8, ArchId::Vgg8, ArchId::MobilenetSmall],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset root per domain.
    pub datasets: BTreeMap<Domain, PathBuf>,
    pub resolution: usize,
    pub arch: ArchId,
    pub strategies: Vec<Strategy>,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub output_dir: PathBuf,
    pub probes: ProbeToggles,
    pub draw: DrawConfig,
    pub distill: DistillSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: BTreeMap::new(),
            resolution: 32,
            arch: ArchId::Resnet18Narrow,
            strategies: Strategy::ALL.to_vec(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            seeds: vec![0],
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            output_dir: default_output_dir(),
            probes: ProbeToggles::default(),
            draw: DrawConfig::default(),
            distill: DistillSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("fraction {f} outside (0, 1]")));
        }
        if self.fractions.is_empty() {
            return Err(Error::Config("fraction grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategy list is empty".into()));
        }
        if !self.arch.is_classifier() {
            return Err(Error::Config(format!("{} is not a classifier architecture", self.arch)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be positive".into()));
        }
        for s in &self.strategies {
            for d in s.domains() {
                if !self.datasets.contains_key(&d) {
                    return Err(Error::Config(format!("strategy {s} needs a {d} dataset")));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.output_dir.join("runs")
    }
}
