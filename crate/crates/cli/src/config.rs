//! Run configuration: built-in defaults, overridden by a JSON config file,
//! overridden by command-line flags (applied by each command).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use imcred_core::boost::BoostConfig;
use imcred_core::error::Result;
use imcred_core::eval::compare::BovwParams;
use imcred_core::eval::synth::ShiftSpec;
use imcred_core::learners::{ConvNetSpec, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Network training (convnet lanes).
    pub train: TrainConfig,
    /// Logistic-regression training.
    pub logreg_train: TrainConfig,
    /// Warm-start stage of linear model transfer.
    pub logreg_finetune: TrainConfig,
    pub boost: BoostConfig,
    pub shift: ShiftSpec,
    pub bovw: BovwParams,
    pub net_spec: Option<ConvNetSpec>,
    pub lexicons_dir: Option<PathBuf>,
    pub dedup_planes: usize,
    pub dedup_threshold: usize,
    pub min_side: usize,
    pub max_aspect: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let compare = imcred_core::eval::compare::ComparisonConfig::default();
        RunConfig {
            seed: 0,
            train: TrainConfig::default(),
            logreg_train: compare.logreg_train,
            logreg_finetune: compare.logreg_finetune,
            boost: BoostConfig::default(),
            shift: ShiftSpec::default_benchmark(),
            bovw: BovwParams::default(),
            net_spec: None,
            lexicons_dir: None,
            dedup_planes: imcred_core::lsh::DEFAULT_PLANES,
            dedup_threshold: 0,
            min_side: 32,
            max_aspect: 4.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    /// Echo the effective configuration for provenance.
    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join("effective-config.json"), text)?;
        Ok(())
    }
}
