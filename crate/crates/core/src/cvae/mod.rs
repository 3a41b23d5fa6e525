//! Conditional VAE over pose deltas: model, loss, training and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{compute_loss, compute_loss_with, LossBreakdown};
pub use model::{delta_dim, Model, ModelSpec, Normalizer};
pub use train::{batch_loss, epoch_windows, fit_normalizer, log_csv, train_epoch, EpochLog, TrainConfig, Trainer, LOG_HEADER};

/// Named bundles of model and training settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small model that trains on one core in minutes.
    Desk,
    /// Full-size settings; not expected to run on a laptop.
    Paper,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }

    pub fn model_spec(&self, joints: usize) -> ModelSpec {
        match self {
            Preset::Desk => ModelSpec::new(joints, 16, 4, 64, 0.1),
            Preset::Paper => ModelSpec::new(joints, 64, 15, 512, 0.1),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        match self {
            Preset::Desk => TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            Preset::Paper => TrainConfig {
                batch: 512,
                epochs: 900,
                base_lr: 1e-4,
                final_lr: 1e-5,
                seed,
                ..TrainConfig::default()
            },
        }
    }
}
