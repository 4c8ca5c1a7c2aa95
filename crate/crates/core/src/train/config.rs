use serde::{Deserialize, Serialize};

use crate::ctc::DEFAULT_BEAM_WIDTH;
use crate::error::{Error, Result};
use crate::net::LossWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Epochs trained on the recognition losses alone before alignment starts.
    pub align_warmup: usize,
    pub weights: LossWeights,
    /// Frame-rate resampling, plus spatial cropping when keypoints are heatmaps.
    pub augment: bool,
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr0: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            align_warmup: 5,
            weights: LossWeights::default(),
            augment: true,
            beam_width: DEFAULT_BEAM_WIDTH,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.align_warmup >= self.epochs {
            return Err(Error::Config(format!(
                "align warm-up ({}) must be shorter than training ({} epochs)",
                self.align_warmup, self.epochs
            )));
        }
        if self.batch_size == 0 || self.beam_width == 0 {
            return Err(Error::Config("batch size and beam width must be ≥ 1".into()));
        }
        let w = self.weights;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if ![self.lr0, self.weight_decay, self.eps, w.ctc, w.spn, w.gloss, w.sentence]
            .into_iter()
            .all(finite_nonneg)
        {
            return Err(Error::Config(
                "rates and loss weights must be finite and non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate for 0-based `epoch`: `lr0 · ½(1 + cos(π·epoch/epochs))`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        cosine_lr(self.lr0, epoch, self.epochs)
    }

    /// Alignment losses are active from this 0-based epoch on.
    pub fn align_active(&self, epoch: usize) -> bool {
        epoch >= self.align_warmup
    }
}

pub fn cosine_lr(lr0: f64, epoch: usize, epochs: usize) -> f64 {
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}
