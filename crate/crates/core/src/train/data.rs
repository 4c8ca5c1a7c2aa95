use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ndgrad::Array;
use crate::net::{ModalityInputs, ModelConfig};
use crate::synthdata::{
    frame_rate_augment, spatial_crop_augment, Corpus, HeatmapProjector, Sample, CROP_SCALE_RANGE, FRAME_RATE_RANGE,
};

/// Model-ready inputs of one sample.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub video: Array,
    pub keypoint: Array,
    pub flow: Array,
    pub glosses: Vec<String>,
}

impl Prepared {
    pub fn inputs(&self) -> ModalityInputs<'_> {
        ModalityInputs {
            video: &self.video,
            keypoint: &self.keypoint,
            flow: &self.flow,
        }
    }
}

/// Turns stored samples into model inputs, projecting heatmaps when present.
#[derive(Clone, Debug, Default)]
pub struct InputPipeline {
    pub projector: Option<HeatmapProjector>,
}

impl InputPipeline {
    pub fn for_corpus(corpus: &Corpus) -> Self {
        let projector = corpus
            .config
            .heatmap
            .map(|h| HeatmapProjector::new(h, corpus.config.inputs.keypoint, corpus.config.seed));
        Self { projector }
    }

    pub fn prepare(&self, sample: &Sample) -> Result<Prepared> {
        self.finish(sample.clone(), None)
    }

    /// Random frame-rate and crop augmentation driven by `rng`.
    pub fn prepare_augmented(&self, sample: &Sample, rng: &mut ChaCha8Rng) -> Result<Prepared> {
        let factor = rng.random_range(FRAME_RATE_RANGE.0..=FRAME_RATE_RANGE.1);
        let resampled = frame_rate_augment(sample, factor)?;
        let scale = rng.random_range(CROP_SCALE_RANGE.0..=CROP_SCALE_RANGE.1);
        self.finish(resampled, Some((scale, rng)))
    }

    fn finish(&self, sample: Sample, crop: Option<(f64, &mut ChaCha8Rng)>) -> Result<Prepared> {
        let keypoint = match &self.projector {
            None => sample.keypoint,
            Some(p) => match crop {
                Some((scale, rng)) => p.project(&spatial_crop_augment(&sample.keypoint, scale, rng)?.0)?,
                None => p.project(&sample.keypoint)?,
            },
        };
        Ok(Prepared {
            video: sample.video,
            keypoint,
            flow: sample.flow,
            glosses: sample.glosses,
        })
    }
}

/// Model configuration matching a corpus's vocabulary and feature widths.
pub fn model_config_for(corpus: &Corpus, base: ModelConfig) -> ModelConfig {
    ModelConfig {
        num_classes: corpus.vocab.size(),
        inputs: corpus.config.inputs,
        ..base
    }
}

/// Independent augmentation stream for `(seed, epoch, sample)`; identical
/// regardless of batch composition or thread count.
pub fn augment_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((epoch as u64) << 32) ^ index as u64);
    rng.set_stream(3);
    rng
}
