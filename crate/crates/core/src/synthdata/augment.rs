use super::corpus::Sample;
use crate::error::{Error, Result};
use crate::ndgrad::{Array, Span};
use crate::net::ModelConfig;

pub const FRAME_RATE_RANGE: (f64, f64) = (0.5, 1.5);
pub const CROP_SCALE_RANGE: (f64, f64) = (0.7, 1.0);

/// Smallest length the backbone can turn into a CTC-feasible stream.
pub fn min_sample_frames<S: PartialEq>(glosses: &[S]) -> usize {
    let repeats = glosses.windows(2).filter(|w| w[0] == w[1]).count();
    ModelConfig::DOWNSAMPLE * (glosses.len() + repeats).max(1)
}

/// Source frame of each output frame for nearest-index resampling.
pub fn resample_indices(frames: usize, new_frames: usize) -> Vec<usize> {
    (0..new_frames)
        .map(|i| (((2 * i + 1) * frames) / (2 * new_frames)).min(frames - 1))
        .collect()
}

fn gather_frames(a: &Array, index: &[usize]) -> Result<Array> {
    let shape = a.shape();
    let frames = shape[0];
    let stride = a.len().checked_div(frames).unwrap_or(0);
    let mut data = Vec::with_capacity(index.len() * stride);
    for &i in index {
        data.extend_from_slice(&a.data()[i * stride..(i + 1) * stride]);
    }
    let mut new_shape = shape.to_vec();
    new_shape[0] = index.len();
    Array::new(&new_shape, data)
}

/// Target length for `factor`: rounded to a multiple of 4 and raised to the
/// minimum feasible length when the factor would go below it.
pub fn resampled_length(frames: usize, min_frames: usize, factor: f64) -> usize {
    let step = ModelConfig::DOWNSAMPLE as f64;
    let target = ((frames as f64 * factor) / step).round() as usize * ModelConfig::DOWNSAMPLE;
    target.max(min_frames)
}

/// Nearest-index temporal resampling applied identically to every modality.
/// Labels are untouched; the ground-truth spans follow the frames.
pub fn frame_rate_augment(sample: &Sample, factor: f64) -> Result<Sample> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::Domain {
            op: "frame_rate_augment",
            detail: format!("factor {factor}"),
        });
    }
    let frames = sample.frames();
    let new_frames = resampled_length(frames, min_sample_frames(&sample.glosses), factor);
    if new_frames == frames {
        return Ok(sample.clone());
    }
    let index = resample_indices(frames, new_frames);

    let mut owner = vec![0usize; frames];
    for (g, &(s, e)) in sample.true_spans.iter().enumerate() {
        owner[s..e].iter_mut().for_each(|o| *o = g);
    }
    let mut true_spans: Vec<Span> = Vec::with_capacity(sample.true_spans.len());
    for g in 0..sample.true_spans.len() {
        let start = index.iter().position(|&i| owner[i] >= g).unwrap_or(new_frames);
        let end = index.iter().position(|&i| owner[i] > g).unwrap_or(new_frames);
        true_spans.push((start, end));
    }

    Ok(Sample {
        id: sample.id.clone(),
        split: sample.split,
        glosses: sample.glosses.clone(),
        video: gather_frames(&sample.video, &index)?,
        keypoint: gather_frames(&sample.keypoint, &index)?,
        flow: gather_frames(&sample.flow, &index)?,
        true_spans,
    })
}
