//! Synthetic multi-modal corpus, keypoint heatmaps and augmentations.

mod augment;
mod corpus;
mod heatmap;

pub use augment::{
    frame_rate_augment, min_sample_frames, resample_indices, resampled_length, CROP_SCALE_RANGE, FRAME_RATE_RANGE,
};
pub use corpus::{
    generate_corpus, Corpus, GenConfig, HeatmapProjector, ManifestEntry, Sample, Split, GEN_CONFIG_FILE, MANIFEST,
    VOCAB_FILE,
};
pub use heatmap::{
    crop_window, render_heatmap, resize_nearest, spatial_crop, spatial_crop_augment, CropWindow, HeatmapConfig,
};
