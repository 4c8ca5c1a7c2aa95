use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the three branches exchange information between blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    /// Two-layer MLP over the concatenated features, added to every branch.
    #[default]
    Mlp,
    /// Temporal convolution (k = 3) over the concatenated features.
    Conv,
    /// Pairwise cross-attention sums.
    Attn,
    /// No exchange; three independent branches.
    None,
}

impl std::str::FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "conv" => Ok(Self::Conv),
            "attn" => Ok(Self::Attn),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown fusion kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for FusionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mlp => "mlp",
            Self::Conv => "conv",
            Self::Attn => "attn",
            Self::None => "none",
        })
    }
}

/// Per-frame input widths of the three modalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub video: usize,
    pub keypoint: usize,
    pub flow: usize,
}

impl Default for InputDims {
    fn default() -> Self {
        Self {
            video: 16,
            keypoint: 16,
            flow: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Branch feature width.
    pub d_v: usize,
    /// Text feature width.
    pub d_t: usize,
    /// Joint visual-textual width.
    pub d_j: usize,
    /// Hidden width of every temporal head.
    pub d_head: usize,
    /// Hidden width of the MLP fusion module.
    pub fusion_hidden: usize,
    /// Query/key width of the cross-attention fusion.
    pub attn_dim: usize,
    /// Classes including the blank.
    pub num_classes: usize,
    pub inputs: InputDims,
    pub fusion: FusionKind,
    /// One entry per backbone block.
    pub temporal_strides: Vec<usize>,
    pub kernel_size: usize,
    pub spn_levels: usize,
    pub seed: u64,
    /// Seed of the frozen text encoder tables.
    pub text_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_v: 64,
            d_t: 32,
            d_j: 32,
            d_head: 64,
            fusion_hidden: 64,
            attn_dim: 16,
            num_classes: 13,
            inputs: InputDims::default(),
            fusion: FusionKind::Mlp,
            temporal_strides: vec![1, 2, 2, 1],
            kernel_size: 3,
            spn_levels: 2,
            seed: 0,
            text_seed: 0x7e47_5eed,
        }
    }
}

impl ModelConfig {
    /// Temporal downsampling factor of the backbone.
    pub const DOWNSAMPLE: usize = 4;

    pub fn blocks(&self) -> usize {
        self.temporal_strides.len()
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.d_v,
            self.d_t,
            self.d_j,
            self.d_head,
            self.fusion_hidden,
            self.attn_dim,
            self.inputs.video,
            self.inputs.keypoint,
            self.inputs.flow,
        ];
        if widths.contains(&0) {
            return Err(Error::Config("all widths must be positive".into()));
        }
        if self.temporal_strides.iter().product::<usize>() != Self::DOWNSAMPLE || self.temporal_strides.contains(&0) {
            return Err(Error::Config(format!(
                "temporal strides {:?} must multiply to {}",
                self.temporal_strides,
                Self::DOWNSAMPLE
            )));
        }
        if self.blocks() < 2 || self.spn_levels + 1 > self.blocks() {
            return Err(Error::Config(format!(
                "{} pyramid levels need more than {} blocks",
                self.spn_levels,
                self.blocks()
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("kernel size must be odd".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least one gloss besides the blank".into()));
        }
        Ok(())
    }

    /// Time length after each block for an input of `frames` frames.
    pub fn block_lengths(&self, frames: usize) -> Vec<usize> {
        let mut t = frames;
        self.temporal_strides
            .iter()
            .map(|&s| {
                t = t.div_ceil(s);
                t
            })
            .collect()
    }

    /// Smallest configuration with every component present, for
    /// finite-difference checks of the whole model.
    pub fn micro(num_classes: usize) -> Self {
        Self {
            d_v: 2,
            d_t: 2,
            d_j: 2,
            d_head: 2,
            fusion_hidden: 2,
            attn_dim: 2,
            num_classes,
            inputs: InputDims {
                video: 2,
                keypoint: 2,
                flow: 2,
            },
            ..Self::default()
        }
    }
}
