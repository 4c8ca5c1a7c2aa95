//! The three-branch recognition network and its training loss.

mod config;
mod fusion;
mod layers;
mod loss;
mod model;
mod params;
mod text;

pub use config::{FusionKind, InputDims, ModelConfig};
pub use fusion::{CrossAttention, Fusion};
pub use layers::{Conv, ConvTranspose, Linear, Mlp};
pub use loss::{total_loss, LossBreakdown, LossWeights, SampleLoss};
pub use model::{Branch, ForwardOutput, ModalityInputs, Mode, Model, Pyramid, TemporalHead, MODALITIES};
pub use params::{fnv1a, Bound, Init, ParamId, ParamStore};
pub use text::{subtoken_count, TextEncoder, TextFeatures};
