//! Multi-modal continuous sign-sequence recognition toolkit.
//!
//! Three feature branches (video, keypoints, flow) with inter-block fusion,
//! pyramid auxiliary heads, CTC training and beam decoding, DTW gloss-to-frame
//! alignment, and gloss/sentence-level visual-textual contrastive losses, all
//! on a small reverse-mode autodiff engine.

pub mod align;
pub mod contrast;
pub mod ctc;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod ndgrad;
pub mod net;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
