//! CTC loss, greedy and prefix-beam decoding, and WER scoring.

mod decode;
mod loss;
mod vocab;
mod wer;

pub use decode::{average_streams, beam_decode, beam_search, collapse, greedy_decode, Hypothesis, ProbStream};
pub use loss::{ctc_log_likelihood, ctc_loss, min_frames};
pub use vocab::{check_labels, GlossVocab, BLANK};
pub use wer::{wer, CorpusWer, WerReport};

/// Beam width used at inference.
pub const DEFAULT_BEAM_WIDTH: usize = 5;
