use serde::{Deserialize, Serialize};

use super::model::ForwardOutput;
use crate::align::{dtw_align, extract_columns, path_to_spans, pool_tokens, pool_visual, AlignmentPath};
use crate::contrast::{gloss_align_loss, pair_matrices, sentence_align_loss, targets};
use crate::ctc::{ctc_loss, ProbStream};
use crate::error::{Error, Result};
use crate::ndgrad::Var;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub ctc: f64,
    pub spn: f64,
    pub gloss: f64,
    pub sentence: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ctc: 1.0,
            spn: 0.5,
            gloss: 0.1,
            sentence: 0.1,
        }
    }
}

/// Unweighted component values of one sample's loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub ctc: f64,
    pub spn: f64,
    pub gloss: f64,
    pub sentence: f64,
    pub total: f64,
}

pub struct SampleLoss<'t> {
    pub total: Var<'t>,
    pub breakdown: LossBreakdown,
    /// DTW path over the joint stream, when alignment was on.
    pub path: Option<AlignmentPath>,
}

/// Weighted training loss. The alignment terms are computed only when
/// `align` is set; a zero weight still computes (and reports) its term.
pub fn total_loss<'t>(
    out: &ForwardOutput<'t>,
    labels: &[usize],
    w: &LossWeights,
    align: bool,
) -> Result<SampleLoss<'t>> {
    let sum_ctc = |streams: &[Var<'t>]| -> Result<Var<'t>> {
        let mut acc: Option<Var<'t>> = None;
        for &s in streams {
            let l = ctc_loss(s, labels)?;
            acc = Some(match acc {
                Some(a) => a.add(l)?,
                None => l,
            });
        }
        acc.ok_or(Error::Empty { op: "total_loss" })
    };
    let l_ctc = sum_ctc(&out.log_probs)?;
    let mut bd = LossBreakdown {
        ctc: l_ctc.item(),
        ..Default::default()
    };
    let mut total = l_ctc.scale(w.ctc)?;
    if !out.spn.is_empty() {
        let l_spn = sum_ctc(&out.spn)?;
        bd.spn = l_spn.item();
        total = total.add(l_spn.scale(w.spn)?)?;
    }

    let mut path = None;
    if align {
        let (f_c1, f_c2, f_t1, text) = match (out.f_c1, out.f_c2, out.f_t1, &out.text) {
            (Some(a), Some(b), Some(c), Some(t)) => (a, b, c, t),
            _ => return Err(Error::Config("alignment needs a training-mode forward pass".into())),
        };
        let joint = ProbStream::from_log_probs(&out.log_probs[3].value())?;
        let p = dtw_align(&extract_columns(&joint, labels)?)?;
        let spans = path_to_spans(&p);

        let visual = pool_visual(f_c1, &spans)?;
        let textual = pool_tokens(f_t1, &text.token_to_gloss, labels.len())?;
        let l_g = gloss_align_loss(&pair_matrices(visual, textual)?, &targets(labels))?;

        let frames = f_c2.shape()[0];
        let global = f_c2.pool_mean(&[(0, frames)])?;
        let eos = f_t1.gather_rows(&[text.eos_index()])?.value();
        let l_s = sentence_align_loss(global, &eos)?;

        bd.gloss = l_g.item();
        bd.sentence = l_s.item();
        total = total.add(l_g.scale(w.gloss)?)?.add(l_s.scale(w.sentence)?)?;
        path = Some(p);
    }
    bd.total = total.item();
    Ok(SampleLoss {
        total,
        breakdown: bd,
        path,
    })
}
