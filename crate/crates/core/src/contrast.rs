//! Visual-textual alignment losses.
//!
//! Gloss level: pooled visual segments and pooled text tokens are compared
//! through raw dot-product pair matrices in both directions, and each row is
//! scored by cross-entropy against the multi-hot "same gloss" target,
//! normalized by its count of positives. Sentence level: KL divergence from
//! the frozen text feature's softmax to the global visual feature's softmax.

use crate::error::{Error, Result};
use crate::ndgrad::{softmax_along, Array, Var};

/// Visual→text and text→visual similarity matrices, both `[N × N]`.
#[derive(Clone, Copy, Debug)]
pub struct PairMatrices<'t> {
    pub v2t: Var<'t>,
    pub t2v: Var<'t>,
}

/// Positive-pair mask `G` and its row counts `G_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignTargets {
    pub mask: Array,
    pub counts: Array,
}

impl AlignTargets {
    /// `mask / counts`, the row-normalized target distribution.
    pub fn distribution(&self) -> Array {
        let n = self.counts.len();
        let mut out = self.mask.clone();
        let counts = self.counts.data().to_vec();
        for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v /= counts[i]);
        }
        out
    }
}

/// `v2t = visual · textᵀ`, `t2v = text · visualᵀ`; no normalization or temperature.
pub fn pair_matrices<'t>(visual: Var<'t>, text: Var<'t>) -> Result<PairMatrices<'t>> {
    let (vs, ts) = (visual.shape(), text.shape());
    if vs.len() != 2 || vs != ts {
        return Err(Error::shape("pair_matrices", format!("{vs:?} vs {ts:?}")));
    }
    Ok(PairMatrices {
        v2t: visual.matmul(text.transpose()?)?,
        t2v: text.matmul(visual.transpose()?)?,
    })
}

/// Gloss-identity targets for a label sequence.
pub fn targets(labels: &[usize]) -> AlignTargets {
    let n = labels.len();
    let mut mask = vec![0.0; n * n];
    let mut counts = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                mask[i * n + j] = 1.0;
                counts[i] += 1.0;
            }
        }
    }
    AlignTargets {
        mask: Array::new(&[n, n], mask).expect("square"),
        counts: Array::new(&[n, 1], counts).expect("column"),
    }
}

/// Mean over rows of `−Σ_j target[i,j] · log softmax(logits)[i,j]`.
fn soft_cross_entropy<'t>(logits: Var<'t>, target: &Array) -> Result<Var<'t>> {
    let rows = logits.shape()[0] as f64;
    let tgt = logits.tape().constant(target.clone());
    logits.log_softmax(1)?.mul(tgt)?.sum()?.scale(-1.0 / rows)
}

/// Average of the visual→text and text→visual cross-entropies.
pub fn gloss_align_loss<'t>(pairs: &PairMatrices<'t>, tgt: &AlignTargets) -> Result<Var<'t>> {
    let n = tgt.counts.len();
    for m in [pairs.v2t, pairs.t2v] {
        if m.shape() != [n, n] {
            return Err(Error::shape("gloss_align_loss", format!("{:?} vs N={n}", m.shape())));
        }
    }
    let dist = tgt.distribution();
    soft_cross_entropy(pairs.v2t, &dist)?
        .add(soft_cross_entropy(pairs.t2v, &dist)?)?
        .scale(0.5)
}

/// `KL(softmax(text) ‖ softmax(visual))` with the text side held fixed.
pub fn sentence_align_loss<'t>(visual: Var<'t>, text: &Array) -> Result<Var<'t>> {
    let vs = visual.shape();
    if vs.len() != 2 || vs[0] != 1 || text.shape() != vs.as_slice() {
        return Err(Error::shape(
            "sentence_align_loss",
            format!("{vs:?} vs {:?}", text.shape()),
        ));
    }
    let log_q = softmax_along(text, 1, true);
    let q = log_q.map(f64::exp);
    let entropy_term: f64 = q.data().iter().zip(log_q.data()).map(|(a, b)| a * b).sum();
    let tape = visual.tape();
    let cross = visual.log_softmax(1)?.mul(tape.constant(q))?.sum()?;
    // Σ q log q − Σ q log p
    cross.scale(-1.0)?.add(tape.constant(Array::scalar(entropy_term)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::Tape;

    #[test]
    fn targets_examples() {
        let t = targets(&[1, 2, 3]);
        assert_eq!(t.mask, Array::eye(3));
        assert_eq!(t.counts.data(), &[1.0, 1.0, 1.0]);
        let t = targets(&[1, 2, 1]);
        assert_eq!(t.mask.data(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(t.counts.data(), &[2.0, 1.0, 2.0]);
    }

    #[test]
    fn orthonormal_rows_give_identity() {
        let tape = Tape::new();
        let e = tape.constant(Array::eye(3));
        let p = pair_matrices(e, e).unwrap();
        assert_eq!(p.v2t.value(), Array::eye(3));
    }

    #[test]
    fn uniform_logits_give_log_n() {
        let tape = Tape::new();
        let z = tape.constant(Array::zeros(&[3, 4]));
        let p = pair_matrices(z, z).unwrap();
        let l = gloss_align_loss(&p, &targets(&[1, 2, 3])).unwrap().item();
        assert!((l - 3f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn shape_errors() {
        let tape = Tape::new();
        let a = tape.constant(Array::zeros(&[3, 4]));
        let b = tape.constant(Array::zeros(&[2, 4]));
        assert!(pair_matrices(a, b).is_err());
        let p = pair_matrices(a, a).unwrap();
        assert!(gloss_align_loss(&p, &targets(&[1, 2])).is_err());
        assert!(sentence_align_loss(tape.constant(Array::zeros(&[1, 3])), &Array::zeros(&[1, 4])).is_err());
    }

    #[test]
    fn identical_sentence_features_give_zero() {
        let tape = Tape::new();
        let v = Array::new(&[1, 3], vec![0.3, -1.0, 2.0]).unwrap();
        let l = sentence_align_loss(tape.leaf(v.clone()), &v).unwrap().item();
        assert!(l.abs() <= 1e-12);
    }
}
