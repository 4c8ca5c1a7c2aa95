//! Monotonic frame-to-gloss alignment and the segment poolings built on it.
//!
//! The alignment works on the `[T′ × N]` matrix of probabilities of the
//! labeled glosses (one column per label position) and finds the path that
//! starts at gloss 0, ends at gloss N−1 and at every frame either stays on
//! the current gloss or advances by one, maximizing the product of visited
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::ctc::{check_labels, ProbStream};
use crate::error::{Error, Result};
use crate::ndgrad::{Array, Span, Var};

/// Probabilities are clamped to this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    /// Gloss position for every frame.
    pub assignment: Vec<usize>,
    /// `Σ_t log M[t, assignment[t]]` (floored probabilities).
    pub log_score: f64,
}

impl AlignmentPath {
    pub fn glosses(&self) -> usize {
        self.assignment.last().map_or(0, |&n| n + 1)
    }

    /// Checks the start/end and unit-step invariants.
    pub fn is_valid(&self, glosses: usize) -> bool {
        let a = &self.assignment;
        !a.is_empty()
            && a[0] == 0
            && a[a.len() - 1] + 1 == glosses
            && a.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }
}

/// Ordered, contiguous spans partitioning `[0, T′)`; span `i` belongs to gloss `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpans {
    pub spans: Vec<Span>,
}

impl SegmentSpans {
    pub fn new(spans: Vec<Span>, frames: usize) -> Result<Self> {
        let contiguous = spans.first().is_some_and(|s| s.0 == 0)
            && spans.last().is_some_and(|s| s.1 == frames)
            && spans.windows(2).all(|w| w[0].1 == w[1].0)
            && spans.iter().all(|s| s.1 > s.0);
        if !contiguous {
            return Err(Error::InvalidSpans(format!(
                "{spans:?} does not partition [0,{frames})"
            )));
        }
        Ok(Self { spans })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.spans.last().map_or(0, |s| s.1)
    }

    /// Interior boundaries (start of spans 1..N).
    pub fn boundaries(&self) -> Vec<usize> {
        self.spans.iter().skip(1).map(|s| s.0).collect()
    }
}

/// Column `j` of the result is `p[:, labels[j]]`; repeated labels repeat
/// columns. Columns are not renormalized.
pub fn extract_columns(p: &ProbStream, labels: &[usize]) -> Result<Array> {
    check_labels(labels, p.classes())?;
    let probs = p.probs();
    let (t, n) = (p.frames(), labels.len());
    let mut out = Vec::with_capacity(t * n);
    for row in 0..t {
        let r = probs.row(row);
        out.extend(labels.iter().map(|&l| r[l]));
    }
    Array::new(&[t, n], out)
}

/// Max-product monotonic path through `m` (`[T′ × N]`, `T′ ≥ N ≥ 1`).
///
/// Among equally scored paths the one that advances earliest wins.
pub fn dtw_align(m: &Array) -> Result<AlignmentPath> {
    if m.rank() != 2 || m.cols() == 0 {
        return Err(Error::shape("dtw_align", format!("{:?}", m.shape())));
    }
    let (frames, glosses) = (m.rows(), m.cols());
    if frames < glosses {
        return Err(Error::TooFewFrames { frames, glosses });
    }
    if let Some(bad) = m.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain {
            op: "dtw_align",
            detail: format!("entry {bad} is not a probability"),
        });
    }
    let lm = m.map(|v| v.max(PROB_FLOOR).ln());
    let neg = f64::NEG_INFINITY;

    // best[t][n]: best score of a path suffix that occupies gloss n at frame t.
    let mut best = vec![neg; frames * glosses];
    best[(frames - 1) * glosses + glosses - 1] = lm.at(frames - 1, glosses - 1);
    for t in (0..frames - 1).rev() {
        for n in 0..glosses {
            let stay = best[(t + 1) * glosses + n];
            let advance = if n + 1 < glosses {
                best[(t + 1) * glosses + n + 1]
            } else {
                neg
            };
            let next = stay.max(advance);
            if next > neg {
                best[t * glosses + n] = lm.at(t, n) + next;
            }
        }
    }

    let mut assignment = Vec::with_capacity(frames);
    let mut n = 0;
    assignment.push(0);
    for t in 1..frames {
        if n + 1 < glosses && best[t * glosses + n + 1] >= best[t * glosses + n] {
            n += 1;
        }
        assignment.push(n);
    }
    let log_score = assignment.iter().enumerate().map(|(t, &n)| lm.at(t, n)).sum();
    Ok(AlignmentPath { assignment, log_score })
}

/// Span `i` is the run of frames assigned to gloss `i`.
pub fn path_to_spans(path: &AlignmentPath) -> SegmentSpans {
    let mut spans: Vec<Span> = Vec::with_capacity(path.glosses());
    for (t, &n) in path.assignment.iter().enumerate() {
        if n == spans.len() {
            spans.push((t, t + 1));
        } else {
            spans[n].1 = t + 1;
        }
    }
    SegmentSpans { spans }
}

/// Per-gloss mean of frame features `[T′ × d]` over the alignment spans.
/// Span selection carries no gradient.
pub fn pool_visual<'t>(features: Var<'t>, spans: &SegmentSpans) -> Result<Var<'t>> {
    let frames = features.shape()[0];
    if spans.frames() != frames {
        return Err(Error::shape(
            "pool_visual",
            format!("spans cover {} frames, features have {frames}", spans.frames()),
        ));
    }
    features.pool_mean(&spans.spans)
}

/// Converts a monotonic surjective token→gloss map into per-gloss spans.
pub fn token_spans(token_to_gloss: &[usize], glosses: usize) -> Result<Vec<Span>> {
    let ok = token_to_gloss.first() == Some(&0)
        && token_to_gloss.last().map(|&g| g + 1) == Some(glosses)
        && token_to_gloss.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1);
    if !ok {
        return Err(Error::InvalidSpans(format!(
            "token map {token_to_gloss:?} is not monotonic onto 0..{glosses}"
        )));
    }
    let path = AlignmentPath {
        assignment: token_to_gloss.to_vec(),
        log_score: 0.0,
    };
    Ok(path_to_spans(&path).spans)
}

/// Per-gloss mean of token features. Rows of `features` beyond the map (the
/// end-of-sentence token) are ignored.
pub fn pool_tokens<'t>(features: Var<'t>, token_to_gloss: &[usize], glosses: usize) -> Result<Var<'t>> {
    let spans = token_spans(token_to_gloss, glosses)?;
    if token_to_gloss.len() > features.shape()[0] {
        return Err(Error::shape("pool_tokens", "map longer than token features"));
    }
    features.pool_mean(&spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::Tape;

    #[test]
    fn single_gloss_is_forced() {
        let m = Array::new(&[4, 1], vec![0.1, 0.9, 0.3, 0.2]).unwrap();
        assert_eq!(dtw_align(&m).unwrap().assignment, vec![0; 4]);
    }

    #[test]
    fn three_by_two_example() {
        let m = Array::from_rows(&[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
        let p = dtw_align(&m).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 1]);
        assert!((p.log_score - 0.432f64.ln()).abs() < 1e-12);
        assert_eq!(path_to_spans(&p).spans, vec![(0, 2), (2, 3)]);
    }

    #[test]
    fn ties_advance_early() {
        let m = Array::full(&[4, 2], 0.5);
        assert_eq!(dtw_align(&m).unwrap().assignment, vec![0, 1, 1, 1]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            dtw_align(&Array::full(&[1, 2], 0.5)),
            Err(Error::TooFewFrames { .. })
        ));
        assert!(dtw_align(&Array::full(&[2, 1], -0.5)).is_err());
        // zeros are floored, not rejected
        assert_eq!(dtw_align(&Array::zeros(&[2, 2])).unwrap().assignment, vec![0, 1]);
    }

    #[test]
    fn unit_spans() {
        let p = AlignmentPath {
            assignment: vec![0, 1, 2],
            log_score: 0.0,
        };
        assert_eq!(path_to_spans(&p).spans, vec![(0, 1), (1, 2), (2, 3)]);
        assert!(SegmentSpans::new(vec![(0, 1), (2, 3)], 3).is_err());
    }

    #[test]
    fn extract_columns_examples() {
        let probs = Array::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap();
        let p = ProbStream::from_probs(probs).unwrap();
        let all = extract_columns(&p, &[1, 2]).unwrap();
        assert_eq!(all.data(), &[0.5, 0.3, 0.1, 0.3]);
        let rep = extract_columns(&p, &[1, 1]).unwrap();
        assert_eq!(rep.data(), &[0.5, 0.5, 0.1, 0.1]);
        assert!(extract_columns(&p, &[0]).is_err());
        assert!(extract_columns(&p, &[3]).is_err());
    }

    #[test]
    fn token_pooling() {
        let tape = Tape::new();
        let f = tape.constant(Array::new(&[4, 1], vec![1.0, 3.0, 10.0, 99.0]).unwrap());
        let pooled = pool_tokens(f, &[0, 0, 1], 2).unwrap();
        assert_eq!(pooled.value().data(), &[2.0, 10.0]);
        let id = pool_tokens(f, &[0, 1, 2], 3).unwrap();
        assert_eq!(id.value().data(), &[1.0, 3.0, 10.0]);
        assert!(pool_tokens(f, &[0, 2], 3).is_err());
        assert!(pool_tokens(f, &[0, 0], 2).is_err());
    }

    #[test]
    fn visual_pool_length_mismatch() {
        let tape = Tape::new();
        let f = tape.constant(Array::zeros(&[4, 2]));
        let spans = SegmentSpans::new(vec![(0, 1), (1, 3)], 3).unwrap();
        assert!(pool_visual(f, &spans).is_err());
    }
}
