use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::vocab::BLANK;
use crate::error::{Error, Result};
use crate::ndgrad::{log_sum_exp, Array};

const ROW_SUM_TOL: f64 = 1e-9;

/// Frame-wise class probabilities `[T × C]`; every row sums to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbStream {
    probs: Array,
}

impl ProbStream {
    pub fn from_probs(probs: Array) -> Result<Self> {
        if probs.rank() != 2 || probs.cols() == 0 {
            return Err(Error::shape("prob_stream", format!("{:?}", probs.shape())));
        }
        for t in 0..probs.rows() {
            let row = probs.row(t);
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0 + ROW_SUM_TOL).contains(&p)) || (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain {
                    op: "prob_stream",
                    detail: format!("row {t} is not a distribution (sum {s})"),
                });
            }
        }
        Ok(Self { probs })
    }

    /// From log-probabilities (e.g. a log-softmax head output).
    pub fn from_log_probs(log_probs: &Array) -> Result<Self> {
        Self::from_probs(log_probs.map(f64::exp))
    }

    pub fn probs(&self) -> &Array {
        &self.probs
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn log_probs(&self) -> Array {
        self.probs.map(f64::ln)
    }
}

/// Removes repeats, then blanks, from a frame-level class path.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != BLANK {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Best-path decoding: per-frame argmax (ties go to the lower class), then
/// collapse.
pub fn greedy_decode(p: &ProbStream) -> Vec<usize> {
    let path: Vec<usize> = (0..p.frames())
        .map(|t| {
            let row = p.probs.row(t);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

/// A prefix-beam hypothesis: label prefix and its log probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Clone, Copy)]
struct Track {
    blank: f64,
    non_blank: f64,
}

impl Track {
    const EMPTY: Track = Track {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_sum_exp(self.blank, self.non_blank)
    }
}

fn rank(a: &(Vec<usize>, Track), b: &(Vec<usize>, Track)) -> Ordering {
    b.1.total().total_cmp(&a.1.total()).then_with(|| a.0.cmp(&b.0))
}

/// CTC prefix beam search without a language model. Alignments that
/// collapse to the same prefix are merged through separate blank-ending and
/// label-ending tracks. Returns hypotheses best-first; score ties are broken
/// by lexicographic prefix order.
pub fn beam_search(p: &ProbStream, width: usize) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::Config("beam width must be ≥ 1".into()));
    }
    let lp = p.log_probs();
    let classes = p.classes();
    let mut beams: Vec<(Vec<usize>, Track)> = vec![(
        Vec::new(),
        Track {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    )];

    for t in 0..p.frames() {
        let row = lp.row(t);
        let mut next: BTreeMap<Vec<usize>, Track> = BTreeMap::new();
        for (prefix, track) in &beams {
            let total = track.total();
            let stay = next.entry(prefix.clone()).or_insert(Track::EMPTY);
            stay.blank = log_sum_exp(stay.blank, total + row[BLANK]);
            let last = prefix.last().copied();
            for (c, &lpc) in row.iter().enumerate().skip(1) {
                if lpc == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(c);
                if last == Some(c) {
                    let stay = next.get_mut(prefix).expect("inserted above");
                    stay.non_blank = log_sum_exp(stay.non_blank, track.non_blank + lpc);
                    let ext = next.entry(extended).or_insert(Track::EMPTY);
                    ext.non_blank = log_sum_exp(ext.non_blank, track.blank + lpc);
                } else {
                    let ext = next.entry(extended).or_insert(Track::EMPTY);
                    ext.non_blank = log_sum_exp(ext.non_blank, total + lpc);
                }
            }
        }
        debug_assert!(classes >= 1);
        let mut ranked: Vec<(Vec<usize>, Track)> = next.into_iter().collect();
        ranked.sort_by(rank);
        ranked.truncate(width);
        beams = ranked;
    }

    Ok(beams
        .into_iter()
        .map(|(labels, track)| Hypothesis {
            labels,
            log_prob: track.total(),
        })
        .collect())
}

/// Highest-scoring label sequence from [`beam_search`].
pub fn beam_decode(p: &ProbStream, width: usize) -> Result<Vec<usize>> {
    Ok(beam_search(p, width)?
        .into_iter()
        .next()
        .map(|h| h.labels)
        .unwrap_or_default())
}

/// Cell-wise arithmetic mean of equally shaped streams.
pub fn average_streams(streams: &[ProbStream]) -> Result<ProbStream> {
    let first = streams.first().ok_or(Error::Empty { op: "average_streams" })?;
    let shape = first.probs.shape().to_vec();
    let mut acc = vec![0.0; first.probs.len()];
    for s in streams {
        if s.probs.shape() != shape.as_slice() {
            return Err(Error::shape(
                "average_streams",
                format!("{:?} vs {:?}", s.probs.shape(), shape),
            ));
        }
        for (a, &v) in acc.iter_mut().zip(s.probs.data()) {
            *a += v;
        }
    }
    let n = streams.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    ProbStream::from_probs(Array::new(&shape, acc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(rows: &[&[f64]]) -> ProbStream {
        ProbStream::from_probs(Array::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).unwrap()
    }

    fn one_hot(path: &[usize], classes: usize) -> ProbStream {
        let rows: Vec<Vec<f64>> = path
            .iter()
            .map(|&c| (0..classes).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
            .collect();
        ProbStream::from_probs(Array::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn greedy_collapse_rule() {
        assert_eq!(greedy_decode(&one_hot(&[0, 1, 1, 0, 2], 3)), vec![1, 2]);
        assert!(greedy_decode(&one_hot(&[0, 0, 0], 3)).is_empty());
        assert_eq!(greedy_decode(&one_hot(&[1, 0, 1], 3)), vec![1, 1]);
        // Ties go to the lower class.
        assert!(greedy_decode(&stream(&[&[0.5, 0.5]])).is_empty());
    }

    #[test]
    fn beam_agrees_with_greedy_on_dominant_path() {
        let p = stream(&[&[0.1, 0.8, 0.1], &[0.8, 0.1, 0.1], &[0.1, 0.1, 0.8]]);
        assert_eq!(beam_decode(&p, 5).unwrap(), greedy_decode(&p));
        assert!(beam_decode(&p, 0).is_err());
    }

    #[test]
    fn beam_merges_prefixes() {
        // Best path is blank-blank (0.36) but "a" collects 0.64 over three alignments.
        let p = stream(&[&[0.6, 0.4], &[0.6, 0.4]]);
        assert!(greedy_decode(&p).is_empty());
        let hyps = beam_search(&p, 3).unwrap();
        assert_eq!(hyps[0].labels, vec![1]);
        assert!((hyps[0].log_prob - 0.64f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn averaging() {
        let a = stream(&[&[1.0, 0.0]]);
        let b = stream(&[&[0.0, 1.0]]);
        assert_eq!(average_streams(&[a.clone(), b]).unwrap().probs().data(), &[0.5, 0.5]);
        assert_eq!(average_streams(&[a.clone(), a.clone()]).unwrap(), a);
        let c = stream(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!(average_streams(&[a, c]).is_err());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(ProbStream::from_probs(Array::from_rows(&[vec![0.5, 0.6]]).unwrap()).is_err());
    }
}
