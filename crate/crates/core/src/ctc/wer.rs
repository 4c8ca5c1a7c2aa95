use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edit-operation breakdown of one hypothesis against its reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub wer: f64,
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    pub ref_len: usize,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.ins + self.del + self.sub
    }

    fn from_counts(ins: usize, del: usize, sub: usize, ref_len: usize) -> Self {
        Self {
            wer: (ins + del + sub) as f64 / ref_len as f64,
            ins,
            del,
            sub,
            ref_len,
        }
    }
}

/// Unit-cost Levenshtein alignment. On ties the backtrace prefers
/// substitution (or match), then deletion, then insertion.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, v) in d.iter_mut().take(w).enumerate() {
        *v = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = (d[(i - 1) * w + j - 1] + cost)
                .min(d[(i - 1) * w + j] + 1)
                .min(d[i * w + j - 1] + 1);
        }
    }

    let (mut i, mut j) = (n, m);
    let (mut ins, mut del, mut sub) = (0, 0, 0);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if here == d[(i - 1) * w + j - 1] + cost {
                sub += cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    Ok(WerReport::from_counts(ins, del, sub, n))
}

/// Micro-averaged corpus WER: total edits over total reference length.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorpusWer {
    ins: usize,
    del: usize,
    sub: usize,
    ref_len: usize,
}

impl CorpusWer {
    pub fn add(&mut self, r: &WerReport) {
        self.ins += r.ins;
        self.del += r.del;
        self.sub += r.sub;
        self.ref_len += r.ref_len;
    }

    pub fn report(&self) -> WerReport {
        if self.ref_len == 0 {
            return WerReport::default();
        }
        WerReport::from_counts(self.ins, self.del, self.sub, self.ref_len)
    }

    /// Deletions as a percentage of reference length.
    pub fn del_pct(&self) -> f64 {
        100.0 * self.del as f64 / self.ref_len.max(1) as f64
    }

    /// Insertions as a percentage of reference length.
    pub fn ins_pct(&self) -> f64 {
        100.0 * self.ins as f64 / self.ref_len.max(1) as f64
    }
}

impl<'a> FromIterator<&'a WerReport> for CorpusWer {
    fn from_iter<I: IntoIterator<Item = &'a WerReport>>(iter: I) -> Self {
        let mut c = CorpusWer::default();
        iter.into_iter().for_each(|r| c.add(r));
        c
    }
}
