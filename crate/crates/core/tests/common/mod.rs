//! Independent reference implementations shared by the integration tests.
//! Everything here is brute force and written without the library's code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svtc::ndgrad::Array;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Row-wise softmax of uniform logits in `[-scale, scale)`.
pub fn random_probs(rng: &mut ChaCha8Rng, frames: usize, classes: usize, scale: f64) -> Array {
    let mut data = Vec::with_capacity(frames * classes);
    for _ in 0..frames {
        let row: Vec<f64> = (0..classes).map(|_| rng.random_range(-scale..scale)).collect();
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        data.extend(row.iter().map(|v| v.exp() / z));
    }
    Array::new(&[frames, classes], data).unwrap()
}

/// Every length-`len` sequence over `0..base`, in odometer order.
pub fn all_sequences(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..base).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

/// Merge repeats, then drop blanks (class 0).
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != 0 {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Total probability of every frame path that collapses to `labels`.
pub fn ctc_brute_prob(probs: &Array, labels: &[usize]) -> f64 {
    let (t, c) = (probs.rows(), probs.cols());
    all_sequences(c, t)
        .iter()
        .filter(|p| collapse(p) == labels)
        .map(|p| p.iter().enumerate().map(|(i, &k)| probs.at(i, k)).product::<f64>())
        .sum()
}

/// Labeling with the largest collapsed marginal, and that marginal.
pub fn best_labeling(probs: &Array) -> (Vec<usize>, f64) {
    let (t, c) = (probs.rows(), probs.cols());
    let mut mass: Vec<(Vec<usize>, f64)> = Vec::new();
    for p in all_sequences(c, t) {
        let pr: f64 = p.iter().enumerate().map(|(i, &k)| probs.at(i, k)).product();
        let l = collapse(&p);
        match mass.iter_mut().find(|(m, _)| *m == l) {
            Some(e) => e.1 += pr,
            None => mass.push((l, pr)),
        }
    }
    mass.into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap()
}

/// Highest-scoring monotonic assignment of `T` frames to `N` glosses: starts
/// at 0, ends at N−1, each step stays or advances by one. Exhaustive.
pub fn dtw_brute(m: &Array, floor: f64) -> (Vec<usize>, f64) {
    let (t, n) = (m.rows(), m.cols());
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for steps in all_sequences(2, t - 1) {
        let mut a = vec![0];
        for s in &steps {
            a.push(a.last().unwrap() + s);
        }
        if *a.last().unwrap() != n - 1 {
            continue;
        }
        let score: f64 = a.iter().enumerate().map(|(i, &g)| m.at(i, g).max(floor).ln()).sum();
        if score > best.1 {
            best = (a, score);
        }
    }
    best
}

/// Plain Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, y) in b.iter().enumerate() {
            let v = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
            cur.push(v);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Mean over rows of the cross-entropy between `mask[i]/Σmask[i]` and
/// `softmax(s[i])`, averaged over `s` and `sᵀ`-style second matrix.
pub fn gloss_ce_oracle(v2t: &[Vec<f64>], t2v: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len();
    let ce = |s: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let lse = s[i].iter().map(|v| v.exp()).sum::<f64>().ln();
            let pos: Vec<usize> = (0..n).filter(|&j| labels[j] == labels[i]).collect();
            for &j in &pos {
                total -= (s[i][j] - lse) / pos.len() as f64;
            }
        }
        total / n as f64
    };
    0.5 * (ce(v2t) + ce(t2v))
}

/// Direct triple loop over the Gaussian heatmap formula.
pub fn heatmap_oracle(points: &[Vec<[f64; 2]>], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for frame in points {
        for i in 0..h {
            for j in 0..w {
                for p in frame {
                    let d2 = (i as f64 - p[0]).powi(2) + (j as f64 - p[1]).powi(2);
                    out.push((-d2 / (2.0 * sigma * sigma)).exp());
                }
            }
        }
    }
    out
}
