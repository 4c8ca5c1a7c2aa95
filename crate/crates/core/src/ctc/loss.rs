use super::vocab::{check_labels, BLANK};
use crate::error::{Error, Result};
use crate::ndgrad::{log_sum_exp, Array, Var};

/// Minimum number of frames a label sequence needs under CTC: one per label
/// plus one blank between each pair of equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Log-likelihood of `labels` under frame-wise log scores `log_probs`
/// (`[T × C]`) summed over every blank-augmented alignment, together with
/// its gradient `∂ log P / ∂ log_probs` (the frame-wise state occupancy).
///
/// Rows need not be normalized; the result is exact for any finite scores.
pub fn ctc_log_likelihood(log_probs: &Array, labels: &[usize]) -> Result<(f64, Array)> {
    if log_probs.rank() != 2 {
        return Err(Error::shape("ctc", format!("rank {}", log_probs.rank())));
    }
    let (frames, classes) = (log_probs.rows(), log_probs.cols());
    check_labels(labels, classes)?;
    let required = min_frames(labels).max(1);
    if frames < required {
        return Err(Error::CtcInfeasible { frames, required });
    }

    // Extended sequence: blank, l1, blank, l2, …, lN, blank.
    let ext: Vec<usize> = std::iter::once(BLANK)
        .chain(labels.iter().flat_map(|&l| [l, BLANK]))
        .collect();
    let states = ext.len();
    let lp = |t: usize, s: usize| log_probs.data()[t * classes + ext[s]];
    let can_skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; frames * states];
    alpha[0] = lp(0, 0);
    if states > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..frames {
        for s in 0..states {
            let prev = &alpha[(t - 1) * states..t * states];
            let mut a = prev[s];
            if s >= 1 {
                a = log_sum_exp(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_sum_exp(a, prev[s - 2]);
            }
            alpha[t * states + s] = if a == neg { neg } else { a + lp(t, s) };
        }
    }

    let mut beta = vec![neg; frames * states];
    let last = (frames - 1) * states;
    beta[last + states - 1] = lp(frames - 1, states - 1);
    if states > 1 {
        beta[last + states - 2] = lp(frames - 1, states - 2);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let next = &beta[(t + 1) * states..(t + 2) * states];
            let mut b = next[s];
            if s + 1 < states {
                b = log_sum_exp(b, next[s + 1]);
            }
            if s + 2 < states && can_skip(s + 2) {
                b = log_sum_exp(b, next[s + 2]);
            }
            beta[t * states + s] = if b == neg { neg } else { b + lp(t, s) };
        }
    }

    let end = &alpha[last..];
    let log_p = if states > 1 {
        log_sum_exp(end[states - 1], end[states - 2])
    } else {
        end[0]
    };
    if !log_p.is_finite() {
        return Err(Error::NonFinite { op: "ctc" });
    }

    let mut occupancy = vec![0.0; frames * classes];
    for t in 0..frames {
        for s in 0..states {
            let v = alpha[t * states + s] + beta[t * states + s];
            if v == neg {
                continue;
            }
            occupancy[t * classes + ext[s]] += (v - lp(t, s) - log_p).exp();
        }
    }
    Ok((log_p, Array::new(&[frames, classes], occupancy)?))
}

/// Negative CTC log-likelihood as a differentiable scalar.
pub fn ctc_loss<'t>(log_probs: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let (log_p, occupancy) = ctc_log_likelihood(&log_probs.value(), labels)?;
    let grad = occupancy.map(|g| -g);
    log_probs.tape().scalar_fn(log_probs, -log_p, grad)
}
