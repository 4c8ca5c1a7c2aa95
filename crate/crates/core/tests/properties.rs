//! Invariants checked over generated inputs.

mod common;

use common::*;
use proptest::prelude::*;
use svtc::align::{dtw_align, extract_columns, path_to_spans};
use svtc::ctc::{beam_search, ctc_log_likelihood, greedy_decode, wer, GlossVocab, ProbStream};
use svtc::ndgrad::{Array, Padding, Tape};
use svtc::net::TextEncoder;
use svtc::synthdata::{
    crop_window, frame_rate_augment, generate_corpus, min_sample_frames, GenConfig, FRAME_RATE_RANGE,
};
use svtc::train::{cosine_lr, TrainConfig};

fn prob_rows(frames: usize, classes: usize, seed: u64, scale: f64) -> Array {
    random_probs(&mut rng(seed), frames, classes, scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions_and_shift_invariant(
        rows in 1usize..5, cols in 1usize..6, seed in any::<u64>(), shift in -50.0f64..50.0
    ) {
        let x = uniform(&mut rng(seed), &[rows, cols], -10.0, 10.0);
        let tape = Tape::new();
        let p = tape.constant(x.clone()).softmax(1).unwrap().value();
        let q = tape.constant(x.map(|v| v + shift)).softmax(1).unwrap().value();
        for i in 0..rows {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|&v| v >= 0.0));
        }
        prop_assert!(p.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn conv_transpose_is_the_adjoint_of_strided_conv(
        t in 1usize..6, stride in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>()
    ) {
        let mut r = rng(seed);
        let tape = Tape::new();
        let w = tape.constant(uniform(&mut r, &[k, 3, 2], -1.0, 1.0));
        let x = tape.constant(uniform(&mut r, &[t, 2], -1.0, 1.0));
        let y = tape.constant(uniform(&mut r, &[t * stride, 3], -1.0, 1.0));
        let up = x.conv_transpose(w, stride).unwrap().value();
        let down = y.temporal_conv(w, stride, Padding::Same).unwrap().value();
        let lhs: f64 = up.data().iter().zip(y.value().data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.value().data().iter().zip(down.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn ctc_occupancy_rows_sum_to_one(
        t in 1usize..10, c in 2usize..5, labels in prop::collection::vec(1usize..4, 0..4), seed in any::<u64>()
    ) {
        let labels: Vec<usize> = labels.into_iter().filter(|&l| l < c).collect();
        prop_assume!(svtc::ctc::min_frames(&labels) <= t);
        let p = prob_rows(t, c, seed, 2.0);
        let (ll, occ) = ctc_log_likelihood(&p.map(f64::ln), &labels).unwrap();
        prop_assert!(ll <= 1e-12);
        for i in 0..t {
            prop_assert!((occ.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dtw_path_is_monotone_and_spans_partition(
        n in 1usize..6, extra in 0usize..10, seed in any::<u64>()
    ) {
        let t = n + extra;
        let m = uniform(&mut rng(seed), &[t, n], 0.0, 1.0);
        let path = dtw_align(&m).unwrap();
        prop_assert!(path.is_valid(n));
        prop_assert!(path.log_score <= 0.0);
        let spans = path_to_spans(&path);
        prop_assert_eq!(spans.len(), n);
        prop_assert_eq!(spans.frames(), t);
        prop_assert!(spans.spans.windows(2).all(|w| w[0].1 == w[1].0));
    }

    #[test]
    fn extracted_columns_follow_labels(t in 1usize..6, seed in any::<u64>()) {
        let p = ProbStream::from_probs(prob_rows(t, 4, seed, 1.0)).unwrap();
        let labels = [3, 1, 3];
        let m = extract_columns(&p, &labels).unwrap();
        for i in 0..t {
            for (j, &l) in labels.iter().enumerate() {
                prop_assert_eq!(m.at(i, j), p.probs().at(i, l));
            }
        }
    }

    #[test]
    fn beams_are_ranked_and_width_one_matches_greedy_on_peaked_rows(
        t in 1usize..10, c in 2usize..6, seed in any::<u64>()
    ) {
        let p = ProbStream::from_probs(prob_rows(t, c, seed, 1.5)).unwrap();
        let beams = beam_search(&p, 5).unwrap();
        prop_assert!(beams.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));

        // Sharpen every row so its argmax holds at least 0.9 of the mass.
        let mut peaked = p.probs().clone();
        for row in peaked.data_mut().chunks_mut(c) {
            let best = (0..c).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            let rest = 0.05 / (c - 1) as f64;
            row.iter_mut().enumerate().for_each(|(k, v)| *v = if k == best { 1.0 - 0.05 } else { rest });
        }
        let peaked = ProbStream::from_probs(peaked).unwrap();
        prop_assert_eq!(&beam_search(&peaked, 1).unwrap()[0].labels, &greedy_decode(&peaked));
    }

    #[test]
    fn wer_is_bounded_and_zero_on_identity(
        a in prop::collection::vec(0u8..5, 1..10), b in prop::collection::vec(0u8..5, 0..10)
    ) {
        let r = wer(&a, &b).unwrap();
        prop_assert!(r.errors() <= a.len().max(b.len()));
        prop_assert_eq!(r.errors(), levenshtein(&a, &b));
        prop_assert_eq!(r.ref_len, a.len());
        prop_assert_eq!(wer(&a, &a).unwrap().wer, 0.0);
    }

    #[test]
    fn token_map_is_monotone_and_covers_every_gloss(
        ids in prop::collection::vec(1usize..6, 1..7), seed in any::<u64>()
    ) {
        let vocab = GlossVocab::new(["A", "BB", "CCCCCCC", "DD", "E"]).unwrap();
        let enc = TextEncoder::new(vocab.size(), 4, seed);
        let glosses = vocab.decode(&ids);
        let (tokens, map) = enc.tokenize(&glosses, &vocab).unwrap();
        prop_assert_eq!(tokens.len(), map.len() + 1);
        prop_assert!(map.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert_eq!(map.first(), Some(&0));
        prop_assert_eq!(map.last(), Some(&(glosses.len() - 1)));
    }

    #[test]
    fn crop_window_fits_and_has_ceil_side(
        h in 1usize..30, w in 1usize..30, scale in 0.05f64..=1.0, seed in any::<u64>()
    ) {
        let win = crop_window(h, w, scale, &mut rng(seed)).unwrap();
        prop_assert!(win.top + win.height <= h && win.left + win.width <= w);
        prop_assert_eq!(win.height, ((scale * h as f64) - 1e-9).ceil().max(1.0) as usize);
        prop_assert_eq!(win.width, ((scale * w as f64) - 1e-9).ceil().max(1.0) as usize);
    }

    #[test]
    fn cosine_schedule_closed_form(lr0 in 1e-5f64..1.0, epochs in 1usize..100) {
        let cfg = TrainConfig { lr0, epochs, ..TrainConfig::default() };
        prop_assert_eq!(cfg.lr_at(0), lr0);
        for e in 0..epochs {
            let want = lr0 * 0.5 * (1.0 + (std::f64::consts::PI * e as f64 / epochs as f64).cos());
            prop_assert!((cfg.lr_at(e) - want).abs() <= 1e-15 * lr0);
            prop_assert_eq!(cfg.lr_at(e), cosine_lr(lr0, e, epochs));
            prop_assert!(e == 0 || cfg.lr_at(e) <= cfg.lr_at(e - 1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_samples_satisfy_corpus_invariants(seed in any::<u64>(), glosses in 2usize..8) {
        let cfg = GenConfig { glosses, train: 6, dev: 2, test: 2, seed, ..GenConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        prop_assert_eq!(corpus.samples.len(), 10);
        for s in &corpus.samples {
            let t = s.frames();
            prop_assert_eq!(t % 4, 0);
            prop_assert!(t >= 4 * s.glosses.len());
            prop_assert!(s.glosses.windows(2).all(|w| w[0] != w[1]));
            prop_assert!((cfg.min_len..=cfg.max_len).contains(&s.glosses.len()));
            prop_assert!(corpus.vocab.encode(&s.glosses).is_ok());
            prop_assert_eq!(s.true_spans.len(), s.glosses.len());
            prop_assert_eq!(s.true_spans[0].0, 0);
            prop_assert_eq!(s.true_spans.last().unwrap().1, t);
            prop_assert!(s.true_spans.windows(2).all(|w| w[0].1 == w[1].0));
            prop_assert!(s.true_spans.iter().all(|sp| sp.1 > sp.0));
            prop_assert_eq!(s.keypoint.shape()[0], t);
            prop_assert_eq!(s.flow.shape()[0], t);
        }
    }

    #[test]
    fn frame_rate_augmentation_keeps_labels_and_feasibility(
        seed in any::<u64>(), factor in FRAME_RATE_RANGE.0..=FRAME_RATE_RANGE.1
    ) {
        let cfg = GenConfig { train: 4, dev: 0, test: 0, seed, ..GenConfig::default() };
        for s in generate_corpus(&cfg).unwrap().samples {
            let a = frame_rate_augment(&s, factor).unwrap();
            let t = a.frames();
            prop_assert_eq!(&a.glosses, &s.glosses);
            prop_assert_eq!(t % 4, 0);
            prop_assert!(t >= min_sample_frames(&a.glosses));
            prop_assert_eq!(a.keypoint.shape()[0], t);
            prop_assert_eq!(a.flow.shape()[0], t);
            prop_assert_eq!(a.true_spans[0].0, 0);
            prop_assert_eq!(a.true_spans.last().unwrap().1, t);
            prop_assert!(a.true_spans.windows(2).all(|w| w[0].1 == w[1].0));
            prop_assert!(a.true_spans.iter().all(|sp| sp.1 > sp.0));
        }
    }
}

#[test]
fn width_one_beam_can_disagree_with_greedy() {
    let p = ProbStream::from_probs(Array::from_rows(&[vec![0.2, 0.6, 0.2], vec![0.3, 0.3, 0.4]]).unwrap()).unwrap();
    assert_eq!(greedy_decode(&p), vec![1, 2]);
    let top = &beam_search(&p, 1).unwrap()[0];
    assert_eq!(top.labels, vec![1]);
    // staying on [1]: 0.6 · (0.3 + 0.3)
    assert!((top.log_prob - 0.36f64.ln()).abs() < 1e-12);
}
