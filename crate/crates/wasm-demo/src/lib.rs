//! Browser bindings for three cheap, visual operations: Gaussian keypoint
//! heatmaps with crop augmentation, monotonic DTW alignment, and CTC prefix
//! beam search. Every export returns a JSON string; the `*_json` functions
//! are the same operations callable from native code and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use svtc::align::{dtw_align, extract_columns, path_to_spans};
use svtc::ctc::{beam_search, greedy_decode, ProbStream};
use svtc::ndgrad::Array;
use svtc::synthdata::{render_heatmap, resize_nearest, spatial_crop_augment, HeatmapConfig};
use svtc::Result;
use wasm_bindgen::prelude::*;

fn to_js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

fn rows(a: &Array) -> Vec<Vec<f64>> {
    let cols = a.shape()[1];
    a.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

/// Collapses `[1 × H × W × K]` to `[H × W]` by taking the max over keypoints.
fn max_over_keypoints(maps: &Array) -> Vec<Vec<f64>> {
    let (h, w, k) = (maps.shape()[1], maps.shape()[2], maps.shape()[3]);
    let d = maps.data();
    (0..h)
        .map(|i| {
            (0..w)
                .map(|j| {
                    d[(i * w + j) * k..(i * w + j + 1) * k]
                        .iter()
                        .copied()
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect()
}

/// `points` is flat `[x0, y0, x1, y1, …]`. Renders one frame, then crops at
/// `scale` (seeded window position) and resizes back to `size × size`.
pub fn heatmap_json(points: &[f64], size: usize, sigma: f64, scale: f64, seed: u64) -> Result<String> {
    if points.is_empty() || !points.len().is_multiple_of(2) {
        return Err(svtc::Error::Config("points must be non-empty x,y pairs".into()));
    }
    let frame: Vec<[f64; 2]> = points.chunks(2).map(|c| [c[0], c[1]]).collect();
    let cfg = HeatmapConfig {
        height: size,
        width: size,
        sigma,
        keypoints: frame.len(),
    };
    let maps = render_heatmap(&[frame], &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cropped, window) = spatial_crop_augment(&maps, scale, &mut rng)?;
    let resized = resize_nearest(&cropped, size, size)?;
    Ok(json!({
        "size": size,
        "heatmap": max_over_keypoints(&maps),
        "crop": window,
        "augmented": max_over_keypoints(&resized),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn heatmap(
    points: Vec<f64>,
    size: usize,
    sigma: f64,
    scale: f64,
    seed: u64,
) -> std::result::Result<String, JsValue> {
    to_js(heatmap_json(&points, size, sigma, scale, seed))
}

/// Seeded ground-truth partition of `frames` into `glosses` non-empty spans.
fn random_spans(rng: &mut ChaCha8Rng, frames: usize, glosses: usize) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < glosses - 1 {
        let c = rng.random_range(1..frames);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(frames);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

fn softmax_rows(logits: Vec<f64>, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    out
}

/// Builds a noisy stream over `glosses + 1` classes whose true gloss gets a
/// `clarity` logit bonus inside its span, aligns it, and reports the path
/// next to the ground truth.
pub fn dtw_json(frames: usize, glosses: usize, clarity: f64, seed: u64) -> Result<String> {
    if glosses == 0 || frames < glosses {
        return Err(svtc::Error::TooFewFrames { frames, glosses });
    }
    let classes = glosses + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_spans(&mut rng, frames, glosses);
    let mut logits = Vec::with_capacity(frames * classes);
    for t in 0..frames {
        let g = truth.iter().position(|s| t < s.1).expect("spans cover all frames");
        for c in 0..classes {
            let bonus = if c == g + 1 { clarity } else { 0.0 };
            logits.push(rng.random_range(-1.0..1.0) + bonus);
        }
    }
    let stream = ProbStream::from_probs(Array::new(&[frames, classes], softmax_rows(logits, classes))?)?;
    let labels: Vec<usize> = (1..classes).collect();
    let m = extract_columns(&stream, &labels)?;
    let path = dtw_align(&m)?;
    let spans = path_to_spans(&path);
    Ok(json!({
        "matrix": rows(&m),
        "path": path.assignment,
        "log_score": path.log_score,
        "spans": spans.spans,
        "true_spans": truth,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn dtw(frames: usize, glosses: usize, clarity: f64, seed: u64) -> std::result::Result<String, JsValue> {
    to_js(dtw_json(frames, glosses, clarity, seed))
}

/// Seeded random `[frames × classes]` probabilities; larger `peak` gives
/// sharper rows. Class 0 is the blank.
pub fn random_stream(frames: usize, classes: usize, peak: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = (0..frames * classes)
        .map(|_| peak * rng.random_range(-1.0..1.0))
        .collect();
    softmax_rows(logits, classes)
}

#[wasm_bindgen]
pub fn random_probs(frames: usize, classes: usize, peak: f64, seed: u64) -> Vec<f64> {
    random_stream(frames, classes, peak, seed)
}

#[derive(Serialize)]
struct Beam {
    labels: Vec<usize>,
    log_prob: f64,
}

/// Row-major probabilities in, greedy output and ranked beams out.
pub fn beam_json(probs: &[f64], frames: usize, classes: usize, width: usize) -> Result<String> {
    let stream = ProbStream::from_probs(Array::new(&[frames, classes], probs.to_vec())?)?;
    let greedy = greedy_decode(&stream);
    let beams: Vec<Beam> = beam_search(&stream, width)?
        .into_iter()
        .map(|h| Beam {
            labels: h.labels,
            log_prob: h.log_prob,
        })
        .collect();
    Ok(json!({ "greedy": greedy, "beams": beams }).to_string())
}

#[wasm_bindgen]
pub fn beam(probs: Vec<f64>, frames: usize, classes: usize, width: usize) -> std::result::Result<String, JsValue> {
    to_js(beam_json(&probs, frames, classes, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn heatmap_peak_sits_on_the_keypoint() {
        let v = parse(heatmap_json(&[3.0, 10.0], 16, 2.0, 1.0, 0).unwrap());
        let map = &v["heatmap"];
        assert_eq!(map[3][10], 1.0);
        assert!(map[0][0].as_f64().unwrap() < 1e-3);
        // scale 1 keeps the whole canvas
        assert_eq!(v["augmented"], v["heatmap"]);
        assert!(heatmap_json(&[1.0], 16, 2.0, 1.0, 0).is_err());
    }

    #[test]
    fn dtw_recovers_clear_segments() {
        let v = parse(dtw_json(40, 5, 8.0, 3).unwrap());
        assert_eq!(v["spans"], v["true_spans"]);
        let path = v["path"].as_array().unwrap();
        assert_eq!(path.len(), 40);
        assert!(dtw_json(3, 5, 1.0, 0).is_err());
    }

    #[test]
    fn beam_matches_greedy_on_peaked_rows_and_ranks_best_first() {
        let probs = random_stream(12, 4, 12.0, 1);
        let v = parse(beam_json(&probs, 12, 4, 5).unwrap());
        assert_eq!(v["beams"][0]["labels"], v["greedy"]);
        let scores: Vec<f64> = v["beams"]
            .as_array()
            .unwrap()
            .iter()
            .map(|b| b["log_prob"].as_f64().unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        assert!(beam_json(&probs, 12, 4, 0).is_err());
    }

    #[test]
    fn random_rows_are_distributions() {
        let p = random_stream(5, 3, 2.0, 9);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
