use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::heatmap::{render_heatmap, HeatmapConfig};
use crate::ctc::GlossVocab;
use crate::error::{Error, Result};
use crate::io;
use crate::ndgrad::{matmul, Array, Span};
use crate::net::{InputDims, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Number of glosses, excluding the blank.
    pub glosses: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_frames_per_gloss: usize,
    pub max_frames_per_gloss: usize,
    pub inputs: InputDims,
    pub noise: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Render the keypoint modality as Gaussian heatmaps instead of feature vectors.
    pub heatmap: Option<HeatmapConfig>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            glosses: 12,
            min_len: 3,
            max_len: 6,
            min_frames_per_gloss: 8,
            max_frames_per_gloss: 16,
            inputs: InputDims::default(),
            noise: 0.3,
            train: 300,
            dev: 50,
            test: 50,
            heatmap: None,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.glosses < 2 {
            return bad("need at least two glosses (C ≥ 3)");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("sentence length range is empty");
        }
        // Each gloss must survive ×0.5 frame-rate resampling with a CTC-feasible length.
        if self.min_frames_per_gloss < ModelConfig::DOWNSAMPLE || self.min_frames_per_gloss > self.max_frames_per_gloss
        {
            return bad("frames-per-gloss range must be nonempty and start at 4 or more");
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad("noise must be a finite non-negative number");
        }
        let d = self.inputs;
        if d.video == 0 || d.keypoint == 0 || d.flow == 0 {
            return bad("feature dims must be positive");
        }
        if self.total() == 0 {
            return bad("corpus is empty");
        }
        if let Some(h) = &self.heatmap {
            h.validate()?;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    pub fn vocab(&self) -> GlossVocab {
        GlossVocab::new((1..=self.glosses).map(|i| format!("G{i:02}"))).expect("distinct names")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "test" => Ok(Self::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub glosses: Vec<String>,
    /// `[T × D_v]`.
    pub video: Array,
    /// `[T × D_k]` features, or `[T × H × W × K]` heatmaps.
    pub keypoint: Array,
    /// `[T × D_o]`.
    pub flow: Array,
    /// Ground-truth frame span of every gloss. Evaluation only.
    pub true_spans: Vec<Span>,
}

impl Sample {
    pub fn frames(&self) -> usize {
        self.video.shape()[0]
    }
}

/// One line of `corpus.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub glosses: Vec<String>,
    /// Tensor file, relative to the manifest.
    pub tensors: String,
    pub true_spans: Vec<Span>,
}

/// Corpus-wide fixed draws: gloss prototypes and modality transforms.
struct World {
    prototypes: Array,
    to_keypoint: Array,
    to_flow: Array,
    /// `[G × K × 2]` keypoint positions per gloss (heatmap mode).
    anchors: Vec<Vec<[f64; 2]>>,
}

fn normal_array(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Array {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Array::new(shape, data).expect("shape")
}

impl World {
    fn new(cfg: &GenConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.inputs;
        let prototypes = normal_array(&mut rng, &[cfg.glosses, d.video], 1.0);
        let to_keypoint = normal_array(&mut rng, &[d.video, d.keypoint], (1.0 / d.video as f64).sqrt());
        let to_flow = normal_array(&mut rng, &[d.video, d.flow], (1.0 / d.video as f64).sqrt());
        let anchors = match &cfg.heatmap {
            Some(h) => (0..cfg.glosses)
                .map(|_| {
                    (0..h.keypoints)
                        .map(|_| {
                            [
                                rng.random_range(0.0..h.height as f64),
                                rng.random_range(0.0..h.width as f64),
                            ]
                        })
                        .collect()
                })
                .collect(),
            None => Vec::new(),
        };
        Self {
            prototypes,
            to_keypoint,
            to_flow,
            anchors,
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
    // Keep per-sample draws off the stream the corpus-wide draws use.
    rng.set_stream(1);
    rng
}

fn split_of(cfg: &GenConfig, index: usize) -> Split {
    if index < cfg.train {
        Split::Train
    } else if index < cfg.train + cfg.dev {
        Split::Dev
    } else {
        Split::Test
    }
}

fn add_noise(rng: &mut ChaCha8Rng, a: Array, std: f64) -> Array {
    if std == 0.0 {
        return a;
    }
    let mut a = a;
    for v in a.data_mut() {
        *v += std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    }
    a
}

fn generate_sample(cfg: &GenConfig, world: &World, vocab: &GlossVocab, index: usize) -> Sample {
    let mut rng = sample_rng(cfg.seed, index);
    let n = rng.random_range(cfg.min_len..=cfg.max_len);
    // No gloss repeats its predecessor.
    let mut ids: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..n {
        let next = match ids.last() {
            None => rng.random_range(0..cfg.glosses),
            Some(&prev) => {
                let r = rng.random_range(0..cfg.glosses - 1);
                if r >= prev {
                    r + 1
                } else {
                    r
                }
            }
        };
        ids.push(next);
    }
    let mut lengths: Vec<usize> = (0..n)
        .map(|_| rng.random_range(cfg.min_frames_per_gloss..=cfg.max_frames_per_gloss))
        .collect();
    // Total length is padded to a multiple of 4 by stretching the final gloss.
    let total: usize = lengths.iter().sum();
    *lengths.last_mut().expect("n ≥ 1") += total.next_multiple_of(ModelConfig::DOWNSAMPLE) - total;

    let mut true_spans = Vec::with_capacity(n);
    let mut frame_gloss = Vec::new();
    for (&g, &len) in ids.iter().zip(&lengths) {
        let start = frame_gloss.len();
        frame_gloss.extend(std::iter::repeat_n(g, len));
        true_spans.push((start, frame_gloss.len()));
    }
    let t = frame_gloss.len();
    let d = cfg.inputs;
    let mut base = Vec::with_capacity(t * d.video);
    for &g in &frame_gloss {
        base.extend_from_slice(world.prototypes.row(g));
    }
    let base = add_noise(&mut rng, Array::new(&[t, d.video], base).expect("shape"), cfg.noise);
    let flow = add_noise(&mut rng, matmul(&base, &world.to_flow).expect("dims"), cfg.noise);
    let keypoint = match &cfg.heatmap {
        None => add_noise(&mut rng, matmul(&base, &world.to_keypoint).expect("dims"), cfg.noise),
        Some(h) => {
            // Jitter in pixels scales with the feature noise.
            let jitter = 4.0 * cfg.noise;
            let points: Vec<Vec<[f64; 2]>> = frame_gloss
                .iter()
                .map(|&g| {
                    world.anchors[g]
                        .iter()
                        .map(|&[x, y]| {
                            let dx: f64 = StandardNormal.sample(&mut rng);
                            let dy: f64 = StandardNormal.sample(&mut rng);
                            [x + jitter * dx, y + jitter * dy]
                        })
                        .collect()
                })
                .collect();
            render_heatmap(&points, h).expect("validated config")
        }
    };
    Sample {
        id: format!("s{index:05}"),
        split: split_of(cfg, index),
        glosses: ids.iter().map(|&g| vocab.glosses()[g].clone()).collect(),
        video: base,
        keypoint,
        flow,
        true_spans,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: GenConfig,
    pub vocab: GlossVocab,
    pub samples: Vec<Sample>,
}

pub const MANIFEST: &str = "corpus.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const GEN_CONFIG_FILE: &str = "gen_config.json";
const TENSOR_DIR: &str = "tensors";

/// Pure function of the config, including its seed. Sample `i` draws from
/// its own stream keyed by `seed ⊕ i`.
pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let world = World::new(cfg);
    let vocab = cfg.vocab();
    let samples = (0..cfg.total())
        .map(|i| generate_sample(cfg, &world, &vocab, i))
        .collect();
    Ok(Corpus {
        config: cfg.clone(),
        vocab,
        samples,
    })
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join(TENSOR_DIR))?;
        io::write_json(&dir.join(VOCAB_FILE), &self.vocab)?;
        io::write_json(&dir.join(GEN_CONFIG_FILE), &self.config)?;
        let mut manifest = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let rel = format!("{TENSOR_DIR}/{}.svtc", s.id);
            io::write_tensors(
                &dir.join(&rel),
                &[("video", &s.video), ("keypoint", &s.keypoint), ("flow", &s.flow)],
            )?;
            manifest.push(ManifestEntry {
                id: s.id.clone(),
                split: s.split,
                glosses: s.glosses.clone(),
                tensors: rel,
                true_spans: s.true_spans.clone(),
            });
        }
        io::write_jsonl(&dir.join(MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let vocab: GlossVocab = io::read_json(&dir.join(VOCAB_FILE))?;
        let config: GenConfig = io::read_json(&dir.join(GEN_CONFIG_FILE))?;
        let manifest: Vec<ManifestEntry> = io::read_jsonl(&dir.join(MANIFEST))?;
        let mut samples = Vec::with_capacity(manifest.len());
        for e in manifest {
            vocab.encode(&e.glosses)?;
            let mut t = io::read_tensors(&dir.join(&e.tensors))?;
            let sample = Sample {
                video: io::take_tensor(&mut t, "video")?,
                keypoint: io::take_tensor(&mut t, "keypoint")?,
                flow: io::take_tensor(&mut t, "flow")?,
                id: e.id,
                split: e.split,
                glosses: e.glosses,
                true_spans: e.true_spans,
            };
            let frames = sample.frames();
            if sample.keypoint.shape()[0] != frames || sample.flow.shape()[0] != frames {
                return Err(Error::Format(format!("{}: modalities disagree on T", sample.id)));
            }
            samples.push(sample);
        }
        Ok(Self { config, vocab, samples })
    }
}

/// Fixed seeded map from flattened `[H × W × K]` heatmaps to `D_k` features.
#[derive(Clone, Debug)]
pub struct HeatmapProjector {
    pub config: HeatmapConfig,
    weights: Array,
}

impl HeatmapProjector {
    pub fn new(config: HeatmapConfig, d_out: usize, seed: u64) -> Self {
        let d_in = config.height * config.width * config.keypoints;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        // Scaled so a single unit peak maps to unit-variance features.
        let weights = normal_array(&mut rng, &[d_in, d_out], 1.0 / (config.keypoints as f64 * config.sigma));
        Self { config, weights }
    }

    /// `[T × h × w × K]` (resized to the configured canvas first if needed) → `[T × D_k]`.
    pub fn project(&self, heatmaps: &Array) -> Result<Array> {
        let s = heatmaps.shape();
        if s.len() != 4 || s[3] != self.config.keypoints {
            return Err(Error::shape("heatmap_project", format!("{s:?}")));
        }
        let resized;
        let h = if (s[1], s[2]) == (self.config.height, self.config.width) {
            heatmaps
        } else {
            resized = super::heatmap::resize_nearest(heatmaps, self.config.height, self.config.width)?;
            &resized
        };
        let flat = h.reshape(&[s[0], self.weights.rows()])?;
        matmul(&flat, &self.weights)
    }
}
