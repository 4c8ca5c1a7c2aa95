use super::config::ModelConfig;
use super::fusion::Fusion;
use super::layers::{Builder, Conv, ConvTranspose, Linear, Mlp};
use super::params::{Bound, Init, ParamStore};
use super::text::{TextEncoder, TextFeatures};
use crate::ctc::GlossVocab;
use crate::error::{Error, Result};
use crate::ndgrad::{Array, Tape, Var};

/// Modality order used throughout: video, keypoints, flow.
pub const MODALITIES: [&str; 3] = ["v", "k", "o"];

/// Stack of strided temporal-conv blocks for one modality.
#[derive(Clone, Debug)]
pub struct Branch {
    pub blocks: Vec<Conv>,
}

impl Branch {
    fn build(b: &mut Builder<'_>, cfg: &ModelConfig, d_in: usize) -> Self {
        let blocks = cfg
            .temporal_strides
            .iter()
            .enumerate()
            .map(|(i, &stride)| {
                let input = if i == 0 { d_in } else { cfg.d_v };
                b.conv(
                    &format!("block{}", i + 1),
                    cfg.kernel_size,
                    input,
                    cfg.d_v,
                    stride,
                    Init::FanIn,
                )
            })
            .collect();
        Self { blocks }
    }

    fn block<'t>(&self, p: &Bound<'t>, i: usize, x: Var<'t>) -> Result<Var<'t>> {
        self.blocks[i].forward(p, x)?.gelu()
    }
}

/// Linear → two temporal convs (k = 3, stride 1) → linear classifier.
#[derive(Clone, Debug)]
pub struct TemporalHead {
    pub input: Linear,
    pub conv1: Conv,
    pub conv2: Conv,
    pub classifier: Linear,
}

impl TemporalHead {
    fn build(b: &mut Builder<'_>, cfg: &ModelConfig, d_in: usize) -> Self {
        let h = cfg.d_head;
        Self {
            input: b.linear("input", d_in, h),
            conv1: b.conv("conv1", cfg.kernel_size, h, h, 1, Init::FanIn),
            conv2: b.conv("conv2", cfg.kernel_size, h, h, 1, Init::FanIn),
            classifier: b.linear("classifier", h, cfg.num_classes),
        }
    }

    /// Returns `(gloss representation [T′×d_head], log-probabilities [T′×C])`.
    pub fn forward<'t>(&self, p: &Bound<'t>, f: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let h = self.input.forward(p, f)?.gelu()?;
        let h = self.conv1.forward(p, h)?.gelu()?;
        let h = self.conv2.forward(p, h)?.gelu()?;
        let log_probs = self.classifier.forward(p, h)?.log_softmax(1)?;
        Ok((h, log_probs))
    }
}

/// Top-down pyramid over one branch with an auxiliary head per level.
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub upsample: Vec<ConvTranspose>,
    pub heads: Vec<TemporalHead>,
}

impl Pyramid {
    fn build(b: &mut Builder<'_>, cfg: &ModelConfig) -> Self {
        let blocks = cfg.blocks();
        let mut upsample = Vec::new();
        let mut heads = Vec::new();
        for level in 0..cfg.spn_levels {
            let stride = cfg.temporal_strides[blocks - 1 - level];
            upsample.push(b.conv_transpose(&format!("up{level}"), cfg.kernel_size, cfg.d_v, cfg.d_v, stride));
            heads.push(TemporalHead::build(&mut b.scope(&format!("head{level}")), cfg, cfg.d_v));
        }
        Self { upsample, heads }
    }

    /// Auxiliary log-probability streams, deepest level first.
    pub fn forward<'t>(&self, p: &Bound<'t>, block_feats: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let blocks = block_feats.len();
        if blocks < self.heads.len() + 1 {
            return Err(Error::shape("spn", format!("{blocks} block outputs")));
        }
        let mut top = block_feats[blocks - 1];
        let mut out = Vec::with_capacity(self.heads.len());
        for (level, (up, head)) in self.upsample.iter().zip(&self.heads).enumerate() {
            let lateral = block_feats[blocks - 2 - level];
            let upsampled = up.forward(p, top)?;
            if upsampled.shape() != lateral.shape() {
                return Err(Error::shape(
                    "spn",
                    format!("upsampled {:?} vs lateral {:?}", upsampled.shape(), lateral.shape()),
                ));
            }
            top = upsampled.add(lateral)?;
            out.push(head.forward(p, top)?.1);
        }
        Ok(out)
    }
}

/// Per-frame inputs of one sample.
#[derive(Clone, Copy, Debug)]
pub struct ModalityInputs<'a> {
    pub video: &'a Array,
    pub keypoint: &'a Array,
    pub flow: &'a Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Everything needed for the training loss.
    Train,
    /// Only the four main heads.
    Infer,
}

/// Everything the loss and the decoders need from one forward pass.
pub struct ForwardOutput<'t> {
    /// Per-block features of each branch after fusion.
    pub blocks: [Vec<Var<'t>>; 3],
    /// Log-probabilities of the v, k, o and joint heads.
    pub log_probs: [Var<'t>; 4],
    /// Auxiliary pyramid streams, grouped by branch (v levels, k levels, o levels).
    pub spn: Vec<Var<'t>>,
    /// Gloss-level visual adapter output `[T′ × d_j]`.
    pub f_c1: Option<Var<'t>>,
    /// Sentence-level visual adapter output `[T′ × d_j]`.
    pub f_c2: Option<Var<'t>>,
    /// Text adapter output `[N1 + 1 × d_j]`.
    pub f_t1: Option<Var<'t>>,
    pub text: Option<TextFeatures>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: GlossVocab,
    pub params: ParamStore,
    pub branches: [Branch; 3],
    pub fusion: Vec<Fusion>,
    /// v, k, o, joint.
    pub heads: [TemporalHead; 4],
    pub pyramids: [Pyramid; 3],
    pub v2t_gloss: Mlp,
    pub v2t_sentence: Mlp,
    pub t2v: Mlp,
    pub text_encoder: TextEncoder,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: GlossVocab) -> Result<Self> {
        config.validate()?;
        if vocab.size() != config.num_classes {
            return Err(Error::Config(format!(
                "vocabulary has {} classes, config says {}",
                vocab.size(),
                config.num_classes
            )));
        }
        let mut params = ParamStore::new();
        let mut b = Builder::new(&mut params, config.seed);
        let c = &config;
        let in_dims = [c.inputs.video, c.inputs.keypoint, c.inputs.flow];
        let branches =
            [0, 1, 2].map(|m| Branch::build(&mut b.scope(&format!("branch_{}", MODALITIES[m])), c, in_dims[m]));
        let fusion = (1..c.blocks())
            .map(|i| Fusion::build(&mut b.scope(&format!("fusion{i}")), c))
            .collect();
        let heads = [0, 1, 2, 3].map(|h| {
            let name = ["head_v", "head_k", "head_o", "head_c"][h];
            let d_in = if h == 3 { 3 * c.d_v } else { c.d_v };
            TemporalHead::build(&mut b.scope(name), c, d_in)
        });
        let pyramids = [0, 1, 2].map(|m| Pyramid::build(&mut b.scope(&format!("spn_{}", MODALITIES[m])), c));
        let v2t_gloss = b.mlp("v2t_gloss", &[3 * c.d_v, c.d_j, c.d_j, c.d_j]);
        let v2t_sentence = b.mlp("v2t_sentence", &[3 * c.d_v, c.d_j, c.d_j, c.d_j]);
        let t2v = b.mlp("t2v", &[c.d_t, c.d_j, c.d_j, c.d_j]);
        let text_encoder = TextEncoder::new(c.num_classes, c.d_t, c.text_seed);
        Ok(Self {
            config,
            vocab,
            params,
            branches,
            fusion,
            heads,
            pyramids,
            v2t_gloss,
            v2t_sentence,
            t2v,
            text_encoder,
        })
    }

    pub fn text_encode<S: AsRef<str>>(&self, glosses: &[S]) -> Result<TextFeatures> {
        self.text_encoder.encode(glosses, &self.vocab)
    }

    /// Runs the three branches with fusion after every block but the last.
    pub fn backbone<'t>(&self, p: &Bound<'t>, tape: &'t Tape, x: ModalityInputs<'_>) -> Result<[Vec<Var<'t>>; 3]> {
        let frames = x.video.rows();
        let dims = [
            self.config.inputs.video,
            self.config.inputs.keypoint,
            self.config.inputs.flow,
        ];
        let inputs = [x.video, x.keypoint, x.flow];
        for (m, a) in inputs.iter().enumerate() {
            if a.rank() != 2 || a.rows() != frames || a.cols() != dims[m] {
                return Err(Error::shape(
                    "branch_forward",
                    format!(
                        "modality {} input {:?}, expected [{frames} × {}]",
                        MODALITIES[m],
                        a.shape(),
                        dims[m]
                    ),
                ));
            }
        }
        if frames < ModelConfig::DOWNSAMPLE {
            return Err(Error::shape("branch_forward", format!("T={frames} < 4")));
        }
        let mut h = inputs.map(|a| tape.constant(a.clone()));
        let mut feats: [Vec<Var<'t>>; 3] = Default::default();
        for i in 0..self.config.blocks() {
            for (x, branch) in h.iter_mut().zip(&self.branches) {
                *x = branch.block(p, i, *x)?;
            }
            if let Some(f) = self.fusion.get(i) {
                h = f.forward(p, h)?;
            }
            for (f, &x) in feats.iter_mut().zip(&h) {
                f.push(x);
            }
        }
        Ok(feats)
    }

    pub fn forward<'t, S: AsRef<str>>(
        &self,
        p: &Bound<'t>,
        tape: &'t Tape,
        x: ModalityInputs<'_>,
        glosses: &[S],
        mode: Mode,
    ) -> Result<ForwardOutput<'t>> {
        let blocks = self.backbone(p, tape, x)?;
        let last = |m: usize| *blocks[m].last().expect("at least one block");
        let joint = tape.concat_cols(&[last(0), last(1), last(2)])?;
        let mut log_probs = Vec::with_capacity(4);
        for (h, f) in self.heads.iter().zip([last(0), last(1), last(2), joint]) {
            log_probs.push(h.forward(p, f)?.1);
        }
        let log_probs: [Var<'t>; 4] = log_probs.try_into().expect("four heads");

        let mut out = ForwardOutput {
            blocks,
            log_probs,
            spn: Vec::new(),
            f_c1: None,
            f_c2: None,
            f_t1: None,
            text: None,
        };
        if mode == Mode::Infer {
            return Ok(out);
        }
        for m in 0..3 {
            out.spn.extend(self.pyramids[m].forward(p, &out.blocks[m])?);
        }
        out.f_c1 = Some(self.v2t_gloss.forward(p, joint)?);
        out.f_c2 = Some(self.v2t_sentence.forward(p, joint)?);
        let text = self.text_encode(glosses)?;
        out.f_t1 = Some(self.t2v.forward(p, tape.constant(text.features.clone()))?);
        out.text = Some(text);
        Ok(out)
    }
}
