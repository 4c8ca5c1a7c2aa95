//! Finite-difference gradient suite and micro-benchmarks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contrast::{gloss_align_loss, pair_matrices, sentence_align_loss, targets};
use crate::ctc::{beam_decode, ctc_loss, GlossVocab, ProbStream, DEFAULT_BEAM_WIDTH};
use crate::error::Result;
use crate::ndgrad::{check_gradients, Array, GradCheck, Padding, Tape, Var, FD_STEP};
use crate::net::{total_loss, Bound, LossWeights, ModalityInputs, Mode, Model, ModelConfig};
use crate::train::{sample_gradients, Prepared};

/// Tolerance for every primitive and for the CTC loss.
pub const PRIMITIVE_TOL: f64 = 1e-5;
pub const SENTENCE_TOL: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckEntry {
    pub fn from_result(name: &str, tolerance: f64, r: Result<GradCheck>) -> Self {
        match r {
            Ok(g) => Self {
                name: name.to_string(),
                max_rel_err: g.max_rel_err,
                max_abs_err: g.max_abs_err,
                checked: g.checked,
                tolerance,
                passed: g.max_rel_err <= tolerance,
            },
            Err(_) => Self {
                name: name.to_string(),
                max_rel_err: f64::INFINITY,
                max_abs_err: f64::INFINITY,
                checked: 0,
                tolerance,
                passed: false,
            },
        }
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Weighted sum with fixed random coefficients, so every output element
/// contributes a distinct amount to the checked scalar.
fn project<'t>(y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random(&mut rng, &y.shape(), 1.0);
    y.mul(y.tape().constant(c))?.sum()
}

fn check<F>(name: &str, tol: f64, inputs: &[Array], f: F) -> CheckEntry
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    CheckEntry::from_result(name, tol, check_gradients(inputs, FD_STEP, f))
}

/// Micro-model fixture: all widths 2, three glosses, T = 16.
pub struct MicroFixture {
    pub model: Model,
    pub inputs: Prepared,
    pub labels: Vec<usize>,
}

impl MicroFixture {
    pub fn new(seed: u64) -> Self {
        let vocab = GlossVocab::new(["A", "B", "C"]).expect("distinct");
        let mut model = Model::new(ModelConfig::micro(vocab.size()), vocab).expect("valid config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in model.params.values_mut() {
            *v = random(&mut rng, v.shape(), 0.5);
        }
        let glosses: Vec<String> = ["A", "C", "B"].iter().map(|s| s.to_string()).collect();
        let inputs = Prepared {
            video: random(&mut rng, &[16, 2], 1.0),
            keypoint: random(&mut rng, &[16, 2], 1.0),
            flow: random(&mut rng, &[16, 2], 1.0),
            glosses: glosses.clone(),
        };
        let labels = model.vocab.encode(&glosses).expect("known glosses");
        Self { model, inputs, labels }
    }

    /// Loss as a function of the parameters listed in `checked`; the rest
    /// are held constant.
    pub fn check(&self, weights: LossWeights, checked: &[usize]) -> Result<GradCheck> {
        let values: Vec<Array> = checked.iter().map(|&i| self.model.params.values()[i].clone()).collect();
        check_gradients(&values, FD_STEP, |tape, vars| {
            let mut all: Vec<Var<'_>> = self
                .model
                .params
                .values()
                .iter()
                .map(|v| tape.constant(v.clone()))
                .collect();
            for (&i, &v) in checked.iter().zip(vars) {
                all[i] = v;
            }
            let x: ModalityInputs<'_> = self.inputs.inputs();
            let out = self
                .model
                .forward(&Bound::from_vars(all), tape, x, &self.inputs.glosses, Mode::Train)?;
            Ok(total_loss(&out, &self.labels, &weights, true)?.total)
        })
    }
}

/// Runs every named check. Failures are report entries, never errors.
pub fn gradcheck_suite(seed: u64) -> Vec<CheckEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize]| random(&mut rng, shape, 1.0);
    let mut out = Vec::new();

    let (a, b) = (r(&[3, 4]), r(&[4, 2]));
    out.push(check("matmul", PRIMITIVE_TOL, &[a, b], |_, v| {
        project(v[0].matmul(v[1])?, 1)
    }));

    let (a, b) = (r(&[3, 4]), r(&[4]));
    out.push(check("add_sub_mul_broadcast", PRIMITIVE_TOL, &[a, b], |_, v| {
        project(v[0].add(v[1])?.mul(v[0])?.sub(v[1])?.scale(0.7)?, 2)
    }));

    let a = r(&[4, 3]);
    out.push(check("gelu", PRIMITIVE_TOL, &[a], |_, v| project(v[0].gelu()?, 3)));

    let a = r(&[4, 3]).map(|x| x.abs() + 0.5);
    out.push(check("log_exp", PRIMITIVE_TOL, &[a], |_, v| {
        project(v[0].log()?.add(v[0].exp()?)?, 4)
    }));

    let a = r(&[3, 5]);
    out.push(check("softmax", PRIMITIVE_TOL, std::slice::from_ref(&a), |_, v| {
        project(v[0].softmax(1)?.add(v[0].softmax(0)?)?, 5)
    }));
    out.push(check("log_softmax", PRIMITIVE_TOL, &[a], |_, v| {
        project(v[0].log_softmax(1)?, 6)
    }));

    let (x, w) = (r(&[7, 3]), r(&[3, 3, 4]));
    out.push(check("temporal_conv", PRIMITIVE_TOL, &[x, w], |_, v| {
        let same = v[0].temporal_conv(v[1], 2, Padding::Same)?;
        let valid = v[0].temporal_conv(v[1], 1, Padding::Valid)?;
        project(same, 7)?.add(project(valid, 8)?)
    }));

    let (x, w) = (r(&[3, 4]), r(&[3, 2, 4]));
    out.push(check("conv_transpose", PRIMITIVE_TOL, &[x, w], |_, v| {
        project(v[0].conv_transpose(v[1], 2)?, 9)
    }));

    let a = r(&[6, 3]);
    out.push(check("pool_mean", PRIMITIVE_TOL, &[a], |_, v| {
        project(v[0].pool_mean(&[(0, 2), (2, 3), (3, 6)])?, 10)
    }));

    let (a, b) = (r(&[4, 2]), r(&[4, 3]));
    out.push(check("gather_transpose_concat", PRIMITIVE_TOL, &[a, b], |t, v| {
        let cat = t.concat_cols(&[v[0], v[1]])?;
        project(cat.gather_rows(&[3, 0, 3])?.transpose()?.reshape(&[15])?, 11)
    }));

    let (x, w, bias) = (r(&[4, 3]), r(&[3, 2]), r(&[2]));
    out.push(check("affine_mean", PRIMITIVE_TOL, &[x, w, bias], |_, v| {
        v[0].affine(v[1], v[2])?.relu()?.add(v[0].affine(v[1], v[2])?)?.mean()
    }));

    let logits = r(&[6, 4]).map(|x| 2.0 * x);
    out.push(check("ctc_loss", PRIMITIVE_TOL, &[logits], |_, v| {
        ctc_loss(v[0].log_softmax(1)?, &[1, 3, 3])
    }));

    let (vis, txt) = (r(&[3, 4]), r(&[3, 4]));
    let tgt = targets(&[2, 5, 2]);
    out.push(check("gloss_align_loss", PRIMITIVE_TOL, &[vis, txt], move |_, v| {
        gloss_align_loss(&pair_matrices(v[0], v[1])?, &tgt)
    }));

    let (vis, txt) = (r(&[1, 5]), r(&[1, 5]));
    out.push(check("sentence_align_loss", SENTENCE_TOL, &[vis], move |_, v| {
        sentence_align_loss(v[0], &txt)
    }));

    let fx = MicroFixture::new(seed ^ 0x5eed);
    let all: Vec<usize> = (0..fx.model.params.len()).collect();
    let no_sentence = LossWeights {
        sentence: 0.0,
        ..LossWeights::default()
    };
    out.push(CheckEntry::from_result(
        "micro_model",
        MODEL_TOL,
        fx.check(no_sentence, &all),
    ));
    // The text side of the sentence term is detached by design, so the
    // text adapter is excluded once that term is on.
    let visual: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| !fx.model.params.names()[i].starts_with("t2v."))
        .collect();
    out.push(CheckEntry::from_result(
        "micro_model_with_sentence",
        MODEL_TOL,
        fx.check(LossWeights::default(), &visual),
    ));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchEntry {
    pub name: String,
    pub iterations: usize,
    pub mean_ms: f64,
}

fn time<F: FnMut() -> Result<()>>(name: &str, iterations: usize, mut f: F) -> Result<BenchEntry> {
    f()?;
    let start = Instant::now();
    for _ in 0..iterations {
        f()?;
    }
    Ok(BenchEntry {
        name: name.to_string(),
        iterations,
        mean_ms: start.elapsed().as_secs_f64() * 1e3 / iterations as f64,
    })
}

/// Timings of one training step and of decoding at the given model size.
pub fn bench(config: &ModelConfig, frames: usize, iterations: usize, seed: u64) -> Result<Vec<BenchEntry>> {
    let vocab = GlossVocab::new((1..config.num_classes).map(|i| format!("G{i:02}")))?;
    let model = Model::new(config.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let glosses: Vec<String> = (0..3.min(config.num_classes - 1))
        .map(|i| model.vocab.glosses()[i].clone())
        .collect();
    let x = Prepared {
        video: random(&mut rng, &[frames, config.inputs.video], 1.0),
        keypoint: random(&mut rng, &[frames, config.inputs.keypoint], 1.0),
        flow: random(&mut rng, &[frames, config.inputs.flow], 1.0),
        glosses,
    };
    let weights = LossWeights::default();
    let mut out = Vec::new();
    out.push(time("forward_infer", iterations, || {
        let tape = Tape::new();
        let p = model.params.bind(&tape, false);
        model.forward(&p, &tape, x.inputs(), &x.glosses, Mode::Infer)?;
        Ok(())
    })?);
    out.push(time("train_step_sample", iterations, || {
        sample_gradients(&model, &x, &weights, true).map(|_| ())
    })?);
    let stream = {
        let tape = Tape::new();
        let p = model.params.bind(&tape, false);
        let o = model.forward(&p, &tape, x.inputs(), &x.glosses, Mode::Infer)?;
        ProbStream::from_log_probs(&o.log_probs[3].value())?
    };
    out.push(time("beam_decode_w5", iterations, || {
        beam_decode(&stream, DEFAULT_BEAM_WIDTH).map(|_| ())
    })?);
    Ok(out)
}
