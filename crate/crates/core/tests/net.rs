use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svtc::ctc::{ctc_loss, GlossVocab};
use svtc::ndgrad::{check_gradients, Array, Tape, FD_STEP};
use svtc::net::{total_loss, Bound, FusionKind, LossWeights, ModalityInputs, Mode, Model, ModelConfig};

fn vocab(n: usize) -> GlossVocab {
    GlossVocab::new((0..n).map(|i| format!("G{i}"))).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

struct Inputs {
    video: Array,
    keypoint: Array,
    flow: Array,
}

impl Inputs {
    fn new(cfg: &ModelConfig, frames: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            video: random(&mut rng, &[frames, cfg.inputs.video]),
            keypoint: random(&mut rng, &[frames, cfg.inputs.keypoint]),
            flow: random(&mut rng, &[frames, cfg.inputs.flow]),
        }
    }

    fn view(&self) -> ModalityInputs<'_> {
        ModalityInputs {
            video: &self.video,
            keypoint: &self.keypoint,
            flow: &self.flow,
        }
    }
}

fn small(fusion: FusionKind) -> Model {
    let cfg = ModelConfig {
        d_v: 8,
        d_t: 6,
        d_j: 5,
        d_head: 8,
        fusion_hidden: 8,
        attn_dim: 4,
        num_classes: 6,
        fusion,
        ..ModelConfig::default()
    };
    Model::new(cfg, vocab(5)).unwrap()
}

fn randomize(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in model.params.values_mut() {
        *v = random(&mut rng, v.shape()).map(|x| 0.5 * x);
    }
}

fn assert_row_stochastic(lp: &Array) {
    for t in 0..lp.rows() {
        let s: f64 = lp.row(t).iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-9, "row {t} sums to {s}");
    }
}

#[test]
fn block_length_table() {
    let model = small(FusionKind::Mlp);
    for (frames, expect) in [
        (4, [4, 2, 1, 1]),
        (8, [8, 4, 2, 2]),
        (12, [12, 6, 3, 3]),
        (16, [16, 8, 4, 4]),
    ] {
        assert_eq!(model.config.block_lengths(frames), expect);
        let x = Inputs::new(&model.config, frames, frames as u64);
        let tape = Tape::new();
        let p = model.params.bind(&tape, false);
        let feats = model.backbone(&p, &tape, x.view()).unwrap();
        for branch in &feats {
            let lens: Vec<usize> = branch.iter().map(|v| v.shape()[0]).collect();
            assert_eq!(lens, expect);
            assert!(branch.iter().all(|v| v.shape()[1] == model.config.d_v));
        }
    }
    let x = Inputs::new(&model.config, 3, 0);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    assert!(model.backbone(&p, &tape, x.view()).is_err());
}

#[test]
fn end_to_end_shapes_and_streams() {
    let model = small(FusionKind::Attn);
    let x = Inputs::new(&model.config, 16, 1);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let out = model
        .forward(&p, &tape, x.view(), &["G0", "G3", "G1"], Mode::Train)
        .unwrap();
    for lp in &out.log_probs {
        assert_eq!(lp.shape(), vec![4, 6]);
        assert_row_stochastic(&lp.value());
    }
    assert_eq!(out.spn.len(), 6);
    for (i, s) in out.spn.iter().enumerate() {
        // Deepest level first within each branch: lengths 4 (block 3) then 8 (block 2).
        assert_eq!(s.shape(), vec![[4, 8][i % 2], 6]);
        assert_row_stochastic(&s.value());
    }
    let (c1, c2, t1) = (out.f_c1.unwrap(), out.f_c2.unwrap(), out.f_t1.unwrap());
    assert_eq!(c1.shape(), vec![4, 5]);
    assert_eq!(c2.shape(), vec![4, 5]);
    let text = out.text.unwrap();
    assert_eq!(t1.shape(), vec![text.features.rows(), 5]);
    assert_ne!(c1.value(), c2.value());
}

#[test]
fn fusion_is_identity_at_init() {
    let none = small(FusionKind::None);
    for kind in [FusionKind::Mlp, FusionKind::Conv, FusionKind::Attn] {
        let fused = small(kind);
        let x = Inputs::new(&fused.config, 12, 7);
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = none
            .forward(&none.params.bind(&t1, false), &t1, x.view(), &["G0"], Mode::Infer)
            .unwrap();
        let b = fused
            .forward(&fused.params.bind(&t2, false), &t2, x.view(), &["G0"], Mode::Infer)
            .unwrap();
        for h in 0..4 {
            assert_eq!(a.log_probs[h].value(), b.log_probs[h].value(), "{kind} head {h}");
        }
    }
}

#[test]
fn mlp_fusion_symmetric_and_sensitive() {
    let mut model = small(FusionKind::Mlp);
    randomize(&mut model, 3);
    let fusion = &model.fusion[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random(&mut rng, &[5, 8]);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let v = tape.constant(h.clone());
    let out = fusion.forward(&p, [v, v, v]).unwrap();
    assert_eq!(out[0].value(), out[1].value());
    assert_eq!(out[1].value(), out[2].value());

    for kind in [FusionKind::Mlp, FusionKind::Conv, FusionKind::Attn] {
        let mut model = small(kind);
        randomize(&mut model, 5);
        let inputs = [
            random(&mut rng, &[5, 8]),
            random(&mut rng, &[5, 8]),
            random(&mut rng, &[5, 8]),
        ];
        let tape = Tape::new();
        let p = model.params.bind(&tape, false);
        let vars = inputs.clone().map(|a| tape.leaf(a));
        let out = model.fusion[0].forward(&p, vars).unwrap();
        // Sensitivity of branch v's output to every input branch.
        let loss = out[0].sum().unwrap();
        let g = tape.backward(loss).unwrap();
        for (m, var) in vars.iter().enumerate() {
            let norm: f64 = g.wrt(*var).data().iter().map(|x| x.abs()).sum();
            assert!(norm > 1e-6, "{kind}: no gradient into input {m}");
        }
    }
}

#[test]
fn fusion_rejects_mismatched_shapes() {
    let model = small(FusionKind::Mlp);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let a = tape.constant(Array::zeros(&[4, 8]));
    let b = tape.constant(Array::zeros(&[3, 8]));
    assert!(model.fusion[0].forward(&p, [a, a, b]).is_err());
}

#[test]
fn heads_and_adapters_are_isolated() {
    let mut model = small(FusionKind::Mlp);
    randomize(&mut model, 9);
    let x = Inputs::new(&model.config, 16, 2);
    let run = |m: &Model| {
        let tape = Tape::new();
        let p = m.params.bind(&tape, false);
        let out = m.forward(&p, &tape, x.view(), &["G2", "G4"], Mode::Train).unwrap();
        let heads: Vec<Array> = out.log_probs.iter().map(|v| v.value()).collect();
        (heads, out.f_c1.unwrap().value(), out.f_c2.unwrap().value())
    };
    let (base, c1, c2) = run(&model);
    for (h, name) in ["head_v", "head_k", "head_o", "head_c"].iter().enumerate() {
        let mut m = model.clone();
        let id = m.params.id_of(&format!("{name}.classifier.b")).unwrap();
        m.params.set(id, Array::full(&[6], 0.3).map(|v| v * 2.0)).unwrap();
        let mut bias = m.params.get(id).clone();
        bias.data_mut()[1] += 1.0;
        m.params.set(id, bias).unwrap();
        let (heads, _, _) = run(&m);
        for other in 0..4 {
            assert_eq!(
                heads[other] == base[other],
                other != h,
                "perturbing {name} vs head {other}"
            );
        }
    }
    let mut m = model.clone();
    let id = m.params.id_of("v2t_gloss.l2.b").unwrap();
    m.params.set(id, Array::full(&[5], 1.0)).unwrap();
    let (_, c1b, c2b) = run(&m);
    assert_ne!(c1, c1b);
    assert_eq!(c2, c2b);
}

#[test]
fn zero_lateral_and_upsample_contract() {
    let model = small(FusionKind::Mlp);
    let pyr = &model.pyramids[0];
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let top = tape.constant(random(&mut rng, &[2, 8]));
    let zero4 = tape.constant(Array::zeros(&[2, 8]));
    let zero8 = tape.constant(Array::zeros(&[4, 8]));
    let junk = tape.constant(Array::zeros(&[1, 8]));
    let streams = pyr.forward(&p, &[junk, zero8, zero4, top]).unwrap();
    // With zero laterals, level 0 is the head applied to the upsampled top alone.
    let up = pyr.upsample[0].forward(&p, top).unwrap();
    let direct = pyr.heads[0].forward(&p, up).unwrap().1;
    assert_eq!(streams[0].value(), direct.value());
    assert_eq!(streams[1].shape(), vec![4, 6]);
    let bad = tape.constant(Array::zeros(&[3, 8]));
    assert!(pyr.forward(&p, &[junk, bad, zero4, top]).is_err());
}

#[test]
fn loss_weights_and_resummation() {
    let mut model = small(FusionKind::Mlp);
    randomize(&mut model, 11);
    let labels = model.vocab.encode(&["G1", "G2", "G1"]).unwrap();
    let x = Inputs::new(&model.config, 16, 8);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let out = model
        .forward(&p, &tape, x.view(), &["G1", "G2", "G1"], Mode::Train)
        .unwrap();

    let ctc4: f64 = out
        .log_probs
        .iter()
        .map(|v| ctc_loss(*v, &labels).unwrap().item())
        .sum();
    let spn6: f64 = out.spn.iter().map(|v| ctc_loss(*v, &labels).unwrap().item()).sum();

    let only_ctc = LossWeights {
        ctc: 1.0,
        spn: 0.0,
        gloss: 0.0,
        sentence: 0.0,
    };
    let l = total_loss(&out, &labels, &only_ctc, true).unwrap();
    assert!((l.total.item() - ctc4).abs() <= 1e-12);

    let zeros = LossWeights { ctc: 0.0, ..only_ctc };
    assert_eq!(total_loss(&out, &labels, &zeros, true).unwrap().total.item(), 0.0);

    let w = LossWeights {
        ctc: 0.7,
        spn: 0.3,
        gloss: 0.2,
        sentence: 0.4,
    };
    let l = total_loss(&out, &labels, &w, true).unwrap();
    let bd = l.breakdown;
    assert!((bd.ctc - ctc4).abs() <= 1e-12);
    assert!((bd.spn - spn6).abs() <= 1e-12);
    let manual = 0.7 * bd.ctc + 0.3 * bd.spn + 0.2 * bd.gloss + 0.4 * bd.sentence;
    assert!((l.total.item() - manual).abs() <= 1e-12);
    assert!(l.path.unwrap().is_valid(3));
}

#[test]
fn full_graph_gradcheck_micro() {
    let cfg = ModelConfig::micro(4);
    let mut model = Model::new(cfg, vocab(3)).unwrap();
    randomize(&mut model, 21);
    assert!(model.params.num_scalars() >= 200, "{}", model.params.num_scalars());
    let glosses = ["G0", "G2", "G1"];
    let labels = model.vocab.encode(&glosses).unwrap();
    let x = Inputs::new(&model.config, 16, 22);

    // `checked` lists the parameter indices perturbed; the rest stay constant.
    let run = |w: LossWeights, checked: &[usize]| {
        let values: Vec<Array> = checked.iter().map(|&i| model.params.values()[i].clone()).collect();
        check_gradients(&values, FD_STEP, |tape, vars| {
            let mut all: Vec<_> = model.params.values().iter().map(|v| tape.constant(v.clone())).collect();
            for (&i, &v) in checked.iter().zip(vars) {
                all[i] = v;
            }
            let out = model.forward(&Bound::from_vars(all), tape, x.view(), &glosses, Mode::Train)?;
            Ok(total_loss(&out, &labels, &w, true)?.total)
        })
        .unwrap()
    };

    let every: Vec<usize> = (0..model.params.len()).collect();
    let no_sentence = LossWeights {
        sentence: 0.0,
        ..LossWeights::default()
    };
    let r = run(no_sentence, &every);
    assert_eq!(r.checked, model.params.num_scalars());
    assert!(r.max_rel_err <= 1e-4, "{r:?}");

    // The sentence term holds the text side fixed, so finite differences
    // through the text adapter would see a path the gradient deliberately
    // ignores. Check everything else with all four terms on.
    let visual: Vec<usize> = every
        .iter()
        .copied()
        .filter(|&i| !model.params.names()[i].starts_with("t2v."))
        .collect();
    let r = run(LossWeights::default(), &visual);
    assert!(r.max_rel_err <= 1e-4, "{r:?}");
}

#[test]
fn deterministic_init_and_forward() {
    let a = small(FusionKind::Attn);
    let b = small(FusionKind::Attn);
    assert_eq!(a.params.values(), b.params.values());
    let x = Inputs::new(&a.config, 8, 0);
    let run = |m: &Model| {
        let tape = Tape::new();
        let p = m.params.bind(&tape, false);
        m.forward(&p, &tape, x.view(), &["G0"], Mode::Infer).unwrap().log_probs[3].value()
    };
    assert_eq!(run(&a), run(&b));
}
