//! Training loop, evaluation, checkpoints.

mod checkpoint;
mod config;
mod data;
mod eval;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta};
pub use config::{cosine_lr, TrainConfig};
pub use data::{augment_rng, model_config_for, InputPipeline, Prepared};
pub use eval::{
    align_sample, decode, evaluate, head_streams, select_stream, AlignDump, EvalReport, HeadChoice, SampleResult,
};
pub use optim::Adam;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::ndgrad::{Array, Tape};
use crate::net::{total_loss, LossBreakdown, LossWeights, Mode, Model};
use crate::synthdata::{Corpus, Sample, Split};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SVTC_THREADS";

/// `SVTC_THREADS` if set and positive, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map. Results come back in input order, so any
/// reduction over them is independent of the thread count.
pub struct Workers {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = (threads > 1)
                .then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok())
                .flatten();
            Self { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Self {}
        }
    }

    pub fn serial() -> Self {
        Self::new(1)
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}

/// Loss gradients of one sample, in parameter-store order.
pub fn sample_gradients(
    model: &Model,
    x: &Prepared,
    weights: &LossWeights,
    align: bool,
) -> Result<(Vec<Array>, LossBreakdown)> {
    let labels = model.vocab.encode(&x.glosses)?;
    let tape = Tape::new();
    let p = model.params.bind(&tape, true);
    let out = model.forward(&p, &tape, x.inputs(), &x.glosses, Mode::Train)?;
    let loss = total_loss(&out, &labels, weights, align)?;
    let grads = tape.backward(loss.total)?;
    Ok((p.vars().iter().map(|v| grads.wrt(*v).clone()).collect(), loss.breakdown))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub align: bool,
    /// Per-sample means of the unweighted components and the weighted total.
    pub train: LossBreakdown,
    pub samples: usize,
    pub skipped: usize,
    pub dev_wer: f64,
    pub dev_del_pct: f64,
    pub dev_ins_pct: f64,
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Weights from the epoch with the lowest dev WER (earliest on ties).
    pub best: Model,
    pub best_epoch: usize,
    pub best_dev_wer: f64,
    pub last: Model,
    /// Ids skipped because their CTC target was infeasible, per occurrence.
    pub skipped: Vec<String>,
}

fn accumulate(acc: &mut Option<Vec<Array>>, grads: Vec<Array>) {
    match acc {
        None => *acc = Some(grads),
        Some(a) => {
            for (s, g) in a.iter_mut().zip(&grads) {
                for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                    *x += y;
                }
            }
        }
    }
}

fn add_breakdown(acc: &mut LossBreakdown, b: &LossBreakdown) {
    acc.ctc += b.ctc;
    acc.spn += b.spn;
    acc.gloss += b.gloss;
    acc.sentence += b.sentence;
    acc.total += b.total;
}

/// Trains `model` on the corpus's train split, scoring dev after every epoch.
/// `on_epoch` sees each record (and the current weights) as soon as it exists.
pub fn train(
    corpus: &Corpus,
    mut model: Model,
    cfg: &TrainConfig,
    workers: &Workers,
    mut on_epoch: impl FnMut(&EpochRecord, &Model, bool) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.vocab != corpus.vocab {
        return Err(Error::Config("model and corpus vocabularies differ".into()));
    }
    let pipeline = InputPipeline::for_corpus(corpus);
    let train_set: Vec<&Sample> = corpus.split(Split::Train).collect();
    let dev_set: Vec<&Sample> = corpus.split(Split::Dev).collect();
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Config("corpus needs non-empty train and dev splits".into()));
    }
    let mut opt = Adam::new(model.params.values(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut skipped_ids = Vec::new();
    let mut best: Option<(Model, usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let align = cfg.align_active(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((epoch as u64) << 32));
        shuffle_rng.set_stream(4);
        order.shuffle(&mut shuffle_rng);

        let mut sums = LossBreakdown::default();
        let (mut used, mut skipped) = (0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let model_ref = &model;
            let results = workers.map(batch, |&i| {
                let sample = train_set[i];
                let x = if cfg.augment {
                    pipeline.prepare_augmented(sample, &mut augment_rng(cfg.seed, epoch, i))?
                } else {
                    pipeline.prepare(sample)?
                };
                match sample_gradients(model_ref, &x, &cfg.weights, align) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::CtcInfeasible { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })?;
            let mut acc = None;
            let mut count = 0usize;
            for (r, &i) in results.into_iter().zip(batch) {
                match r {
                    Some((grads, bd)) => {
                        accumulate(&mut acc, grads);
                        add_breakdown(&mut sums, &bd);
                        count += 1;
                    }
                    None => {
                        skipped += 1;
                        skipped_ids.push(train_set[i].id.clone());
                    }
                }
            }
            let Some(mut grads) = acc else { continue };
            let inv = 1.0 / count as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            opt.update(model.params.values_mut(), &grads, lr)?;
            used += count;
        }

        let dev = evaluate(&model, &pipeline, &dev_set, HeadChoice::Avg, cfg.beam_width, workers)?;
        let n = used.max(1) as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            align,
            train: LossBreakdown {
                ctc: sums.ctc / n,
                spn: sums.spn / n,
                gloss: sums.gloss / n,
                sentence: sums.sentence / n,
                total: sums.total / n,
            },
            samples: used,
            skipped,
            dev_wer: dev.corpus.wer,
            dev_del_pct: dev.del_pct,
            dev_ins_pct: dev.ins_pct,
        };
        let improved = best.as_ref().is_none_or(|b| record.dev_wer < b.2);
        if improved {
            best = Some((model.clone(), epoch + 1, record.dev_wer));
        }
        on_epoch(&record, &model, improved)?;
        records.push(record);
    }

    let (best_model, best_epoch, best_dev_wer) = best.expect("epochs ≥ 1");
    Ok(TrainOutcome {
        records,
        best: best_model,
        best_epoch,
        best_dev_wer,
        last: model,
        skipped: skipped_ids,
    })
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.svtc";

/// [`train`] with run artifacts in `out`: an append-only `metrics.jsonl`
/// (one line per epoch, no timings) and the best-dev checkpoint.
pub fn train_to_dir(
    corpus: &Corpus,
    model: Model,
    cfg: &TrainConfig,
    workers: &Workers,
    out: &Path,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out)?;
    let metrics = out.join(METRICS_FILE);
    if metrics.exists() {
        std::fs::remove_file(&metrics)?;
    }
    let ckpt = out.join(CHECKPOINT_FILE);
    train(corpus, model, cfg, workers, |record, model, improved| {
        io::append_jsonl(&metrics, record)?;
        progress(record);
        if improved {
            let meta = CheckpointMeta {
                model: model.config.clone(),
                vocab: model.vocab.clone(),
                train: cfg.clone(),
                epoch: record.epoch,
                dev_wer: record.dev_wer,
            };
            save_checkpoint(&ckpt, model, &meta)?;
        }
        Ok(())
    })
}
