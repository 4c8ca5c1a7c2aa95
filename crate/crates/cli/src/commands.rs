use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use serde::{Deserialize, Serialize};
use serde_json::json;
use svtc::diagnostics::{bench, gradcheck_suite};
use svtc::io;
use svtc::net::{FusionKind, Model, ModelConfig};
use svtc::synthdata::{generate_corpus, Corpus, GenConfig, Sample, Split};
use svtc::train::{
    align_sample, evaluate, load_checkpoint, model_config_for, thread_count, train_to_dir, HeadChoice, InputPipeline,
    TrainConfig, Workers, CHECKPOINT_FILE, METRICS_FILE,
};
use svtc::Error;

use crate::{BenchArgs, Cli, Command, EvalArgs, SplitArgs, TrainArgs};

pub enum Failure {
    /// Bad flags or flag values (exit 1).
    Usage(String),
    /// Data, I/O or numerical failure (exit 2).
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<ExitCode, Failure>;

/// Contents of `--config`; every section is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: GenConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string(value).map_err(Error::from)?;
    println!("{s}");
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => io::read_json::<FileConfig>(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::GenData => gen_data(&cli, file),
        Command::Train(a) => train(&cli, file, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Decode(a) => decode(&cli, a),
        Command::Align(a) => align(&cli, a),
        Command::Gradcheck => gradcheck(&cli),
        Command::Bench(a) => bench_cmd(&cli, file, a),
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn gen_data(cli: &Cli, file: FileConfig) -> Outcome {
    let mut cfg = file.data;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    usage(cfg.validate())?;
    let out = out_dir(cli, "corpus");
    let corpus = generate_corpus(&cfg)?;
    corpus.save(&out)?;
    print_json(&json!({
        "out": out,
        "samples": corpus.samples.len(),
        "train": cfg.train,
        "dev": cfg.dev,
        "test": cfg.test,
        "glosses": cfg.glosses,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn train(cli: &Cli, file: FileConfig, a: &TrainArgs) -> Outcome {
    let corpus = Corpus::load(&a.corpus)?;
    let mut model_cfg = model_config_for(&corpus, file.model);
    let mut cfg = file.train;
    if let Some(seed) = cli.seed {
        model_cfg.seed = seed;
        cfg.seed = seed;
    }
    if let Some(f) = &a.fusion {
        model_cfg.fusion = usage(f.parse::<FusionKind>())?;
    }
    let w = &mut cfg.weights;
    let overrides = [
        (a.lambda_ctc, &mut w.ctc),
        (a.lambda_spn, &mut w.spn),
        (a.lambda_g, &mut w.gloss),
        (a.lambda_s, &mut w.sentence),
    ];
    for (flag, field) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr0 {
        cfg.lr0 = v;
    }
    if let Some(v) = a.align_warmup {
        cfg.align_warmup = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if a.no_augment {
        cfg.augment = false;
    }
    usage(cfg.validate())?;
    usage(model_cfg.validate())?;

    let model = Model::new(model_cfg, corpus.vocab.clone())?;
    let out = out_dir(cli, "run");
    let workers = Workers::new(thread_count());
    let outcome = train_to_dir(&corpus, model, &cfg, &workers, &out, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.2e}  loss {:.4}  ctc {:.4}  spn {:.4}  gloss {:.4}  sent {:.4}  dev WER {:.2}%",
            r.epoch,
            r.lr,
            r.train.total,
            r.train.ctc,
            r.train.spn,
            r.train.gloss,
            r.train.sentence,
            100.0 * r.dev_wer
        );
    })?;
    if !outcome.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} infeasible sample occurrences ({:?})",
            outcome.skipped.len(),
            outcome.skipped
        );
    }
    let last = outcome.records.last().expect("epochs ≥ 1");
    print_json(&json!({
        "best_epoch": outcome.best_epoch,
        "best_dev_wer": outcome.best_dev_wer,
        "final_train_loss": last.train.total,
        "first_train_loss": outcome.records[0].train.total,
        "skipped": outcome.skipped.len(),
        "checkpoint": out.join(CHECKPOINT_FILE),
        "metrics": out.join(METRICS_FILE),
    }))?;
    Ok(ExitCode::SUCCESS)
}

struct Loaded {
    model: Model,
    corpus: Corpus,
    split: Split,
}

fn load(a: &SplitArgs) -> Result<Loaded, Failure> {
    let split = usage(a.split.parse::<Split>())?;
    let corpus = Corpus::load(&a.corpus)?;
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    if model.vocab != corpus.vocab || model.config.inputs != corpus.config.inputs {
        return Err(Error::Config("checkpoint does not match the corpus vocabulary or feature widths".into()).into());
    }
    Ok(Loaded { model, corpus, split })
}

fn run_eval(a: &EvalArgs) -> Result<(Loaded, svtc::train::EvalReport), Failure> {
    let head = usage(a.head.parse::<HeadChoice>())?;
    if a.beam_width == 0 {
        return Err(Failure::Usage("beam width must be ≥ 1".into()));
    }
    let l = load(&a.split)?;
    let samples: Vec<&Sample> = l.corpus.split(l.split).collect();
    if samples.is_empty() {
        return Err(Error::Empty { op: "eval" }.into());
    }
    let pipeline = InputPipeline::for_corpus(&l.corpus);
    let report = evaluate(
        &l.model,
        &pipeline,
        &samples,
        head,
        a.beam_width,
        &Workers::new(thread_count()),
    )?;
    Ok((l, report))
}

fn eval(cli: &Cli, a: &EvalArgs) -> Outcome {
    let (_, report) = run_eval(a)?;
    let c = report.corpus;
    if let Some(out) = &cli.out {
        fs::create_dir_all(out).map_err(Error::from)?;
        io::write_json(&out.join("eval.json"), &report)?;
    }
    print_json(&json!({
        "wer": c.wer,
        "ins": c.ins,
        "del": c.del,
        "sub": c.sub,
        "ref_len": c.ref_len,
        "del_pct": report.del_pct,
        "ins_pct": report.ins_pct,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn decode(cli: &Cli, a: &EvalArgs) -> Outcome {
    let (_, report) = run_eval(a)?;
    let mut text = String::new();
    for s in &report.samples {
        text.push_str(&format!("{}\t{}\n", s.id, s.hypothesis.join(" ")));
    }
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(Error::from)?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AlignRecord<'a> {
    id: &'a str,
    path: &'a [usize],
    spans: &'a [(usize, usize)],
    log_score: f64,
}

fn align(cli: &Cli, a: &SplitArgs) -> Outcome {
    let l = load(a)?;
    let out = out_dir(cli, "align");
    fs::create_dir_all(&out).map_err(Error::from)?;
    let pipeline = InputPipeline::for_corpus(&l.corpus);
    let mut dumps = Vec::new();
    for s in l.corpus.split(l.split) {
        dumps.push(align_sample(&l.model, &pipeline, s)?);
    }
    let records: Vec<AlignRecord<'_>> = dumps
        .iter()
        .map(|d| AlignRecord {
            id: &d.id,
            path: &d.path,
            spans: &d.spans,
            log_score: d.log_score,
        })
        .collect();
    io::write_jsonl(&out.join("alignments.jsonl"), &records)?;
    let mats: Vec<(&str, &svtc::ndgrad::Array)> = dumps.iter().map(|d| (d.id.as_str(), &d.similarity)).collect();
    io::write_tensors(&out.join("similarity.svtc"), &mats)?;

    let errs: Vec<f64> = dumps.iter().filter_map(|d| d.boundary_error).collect();
    let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
    print_json(&json!({
        "samples": dumps.len(),
        "out": out,
        "mean_boundary_error": mean,
        "mean_boundary_error_frames": mean.map(|m| m * ModelConfig::DOWNSAMPLE as f64),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(cli: &Cli) -> Outcome {
    let report = gradcheck_suite(cli.seed.unwrap_or(0));
    for e in &report {
        println!(
            "{:<28} max_rel_err {:>10.3e}  tol {:>7.0e}  checked {:>4}  {}",
            e.name,
            e.max_rel_err,
            e.tolerance,
            e.checked,
            if e.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &cli.out {
        fs::create_dir_all(out).map_err(Error::from)?;
        io::write_json(&out.join("gradcheck.json"), &report)?;
    }
    let failed = report.iter().filter(|e| !e.passed).count();
    println!("{} checks, {failed} failed", report.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn bench_cmd(cli: &Cli, file: FileConfig, a: &BenchArgs) -> Outcome {
    let mut cfg = file.model;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    usage(cfg.validate())?;
    if a.frames < ModelConfig::DOWNSAMPLE || a.iterations == 0 {
        return Err(Failure::Usage("need at least 4 frames and 1 iteration".into()));
    }
    let entries = bench(&cfg, a.frames, a.iterations, cfg.seed)?;
    print_json(&entries)?;
    Ok(ExitCode::SUCCESS)
}
