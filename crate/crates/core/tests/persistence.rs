//! Save/load round trips for corpora and checkpoints.

use svtc::io::{read_jsonl, read_tensors};
use svtc::net::{Model, ModelConfig};
use svtc::synthdata::{generate_corpus, Corpus, GenConfig, HeatmapConfig, ManifestEntry, Split};
use svtc::train::{
    evaluate, load_checkpoint, model_config_for, train_to_dir, EpochRecord, HeadChoice, InputPipeline, TrainConfig,
    Workers, CHECKPOINT_FILE, METRICS_FILE,
};

fn small() -> GenConfig {
    GenConfig {
        glosses: 4,
        min_len: 2,
        max_len: 3,
        train: 12,
        dev: 4,
        test: 4,
        seed: 5,
        ..GenConfig::default()
    }
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        d_v: 8,
        d_t: 8,
        d_j: 8,
        d_head: 8,
        fusion_hidden: 8,
        attn_dim: 8,
        ..ModelConfig::default()
    }
}

#[test]
fn corpus_round_trips_through_disk() {
    for heatmap in [None, Some(HeatmapConfig::default())] {
        let corpus = generate_corpus(&GenConfig { heatmap, ..small() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back.config, corpus.config);
        assert_eq!(back.vocab, corpus.vocab);
        assert_eq!(back.samples, corpus.samples);

        let manifest: Vec<ManifestEntry> = read_jsonl(&dir.path().join("corpus.jsonl")).unwrap();
        assert_eq!(manifest.len(), 20);
        let names: Vec<String> = read_tensors(&dir.path().join(&manifest[0].tensors))
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, ["video", "keypoint", "flow"]);
    }
}

#[test]
fn same_seed_same_corpus_different_seed_different_corpus() {
    let a = generate_corpus(&small()).unwrap();
    let b = generate_corpus(&small()).unwrap();
    let c = generate_corpus(&GenConfig { seed: 6, ..small() }).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_ne!(a.samples, c.samples);
    assert_eq!(a.split(Split::Dev).count(), 4);
}

#[test]
fn checkpoint_reproduces_logged_dev_wer() {
    let corpus = generate_corpus(&small()).unwrap();
    let model = Model::new(model_config_for(&corpus, tiny_model()), corpus.vocab.clone()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        align_warmup: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let outcome = train_to_dir(&corpus, model, &cfg, &Workers::serial(), dir.path(), |_| {}).unwrap();

    let records: Vec<serde_json::Value> = read_jsonl(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(records.len(), 3);
    let logged: Vec<f64> = records.iter().map(|r| r["dev_wer"].as_f64().unwrap()).collect();
    let best = logged.iter().copied().fold(f64::INFINITY, f64::min);
    let first_best = logged.iter().position(|&w| w == best).unwrap() + 1;
    assert_eq!(outcome.best_epoch, first_best);
    let in_memory: Vec<&EpochRecord> = outcome.records.iter().collect();
    assert_eq!(in_memory.len(), 3);

    let (loaded, meta) = load_checkpoint(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(meta.epoch, outcome.best_epoch);
    assert_eq!(meta.dev_wer, best);
    assert_eq!(loaded.params.values(), outcome.best.params.values());

    let dev: Vec<_> = corpus.split(Split::Dev).collect();
    let pipeline = InputPipeline::for_corpus(&corpus);
    let report = evaluate(
        &loaded,
        &pipeline,
        &dev,
        HeadChoice::Avg,
        cfg.beam_width,
        &Workers::serial(),
    )
    .unwrap();
    assert_eq!(report.corpus.wer, best);
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let corpus = generate_corpus(&small()).unwrap();
    let model = Model::new(model_config_for(&corpus, tiny_model()), corpus.vocab.clone()).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        align_warmup: 0,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    train_to_dir(&corpus, model, &cfg, &Workers::serial(), dir.path(), |_| {}).unwrap();
    let path = dir.path().join(CHECKPOINT_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
