use std::path::{Path, PathBuf};

use synthdoc_core::corpus::{CorpusDir, StopwordList};
use synthdoc_core::lstm::{Checkpoint, TrainConfig};
use synthdoc_core::pipeline;
use synthdoc_core::windowing::WindowConfig;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

fn ingest(out: &Path, exclude: &[&str]) -> pipeline::IngestSummary {
    let fx = fixtures();
    let docs = ["ft/ft911.txt", "la/la010189.txt", "cr/cr93h1.txt"].map(|d| fx.join(d));
    let exclude: Vec<String> = exclude.iter().map(|s| s.to_string()).collect();
    pipeline::ingest(&docs, &fx.join("topics.txt"), &fx.join("qrels.txt"), &exclude, &StopwordList::smart(), out).unwrap()
}

#[test]
fn congressional_record_is_excluded_at_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let summary = ingest(dir.path(), &["CR"]);
    assert_eq!((summary.documents, summary.excluded, summary.topics), (20, 1, 3));
    let corpus = CorpusDir::new(dir.path());
    let docs = corpus.documents().unwrap();
    assert!(docs.iter().all(|d| d.source != "CR"));
    assert!(docs.iter().any(|d| d.source == "LA"));
    assert!(!corpus.vocabulary().unwrap().is_empty());

    let all = tempfile::tempdir().unwrap();
    assert_eq!(ingest(all.path(), &[]).documents, 21);
}

#[test]
fn extraction_is_reproducible_and_reports_sufficiency() {
    let dir = tempfile::tempdir().unwrap();
    ingest(&dir.path().join("corpus"), &["CR"]);
    let corpus = CorpusDir::new(dir.path().join("corpus"));
    let cfg = WindowConfig { radius: 30, min_training_chars: 8000 };
    let a = pipeline::extract(&corpus, None, &cfg, &dir.path().join("a")).unwrap();
    let b = pipeline::extract(&corpus, None, &cfg, &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    for row in &a {
        let file = pipeline::training_file(&dir.path().join("a"), row.query_id);
        assert_eq!(file.exists(), row.passed, "{row:?}");
        if row.passed {
            let other = pipeline::training_file(&dir.path().join("b"), row.query_id);
            assert_eq!(std::fs::read(&file).unwrap(), std::fs::read(other).unwrap());
        }
    }
    let report = std::fs::read_to_string(dir.path().join("a/sufficiency.tsv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(pipeline::extract(&corpus, Some(999), &cfg, &dir.path().join("c")).is_err());
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let dir = tempfile::tempdir().unwrap();
    ingest(&dir.path().join("corpus"), &["CR"]);
    let corpus = CorpusDir::new(dir.path().join("corpus"));
    let train = dir.path().join("train");
    pipeline::extract(&corpus, Some(303), &WindowConfig { radius: 30, min_training_chars: 100 }, &train).unwrap();
    let seq = pipeline::training_file(&train, 303);

    let full_cfg = TrainConfig {
        layers: 2,
        hidden: 16,
        embed_dim: Some(8),
        seq_length: 20,
        batch_size: 4,
        epochs: 2,
        ..TrainConfig::default()
    };
    let straight = dir.path().join("straight.json");
    pipeline::train_file(&seq, &full_cfg, &straight, None, false).unwrap();

    // one epoch, then resume to two
    let resumed = dir.path().join("resumed.json");
    pipeline::train_file(&seq, &TrainConfig { epochs: 1, ..full_cfg.clone() }, &resumed, None, false).unwrap();
    let mut ckpt = Checkpoint::<f32>::load(&resumed).unwrap();
    ckpt.config.epochs = 2;
    ckpt.save(&resumed).unwrap();
    pipeline::train_file(&seq, &full_cfg, &resumed, None, true).unwrap();

    let a = Checkpoint::<f32>::load(&straight).unwrap();
    let b = Checkpoint::<f32>::load(&resumed).unwrap();
    assert_eq!(a.step, b.step);
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
}
