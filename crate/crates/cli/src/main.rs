use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use synthdoc_core::corpus::{CorpusDir, StopwordList};
use synthdoc_core::experiment::{load_tasks, ServiceConfig, TaskService};
use synthdoc_core::lstm::{gradient_check, LstmParams, ModelDims, SampleConfig, TrainConfig};
use synthdoc_core::pipeline;
use synthdoc_core::synth::CLOUD_SIZE;
use synthdoc_core::windowing::WindowConfig;

#[derive(Parser)]
#[command(name = "synthdoc", version, about = "Synthetic relevant documents from per-query character-level LSTMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse TREC documents, topics and qrels into a corpus directory.
    Ingest(IngestArgs),
    /// Build per-query training sequences from query-term windows.
    Extract(ExtractArgs),
    /// Train a character-level LSTM on one training sequence.
    Train(TrainArgs),
    /// Generate one synthetic document from a checkpoint.
    Sample(SampleArgs),
    /// Compare analytic and finite-difference gradients on small models.
    Gradcheck(GradcheckArgs),
    /// Build top-k term wordclouds.
    Cloud(CloudArgs),
    /// Assemble assessment tasks from a wordcloud directory.
    Assemble(AssembleArgs),
    /// Serve tasks to assessors over HTTP.
    Serve(ServeArgs),
    /// Summarize a response log into the findings report.
    Aggregate(AggregateArgs),
}

#[derive(Clone, Copy, Debug)]
enum QuerySel {
    All,
    One(u32),
}

impl QuerySel {
    fn id(self) -> Option<u32> {
        match self {
            QuerySel::All => None,
            QuerySel::One(id) => Some(id),
        }
    }
}

impl FromStr for QuerySel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(QuerySel::All);
        }
        s.parse().map(QuerySel::One).map_err(|_| format!("expected a topic number or 'all', got {s:?}"))
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Document files or glob patterns (gzip is detected by the .gz suffix).
    #[arg(long, required = true, num_args = 1..)]
    docs: Vec<String>,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Source tags to drop, matched against the file-name prefix (CR, FR, ...).
    #[arg(long = "exclude-source", default_value = "CR")]
    exclude_source: Vec<String>,
    /// Stopword list, one word per line. Defaults to the bundled SMART list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "all")]
    query: QuerySel,
    #[arg(long, default_value_t = 30)]
    radius: usize,
    #[arg(long = "min-chars", default_value_t = 2000)]
    min_chars: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training sequence written by `extract`.
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    /// Embedding width; defaults to --hidden.
    #[arg(long = "embed-dim")]
    embed_dim: Option<usize>,
    #[arg(long = "seq-length", default_value_t = 50)]
    seq_length: usize,
    #[arg(long = "batch-size", default_value_t = 50)]
    batch_size: usize,
    #[arg(long = "learning-rate", default_value_t = 2e-3)]
    learning_rate: f64,
    #[arg(long = "grad-clip", default_value_t = 5.0)]
    grad_clip: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the checkpoint every N steps.
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<u64>,
    /// Continue from --out if it exists.
    #[arg(long)]
    resume: bool,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-len", default_value_t = 20_000)]
    max_len: usize,
    /// Take the most likely character instead of sampling.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 12)]
    vocab: usize,
    #[arg(long = "seq-len", default_value_t = 24)]
    seq_len: usize,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
}

#[derive(Args)]
struct CloudArgs {
    /// A text file (generated document) or a docno from the corpus.
    #[arg(long = "in", conflicts_with = "relevant", required_unless_present = "relevant")]
    input: Option<String>,
    /// Instead of --in: write clouds for every relevant document of a query (or all).
    #[arg(long)]
    relevant: Option<QuerySel>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = CLOUD_SIZE)]
    k: usize,
    /// Cloud label; defaults to the input file stem or the docno.
    #[arg(long = "ref")]
    doc_ref: Option<String>,
    /// JSON file for --in, directory for --relevant.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    clouds: PathBuf,
    /// TREC topics file, for the query text shown to assessors.
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long = "min-seconds", default_value_t = 20.0)]
    min_seconds: f64,
    #[arg(long = "target-responses", default_value_t = 10)]
    target_responses: usize,
    /// Append-only response log; defaults to responses.jsonl next to --tasks.
    #[arg(long)]
    responses: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long = "min-seconds", default_value_t = 20.0)]
    min_seconds: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Cloud(a) => cloud(a),
        Command::Assemble(a) => assemble(a),
        Command::Serve(a) => serve(a),
        Command::Aggregate(a) => aggregate(a),
    }
}

fn expand_docs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for pattern in patterns {
        if !pattern.contains(['*', '?', '[']) {
            files.push(PathBuf::from(pattern));
            continue;
        }
        let before = files.len();
        for entry in glob::glob(pattern).with_context(|| format!("bad glob {pattern:?}"))? {
            let path = entry?;
            if path.is_file() {
                files.push(path);
            }
        }
        if files.len() == before {
            log::warn!("{pattern:?} matched no files");
        }
    }
    files.sort();
    files.dedup();
    ensure!(!files.is_empty(), "no document files given");
    Ok(files)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let files = expand_docs(&a.docs)?;
    let stopwords = match &a.stopwords {
        Some(p) => StopwordList::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => StopwordList::smart(),
    };
    let s = pipeline::ingest(&files, &a.topics, &a.qrels, &a.exclude_source, &stopwords, &a.out)?;
    println!(
        "{} documents from {} files ({} excluded by source, {} duplicates), {} topics, {} qrels, {} terms",
        s.documents,
        files.len(),
        s.excluded,
        s.duplicates,
        s.topics,
        s.qrels,
        s.vocabulary
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = WindowConfig { radius: a.radius, min_training_chars: a.min_chars };
    let rows = pipeline::extract(&CorpusDir::new(&a.corpus), a.query.id(), &cfg, &a.out)?;
    println!("query\tchars\tstatus");
    for r in &rows {
        println!("{}\t{}\t{}", r.query_id, r.chars, if r.passed { "pass" } else { "fail" });
    }
    let passed = rows.iter().filter(|r| r.passed).count();
    println!("{passed}/{} queries have enough training text", rows.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        layers: a.layers,
        hidden: a.hidden,
        embed_dim: a.embed_dim,
        seq_length: a.seq_length,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        grad_clip: a.grad_clip,
        epochs: a.epochs,
        rng_seed: a.seed,
        ..TrainConfig::default()
    };
    let report = pipeline::train_file(&a.seq, &cfg, &a.out, a.checkpoint_every, a.resume)?;
    match (report.first_epoch_loss(), report.last_epoch_loss()) {
        (Some(first), Some(last)) => println!(
            "{} steps, mean loss first epoch {first:.4}, last epoch {last:.4}; checkpoint {}",
            report.losses.len(),
            a.out.display()
        ),
        _ => println!("nothing to train; checkpoint {}", a.out.display()),
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let cfg = SampleConfig { temperature: a.temperature, max_len: a.max_len, rng_seed: a.seed, greedy: a.greedy };
    let s = pipeline::sample_checkpoint(&a.ckpt, &cfg)?;
    fs::write(&a.out, &s.text).with_context(|| format!("writing {}", a.out.display()))?;
    let how = if s.hit_eof { "stopped at EOF" } else { "hit --max-len" };
    println!("{} characters ({how}) -> {}", s.text.chars().count(), a.out.display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    use rand::{Rng, SeedableRng};
    ensure!(a.vocab >= 2 && a.seq_len >= 2, "need --vocab and --seq-len of at least 2");
    let mut worst: f64 = 0.0;
    for &layers in &a.layers {
        let dims = ModelDims { vocab: a.vocab, embed: a.hidden, hidden: a.hidden, layers };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(layers as u64));
        let mut params = LstmParams::<f64>::init(dims, &mut rng);
        // larger weights keep lower-layer gradients above finite-difference noise
        for (name, mut block) in params.blocks_mut() {
            if name.ends_with(".w") || name.ends_with(".u") {
                block.mapv_inplace(|x| x * 3.0);
            }
        }
        let eof = a.vocab - 1;
        let seq: Vec<usize> = (0..a.seq_len)
            .map(|i| if i == a.seq_len / 2 { eof } else { rng.random_range(0..eof) })
            .collect();
        let r = gradient_check(&params, &seq, Some(eof))?;
        println!(
            "layers {layers}: {} parameters, max relative error {:.3e} ({}[{}])",
            r.checked, r.max_relative_error, r.worst_block, r.worst_index
        );
        for (block, err) in &r.blocks {
            println!("  {block:<10} {err:.3e}");
        }
        if !r.zero_blocks.is_empty() {
            println!("  blocks without gradient: {:?}", r.zero_blocks);
        }
        worst = worst.max(r.max_relative_error);
    }
    if worst >= a.threshold {
        bail!("max relative error {worst:.3e} is not below {:.0e}", a.threshold);
    }
    println!("ok: below {:.0e}", a.threshold);
    Ok(())
}

fn cloud(a: CloudArgs) -> Result<()> {
    let corpus = CorpusDir::new(&a.corpus);
    if let Some(sel) = a.relevant {
        let n = pipeline::relevant_clouds(&corpus, sel.id(), a.k, &a.out)?;
        println!("{n} relevant-document clouds -> {}", a.out.display());
        return Ok(());
    }
    let input = a.input.expect("clap requires --in without --relevant");
    let stop = corpus.stopwords().context("reading corpus stopwords")?;
    let path = Path::new(&input);
    let cloud = if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let vocab = corpus.vocabulary().context("reading corpus vocabulary")?;
        let doc_ref = a
            .doc_ref
            .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(input.clone()));
        pipeline::synthetic_cloud(&doc_ref, &text, &vocab, &stop, a.k)
    } else {
        let (index, docs) = corpus.document_index().context("reading corpus documents")?;
        let Some(&i) = index.get(input.as_str()) else {
            bail!("{input:?} is neither a file nor a docno in {}", a.corpus.display());
        };
        let mut cloud = pipeline::document_cloud(&docs[i], &stop, a.k);
        if let Some(r) = a.doc_ref {
            cloud.doc_ref = r;
        }
        cloud
    };
    if cloud.is_empty() {
        log::warn!("cloud {} is empty; its query will be excluded from assessment", cloud.doc_ref);
    }
    cloud.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} terms -> {}", cloud.len(), a.out.display());
    Ok(())
}

fn assemble(a: AssembleArgs) -> Result<()> {
    let (tasks, excluded) = pipeline::assemble(&a.clouds, &a.topics, &a.qrels, a.seed, &a.out)?;
    for e in &excluded {
        println!("excluded query {}: {}", e.query_id, e.reason);
    }
    println!("{} tasks -> {}", tasks.len(), a.out.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let tasks = load_tasks(&a.tasks).with_context(|| format!("reading {}", a.tasks.display()))?;
    let log_path = a
        .responses
        .unwrap_or_else(|| a.tasks.with_file_name("responses.jsonl"));
    let cfg = ServiceConfig {
        min_seconds: a.min_seconds,
        target_responses: a.target_responses,
        log_path: Some(log_path.clone()),
    };
    let service = Arc::new(TaskService::open(tasks, cfg).with_context(|| format!("replaying {}", log_path.display()))?);
    let p = service.progress();
    log::info!("{} tasks, {} valid responses so far, log {}", p.tasks.len(), p.total_valid, log_path.display());
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad --host/--port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        synthdoc_core::experiment::serve(listener, service).await?;
        Ok(())
    })
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let report = pipeline::aggregate(&a.responses, &a.tasks, a.min_seconds, &a.out)?;
    print!("{}", report.summary_text());
    println!("report -> {}", a.out.display());
    Ok(())
}
