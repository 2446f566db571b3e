use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cer_core::corpus::{Corpus, PubMedClient};
use cer_core::eval::{
    evaluate_baseline, evaluate_pipeline, load_dataset, load_video_cases, percent_str, video_metrics, BaselineKind,
    DatasetName, Split,
};
use cer_core::model::Retriever;
use cer_core::pipeline::{build_and_save_index, load_config, Backends, Pipeline, PipelineConfig};
use cer_core::service;
use clap::{ArgGroup, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cer", version, about = "Evidence-based verification of biomedical claims")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = "CER_CONFIG")]
    config: Option<PathBuf>,
    /// Use deterministic in-process model backends (no network).
    #[arg(long, global = true)]
    mock_backends: bool,
    /// Evidence retriever.
    #[arg(long, global = true)]
    retriever: Option<Retriever>,
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add PubMed abstracts (or a local JSONL corpus) to the configured corpus.
    #[command(group(ArgGroup::new("source").required(true).multiple(true).args(["query", "from_jsonl"])))]
    IngestCorpus {
        /// PubMed search term; repeatable.
        #[arg(long)]
        query: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        max_docs: usize,
        /// Merge documents from a corpus JSONL file.
        #[arg(long)]
        from_jsonl: Option<PathBuf>,
    },
    /// Embed and index the corpus, writing the index directory.
    BuildIndex,
    /// Verify a claim, a web page, a media file or a text document.
    #[command(group(ArgGroup::new("input").required(true).args(["claim", "url", "video", "text_file"])))]
    Verify {
        claim: Option<String>,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        video: Option<PathBuf>,
        /// Plain-text document; claims are detected first.
        #[arg(long)]
        text_file: Option<PathBuf>,
    },
    /// Score a trivial baseline or the pipeline on a labelled dataset, or
    /// score video-level verdicts.
    #[command(group(ArgGroup::new("target").required(true).args(["dataset", "videos"])))]
    Evaluate {
        #[arg(long)]
        dataset: Option<DatasetName>,
        /// Dataset file; defaults to the dataset's CER_*_PATH variable.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, requires = "dataset")]
        baseline: Option<BaselineKind>,
        /// Video cases (JSONL) with per-claim labels.
        #[arg(long)]
        videos: Option<PathBuf>,
        /// Write the metric report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write per-claim assessments as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if cli.mock_backends {
        cfg.use_mock_backends();
    }
    if let Some(r) = cli.retriever {
        cfg.retrieval.retriever = r;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

async fn ingest(cfg: &PipelineConfig, queries: &[String], max_docs: usize, from: Option<&Path>) -> Result<()> {
    let mut corpus = if cfg.corpus_path.exists() {
        Corpus::load(&cfg.corpus_path)?
    } else {
        Corpus::from_docs(Vec::new())?
    };
    let before = corpus.len();
    if let Some(p) = from {
        let extra = Corpus::load(p)?;
        corpus = corpus.merged(extra.docs().to_vec())?;
    }
    if !queries.is_empty() {
        let client = PubMedClient::new(cfg.pubmed.clone());
        for q in queries {
            let docs = client.search_fetch(q, max_docs).await.with_context(|| format!("PubMed query {q:?}"))?;
            eprintln!("{q:?}: {} abstracts", docs.len());
            corpus = corpus.merged(docs)?;
        }
    }
    corpus.save(&cfg.corpus_path)?;
    println!("{} documents ({} new) in {}", corpus.len(), corpus.len() - before, cfg.corpus_path.display());
    Ok(())
}

async fn build_index(cfg: &PipelineConfig) -> Result<()> {
    let backends = Backends::from_config(cfg, false)?;
    let bundle = build_and_save_index(cfg, &backends).await?;
    print_json(&json!({
        "index_path": cfg.index_path,
        "meta": bundle.meta,
    }))
}

async fn verify(
    cfg: PipelineConfig,
    claim: Option<String>,
    url: Option<String>,
    video: Option<PathBuf>,
    text_file: Option<PathBuf>,
) -> Result<()> {
    let pipeline = Pipeline::open(cfg).await?;
    if let Some(text) = claim {
        let (a, cached) = pipeline.verify_text(&text).await?;
        return print_json(&json!({
            "cached": cached,
            "summary": service::verdict_phrase(a.label, a.confidence),
            "assessment": a,
        }));
    }
    if let Some(url) = url {
        return print_json(&json!({ "results": pipeline.verify_url(&url).await? }));
    }
    if let Some(path) = video {
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let (_, results) = pipeline.verify_media(&bytes, Some(path.display().to_string())).await?;
        let verdict = cer_core::eval::video_verdict(&results);
        return print_json(&json!({ "video_verdict": verdict, "results": results }));
    }
    if let Some(path) = text_file {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let doc = cer_core::SourceDocument::from_text(text);
        return print_json(&json!({ "results": pipeline.verify_document(&doc).await? }));
    }
    bail!("no input given")
}

fn dataset_path(name: DatasetName, data: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = data {
        return Ok(p);
    }
    match name.path_env().and_then(std::env::var_os) {
        Some(p) => Ok(PathBuf::from(p)),
        None => bail!(
            "no dataset file: pass --data{}",
            name.path_env().map(|v| format!(" or set {v}")).unwrap_or_default()
        ),
    }
}

#[allow(clippy::too_many_arguments)]
async fn evaluate(
    cfg: PipelineConfig,
    dataset: Option<DatasetName>,
    data: Option<PathBuf>,
    split: Option<Split>,
    baseline: Option<BaselineKind>,
    videos: Option<PathBuf>,
    report: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> Result<()> {
    if let Some(path) = videos {
        let cases = load_video_cases(&path)?;
        let m = video_metrics(&cases)?;
        println!("{:<8} {:>9} {:>9} {:>9} {:>8}", "class", "P", "R", "F1", "support");
        for (name, c) in [("real", m.real), ("fake", m.fake)] {
            println!(
                "{name:<8} {:>9} {:>9} {:>9} {:>8}",
                percent_str(c.precision),
                percent_str(c.recall),
                percent_str(c.f1),
                c.support
            );
        }
        for w in &m.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(r) = report {
            write_json(&r, &serde_json::to_value(&m)?)?;
        }
        return Ok(());
    }

    let name = dataset.context("--dataset is required")?;
    let path = dataset_path(name, data)?;
    let mut claims = load_dataset(name, &path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = split {
        claims.retain(|c| c.split == s);
        if claims.is_empty() {
            bail!("no {s:?} claims in {}", path.display());
        }
    }
    let mut out = json!({
        "dataset": name.as_str(),
        "data": path,
        "n": claims.len(),
    });
    let metrics = match baseline {
        Some(kind) => {
            out["baseline"] = json!(kind);
            evaluate_baseline(&claims, kind)?
        }
        None => {
            let pipeline = Pipeline::open(cfg).await?;
            let outcome = evaluate_pipeline(&claims, &pipeline, trace.as_deref()).await?;
            out["retriever"] = json!(pipeline.config().retrieval.retriever);
            out["fingerprint"] = json!(pipeline.fingerprint());
            out["failed"] = json!(outcome.failed);
            out["degraded"] = json!(outcome.degraded);
            if outcome.failed > 0 {
                eprintln!("warning: {} of {} claims failed and were excluded", outcome.failed, outcome.total);
            }
            outcome.report
        }
    };
    print!("{}", metrics.to_table());
    out["metrics"] = metrics.to_json();
    if let Some(r) = report {
        write_json(&r, &out)?;
    }
    Ok(())
}

async fn serve(mut cfg: PipelineConfig, bind: Option<String>) -> Result<()> {
    if let Some(b) = bind {
        cfg.service.bind = b;
    }
    let addr: SocketAddr = cfg.service.bind.parse().with_context(|| format!("bind address {:?}", cfg.service.bind))?;
    let pipeline = Arc::new(Pipeline::open(cfg).await?);
    eprintln!("serving on http://{addr} ({} documents)", pipeline.corpus_len());
    service::serve(pipeline, addr).await?;
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let cfg = config(&cli)?;
    match cli.command {
        Command::IngestCorpus { query, max_docs, from_jsonl } => {
            ingest(&cfg, &query, max_docs, from_jsonl.as_deref()).await
        }
        Command::BuildIndex => build_index(&cfg).await,
        Command::Verify { claim, url, video, text_file } => verify(cfg, claim, url, video, text_file).await,
        Command::Evaluate { dataset, data, split, baseline, videos, report, trace } => {
            evaluate(cfg, dataset, data, split, baseline, videos, report, trace).await
        }
        Command::Serve { bind } => serve(cfg, bind).await,
    }
}
