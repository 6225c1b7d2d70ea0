use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use detox_core::corpus_io::Lexicon;
use detox_core::evaluator::{evaluate_holdout, DEFAULT_FOLDS};
use detox_core::rewriter::RewriteOptions;
use detox_core::vectorizer::StopwordConfig;
use detox_core::{
    build_corpus_index, build_vocabulary, derive_labeled_set, derive_stopwords, detoxify, evaluate_kfold,
    load_lexicon, load_model, load_parallel_corpus, save_model, train, CorpusIndex, Language, TrainConfig,
    TrainedModel,
};
use detox_service::{router, AppState, FeedbackLog, ModelRegistry};

#[derive(Parser)]
#[command(name = "detox", version, about = "Toxicity detection and rewriting for isiXhosa and Yoruba")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a detector on a parallel corpus and write a model file.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold (or single holdout) evaluation.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        k: usize,
        /// Seed for the fold assignment.
        #[arg(long, default_value_t = 42)]
        split_seed: u64,
        /// One stratified 80/20 split instead of k folds.
        #[arg(long)]
        holdout: bool,
        /// Write the full report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify and rewrite one sentence.
    Detox {
        #[command(flatten)]
        rewrite: RewriteArgs,
        text: OsString,
    },
    /// Classify and rewrite one sentence per line of a file, writing TSV.
    Batch {
        #[command(flatten)]
        rewrite: RewriteArgs,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP API. SIGHUP reloads the model directory.
    Serve {
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "feedback.jsonl")]
        feedback_log: PathBuf,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    lang: Language,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Defaults to the language's threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated regularization strengths.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.20)]
    stopword_df: f64,
    /// Inclusive toxic-fraction band, as `low,high`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.35, 0.65])]
    stopword_balance: Vec<f64>,
}

impl ConfigArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::for_language(self.lang);
        cfg.seed = self.seed;
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(grid) = &self.grid {
            cfg.l2_strength_grid = grid.clone();
        }
        cfg.stopwords = StopwordConfig {
            min_df_fraction: self.stopword_df,
            balance_low: self.stopword_balance[0],
            balance_high: self.stopword_balance[1],
        };
        cfg.trained_at = build_time();
        cfg
    }
}

#[derive(Args)]
struct RewriteArgs {
    #[arg(long)]
    model: PathBuf,
    /// Parallel corpus for lookup rewrites.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Overrides the threshold stored in the model.
    #[arg(long)]
    threshold: Option<f64>,
    /// Match corpus entries on exact text rather than normalized form.
    #[arg(long)]
    strict_lookup: bool,
}

struct Rewriter {
    model: TrainedModel,
    corpus: CorpusIndex,
    lexicon: Lexicon,
    options: RewriteOptions,
}

impl RewriteArgs {
    fn load(&self) -> Result<Rewriter> {
        let mut model = load_model(&self.model)?;
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t < 1.0) {
                bail!("threshold {t} outside (0, 1)");
            }
            model.threshold = t;
        }
        let lang = model.language;
        let corpus = match &self.data {
            Some(path) => build_corpus_index(&load_parallel_corpus(path, lang)?)?,
            None => CorpusIndex::default(),
        };
        let lexicon = match &self.lexicon {
            Some(path) => load_lexicon(path, lang)?,
            None => Lexicon::empty(lang),
        };
        Ok(Rewriter {
            model,
            corpus,
            lexicon,
            options: RewriteOptions {
                strict_lookup: self.strict_lookup,
            },
        })
    }
}

/// `SOURCE_DATE_EPOCH` when set, so rebuilt models can be byte-identical.
fn build_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

fn label_name(label: u8) -> &'static str {
    if label == 1 {
        "TOXIC"
    } else {
        "NON-TOXIC"
    }
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    String::from_utf8(bytes).map_err(|_| anyhow::anyhow!("{} is not valid UTF-8", path.display()))
}

fn run_train(cfg: TrainConfig, data: &Path, out: &Path) -> Result<()> {
    cfg.validate()?;
    let pairs = load_parallel_corpus(data, cfg.language)?;
    let examples = derive_labeled_set(&pairs);
    let stopwords = derive_stopwords(&examples, &cfg.stopwords)?;
    let vocab = build_vocabulary(&examples, &stopwords)?;
    let model = train(&examples, &vocab, &cfg)?;
    save_model(&model, out)?;
    for warning in &model.metadata.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "trained {} model on {} examples: {} terms, lambda {}, {} iterations{} -> {}",
        cfg.language,
        examples.len(),
        vocab.len(),
        model.metadata.l2_strength,
        model.metadata.iterations,
        if model.metadata.converged { "" } else { " (not converged)" },
        out.display()
    );
    Ok(())
}

fn run_batch(rewriter: &Rewriter, input: &Path, out: Option<&Path>) -> Result<()> {
    let content = read_utf8(input)?;
    let mut buf = String::from("input\tlabel\tprobability\tmethod\toutput\n");
    for line in content.lines() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let r = detoxify(line, &rewriter.model, &rewriter.corpus, &rewriter.lexicon, rewriter.options)?;
        buf.push_str(&format!(
            "{}\t{}\t{:.6}\t{}\t{}\n",
            line,
            label_name(r.label),
            r.probability,
            r.method.as_str(),
            r.output_text
        ));
    }
    match out {
        Some(path) => std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(buf.as_bytes())?,
    }
    Ok(())
}

async fn serve(models: PathBuf, port: u16, feedback_log: PathBuf, static_dir: Option<PathBuf>) -> Result<()> {
    let registry = Arc::new(ModelRegistry::open(&models)?);
    let loaded = registry.snapshot().languages();
    if loaded.is_empty() {
        tracing::warn!(dir = %models.display(), "no models loaded, serving degraded");
    } else {
        tracing::info!(?loaded, "models loaded");
    }
    let feedback = Arc::new(FeedbackLog::open(&feedback_log)?);
    let app = router(
        AppState {
            models: registry.clone(),
            feedback,
        },
        static_dir,
    );

    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut hup = signal(SignalKind::hangup())?;
        let registry = registry.clone();
        tokio::spawn(async move {
            while hup.recv().await.is_some() {
                match registry.reload() {
                    Ok(langs) => tracing::info!(?langs, "models reloaded"),
                    Err(e) => tracing::error!(error = %e, "reload failed, keeping previous models"),
                }
            }
        });
    }

    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, data, out } => run_train(cfg.config(), &data, &out),
        Command::Eval {
            cfg,
            data,
            k,
            split_seed,
            holdout,
            out,
        } => {
            let cfg = cfg.config();
            let pairs = load_parallel_corpus(&data, cfg.language)?;
            let report = if holdout {
                evaluate_holdout(&pairs, &cfg, split_seed)?
            } else {
                evaluate_kfold(&pairs, &cfg, k, split_seed)?
            };
            print!("{}", report.to_table());
            if let Some(path) = out {
                std::fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Detox { rewrite, text } => {
            let Some(text) = text.to_str() else {
                bail!("input text is not valid UTF-8");
            };
            let rewriter = rewrite.load()?;
            let r = detoxify(text, &rewriter.model, &rewriter.corpus, &rewriter.lexicon, rewriter.options)?;
            println!("[{}] {:.4} {}", label_name(r.label), r.probability, r.method.as_str());
            println!("{}", r.output_text);
            Ok(())
        }
        Command::Batch { rewrite, input, out } => run_batch(&rewrite.load()?, &input, out.as_deref()),
        Command::Serve {
            models,
            port,
            feedback_log,
            static_dir,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(models, port, feedback_log, static_dir))
        }
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
