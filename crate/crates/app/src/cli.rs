//! `pcib` command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pcib_core::synthetic::PlantedSpec;
use pcib_core::{FeatureVariant, ModelKind, QcaTriple};

use crate::backend::{load_extractor, Backends};
use crate::commands::{self, LabeledCache};
use crate::error::{exit, AppError, AppResult, Context};
use crate::scoring::Scorer;
use crate::server::{serve, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "pcib", version, about = "Signal-based hallucination detection for RAG answers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SignalArgs {
    /// Signal config JSON (defaults when omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hedge/definitive lexicon file.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Use the deterministic mock backend instead of PCIB_BACKEND_URL / PCIB_NLI_URL.
    #[arg(long)]
    pub mock: bool,
    /// Mock backend seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ScorerArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Score with 1 - ESI_harm instead of a trained model.
    #[arg(long)]
    pub theory_guided: bool,
}

impl ScorerArgs {
    fn load(&self) -> AppResult<Scorer> {
        match &self.model {
            Some(p) => Ok(Scorer::Model(Box::new(commands::load_model(p)?))),
            None => Ok(Scorer::TheoryGuided),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract signals for a dataset into the signal cache.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        signals: SignalArgs,
    },
    /// Write a planted synthetic signal cache.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Use the wide-margin class parameters.
        #[arg(long)]
        wide_margin: bool,
        /// Store only the BASE columns.
        #[arg(long)]
        base_only: bool,
    },
    /// Train a classifier on cached signals; prints the out-of-fold report.
    Train {
        #[arg(long)]
        cache: PathBuf,
        /// Dataset JSONL supplying labels (defaults to labels in the cache).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "meta")]
        kind: ModelKind,
        #[arg(long, default_value = "improved")]
        variant: FeatureVariant,
        /// Train config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model or the theory-guided score on cached signals.
    Eval {
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Expected model variant; a mismatch is an error.
        #[arg(long)]
        variant: Option<FeatureVariant>,
        /// Directory for report.json, roc.csv and pr.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also run the BASE vs IMPROVED out-of-fold grid.
        #[arg(long)]
        ablate: bool,
        /// Train config JSON for --ablate.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a single (question, context, answer) triple.
    Score {
        #[arg(long)]
        question: String,
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long)]
        answer: String,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        signals: SignalArgs,
    },
    /// Run the HTTP scoring service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 8)]
        max_in_flight: usize,
        #[command(flatten)]
        signals: SignalArgs,
    },
}

fn check_threshold(t: f64) -> AppResult<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(AppError::usage(format!("--threshold must be in [0, 1], got {t}")))
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").context("writing stdout")
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Extract { dataset, cache, signals } => {
            let (extractor, digest) = load_extractor(signals.config.as_deref(), signals.lexicon.as_deref())?;
            let backends = Backends::select(signals.mock, signals.seed, None)?;
            let summary = commands::run_extract(&dataset, &cache, &extractor, &digest, &backends)?;
            log::info!(
                "{} example(s): {} cached, {} extracted",
                summary.total,
                summary.cache_hits,
                summary.extracted
            );
            print_json(&summary)
        }
        Command::Synth { n, seed, out, wide_margin, base_only } => {
            let spec = if wide_margin { PlantedSpec::wide_margin(seed, n) } else { PlantedSpec::new(seed, n) };
            let count = commands::synth(&spec, &out, base_only)?;
            log::info!("wrote {count} planted record(s) to {}", out.display());
            Ok(())
        }
        Command::Train { cache, labels, kind, variant, config, seed, out } => {
            let cfg = commands::load_train_config(config.as_deref(), seed)?;
            let data = commands::load_labeled_cache(&cache, labels.as_deref())?;
            let (model, report) = commands::train_model(&data, kind, variant, &cfg)?;
            model.save(&out).context(format!("writing {}", out.display()))?;
            print_json(&report)
        }
        Command::Eval { cache, scorer, labels, variant, out_dir, ablate, config, seed } => {
            let scorer = scorer.load()?;
            if let (Some(v), Scorer::Model(m)) = (variant, &scorer) {
                if m.variant != v {
                    return Err(AppError::usage(format!("model was trained on {} features, not {v}", m.variant)));
                }
            }
            let data: LabeledCache = commands::load_labeled_cache(&cache, labels.as_deref())?;
            let scores = commands::eval_scores(&data, &scorer)?;
            let eval = pcib_core::metrics::evaluate(&scores, &data.labels).context("evaluating")?;
            if let Some(dir) = &out_dir {
                commands::write_eval_outputs(&eval, dir)?;
            }
            print_json(&eval.report)?;
            if ablate {
                let cfg = commands::load_train_config(config.as_deref(), seed)?;
                let rows = commands::ablate(&data, &cfg)?;
                eprint!("{}", commands::ablation_table(&rows));
                if let Some(dir) = &out_dir {
                    commands::write_ablation_csv(&rows, &dir.join("ablation.csv"))?;
                }
            }
            Ok(())
        }
        Command::Score { question, context, answer, scorer, threshold, signals } => {
            check_threshold(threshold)?;
            let scorer = scorer.load()?;
            let (extractor, _) = load_extractor(signals.config.as_deref(), signals.lexicon.as_deref())?;
            let backends = Backends::select(signals.mock, signals.seed, None)?;
            let triple = QcaTriple { id: "cli".into(), question, context, answer };
            let resp = commands::score(&triple, &extractor, &backends, &scorer, threshold)?;
            print_json(&resp)
        }
        Command::Serve { bind, scorer, threshold, max_in_flight, signals } => {
            check_threshold(threshold)?;
            if max_in_flight == 0 {
                return Err(AppError::usage("--max-in-flight must be at least 1"));
            }
            let scorer = scorer.load()?;
            let (extractor, _) = load_extractor(signals.config.as_deref(), signals.lexicon.as_deref())?;
            let backends = Backends::select(signals.mock, signals.seed, Some(max_in_flight))?;
            let state = Arc::new(ServiceState::new(extractor, backends, scorer, threshold, max_in_flight));
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await.context(format!("binding {bind}"))?;
                log::info!("listening on {}", listener.local_addr().map_or(bind.clone(), |a| a.to_string()));
                serve(listener, state).await.context("server error")
            })
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
