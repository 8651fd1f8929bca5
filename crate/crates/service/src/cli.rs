//! Command-line front end: `analyze`, `probe` and `serve`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use protattn_core::aminoacid::{aa_attention_correlation, aa_profiles, blosum_agreement};
use protattn_core::corpus::DEFAULT_MAX_LEN;
use protattn_core::metrics::{DEFAULT_MIN_ARCS, DEFAULT_THETA};
use protattn_core::probes::{layer_sweep, ProbeInputs, ProbeTask, Representation, SweepConfig, TrainParams};
use protattn_core::report::{emit_report, Report, ReportConfig, DEFAULT_TOP_N};
use protattn_core::stats::shuffle_null;
use protattn_core::tensors::{load_attention_dir, load_embedding_dir};
use protattn_core::{load_blosum62, load_corpus, score_heads, AnalysisConfig, AttentionSet, Corpus, Metric, Property};

use crate::state::SessionState;

#[derive(Debug, Parser)]
#[command(name = "protattn", version, about = "Attention versus protein structure analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every attention head against one or more properties.
    Analyze(AnalyzeArgs),
    /// Train linear probes layer by layer.
    Probe(ProbeArgs),
    /// Serve analysis results over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory of `.atns` attention dumps.
    #[arg(long)]
    pub attn: PathBuf,
    /// Property names, repeatable or comma-separated; `all` selects every one.
    #[arg(long, required = true, value_delimiter = ',')]
    pub property: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_ARCS)]
    pub min_arcs: u64,
    /// `high` or `weighted`.
    #[arg(long, default_value = "high")]
    pub metric: String,
    /// Analyze row-shuffled attention (null model) with this seed.
    #[arg(long)]
    pub null_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Also compute amino-acid profile correlations and BLOSUM62 agreement.
    #[arg(long)]
    pub aa_correlation: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory of `.embs` embedding dumps (embedding representation).
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Directory of `.atns` attention dumps (attention representation).
    #[arg(long)]
    pub attn: Option<PathBuf>,
    /// `secondary_structure`, `binding_site` or `contact`.
    #[arg(long)]
    pub task: String,
    /// `embedding` or `attention`.
    #[arg(long, default_value = "embedding")]
    pub representation: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_L2)]
    pub l2: f64,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = protattn_core::probes::DEFAULT_VALIDATION_FRACTION)]
    pub validation_fraction: f64,
    /// 1-based layers to probe (default: all), comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub attn: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_ARCS)]
    pub min_arcs: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

/// Failure classes, mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Input(anyhow::Error),
    #[error("{0:#}")]
    Internal(anyhow::Error),
}

impl CliError {
    pub fn input(msg: impl std::fmt::Display) -> Self {
        CliError::Input(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

/// Parses property names; `all` expands to every property.
pub fn parse_properties(names: &[String]) -> Result<Vec<Property>, CliError> {
    let mut out = BTreeSet::new();
    for name in names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
        if name == "all" {
            out.extend(Property::all());
        } else {
            out.insert(name.parse::<Property>().map_err(CliError::input)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::input("no property given"));
    }
    Ok(out.into_iter().collect())
}

pub fn load_checked_corpus(path: &Path, max_len: usize) -> Result<Corpus, CliError> {
    let loaded = load_corpus(path, max_len).map_err(|e| CliError::Input(e.into()))?;
    for rejected in &loaded.rejected {
        log::warn!("{}: skipped record: {rejected}", path.display());
    }
    log::info!("loaded {} proteins from {}", loaded.corpus.len(), path.display());
    Ok(loaded.corpus)
}

/// Loads attention dumps and checks every corpus record has a tensor of the
/// right length.
pub fn load_checked_attention(dir: &Path, corpus: &Corpus) -> Result<AttentionSet, CliError> {
    let tensors = load_attention_dir(dir)
        .with_context(|| format!("reading attention dumps from {}", dir.display()))
        .map_err(CliError::Input)?;
    for record in corpus.iter() {
        let t = tensors
            .get(&record.id)
            .ok_or_else(|| CliError::input(format!("no attention dump for protein {}", record.id)))?;
        t.check_residue_count(record.len()).map_err(|e| CliError::Input(e.into()))?;
    }
    let extra = tensors.keys().filter(|id| corpus.get(id).is_none()).count();
    if extra > 0 {
        log::warn!("{extra} attention dumps have no corpus record and are ignored");
    }
    Ok(tensors)
}

fn analysis_config(theta: f64, min_arcs: u64, metric: &str) -> Result<AnalysisConfig, CliError> {
    let metric: Metric = metric.parse().map_err(CliError::input)?;
    let config = AnalysisConfig { theta, min_arcs, metric, ..Default::default() };
    config.validate().map_err(CliError::input)?;
    Ok(config)
}

pub fn run_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let properties = parse_properties(&args.property)?;
    let config = analysis_config(args.theta, args.min_arcs, &args.metric)?;
    let corpus = load_checked_corpus(&args.corpus, args.max_len)?;
    let mut tensors = load_checked_attention(&args.attn, &corpus)?;
    if let Some(seed) = args.null_seed {
        log::info!("analyzing shuffled attention (null seed {seed})");
        tensors = tensors.iter().map(|(id, t)| (id.clone(), shuffle_null(t, seed))).collect();
    }

    let mut tables = Vec::with_capacity(properties.len());
    for property in &properties {
        let table = score_heads(&corpus, &tensors, property, &config).map_err(|e| CliError::Input(e.into()))?;
        log::info!("{property}: {} of {} heads scored", table.n_present(), table.heads.len());
        tables.push(table);
    }

    let (correlation, agreement) = if args.aa_correlation {
        let profiles = aa_profiles(&corpus, &tensors, &config).map_err(|e| CliError::Input(e.into()))?;
        let corr = aa_attention_correlation(&profiles);
        let agreement = match blosum_agreement(&corr, &load_blosum62()) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("BLOSUM62 agreement undefined: {e}");
                None
            }
        };
        (Some(corr), agreement)
    } else {
        (None, None)
    };

    let report_config = ReportConfig { analysis: config, null_seed: args.null_seed, top_n: args.top_n };
    let mut report = Report::build(report_config, &tables, &[], correlation.as_ref());
    report.blosum_agreement = agreement;
    let written = emit_report(&args.out, &report, &tables).map_err(|e| CliError::Internal(e.into()))?;
    log::info!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

pub fn run_probe(args: &ProbeArgs) -> Result<(), CliError> {
    let task: ProbeTask = args.task.parse().map_err(CliError::input)?;
    let representation: Representation = args.representation.parse().map_err(CliError::input)?;
    let corpus = load_checked_corpus(&args.corpus, args.max_len)?;
    let mut config = SweepConfig::new(task, representation);
    config.params = TrainParams {
        learning_rate: args.lr,
        epochs: args.epochs,
        l2: args.l2,
        seed: args.seed,
        batch_size: args.batch_size,
    };
    config.validation_fraction = args.validation_fraction;
    if let Some(layers) = &args.layers {
        if layers.contains(&0) {
            return Err(CliError::input("--layers are 1-based"));
        }
        config.layers = Some(layers.iter().map(|l| l - 1).collect());
    }

    let embeddings;
    let attention;
    let inputs = match representation {
        Representation::Embedding => {
            let dir = args.emb.as_ref().ok_or_else(|| CliError::input("--emb is required for embedding probes"))?;
            if !dir.is_dir() {
                return Err(CliError::input(format!("embedding directory {} not found", dir.display())));
            }
            embeddings = load_embedding_dir(dir)
                .with_context(|| format!("reading embeddings from {}", dir.display()))
                .map_err(CliError::Input)?;
            ProbeInputs::Embeddings(&embeddings)
        }
        Representation::Attention => {
            let dir = args.attn.as_ref().ok_or_else(|| CliError::input("--attn is required for attention probes"))?;
            attention = load_checked_attention(dir, &corpus)?;
            ProbeInputs::Attention(&attention)
        }
    };
    let results = layer_sweep(&config, &corpus, inputs).map_err(CliError::input)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(CliError::Internal)?;
    let path = args.out.join(format!("probe_{}_{}.json", task.as_str(), representation.as_str()));
    let mut bytes = serde_json::to_vec_pretty(&results).map_err(|e| CliError::Internal(e.into()))?;
    bytes.push(b'\n');
    fs::write(&path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Internal)?;
    for r in &results {
        log::info!("layer {}: {} = {:.4}", r.layer, task.as_str(), r.metric);
    }
    Ok(())
}

/// Loads and validates inputs, then serves until ctrl-c.
pub fn run_serve(args: &ServeArgs) -> Result<(), CliError> {
    let config = analysis_config(args.theta, args.min_arcs, "high")?;
    let corpus = load_checked_corpus(&args.corpus, args.max_len)?;
    let tensors = load_checked_attention(&args.attn, &corpus)?;
    let state = Arc::new(SessionState::new(corpus, tensors, config).map_err(CliError::input)?);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.into()))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                CliError::input(format!("port {} is already in use", args.port))
            } else {
                CliError::Input(anyhow::Error::new(e).context(format!("binding {addr}")))
            }
        })?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, crate::api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("shutting down");
            })
            .await
            .map_err(|e| CliError::Internal(e.into()))
    })
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Probe(p) => run_probe(p),
        Command::Serve(s) => run_serve(s),
    }
}
