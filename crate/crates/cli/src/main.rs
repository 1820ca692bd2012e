use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use trendforge::description::{LlmClient, LlmConfig, PromptTemplate, API_KEY_ENV};
use trendforge::emitter::EmitConfig;
use trendforge::evaluation::server::{router, serve, summary_report, ServeConfig};
use trendforge::evaluation::{build_eval_set, raters_in, EvalSet, EvalSplit, EvalWindow, ScoreStore};
use trendforge::ingest::{aggregate_corpus, load_corpus, load_corpus_dir, train_split, write_canonical, Reducer};
use trendforge::pipeline::{forge, read_windows, write_windows, Describer, ForgeConfig};
use trendforge::windowing::{sample_batch, TauRange, DEFAULT_TAU_MAX, DEFAULT_TAU_MIN};
use trendforge::WindowSplit;

#[derive(Parser)]
#[command(name = "trendforge", version, about = "Build trend-description instruction datasets from time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a corpus file to canonical JSONL, optionally aggregating it.
    Convert(ConvertArgs),
    /// Draw reproducible windows from one corpus.
    Sample(SampleArgs),
    /// Generate the instruction dataset from a directory of corpora.
    Forge(ForgeArgs),
    /// Blind human evaluation of trend descriptions.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Aggregate this many steps into one.
    #[arg(long, default_value_t = 1)]
    factor: usize,
    #[arg(long, value_enum, default_value_t = ReducerArg::Mean)]
    reducer: ReducerArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReducerArg {
    Mean,
    Sum,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAU_MIN)]
    tau_min: usize,
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    tau_max: usize,
    /// Restrict sampling to the first fraction of every series.
    #[arg(long)]
    train_ratio: Option<f64>,
    /// Tag windows with this split instead of the corpus split.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Holdout,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DescriberArg {
    Rules,
    Llm,
}

#[derive(Args)]
struct ForgeArgs {
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DescriberArg::Rules)]
    describer: DescriberArg,
    #[arg(long)]
    llm_base_url: Option<String>,
    #[arg(long, default_value = "gpt-4")]
    llm_model: String,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Append every request and response to this JSONL file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Prompt template file containing one `{values}` slot.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    template_version: String,
    #[arg(long, default_value_t = DEFAULT_TAU_MIN)]
    tau_min: usize,
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    tau_max: usize,
    #[arg(long, default_value_t = 0.7)]
    train_ratio: f64,
    /// Rotate through the pool of equivalent questions.
    #[arg(long)]
    question_pool: bool,
    /// Inline window values after the window token.
    #[arg(long)]
    inline_window: bool,
    #[arg(long)]
    no_images: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Assemble the evaluation set from windows and per-model descriptions.
    Build(BuildArgs),
    /// Serve the rating API (and optional static UI).
    Serve(ServeArgs),
    /// Print progress, and normalized scores once scoring is complete.
    Summary(SummaryArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Windows file written by `sample`; windows must be test or holdout.
    #[arg(long)]
    windows: PathBuf,
    /// `model=path` pairs; each file holds `{"window_id", "text"}` lines.
    #[arg(long = "model", value_parser = parse_model_arg, required = true)]
    models: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Comma-separated rater ids expected to score every item.
    #[arg(long, value_delimiter = ',')]
    raters: Vec<String>,
    /// Require this shared token on every request.
    #[arg(long, env = "TRENDFORGE_RATER_TOKEN")]
    token: Option<String>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SummaryArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_delimiter = ',')]
    raters: Vec<String>,
}

fn parse_model_arg(raw: &str) -> Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((model, path)) if !model.is_empty() && !path.is_empty() => Ok((model.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected MODEL=PATH, got {raw:?}")),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Convert(args) => convert(args),
        Command::Sample(args) => sample(args),
        Command::Forge(args) => run_forge(args),
        Command::Eval { command } => match command {
            EvalCommand::Build(args) => eval_build(args),
            EvalCommand::Serve(args) => eval_serve(args),
            EvalCommand::Summary(args) => eval_summary(args),
        },
    }
}

fn convert(args: ConvertArgs) -> Result<()> {
    let mut corpus = load_corpus(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    if args.factor > 1 {
        let reducer = match args.reducer {
            ReducerArg::Mean => Reducer::Mean,
            ReducerArg::Sum => Reducer::Sum,
        };
        corpus = aggregate_corpus(&corpus, args.factor, reducer)?;
    }
    let mut sink = BufWriter::new(File::create(&args.out)?);
    write_canonical(&corpus, &mut sink)?;
    sink.flush()?;
    eprintln!("wrote {} series to {}", corpus.records.len(), args.out.display());
    Ok(())
}

fn sample(args: SampleArgs) -> Result<()> {
    let mut corpus = load_corpus(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    if let Some(ratio) = args.train_ratio {
        corpus = train_split(&corpus, ratio)?.train;
    }
    let batch = sample_batch(std::slice::from_ref(&corpus), args.n, args.seed, TauRange::new(args.tau_min, args.tau_max)?)?;
    let mut windows = batch.windows;
    if let Some(split) = args.split {
        let split = match split {
            SplitArg::Train => WindowSplit::Train,
            SplitArg::Test => WindowSplit::Test,
            SplitArg::Holdout => WindowSplit::Holdout,
        };
        windows.iter_mut().for_each(|w| w.split = split);
    }
    let manifest_path = args
        .manifest
        .unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", args.out.display())));
    let manifest = write_windows(&windows, &args.out, &manifest_path)?;
    eprintln!("wrote {} windows to {}", manifest.total, args.out.display());
    Ok(())
}

fn run_forge(args: ForgeArgs) -> Result<()> {
    let corpora = load_corpus_dir(&args.corpus_dir).with_context(|| format!("loading {}", args.corpus_dir.display()))?;
    if corpora.is_empty() {
        bail!("no corpus files (.tsf, .jsonl, .csv) in {}", args.corpus_dir.display());
    }
    let template = match &args.template {
        Some(path) => PromptTemplate::new(std::fs::read_to_string(path)?, args.template_version.clone())?,
        None => PromptTemplate::default(),
    };
    let config = ForgeConfig {
        n: args.n,
        seed: args.seed,
        tau: TauRange::new(args.tau_min, args.tau_max)?,
        train_ratio: args.train_ratio,
        template,
        emit: EmitConfig {
            question_pool: args.question_pool,
            inline_window: args.inline_window,
        },
        images: !args.no_images,
        ..ForgeConfig::default()
    };
    let client;
    let describer = match args.describer {
        DescriberArg::Rules => Describer::Rules,
        DescriberArg::Llm => {
            let Some(base_url) = args.llm_base_url.clone() else {
                bail!("--describer llm needs --llm-base-url");
            };
            let mut llm = LlmConfig::new(base_url, args.llm_model.clone()).with_env_key();
            if llm.api_key.is_none() {
                eprintln!("warning: {API_KEY_ENV} is not set; sending requests without credentials");
            }
            llm.requests_per_minute = args.requests_per_minute;
            llm.max_in_flight = args.max_in_flight;
            llm.transcript = args.transcript.clone();
            client = LlmClient::new(llm)?;
            Describer::Llm(&client)
        }
    };
    let started = Instant::now();
    let manifest = forge(&corpora, &describer, &config, &args.out)?;
    eprintln!(
        "wrote {} samples ({} originals, {} augmented) to {} in {:.1}s",
        manifest.total,
        manifest.originals,
        manifest.augmented,
        args.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Deserialize)]
struct ModelOutput {
    window_id: String,
    text: String,
}

fn read_outputs(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ModelOutput =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.insert(row.window_id, row.text);
    }
    Ok(out)
}

fn eval_build(args: BuildArgs) -> Result<()> {
    let windows = read_windows(&args.windows)?
        .into_iter()
        .map(|r| {
            let split = match r.window.split {
                WindowSplit::Test => EvalSplit::Test,
                WindowSplit::Holdout => EvalSplit::Holdout,
                WindowSplit::Train => bail!("window {} is from the training split", r.window_id),
            };
            Ok(EvalWindow {
                window_id: r.window_id,
                split,
                values: r.window.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = BTreeMap::new();
    for (model, path) in &args.models {
        outputs.insert(model.clone(), read_outputs(path)?);
    }
    let set = build_eval_set(&windows, &outputs, args.seed)?;
    let mut json = serde_json::to_vec_pretty(&set)?;
    json.push(b'\n');
    std::fs::write(&args.out, json)?;
    eprintln!(
        "wrote {} items x {} candidates to {}",
        set.items.len(),
        outputs.len(),
        args.out.display()
    );
    Ok(())
}

fn read_set(path: &Path) -> Result<EvalSet> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn eval_serve(args: ServeArgs) -> Result<()> {
    let set = read_set(&args.set)?;
    let store = ScoreStore::open(&args.store)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let app = router(
        set,
        store,
        ServeConfig {
            raters: args.raters,
            token: args.token,
            static_dir: args.static_dir,
        },
    );
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("serving on http://{addr}");
    runtime.block_on(serve(app, addr))?;
    // give in-flight blocking writes a moment to finish
    runtime.shutdown_timeout(Duration::from_secs(5));
    Ok(())
}

fn eval_summary(args: SummaryArgs) -> Result<()> {
    let set = read_set(&args.set)?;
    let store = ScoreStore::open(&args.store)?;
    let records = store.records();
    let raters = if args.raters.is_empty() {
        raters_in(&records)
    } else {
        args.raters
    };
    let report = summary_report(&set, &records, &raters);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
