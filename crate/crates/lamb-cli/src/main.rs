//! `lamb` — the end-to-end pipeline driver: synthesize a corpus, pretrain
//! the location module, train the bi-encoder, index, query, and evaluate.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or artifact failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use lamb_core::baselines::{bm25_build, Bm25Ranker, GeoDistRanker, SdRanker};
use lamb_core::contrastive::{train, train_trace_csv};
use lamb_core::corpus::{
    generate_synthetic_corpus, load_pois, load_questions, poi_text, save_pois, save_questions,
    PoiCollection, PoiType, ReviewDigest, SynthSpec,
};
use lamb_core::encoders::{load_loc_module, save_loc_module, BiEncoder};
use lamb_core::eval::{default_k_retrieve, evaluate, reports_csv, reports_json, EvalMode, ModelRanker, Ranker};
use lamb_core::geo_pretrain::pretrain_location_module;
use lamb_core::index::{build_index, CandidateFilter, EmbeddingIndex};
use lamb_core::nn::fingerprint;
use lamb_core::Error;

#[derive(Parser)]
#[command(name = "lamb", version, about = "Location-aware POI retrieval pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic POI corpus with grounded questions.
    Synth {
        /// Directory receiving pois.jsonl and questions.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        cities: usize,
        #[arg(long, default_value_t = 40)]
        pois_per_city: usize,
        /// Questions per city.
        #[arg(long, default_value_t = 20)]
        questions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain the name location module on POI coordinates.
    PretrainLoc(PipelineArgs),
    /// Two-phase contrastive training of the full bi-encoder.
    Train(PipelineArgs),
    /// Embed every POI into a persisted retrieval index.
    Index(PipelineArgs),
    /// Retrieve top-k POIs for a single question.
    Query(PipelineArgs),
    /// Score a model against gold answers and write reports.
    Eval(PipelineArgs),
    /// Evaluate a reference ranker: sd | bm25 | geo-loc | geo-dist.
    Baseline(PipelineArgs),
}

/// The shared override surface; each subcommand reads the subset it needs.
#[derive(Args)]
struct PipelineArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory holding pois.jsonl and questions.jsonl.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model checkpoint path (output for train, input elsewhere).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Index file path (output for index, input for query/eval).
    #[arg(long)]
    index: Option<PathBuf>,
    /// Results to return or evaluate.
    #[arg(long)]
    k: Option<usize>,
    /// Evaluation mode: local | global.
    #[arg(long)]
    mode: Option<String>,
    /// Restrict candidates to one city.
    #[arg(long)]
    city: Option<String>,
    /// Restrict candidates to one POI type.
    #[arg(long = "type")]
    poi_type: Option<String>,
    /// Baseline name: sd | bm25 | geo-loc | geo-dist.
    #[arg(long)]
    name: Option<String>,
    /// Question text to retrieve for.
    #[arg(long)]
    question: Option<String>,
    /// Reseed every pipeline stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for reports and traces.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel search threads for query.
    #[arg(long)]
    threads: Option<usize>,
}

/// A failure carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            // Unreadable, truncated, or mismatched artifacts are I/O-class
            // failures; everything else is a validation problem.
            Error::Io(_)
            | Error::Parse { .. }
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth { out, cities, pois_per_city, questions, seed } => {
            cmd_synth(&out, cities, pois_per_city, questions, seed)
        }
        Command::PretrainLoc(args) => cmd_pretrain_loc(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Index(args) => cmd_index(&args),
        Command::Query(args) => cmd_query(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Baseline(args) => cmd_baseline(&args),
    }
}

fn cmd_synth(
    out: &Path,
    cities: usize,
    pois_per_city: usize,
    questions: usize,
    seed: u64,
) -> Result<(), Failure> {
    // The generator's whole job is producing artifacts, so every failure
    // here — bad sizes included — is an artifact-production failure.
    let inner = || -> lamb_core::Result<(usize, usize)> {
        let spec = SynthSpec { cities, pois_per_city, questions_per_city: questions };
        let (pois, questions) = generate_synthetic_corpus(&spec, seed)?;
        fs::create_dir_all(out)?;
        save_pois(out.join("pois.jsonl"), &pois)?;
        save_questions(out.join("questions.jsonl"), &questions)?;
        Ok((pois.len(), questions.len()))
    };
    let (n_pois, n_questions) = inner().map_err(|e| Failure::io(e.to_string()))?;
    eprintln!(
        "[lamb synth] seed={seed} cities={cities} pois={n_pois} questions={n_questions} out={}",
        out.display()
    );
    Ok(())
}

/// Load the config (file + flag overrides) and echo it with the seed.
fn resolve(args: &PipelineArgs, command: &str) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    let echo = serde_json::to_string(&config).map_err(|e| Failure::validation(e.to_string()))?;
    eprintln!("[lamb {command}] seed={} config={echo}", config.seed);
    Ok(config)
}

fn require(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    value.ok_or_else(|| Failure::validation(format!("missing required --{flag}")))
}

fn data_dir(args: &PipelineArgs, config: &RunConfig) -> Result<PathBuf, Failure> {
    require(args.data.clone().or_else(|| config.data_dir.clone()), "data")
}

fn model_path(args: &PipelineArgs, config: &RunConfig) -> Result<PathBuf, Failure> {
    require(args.model.clone().or_else(|| config.model_path.clone()), "model")
}

fn index_path(args: &PipelineArgs, config: &RunConfig) -> Result<PathBuf, Failure> {
    require(args.index.clone().or_else(|| config.index_path.clone()), "index")
}

fn load_corpus(dir: &Path) -> Result<(PoiCollection, Vec<lamb_core::corpus::Question>), Failure> {
    let pois = load_pois(dir.join("pois.jsonl"))?;
    let questions = load_questions(dir.join("questions.jsonl"), &pois)?;
    Ok((pois, questions))
}

fn digest_texts(pois: &PoiCollection, config: &RunConfig) -> Result<Vec<ReviewDigest>, Failure> {
    pois.iter()
        .map(|p| poi_text(p, config.text_mode, &config.digest))
        .collect::<lamb_core::Result<_>>()
        .map_err(Failure::from)
}

fn parse_mode(args: &PipelineArgs) -> Result<EvalMode, Failure> {
    match args.mode.as_deref() {
        None | Some("local") => Ok(EvalMode::Local),
        Some("global") => Ok(EvalMode::Global),
        Some(other) => Err(Failure::validation(format!("unknown mode: {other}"))),
    }
}

fn parse_filter(args: &PipelineArgs) -> Result<CandidateFilter, Failure> {
    let poi_type = args
        .poi_type
        .as_deref()
        .map(PoiType::from_str)
        .transpose()?;
    Ok(CandidateFilter { city: args.city.clone(), poi_type })
}

fn cmd_pretrain_loc(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "pretrain-loc")?;
    let data = data_dir(args, &config)?;
    let model_out = model_path(args, &config)?;
    let pois = load_pois(data.join("pois.jsonl"))?;
    let (loc, trace) = pretrain_location_module(&pois, &config.encoder, &config.pretrain)?;
    save_loc_module(&model_out, &loc, &config.encoder, config.pretrain.seed)?;
    eprintln!(
        "[lamb pretrain-loc] epochs={} final_loss={:?} model={}",
        trace.len(),
        trace.last(),
        model_out.display()
    );
    Ok(())
}

fn cmd_train(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "train")?;
    let data = data_dir(args, &config)?;
    let model_out = model_path(args, &config)?;
    let (pois, questions) = load_corpus(&data)?;
    let digests = digest_texts(&pois, &config)?;

    let mut model = BiEncoder::new(config.encoder.clone(), config.seed)?;
    if let Some(pretrained) = &config.pretrained_path {
        let (loc, loc_config, _) = load_loc_module(pretrained)?;
        if loc_config != config.encoder {
            return Err(Failure::validation(format!(
                "pretrained module at {} was built with a different encoder config",
                pretrained.display()
            )));
        }
        model.install_location(loc)?;
    }

    let trace = train(&mut model, &pois, &questions, &digests, &config.train)?;
    model.save(&model_out)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| Failure::io(e.to_string()))?;
        fs::write(out.join("train_trace.csv"), train_trace_csv(&trace))
            .map_err(|e| Failure::io(e.to_string()))?;
    }
    let last = trace.last().expect("training produces at least one epoch");
    eprintln!(
        "[lamb train] epochs={} final_loss={} local_acc1={} global_acc1={} model={}",
        trace.len(),
        last.mean_loss,
        last.local_acc1,
        last.global_acc1,
        model_out.display()
    );
    Ok(())
}

fn cmd_index(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "index")?;
    let data = data_dir(args, &config)?;
    let model_in = model_path(args, &config)?;
    let index_out = index_path(args, &config)?;
    let pois = load_pois(data.join("pois.jsonl"))?;
    let model = BiEncoder::load(&model_in)?;
    let index = build_index(&model, &pois, config.text_mode, &config.digest)?;
    index.save(&index_out)?;
    eprintln!(
        "[lamb index] entries={} dim={} index={}",
        index.len(),
        index.dim(),
        index_out.display()
    );
    Ok(())
}

/// Refuse to search an index built from different model weights.
fn check_fingerprint(model: &BiEncoder, index: &EmbeddingIndex) -> Result<(), Failure> {
    let expected = fingerprint(&model.to_bytes()?);
    if index.fingerprint() != expected {
        return Err(Failure::validation(
            "index fingerprint does not match the model checkpoint",
        ));
    }
    Ok(())
}

fn cmd_query(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "query")?;
    let model_in = model_path(args, &config)?;
    let index_in = index_path(args, &config)?;
    let question = args
        .question
        .clone()
        .ok_or_else(|| Failure::validation("missing required --question"))?;
    let k = args.k.unwrap_or(10);
    let filter = parse_filter(args)?;
    let model = BiEncoder::load(&model_in)?;
    let index = EmbeddingIndex::load(&index_in)?;
    check_fingerprint(&model, &index)?;
    let query = model.encode_question(&question)?;
    let results = match args.threads {
        Some(threads) if threads > 1 => index.search_parallel(&query, k, &filter, threads)?,
        _ => index.search(&query, k, &filter)?,
    };
    for r in &results {
        println!("{}\t{}\t{}", r.rank, r.poi_id, r.score);
    }
    Ok(())
}

fn write_reports(out: &Path, stem: &str, reports: &[lamb_core::eval::EvalReport]) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(e.to_string()))?;
    let csv_path = out.join(format!("{stem}.csv"));
    let json_path = out.join(format!("{stem}.json"));
    fs::write(&csv_path, reports_csv(reports)).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(&json_path, reports_json(reports)?).map_err(|e| Failure::io(e.to_string()))?;
    eprintln!("[lamb report] wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn run_eval(
    ranker: &dyn Ranker,
    questions: &[lamb_core::corpus::Question],
    pois: &PoiCollection,
    mode: EvalMode,
    config: &RunConfig,
) -> Result<lamb_core::eval::EvalReport, Failure> {
    let ns = config.eval_ns.clone().unwrap_or_else(|| mode.default_ns());
    let k_retrieve = default_k_retrieve(&ns);
    Ok(evaluate(ranker, questions, pois, mode, &ns, k_retrieve)?)
}

fn cmd_eval(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "eval")?;
    let data = data_dir(args, &config)?;
    let model_in = model_path(args, &config)?;
    let index_in = index_path(args, &config)?;
    let mode = parse_mode(args)?;
    let (pois, questions) = load_corpus(&data)?;
    let model = BiEncoder::load(&model_in)?;
    let index = EmbeddingIndex::load(&index_in)?;
    check_fingerprint(&model, &index)?;
    let ranker = ModelRanker { model: &model, index: &index };
    let report = run_eval(&ranker, &questions, &pois, mode, &config)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_reports(&out, &format!("eval-{mode}"), &[report])
}

fn cmd_baseline(args: &PipelineArgs) -> Result<(), Failure> {
    let config = resolve(args, "baseline")?;
    let name = args
        .name
        .clone()
        .ok_or_else(|| Failure::validation("missing required --name"))?;
    let data = data_dir(args, &config)?;
    let mode = parse_mode(args)?;
    let (pois, questions) = load_corpus(&data)?;

    let report = match name.as_str() {
        "sd" => run_eval(&SdRanker { pois: &pois }, &questions, &pois, mode, &config)?,
        "bm25" => {
            let index = bm25_build(&pois, config.text_mode, &config.digest)?;
            run_eval(&Bm25Ranker { index: &index }, &questions, &pois, mode, &config)?
        }
        "geo-loc" => {
            // A bi-encoder whose checkpoint used the coordinate location
            // module; mechanically identical to eval on that model.
            let model = BiEncoder::load(model_path(args, &config)?)?;
            let index = EmbeddingIndex::load(index_path(args, &config)?)?;
            check_fingerprint(&model, &index)?;
            let ranker = ModelRanker { model: &model, index: &index };
            run_eval(&ranker, &questions, &pois, mode, &config)?
        }
        "geo-dist" => {
            let model = BiEncoder::load(model_path(args, &config)?)?;
            let index = EmbeddingIndex::load(index_path(args, &config)?)?;
            check_fingerprint(&model, &index)?;
            let ranker = GeoDistRanker {
                model: &model,
                index: &index,
                pois: &pois,
                lambda: config.lambda,
            };
            run_eval(&ranker, &questions, &pois, mode, &config)?
        }
        other => {
            return Err(Failure::validation(format!(
                "unknown baseline: {other} (expected sd | bm25 | geo-loc | geo-dist)"
            )))
        }
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_reports(&out, &format!("baseline-{name}-{mode}"), &[report])
}
