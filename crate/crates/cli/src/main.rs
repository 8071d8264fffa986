use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use logicbench::dataset::{
    build_dataset, corpus_stats, read_dataset, read_jsonl, verify_instances, write_atomic, write_dataset, GenContext,
    Instance, GENERATOR, SCHEMA_VERSION,
};
use logicbench::eval::{
    build_prompts, query_model, read_prompts, read_records, score, write_prompts, write_records, CotExemplars,
    ModelEndpoint, PromptMode, PromptSpec, RetryPolicy, ScoreReport,
};
use logicbench::parallel::Parallelism;
use logicbench::structure::StructureConfig;
use logicbench::surface::{load_sentence_bank, BankFormat, SentenceBank, TemplateSet};

#[derive(Parser)]
#[command(name = "logicbench", version, about = "Deductive reasoning benchmark generator and evaluation harness")]
struct Cli {
    /// Worker threads for generation, verification and evaluation (default: logical CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write train/validation/test JSONL files.
    Gen(GenArgs),
    /// Re-check every stored label against the entailment oracle.
    Verify {
        /// JSONL files or dataset directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Readability, vocabulary and histograms of a dataset.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Render prompts to JSONL without touching the network.
    Prompts(PromptArgs),
    /// Send prompts to a chat-completion endpoint and record responses.
    Eval(EvalArgs),
    /// Score recorded responses against gold labels.
    Score(ScoreArgs),
    /// Score a prior-knowledge run, querying an endpoint first if no records are given.
    PkTest(PkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BankFormatArg {
    Tsv,
    Plain,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 7000)]
    n: usize,
    /// Inclusive depth range `lo:hi`.
    #[arg(long, default_value = "1:7", value_parser = parse_depths)]
    depths: (usize, usize),
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Sentence bank (GenericsKB-style TSV or one sentence per line). Defaults to the built-in bank.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Bank format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    bank_format: Option<BankFormatArg>,
    /// Expression template file. Defaults to the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Keep premises in derivation order instead of shuffling them.
    #[arg(long)]
    no_shuffle: bool,
    /// Expand side premises into their own derivations.
    #[arg(long)]
    branching: bool,
    /// Allow conditional and disjunction final conclusions.
    #[arg(long)]
    compound_roots: bool,
    #[arg(long, default_value_t = StructureConfig::default().max_nesting)]
    max_nesting: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ZeroShot,
    FewShot,
    ChainOfThought,
    PkTest,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ZeroShot => PromptMode::ZeroShot,
            ModeArg::FewShot => PromptMode::FewShot,
            ModeArg::ChainOfThought => PromptMode::ChainOfThought,
            ModeArg::PkTest => PromptMode::PkTest,
        }
    }
}

#[derive(Args)]
struct PromptArgs {
    /// Instances to prompt for (JSONL file or dataset directory).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "zero-shot")]
    mode: ModeArg,
    /// Exemplar count for few-shot and chain-of-thought (default 3).
    #[arg(long)]
    shots: Option<usize>,
    /// Exemplar pool for few-shot prompts (default: train.jsonl next to --data).
    #[arg(long)]
    exemplar_pool: Option<PathBuf>,
    /// Chain-of-thought exemplar file (default: built-in set).
    #[arg(long)]
    cot_exemplars: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EndpointArgs {
    /// Base URL of an OpenAI-compatible API, e.g. http://localhost:8000/v1
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    model: String,
    /// Environment variable holding the bearer token; omit for unauthenticated servers.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long, default_value_t = 0.6)]
    temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    top_p: f64,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Requests in flight (default: --workers or 4).
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, default_value_t = RetryPolicy::default().max_retries)]
    retries: u32,
    #[arg(long, default_value_t = RetryPolicy::default().initial_backoff_ms)]
    backoff_ms: u64,
}

impl EndpointArgs {
    fn endpoint(&self, workers: Option<usize>) -> ModelEndpoint {
        let mut e = ModelEndpoint::new(&self.base_url, &self.model);
        e.token_env = self.token_env.clone();
        e.temperature = self.temperature;
        e.top_p = self.top_p;
        e.max_tokens = self.max_tokens;
        e.max_parallel = self.max_parallel.or(workers).unwrap_or(4);
        e.timeout_secs = self.timeout_secs;
        e.retry.max_retries = self.retries;
        e.retry.initial_backoff_ms = self.backoff_ms;
        e
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    prompts: PathBuf,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    records: PathBuf,
    /// Gold instances (JSONL file or dataset directory).
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value = "zero-shot")]
    mode: ModeArg,
    /// Writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PkArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Existing responses to pk prompts; when absent the endpoint is queried.
    #[arg(long, conflicts_with = "base_url")]
    records: Option<PathBuf>,
    #[arg(long, requires = "model")]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Where queried responses are written.
    #[arg(long)]
    records_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_depths(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad lower depth `{lo}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad upper depth `{hi}`"))?;
    if lo == 0 || lo > hi {
        return Err(format!("depth range {lo}:{hi} must satisfy 1 <= lo <= hi"));
    }
    Ok((lo, hi))
}

/// Failure that should end the process with status 1 after its message.
struct Reported(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Reported(msg))) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Result<(), Reported>> {
    let workers = cli.workers;
    match cli.command {
        Command::Gen(args) => gen(args, workers).map(Ok),
        Command::Verify { inputs } => verify(&inputs),
        Command::Stats { inputs, json } => stats(&inputs, json).map(Ok),
        Command::Prompts(args) => prompts(args).map(Ok),
        Command::Eval(args) => eval(args, workers).map(Ok),
        Command::Score(args) => score_cmd(args).map(Ok),
        Command::PkTest(args) => pk_test(args, workers).map(Ok),
    }
}

#[derive(Serialize)]
struct GenConfig {
    seed: u64,
    n: usize,
    depths: String,
    bank: String,
    bank_format: &'static str,
    templates: String,
    shuffle: bool,
    structure: StructureConfig,
}

fn gen(args: GenArgs, workers: Option<usize>) -> Result<()> {
    let (bank, bank_format) = match &args.bank {
        Some(path) => {
            let format = match args.bank_format {
                Some(BankFormatArg::Tsv) => BankFormat::Tsv,
                Some(BankFormatArg::Plain) => BankFormat::Plain,
                None => BankFormat::from_path(path),
            };
            let bank = load_sentence_bank(path, format).with_context(|| format!("loading bank {}", path.display()))?;
            (bank, if format == BankFormat::Tsv { "tsv" } else { "plain" })
        }
        None => (SentenceBank::fallback(), "builtin"),
    };
    let templates = match &args.templates {
        Some(path) => TemplateSet::load(path).with_context(|| format!("loading templates {}", path.display()))?,
        None => TemplateSet::builtin(),
    };
    let structure = StructureConfig {
        max_nesting: args.max_nesting,
        branching: args.branching,
        compound_roots: args.compound_roots,
        ..StructureConfig::default()
    };
    let config = GenConfig {
        seed: args.seed,
        n: args.n,
        depths: format!("{}:{}", args.depths.0, args.depths.1),
        bank: args.bank.as_ref().map_or("builtin".into(), |p| p.display().to_string()),
        bank_format,
        templates: args.templates.as_ref().map_or("builtin".into(), |p| p.display().to_string()),
        shuffle: !args.no_shuffle,
        structure: structure.clone(),
    };
    eprintln!("effective config: {}", serde_json::to_string(&config)?);
    eprintln!("workers: {}", workers.unwrap_or_else(rayon::current_num_threads));
    eprintln!(
        "bank: {} sentences ({} rejected, {} duplicates)",
        bank.len(),
        bank.stats.rejected,
        bank.stats.duplicates
    );

    let mut ctx = GenContext::new(&bank, &templates, args.seed);
    ctx.structure = structure;
    ctx.shuffle = !args.no_shuffle;
    ctx.parallelism = Parallelism::Parallel;
    let split = build_dataset(args.n, args.depths.0..=args.depths.1, &ctx)?;
    write_dataset(&split, &args.out)?;

    let counts: BTreeMap<&str, usize> = split.parts().iter().map(|(name, part)| (*name, part.len())).collect();
    let metadata = json!({
        "generator": GENERATOR,
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "template_checksum": templates.checksum,
        "bank_checksum": bank.checksum,
        "bank_stats": bank.stats,
        "splits": counts,
    });
    let mut text = serde_json::to_string_pretty(&metadata)?;
    text.push('\n');
    write_atomic(&args.out.join("metadata.json"), text.as_bytes())?;
    println!(
        "wrote {} instances to {} (train {}, validation {}, test {})",
        split.len(),
        args.out.display(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

/// Instances from JSONL files and dataset directories, in argument order.
fn load_instances(inputs: &[PathBuf]) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for path in inputs {
        if path.is_dir() {
            out.extend(read_dataset(path)?.all().cloned());
        } else {
            out.extend(read_jsonl(path)?);
        }
    }
    Ok(out)
}

fn verify(inputs: &[PathBuf]) -> Result<Result<(), Reported>> {
    let instances = load_instances(inputs)?;
    let report = verify_instances(&instances, Parallelism::Parallel);
    if report.is_clean() {
        println!("{}/{} labels verified", report.verified(), report.total);
        return Ok(Ok(()));
    }
    let mut msg = String::new();
    for f in &report.failures {
        msg.push_str(&format!("FAILED {}: {}\n", f.id, f.reason));
    }
    msg.push_str(&format!("{}/{} labels verified", report.verified(), report.total));
    Ok(Err(Reported(msg)))
}

fn stats(inputs: &[PathBuf], as_json: bool) -> Result<()> {
    let instances = load_instances(inputs)?;
    let s = corpus_stats(&instances);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }
    println!("instances: {}", s.instances);
    match s.fk_grade {
        Some(g) => println!("flesch-kincaid grade: {g:.2}"),
        None => println!("flesch-kincaid grade: n/a (empty corpus)"),
    }
    println!("vocabulary: {}", s.vocabulary);
    println!("sentences/words/syllables: {}/{}/{}", s.counts.sentences, s.counts.words, s.counts.syllables);
    println!("by depth:");
    for (d, n) in &s.by_depth {
        println!("  {d:>2}  {n}");
    }
    println!("by label:");
    for (l, n) in &s.by_label {
        println!("  {l:<9}  {n}");
    }
    Ok(())
}

fn sibling_train(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("train.jsonl")
    } else {
        data.with_file_name("train.jsonl")
    }
}

fn prompts(args: PromptArgs) -> Result<()> {
    let mode = PromptMode::from(args.mode);
    let mut spec = PromptSpec::new(mode);
    if let Some(k) = args.shots {
        spec = spec.with_shots(k);
    }
    spec.validate()?;
    let targets = if args.data.is_dir() { read_jsonl(&args.data.join("test.jsonl"))? } else { read_jsonl(&args.data)? };
    let pool = if mode == PromptMode::FewShot {
        let path = args.exemplar_pool.clone().unwrap_or_else(|| sibling_train(&args.data));
        read_jsonl(&path).with_context(|| format!("loading exemplar pool {}", path.display()))?
    } else {
        Vec::new()
    };
    let cot = match &args.cot_exemplars {
        Some(path) => CotExemplars::parse(&std::fs::read_to_string(path)?)?,
        None => CotExemplars::builtin(),
    };
    let records = build_prompts(&targets, &spec, &pool, &cot, args.seed)?;
    write_prompts(&args.out, &records)?;
    eprintln!("effective config: {}", json!({"mode": mode, "shots": spec.shots, "seed": args.seed}));
    println!("wrote {} {} prompts to {}", records.len(), mode, args.out.display());
    Ok(())
}

fn eval(args: EvalArgs, workers: Option<usize>) -> Result<()> {
    let prompts = read_prompts(&args.prompts)?;
    let endpoint = args.endpoint.endpoint(workers);
    eprintln!("effective config: {}", serde_json::to_string(&endpoint)?);
    let records = query_model(&endpoint, &prompts)?;
    write_records(&args.out, &records)?;
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    println!("wrote {} records to {} ({failed} request failures)", records.len(), args.out.display());
    Ok(())
}

fn emit_report(report: &ScoreReport, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    if let Some(base) = out {
        write_atomic(&base.with_extension("json"), text.as_bytes())?;
        write_atomic(&base.with_extension("csv"), report.to_csv().as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn score_cmd(args: ScoreArgs) -> Result<()> {
    let records = read_records(&args.records)?;
    let gold = load_instances(&[args.gold])?;
    let report = score(&records, &gold, args.mode.into())?;
    emit_report(&report, args.out.as_deref())
}

fn pk_test(args: PkArgs, workers: Option<usize>) -> Result<()> {
    let gold = load_instances(std::slice::from_ref(&args.gold))?;
    let records = match (&args.records, &args.base_url) {
        (Some(path), _) => read_records(path)?,
        (None, Some(url)) => {
            let spec = PromptSpec::new(PromptMode::PkTest);
            let prompts = build_prompts(&gold, &spec, &[], &CotExemplars::builtin(), 0)?;
            let mut endpoint = ModelEndpoint::new(url, args.model.clone().unwrap_or_default());
            endpoint.token_env = args.token_env.clone();
            endpoint.max_parallel = args.max_parallel.or(workers).unwrap_or(4);
            endpoint.timeout_secs = args.timeout_secs;
            eprintln!("effective config: {}", serde_json::to_string(&endpoint)?);
            let records = query_model(&endpoint, &prompts)?;
            if let Some(path) = &args.records_out {
                write_records(path, &records)?;
            }
            records
        }
        (None, None) => bail!("pk-test needs either --records or --base-url/--model"),
    };
    let report = score(&records, &gold, PromptMode::PkTest)?;
    emit_report(&report, args.out.as_deref())
}
