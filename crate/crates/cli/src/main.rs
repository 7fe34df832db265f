use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use flowgen_core::catalog::{load_catalog_file, validate_flow};
use flowgen_core::dataset::{load_dataset, load_predictions, write_dataset};
use flowgen_core::dsl::{parse_flow, serialize_flow};
use flowgen_core::generation::extract_dsl;
use flowgen_core::harness::{
    emit_reports, load_context, load_runs, make_ood_split, record_fixtures, run_batch, write_outputs, BatchConfig,
    ClientConfig, EmbedderConfig, InDomainSize, SplitConfig,
};
use flowgen_core::metrics::{aggregate, render_table, score_sample, EvaluationOutcome, TableRow};
use flowgen_core::retrieval::{
    build_index, embedder_tst_loss, generate_tst_pairs, retrieve_few_shots, Embedder, SampleIndex, TstPair,
    DEFAULT_PAIR_BUDGET, DEFAULT_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "flowgen", version, about = "Generate, check and score workflow DSL flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a DSL file and print its canonical form, or the error position
    Parse {
        file: PathBuf,
        /// Print the syntax tree as JSON instead
        #[arg(long)]
        json: bool,
    },
    /// Check a flow's function names and parameter keys against a catalog
    Validate {
        file: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Score predictions (JSONL of id + prediction) against a gold dataset
    Score {
        predictions: PathBuf,
        gold: PathBuf,
        /// Enables made-up API and parameter checks
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Build or query a few-shot index
    #[command(subcommand)]
    Index(IndexCommand),
    /// Similarity-tuning pairs and loss
    #[command(subcommand)]
    Tst(TstCommand),
    /// Split a dataset into train, in-domain test and out-of-domain test
    Split(SplitArgs),
    /// Run the experiments of a batch config and write reports
    Run(RunArgs),
    /// Rebuild reports from a saved runs.json
    Report {
        runs: PathBuf,
        #[arg(long)]
        baseline: Option<String>,
        /// Write report.json and report.txt here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record mock-client fixtures answering every prompt of a batch
    Fixtures {
        config: PathBuf,
        /// JSONL of id + prediction; defaults to each test sample's gold flow
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EmbedderArgs {
    /// JSON embedder config; overrides --dimension and --seed
    #[arg(long)]
    embedder: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    dimension: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EmbedderArgs {
    fn build(&self) -> Result<Box<dyn Embedder>> {
        let config = match &self.embedder {
            Some(path) => serde_json::from_str(&read(path)?).with_context(|| format!("{}", path.display()))?,
            None => EmbedderConfig::Hashing {
                dimension: self.dimension,
                seed: self.seed,
            },
        };
        Ok(config.build()?)
    }
}

#[derive(Subcommand)]
enum IndexCommand {
    Build {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    Query {
        index: PathBuf,
        query: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
}

#[derive(Subcommand)]
enum TstCommand {
    /// Write labeled sample pairs as JSONL
    Pairs {
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
        budget: usize,
        /// Defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Mean squared gap between an embedder's cosine and program similarity
    Loss {
        pairs: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
}

#[derive(Args)]
struct SplitArgs {
    dataset: PathBuf,
    /// Held-out API names, comma separated
    #[arg(long, value_delimiter = ',')]
    held_out: Vec<String>,
    /// JSON array of held-out API names
    #[arg(long)]
    held_out_file: Option<PathBuf>,
    /// Share of the remaining samples drawn as in-domain test
    #[arg(long, conflicts_with = "count")]
    fraction: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.jsonl, test_in_domain.jsonl and test_out_of_domain.jsonl
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Batch config, JSON or .toml
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    store_prompts: bool,
    /// Use the mock client with these fixtures for every experiment
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Exit 0 even when some samples failed to get a completion
    #[arg(long)]
    allow_sample_errors: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Ok(false) means the command ran but found problems.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Parse { file, json } => parse(&file, json),
        Command::Validate { file, catalog } => validate(&file, &catalog),
        Command::Score {
            predictions,
            gold,
            catalog,
            json,
        } => score(&predictions, &gold, catalog.as_deref(), json),
        Command::Index(cmd) => index(cmd),
        Command::Tst(cmd) => tst(cmd),
        Command::Split(args) => split(&args),
        Command::Run(args) => run(&args),
        Command::Report { runs, baseline, out } => report(&runs, baseline.as_deref(), out.as_deref()),
        Command::Fixtures { config, responses, out } => fixtures(&config, responses.as_deref(), &out),
    }
}

fn parse(file: &Path, json: bool) -> Result<bool> {
    match parse_flow(&read(file)?) {
        Ok(flow) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&flow.statements)?);
            } else {
                println!("{}", serialize_flow(&flow));
            }
            Ok(true)
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            Ok(false)
        }
    }
}

fn validate(file: &Path, catalog: &Path) -> Result<bool> {
    let catalog = load_catalog_file(catalog)?;
    let flow = parse_flow(&read(file)?).with_context(|| format!("{}", file.display()))?;
    let result = validate_flow(&flow, &catalog);
    for name in &result.made_up_functions {
        println!("unknown function: {name}");
    }
    for (name, key) in &result.made_up_parameters {
        println!("unknown parameter: {name} {key}");
    }
    if result.is_clean() {
        println!("ok");
    }
    Ok(result.is_clean())
}

fn score(predictions: &Path, gold: &Path, catalog: Option<&Path>, json: bool) -> Result<bool> {
    let gold = load_dataset(gold)?;
    let predictions = load_predictions(predictions)?;
    let catalog = catalog.map(load_catalog_file).transpose()?;
    for id in predictions.keys() {
        if !gold.iter().any(|s| &s.id == id) {
            bail!("prediction for unknown sample `{id}`");
        }
    }
    let outcomes: Vec<EvaluationOutcome> = gold
        .iter()
        .map(|s| match predictions.get(&s.id) {
            Some(text) => score_sample(&s.id, &extract_dsl(text), &s.flow, catalog.as_ref()),
            None => EvaluationOutcome::unparsed(&s.id),
        })
        .collect();
    let report = aggregate(&outcomes)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!(
            "{}",
            render_table(&[TableRow::absolute("predictions", None, &report)], false)
        );
    }
    Ok(true)
}

fn index(cmd: IndexCommand) -> Result<bool> {
    match cmd {
        IndexCommand::Build { dataset, out, embedder } => {
            let samples = load_dataset(&dataset)?;
            let index = build_index(&samples, embedder.build()?.as_ref())?;
            index.save(&out)?;
            println!("{} entries, {}", index.len(), index.embedder_name());
        }
        IndexCommand::Query {
            index,
            query,
            k,
            embedder,
        } => {
            let index = SampleIndex::load(&index)?;
            let embedder = embedder.build()?;
            index.check_embedder(embedder.as_ref())?;
            for hit in retrieve_few_shots(&index, &query, k, embedder.as_ref())? {
                println!("{}\t{:.6}", hit.id, hit.score);
            }
        }
    }
    Ok(true)
}

fn tst(cmd: TstCommand) -> Result<bool> {
    match cmd {
        TstCommand::Pairs {
            dataset,
            threshold,
            budget,
            out,
            embedder,
        } => {
            let samples = load_dataset(&dataset)?;
            let pairs = generate_tst_pairs(&samples, embedder.build()?.as_ref(), threshold, budget)?;
            let mut text = String::new();
            for pair in &pairs {
                text.push_str(&serde_json::to_string(pair)?);
                text.push('\n');
            }
            match out {
                Some(path) => write(&path, &text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        TstCommand::Loss { pairs, embedder } => {
            let pairs: Vec<TstPair> = read(&pairs)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", pairs.display(), i + 1)))
                .collect::<Result<_>>()?;
            println!("{:.6}", embedder_tst_loss(&pairs, embedder.build()?.as_ref())?);
        }
    }
    Ok(true)
}

fn split(args: &SplitArgs) -> Result<bool> {
    let samples = load_dataset(&args.dataset)?;
    let mut held_out = args.held_out.clone();
    if let Some(path) = &args.held_out_file {
        let names: Vec<String> = serde_json::from_str(&read(path)?).with_context(|| format!("{}", path.display()))?;
        held_out.extend(names);
    }
    let test_in_domain = match (args.fraction, args.count) {
        (_, Some(n)) => InDomainSize::Count(n),
        (Some(f), None) => InDomainSize::Fraction(f),
        (None, None) => SplitConfig::default().test_in_domain,
    };
    let split = make_ood_split(
        &samples,
        &held_out,
        &SplitConfig {
            test_in_domain,
            seed: args.seed,
        },
    );
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_dataset(args.out.join("train.jsonl"), &split.train)?;
    write_dataset(args.out.join("test_in_domain.jsonl"), &split.test_in_domain)?;
    write_dataset(args.out.join("test_out_of_domain.jsonl"), &split.test_out_of_domain)?;
    println!(
        "train {}, in-domain test {}, out-of-domain test {}",
        split.train.len(),
        split.test_in_domain.len(),
        split.test_out_of_domain.len()
    );
    Ok(true)
}

fn run(args: &RunArgs) -> Result<bool> {
    let mut config = BatchConfig::load(&args.config)?;
    if let Some(n) = args.concurrency {
        config.concurrency = n;
    }
    if let Some(name) = &args.baseline {
        config.baseline = Some(name.clone());
    }
    config.store_prompts |= args.store_prompts;
    if let Some(path) = &args.fixtures {
        config.client = ClientConfig::Mock {
            fixtures: Some(path.clone()),
            fallback: None,
        };
        for spec in &mut config.experiments {
            spec.client = None;
        }
    }
    let mut ctx = load_context(&config)?;
    let records = run_batch(&config, &mut ctx)?;
    let reports = emit_reports(&records, config.baseline.as_deref())?;
    write_outputs(&args.out, &records, &reports)?;
    print!("{}", reports.text);

    let failed: usize = records
        .iter()
        .map(|r| r.samples.iter().filter(|s| s.error.is_some()).count())
        .sum();
    if failed > 0 {
        eprintln!("{failed} sample completion(s) failed; see runs.json");
        return Ok(args.allow_sample_errors);
    }
    Ok(true)
}

fn report(runs: &Path, baseline: Option<&str>, out: Option<&Path>) -> Result<bool> {
    let records = load_runs(runs)?;
    let reports = emit_reports(&records, baseline)?;
    if let Some(dir) = out {
        write(&dir.join("report.json"), &reports.json)?;
        write(&dir.join("report.txt"), &reports.text)?;
    }
    print!("{}", reports.text);
    Ok(true)
}

fn fixtures(config_path: &Path, responses: Option<&Path>, out: &Path) -> Result<bool> {
    let config = BatchConfig::load(config_path)?;
    let mut ctx = load_context(&config)?;
    let responses = match responses {
        Some(path) => load_predictions(path)?,
        None => ctx.test.iter().map(|s| (s.id.clone(), s.flow_text.clone())).collect(),
    };
    let fixtures = record_fixtures(&config, &mut ctx, &responses)?;
    write(out, &(serde_json::to_string_pretty(&fixtures)? + "\n"))?;
    println!("{} prompts recorded", fixtures.responses.len());
    Ok(true)
}
