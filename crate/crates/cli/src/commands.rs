use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use semrel::data::{filter_known, load_embeddings, load_pairs, make_split, save_pairs, write_embeddings, Relation, SplitConfig, SplitManifest, WordPair};
use semrel::exec::Execution;
use semrel::multitask::save_checkpoint;
use semrel::synthetic::{relation_suite, SuiteSpec};
use semrel::taxonomy::{load_taxonomy, sample_pairs, DistanceMode, SampleSpec, MIN_RANDOM_DISTANCE};

use crate::config::{file_digest, parse_seeds, ExperimentConfig, RawConfig, Regime};
use crate::error::{CliError, CliResult, PathContext};
use crate::experiment::{CellOutput, Experiment};
use crate::report::{parse_records, records_to_jsonl, ResultSet};

#[derive(Debug, Parser)]
#[command(name = "semrel", version, about = "Multi-task and self-learning classifiers for semantic relations between words")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lexically split a pair file and partition its train side into labeled, validation and unlabeled parts.
    Split(SplitArgs),
    /// Sample a relation dataset from a taxonomy export, or generate a synthetic suite.
    GenDataset(GenArgs),
    /// Train one neural model over the configured tasks and evaluate it.
    Train(RunArgs),
    /// Self-learning over the configured tasks.
    SelfTrain(RunArgs),
    /// Run the configured regimes for every seed and write results, aggregates and a report.
    Run(RunArgs),
    /// Render result files as a comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Pair file(s) in `x<TAB>y<TAB>label` format.
    #[arg(long, required = true, num_args = 1.., env = "SEMREL_PAIRS", value_delimiter = ',')]
    pub pairs: Vec<PathBuf>,
    /// Drop pairs with words missing from these embeddings before splitting.
    #[arg(long, env = "SEMREL_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.4)]
    pub test_vocab_fraction: f64,
    #[arg(long, default_value_t = 0.6)]
    pub unlabeled_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    pub validation_fraction: f64,
    /// Partition without stratifying by relation.
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    Lca,
    Undirected,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Taxonomy export with `[edges]` and `[lemmas]` sections.
    #[arg(long, required_unless_present = "synthetic")]
    pub taxonomy: Option<PathBuf>,
    /// Output pair file; a manifest is written next to it with a `.manifest` suffix.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub hypernym: usize,
    #[arg(long, default_value_t = 0)]
    pub synonym: usize,
    #[arg(long, default_value_t = 0)]
    pub cohyponym: usize,
    #[arg(long, default_value_t = 0)]
    pub random: usize,
    #[arg(long, default_value_t = MIN_RANDOM_DISTANCE)]
    pub min_random_distance: usize,
    #[arg(long, value_enum, default_value_t = DistanceArg::Lca)]
    pub distance: DistanceArg,
    /// Fail (exit code 4) when some relation cannot be filled.
    #[arg(long)]
    pub strict: bool,
    /// Generate a synthetic suite with a known decision boundary instead of sampling a taxonomy.
    #[arg(long, conflicts_with = "taxonomy", requires = "embeddings_out")]
    pub synthetic: bool,
    /// Where the synthetic suite's embeddings go.
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub words: usize,
    #[arg(long, default_value_t = 300)]
    pub dimension: usize,
    #[arg(long, default_value_t = 400)]
    pub pairs_per_class: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=50`. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed, or a comma-separated seed list for `run`.
    #[arg(long)]
    pub seed: String,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run cells one after another.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Text,
    Jsonl,
    Aggregate,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result files (`results.jsonl`).
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_cli(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Split(a) => cmd_split(&a),
        Command::GenDataset(a) => cmd_gen_dataset(&a),
        Command::Train(a) => cmd_train(&a, false),
        Command::SelfTrain(a) => cmd_train(&a, true),
        Command::Run(a) => cmd_run(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, contents).at(path)
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", path.display())))
    }
}

pub fn cmd_split(a: &SplitArgs) -> CliResult<()> {
    let mut pairs: Vec<WordPair> = Vec::new();
    for p in &a.pairs {
        require_file(p)?;
        pairs.extend(load_pairs(p).at(p)?);
    }
    if let Some(e) = &a.embeddings {
        require_file(e)?;
        let table = load_embeddings(e).at(e)?;
        let (kept, dropped) = filter_known(&table, pairs);
        log::info!("dropped {dropped} pairs with words missing from {}", e.display());
        pairs = kept;
    }
    let mut config = SplitConfig {
        test_vocab_fraction: a.test_vocab_fraction,
        ..SplitConfig::default()
    };
    config.partition.unlabeled_fraction = a.unlabeled_fraction;
    config.partition.validation_fraction = a.validation_fraction;
    config.partition.stratified = !a.no_stratify;
    for (name, v) in [
        ("test-vocab-fraction", a.test_vocab_fraction),
        ("unlabeled-fraction", a.unlabeled_fraction),
        ("validation-fraction", a.validation_fraction),
    ] {
        if !(v > 0.0 && v < 1.0) {
            return Err(CliError::config(format!("--{name} must lie in (0, 1)")));
        }
    }
    let (bundle, discarded) = make_split(&pairs, config, a.seed)?;
    fs::create_dir_all(&a.out).at(&a.out)?;
    let parts = [
        ("labeled", bundle.labeled.clone()),
        ("validation", bundle.validation.clone()),
        ("unlabeled", bundle.unlabeled.to_audit_pairs()),
        ("test", bundle.test.clone()),
    ];
    for (name, part) in parts {
        let path = a.out.join(format!("{name}.tsv"));
        save_pairs(&path, &part).at(&path)?;
    }
    let manifest = SplitManifest::describe(&bundle, config, a.seed, discarded)?;
    write_file(&a.out.join("manifest.txt"), &manifest.to_text())?;
    eprintln!(
        "split {} pairs: labeled {}, validation {}, unlabeled {}, test {}, discarded {discarded}",
        pairs.len(),
        bundle.labeled.len(),
        bundle.validation.len(),
        bundle.unlabeled.len(),
        bundle.test.len()
    );
    Ok(())
}

pub fn cmd_gen_dataset(a: &GenArgs) -> CliResult<()> {
    let mut manifest = String::from("# semrel generation manifest v1\n");
    let _ = writeln!(manifest, "seed={}", a.seed);
    let pairs = if a.synthetic {
        let spec = SuiteSpec {
            words: a.words,
            dimension: a.dimension,
            pairs_per_class: a.pairs_per_class,
            seed: a.seed,
            ..SuiteSpec::default()
        };
        let suite = relation_suite(&spec)?;
        let emb = a.embeddings_out.as_ref().expect("clap requires embeddings_out");
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &suite.embeddings)?;
        write_file(emb, std::str::from_utf8(&buf).expect("embeddings are UTF-8"))?;
        let _ = writeln!(manifest, "source=synthetic");
        let _ = writeln!(manifest, "words={}\ndimension={}\npairs_per_class={}", a.words, a.dimension, a.pairs_per_class);
        let _ = writeln!(manifest, "embeddings_sha256={}", file_digest(emb)?);
        suite.pairs
    } else {
        let path = a.taxonomy.as_ref().expect("clap requires taxonomy");
        require_file(path)?;
        let graph = load_taxonomy(path).at(path)?;
        let spec = SampleSpec {
            hypernym: a.hypernym,
            synonym: a.synonym,
            cohyponym: a.cohyponym,
            random: a.random,
            min_random_distance: a.min_random_distance,
            distance_mode: match a.distance {
                DistanceArg::Lca => DistanceMode::Lca,
                DistanceArg::Undirected => DistanceMode::Undirected,
            },
            seed: a.seed,
            ..SampleSpec::default()
        };
        spec.validate().map_err(|e| CliError::config(e.to_string()))?;
        let outcome = sample_pairs(&graph, &spec)?;
        let _ = writeln!(manifest, "source=taxonomy");
        let _ = writeln!(manifest, "taxonomy_sha256={}", file_digest(path)?);
        let _ = writeln!(manifest, "min_random_distance={}", a.min_random_distance);
        let _ = writeln!(manifest, "distance={:?}", spec.distance_mode);
        for rel in [Relation::Hypernym, Relation::Synonym, Relation::Cohyponym, Relation::Random] {
            let _ = writeln!(manifest, "requested.{rel}={}", spec.requested(rel));
        }
        for (rel, missing) in &outcome.shortfall {
            eprintln!("warning: {missing} {rel} pairs could not be sampled");
            let _ = writeln!(manifest, "shortfall.{rel}={missing}");
        }
        if a.strict && !outcome.is_complete() {
            return Err(CliError::runtime("sampling fell short of the requested counts (--strict)"));
        }
        outcome.dataset.pairs
    };
    for rel in Relation::ALL {
        let n = pairs.iter().filter(|p| p.label == rel).count();
        if n > 0 {
            let _ = writeln!(manifest, "count.{rel}={n}");
        }
    }
    save_pairs(&a.out, &pairs).at(&a.out)?;
    let _ = writeln!(manifest, "pairs_sha256={}", file_digest(&a.out)?);
    let mut manifest_path = a.out.clone().into_os_string();
    manifest_path.push(".manifest");
    write_file(Path::new(&manifest_path), &manifest)?;
    eprintln!("wrote {} pairs to {}", pairs.len(), a.out.display());
    Ok(())
}

/// Builds the experiment config from a file, the environment and `--set` overrides.
pub fn resolve_config(a: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut raw = match &a.config {
        Some(path) => RawConfig::parse_file(path)?,
        None => RawConfig::default(),
    };
    raw.apply_env()?;
    for o in &a.overrides {
        raw.assign(o)?;
    }
    let mut config = ExperimentConfig::from_raw(&raw)?;
    if let Some(out) = &a.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn exec_mode(a: &RunArgs) -> Execution {
    if a.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

/// Writes the files every run-like command produces.
fn write_outputs(exp: &Experiment, cells: &[CellOutput]) -> CliResult<ResultSet> {
    let out = &exp.config.out_dir;
    fs::create_dir_all(out).at(out)?;
    let set = ResultSet::merge(cells.iter().flat_map(|c| c.records.iter().cloned()).collect())?;
    write_file(&out.join("results.jsonl"), &records_to_jsonl(&set.records))?;

    let mut audit = String::new();
    let mut timings = String::new();
    for c in cells {
        for e in c.audit.events() {
            let _ = writeln!(audit, "seed={} regime={} {e}", c.seed, c.regime);
        }
        let _ = writeln!(
            timings,
            "{}",
            serde_json::json!({"regime": c.regime, "seed": c.seed, "seconds": c.seconds})
        );
        for (name, log) in &c.logs {
            let lines: String = log.iter().map(|r| r.to_json_line() + "\n").collect();
            write_file(&out.join(format!("selflearn-{}-{name}-seed{}.jsonl", c.regime, c.seed)), &lines)?;
        }
    }
    write_file(&out.join("audit.log"), &audit)?;
    write_file(&out.join("timings.jsonl"), &timings)?;
    let mut resolved = format!("# config_hash {}\n", exp.config_hash);
    resolved.push_str(&exp.config.to_canonical());
    write_file(&out.join("config.resolved"), &resolved)?;

    let aggregates: String = set
        .aggregates()
        .iter()
        .map(|a| serde_json::to_string(a).expect("aggregate serialises") + "\n")
        .collect();
    write_file(&out.join("aggregate.jsonl"), &aggregates)?;
    write_file(&out.join("report.txt"), &set.render_table())?;
    Ok(set)
}

pub fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let seeds = parse_seeds(&a.seed)?;
    let exp = Experiment::load(resolve_config(a)?)?;
    let cells = exp.run(&seeds, exec_mode(a))?;
    let set = write_outputs(&exp, &cells)?;
    print!("{}", set.render_table());
    Ok(())
}

pub fn cmd_train(a: &RunArgs, self_learning: bool) -> CliResult<()> {
    let seeds = parse_seeds(&a.seed)?;
    let [seed] = seeds[..] else {
        return Err(CliError::config("train and self-train take a single --seed"));
    };
    let mut config = resolve_config(a)?;
    let multi = config.tasks.len() > 1;
    config.regimes = vec![match (self_learning, multi) {
        (false, false) => Regime::NnSingle,
        (false, true) => Regime::Multitask,
        (true, false) => Regime::SelfLearning,
        (true, true) => Regime::MultitaskSelfLearning,
    }];
    let exp = Experiment::load(config)?;
    let cells = exp.run(&[seed], exec_mode(a))?;
    let set = write_outputs(&exp, &cells)?;
    for (name, model) in &cells[0].models {
        let path = exp.config.out_dir.join(format!("model-{name}.ckpt"));
        save_checkpoint(&path, model, Some(&exp.config.train)).at(&path)?;
    }
    print!("{}", set.render_table());
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> CliResult<()> {
    let mut records = Vec::new();
    for f in &a.files {
        require_file(f)?;
        let file = fs::File::open(f).at(f)?;
        records.extend(parse_records(std::io::BufReader::new(file)).at(f)?);
    }
    let set = ResultSet::merge(records)?;
    let text = match a.format {
        ReportFormat::Text => set.render_table(),
        ReportFormat::Jsonl => records_to_jsonl(&set.records),
        ReportFormat::Aggregate => set
            .aggregates()
            .iter()
            .map(|x| serde_json::to_string(x).expect("aggregate serialises") + "\n")
            .collect(),
    };
    match &a.out {
        Some(path) => write_file(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
