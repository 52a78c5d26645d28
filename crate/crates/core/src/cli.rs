//! Command-line front end: `gen`, `explore`, `analyze`, `compare`.
//!
//! Exit codes: 0 ok, 2 configuration, 3 I/O, 4 exhaustive guard refusal,
//! 5 malformed input line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::MachineConfig;
use crate::dataset::{
    atomic_write, read_corpus, read_datapoints, run_exploration, write_corpus, DatasetError, ExplorationSummary,
};
use crate::ir::{generate_corpus, validate_program, ConfigError, GeneratorConfig, Program};
use crate::search::{beam_search, RuleSet, SearchConfig, SearchError, SearchMode};
use crate::stats::{build_report, depth_index, emit_csv, DepthIndex, ReportKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Malformed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Guard(_) => 4,
            CliError::Malformed(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::Malformed { .. } => CliError::Malformed(e.to_string()),
            DatasetError::EmptyCorpus => CliError::Config(e.to_string()),
            DatasetError::Search(s) => s.into(),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::GuardExceeded { .. } => CliError::Guard(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "looplab", version, about = "Loop-nest schedule search and schedule-space statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a corpus of random programs.
    Gen {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explore a corpus and write a dataset.
    Explore {
        #[arg(long)]
        programs: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SearchMode>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Rule set (JSON). Omitted means no filtering.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Base search configuration (JSON); flags override its fields.
        #[arg(long)]
        search: Option<PathBuf>,
        /// Random-walk seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run analyses over a dataset.
    Analyze {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_report)]
        report: ReportKind,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        /// Corpus the dataset was explored from; needed for parallel-depth.
        #[arg(long)]
        programs: Option<PathBuf>,
    },
    /// Beam search with and without a rule set on every program.
    Compare {
        #[arg(long)]
        programs: PathBuf,
        /// Search configuration (JSON) shared by both runs.
        #[arg(long)]
        baseline_config: Option<PathBuf>,
        /// Rule set (JSON) for the second run.
        #[arg(long)]
        rules_config: Option<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<SearchMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode {s:?}; expected fixed_order_beam, arbitrary_order_beam, exhaustive or random_walk"))
}

fn parse_report(s: &str) -> Result<ReportKind, String> {
    s.parse()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_opt<T: Default + for<'de> Deserialize<'de>>(path: &Option<PathBuf>) -> Result<T, CliError> {
    path.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

fn load_programs(path: &Path) -> Result<Vec<Program>, CliError> {
    let corpus = read_corpus(path)?;
    for (i, p) in corpus.iter().enumerate() {
        if let Some(v) = validate_program(p).first() {
            return Err(CliError::Malformed(format!("{}: line {}: {v}", path.display(), i + 1)));
        }
    }
    Ok(corpus)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    atomic_write(path, text.as_bytes()).map_err(CliError::from)
}

pub fn cmd_gen(count: usize, seed: u64, config: &Option<PathBuf>, out: &Path) -> Result<String, CliError> {
    let cfg: GeneratorConfig = read_opt(config)?;
    let corpus = generate_corpus(seed, count, &cfg)?;
    let n = write_corpus(&corpus, out)?;
    Ok(format!("generated {n} programs"))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_explore(
    programs: &Path,
    mode: Option<SearchMode>,
    beam: Option<usize>,
    max_len: Option<usize>,
    rules: &Option<PathBuf>,
    machine: &Option<PathBuf>,
    search: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
) -> Result<ExplorationSummary, CliError> {
    let mut sc: SearchConfig = read_opt(search)?;
    if let Some(m) = mode {
        sc.mode = m;
    }
    if let Some(k) = beam {
        sc.beam_k = k;
    }
    if let Some(l) = max_len {
        sc.max_len = l;
    }
    if let Some(s) = seed {
        sc.walk_seed = s;
    }
    let rules: RuleSet = read_opt(rules)?;
    let mc: MachineConfig = read_opt(machine)?;
    mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let corpus = load_programs(programs)?;
    Ok(run_exploration(&corpus, &sc, &rules, &mc, out)?)
}

pub fn cmd_analyze(
    dataset: &Path,
    report: ReportKind,
    out_json: &Option<PathBuf>,
    csv_dir: &Option<PathBuf>,
    programs: &Option<PathBuf>,
) -> Result<Option<String>, CliError> {
    let points = read_datapoints(dataset)?;
    let depths = match programs {
        Some(p) => depth_index(&load_programs(p)?),
        None => DepthIndex::new(),
    };
    let r = build_report(&points, &depths, report);
    if let Some(dir) = csv_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        emit_csv(&r, dir)?;
    }
    if let Some(path) = out_json {
        write_json(&r, path)?;
    }
    if out_json.is_none() && csv_dir.is_none() {
        return Ok(Some(serde_json::to_string_pretty(&r).expect("reports serialize")));
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramComparison {
    pub program_id: String,
    pub best_rules: f64,
    pub best_baseline: f64,
    pub speedup_ratio: f64,
    pub evals_rules: usize,
    pub evals_baseline: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareAggregate {
    pub geomean_speedup_ratio: f64,
    pub mean_evals_ratio: f64,
    pub frac_ratio_at_least_1: f64,
    pub frac_ratio_at_least_095: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub programs: Vec<ProgramComparison>,
    pub aggregate: CompareAggregate,
}

/// Speedup ratio is rules over baseline; evaluation ratio is baseline over
/// rules, so both read "higher is better for the rules".
pub fn compare_programs(
    corpus: &[Program],
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
) -> Result<CompareSummary, SearchError> {
    if corpus.is_empty() {
        return Err(SearchError::Config("corpus is empty".into()));
    }
    let rows = corpus
        .par_iter()
        .map(|p| {
            let base = beam_search(p, sc, &RuleSet::none(), mc)?;
            let ruled = beam_search(p, sc, rules, mc)?;
            let (bb, br) = (base.best[0].1, ruled.best[0].1);
            Ok(ProgramComparison {
                program_id: p.id.clone(),
                best_rules: br,
                best_baseline: bb,
                speedup_ratio: br / bb,
                evals_rules: ruled.evaluations,
                evals_baseline: base.evaluations,
            })
        })
        .collect::<Result<Vec<_>, SearchError>>()?;
    let n = rows.len() as f64;
    let mut logs: Vec<f64> = rows.iter().map(|r| r.speedup_ratio.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let aggregate = CompareAggregate {
        geomean_speedup_ratio: (logs.iter().sum::<f64>() / n).exp(),
        mean_evals_ratio: rows.iter().map(|r| r.evals_baseline as f64 / r.evals_rules as f64).sum::<f64>() / n,
        frac_ratio_at_least_1: rows.iter().filter(|r| r.speedup_ratio >= 1.0).count() as f64 / n,
        frac_ratio_at_least_095: rows.iter().filter(|r| r.speedup_ratio >= 0.95).count() as f64 / n,
    };
    Ok(CompareSummary { programs: rows, aggregate })
}

pub fn cmd_compare(
    programs: &Path,
    baseline_config: &Option<PathBuf>,
    rules_config: &Option<PathBuf>,
    machine: &Option<PathBuf>,
    out: &Path,
) -> Result<CompareSummary, CliError> {
    let sc: SearchConfig = read_opt(baseline_config)?;
    let rules: RuleSet = read_opt(rules_config)?;
    let mc: MachineConfig = read_opt(machine)?;
    mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let corpus = load_programs(programs)?;
    let summary = compare_programs(&corpus, &sc, &rules, &mc)?;
    write_json(&summary, out)?;
    Ok(summary)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { count, seed, config, out } => println!("{}", cmd_gen(count, seed, &config, &out)?),
        Command::Explore {
            programs,
            mode,
            beam,
            max_len,
            rules,
            machine,
            search,
            seed,
            out,
        } => {
            let s = cmd_explore(&programs, mode, beam, max_len, &rules, &machine, &search, seed, &out)?;
            println!(
                "explored {} programs: {} datapoints, {} evaluations",
                s.programs, s.datapoints, s.evaluations
            );
        }
        Command::Analyze {
            dataset,
            report,
            out_json,
            csv_dir,
            programs,
        } => {
            if programs.is_none() && matches!(report, ReportKind::ParallelDepth | ReportKind::All) {
                eprintln!("warning: no --programs given, the parallel-depth table will be empty");
            }
            if let Some(text) = cmd_analyze(&dataset, report, &out_json, &csv_dir, &programs)? {
                println!("{text}");
            }
        }
        Command::Compare {
            programs,
            baseline_config,
            rules_config,
            machine,
            out,
        } => {
            let s = cmd_compare(&programs, &baseline_config, &rules_config, &machine, &out)?;
            let a = &s.aggregate;
            println!(
                "compared {} programs: geomean speedup ratio {:.4}, mean evaluation ratio {:.4}",
                s.programs.len(),
                a.geomean_speedup_ratio,
                a.mean_evals_ratio
            );
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
