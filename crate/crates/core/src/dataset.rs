//! JSON Lines persistence of datapoints and the corpus exploration driver.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::MachineConfig;
use crate::ir::Program;
use crate::search::{
    beam_search_in, exhaustive_search_in, random_walks_in, RuleSet, SearchConfig, SearchError, SearchMode, DEFAULT_GUARD,
};
use crate::transforms::{schedule_key, ScheduleState, TransformSpaceConfig, Transformation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPoint {
    pub program_id: String,
    pub schedule: Vec<Transformation>,
    pub speedup: f64,
    pub legal: bool,
}

impl DataPoint {
    pub fn new(program_id: &str, state: &ScheduleState, speedup: f64) -> Self {
        DataPoint {
            program_id: program_id.to_string(),
            schedule: state.steps.clone(),
            speedup,
            legal: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Search(#[from] SearchError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("datapoints always serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON Lines, skipping blank lines. Line numbers are 1-based.
pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_datapoints(points: &[DataPoint], path: &Path) -> Result<usize, DatasetError> {
    atomic_write(path, to_jsonl(points).as_bytes())?;
    Ok(points.len())
}

pub fn read_datapoints(path: &Path) -> Result<Vec<DataPoint>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let points: Vec<DataPoint> = from_jsonl(&text)?;
    for (i, p) in points.iter().enumerate() {
        if !(p.speedup > 0.0 && p.speedup.is_finite()) {
            return Err(DatasetError::Malformed {
                line: i + 1,
                message: format!("speedup must be positive, found {}", p.speedup),
            });
        }
    }
    Ok(points)
}

/// Keeps the first point per (program, schedule signature).
pub fn dedupe(points: Vec<DataPoint>) -> Vec<DataPoint> {
    let mut seen = HashSet::new();
    points
        .into_iter()
        .filter(|p| seen.insert((p.program_id.clone(), schedule_key(&p.schedule))))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationSummary {
    pub programs: usize,
    pub datapoints: usize,
    pub evaluations: usize,
}

/// Datapoints and evaluation count for one program.
pub fn explore_program(
    p: &Program,
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
    space: &TransformSpaceConfig,
) -> Result<(Vec<DataPoint>, usize), SearchError> {
    let to_points = |ev: Vec<(ScheduleState, f64)>| ev.iter().map(|(s, v)| DataPoint::new(&p.id, s, *v)).collect();
    match sc.mode {
        SearchMode::FixedOrderBeam | SearchMode::ArbitraryOrderBeam => {
            let r = beam_search_in(p, sc, rules, mc, space)?;
            Ok((to_points(r.evaluated), r.evaluations))
        }
        SearchMode::Exhaustive => {
            let r = exhaustive_search_in(p, sc, mc, space, DEFAULT_GUARD)?;
            Ok((to_points(r.evaluated), r.evaluations))
        }
        SearchMode::RandomWalk => {
            let pts = random_walks_in(p, sc, rules, mc, space)?;
            let n = pts.len();
            Ok((pts, n))
        }
    }
}

pub fn run_exploration(
    corpus: &[Program],
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
    out_path: &Path,
) -> Result<ExplorationSummary, DatasetError> {
    run_exploration_in(corpus, sc, rules, mc, &TransformSpaceConfig::default(), out_path)
}

/// Explores every program in parallel; output order follows corpus order.
pub fn run_exploration_in(
    corpus: &[Program],
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
    space: &TransformSpaceConfig,
    out_path: &Path,
) -> Result<ExplorationSummary, DatasetError> {
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    sc.validate()?;
    let per_program = corpus
        .par_iter()
        .map(|p| explore_program(p, sc, rules, mc, space))
        .collect::<Result<Vec<_>, _>>()?;
    let evaluations = per_program.iter().map(|(_, n)| n).sum();
    let points = dedupe(per_program.into_iter().flat_map(|(pts, _)| pts).collect());
    let datapoints = write_datapoints(&points, out_path)?;
    Ok(ExplorationSummary {
        programs: corpus.len(),
        datapoints,
        evaluations,
    })
}

pub fn write_corpus(programs: &[Program], path: &Path) -> Result<usize, DatasetError> {
    atomic_write(path, to_jsonl(programs).as_bytes())?;
    Ok(programs.len())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Program>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    from_jsonl(&text)
}
