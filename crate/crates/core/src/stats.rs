//! Analyses over a dataset: parallelization depth, skewing, unrolling,
//! schedule length, and the kind-to-kind transition matrix.
//!
//! Every analysis is a pure fold. Group values are sorted before summation so
//! the result does not depend on line order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{atomic_write, DataPoint, DatasetError};
use crate::ir::Program;
use crate::transforms::{Kind, Op, Transformation};

const N: usize = 6;

fn mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn steps_text(s: &[Transformation]) -> String {
    serde_json::to_string(s).expect("steps serialize")
}

/// Best point of every program: highest speedup, then fewer steps, then text.
fn best_by_program<'a>(points: impl IntoIterator<Item = &'a DataPoint>) -> BTreeMap<&'a str, &'a DataPoint> {
    let mut best: BTreeMap<&str, &DataPoint> = BTreeMap::new();
    for p in points {
        match best.get(p.program_id.as_str()) {
            Some(b) => {
                let better = p
                    .speedup
                    .total_cmp(&b.speedup)
                    .then(b.schedule.len().cmp(&p.schedule.len()))
                    .then_with(|| steps_text(&b.schedule).cmp(&steps_text(&p.schedule)))
                    .is_gt();
                if better {
                    best.insert(&p.program_id, p);
                }
            }
            None => {
                best.insert(&p.program_id, p);
            }
        }
    }
    best
}

/// Program id to the depth of each nest.
pub type DepthIndex = HashMap<String, Vec<usize>>;

pub fn depth_index(programs: &[Program]) -> DepthIndex {
    programs
        .iter()
        .map(|p| (p.id.clone(), p.nests.iter().map(|n| n.depth).collect()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub bin: usize,
    pub bin_center: f64,
    pub mean: f64,
    pub n: usize,
}

/// The parallelized loop of a schedule as (level, loop depth of its nest at
/// that point), using the first parallelization step.
fn parallel_position(schedule: &[Transformation], depths: &[usize]) -> Option<(usize, usize)> {
    let pos = schedule.iter().position(|t| t.kind() == Kind::Parallelization)?;
    let t = &schedule[pos];
    let Op::Parallelization { loop_index } = t.op else {
        unreachable!()
    };
    let mut depth = *depths.get(t.nest)?;
    for s in &schedule[..pos] {
        if let (true, Op::Tiling { sizes, .. }) = (s.nest == t.nest, &s.op) {
            depth += sizes.len();
        }
    }
    (loop_index < depth).then_some((loop_index, depth))
}

/// Ten bins over the relative level of the best parallelized point of each
/// program. Points whose program is missing from `depths` are ignored.
pub fn analyze_parallel_depth(points: &[DataPoint], depths: &DepthIndex) -> Vec<DepthBin> {
    let with_parallel = points.iter().filter(|p| {
        depths
            .get(&p.program_id)
            .is_some_and(|d| parallel_position(&p.schedule, d).is_some())
    });
    let mut bins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in best_by_program(with_parallel).values() {
        let (level, depth) = parallel_position(&p.schedule, &depths[&p.program_id]).expect("filtered above");
        let bin = if depth <= 1 { 0 } else { (10 * level / (depth - 1)).min(9) };
        bins.entry(bin).or_default().push(p.speedup);
    }
    bins.into_iter()
        .map(|(bin, mut v)| DepthBin {
            bin,
            bin_center: (2 * bin + 1) as f64 / 20.0,
            mean: mean(&mut v),
            n: v.len(),
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_skew_with_parallel: Option<f64>,
    pub n_skew_with_parallel: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_skew_without_parallel: Option<f64>,
    pub n_skew_without_parallel: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_parallel_with_prior_skew: Option<f64>,
    pub n_parallel_with_prior_skew: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_parallel_without_prior_skew: Option<f64>,
    pub n_parallel_without_prior_skew: usize,
}

fn opt_mean(mut v: Vec<f64>) -> (Option<f64>, usize) {
    let n = v.len();
    ((n > 0).then(|| mean(&mut v)), n)
}

pub fn analyze_skewing(points: &[DataPoint]) -> SkewReport {
    let (mut sp, mut s_only, mut p_skew, mut p_only) = (vec![], vec![], vec![], vec![]);
    for p in points {
        let first_skew = p.schedule.iter().position(|t| t.kind() == Kind::Skewing);
        let first_par = p.schedule.iter().position(|t| t.kind() == Kind::Parallelization);
        if let Some(s) = first_skew {
            let later_par = p.schedule[s..].iter().any(|t| t.kind() == Kind::Parallelization);
            if later_par { &mut sp } else { &mut s_only }.push(p.speedup);
        }
        if let Some(q) = first_par {
            if first_skew.is_some_and(|s| s < q) { &mut p_skew } else { &mut p_only }.push(p.speedup);
        }
    }
    let (a, na) = opt_mean(sp);
    let (b, nb) = opt_mean(s_only);
    let (c, nc) = opt_mean(p_skew);
    let (d, nd) = opt_mean(p_only);
    SkewReport {
        mean_skew_with_parallel: a,
        n_skew_with_parallel: na,
        mean_skew_without_parallel: b,
        n_skew_without_parallel: nb,
        ratio: a.zip(b).map(|(a, b)| a / b),
        mean_parallel_with_prior_skew: c,
        n_parallel_with_prior_skew: nc,
        mean_parallel_without_prior_skew: d,
        n_parallel_without_prior_skew: nd,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCount {
    pub mean: f64,
    pub n: usize,
}

/// Mean speedup per unroll factor. The last unroll step of a schedule is
/// the one in effect.
pub fn analyze_unrolling(points: &[DataPoint]) -> BTreeMap<u64, MeanCount> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for p in points {
        let factor = p.schedule.iter().rev().find_map(|t| match t.op {
            Op::Unrolling { factor, .. } => Some(factor),
            _ => None,
        });
        if let Some(f) = factor {
            groups.entry(f).or_default().push(p.speedup);
        }
    }
    groups
        .into_iter()
        .map(|(f, mut v)| (f, MeanCount { mean: mean(&mut v), n: v.len() }))
        .collect()
}

/// The factor with the highest mean speedup; ties go to the smaller factor.
pub fn unroll_optimum(table: &BTreeMap<u64, MeanCount>) -> Option<u64> {
    table
        .iter()
        .fold(None, |acc: Option<(u64, f64)>, (f, mc)| match acc {
            Some((_, m)) if m >= mc.mean => acc,
            _ => Some((*f, mc.mean)),
        })
        .map(|(f, _)| f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStat {
    pub mean: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    /// Number of programs whose best schedule has each length.
    pub histogram: BTreeMap<usize, usize>,
    pub per_length: BTreeMap<usize, LengthStat>,
}

pub fn analyze_schedule_length(points: &[DataPoint]) -> LengthReport {
    let mut histogram = BTreeMap::new();
    for p in best_by_program(points).values() {
        *histogram.entry(p.schedule.len()).or_insert(0) += 1;
    }
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for p in points {
        groups.entry(p.schedule.len()).or_default().push(p.speedup);
    }
    let per_length = groups
        .into_iter()
        .map(|(l, mut v)| {
            let m = max(&v);
            (l, LengthStat { mean: mean(&mut v), max: m, n: v.len() })
        })
        .collect();
    LengthReport { histogram, per_length }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub kinds: Vec<Kind>,
    pub raw: Vec<Vec<f64>>,
    pub prob: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    /// Rows with at least one observation.
    pub observed: Vec<bool>,
}

impl TransitionMatrix {
    pub fn get(&self, from: Kind, to: Kind) -> (f64, f64, usize) {
        let (i, j) = (from.index(), to.index());
        (self.raw[i][j], self.prob[i][j], self.counts[i][j])
    }

    pub fn is_empty(&self) -> bool {
        !self.observed.iter().any(|o| *o)
    }
}

pub fn transition_matrix(points: &[DataPoint]) -> TransitionMatrix {
    let mut groups: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); N]; N];
    for p in points {
        let pairs: BTreeSet<(usize, usize)> = p
            .schedule
            .windows(2)
            .map(|w| (w[0].kind().index(), w[1].kind().index()))
            .collect();
        for (i, j) in pairs {
            groups[i][j].push(p.speedup);
        }
    }
    let counts: Vec<Vec<usize>> = groups.iter().map(|r| r.iter().map(Vec::len).collect()).collect();
    let raw: Vec<Vec<f64>> = groups
        .iter_mut()
        .map(|r| r.iter_mut().map(|v| if v.is_empty() { 0.0 } else { mean(v) }).collect())
        .collect();
    let observed: Vec<bool> = counts.iter().map(|r| r.iter().any(|c| *c > 0)).collect();
    let prob = raw
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|x| if s > 0.0 { x / s } else { 0.0 }).collect()
        })
        .collect();
    TransitionMatrix {
        kinds: Kind::ALL.to_vec(),
        raw,
        prob,
        counts,
        observed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEntry {
    pub kind: Kind,
    pub repeatable: bool,
}

fn argmax(row: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    (0..row.len())
        .filter(|j| allowed(*j))
        .fold(None, |best: Option<usize>, j| match best {
            Some(b) if row[b] >= row[j] => Some(b),
            _ => Some(j),
        })
}

/// Greedy walk over the transition probabilities, parallelization last.
pub fn derive_order(t: &TransitionMatrix) -> Vec<OrderEntry> {
    let par = Kind::Parallelization.index();
    let entry = |k: Kind, repeatable| OrderEntry { kind: k, repeatable };
    if t.is_empty() {
        return Kind::ALL.iter().map(|k| entry(*k, false)).collect();
    }
    let repeatable = |i: usize| t.observed[i] && argmax(&t.prob[i], |_| true) == Some(i);
    let off_diag_max = |i: usize| (0..N).filter(|j| *j != i).map(|j| t.prob[i][j]).fold(0.0, f64::max);
    let candidates: Vec<usize> = (0..N).filter(|i| *i != par).collect();
    let mut current = candidates
        .iter()
        .copied()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if off_diag_max(b) >= off_diag_max(i) => Some(b),
            _ => Some(i),
        })
        .expect("five candidate kinds");
    let mut visited = vec![current];
    while visited.len() < candidates.len() {
        let row = &t.prob[current];
        current = argmax(row, |j| j != par && !visited.contains(&j)).expect("an unvisited kind remains");
        visited.push(current);
    }
    visited.push(par);
    visited.into_iter().map(|i| entry(Kind::ALL[i], repeatable(i))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    ParallelDepth,
    Skewing,
    Unrolling,
    Length,
    Transitions,
    All,
}

impl FromStr for ReportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "parallel-depth" => ReportKind::ParallelDepth,
            "skewing" => ReportKind::Skewing,
            "unrolling" => ReportKind::Unrolling,
            "length" => ReportKind::Length,
            "transitions" => ReportKind::Transitions,
            "all" => ReportKind::All,
            other => return Err(format!("unknown report {other:?}")),
        })
    }
}

impl ReportKind {
    fn includes(self, other: ReportKind) -> bool {
        self == ReportKind::All || self == other
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel_depth: Option<Vec<DepthBin>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skew: Option<SkewReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unroll: Option<BTreeMap<u64, MeanCount>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<LengthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transitions: Option<TransitionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_order: Option<Vec<OrderEntry>>,
}

pub fn build_report(points: &[DataPoint], depths: &DepthIndex, which: ReportKind) -> StatsReport {
    let mut r = StatsReport::default();
    if which.includes(ReportKind::ParallelDepth) {
        r.parallel_depth = Some(analyze_parallel_depth(points, depths));
    }
    if which.includes(ReportKind::Skewing) {
        r.skew = Some(analyze_skewing(points));
    }
    if which.includes(ReportKind::Unrolling) {
        r.unroll = Some(analyze_unrolling(points));
    }
    if which.includes(ReportKind::Length) {
        r.length = Some(analyze_schedule_length(points));
    }
    if which.includes(ReportKind::Transitions) {
        let t = transition_matrix(points);
        r.derived_order = Some(derive_order(&t));
        r.transitions = Some(t);
    }
    r
}

fn write_csv(dir: &Path, name: &str, body: String, files: &mut Vec<PathBuf>) -> Result<(), DatasetError> {
    let path = dir.join(name);
    atomic_write(&path, body.as_bytes())?;
    files.push(path);
    Ok(())
}

/// Writes one CSV per section present in the report.
pub fn emit_csv(report: &StatsReport, dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files = Vec::new();
    if let Some(bins) = &report.parallel_depth {
        let mut s = String::from("bin,mean,n\n");
        for b in bins {
            let _ = writeln!(s, "{},{},{}", b.bin_center, b.mean, b.n);
        }
        write_csv(dir, "fig1.csv", s, &mut files)?;
    }
    if let Some(u) = &report.unroll {
        let mut s = String::from("factor,mean,n\n");
        for (f, mc) in u {
            let _ = writeln!(s, "{},{},{}", f, mc.mean, mc.n);
        }
        write_csv(dir, "fig3.csv", s, &mut files)?;
    }
    if let Some(l) = &report.length {
        let mut s = String::from("length,count\n");
        for (len, c) in &l.histogram {
            let _ = writeln!(s, "{len},{c}");
        }
        write_csv(dir, "fig5.csv", s, &mut files)?;
        let mut s = String::from("length,mean,max\n");
        for (len, st) in &l.per_length {
            let _ = writeln!(s, "{},{},{}", len, st.mean, st.max);
        }
        write_csv(dir, "fig6.csv", s, &mut files)?;
    }
    if let Some(t) = &report.transitions {
        let mut s = String::from("from");
        for k in &t.kinds {
            let _ = write!(s, ",{k}");
        }
        s.push('\n');
        if !t.is_empty() {
            for (k, row) in t.kinds.iter().zip(&t.prob) {
                s.push_str(k.as_str());
                for x in row {
                    let _ = write!(s, ",{x}");
                }
                s.push('\n');
            }
        }
        write_csv(dir, "fig7.csv", s, &mut files)?;
    }
    if let Some(k) = &report.skew {
        let mut s = String::from("metric,value,n\n");
        let rows = [
            ("mean_skew_with_parallel", k.mean_skew_with_parallel, Some(k.n_skew_with_parallel)),
            ("mean_skew_without_parallel", k.mean_skew_without_parallel, Some(k.n_skew_without_parallel)),
            ("ratio", k.ratio, None),
            ("mean_parallel_with_prior_skew", k.mean_parallel_with_prior_skew, Some(k.n_parallel_with_prior_skew)),
            (
                "mean_parallel_without_prior_skew",
                k.mean_parallel_without_prior_skew,
                Some(k.n_parallel_without_prior_skew),
            ),
        ];
        for (name, v, n) in rows {
            if let Some(v) = v {
                let n = n.map(|n| n.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{name},{v},{n}");
            }
        }
        write_csv(dir, "skew.csv", s, &mut files)?;
    }
    Ok(files)
}
