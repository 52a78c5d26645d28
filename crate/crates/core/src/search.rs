//! Schedule-space exploration: level-wise beam search, an exhaustive
//! enumerator used as its oracle, seeded random walks, and the rule set that
//! prunes candidates before evaluation.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{breakdown_unchecked, CostError, MachineConfig};
use crate::dataset::DataPoint;
use crate::dependence::{compute_dependences, DependenceError, DependenceSet};
use crate::ir::{corpus_subseed, Program};
use crate::transforms::{enumerate_candidates, Kind, Op, ScheduleState, TransformSpaceConfig, Transformation};

pub const DEFAULT_GUARD: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    FixedOrderBeam,
    ArbitraryOrderBeam,
    Exhaustive,
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub beam_k: usize,
    pub fixed_order: Vec<Kind>,
    pub max_len: usize,
    pub walks_per_program: usize,
    pub walk_seed: u64,
}

/// Data-driven exploration order: skewing, interchange, reversal, unrolling,
/// tiling, parallelization.
pub fn default_fixed_order() -> Vec<Kind> {
    vec![
        Kind::Skewing,
        Kind::Interchange,
        Kind::Reversal,
        Kind::Unrolling,
        Kind::Tiling,
        Kind::Parallelization,
    ]
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::FixedOrderBeam,
            beam_k: 4,
            fixed_order: default_fixed_order(),
            max_len: 6,
            walks_per_program: 8,
            walk_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.beam_k == 0 {
            return bad("beam_k must be >= 1");
        }
        if self.max_len == 0 && self.mode != SearchMode::Exhaustive {
            return bad("max_len must be >= 1");
        }
        let distinct: HashSet<Kind> = self.fixed_order.iter().copied().collect();
        if distinct.len() != self.fixed_order.len() {
            return bad("fixed_order must not repeat a kind");
        }
        if let Some(pos) = self.fixed_order.iter().position(|k| *k == Kind::Parallelization) {
            if pos + 1 != self.fixed_order.len() {
                return bad("parallelization must be last in fixed_order");
            }
        }
        if self.mode == SearchMode::RandomWalk && self.walks_per_program == 0 {
            return bad("walks_per_program must be >= 1");
        }
        Ok(())
    }
}

/// Candidate filters. Every field disabled means no filtering.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleSet {
    pub parallel_depth_cutoff: Option<f64>,
    pub skew_gate: bool,
    pub fixed_unroll: Option<Vec<u64>>,
    pub max_schedule_len: Option<usize>,
}

impl RuleSet {
    pub fn none() -> Self {
        RuleSet::default()
    }

    /// Parallelize only the outer 30% of loops, skew only when nothing is
    /// parallel, unroll by 16 only, at most 8 steps.
    pub fn statistical() -> Self {
        RuleSet {
            parallel_depth_cutoff: Some(0.3),
            skew_gate: true,
            fixed_unroll: Some(vec![16]),
            max_schedule_len: Some(8),
        }
    }

    pub fn validate(&self, space: &TransformSpaceConfig) -> Result<(), SearchError> {
        if let Some(r) = self.parallel_depth_cutoff {
            if !(0.0..=1.0).contains(&r) {
                return Err(SearchError::Config("parallel_depth_cutoff must be in [0, 1]".into()));
            }
        }
        if let Some(f) = &self.fixed_unroll {
            if let Some(x) = f.iter().find(|x| !space.unroll_choices.contains(x)) {
                return Err(SearchError::Config(format!("fixed_unroll factor {x} is not an unroll choice")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        *self == RuleSet::none()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("exhaustive space exceeds the guard: more than {bound} states (stopped at {count})")]
    GuardExceeded { count: usize, bound: usize },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dependence(#[from] DependenceError),
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Global top-k, best first.
    pub best: Vec<(ScheduleState, f64)>,
    pub evaluations: usize,
    pub explored_signatures: usize,
    /// Every evaluated state in evaluation order.
    pub evaluated: Vec<(ScheduleState, f64)>,
}

/// `level / (depth − 1)`, 0 for a single loop.
pub fn relative_level(level: usize, depth: usize) -> Result<f64, SearchError> {
    if level >= depth {
        return Err(SearchError::Config(format!("loop level {level} outside depth {depth}")));
    }
    Ok(if depth == 1 { 0.0 } else { level as f64 / (depth - 1) as f64 })
}

/// Everything the explorers need about one program.
pub struct ProgramContext<'a> {
    pub program: &'a Program,
    pub deps: Vec<DependenceSet>,
    pub mc: &'a MachineConfig,
    pub space: &'a TransformSpaceConfig,
    base_time: f64,
}

impl<'a> ProgramContext<'a> {
    pub fn new(program: &'a Program, mc: &'a MachineConfig, space: &'a TransformSpaceConfig) -> Result<Self, SearchError> {
        mc.validate()?;
        space.validate().map_err(SearchError::Config)?;
        let deps = program
            .nests
            .iter()
            .map(compute_dependences)
            .collect::<Result<Vec<_>, _>>()?;
        let base_time = breakdown_unchecked(program, &ScheduleState::for_program(program), mc)?.total();
        Ok(ProgramContext {
            program,
            deps,
            mc,
            space,
            base_time,
        })
    }

    pub fn root(&self) -> ScheduleState {
        ScheduleState::for_program(self.program)
    }

    pub fn speedup(&self, s: &ScheduleState) -> Result<f64, SearchError> {
        Ok(self.base_time / breakdown_unchecked(self.program, s, self.mc)?.total())
    }

    /// Legal candidates of the given kinds over every nest that is not yet
    /// parallelized, ordered by (nest, kind order, params).
    pub fn candidates(&self, s: &ScheduleState, kinds: &[Kind]) -> Vec<Transformation> {
        let mut out = Vec::new();
        for (n, ns) in s.nests.iter().enumerate() {
            if ns.parallel.is_some() {
                continue;
            }
            for kind in kinds {
                out.extend(enumerate_candidates(s, n, *kind, self.space, &self.deps[n]));
            }
        }
        out
    }
}

/// Drops candidates the rule set forbids. Output keeps input order.
pub fn filter_candidates(
    cands: Vec<Transformation>,
    state: &ScheduleState,
    rules: &RuleSet,
    deps: &[DependenceSet],
    space: &TransformSpaceConfig,
) -> Vec<Transformation> {
    if let Some(max) = rules.max_schedule_len {
        if state.len() >= max {
            return Vec::new();
        }
    }
    let mut parallel_possible: Vec<Option<bool>> = vec![None; state.nests.len()];
    cands
        .into_iter()
        .filter(|t| match &t.op {
            Op::Parallelization { loop_index } => match rules.parallel_depth_cutoff {
                Some(rho) => {
                    let depth = state.nests[t.nest].loop_depth();
                    relative_level(*loop_index, depth).is_ok_and(|r| r <= rho)
                }
                None => true,
            },
            Op::Skewing { .. } if rules.skew_gate => {
                let cached = &mut parallel_possible[t.nest];
                let possible = *cached.get_or_insert_with(|| {
                    !enumerate_candidates(state, t.nest, Kind::Parallelization, space, &deps[t.nest]).is_empty()
                });
                !possible
            }
            Op::Unrolling { factor, .. } => rules.fixed_unroll.as_ref().is_none_or(|f| f.contains(factor)),
            _ => true,
        })
        .collect()
}

fn rank(a: &(ScheduleState, f64), b: &(ScheduleState, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.steps_text().cmp(&b.0.steps_text()))
}

fn top_k(mut v: Vec<(ScheduleState, f64)>, k: usize) -> Vec<(ScheduleState, f64)> {
    v.sort_by(rank);
    v.truncate(k);
    v
}

pub fn beam_search(p: &Program, sc: &SearchConfig, rules: &RuleSet, mc: &MachineConfig) -> Result<SearchResult, SearchError> {
    beam_search_in(p, sc, rules, mc, &TransformSpaceConfig::default())
}

pub fn beam_search_in(
    p: &Program,
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
    space: &TransformSpaceConfig,
) -> Result<SearchResult, SearchError> {
    sc.validate()?;
    rules.validate(space)?;
    let ctx = ProgramContext::new(p, mc, space)?;
    let fixed = match sc.mode {
        SearchMode::FixedOrderBeam => true,
        SearchMode::ArbitraryOrderBeam => false,
        other => return Err(SearchError::Config(format!("beam search cannot run in mode {other:?}"))),
    };
    let levels = if fixed { sc.fixed_order.len() } else { sc.max_len };

    let root = ctx.root();
    let mut seen: HashSet<String> = HashSet::from([root.signature()]);
    let mut evaluated = vec![(root.clone(), 1.0)];
    let mut beam = vec![(root, 1.0)];

    for level in 0..levels {
        let kinds: Vec<Kind> = if fixed {
            vec![sc.fixed_order[level]]
        } else {
            Kind::ALL.to_vec()
        };
        let mut children = Vec::new();
        let mut fresh = false;
        for (state, score) in &beam {
            // applying nothing keeps the parent alive
            children.push((state.clone(), *score));
            if state.is_parallelized() || state.len() >= sc.max_len {
                continue;
            }
            let cands = filter_candidates(ctx.candidates(state, &kinds), state, rules, &ctx.deps, space);
            for t in cands {
                let next = state.apply_unchecked(&t).expect("enumerated candidates are well formed");
                if !seen.insert(next.signature()) {
                    continue;
                }
                let s = ctx.speedup(&next)?;
                evaluated.push((next.clone(), s));
                children.push((next, s));
                fresh = true;
            }
        }
        if !fresh && !fixed {
            break;
        }
        beam = top_k(children, sc.beam_k);
    }

    Ok(SearchResult {
        best: top_k(evaluated.clone(), sc.beam_k),
        evaluations: evaluated.len(),
        explored_signatures: seen.len(),
        evaluated,
    })
}

/// Every signature-distinct legal schedule of at most `max_len` steps in
/// arbitrary order, stopping each branch at its first parallelization.
pub fn exhaustive_search(p: &Program, sc: &SearchConfig, mc: &MachineConfig) -> Result<SearchResult, SearchError> {
    exhaustive_search_in(p, sc, mc, &TransformSpaceConfig::default(), DEFAULT_GUARD)
}

pub fn exhaustive_search_in(
    p: &Program,
    sc: &SearchConfig,
    mc: &MachineConfig,
    space: &TransformSpaceConfig,
    guard: usize,
) -> Result<SearchResult, SearchError> {
    let ctx = ProgramContext::new(p, mc, space)?;
    let root = ctx.root();
    let mut seen: HashSet<String> = HashSet::from([root.signature()]);
    let mut states = vec![root.clone()];
    let mut frontier = vec![root];
    for _ in 0..sc.max_len {
        let mut next_frontier = Vec::new();
        for s in &frontier {
            if s.is_parallelized() {
                continue;
            }
            for t in ctx.candidates(s, &Kind::ALL) {
                let next = s.apply_unchecked(&t).expect("enumerated candidates are well formed");
                if seen.insert(next.signature()) {
                    if seen.len() > guard {
                        return Err(SearchError::GuardExceeded {
                            count: seen.len(),
                            bound: guard,
                        });
                    }
                    states.push(next.clone());
                    next_frontier.push(next);
                }
            }
        }
        frontier = next_frontier;
    }
    let evaluated = states
        .into_iter()
        .map(|s| ctx.speedup(&s).map(|v| (s, v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SearchResult {
        best: top_k(evaluated.clone(), sc.beam_k.max(1)),
        evaluations: evaluated.len(),
        explored_signatures: seen.len(),
        evaluated,
    })
}

pub fn random_walks(p: &Program, sc: &SearchConfig, rules: &RuleSet, mc: &MachineConfig) -> Result<Vec<DataPoint>, SearchError> {
    random_walks_in(p, sc, rules, mc, &TransformSpaceConfig::default())
}

/// Seeded walks choosing uniformly among legal, rule-filtered candidates.
/// A walk ends at parallelization, at `max_len`, or when nothing is left.
pub fn random_walks_in(
    p: &Program,
    sc: &SearchConfig,
    rules: &RuleSet,
    mc: &MachineConfig,
    space: &TransformSpaceConfig,
) -> Result<Vec<DataPoint>, SearchError> {
    if sc.walks_per_program == 0 {
        return Err(SearchError::Config("walks_per_program must be >= 1".into()));
    }
    rules.validate(space)?;
    let ctx = ProgramContext::new(p, mc, space)?;
    let root = ctx.root();
    let mut out = vec![DataPoint::new(&p.id, &root, 1.0)];
    for w in 0..sc.walks_per_program as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus_subseed(sc.walk_seed ^ p.seed, w));
        let mut state = root.clone();
        while state.len() < sc.max_len && !state.is_parallelized() {
            let cands = filter_candidates(ctx.candidates(&state, &Kind::ALL), &state, rules, &ctx.deps, space);
            let Some(t) = cands.choose(&mut rng) else {
                break;
            };
            state = state.apply_unchecked(t).expect("enumerated candidates are well formed");
            out.push(DataPoint::new(&p.id, &state, ctx.speedup(&state)?));
        }
    }
    Ok(out)
}
