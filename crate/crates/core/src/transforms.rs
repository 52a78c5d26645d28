//! The six loop transformations, the schedule state they act on, legality
//! checks, candidate enumeration and the two skew-factor solvers.
//!
//! Interchange, reversal and skewing accumulate into a per-nest unimodular
//! matrix `U`. Tiling, unrolling and parallelization are annotations on the
//! transformed loop structure. Loop indices of tiling are transformed-loop
//! indices; the parallel loop index refers to the post-tiling structure in
//! which the band `p..=q` is replaced by its tile loops followed by its
//! point loops.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dependence::{band_permutable, is_lex_positive, parallel_legal, DependenceSet};
use crate::ir::MAX_DEPTH;
use crate::matrix::IntMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Interchange,
    Reversal,
    Skewing,
    Tiling,
    Unrolling,
    Parallelization,
}

impl Kind {
    /// Canonical kind order used by tables and as the tie-break order.
    pub const ALL: [Kind; 6] = [
        Kind::Interchange,
        Kind::Reversal,
        Kind::Skewing,
        Kind::Tiling,
        Kind::Unrolling,
        Kind::Parallelization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Interchange => "interchange",
            Kind::Reversal => "reversal",
            Kind::Skewing => "skewing",
            Kind::Tiling => "tiling",
            Kind::Unrolling => "unrolling",
            Kind::Parallelization => "parallelization",
        }
    }

    pub fn index(self) -> usize {
        Kind::ALL.iter().position(|k| *k == self).expect("listed")
    }

    pub fn is_unimodular(self) -> bool {
        matches!(self, Kind::Interchange | Kind::Reversal | Kind::Skewing)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown transformation kind `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Interchange { p: usize, q: usize },
    Reversal { p: usize },
    Skewing { p: usize, q: usize, factor: i64 },
    Tiling { band: Vec<usize>, sizes: Vec<u64> },
    Unrolling { loop_index: usize, factor: u64 },
    Parallelization { loop_index: usize },
}

impl Op {
    pub fn kind(&self) -> Kind {
        match self {
            Op::Interchange { .. } => Kind::Interchange,
            Op::Reversal { .. } => Kind::Reversal,
            Op::Skewing { .. } => Kind::Skewing,
            Op::Tiling { .. } => Kind::Tiling,
            Op::Unrolling { .. } => Kind::Unrolling,
            Op::Parallelization { .. } => Kind::Parallelization,
        }
    }
}

/// One schedule step: an operation aimed at one nest of the program.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transformation {
    pub nest: usize,
    pub op: Op,
}

impl Transformation {
    pub fn new(nest: usize, op: Op) -> Self {
        Transformation { nest, op }
    }

    pub fn kind(&self) -> Kind {
        self.op.kind()
    }
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PQ {
    p: usize,
    q: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct P {
    p: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Skew {
    p: usize,
    q: usize,
    factor: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tile {
    band: Vec<usize>,
    sizes: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Unroll {
    #[serde(rename = "loop")]
    loop_index: usize,
    factor: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Par {
    #[serde(rename = "loop")]
    loop_index: usize,
}

impl Serialize for Transformation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Transformation", 3)?;
        st.serialize_field("kind", &self.kind())?;
        st.serialize_field("nest", &self.nest)?;
        match &self.op {
            Op::Interchange { p, q } => st.serialize_field("params", &PQ { p: *p, q: *q })?,
            Op::Reversal { p } => st.serialize_field("params", &P { p: *p })?,
            Op::Skewing { p, q, factor } => st.serialize_field(
                "params",
                &Skew {
                    p: *p,
                    q: *q,
                    factor: *factor,
                },
            )?,
            Op::Tiling { band, sizes } => st.serialize_field(
                "params",
                &Tile {
                    band: band.clone(),
                    sizes: sizes.clone(),
                },
            )?,
            Op::Unrolling { loop_index, factor } => st.serialize_field(
                "params",
                &Unroll {
                    loop_index: *loop_index,
                    factor: *factor,
                },
            )?,
            Op::Parallelization { loop_index } => st.serialize_field(
                "params",
                &Par {
                    loop_index: *loop_index,
                },
            )?,
        }
        st.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    kind: String,
    nest: usize,
    params: serde_json::Value,
}

impl<'de> Deserialize<'de> for Transformation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawStep::deserialize(d)?;
        let kind: Kind = raw.kind.parse().map_err(D::Error::custom)?;
        let params = raw.params;
        let op = match kind {
            Kind::Interchange => {
                let PQ { p, q } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Interchange { p, q }
            }
            Kind::Reversal => {
                let P { p } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Reversal { p }
            }
            Kind::Skewing => {
                let Skew { p, q, factor } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Skewing { p, q, factor }
            }
            Kind::Tiling => {
                let Tile { band, sizes } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Tiling { band, sizes }
            }
            Kind::Unrolling => {
                let Unroll { loop_index, factor } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Unrolling { loop_index, factor }
            }
            Kind::Parallelization => {
                let Par { loop_index } = serde_json::from_value(params).map_err(D::Error::custom)?;
                Op::Parallelization { loop_index }
            }
        };
        Ok(Transformation { nest: raw.nest, op })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tiling {
    /// Contiguous transformed-loop indices `p..=q`.
    pub band: Vec<usize>,
    pub sizes: Vec<u64>,
}

impl Tiling {
    pub fn start(&self) -> usize {
        self.band[0]
    }

    pub fn end(&self) -> usize {
        *self.band.last().expect("nonempty band")
    }
}

/// Transformation state of one nest.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NestSchedule {
    pub u: IntMatrix,
    pub tiling: Option<Tiling>,
    /// Unroll factor of the innermost loop.
    pub unroll: Option<u64>,
    /// Parallel loop, indexed in the post-tiling loop structure.
    pub parallel: Option<usize>,
}

impl NestSchedule {
    pub fn identity(depth: usize) -> Self {
        NestSchedule {
            u: IntMatrix::identity(depth),
            tiling: None,
            unroll: None,
            parallel: None,
        }
    }

    /// Depth of the untiled transformed nest.
    pub fn depth(&self) -> usize {
        self.u.dim()
    }

    /// Number of loops after tiling.
    pub fn loop_depth(&self) -> usize {
        self.depth() + self.tiling.as_ref().map_or(0, |t| t.band.len())
    }

    pub fn innermost(&self) -> usize {
        self.loop_depth() - 1
    }

    /// Coordinates of an original iteration in the transformed (tiled)
    /// loop structure; execution order is the lexicographic order of keys.
    pub fn execution_key(&self, x: &[i64]) -> Vec<i64> {
        let y = self.u.mul_vec(x);
        match &self.tiling {
            None => y,
            Some(t) => {
                let (p, q) = (t.start(), t.end());
                let mut key = Vec::with_capacity(self.loop_depth());
                key.extend_from_slice(&y[..p]);
                for (k, size) in (p..=q).zip(&t.sizes) {
                    key.push(y[k].div_euclid(*size as i64));
                }
                key.extend_from_slice(&y[p..]);
                key
            }
        }
    }

    /// Every distance vector a dependence can take in the post-tiling loop
    /// structure. Along a tiled loop of size `T` a distance `v` splits into a
    /// tile component `floor(v/T)` or `ceil(v/T)` and the matching
    /// intra-tile remainder.
    pub fn loop_space_distances(&self, deps: &DependenceSet) -> Vec<Vec<i64>> {
        let transformed: Vec<Vec<i64>> = deps.iter().map(|v| self.u.mul_vec(v)).collect();
        match &self.tiling {
            None => transformed,
            Some(t) => transformed.iter().flat_map(|v| tiled_images(v, t)).collect(),
        }
    }

    /// First distance witnessing an ordering or parallel violation.
    pub fn violation(&self, deps: &DependenceSet) -> Option<Vec<i64>> {
        let images = self.loop_space_distances(deps);
        if let Some(bad) = images.iter().find(|v| !is_lex_positive(v)) {
            return Some(bad.clone());
        }
        let l = self.parallel?;
        images
            .into_iter()
            .find(|v| v[..l].iter().all(|x| *x == 0) && v[l] != 0)
    }

    pub fn is_legal(&self, deps: &DependenceSet) -> bool {
        self.violation(deps).is_none()
    }

    fn signature(&self) -> String {
        let tiling = match &self.tiling {
            None => "-".to_string(),
            Some(t) => format!(
                "{}-{}:{}",
                t.start(),
                t.end(),
                t.sizes.iter().map(u64::to_string).collect::<Vec<_>>().join("x")
            ),
        };
        let opt = |o: Option<String>| o.unwrap_or_else(|| "-".into());
        format!(
            "U={};T={};R={};P={}",
            self.u,
            tiling,
            opt(self.unroll.map(|u| u.to_string())),
            opt(self.parallel.map(|p| p.to_string()))
        )
    }

    /// Checks `op` against this nest's current loop structure.
    pub fn check_well_formed(&self, op: &Op) -> Result<(), TransformError> {
        let d = self.depth();
        let malformed = |msg: String| Err(TransformError::Malformed(msg));
        if self.parallel.is_some() {
            return malformed("nest is already parallelized".into());
        }
        if op.kind().is_unimodular() && self.tiling.is_some() {
            return malformed(format!("{} after tiling is not supported", op.kind()));
        }
        match op {
            Op::Interchange { p, q } => {
                if p == q || *p >= d || *q >= d {
                    return malformed(format!("interchange({p},{q}) on depth {d}"));
                }
            }
            Op::Reversal { p } => {
                if *p >= d {
                    return malformed(format!("reversal({p}) on depth {d}"));
                }
            }
            Op::Skewing { p, q, factor } => {
                if *q != p + 1 || *q >= d || *factor < 1 {
                    return malformed(format!("skewing({p},{q},{factor}) needs adjacent loops and factor >= 1"));
                }
            }
            Op::Tiling { band, sizes } => {
                if self.tiling.is_some() {
                    return malformed("nest is already tiled".into());
                }
                let contiguous = band.windows(2).all(|w| w[1] == w[0] + 1);
                if !(2..=3).contains(&band.len()) || !contiguous || band.last().is_some_and(|q| *q >= d) {
                    return malformed(format!("tiling band {band:?} on depth {d}"));
                }
                if sizes.len() != band.len() || sizes.iter().any(|s| *s < 2) {
                    return malformed(format!("tile sizes {sizes:?} for band {band:?}"));
                }
            }
            Op::Unrolling { loop_index, factor } => {
                if self.unroll.is_some() {
                    return malformed("nest is already unrolled".into());
                }
                if *loop_index != self.innermost() || *factor < 2 {
                    return malformed(format!(
                        "unrolling loop {loop_index} by {factor}; innermost loop is {}",
                        self.innermost()
                    ));
                }
            }
            Op::Parallelization { loop_index } => {
                if *loop_index >= self.loop_depth() {
                    return malformed(format!("parallelization of loop {loop_index} on depth {}", self.loop_depth()));
                }
            }
        }
        Ok(())
    }

    /// Folds `op` into the state without any checks.
    fn fold(&mut self, op: &Op) {
        match op {
            Op::Interchange { p, q } => self.u.swap_rows(*p, *q),
            Op::Reversal { p } => self.u.negate_row(*p),
            Op::Skewing { p, q, factor } => self.u.add_row_multiple(*p, *q, *factor),
            Op::Tiling { band, sizes } => {
                self.tiling = Some(Tiling {
                    band: band.clone(),
                    sizes: sizes.clone(),
                })
            }
            Op::Unrolling { factor, .. } => self.unroll = Some(*factor),
            Op::Parallelization { loop_index } => self.parallel = Some(*loop_index),
        }
    }
}

fn tiled_images(v: &[i64], t: &Tiling) -> Vec<Vec<i64>> {
    let (p, q) = (t.start(), t.end());
    let mut partial: Vec<(Vec<i64>, Vec<i64>)> = vec![(Vec::new(), Vec::new())];
    for (k, size) in (p..=q).zip(&t.sizes) {
        let size = *size as i64;
        let lo = v[k].div_euclid(size);
        let hi = -(-v[k]).div_euclid(size);
        let choices: Vec<i64> = if lo == hi { vec![lo] } else { vec![lo, hi] };
        partial = partial
            .into_iter()
            .flat_map(|(tiles, points)| {
                choices.iter().map(move |&c| {
                    let mut tiles = tiles.clone();
                    let mut points = points.clone();
                    tiles.push(c);
                    points.push(v[k] - c * size);
                    (tiles, points)
                })
            })
            .collect();
    }
    partial
        .into_iter()
        .map(|(tiles, points)| {
            let mut out = v[..p].to_vec();
            out.extend(tiles);
            out.extend(points);
            out.extend_from_slice(&v[q + 1..]);
            out
        })
        .collect()
}

/// The whole program's schedule: one `NestSchedule` per nest plus the
/// ordered steps that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleState {
    pub nests: Vec<NestSchedule>,
    pub steps: Vec<Transformation>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("malformed transformation: {0}")]
    Malformed(String),
    #[error("illegal transformation: dependence {0:?} is violated")]
    Illegal(Vec<i64>),
}

impl ScheduleState {
    pub fn identity(depths: &[usize]) -> Self {
        ScheduleState {
            nests: depths.iter().map(|d| NestSchedule::identity(*d)).collect(),
            steps: Vec::new(),
        }
    }

    pub fn for_program(p: &crate::ir::Program) -> Self {
        let depths: Vec<usize> = p.nests.iter().map(|n| n.depth).collect();
        ScheduleState::identity(&depths)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn nest(&self, t: &Transformation) -> Result<&NestSchedule, TransformError> {
        self.nests
            .get(t.nest)
            .ok_or_else(|| TransformError::Malformed(format!("nest {} out of range", t.nest)))
    }

    pub fn is_parallelized(&self) -> bool {
        self.nests.iter().any(|n| n.parallel.is_some())
    }

    /// Applies `t` after checking well-formedness only.
    pub fn apply_unchecked(&self, t: &Transformation) -> Result<ScheduleState, TransformError> {
        self.nest(t)?.check_well_formed(&t.op)?;
        let mut next = self.clone();
        next.nests[t.nest].fold(&t.op);
        next.steps.push(t.clone());
        Ok(next)
    }

    /// Applies `t`, refusing it when it violates a dependence of its nest.
    pub fn apply(&self, t: &Transformation, deps: &DependenceSet) -> Result<ScheduleState, TransformError> {
        let next = self.apply_unchecked(t)?;
        match step_violation(&next.nests[t.nest], &t.op, deps) {
            Some(v) => Err(TransformError::Illegal(v)),
            None => Ok(next),
        }
    }

    /// Replays a serialized schedule from the identity state.
    pub fn replay(depths: &[usize], steps: &[Transformation], deps: &[DependenceSet]) -> Result<Self, TransformError> {
        let mut s = ScheduleState::identity(depths);
        for t in steps {
            let d = deps
                .get(t.nest)
                .ok_or_else(|| TransformError::Malformed(format!("nest {} out of range", t.nest)))?;
            s = s.apply(t, d)?;
        }
        Ok(s)
    }

    /// Canonical text of the transformation state, independent of history.
    pub fn signature(&self) -> String {
        self.nests
            .iter()
            .map(NestSchedule::signature)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn steps_text(&self) -> String {
        serde_json::to_string(&self.steps).expect("steps serialize")
    }
}

/// Kind-specific legality of the step that produced `next`, assuming the
/// state before the step was legal.
fn step_violation(next: &NestSchedule, op: &Op, deps: &DependenceSet) -> Option<Vec<i64>> {
    match op {
        Op::Unrolling { .. } => None,
        Op::Tiling { band, sizes } => {
            let transformed: Vec<Vec<i64>> = deps.iter().map(|v| next.u.mul_vec(v)).collect();
            let (p, q) = (band[0], band[band.len() - 1]);
            let small = transformed
                .iter()
                .all(|v| (p..=q).zip(sizes).all(|(k, s)| v[k].unsigned_abs() < *s));
            if small && band_permutable(&transformed, p, q) {
                return None;
            }
            next.loop_space_distances(deps).into_iter().find(|v| !is_lex_positive(v))
        }
        Op::Parallelization { loop_index } => {
            let images = next.loop_space_distances(deps);
            if parallel_legal(&images, *loop_index) {
                None
            } else {
                images
                    .into_iter()
                    .find(|v| v[..*loop_index].iter().all(|x| *x == 0) && v[*loop_index] != 0)
            }
        }
        _ => deps.iter().map(|v| next.u.mul_vec(v)).find(|v| !is_lex_positive(v)),
    }
}

/// Well-formedness plus dependence legality of `t` on `state`.
pub fn is_legal(state: &ScheduleState, t: &Transformation, deps: &DependenceSet) -> Result<bool, TransformError> {
    let next = state.apply_unchecked(t)?;
    Ok(step_violation(&next.nests[t.nest], &t.op, deps).is_none())
}

/// History-independent key of a step list, usable without the program: the
/// steps are folded onto padded identity matrices, which leaves the leading
/// block identical to the real one.
pub fn schedule_key(steps: &[Transformation]) -> String {
    let n = steps.iter().map(|t| t.nest + 1).max().unwrap_or(0);
    let mut nests = vec![NestSchedule::identity(MAX_DEPTH); n];
    for t in steps {
        let ns = &mut nests[t.nest];
        let in_range = match &t.op {
            Op::Interchange { p, q } | Op::Skewing { p, q, .. } => *p < MAX_DEPTH && *q < MAX_DEPTH,
            Op::Reversal { p } => *p < MAX_DEPTH,
            _ => true,
        };
        if !in_range {
            return serde_json::to_string(steps).expect("steps serialize");
        }
        ns.fold(&t.op);
    }
    let identity = NestSchedule::identity(MAX_DEPTH);
    while nests.last() == Some(&identity) {
        nests.pop();
    }
    nests.iter().map(NestSchedule::signature).collect::<Vec<_>>().join("|")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSpaceConfig {
    pub unroll_choices: Vec<u64>,
    pub tile_choices: Vec<u64>,
    pub max_skew_factor: i64,
}

impl Default for TransformSpaceConfig {
    fn default() -> Self {
        TransformSpaceConfig {
            unroll_choices: vec![4, 8, 16],
            tile_choices: vec![32, 64],
            max_skew_factor: 4,
        }
    }
}

impl TransformSpaceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.unroll_choices.iter().chain(&self.tile_choices).any(|c| *c < 2) {
            return Err("unroll and tile choices must all be >= 2".into());
        }
        if self.max_skew_factor < 1 {
            return Err("max_skew_factor must be >= 1".into());
        }
        Ok(())
    }
}

fn uncarried_before(v: &[i64], p: usize) -> bool {
    !v[..p].iter().find(|x| **x != 0).is_some_and(|x| *x > 0)
}

/// Smallest `f` in `1..=max_f` making loop `p` carry every dependence not
/// already carried by an outer loop, so that loop `q` becomes parallel.
/// `None` when no factor works or there is nothing left to carry.
pub fn solve_skew_parallel(deps: &[Vec<i64>], p: usize, q: usize, max_f: i64) -> Option<i64> {
    let live: Vec<&Vec<i64>> = deps.iter().filter(|v| uncarried_before(v, p)).collect();
    if live.is_empty() {
        return None;
    }
    (1..=max_f).find(|f| live.iter().all(|v| v[p] + f * v[q] > 0))
}

/// `f` in `0..=max_f` minimizing `Σ |v[p] + f·v[q]|`; ties go to the smaller factor.
pub fn solve_skew_locality(deps: &[Vec<i64>], p: usize, q: usize, max_f: i64) -> i64 {
    (0..=max_f)
        .min_by_key(|f| deps.iter().map(|v| (v[p] + f * v[q]).abs()).sum::<i64>())
        .unwrap_or(0)
}

/// All well-formed, legal parameterizations of `kind` for nest `nest`,
/// in lexicographic parameter order.
pub fn enumerate_candidates(
    state: &ScheduleState,
    nest: usize,
    kind: Kind,
    cfg: &TransformSpaceConfig,
    deps: &DependenceSet,
) -> Vec<Transformation> {
    let Some(ns) = state.nests.get(nest) else {
        return Vec::new();
    };
    let d = ns.depth();
    let mut ops: Vec<Op> = Vec::new();
    match kind {
        Kind::Interchange => {
            for p in 0..d {
                for q in p + 1..d {
                    ops.push(Op::Interchange { p, q });
                }
            }
        }
        Kind::Reversal => ops.extend((0..d).map(|p| Op::Reversal { p })),
        Kind::Skewing => {
            if !deps.is_empty() && ns.tiling.is_none() {
                let transformed: Vec<Vec<i64>> = deps.iter().map(|v| ns.u.mul_vec(v)).collect();
                for p in 0..d.saturating_sub(1) {
                    let q = p + 1;
                    let mut factors = BTreeSet::new();
                    if let Some(f) = solve_skew_parallel(&transformed, p, q, cfg.max_skew_factor) {
                        factors.insert(f);
                    }
                    let f = solve_skew_locality(&transformed, p, q, cfg.max_skew_factor);
                    if f >= 1 {
                        factors.insert(f);
                    }
                    ops.extend(factors.into_iter().map(|factor| Op::Skewing { p, q, factor }));
                }
            }
        }
        Kind::Tiling => {
            let mut choices = cfg.tile_choices.clone();
            choices.sort_unstable();
            choices.dedup();
            for len in [2usize, 3] {
                for p in 0..=d.saturating_sub(len) {
                    if p + len > d {
                        continue;
                    }
                    let band: Vec<usize> = (p..p + len).collect();
                    for sizes in size_combinations(&choices, len) {
                        ops.push(Op::Tiling {
                            band: band.clone(),
                            sizes,
                        });
                    }
                }
            }
        }
        Kind::Unrolling => {
            let mut choices = cfg.unroll_choices.clone();
            choices.sort_unstable();
            choices.dedup();
            let inner = ns.innermost();
            ops.extend(choices.into_iter().map(|factor| Op::Unrolling {
                loop_index: inner,
                factor,
            }));
        }
        Kind::Parallelization => ops.extend((0..ns.loop_depth()).map(|l| Op::Parallelization { loop_index: l })),
    }
    ops.sort();
    ops.into_iter()
        .map(|op| Transformation::new(nest, op))
        .filter(|t| matches!(is_legal(state, t, deps), Ok(true)))
        .collect()
}

fn size_combinations(choices: &[u64], len: usize) -> Vec<Vec<u64>> {
    let mut out: Vec<Vec<u64>> = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut v = prefix.clone();
                    v.push(*c);
                    v
                })
            })
            .collect();
    }
    out
}
