//! Uniform dependence analysis and the legality primitives shared by every
//! transformation.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::ir::LoopNest;
use crate::matrix::IntMatrix;
use crate::transforms::NestSchedule;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DependenceError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("offset vector has length {found}, nest depth is {depth}")]
    BadOffset { depth: usize, found: usize },
    #[error("matrix is not unimodular")]
    NotUnimodular,
    #[error("distance {0:?} is not lexicographically positive")]
    NotLexPositive(Vec<i64>),
}

/// Lexicographically positive, nonzero distance vectors of one nest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DependenceSet {
    depth: usize,
    distances: BTreeSet<Vec<i64>>,
}

impl DependenceSet {
    /// Builds a set, rejecting zero or lexicographically negative vectors.
    pub fn new(depth: usize, distances: impl IntoIterator<Item = Vec<i64>>) -> Result<Self, DependenceError> {
        let mut set = BTreeSet::new();
        for v in distances {
            if v.len() != depth {
                return Err(DependenceError::DimensionMismatch {
                    expected: depth,
                    found: v.len(),
                });
            }
            if !is_lex_positive(&v) {
                return Err(DependenceError::NotLexPositive(v));
            }
            set.insert(v);
        }
        Ok(DependenceSet { depth, distances: set })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.distances.iter()
    }

    pub fn to_vec(&self) -> Vec<Vec<i64>> {
        self.distances.iter().cloned().collect()
    }
}

/// True iff the first nonzero component is positive. The zero vector is not.
pub fn is_lex_positive(v: &[i64]) -> bool {
    v.iter().find(|x| **x != 0).is_some_and(|x| *x > 0)
}

/// Distances between every write and every other access of the same array.
/// A lexicographically negative difference is an anti dependence and is
/// stored negated, so the set always points from source to sink.
pub fn compute_dependences(nest: &LoopNest) -> Result<DependenceSet, DependenceError> {
    let depth = nest.depth;
    for acc in &nest.accesses {
        if let Some(o) = acc.offsets.iter().find(|o| o.len() != depth) {
            return Err(DependenceError::BadOffset { depth, found: o.len() });
        }
    }
    let mut out = BTreeSet::new();
    for w in nest.accesses.iter().filter(|a| a.is_write) {
        for other in nest.accesses.iter().filter(|a| a.array == w.array) {
            for ow in &w.offsets {
                for oo in &other.offsets {
                    let d: Vec<i64> = ow.iter().zip(oo).map(|(a, b)| a - b).collect();
                    if d.iter().all(|x| *x == 0) {
                        continue;
                    }
                    if is_lex_positive(&d) {
                        out.insert(d);
                    } else {
                        out.insert(d.iter().map(|x| -x).collect());
                    }
                }
            }
        }
    }
    Ok(DependenceSet { depth, distances: out })
}

/// `{ U·v : v ∈ d }`, no legality filtering.
pub fn transform_distances(d: &DependenceSet, u: &IntMatrix) -> Result<Vec<Vec<i64>>, DependenceError> {
    if u.dim() != d.depth() {
        return Err(DependenceError::DimensionMismatch {
            expected: d.depth(),
            found: u.dim(),
        });
    }
    if !u.is_unimodular() {
        return Err(DependenceError::NotUnimodular);
    }
    Ok(d.iter().map(|v| u.mul_vec(v)).collect())
}

fn carried_before(v: &[i64], p: usize) -> bool {
    v[..p].iter().find(|x| **x != 0).is_some_and(|x| *x > 0)
}

/// No dependence is carried at loop `p`.
pub fn parallel_legal<V: AsRef<[i64]>>(d: &[V], p: usize) -> bool {
    d.iter().all(|v| {
        let v = v.as_ref();
        !(v[..p].iter().all(|x| *x == 0) && v[p] != 0)
    })
}

/// Every vector is carried before `p` or non-negative across the band `p..=q`.
pub fn band_permutable<V: AsRef<[i64]>>(d: &[V], p: usize, q: usize) -> bool {
    d.iter().all(|v| {
        let v = v.as_ref();
        carried_before(v, p) || v[p..=q].iter().all(|x| *x >= 0)
    })
}

/// Brute-force legality: enumerate every pair of iterations touching the same
/// element (at least one write) with all extents clamped to `cap`, execute
/// both in the transformed order and compare.
pub fn oracle_legal(nest: &LoopNest, sched: &NestSchedule, cap: u64) -> Result<bool, DependenceError> {
    if sched.depth() != nest.depth {
        return Err(DependenceError::DimensionMismatch {
            expected: nest.depth,
            found: sched.depth(),
        });
    }
    let extents: Vec<i64> = nest.extents.iter().map(|e| (*e).min(cap) as i64).collect();
    let iterations = box_points(&extents);

    // element -> accessing iterations
    let mut touches: HashMap<(&str, Vec<i64>), Vec<(usize, bool)>> = HashMap::new();
    for (idx, x) in iterations.iter().enumerate() {
        for acc in &nest.accesses {
            for o in &acc.offsets {
                let elem: Vec<i64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
                touches.entry((acc.array.as_str(), elem)).or_default().push((idx, acc.is_write));
            }
        }
    }
    let keys: Vec<Vec<i64>> = iterations.iter().map(|x| sched.execution_key(x)).collect();
    let par = sched.parallel;
    for list in touches.values() {
        for (a, &(ia, wa)) in list.iter().enumerate() {
            for &(ib, wb) in &list[a + 1..] {
                if ia == ib || !(wa || wb) {
                    continue;
                }
                // source is the earlier iteration in original order
                let (src, snk) = if iterations[ia] < iterations[ib] { (ia, ib) } else { (ib, ia) };
                let (ks, kt) = (&keys[src], &keys[snk]);
                if ks >= kt {
                    return Ok(false);
                }
                if let Some(l) = par {
                    if ks[..l] == kt[..l] && ks[l] != kt[l] {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

fn box_points(extents: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &e in extents {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..e).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}
