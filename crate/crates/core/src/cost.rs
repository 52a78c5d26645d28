//! Deterministic analytical machine model.
//!
//! Per nest the model walks the post-tiling loop structure. A sequential
//! level with trip count `t` costs `t · (inner + c_loop)`; a parallel level
//! costs `ceil(t / min(P, t)) · (inner + c_loop) + c_spawn`. The leaf is the
//! statement cost plus a miss penalty per access, where the miss rate
//! follows the stride of the innermost transformed loop through a row-major
//! layout. The recursion is expanded into additive terms evaluated in a fixed
//! order, so the breakdown sums to the total bit-for-bit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependence::{compute_dependences, DependenceError, DependenceSet};
use crate::ir::{LoopNest, Program};
use crate::transforms::{NestSchedule, ScheduleState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MachineConfig {
    pub cores: u64,
    pub cache_bytes: u64,
    pub line_elems: u64,
    pub elem_bytes: u64,
    pub miss_penalty: f64,
    pub loop_overhead: f64,
    pub spawn_cost: f64,
    pub skew_overhead: f64,
    pub registers: u64,
    pub ilp_gain_cap: f64,
    pub ilp_slope: f64,
    pub spill_slope: f64,
    pub tile_discount: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            cores: 16,
            cache_bytes: 1_048_576,
            line_elems: 8,
            elem_bytes: 8,
            miss_penalty: 8.0,
            loop_overhead: 1.0,
            spawn_cost: 1000.0,
            skew_overhead: 0.5,
            registers: 64,
            ilp_gain_cap: 0.4,
            ilp_slope: 0.1,
            spill_slope: 0.25,
            tile_discount: 0.25,
        }
    }
}

impl MachineConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        let ints = [
            ("cores", self.cores),
            ("cache_bytes", self.cache_bytes),
            ("line_elems", self.line_elems),
            ("elem_bytes", self.elem_bytes),
            ("registers", self.registers),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(CostError::Config(format!("{name} must be positive")));
            }
        }
        let floats = [
            ("miss_penalty", self.miss_penalty),
            ("loop_overhead", self.loop_overhead),
            ("spawn_cost", self.spawn_cost),
            ("skew_overhead", self.skew_overhead),
            ("ilp_gain_cap", self.ilp_gain_cap),
            ("ilp_slope", self.ilp_slope),
            ("spill_slope", self.spill_slope),
            ("tile_discount", self.tile_discount),
        ];
        for (name, v) in floats {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CostError::Config(format!("{name} must be a non-negative number")));
            }
        }
        if self.ilp_gain_cap >= 1.0 {
            return Err(CostError::Config("ilp_gain_cap must be below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid machine config: {0}")]
    Config(String),
    #[error("schedule has {found} nests, program has {expected}")]
    NestCount { expected: usize, found: usize },
    #[error("schedule is illegal for nest {nest}: dependence {violated:?} is violated")]
    Illegal { nest: usize, violated: Vec<i64> },
    #[error("nest {0}: transformation matrix is not invertible")]
    Singular(usize),
    #[error(transparent)]
    Dependence(#[from] DependenceError),
}

/// Additive decomposition of a predicted execution time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub work: f64,
    pub memory: f64,
    pub loop_overhead: f64,
    pub spawn: f64,
    pub skew: f64,
    pub spill: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.work + self.memory + self.loop_overhead + self.spawn + self.skew + self.spill
    }

    fn add(&mut self, o: &Breakdown) {
        self.work += o.work;
        self.memory += o.memory;
        self.loop_overhead += o.loop_overhead;
        self.spawn += o.spawn;
        self.skew += o.skew;
        self.spill += o.spill;
    }
}

/// Predicted time of one nest under `sched`. No legality check.
pub fn nest_breakdown(nest: &LoopNest, sched: &NestSchedule, mc: &MachineConfig, index: usize) -> Result<Breakdown, CostError> {
    let d = nest.depth;
    let inv = sched.u.inverse().ok_or(CostError::Singular(index))?;
    let perm = sched.u.dominant_permutation().ok_or(CostError::Singular(index))?;
    let ext: Vec<u64> = perm.iter().map(|j| nest.extents[*j]).collect();

    let trips: Vec<u64> = match &sched.tiling {
        None => ext.clone(),
        Some(t) => {
            let (p, q) = (t.start(), t.end());
            let mut v = ext[..p].to_vec();
            v.extend((p..=q).zip(&t.sizes).map(|(k, s)| ext[k].div_ceil(*s)));
            v.extend((p..=q).zip(&t.sizes).map(|(k, s)| ext[k].min(*s)));
            v.extend_from_slice(&ext[q + 1..]);
            v
        }
    };

    let unroll = sched.unroll.unwrap_or(1);
    let mut out = Breakdown::default();
    let mut entries = 1.0f64;
    for (l, &t) in trips.iter().enumerate() {
        let eff = if sched.parallel == Some(l) {
            out.spawn = mc.spawn_cost * entries;
            t.div_ceil(mc.cores.min(t)) as f64
        } else {
            t as f64
        };
        entries *= eff;
        let c = if l + 1 == trips.len() {
            mc.loop_overhead / unroll as f64
        } else {
            mc.loop_overhead
        };
        out.loop_overhead += entries * c;
    }
    let iterations = entries;

    // innermost transformed loop is always original-space direction U⁻¹·e_{d-1}
    let direction = inv.column(d - 1);
    let layout: Vec<i64> = (0..d)
        .map(|j| nest.extents[j + 1..].iter().product::<u64>() as i64)
        .collect();
    let stride = layout.iter().zip(&direction).map(|(a, b)| a * b).sum::<i64>().unsigned_abs();
    let mut miss = if stride == 0 {
        0.0
    } else {
        (stride as f64 / mc.line_elems as f64).min(1.0)
    };
    if let Some(t) = &sched.tiling {
        let arrays: BTreeSet<&str> = nest.accesses.iter().map(|a| a.array.as_str()).collect();
        let mut tile_elems: u64 = 1;
        for (k, e) in ext.iter().enumerate().skip(t.start()) {
            let w = if k <= t.end() { (*e).min(t.sizes[k - t.start()]) } else { *e };
            tile_elems = tile_elems.saturating_mul(w);
        }
        let footprint = tile_elems
            .saturating_mul(arrays.len() as u64)
            .saturating_mul(mc.elem_bytes);
        if footprint <= mc.cache_bytes {
            miss *= mc.tile_discount;
        }
    }
    let accesses: usize = nest.accesses.iter().map(|a| a.offsets.len()).sum();
    let per_iter_memory = accesses as f64 * miss * mc.miss_penalty;

    let (ilp, spill_frac) = match sched.unroll {
        Some(u) => {
            let gain = (mc.ilp_slope * (u as f64).log2()).min(mc.ilp_gain_cap);
            let live = distinct_accesses(nest) as u64 + 1;
            let excess = (u * live).saturating_sub(mc.registers);
            (1.0 - gain, mc.spill_slope * excess as f64 / mc.registers as f64)
        }
        None => (1.0, 0.0),
    };
    let stmt = nest.statement_cost as f64;
    out.work = iterations * stmt * ilp;
    out.memory = iterations * per_iter_memory * ilp;
    out.spill = iterations * (stmt + per_iter_memory) * ilp * spill_frac;
    if !sched.u.is_signed_permutation() {
        out.skew = mc.skew_overhead * nest.iterations() as f64;
    }
    Ok(out)
}

fn distinct_accesses(nest: &LoopNest) -> usize {
    nest.accesses
        .iter()
        .flat_map(|a| a.offsets.iter().map(move |o| (a.array.as_str(), o)))
        .collect::<BTreeSet<_>>()
        .len()
}

fn check_shape(p: &Program, s: &ScheduleState) -> Result<(), CostError> {
    if p.nests.len() != s.nests.len() {
        return Err(CostError::NestCount {
            expected: p.nests.len(),
            found: s.nests.len(),
        });
    }
    Ok(())
}

/// Breakdown summed over nests, skipping the legality check. Callers that
/// already hold legal states (the search) use this directly.
pub fn breakdown_unchecked(p: &Program, s: &ScheduleState, mc: &MachineConfig) -> Result<Breakdown, CostError> {
    check_shape(p, s)?;
    let mut total = Breakdown::default();
    for (i, (nest, sched)) in p.nests.iter().zip(&s.nests).enumerate() {
        total.add(&nest_breakdown(nest, sched, mc, i)?);
    }
    Ok(total)
}

fn check_legal(p: &Program, s: &ScheduleState) -> Result<(), CostError> {
    check_shape(p, s)?;
    for (i, (nest, sched)) in p.nests.iter().zip(&s.nests).enumerate() {
        let deps: DependenceSet = compute_dependences(nest)?;
        if sched.depth() != nest.depth {
            return Err(CostError::Dependence(DependenceError::DimensionMismatch {
                expected: nest.depth,
                found: sched.depth(),
            }));
        }
        if let Some(v) = sched.violation(&deps) {
            return Err(CostError::Illegal { nest: i, violated: v });
        }
    }
    Ok(())
}

pub fn evaluate_breakdown(p: &Program, s: &ScheduleState, mc: &MachineConfig) -> Result<Breakdown, CostError> {
    mc.validate()?;
    check_legal(p, s)?;
    breakdown_unchecked(p, s, mc)
}

pub fn evaluate_time(p: &Program, s: &ScheduleState, mc: &MachineConfig) -> Result<f64, CostError> {
    Ok(evaluate_breakdown(p, s, mc)?.total())
}

pub fn speedup(p: &Program, s: &ScheduleState, mc: &MachineConfig) -> Result<f64, CostError> {
    let base = evaluate_time(p, &ScheduleState::for_program(p), mc)?;
    Ok(base / evaluate_time(p, s, mc)?)
}
