//! Loop-nest programs and the seeded random program generator.
//!
//! A program is an ordered list of perfect loop nests. Every nest holds one
//! statement whose array accesses are the identity iteration-to-element map
//! plus a constant offset, so all dependences are uniform distance vectors.

use std::collections::BTreeMap;
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependence::{compute_dependences, is_lex_positive};

pub const MAX_NESTS: usize = 4;
pub const MAX_DEPTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Elementwise,
    Stencil,
    Reduction,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::Elementwise, Pattern::Stencil, Pattern::Reduction];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPattern {
    pub array: String,
    pub offsets: Vec<Vec<i64>>,
    pub is_write: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopNest {
    pub depth: usize,
    pub extents: Vec<u64>,
    pub pattern: Pattern,
    pub statement_cost: u64,
    pub accesses: Vec<AccessPattern>,
}

impl LoopNest {
    /// The single written array of the statement, if well formed.
    pub fn written_array(&self) -> Option<&str> {
        self.accesses
            .iter()
            .find(|a| a.is_write)
            .map(|a| a.array.as_str())
    }

    pub fn iterations(&self) -> u64 {
        self.extents.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    pub id: String,
    pub seed: u64,
    pub nests: Vec<LoopNest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub max_nests: usize,
    pub max_depth: usize,
    pub extent_choices: Vec<u64>,
    pub pattern_weights: BTreeMap<Pattern, u32>,
    pub stencil_offset_catalog: Vec<Vec<Vec<i64>>>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_nests: 3,
            max_depth: 4,
            extent_choices: vec![16, 32, 64, 128],
            pattern_weights: Pattern::ALL.iter().map(|p| (*p, 1)).collect(),
            stencil_offset_catalog: default_stencil_catalog(),
        }
    }
}

/// Every nonempty combination of the classic 2-D and 3-D upwind offsets.
pub fn default_stencil_catalog() -> Vec<Vec<Vec<i64>>> {
    let two: [Vec<i64>; 3] = [vec![-1, 0], vec![0, -1], vec![-1, -1]];
    let three: [Vec<i64>; 3] = [vec![-1, 0, 0], vec![0, -1, 0], vec![0, 0, -1]];
    let mut catalog = Vec::new();
    for base in [&two, &three] {
        for mask in 1u32..8 {
            let set: Vec<Vec<i64>> = (0..3)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| base[b].clone())
                .collect();
            catalog.push(set);
        }
    }
    catalog
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid generator config field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
}

fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidField {
        field,
        reason: reason.into(),
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_NESTS).contains(&self.max_nests) {
            return Err(bad("max_nests", format!("must be in 1..={MAX_NESTS}")));
        }
        if !(1..=MAX_DEPTH).contains(&self.max_depth) {
            return Err(bad("max_depth", format!("must be in 1..={MAX_DEPTH}")));
        }
        if self.extent_choices.is_empty() || self.extent_choices.iter().any(|e| *e < 2) {
            return Err(bad("extent_choices", "must be nonempty with every extent >= 2"));
        }
        if self.pattern_weights.values().all(|w| *w == 0) {
            return Err(bad("pattern_weights", "weights must not all be zero"));
        }
        for (i, set) in self.stencil_offset_catalog.iter().enumerate() {
            let dim = set.first().map_or(0, Vec::len);
            if set.is_empty() || dim == 0 || dim > MAX_DEPTH || set.iter().any(|o| o.len() != dim) {
                return Err(bad(
                    "stencil_offset_catalog",
                    format!("entry {i} must be a nonempty set of equal-length offsets"),
                ));
            }
            if set.iter().any(|o| is_lex_positive(o)) {
                return Err(bad(
                    "stencil_offset_catalog",
                    format!("entry {i} has a lexicographically positive offset"),
                ));
            }
        }
        if self.weight(Pattern::Stencil) > 0 && self.stencil_min_depth().is_none() {
            return Err(bad(
                "stencil_offset_catalog",
                "stencil weight is positive but no catalog entry fits within max_depth",
            ));
        }
        Ok(())
    }

    fn weight(&self, p: Pattern) -> u32 {
        self.pattern_weights.get(&p).copied().unwrap_or(0)
    }

    fn stencil_min_depth(&self) -> Option<usize> {
        self.stencil_offset_catalog
            .iter()
            .map(|s| s[0].len())
            .filter(|d| *d <= self.max_depth)
            .min()
    }
}

/// Generates one program as a pure function of `(seed, cfg)`.
pub fn generate_program(seed: u64, cfg: &GeneratorConfig) -> Result<Program, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<u32> = Pattern::ALL.iter().map(|p| cfg.weight(*p)).collect();
    let pattern_dist = WeightedIndex::new(&weights).expect("validated weights");
    let n_nests = rng.gen_range(1..=cfg.max_nests);
    let nests = (0..n_nests)
        .map(|i| {
            let pattern = Pattern::ALL[pattern_dist.sample(&mut rng)];
            generate_nest(&mut rng, i, pattern, cfg)
        })
        .collect();
    Ok(Program {
        id: format!("p{seed:016x}"),
        seed,
        nests,
    })
}

fn generate_nest(rng: &mut ChaCha8Rng, index: usize, pattern: Pattern, cfg: &GeneratorConfig) -> LoopNest {
    let min_depth = match pattern {
        Pattern::Stencil => cfg.stencil_min_depth().expect("validated catalog"),
        _ => 1,
    };
    let depth = rng.gen_range(min_depth..=cfg.max_depth);
    let extents: Vec<u64> = (0..depth)
        .map(|_| *cfg.extent_choices.choose(rng).expect("nonempty"))
        .collect();
    let statement_cost = rng.gen_range(1..=4);
    let out = format!("n{index}_out");
    let mut accesses = vec![AccessPattern {
        array: out.clone(),
        offsets: vec![vec![0; depth]],
        is_write: true,
    }];
    match pattern {
        Pattern::Elementwise => {}
        Pattern::Stencil => {
            let fitting: Vec<&Vec<Vec<i64>>> = cfg
                .stencil_offset_catalog
                .iter()
                .filter(|s| s[0].len() <= depth)
                .collect();
            let set = fitting.choose(rng).expect("validated catalog");
            let dim = set[0].len();
            let start = rng.gen_range(0..=depth - dim);
            let offsets = set
                .iter()
                .map(|o| {
                    let mut full = vec![0; depth];
                    full[start..start + dim].copy_from_slice(o);
                    full
                })
                .collect();
            accesses.push(AccessPattern {
                array: out.clone(),
                offsets,
                is_write: false,
            });
        }
        Pattern::Reduction => {
            let level = rng.gen_range(0..depth);
            let mut offset = vec![0; depth];
            offset[level] = -1;
            accesses.push(AccessPattern {
                array: out.clone(),
                offsets: vec![offset],
                is_write: false,
            });
        }
    }
    let inputs = rng.gen_range(1..=2);
    for k in 0..inputs {
        accesses.push(AccessPattern {
            array: format!("n{index}_in{k}"),
            offsets: vec![vec![0; depth]],
            is_write: false,
        });
    }
    LoopNest {
        depth,
        extents,
        pattern,
        statement_cost,
        accesses,
    }
}

/// SplitMix64 finalizer: a bijection on u64, used to derive per-index seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of corpus element `index`. Distinct indices give distinct seeds, so
/// program ids never collide within a corpus.
pub fn corpus_subseed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn generate_corpus(seed: u64, n: usize, cfg: &GeneratorConfig) -> Result<Vec<Program>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::EmptyCorpus);
    }
    cfg.validate()?;
    (0..n as u64)
        .map(|i| generate_program(corpus_subseed(seed, i), cfg))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub nest: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Reports every violated invariant; never aborts.
pub fn validate_program(p: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.nests.is_empty() || p.nests.len() > MAX_NESTS {
        out.push(Violation {
            nest: None,
            path: "nests".into(),
            message: format!("program must have 1..={MAX_NESTS} nests, found {}", p.nests.len()),
        });
    }
    for (i, nest) in p.nests.iter().enumerate() {
        validate_nest(i, nest, &mut out);
    }
    out
}

fn validate_nest(i: usize, nest: &LoopNest, out: &mut Vec<Violation>) {
    let before = out.len();
    let mut push = |path: String, message: String| {
        out.push(Violation {
            nest: Some(i),
            path,
            message,
        })
    };
    let base = format!("nests[{i}]");
    if !(1..=MAX_DEPTH).contains(&nest.depth) {
        push(format!("{base}.depth"), format!("depth must be in 1..={MAX_DEPTH}"));
    }
    if nest.extents.len() != nest.depth {
        push(
            format!("{base}.extents"),
            format!("expected {} extents, found {}", nest.depth, nest.extents.len()),
        );
    }
    for (j, e) in nest.extents.iter().enumerate() {
        if *e < 2 {
            push(format!("{base}.extents[{j}]"), format!("extent {e} is below 2"));
        }
    }
    if nest.statement_cost == 0 {
        push(format!("{base}.statement_cost"), "statement cost must be positive".into());
    }
    let writes = nest.accesses.iter().filter(|a| a.is_write).count();
    if writes != 1 {
        push(
            format!("{base}.accesses"),
            format!("statement needs exactly one write access pattern, found {writes}"),
        );
    }
    for (k, acc) in nest.accesses.iter().enumerate() {
        if acc.offsets.is_empty() {
            push(format!("{base}.accesses[{k}].offsets"), "access has no offsets".into());
        }
        for (m, o) in acc.offsets.iter().enumerate() {
            if o.len() != nest.depth {
                push(
                    format!("{base}.accesses[{k}].offsets[{m}]"),
                    format!("offset of array `{}` has length {}, nest depth is {}", acc.array, o.len(), nest.depth),
                );
            }
        }
    }
    if out.len() > before {
        return;
    }
    // Semantic checks only run on structurally sound nests.
    let self_array = nest.written_array().unwrap_or_default().to_string();
    match nest.pattern {
        Pattern::Elementwise => match compute_dependences(nest) {
            Ok(d) if d.is_empty() => {}
            Ok(d) => out.push(Violation {
                nest: Some(i),
                path: format!("{base}.pattern"),
                message: format!("elementwise nest carries {} dependence distance(s)", d.len()),
            }),
            Err(e) => out.push(Violation {
                nest: Some(i),
                path: format!("{base}.accesses"),
                message: e.to_string(),
            }),
        },
        Pattern::Stencil => {
            for (k, acc) in nest.accesses.iter().enumerate() {
                if acc.is_write || acc.array != self_array {
                    continue;
                }
                for (m, o) in acc.offsets.iter().enumerate() {
                    if is_lex_positive(o) {
                        out.push(Violation {
                            nest: Some(i),
                            path: format!("{base}.accesses[{k}].offsets[{m}]"),
                            message: "stencil self-read must be lexicographically non-positive".into(),
                        });
                    }
                }
            }
        }
        Pattern::Reduction => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementwise_only_config_gives_dependence_free_nests() {
        let cfg = GeneratorConfig {
            pattern_weights: [(Pattern::Elementwise, 1), (Pattern::Stencil, 0), (Pattern::Reduction, 0)]
                .into_iter()
                .collect(),
            ..GeneratorConfig::default()
        };
        let p = generate_program(7, &cfg).unwrap();
        for nest in &p.nests {
            assert_eq!(nest.pattern, Pattern::Elementwise);
            assert!(compute_dependences(nest).unwrap().is_empty());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::default();
        assert_eq!(generate_program(7, &cfg).unwrap(), generate_program(7, &cfg).unwrap());
    }

    #[test]
    fn neighbouring_seeds_differ() {
        let cfg = GeneratorConfig::default();
        for s in 0..100u64 {
            let a = generate_program(s, &cfg).unwrap();
            let b = generate_program(s + 1, &cfg).unwrap();
            assert_ne!(a.nests, b.nests, "seeds {s} and {} collided", s + 1);
        }
    }

    #[test]
    fn corpus_is_prefix_stable_with_unique_ids() {
        let cfg = GeneratorConfig::default();
        assert_eq!(generate_corpus(1, 1, &cfg).unwrap().len(), 1);
        let ten = generate_corpus(1, 10, &cfg).unwrap();
        let five = generate_corpus(1, 5, &cfg).unwrap();
        assert_eq!(&ten[..5], &five[..]);
        let hundred = generate_corpus(1, 100, &cfg).unwrap();
        let ids: std::collections::HashSet<_> = hundred.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), 100);
        assert_eq!(generate_corpus(1, 0, &cfg), Err(ConfigError::EmptyCorpus));
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = GeneratorConfig {
            extent_choices: vec![1],
            ..GeneratorConfig::default()
        };
        match generate_program(1, &cfg) {
            Err(ConfigError::InvalidField { field, .. }) => assert_eq!(field, "extent_choices"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = GeneratorConfig {
            pattern_weights: BTreeMap::new(),
            ..GeneratorConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::InvalidField { field: "pattern_weights", .. })
        ));
    }

    #[test]
    fn validation_reports_bad_offset_and_extent() {
        let mut p = generate_program(3, &GeneratorConfig::default()).unwrap();
        assert!(validate_program(&p).is_empty());
        p.nests[0].accesses[0].offsets[0].push(0);
        let v = validate_program(&p);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].path.starts_with("nests[0].accesses[0]"));

        let mut q = generate_program(3, &GeneratorConfig::default()).unwrap();
        q.nests[0].extents[0] = 1;
        let v = validate_program(&q);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].nest, Some(0));
    }

    #[test]
    fn default_catalog_shape() {
        let cat = default_stencil_catalog();
        assert_eq!(cat.len(), 14);
        assert!(GeneratorConfig::default().validate().is_ok());
    }

    #[test]
    fn corpus_json_field_names() {
        let p = generate_program(5, &GeneratorConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["id", "nests", "seed"]);
        let nest = &v["nests"][0];
        for k in ["depth", "extents", "pattern", "statement_cost", "accesses"] {
            assert!(nest.get(k).is_some(), "missing {k}");
        }
        for k in ["array", "offsets", "is_write"] {
            assert!(nest["accesses"][0].get(k).is_some(), "missing {k}");
        }
    }
}
