use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use looplab::dataset::{read_corpus, read_datapoints};
use looplab::dependence::compute_dependences;
use looplab::ir::{AccessPattern, LoopNest, Pattern, Program};
use looplab::search::RuleSet;
use looplab::transforms::{is_legal, Op, ScheduleState, Transformation};

fn looplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_looplab")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    looplab(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stencil_program() -> Program {
    Program {
        id: "tiny".into(),
        seed: 0,
        nests: vec![LoopNest {
            depth: 2,
            extents: vec![32, 64],
            pattern: Pattern::Stencil,
            statement_cost: 2,
            accesses: vec![
                AccessPattern {
                    array: "A".into(),
                    offsets: vec![vec![0, 0]],
                    is_write: true,
                },
                AccessPattern {
                    array: "A".into(),
                    offsets: vec![vec![-1, 0], vec![0, -1]],
                    is_write: false,
                },
            ],
        }],
    }
}

/// Legal single-step schedules counted by brute force over a parameter grid
/// that covers every well-formed step of a depth-2 nest.
fn legal_single_steps(p: &Program) -> usize {
    let deps = compute_dependences(&p.nests[0]).unwrap();
    let root = ScheduleState::for_program(p);
    let mut ops = vec![Op::Interchange { p: 0, q: 1 }, Op::Reversal { p: 0 }, Op::Reversal { p: 1 }];
    ops.extend((1..=4).map(|factor| Op::Skewing { p: 0, q: 1, factor }));
    for a in [32, 64] {
        for b in [32, 64] {
            ops.push(Op::Tiling {
                band: vec![0, 1],
                sizes: vec![a, b],
            });
        }
    }
    ops.extend([4, 8, 16].map(|factor| Op::Unrolling { loop_index: 1, factor }));
    ops.extend((0..2).map(|l| Op::Parallelization { loop_index: l }));
    let mut sigs = std::collections::BTreeSet::new();
    for op in ops {
        let t = Transformation::new(0, op);
        if let Ok(true) = is_legal(&root, &t, &deps) {
            // skew candidates are solver outputs only: factor 1 for these distances
            if matches!(t.op, Op::Skewing { factor, .. } if factor != 1) {
                continue;
            }
            sigs.insert(root.apply_unchecked(&t).unwrap().signature());
        }
    }
    sigs.len()
}

#[test]
fn gen_writes_count_lines_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let out = looplab(&["gen", "--count", "5", "--seed", "1", "--out", s(&a)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "generated 5 programs");
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 5);
    looplab(&["gen", "--count", "5", "--seed", "1", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(read_corpus(&a).unwrap().len(), 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    assert_eq!(code(&["gen", "--count", "0", "--out", s(&out)]), 2);
    assert!(!out.exists());
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, r#"{"max_depth": 9}"#).unwrap();
    assert_eq!(code(&["gen", "--count", "3", "--config", s(&cfg), "--out", s(&out)]), 2);
    fs::write(&cfg, r#"{"depth": 2}"#).unwrap();
    assert_eq!(code(&["gen", "--count", "3", "--config", s(&cfg), "--out", s(&out)]), 2);
    assert_eq!(code(&["analyze", "--dataset", s(&out), "--report", "fusion"]), 2);
    assert_eq!(code(&["explore", "--programs", s(&out), "--mode", "greedy", "--out", s(&out)]), 2);
}

#[test]
fn io_and_malformed_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(code(&["analyze", "--dataset", s(&missing)]), 3);
    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"program_id\":\"a\",\"schedule\":[],\"speedup\":1.0,\"legal\":true}\n{\"program_id\":\"a\",\"schedule\":[{\"kind\":\"fusion\",\"nest\":0,\"params\":{}}],\"speedup\":1.0,\"legal\":true}\n",
    )
    .unwrap();
    let out = looplab(&["analyze", "--dataset", s(&bad)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let no_dir = dir.path().join("nope").join("c.jsonl");
    assert_eq!(code(&["gen", "--count", "2", "--out", s(&no_dir)]), 3);
}

#[test]
fn exhaustive_guard_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let mut nest = stencil_program().nests.remove(0);
    nest.depth = 4;
    nest.extents = vec![16; 4];
    nest.pattern = Pattern::Elementwise;
    nest.accesses = vec![AccessPattern {
        array: "A".into(),
        offsets: vec![vec![0; 4]],
        is_write: true,
    }];
    let p = Program {
        id: "big".into(),
        seed: 0,
        nests: vec![nest.clone(), nest],
    };
    fs::write(&corpus, serde_json::to_string(&p).unwrap() + "\n").unwrap();
    let out = dir.path().join("d.jsonl");
    assert_eq!(
        code(&["explore", "--programs", s(&corpus), "--mode", "exhaustive", "--max-len", "5", "--out", s(&out)]),
        4
    );
    assert!(!out.exists());
}

#[test]
fn exhaustive_single_step_count_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let p = stencil_program();
    fs::write(&corpus, serde_json::to_string(&p).unwrap() + "\n").unwrap();
    let out = dir.path().join("d.jsonl");
    let o = looplab(&["explore", "--programs", s(&corpus), "--mode", "exhaustive", "--max-len", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pts = read_datapoints(&out).unwrap();
    assert_eq!(pts.len(), legal_single_steps(&p) + 1);
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains(&format!("{} datapoints", pts.len())), "{summary}");
}

#[test]
fn explore_without_rules_matches_empty_rules_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    looplab(&["gen", "--count", "4", "--seed", "3", "--out", s(&corpus)]);
    let rules = dir.path().join("r.json");
    fs::write(&rules, serde_json::to_string(&RuleSet::none()).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    assert_eq!(code(&["explore", "--programs", s(&corpus), "--out", s(&a)]), 0);
    assert_eq!(code(&["explore", "--programs", s(&corpus), "--rules", s(&rules), "--out", s(&b)]), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn random_walk_summary_counts_programs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    looplab(&["gen", "--count", "10", "--seed", "8", "--out", s(&corpus)]);
    let search = dir.path().join("s.json");
    fs::write(&search, r#"{"mode":"random_walk","walks_per_program":5,"max_len":4}"#).unwrap();
    let out = dir.path().join("d.jsonl");
    let o = looplab(&["explore", "--programs", s(&corpus), "--search", s(&search), "--seed", "2", "--out", s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.starts_with("explored 10 programs"), "{text}");
    let lines = fs::read_to_string(&out).unwrap().lines().count();
    assert!(text.contains(&format!(": {lines} datapoints")), "{text}");
}

#[test]
fn empty_dataset_gives_header_only_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    fs::write(&data, "").unwrap();
    let csv = dir.path().join("csv");
    let json = dir.path().join("r.json");
    assert_eq!(
        code(&["analyze", "--dataset", s(&data), "--csv-dir", s(&csv), "--out-json", s(&json)]),
        0
    );
    let expected = [
        ("fig1.csv", "bin,mean,n\n"),
        ("fig3.csv", "factor,mean,n\n"),
        ("fig5.csv", "length,count\n"),
        ("fig6.csv", "length,mean,max\n"),
        ("fig7.csv", "from,interchange,reversal,skewing,tiling,unrolling,parallelization\n"),
        ("skew.csv", "metric,value,n\n"),
    ];
    for (name, body) in expected {
        assert_eq!(fs::read_to_string(csv.join(name)).unwrap(), body, "{name}");
    }
}

#[test]
fn fixture_dataset_golden_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let corpus = dir.path().join("c.jsonl");
    let mut p = stencil_program();
    p.nests[0].pattern = Pattern::Elementwise;
    p.nests[0].accesses.truncate(1);
    for id in ["s1", "s2", "s3"] {
        p.id = id.into();
        fs::write(&corpus, fs::read_to_string(&corpus).unwrap_or_default() + &serde_json::to_string(&p).unwrap() + "\n").unwrap();
    }
    let i = r#"{"kind":"interchange","nest":0,"params":{"p":0,"q":1}}"#;
    let k = r#"{"kind":"skewing","nest":0,"params":{"p":0,"q":1,"factor":1}}"#;
    let par = r#"{"kind":"parallelization","nest":0,"params":{"loop":0}}"#;
    let line = |id: &str, steps: &[&str], v: &str| {
        format!(r#"{{"program_id":"{id}","schedule":[{}],"speedup":{v},"legal":true}}"#, steps.join(",")) + "\n"
    };
    let text = line("s1", &[i, par], "4.0") + &line("s2", &[k, i, par], "6.0") + &line("s3", &[k, par], "2.0");
    fs::write(&data, text).unwrap();
    let csv = dir.path().join("csv");
    let json = dir.path().join("r.json");
    let o = looplab(&[
        "analyze", "--dataset", s(&data), "--programs", s(&corpus), "--csv-dir", s(&csv), "--out-json", s(&json),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    // hand-computed: all three programs parallelize level 0 of a depth-2 nest
    assert_eq!(fs::read_to_string(csv.join("fig1.csv")).unwrap(), "bin,mean,n\n0.05,4,3\n");
    assert_eq!(fs::read_to_string(csv.join("fig5.csv")).unwrap(), "length,count\n2,2\n3,1\n");
    assert_eq!(fs::read_to_string(csv.join("fig6.csv")).unwrap(), "length,mean,max\n2,3,4\n3,6,6\n");
    assert_eq!(
        fs::read_to_string(csv.join("fig7.csv")).unwrap(),
        "from,interchange,reversal,skewing,tiling,unrolling,parallelization\n\
         interchange,0,0,0,0,0,1\n\
         reversal,0,0,0,0,0,0\n\
         skewing,0.75,0,0,0,0,0.25\n\
         tiling,0,0,0,0,0,0\n\
         unrolling,0,0,0,0,0,0\n\
         parallelization,0,0,0,0,0,0\n"
    );
    assert_eq!(
        fs::read_to_string(csv.join("skew.csv")).unwrap(),
        "metric,value,n\nmean_skew_with_parallel,4,2\nmean_parallel_with_prior_skew,4,2\nmean_parallel_without_prior_skew,4,1\n"
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["transitions"]["raw"][0][5], 5.0);
    assert_eq!(v["transitions"]["raw"][2][0], 6.0);
    assert_eq!(v["transitions"]["counts"][2][5], 1);
    let order: Vec<&str> = v["derived_order"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(order, ["interchange", "reversal", "skewing", "tiling", "unrolling", "parallelization"]);
    assert!(v["skew"].get("ratio").is_none());
    assert_eq!(v["unroll"], serde_json::json!({}));
}

#[test]
fn compare_with_rules_prunes_every_program() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    looplab(&["gen", "--count", "50", "--seed", "3", "--out", s(&corpus)]);
    let rules = dir.path().join("r.json");
    fs::write(
        &rules,
        r#"{"parallel_depth_cutoff":0.3,"skew_gate":true,"fixed_unroll":[16],"max_schedule_len":8}"#,
    )
    .unwrap();
    let out = dir.path().join("summary.json");
    let o = looplab(&["compare", "--programs", s(&corpus), "--rules-config", s(&rules), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for r in v["programs"].as_array().unwrap() {
        assert!(r["evals_rules"].as_u64() < r["evals_baseline"].as_u64(), "{r}");
        assert!(r["speedup_ratio"].as_f64().unwrap() > 0.0);
    }
    let a = &v["aggregate"];
    assert!(a["mean_evals_ratio"].as_f64().unwrap() > 1.0);
}
