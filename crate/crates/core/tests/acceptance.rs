//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Every expected value is computed here by an oracle that does not call
//! the code under test: a local random matrix generator, read counts taken
//! straight from matrix cells, a brute-force read selector, and an
//! exhaustive-sequence filler search with its own state-set simulation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;

mod common;
use common::{random_matrix, subset};

use datacycle::experiment::{experiment_suite, resolve_instances, run_experiment, ExperimentConfig};
use datacycle::generator::{Origin, TestStep};
use datacycle::matrix::FunctionOp;
use datacycle::seed::rng_from;
use datacycle::sut::derive_crud_matrix;
use datacycle::sutgen::{generate_sut, SutGenConfig};
use datacycle::{
    audit_completeness, check_case, detect_defects, fixtures, generate_suite, repair_case, select_read,
    validate_matrix, AttributeId, CoverageCriterion, CrudMatrix, EntityId, FunctionId, OpKind,
    OperationSpec, StateId, TestCase, TransitionSystem,
};

use CoverageCriterion::*;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Counts read (R and B), create, update, delete occurrences of a column.
fn column_counts(m: &CrudMatrix, entity: &EntityId) -> (usize, usize, usize, usize) {
    let mut counts = (0, 0, 0, 0);
    for cell in m.cell_list() {
        if &cell.entity != entity {
            continue;
        }
        for op in &cell.ops {
            match op.kind {
                OpKind::R | OpKind::B => counts.0 += 1,
                OpKind::C => counts.1 += 1,
                OpKind::U => counts.2 += 1,
                OpKind::D => counts.3 += 1,
                OpKind::I => {}
            }
        }
    }
    counts
}

fn matrices() -> Vec<CrudMatrix> {
    (0..120).map(|s| random_matrix(1000 + s)).collect()
}

// ---------------------------------------------------------------------------
// 1. Structural pattern

fn criterion_1() -> Result<String, String> {
    let mut cases = 0;
    for (i, m) in matrices().iter().enumerate() {
        let report = validate_matrix(m);
        ensure(!report.has_errors(), || format!("local generator produced an invalid matrix #{i}:\n{report}"))?;
        for c in CoverageCriterion::ALL {
            let suite = generate_suite(m, c, i as u64).map_err(|e| format!("matrix #{i} {}: {e}", c.name()))?;
            for case in &suite.cases {
                cases += 1;
                let ctx = || format!("matrix #{i} {} {}", c.name(), case.entity);
                let steps = &case.steps;
                ensure(steps.first().and_then(|s| s.kind()) == Some(OpKind::C), || format!("{}: does not start with C", ctx()))?;
                for (k, s) in steps.iter().enumerate() {
                    if s.is_change_on(&case.entity) {
                        let next = steps.get(k + 1);
                        ensure(next.is_some_and(|n| n.is_read_on(&case.entity)), || {
                            format!("{}: step {k} ({} {:?}) not followed by a read", ctx(), s.function, s.kind())
                        })?;
                    }
                }
                let last_d = steps.iter().rposition(|s| s.kind() == Some(OpKind::D)).ok_or_else(|| format!("{}: no D", ctx()))?;
                ensure(steps[last_d + 1..].iter().any(|s| s.is_read_on(&case.entity)), || format!("{}: no read after final D", ctx()))?;
                ensure(steps.last().is_some_and(|s| s.kind().is_some_and(OpKind::is_read)), || format!("{}: does not end with a read", ctx()))?;
            }
        }
    }
    Ok(format!("{} matrices x 8 criteria, {cases} cases, 0 violations", matrices().len()))
}

// ---------------------------------------------------------------------------
// 2. Coverage counts

fn criterion_2() -> Result<String, String> {
    let mut checked = 0;
    for (i, m) in matrices().iter().enumerate() {
        let or = generate_suite(m, OR, 7).unwrap();
        let ir = generate_suite(m, IR, 7).unwrap();
        let nr = generate_suite(m, NR, 7).unwrap();
        for entity in m.entities() {
            let (reads, c, u, d) = column_counts(m, &entity.id);
            let slots = c + u + d;
            let find = |s: &datacycle::TestSuite| s.cases.iter().find(|x| x.entity == entity.id).cloned();
            let (Some(or_case), Some(ir_case), Some(nr_case)) = (find(&or), find(&ir), find(&nr)) else {
                return Err(format!("matrix #{i}: {} missing from a suite", entity.id));
            };
            let ctx = || format!("matrix #{i} {}", entity.id);

            // IR: every read of the column is assigned; exactly once when reads
            // cover the slots, otherwise the stand-in read fills the rest.
            let mut uses: BTreeMap<(String, String), usize> = BTreeMap::new();
            for s in ir_case.steps.iter().filter(|s| s.origin == Origin::ReadAssigned) {
                *uses.entry((s.function.to_string(), format!("{:?}", s.op))).or_default() += 1;
            }
            ensure(uses.len() == reads, || format!("{}: IR uses {} distinct reads of {reads}", ctx(), uses.len()))?;
            ensure(uses.values().sum::<usize>() == reads.max(slots), || format!("{}: IR read-step count", ctx()))?;
            if reads >= slots {
                ensure(uses.values().all(|&n| n == 1), || format!("{}: IR repeats a read", ctx()))?;
            } else {
                ensure(uses.values().filter(|&&n| n > 1).count() <= 1, || format!("{}: IR repeats several reads", ctx()))?;
            }

            let nr_reads = nr_case.steps.iter().filter(|s| s.origin == Origin::ReadAssigned).count();
            ensure(nr_reads == slots * reads, || format!("{}: NR has {nr_reads} read steps, expected {}", ctx(), slots * reads))?;

            let (a, b, n) = (or_case.steps.len(), ir_case.steps.len(), nr_case.steps.len());
            ensure(a <= b && b <= n, || format!("{}: step counts OR {a}, IR {b}, NR {n}", ctx()))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} entity columns, exact counts and OR <= IR <= NR"))
}

// ---------------------------------------------------------------------------
// 3. Completeness audit

fn criterion_3() -> Result<String, String> {
    for (i, m) in matrices().iter().enumerate() {
        for c in [IR, IRI, NR, NRI] {
            let suite = generate_suite(m, c, 3).unwrap();
            let missing = audit_completeness(&suite, m).unwrap();
            ensure(missing.is_empty(), || format!("matrix #{i} {}: uncovered {missing:?}", c.name()))?;
        }
    }
    let m1 = fixtures::m1();
    let ob = audit_completeness(&generate_suite(&m1, OB, 0).unwrap(), &m1).unwrap();
    let got: Vec<(String, String, OpKind)> = ob.iter().map(|u| (u.function.to_string(), u.entity.to_string(), u.op)).collect();
    ensure(got == [("f5".to_string(), "Order".to_string(), OpKind::R)], || format!("OB on M1 reported {got:?}"))?;
    Ok(format!("{} matrices x IR/IRI/NR/NRI empty; OB on M1 = [(f5, Order, R)]", matrices().len()))
}

// ---------------------------------------------------------------------------
// 4. Overlap selection

/// Overlap, then B over R, then the larger set, then declaration order.
fn brute_select(cands: &[FunctionOp], updated: &[AttributeId]) -> usize {
    let key = |i: usize| {
        let op = &cands[i].op;
        let overlap = op.attributes.iter().filter(|a| updated.contains(a)).count();
        (overlap, op.kind == OpKind::B, op.attributes.len(), std::cmp::Reverse(i))
    };
    (0..cands.len()).max_by_key(|&i| key(i)).unwrap()
}

fn criterion_4() -> Result<String, String> {
    let universe: Vec<AttributeId> = (0..10).map(|i| AttributeId::from(format!("a{i}"))).collect();
    let mut rng = rng_from(4);
    let mut comparisons = 0;
    for set in 0..150 {
        let n = 1 + set % 10;
        let b_at = if rng.gen_bool(0.5) { Some(rng.gen_range(0..n)) } else { None };
        let cands: Vec<FunctionOp> = (0..n)
            .map(|i| {
                let attrs = subset(&mut rng, &universe);
                let op = if b_at == Some(i) { OperationSpec::best_read(attrs) } else { OperationSpec::read(attrs) };
                FunctionOp { function: format!("f{i}").into(), op }
            })
            .collect();
        for mask in 1u32..(1 << 10) {
            let updated: Vec<AttributeId> = (0..10).filter(|b| mask & (1 << b) != 0).map(|b| universe[b].clone()).collect();
            let got = select_read(&cands, &updated).map_err(|e| e.to_string())?;
            let want = &cands[brute_select(&cands, &updated)];
            ensure(got == want, || format!("set {set}, updated {updated:?}: got {}, want {}", got.function, want.function))?;
            comparisons += 1;
        }
    }
    Ok(format!("{comparisons} selections over 150 candidate sets (1..10 reads x 10 attributes)"))
}

// ---------------------------------------------------------------------------
// 5. Repair oracle

struct Lts {
    states: usize,
    functions: usize,
    edges: Vec<(usize, usize, usize)>,
}

impl Lts {
    fn post(&self, set: &BTreeSet<usize>, f: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|(s, g, _)| *g == f && set.contains(s)).map(|(_, _, t)| *t).collect()
    }

    fn enabled(&self, set: &BTreeSet<usize>, f: usize) -> bool {
        self.edges.iter().any(|(s, g, _)| *g == f && set.contains(s))
    }

    fn all(&self) -> BTreeSet<usize> {
        (0..self.states).collect()
    }

    /// Shortest length of an enabled function sequence after which `target`
    /// is enabled, trying every sequence up to `bound`.
    fn brute_shortest(&self, start: &BTreeSet<usize>, target: usize, bound: usize) -> Option<usize> {
        fn go(lts: &Lts, set: &BTreeSet<usize>, target: usize, depth: usize) -> bool {
            if lts.enabled(set, target) {
                return true;
            }
            depth > 0 && (0..lts.functions).any(|f| lts.enabled(set, f) && go(lts, &lts.post(set, f), target, depth - 1))
        }
        (0..=bound).find(|&d| go(self, start, target, d))
    }

    /// No set reachable from `start` enables `target`.
    fn never_enables(&self, start: &BTreeSet<usize>, target: usize) -> bool {
        let mut seen = HashSet::from([start.clone()]);
        let mut stack = vec![start.clone()];
        while let Some(set) = stack.pop() {
            if self.enabled(&set, target) {
                return false;
            }
            for f in 0..self.functions {
                if self.enabled(&set, f) {
                    let next = self.post(&set, f);
                    if seen.insert(next.clone()) {
                        stack.push(next);
                    }
                }
            }
        }
        true
    }
}

const BRUTE_BOUND: usize = 5;

fn criterion_5() -> Result<String, String> {
    let (mut systems, mut gaps, mut unrepairable, mut beyond) = (0, 0, 0, 0);
    for seed in 0..60u64 {
        let mut rng = rng_from(500 + seed);
        let states = rng.gen_range(2..=8);
        let functions = rng.gen_range(2..=12);
        let n_edges = rng.gen_range(functions..=2 * functions + states);
        let edges: Vec<(usize, usize, usize)> = (0..n_edges)
            .map(|_| (rng.gen_range(0..states), rng.gen_range(0..functions), rng.gen_range(0..states)))
            .collect();
        let lts = Lts { states, functions, edges };
        let ts = TransitionSystem::new(
            (0..states).map(|s| StateId::from(format!("s{s}"))).collect(),
            (0..functions).map(|f| FunctionId::from(format!("f{f}"))).collect(),
            &StateId::from("s0"),
            lts.edges.iter().map(|&(s, f, t)| (format!("s{s}").into(), format!("f{f}").into(), format!("s{t}").into())),
        )
        .map_err(|e| e.to_string())?;
        systems += 1;

        for k in 0..5 {
            let len = rng.gen_range(3..=10);
            let steps: Vec<TestStep> = (0..len)
                .map(|_| TestStep {
                    function: format!("f{}", rng.gen_range(0..functions)).into(),
                    op: None,
                    entity: "E".into(),
                    origin: Origin::Skeleton,
                })
                .collect();
            let case = TestCase { entity: "E".into(), criterion: OR, seed: 0, steps };
            let result = repair_case(&case, &ts).map_err(|e| e.to_string())?;
            let ctx = || format!("system {seed} case {k}");
            let repaired = &result.repaired.steps;

            let designed: Vec<&TestStep> = repaired.iter().filter(|s| s.origin != Origin::RepairFiller).collect();
            ensure(designed.iter().copied().eq(case.steps.iter()), || format!("{}: original steps altered", ctx()))?;

            let fid = |s: &TestStep| s.function.as_str()[1..].parse::<usize>().unwrap();
            let mut set = BTreeSet::from([0usize]);
            let mut blamed = BTreeSet::new();
            let mut i = 0;
            while i < repaired.len() {
                let run_start = i;
                while repaired[i].origin == Origin::RepairFiller {
                    i += 1;
                }
                let filler = i - run_start;
                let target = fid(&repaired[i]);
                let before = set.clone();
                for s in &repaired[run_start..i] {
                    let f = fid(s);
                    ensure(lts.enabled(&set, f), || format!("{}: filler step {f} not enabled", ctx()))?;
                    set = lts.post(&set, f);
                }
                if filler > 0 {
                    gaps += 1;
                    match lts.brute_shortest(&before, target, BRUTE_BOUND) {
                        Some(n) => ensure(n == filler, || format!("{}: filler of {filler}, brute force {n}", ctx()))?,
                        None => {
                            beyond += 1;
                            ensure(filler > BRUTE_BOUND, || format!("{}: filler of {filler} missed by brute force", ctx()))?;
                        }
                    }
                }
                if !lts.enabled(&set, target) {
                    ensure(filler == 0 && lts.never_enables(&set, target), || format!("{}: gap at {i} left open", ctx()))?;
                    blamed.insert(i.saturating_sub(1));
                    unrepairable += 1;
                    set = lts.all();
                }
                set = lts.post(&set, target);
                if set.is_empty() {
                    // a step no state can execute leaves the position unknown
                    set = lts.all();
                }
                i += 1;
            }
            let declared: BTreeSet<usize> = result.unrepairable.iter().copied().collect();
            ensure(declared == blamed, || format!("{}: unrepairable {declared:?}, oracle {blamed:?}", ctx()))?;
            let recheck: BTreeSet<usize> = check_case(&result.repaired, &ts).unwrap().iter().map(|f| f.step_index).collect();
            ensure(recheck == declared, || format!("{}: re-check flags {recheck:?}, declared {declared:?}", ctx()))?;
        }
    }
    Ok(format!(
        "{systems} systems, {gaps} filled gaps matched brute force ({beyond} beyond bound {BRUTE_BOUND}), {unrepairable} unrepairable confirmed"
    ))
}

// ---------------------------------------------------------------------------
// 6. Detection monotonicity

fn is_supersequence(long: &[TestStep], short: &[TestStep]) -> bool {
    let mut it = long.iter();
    short.iter().all(|s| it.any(|l| l == s))
}

fn criterion_6() -> Result<String, String> {
    let mut suts = 0;
    for seed in 0..32u64 {
        let preset = ["small", "medium"][seed as usize % 2];
        let config = SutGenConfig { seed, ..SutGenConfig::preset(preset).unwrap() };
        let sut = generate_sut(&config).map_err(|e| e.to_string())?;
        let m = derive_crud_matrix(&sut, 1.0, seed).map_err(|e| e.to_string())?;
        for (core, ext) in [(IR, IRI), (NR, NRI)] {
            let pairs = [
                (generate_suite(&m, core, seed).unwrap(), generate_suite(&m, ext, seed).unwrap()),
                (experiment_suite(&sut, core, 1.0, seed).unwrap(), experiment_suite(&sut, ext, 1.0, seed).unwrap()),
            ];
            for (a, b) in &pairs {
                for (x, y) in a.cases.iter().zip(&b.cases) {
                    ensure(is_supersequence(&y.steps, &x.steps), || format!("sut {seed} {}: not a supersequence", ext.name()))?;
                }
                let da: BTreeSet<String> = detect_defects(a, &sut).unwrap().into_iter().collect();
                let db: BTreeSet<String> = detect_defects(b, &sut).unwrap().into_iter().collect();
                ensure(db.is_superset(&da), || format!("sut {seed}: {} detects {db:?}, {} detects {da:?}", ext.name(), core.name()))?;
            }
        }
        suts += 1;
    }
    Ok(format!("{suts} SUTs, IRI >= IR and NRI >= NR, as generated and as repaired"))
}

// ---------------------------------------------------------------------------
// 7. Experiment direction

fn criterion_7() -> Result<String, String> {
    let config = ExperimentConfig { repetitions: 10, ..Default::default() };
    let instances = resolve_instances(&config.instances).map_err(|e| e.to_string())?;
    ensure(instances.len() == 4, || "expected the four presets".into())?;
    let report = run_experiment(&config, &instances, 42).map_err(|e| e.to_string())?;
    let row = |c: CoverageCriterion| report.row(c).unwrap();
    let mut notes = Vec::new();
    for c in [OR, IR, IRI, NR, NRI] {
        let base = c.matched_baseline().unwrap();
        ensure(row(c).inconsistent_ratio <= row(base).inconsistent_ratio, || {
            format!("inconsistent {} {:.4} > {} {:.4}", c.name(), row(c).inconsistent_ratio, base.name(), row(base).inconsistent_ratio)
        })?;
        let inc = row(c).step_increase.unwrap_or(f64::NAN);
        ensure(inc > 0.0, || format!("step increase of {} is {inc}", c.name()))?;
        notes.push(format!("{} +{:.1}%", c.name(), inc * 100.0));
    }
    for chain in [[IRI, IR, Dcyt1R], [NRI, NR, DcytNR]] {
        for w in chain.windows(2) {
            ensure(row(w[0]).leakage_ratio <= row(w[1]).leakage_ratio, || {
                format!("leakage {} {:.4} > {} {:.4}", w[0].name(), row(w[0]).leakage_ratio, w[1].name(), row(w[1]).leakage_ratio)
            })?;
        }
    }
    let pct = |c: CoverageCriterion| format!("{} {:.1}%/{:.1}%", c.name(), row(c).inconsistent_ratio * 100.0, row(c).leakage_ratio * 100.0);
    Ok(format!(
        "4 presets x 10 seeds; inconsistent/leakage {}; {}; step increase {}",
        [Dcyt1R, OR, IR, IRI].map(pct).join(", "),
        [DcytNR, NR, NRI].map(pct).join(", "),
        notes.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 8. Determinism of every command

fn criterion_8() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let m1 = data.join("m1.json");
    let s1 = data.join("s1.json");
    let p = |path: &Path| path.to_str().unwrap().to_string();
    let csv = dir.path().join("grid.csv");
    std::fs::write(&csv, "function,Order,Invoice\nf1,C,\nf2,R,CRD\nf3,UD,R\n").unwrap();
    let suite = dir.path().join("iri.json");
    let sutgen = dir.path().join("sutgen.json");
    std::fs::write(
        &sutgen,
        r#"{"schema_version":1,"kind":"config","target":"sutgen","num_entities":3,"attrs_per_entity":[2,4],
            "num_functions":8,"num_states":5,"ops_density":0.5,"num_defects":3,"num_influence_facts":2,
            "influence_probability":0.4}"#,
    )
    .unwrap();
    let experiment = dir.path().join("experiment.json");
    std::fs::write(
        &experiment,
        r#"{"schema_version":1,"kind":"config","target":"experiment","instances":["small"],"repetitions":2}"#,
    )
    .unwrap();

    let run = |args: &[String]| {
        Command::new(env!("CARGO_BIN_EXE_datacycle")).args(args).output().expect("binary runs")
    };
    let first = run(&["generate".into(), p(&m1), "--criterion".into(), "iri".into(), "--seed".into(), "5".into()]);
    std::fs::write(&suite, &first.stdout).unwrap();

    let commands: Vec<Vec<String>> = vec![
        vec!["validate".into(), p(&m1)],
        vec!["import-csv".into(), p(&csv)],
        vec!["suggest-best-read".into(), p(&m1)],
        vec!["generate".into(), p(&m1), "--criterion".into(), "iri".into(), "--seed".into(), "5".into()],
        vec!["generate".into(), p(&m1), "--criterion".into(), "dcyt-1r".into(), "--seed".into(), "5".into(), "--format".into(), "text".into()],
        vec!["check".into(), p(&suite), "--sut".into(), p(&s1)],
        vec!["repair".into(), p(&suite), "--sut".into(), p(&s1)],
        vec!["simulate".into(), p(&suite), "--sut".into(), p(&s1), "--seed".into(), "9".into()],
        vec!["derive-matrix".into(), p(&s1), "--capture-ratio".into(), "0.5".into(), "--seed".into(), "2".into()],
        vec!["gen-sut".into(), "--config".into(), p(&sutgen), "--seed".into(), "11".into()],
        vec!["gen-sut".into(), "--preset".into(), "medium".into(), "--seed".into(), "11".into()],
        vec!["experiment".into(), "--config".into(), p(&experiment), "--seed".into(), "3".into()],
    ];
    for args in &commands {
        let a = run(args);
        let b = run(args);
        ensure(a.stdout == b.stdout && a.status.code() == b.status.code(), || format!("`{}` differs between runs", args.join(" ")))?;
        ensure(matches!(a.status.code(), Some(0 | 2)) && !a.stdout.is_empty(), || {
            format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&a.stderr))
        })?;
    }
    Ok(format!("{} commands, byte-identical output on re-run", commands.len()))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let checks: [(&str, Check, u64); 8] = [
        ("structural pattern", criterion_1, 60),
        ("coverage counts", criterion_2, 60),
        ("completeness audit", criterion_3, 60),
        ("overlap selection oracle", criterion_4, 60),
        ("repair oracle", criterion_5, 120),
        ("detection monotonicity", criterion_6, 120),
        ("experiment direction", criterion_7, 300),
        ("determinism", criterion_8, 120),
    ];
    let mut failed = 0;
    for (n, (name, check, budget)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > Duration::from_secs(budget) => Err(format!("{detail}; over the {budget}s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} [{:.1}s] {detail}", n + 1, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} [{:.1}s] {why}", n + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
