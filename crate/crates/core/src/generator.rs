//! Test case and suite generation under the coverage criteria.
//!
//! Every case follows the same skeleton: the entity's creates, updates and
//! deletes, each exactly once. The criterion only decides which reads
//! follow each of those steps:
//!
//! | criterion | reads after each C/U/D |
//! |-----------|------------------------|
//! | `DCYT_1R` | one, uniformly at random, on the attribute-erased matrix |
//! | `DCYT_NR` | all, on the attribute-erased matrix |
//! | `OR`      | one; widest overlap after U, priority or random otherwise |
//! | `OB`      | the best read |
//! | `IR`      | every read once, spread evenly |
//! | `NR`      | all, best read first |
//! | `IRI`/`NRI` | as `IR`/`NR`, plus verification reads on influenced entities |

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AttributeId, EntityId, FunctionId};
use crate::matrix::{operations_on, validate_matrix, ColumnOps, CrudMatrix, FunctionOp, MatrixError, OpKind, OperationSpec};
use crate::seed::{self, Rng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("entity `{0}` has no create operation")]
    MissingCreate(EntityId),
    #[error("entity `{0}` has no delete operation")]
    MissingDelete(EntityId),
    #[error("entity `{0}` has no read operation")]
    MissingRead(EntityId),
    #[error("entity `{0}` has no best read")]
    MissingBestRead(EntityId),
    #[error("criterion {0} needs an attribute-annotated matrix")]
    PlainMatrix(CoverageCriterion),
    #[error("matrix is invalid: {0}")]
    InvalidMatrix(String),
    #[error("no read candidates")]
    NoCandidates,
    #[error("suite was generated from matrix {suite}, not {matrix}")]
    FingerprintMismatch { suite: String, matrix: String },
}

impl GenerateError {
    /// Errors caused by an entity column that cannot host a case.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            GenerateError::MissingCreate(_)
                | GenerateError::MissingDelete(_)
                | GenerateError::MissingRead(_)
                | GenerateError::MissingBestRead(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoverageCriterion {
    #[serde(rename = "DCYT_1R")]
    Dcyt1R,
    #[serde(rename = "DCYT_NR")]
    DcytNR,
    #[serde(rename = "OR")]
    OR,
    #[serde(rename = "OB")]
    OB,
    #[serde(rename = "IR")]
    IR,
    #[serde(rename = "IRI")]
    IRI,
    #[serde(rename = "NR")]
    NR,
    #[serde(rename = "NRI")]
    NRI,
}

impl CoverageCriterion {
    pub const ALL: [CoverageCriterion; 8] = [
        CoverageCriterion::Dcyt1R,
        CoverageCriterion::DcytNR,
        CoverageCriterion::OR,
        CoverageCriterion::OB,
        CoverageCriterion::IR,
        CoverageCriterion::IRI,
        CoverageCriterion::NR,
        CoverageCriterion::NRI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoverageCriterion::Dcyt1R => "DCYT_1R",
            CoverageCriterion::DcytNR => "DCYT_NR",
            CoverageCriterion::OR => "OR",
            CoverageCriterion::OB => "OB",
            CoverageCriterion::IR => "IR",
            CoverageCriterion::IRI => "IRI",
            CoverageCriterion::NR => "NR",
            CoverageCriterion::NRI => "NRI",
        }
    }

    /// The classic data cycle criteria, which ignore attributes, B and I.
    pub fn is_baseline(self) -> bool {
        matches!(self, CoverageCriterion::Dcyt1R | CoverageCriterion::DcytNR)
    }

    pub fn requires_attributes(self) -> bool {
        matches!(
            self,
            CoverageCriterion::OB
                | CoverageCriterion::IR
                | CoverageCriterion::IRI
                | CoverageCriterion::NR
                | CoverageCriterion::NRI
        )
    }

    /// Baseline an extended criterion is compared against.
    pub fn matched_baseline(self) -> Option<CoverageCriterion> {
        match self {
            CoverageCriterion::OR | CoverageCriterion::IR | CoverageCriterion::IRI => Some(CoverageCriterion::Dcyt1R),
            CoverageCriterion::OB | CoverageCriterion::NR | CoverageCriterion::NRI => Some(CoverageCriterion::DcytNR),
            _ => None,
        }
    }
}

impl fmt::Display for CoverageCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoverageCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        CoverageCriterion::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| format!("unknown criterion `{s}` (expected one of dcyt-1r, dcyt-nr, or, ob, ir, iri, nr, nri)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Skeleton,
    ReadAssigned,
    InfluenceExtension,
    RepairFiller,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Skeleton => "skeleton",
            Origin::ReadAssigned => "read-assigned",
            Origin::InfluenceExtension => "influence-extension",
            Origin::RepairFiller => "repair-filler",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestStep {
    pub function: FunctionId,
    /// `None` for filler steps whose function does nothing to the entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<OperationSpec>,
    pub entity: EntityId,
    pub origin: Origin,
}

impl TestStep {
    pub fn new(function: FunctionId, op: OperationSpec, entity: EntityId, origin: Origin) -> Self {
        Self { function, op: Some(op), entity, origin }
    }

    pub fn kind(&self) -> Option<OpKind> {
        self.op.as_ref().map(|op| op.kind)
    }

    pub fn is_change_on(&self, entity: &EntityId) -> bool {
        &self.entity == entity && self.kind().is_some_and(OpKind::is_change)
    }

    pub fn is_read_on(&self, entity: &EntityId) -> bool {
        &self.entity == entity && self.kind().is_some_and(OpKind::is_read)
    }

    pub fn attributes(&self) -> &[AttributeId] {
        self.op.as_ref().map(|op| op.attributes.as_slice()).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub entity: EntityId,
    pub criterion: CoverageCriterion,
    pub seed: u64,
    pub steps: Vec<TestStep>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedEntity {
    pub entity: EntityId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub matrix_fingerprint: String,
    pub criterion: CoverageCriterion,
    pub seed: u64,
    pub cases: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedEntity>,
}

impl TestSuite {
    pub fn total_steps(&self) -> usize {
        self.cases.iter().map(|c| c.steps.len()).sum()
    }
}

/// An uncovered matrix occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Uncovered {
    pub function: FunctionId,
    pub entity: EntityId,
    pub op: OpKind,
}

/// Picks the read whose attributes overlap `updated` the most.
///
/// Ties go to a B over an R, then to the wider read, then to the earlier
/// candidate; callers pass candidates in function declaration order.
pub fn select_read<'a>(candidates: &'a [FunctionOp], updated: &[AttributeId]) -> Result<&'a FunctionOp, GenerateError> {
    let key = |c: &FunctionOp| (c.op.overlap(updated), c.op.kind == OpKind::B, c.op.attributes.len());
    let mut best: Option<&FunctionOp> = None;
    for c in candidates {
        match best {
            Some(b) if key(b) >= key(c) => {}
            _ => best = Some(c),
        }
    }
    best.ok_or(GenerateError::NoCandidates)
}

/// The read standing in for B: the explicit B, else the widest read.
fn best_or_widest(col: &ColumnOps) -> Option<&FunctionOp> {
    if let Some(b) = col.best_read() {
        return Some(b);
    }
    let mut best: Option<&FunctionOp> = None;
    for r in &col.reads {
        match best {
            Some(b) if b.op.attributes.len() >= r.op.attributes.len() => {}
            _ => best = Some(r),
        }
    }
    best
}

/// Read with the best (lowest) function priority rank, if any is ranked.
fn prioritized<'a>(matrix: &CrudMatrix, reads: &'a [FunctionOp]) -> Option<&'a FunctionOp> {
    let mut best: Option<(u32, &FunctionOp)> = None;
    for r in reads {
        if let Some(rank) = matrix.function(r.function.as_str()).and_then(|f| f.priority) {
            match best {
                Some((b, _)) if b <= rank => {}
                _ => best = Some((rank, r)),
            }
        }
    }
    best.map(|(_, r)| r)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SlotClass {
    Create,
    Update,
    Delete,
}

struct Slot {
    step: FunctionOp,
    class: SlotClass,
}

/// C/U/D occurrences in case order.
///
/// Creates and deletes are paired by declaration order into cycles; all
/// updates go into the first cycle. Surplus creates join the first cycle
/// right after its create, surplus deletes close the last cycle.
fn skeleton(col: &ColumnOps) -> Vec<Slot> {
    let slot = |op: &FunctionOp, class| Slot { step: op.clone(), class };
    let pairs = col.creates.len().min(col.deletes.len());
    let mut slots = Vec::with_capacity(col.change_count());
    for i in 0..pairs {
        slots.push(slot(&col.creates[i], SlotClass::Create));
        if i == 0 {
            for c in &col.creates[pairs..] {
                slots.push(slot(c, SlotClass::Create));
            }
            for u in &col.updates {
                slots.push(slot(u, SlotClass::Update));
            }
        }
        slots.push(slot(&col.deletes[i], SlotClass::Delete));
    }
    for d in &col.deletes[pairs..] {
        slots.push(slot(d, SlotClass::Delete));
    }
    slots
}

/// Reads in NR order: B first, then the rest in declaration order.
fn all_reads_best_first(col: &ColumnOps) -> Vec<FunctionOp> {
    let mut reads: Vec<FunctionOp> = col.reads.iter().filter(|r| r.op.kind == OpKind::B).cloned().collect();
    reads.extend(col.reads.iter().filter(|r| r.op.kind != OpKind::B).cloned());
    reads
}

/// IR assignment: every read used once.
fn distribute_reads(slots: &[Slot], col: &ColumnOps) -> Vec<Vec<FunctionOp>> {
    let mut assigned: Vec<Vec<FunctionOp>> = vec![Vec::new(); slots.len()];
    let by_class = |class| (0..slots.len()).filter(move |&i| slots[i].class == class);
    let fill_order: Vec<usize> = by_class(SlotClass::Update)
        .chain(by_class(SlotClass::Create))
        .chain(by_class(SlotClass::Delete))
        .collect();
    let updates: Vec<usize> = by_class(SlotClass::Update).collect();
    let others: Vec<usize> = by_class(SlotClass::Create).chain(by_class(SlotClass::Delete)).collect();

    if col.reads.len() >= slots.len() {
        // Quotas differ by at most one; the larger ones go to updates first.
        let base = col.reads.len() / slots.len();
        let extra = col.reads.len() % slots.len();
        let mut quota = vec![base; slots.len()];
        for &i in fill_order.iter().take(extra) {
            quota[i] += 1;
        }
        let mut pool = col.reads.clone();
        let rounds = updates.iter().map(|&i| quota[i]).max().unwrap_or(0);
        for round in 0..rounds {
            for &i in &updates {
                if quota[i] > round {
                    let pick = select_read(&pool, &slots[i].step.op.attributes).expect("pool covers quotas").clone();
                    pool.retain(|r| r != &pick);
                    assigned[i].push(pick);
                }
            }
        }
        for &i in &others {
            for _ in 0..quota[i] {
                assigned[i].push(pool.remove(0));
            }
        }
    } else {
        // Fewer reads than changes: the stand-in B covers every slot left
        // over, so the remaining reads are spread first.
        let fallback = best_or_widest(col).expect("column has a read").clone();
        let mut pool: Vec<FunctionOp> = col.reads.iter().filter(|r| **r != fallback).cloned().collect();
        for &i in &updates {
            if pool.is_empty() {
                break;
            }
            let pick = select_read(&pool, &slots[i].step.op.attributes).expect("pool is non-empty").clone();
            pool.retain(|r| r != &pick);
            assigned[i].push(pick);
        }
        for &i in &others {
            if pool.is_empty() {
                break;
            }
            assigned[i].push(pool.remove(0));
        }
        for reads in assigned.iter_mut() {
            if reads.is_empty() {
                reads.push(fallback.clone());
            }
        }
    }
    assigned
}

fn check_preconditions(col: &ColumnOps, entity: &EntityId, criterion: CoverageCriterion) -> Result<(), GenerateError> {
    if col.creates.is_empty() {
        return Err(GenerateError::MissingCreate(entity.clone()));
    }
    if col.deletes.is_empty() {
        return Err(GenerateError::MissingDelete(entity.clone()));
    }
    if col.reads.is_empty() {
        return Err(GenerateError::MissingRead(entity.clone()));
    }
    if criterion == CoverageCriterion::OB && col.best_read().is_none() {
        return Err(GenerateError::MissingBestRead(entity.clone()));
    }
    Ok(())
}

pub fn generate_test_case(
    matrix: &CrudMatrix,
    entity: &EntityId,
    criterion: CoverageCriterion,
    seed: u64,
) -> Result<TestCase, GenerateError> {
    if matrix.is_plain() && criterion.requires_attributes() {
        return Err(GenerateError::PlainMatrix(criterion));
    }
    let working: Cow<'_, CrudMatrix> = if criterion.is_baseline() && !matrix.is_plain() {
        Cow::Owned(matrix.erased())
    } else {
        Cow::Borrowed(matrix)
    };
    let col = operations_on(&working, entity)?;
    check_preconditions(&col, entity, criterion)?;

    let base = match criterion {
        CoverageCriterion::IRI => CoverageCriterion::IR,
        CoverageCriterion::NRI => CoverageCriterion::NR,
        c => c,
    };
    let slots = skeleton(&col);
    let mut rng = seed::rng_from(seed);
    let assigned: Vec<Vec<FunctionOp>> = match base {
        CoverageCriterion::Dcyt1R => slots
            .iter()
            .map(|_| vec![col.reads[rng.gen_range(0..col.reads.len())].clone()])
            .collect(),
        CoverageCriterion::OR => slots
            .iter()
            .map(|slot| {
                let pick = if slot.class == SlotClass::Update {
                    select_read(&col.reads, &slot.step.op.attributes).expect("reads are non-empty")
                } else if let Some(p) = prioritized(&working, &col.reads) {
                    p
                } else {
                    &col.reads[rng.gen_range(0..col.reads.len())]
                };
                vec![pick.clone()]
            })
            .collect(),
        CoverageCriterion::OB => {
            let best = col.best_read().expect("checked").clone();
            slots.iter().map(|_| vec![best.clone()]).collect()
        }
        CoverageCriterion::IR => distribute_reads(&slots, &col),
        CoverageCriterion::NR | CoverageCriterion::DcytNR => {
            let all = all_reads_best_first(&col);
            slots.iter().map(|_| all.clone()).collect()
        }
        CoverageCriterion::IRI | CoverageCriterion::NRI => unreachable!("mapped to IR/NR"),
    };

    let mut steps = Vec::new();
    for (slot, reads) in slots.iter().zip(assigned) {
        steps.push(TestStep::new(slot.step.function.clone(), slot.step.op.clone(), entity.clone(), Origin::Skeleton));
        for r in reads {
            steps.push(TestStep::new(r.function, r.op, entity.clone(), Origin::ReadAssigned));
        }
    }
    let case = TestCase { entity: entity.clone(), criterion, seed, steps };

    if base != criterion {
        let ext_seed = seed::derive_seed(seed, "influence", entity.as_str());
        return Ok(extend_influenced(&case, matrix, ext_seed));
    }
    Ok(case)
}

fn verification_step(matrix: &CrudMatrix, target: &EntityId, rng: &mut Rng) -> Option<TestStep> {
    let col = operations_on(matrix, target).ok()?;
    let pick = match col.best_read() {
        Some(b) => b.clone(),
        None if col.reads.is_empty() => return None,
        None => match prioritized(matrix, &col.reads) {
            Some(p) => p.clone(),
            None => col.reads[rng.gen_range(0..col.reads.len())].clone(),
        },
    };
    Some(TestStep::new(pick.function, pick.op, target.clone(), Origin::InfluenceExtension))
}

/// Adds verification reads for entities influenced by the case's changes.
///
/// For each skeleton C/U/D by a function `f'` whose row marks `I(entity)`
/// in the column of `e'`, a read on `e'` (its B, else a prioritized or
/// random R) is inserted after the read block of that step. Nothing is
/// removed or reordered.
pub fn extend_influenced(case: &TestCase, matrix: &CrudMatrix, seed: u64) -> TestCase {
    let Ok(col) = operations_on(matrix, &case.entity) else {
        return case.clone();
    };
    if col.influence_targets.is_empty() {
        return case.clone();
    }
    let mut rng = seed::rng_from(seed);
    let mut steps = Vec::with_capacity(case.steps.len() + col.influence_targets.len());
    let mut pending: Vec<TestStep> = Vec::new();
    for step in &case.steps {
        if step.origin == Origin::Skeleton && step.is_change_on(&case.entity) {
            steps.append(&mut pending);
            steps.push(step.clone());
            for (f, target) in &col.influence_targets {
                if f == &step.function {
                    if let Some(v) = verification_step(matrix, target, &mut rng) {
                        pending.push(v);
                    }
                }
            }
        } else {
            steps.push(step.clone());
        }
    }
    steps.append(&mut pending);
    TestCase { steps, ..case.clone() }
}

/// One case per entity that admits one; the others are listed as skipped.
pub fn generate_suite(matrix: &CrudMatrix, criterion: CoverageCriterion, seed: u64) -> Result<TestSuite, GenerateError> {
    let report = validate_matrix(matrix);
    if report.has_errors() {
        let msgs: Vec<String> = report.errors().map(ToString::to_string).collect();
        return Err(GenerateError::InvalidMatrix(msgs.join("; ")));
    }
    if matrix.is_plain() && criterion.requires_attributes() {
        return Err(GenerateError::PlainMatrix(criterion));
    }
    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    for entity in matrix.entities() {
        let case_seed = seed::derive_seed(seed, "entity", entity.id.as_str());
        match generate_test_case(matrix, &entity.id, criterion, case_seed) {
            Ok(case) => cases.push(case),
            Err(e) if e.is_precondition() => skipped.push(SkippedEntity { entity: entity.id.clone(), reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    Ok(TestSuite { matrix_fingerprint: matrix.fingerprint(), criterion, seed, cases, skipped })
}

/// Matrix occurrences (B counted as R, I ignored) exercised by no step.
pub fn audit_completeness(suite: &TestSuite, matrix: &CrudMatrix) -> Result<Vec<Uncovered>, GenerateError> {
    let fingerprint = matrix.fingerprint();
    if suite.matrix_fingerprint != fingerprint {
        return Err(GenerateError::FingerprintMismatch { suite: suite.matrix_fingerprint.clone(), matrix: fingerprint });
    }
    let covered: HashSet<(&FunctionId, &EntityId, OpKind)> = suite
        .cases
        .iter()
        .flat_map(|c| c.steps.iter())
        .filter_map(|s| s.kind().map(|k| (&s.function, &s.entity, k.crud())))
        .collect();
    let mut out: Vec<Uncovered> = Vec::new();
    for cell in matrix.cell_list() {
        for op in cell.ops.iter().filter(|op| op.kind != OpKind::I) {
            let kind = op.kind.crud();
            if covered.contains(&(&cell.function, &cell.entity, kind)) {
                continue;
            }
            let item = Uncovered { function: cell.function.clone(), entity: cell.entity.clone(), op: kind };
            if !out.contains(&item) {
                out.push(item);
            }
        }
    }
    Ok(out)
}
