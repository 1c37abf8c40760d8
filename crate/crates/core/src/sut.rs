//! Artificial system under test: states, workflows, per-entity lifecycles,
//! injected defects and influence facts.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AttributeId, EntityId, FunctionId, StateId};
use crate::matrix::{Cell, CrudMatrix, Entity, Function, OpKind, OperationSpec};
use crate::seed;
use crate::transition::{TransitionError, TransitionSystem};
use crate::validation::{Rule, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SutError {
    #[error("invalid SUT: {0}")]
    Invalid(String),
    #[error("capture ratio {0} is outside [0, 1]")]
    CaptureRatio(f64),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowEdge {
    pub from: StateId,
    pub to: StateId,
    pub function: FunctionId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    pub id: String,
    pub edges: Vec<WorkflowEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEdge {
    pub from: StateId,
    pub to: StateId,
    pub function: FunctionId,
    pub ops: Vec<OperationSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleGraph {
    pub entity: EntityId,
    pub edges: Vec<LifecycleEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Activator {
    pub function: FunctionId,
    pub op: OpKind,
}

/// An injected data consistency defect: `cause_function` leaves `entity`
/// inconsistent through `cause_op`, and any activator exposes it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub id: String,
    pub entity: EntityId,
    pub cause_function: FunctionId,
    pub cause_op: OpKind,
    pub activators: Vec<Activator>,
}

/// `function` primarily changes `source` and, as a side effect, `influenced`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceFact {
    pub influenced: EntityId,
    pub function: FunctionId,
    pub source: EntityId,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtificialSut {
    pub functions: Vec<Function>,
    pub entities: Vec<Entity>,
    pub states: Vec<StateId>,
    pub initial_state: StateId,
    #[serde(default)]
    pub workflows: Vec<WorkflowGraph>,
    pub lifecycles: Vec<LifecycleGraph>,
    #[serde(default)]
    pub defects: Vec<Defect>,
    #[serde(default)]
    pub influences: Vec<InfluenceFact>,
}

impl ArtificialSut {
    pub fn fingerprint(&self) -> String {
        seed::fingerprint(&serde_json::to_vec(self).expect("SUT serializes"))
    }

    pub fn defect(&self, id: &str) -> Option<&Defect> {
        self.defects.iter().find(|d| d.id == id)
    }

    pub fn lifecycle(&self, entity: &EntityId) -> Option<&LifecycleGraph> {
        self.lifecycles.iter().find(|l| &l.entity == entity)
    }

    /// Union of lifecycle operations per `(function, entity)`. R and U
    /// attribute sets are merged in entity declaration order; ops are listed
    /// in C, R, U, D order.
    pub fn lifecycle_ops(&self) -> BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>> {
        let mut kinds: BTreeMap<(FunctionId, EntityId), BTreeMap<OpKind, HashSet<AttributeId>>> = BTreeMap::new();
        for lc in &self.lifecycles {
            for edge in &lc.edges {
                let slot = kinds.entry((edge.function.clone(), lc.entity.clone())).or_default();
                for op in &edge.ops {
                    slot.entry(op.kind).or_default().extend(op.attributes.iter().cloned());
                }
            }
        }
        let mut out = BTreeMap::new();
        for ((f, e), by_kind) in kinds {
            let declared: &[AttributeId] = self
                .entities
                .iter()
                .find(|x| x.id == e)
                .map(|x| x.attributes.as_slice())
                .unwrap_or(&[]);
            let ops: Vec<OperationSpec> = by_kind
                .into_iter()
                .map(|(kind, attrs)| {
                    let mut ordered: Vec<AttributeId> = declared.iter().filter(|a| attrs.contains(*a)).cloned().collect();
                    let mut undeclared: Vec<AttributeId> = attrs.into_iter().filter(|a| !declared.contains(a)).collect();
                    undeclared.sort();
                    ordered.extend(undeclared);
                    OperationSpec { kind, attributes: ordered, source: None }
                })
                .collect();
            out.insert((f, e), ops);
        }
        out
    }

    fn performs(ops: &BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>>, f: &FunctionId, e: &EntityId, kind: OpKind) -> bool {
        ops.get(&(f.clone(), e.clone()))
            .is_some_and(|ops| ops.iter().any(|o| o.kind.crud() == kind.crud()))
    }
}

pub fn validate_sut(sut: &ArtificialSut) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut function_ids = HashSet::new();
    for f in &sut.functions {
        if f.id.as_str().is_empty() {
            report.error(Rule::EmptyId, Some(&f.id), None, "function id is empty");
        }
        if !function_ids.insert(&f.id) {
            report.error(Rule::DuplicateFunction, Some(&f.id), None, format!("function `{}` declared twice", f.id));
        }
    }
    let mut entity_ids = HashSet::new();
    for e in &sut.entities {
        if e.id.as_str().is_empty() {
            report.error(Rule::EmptyId, None, Some(&e.id), "entity id is empty");
        }
        if !entity_ids.insert(&e.id) {
            report.error(Rule::DuplicateEntity, None, Some(&e.id), format!("entity `{}` declared twice", e.id));
        }
        if e.attributes.is_empty() {
            report.error(Rule::NoAttributes, None, Some(&e.id), format!("entity `{}` has no attributes", e.id));
        }
        let mut seen = HashSet::new();
        for a in &e.attributes {
            if !seen.insert(a) {
                report.error(Rule::DuplicateAttribute, None, Some(&e.id), format!("attribute `{a}` declared twice"));
            }
        }
    }
    let mut state_ids = HashSet::new();
    for s in &sut.states {
        if s.as_str().is_empty() {
            report.error(Rule::EmptyId, None, None, "state id is empty");
        }
        if !state_ids.insert(s) {
            report.error(Rule::DuplicateState, None, None, format!("state `{s}` declared twice"));
        }
    }
    if !state_ids.contains(&sut.initial_state) {
        report.error(Rule::UnknownInitialState, None, None, format!("initial state `{}` is not declared", sut.initial_state));
    }

    let check_edge = |report: &mut ValidationReport, from: &StateId, to: &StateId, f: &FunctionId, entity: Option<&EntityId>| {
        for s in [from, to] {
            if !state_ids.contains(s) {
                report.error(Rule::UnknownState, Some(f), entity, format!("edge endpoint `{s}` is not declared"));
            }
        }
        if !function_ids.contains(f) {
            report.error(Rule::UnknownFunction, Some(f), entity, format!("edge label `{f}` is not declared"));
        }
    };

    for wf in &sut.workflows {
        for edge in &wf.edges {
            check_edge(&mut report, &edge.from, &edge.to, &edge.function, None);
        }
    }

    if sut.lifecycles.len() != sut.entities.len() {
        report.error(
            Rule::LifecycleCount,
            None,
            None,
            format!("{} lifecycles for {} entities", sut.lifecycles.len(), sut.entities.len()),
        );
    }
    let mut with_lifecycle = HashSet::new();
    for lc in &sut.lifecycles {
        let Some(entity) = sut.entities.iter().find(|e| e.id == lc.entity) else {
            report.error(Rule::UnknownEntity, None, Some(&lc.entity), format!("lifecycle for undeclared entity `{}`", lc.entity));
            continue;
        };
        if !with_lifecycle.insert(&lc.entity) {
            report.error(Rule::LifecycleCount, None, Some(&lc.entity), format!("entity `{}` has several lifecycles", lc.entity));
        }
        for edge in &lc.edges {
            check_edge(&mut report, &edge.from, &edge.to, &edge.function, Some(&lc.entity));
            for op in &edge.ops {
                check_lifecycle_op(&mut report, &edge.function, entity, op);
            }
        }
    }
    for e in &sut.entities {
        if sut.lifecycles.len() == sut.entities.len() && !with_lifecycle.contains(&e.id) {
            report.error(Rule::LifecycleCount, None, Some(&e.id), format!("entity `{}` has no lifecycle", e.id));
        }
    }

    let ops = sut.lifecycle_ops();
    for e in &sut.entities {
        let has = |kind: OpKind| sut.functions.iter().any(|f| ArtificialSut::performs(&ops, &f.id, &e.id, kind));
        let mut missing = Vec::new();
        if !has(OpKind::C) {
            missing.push("C");
        }
        if !has(OpKind::D) {
            missing.push("D");
        }
        if !has(OpKind::R) {
            missing.push("read");
        }
        if !missing.is_empty() {
            report.warning(
                Rule::IncompleteColumn,
                None,
                Some(&e.id),
                format!("lifecycle of `{}` has no {}", e.id, missing.join(", ")),
            );
        }
    }

    let mut defect_ids = HashSet::new();
    for d in &sut.defects {
        if !defect_ids.insert(d.id.as_str()) {
            report.error(Rule::DuplicateDefect, Some(&d.cause_function), Some(&d.entity), format!("defect id `{}` used twice", d.id));
        }
        if !matches!(d.cause_op, OpKind::C | OpKind::U)
            || !ArtificialSut::performs(&ops, &d.cause_function, &d.entity, d.cause_op)
        {
            report.error(
                Rule::DefectCause,
                Some(&d.cause_function),
                Some(&d.entity),
                format!("defect `{}`: `{}` does not perform {} on `{}`", d.id, d.cause_function, d.cause_op, d.entity),
            );
        }
        if d.activators.is_empty() {
            report.error(Rule::DefectActivator, Some(&d.cause_function), Some(&d.entity), format!("defect `{}` has no activators", d.id));
        }
        for a in &d.activators {
            if !matches!(a.op, OpKind::C | OpKind::R | OpKind::U | OpKind::D)
                || !ArtificialSut::performs(&ops, &a.function, &d.entity, a.op)
            {
                report.error(
                    Rule::DefectActivator,
                    Some(&a.function),
                    Some(&d.entity),
                    format!("defect `{}`: activator `{}` does not perform {} on `{}`", d.id, a.function, a.op, d.entity),
                );
            }
        }
    }

    for i in &sut.influences {
        for e in [&i.influenced, &i.source] {
            if !entity_ids.contains(e) {
                report.error(Rule::UnknownEntity, Some(&i.function), Some(e), format!("influence references undeclared entity `{e}`"));
            }
        }
        if i.influenced == i.source {
            report.error(Rule::SelfInfluence, Some(&i.function), Some(&i.influenced), "influenced and source entity coincide");
        }
        let backed = [OpKind::C, OpKind::U, OpKind::D]
            .into_iter()
            .any(|k| ArtificialSut::performs(&ops, &i.function, &i.source, k));
        if !backed {
            report.error(
                Rule::InfluenceSource,
                Some(&i.function),
                Some(&i.source),
                format!("`{}` performs no C, U or D on `{}`", i.function, i.source),
            );
        }
        if !(0.0..=1.0).contains(&i.probability) {
            report.error(Rule::InfluenceProbability, Some(&i.function), Some(&i.influenced), format!("probability {}", i.probability));
        }
    }

    if !report.has_errors() {
        for f in unreachable_functions(sut) {
            report.warning(Rule::UnreachableFunction, Some(&f), None, format!("`{f}` labels no edge reachable from `{}`", sut.initial_state));
        }
    }

    report
}

fn check_lifecycle_op(report: &mut ValidationReport, f: &FunctionId, entity: &Entity, op: &OperationSpec) {
    let e = &entity.id;
    match op.kind {
        OpKind::C | OpKind::D => {
            if !op.attributes.is_empty() {
                report.error(Rule::UnexpectedAttributes, Some(f), Some(e), format!("{} carries no attribute set", op.kind));
            }
        }
        OpKind::R | OpKind::U => {
            if op.attributes.is_empty() {
                report.error(Rule::MissingAttributes, Some(f), Some(e), format!("{} needs a non-empty attribute set", op.kind));
            }
            for a in &op.attributes {
                if !entity.attributes.contains(a) {
                    report.error(Rule::UnknownAttribute, Some(f), Some(e), format!("attribute `{a}` is not declared on `{e}`"));
                }
            }
        }
        OpKind::B | OpKind::I => {
            report.error(Rule::LifecycleOperation, Some(f), Some(e), format!("{} cannot appear on a lifecycle edge", op.kind));
        }
    }
    if op.source.is_some() {
        report.error(Rule::UnexpectedSource, Some(f), Some(e), "lifecycle operations carry no source entity");
    }
}

fn all_edges(sut: &ArtificialSut) -> impl Iterator<Item = (&StateId, &FunctionId, &StateId)> {
    let wf = sut.workflows.iter().flat_map(|w| w.edges.iter().map(|e| (&e.from, &e.function, &e.to)));
    let lc = sut.lifecycles.iter().flat_map(|l| l.edges.iter().map(|e| (&e.from, &e.function, &e.to)));
    wf.chain(lc)
}

fn unreachable_functions(sut: &ArtificialSut) -> Vec<FunctionId> {
    let mut adjacency: BTreeMap<&StateId, Vec<(&FunctionId, &StateId)>> = BTreeMap::new();
    for (from, f, to) in all_edges(sut) {
        adjacency.entry(from).or_default().push((f, to));
    }
    let mut seen = HashSet::from([&sut.initial_state]);
    let mut reachable_labels = HashSet::new();
    let mut queue = VecDeque::from([&sut.initial_state]);
    while let Some(s) = queue.pop_front() {
        for &(f, t) in adjacency.get(s).into_iter().flatten() {
            reachable_labels.insert(f);
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    sut.functions
        .iter()
        .filter(|f| !reachable_labels.contains(&f.id))
        .map(|f| f.id.clone())
        .collect()
}

fn ensure_valid(sut: &ArtificialSut) -> Result<(), SutError> {
    let report = validate_sut(sut);
    if report.has_errors() {
        let msgs: Vec<String> = report.errors().map(ToString::to_string).collect();
        return Err(SutError::Invalid(msgs.join("; ")));
    }
    Ok(())
}

/// Union of all workflow and lifecycle edges. Lifecycle operations are
/// attached as function effects.
pub fn build_transition_system(sut: &ArtificialSut) -> Result<TransitionSystem, SutError> {
    ensure_valid(sut)?;
    let edges = all_edges(sut).map(|(s, f, t)| (s.clone(), f.clone(), t.clone()));
    let ts = TransitionSystem::new(
        sut.states.clone(),
        sut.functions.iter().map(|f| f.id.clone()).collect(),
        &sut.initial_state,
        edges,
    )?;
    Ok(ts.with_effects(sut.lifecycle_ops()))
}

/// The CRUD matrix a designer would write down from the SUT description.
///
/// Each influence fact is kept iff its own uniform draw falls below
/// `capture_ratio`, so the captured set only grows with the ratio for a
/// fixed seed. The widest read of every entity becomes its B.
pub fn derive_crud_matrix(sut: &ArtificialSut, capture_ratio: f64, seed: u64) -> Result<CrudMatrix, SutError> {
    if !(0.0..=1.0).contains(&capture_ratio) {
        return Err(SutError::CaptureRatio(capture_ratio));
    }
    ensure_valid(sut)?;
    let mut cells: BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>> = sut.lifecycle_ops();
    for (idx, fact) in sut.influences.iter().enumerate() {
        let key = format!("{idx}:{}:{}:{}", fact.influenced, fact.function, fact.source);
        let draw: f64 = seed::keyed_rng(seed, "capture", &key).gen();
        if draw < capture_ratio {
            let op = OperationSpec::influenced(fact.source.clone());
            let cell = cells.entry((fact.function.clone(), fact.influenced.clone())).or_default();
            if !cell.contains(&op) {
                cell.push(op);
            }
        }
    }
    let cell_list = cells
        .into_iter()
        .map(|((function, entity), ops)| Cell { function, entity, ops })
        .collect();
    let matrix = CrudMatrix::new(sut.entities.clone(), sut.functions.clone(), cell_list);
    Ok(matrix.with_best_reads_assigned())
}
