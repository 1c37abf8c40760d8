//! Executability of test cases against a transition system.
//!
//! A case is replayed as a walk over state-sets, starting from the initial
//! state. A step is inconsistent when the next function is not enabled in
//! any tracked state. Repair inserts the shortest function sequence that
//! reaches a state-set enabling the next function; when none exists the gap
//! is unrepairable and the walk continues from the set of all states.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{Origin, TestCase, TestStep};
use crate::ids::FunctionId;
use crate::matrix::{CrudMatrix, OpKind};
use crate::transition::{StateSet, TransitionSystem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsistencyError {
    #[error("function `{0}` is not part of the transition system")]
    UnknownFunction(FunctionId),
    #[error("function `{0}` is not part of the matrix")]
    UnknownMatrixFunction(FunctionId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingKind {
    Inconsistent,
    Unrepairable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyFinding {
    pub step_index: usize,
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    /// Index of the first inserted step in the repaired case.
    pub position: usize,
    pub functions: Vec<FunctionId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairResult {
    pub repaired: TestCase,
    pub insertions: Vec<Insertion>,
    /// Indices (in the repaired case) of steps whose successor stays unreachable.
    pub unrepairable: Vec<usize>,
}

fn resolve(case: &TestCase, ts: &TransitionSystem) -> Result<Vec<usize>, ConsistencyError> {
    case.steps
        .iter()
        .map(|s| ts.function_index(&s.function).ok_or_else(|| ConsistencyError::UnknownFunction(s.function.clone())))
        .collect()
}

fn advance(ts: &TransitionSystem, tracked: &[usize], function: usize) -> StateSet {
    let next = ts.step(tracked, function);
    if next.is_empty() {
        ts.all_states()
    } else {
        next
    }
}

/// Index blamed for a gap before step `i`: the preceding step, or the first
/// step when it is not enabled from the initial state.
fn blamed(i: usize) -> usize {
    i.saturating_sub(1)
}

pub fn check_case(case: &TestCase, ts: &TransitionSystem) -> Result<Vec<ConsistencyFinding>, ConsistencyError> {
    let functions = resolve(case, ts)?;
    let mut tracked = vec![ts.initial()];
    let mut findings: Vec<ConsistencyFinding> = Vec::new();
    let mut flagged = BTreeSet::new();
    for (i, &f) in functions.iter().enumerate() {
        if !ts.enables(&tracked, f) {
            let at = blamed(i);
            if flagged.insert(at) {
                let detail = if i == 0 {
                    format!("`{}` is not enabled in the initial state", case.steps[0].function)
                } else {
                    format!("`{}` cannot follow `{}`", case.steps[i].function, case.steps[i - 1].function)
                };
                findings.push(ConsistencyFinding { step_index: at, kind: FindingKind::Inconsistent, detail });
            }
            tracked = ts.all_states();
        }
        tracked = advance(ts, &tracked, f);
    }
    Ok(findings)
}

/// Shortest function sequence leading from `start` to a state-set enabling
/// `target`, by breadth-first search over state-sets. Functions are tried
/// in declaration order, so among equally short fillers the
/// lexicographically smallest is returned.
pub fn shortest_filler(ts: &TransitionSystem, start: &[usize], target: usize) -> Option<Vec<usize>> {
    if ts.enables(start, target) {
        return Some(Vec::new());
    }
    let start: StateSet = start.to_vec();
    let mut parent: HashMap<StateSet, (StateSet, usize)> = HashMap::new();
    let mut queue = VecDeque::from([start.clone()]);
    let mut seen = std::collections::HashSet::from([start.clone()]);
    while let Some(set) = queue.pop_front() {
        for g in 0..ts.functions().len() {
            if !ts.enables(&set, g) {
                continue;
            }
            let next = ts.step(&set, g);
            if !seen.insert(next.clone()) {
                continue;
            }
            parent.insert(next.clone(), (set.clone(), g));
            if ts.enables(&next, target) {
                let mut path = Vec::new();
                let mut node = next;
                while let Some((prev, g)) = parent.get(&node) {
                    path.push(*g);
                    node = prev.clone();
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(next);
        }
    }
    None
}

fn filler_step(ts: &TransitionSystem, function: &FunctionId, case: &TestCase) -> TestStep {
    // Prefer the most telling effect on the case entity: C, U, D, then reads.
    let effects = ts.effects(function, &case.entity);
    let op = [OpKind::C, OpKind::U, OpKind::D, OpKind::R]
        .into_iter()
        .find_map(|k| effects.iter().find(|op| op.kind == k))
        .cloned();
    TestStep { function: function.clone(), op, entity: case.entity.clone(), origin: Origin::RepairFiller }
}

pub fn repair_case(case: &TestCase, ts: &TransitionSystem) -> Result<RepairResult, ConsistencyError> {
    let functions = resolve(case, ts)?;
    let mut tracked = vec![ts.initial()];
    let mut steps: Vec<TestStep> = Vec::with_capacity(case.steps.len());
    let mut insertions = Vec::new();
    let mut unrepairable: Vec<usize> = Vec::new();

    for (step, &f) in case.steps.iter().zip(&functions) {
        if !ts.enables(&tracked, f) {
            match shortest_filler(ts, &tracked, f) {
                Some(path) => {
                    let position = steps.len();
                    let mut ids = Vec::with_capacity(path.len());
                    for g in path {
                        let id = ts.functions()[g].clone();
                        steps.push(filler_step(ts, &id, case));
                        tracked = ts.step(&tracked, g);
                        ids.push(id);
                    }
                    insertions.push(Insertion { position, functions: ids });
                }
                None => {
                    let at = blamed(steps.len());
                    if unrepairable.last() != Some(&at) {
                        unrepairable.push(at);
                    }
                    tracked = ts.all_states();
                }
            }
        }
        steps.push(step.clone());
        tracked = advance(ts, &tracked, f);
    }

    Ok(RepairResult { repaired: TestCase { steps, ..case.clone() }, insertions, unrepairable })
}

/// `(update index, read index)` pairs where a read assigned after an update
/// shares no attribute with it.
pub fn efficiency_flags(case: &TestCase, matrix: &CrudMatrix) -> Result<Vec<(usize, usize)>, ConsistencyError> {
    if let Some(s) = case.steps.iter().find(|s| matrix.function(s.function.as_str()).is_none()) {
        return Err(ConsistencyError::UnknownMatrixFunction(s.function.clone()));
    }
    let mut flags = Vec::new();
    let mut current_update: Option<usize> = None;
    for (i, step) in case.steps.iter().enumerate() {
        if step.is_change_on(&case.entity) {
            current_update = (step.kind() == Some(OpKind::U) && !step.attributes().is_empty()).then_some(i);
        } else if step.origin == Origin::ReadAssigned && step.is_read_on(&case.entity) {
            if let Some(u) = current_update {
                let updated = case.steps[u].attributes();
                if step.op.as_ref().is_some_and(|op| op.overlap(updated) == 0) {
                    flags.push((u, i));
                }
            }
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generator::{generate_test_case, CoverageCriterion};
    use crate::matrix::{Function, OperationSpec};
    use crate::sut::{build_transition_system, WorkflowEdge, WorkflowGraph};

    fn bare_case(functions: &[&str]) -> TestCase {
        TestCase {
            entity: "Order".into(),
            criterion: CoverageCriterion::OB,
            seed: 0,
            steps: functions
                .iter()
                .map(|f| TestStep { function: (*f).into(), op: None, entity: "Order".into(), origin: Origin::Skeleton })
                .collect(),
        }
    }

    fn s1_with_return_edge() -> TransitionSystem {
        let mut sut = fixtures::s1();
        sut.functions.push(Function::new("f10"));
        sut.workflows.push(WorkflowGraph {
            id: "back".into(),
            edges: vec![WorkflowEdge { from: "s2".into(), to: "s1".into(), function: "f10".into() }],
        });
        build_transition_system(&sut).unwrap()
    }

    #[test]
    fn ob_case_on_s1_is_consistent() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        let case = generate_test_case(&fixtures::m1(), &"Order".into(), CoverageCriterion::OB, 0).unwrap();
        assert!(check_case(&case, &ts).unwrap().is_empty());
    }

    #[test]
    fn read_after_delete_is_inconsistent() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        let findings = check_case(&bare_case(&["f1", "f6", "f5"]), &ts).unwrap();
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].step_index, 1);
        assert_eq!(findings[0].kind, FindingKind::Inconsistent);
    }

    #[test]
    fn empty_case_has_no_findings() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        assert!(check_case(&bare_case(&[]), &ts).unwrap().is_empty());
    }

    #[test]
    fn unknown_function_is_an_error() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        assert_eq!(
            check_case(&bare_case(&["f1", "zz"]), &ts).unwrap_err(),
            ConsistencyError::UnknownFunction("zz".into())
        );
    }

    #[test]
    fn findings_do_not_cascade() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        // after the gap the walk restarts from all states, so f3 f5 are fine
        let findings = check_case(&bare_case(&["f1", "f6", "f5", "f3", "f5"]), &ts).unwrap();
        assert_eq!(findings.iter().map(|f| f.step_index).collect::<Vec<_>>(), [1]);
    }

    #[test]
    fn repair_inserts_return_edge() {
        let ts = s1_with_return_edge();
        let result = repair_case(&bare_case(&["f1", "f6", "f5"]), &ts).unwrap();
        assert_eq!(result.insertions, vec![Insertion { position: 2, functions: vec!["f10".into()] }]);
        assert!(result.unrepairable.is_empty());
        assert_eq!(result.repaired.steps[2].origin, Origin::RepairFiller);
        assert_eq!(result.repaired.steps[2].op, None);
        assert!(check_case(&result.repaired, &ts).unwrap().is_empty());
    }

    #[test]
    fn repair_reports_unreachable_gap() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        let result = repair_case(&bare_case(&["f1", "f6", "f5"]), &ts).unwrap();
        assert!(result.insertions.is_empty());
        assert_eq!(result.unrepairable, vec![1]);
        let findings = check_case(&result.repaired, &ts).unwrap();
        assert_eq!(findings.iter().map(|f| f.step_index).collect::<Vec<_>>(), [1]);
    }

    #[test]
    fn consistent_case_is_unchanged_by_repair() {
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        let case = generate_test_case(&fixtures::m1(), &"Order".into(), CoverageCriterion::NR, 0).unwrap();
        let result = repair_case(&case, &ts).unwrap();
        assert_eq!(result.repaired, case);
        assert!(result.insertions.is_empty());
    }

    #[test]
    fn filler_records_effect_on_case_entity() {
        // Invoice case starting at s0: f8 needs s1, reachable through f1 (C on Order).
        let ts = build_transition_system(&fixtures::s1()).unwrap();
        let mut case = bare_case(&["f8"]);
        case.entity = "Order".into();
        let result = repair_case(&case, &ts).unwrap();
        assert_eq!(result.insertions[0].functions, vec![FunctionId::from("f1")]);
        assert_eq!(result.repaired.steps[0].op, Some(OperationSpec::create()));
    }

    fn segment(update: OperationSpec, read: OperationSpec) -> TestCase {
        TestCase {
            entity: "Order".into(),
            criterion: CoverageCriterion::OR,
            seed: 0,
            steps: vec![
                TestStep::new("f4".into(), update, "Order".into(), Origin::Skeleton),
                TestStep::new("f5".into(), read, "Order".into(), Origin::ReadAssigned),
            ],
        }
    }

    #[test]
    fn efficiency_examples() {
        let m = fixtures::m1();
        let flagged = segment(OperationSpec::update(["total"]), OperationSpec::read(["status"]));
        assert_eq!(efficiency_flags(&flagged, &m).unwrap(), vec![(0, 1)]);
        let fine = segment(OperationSpec::update(["status"]), OperationSpec::read(["status"]));
        assert!(efficiency_flags(&fine, &m).unwrap().is_empty());
        let ob = generate_test_case(&m, &"Order".into(), CoverageCriterion::OB, 0).unwrap();
        assert!(efficiency_flags(&ob, &m).unwrap().is_empty());
        let mut unknown = fine.clone();
        unknown.steps[0].function = "zz".into();
        assert!(efficiency_flags(&unknown, &m).is_err());
    }
}
