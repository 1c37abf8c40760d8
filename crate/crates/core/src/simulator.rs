//! Replays suites against an artificial SUT and measures the
//! inconsistent-step ratio and defect leakage.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{check_case, ConsistencyError};
use crate::generator::{CoverageCriterion, TestStep, TestSuite};
use crate::ids::EntityId;
use crate::sut::{build_transition_system, ArtificialSut, Defect, SutError};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("suite does not match the SUT: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Sut(#[from] SutError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error("reports were produced on different SUTs")]
    SutMismatch,
    #[error("baseline has no steps")]
    EmptyBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Ignore every step after the first inconsistent step of a case when
    /// deciding detection.
    pub strict_detection: bool,
    /// Require the operation kind of cause and activator to match, not only
    /// the function.
    pub match_op_kind: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { strict_detection: false, match_op_kind: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub entity: EntityId,
    pub steps: usize,
    pub inconsistent: Vec<usize>,
    pub influence_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub sut_fingerprint: String,
    pub criterion: CoverageCriterion,
    pub seed: u64,
    pub total_steps: usize,
    pub inconsistent_steps: usize,
    pub inconsistent_ratio: f64,
    pub detected_defects: Vec<String>,
    pub leaked_defects: Vec<String>,
    pub leakage_ratio: f64,
    pub per_case: Vec<CaseReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: CoverageCriterion,
    pub candidate: CoverageCriterion,
    pub baseline_steps: usize,
    pub candidate_steps: usize,
    /// `(candidate − baseline) / baseline` in steps.
    pub step_increase: f64,
    pub inconsistent_delta: f64,
    pub leakage_delta: f64,
}

fn ratio(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

fn check_membership(suite: &TestSuite, sut: &ArtificialSut) -> Result<(), SimulationError> {
    let known_entity = |e: &EntityId| sut.entities.iter().any(|x| &x.id == e);
    for case in &suite.cases {
        if !known_entity(&case.entity) {
            return Err(SimulationError::Mismatch(format!("entity `{}` is not in the SUT", case.entity)));
        }
        for step in &case.steps {
            if !known_entity(&step.entity) {
                return Err(SimulationError::Mismatch(format!("entity `{}` is not in the SUT", step.entity)));
            }
            if !sut.functions.iter().any(|f| f.id == step.function) {
                return Err(SimulationError::Mismatch(format!("function `{}` is not in the SUT", step.function)));
            }
        }
    }
    Ok(())
}

fn matches(step: &TestStep, function: &crate::ids::FunctionId, entity: &EntityId, op: crate::matrix::OpKind, match_op_kind: bool) -> bool {
    if &step.function != function {
        return false;
    }
    !match_op_kind || (&step.entity == entity && step.kind().is_some_and(|k| k.crud() == op.crud()))
}

/// The cause is present and some activator follows it later in the same case.
fn detects(steps: &[TestStep], defect: &Defect, match_op_kind: bool) -> bool {
    let Some(cause) = steps
        .iter()
        .position(|s| matches(s, &defect.cause_function, &defect.entity, defect.cause_op, match_op_kind))
    else {
        return false;
    };
    steps[cause + 1..].iter().any(|s| {
        defect
            .activators
            .iter()
            .any(|a| matches(s, &a.function, &defect.entity, a.op, match_op_kind))
    })
}

fn detected_ids<'a, I>(cases: I, sut: &ArtificialSut, match_op_kind: bool) -> Vec<String>
where
    I: IntoIterator<Item = &'a [TestStep]> + Clone,
{
    sut.defects
        .iter()
        .filter(|d| cases.clone().into_iter().any(|steps| detects(steps, d, match_op_kind)))
        .map(|d| d.id.clone())
        .collect()
}

/// Ids of defects whose cause is followed by an activator in some case.
pub fn detect_defects(suite: &TestSuite, sut: &ArtificialSut) -> Result<Vec<String>, SimulationError> {
    detect_defects_with(suite, sut, SimulationOptions::default())
}

pub fn detect_defects_with(
    suite: &TestSuite,
    sut: &ArtificialSut,
    options: SimulationOptions,
) -> Result<Vec<String>, SimulationError> {
    check_membership(suite, sut)?;
    if !options.strict_detection {
        let cases = suite.cases.iter().map(|c| c.steps.as_slice());
        return Ok(detected_ids(cases, sut, options.match_op_kind));
    }
    let ts = build_transition_system(sut)?;
    let mut prefixes: Vec<&[TestStep]> = Vec::with_capacity(suite.cases.len());
    for case in &suite.cases {
        let findings = check_case(case, &ts)?;
        let end = findings.iter().map(|f| f.step_index + 1).min().unwrap_or(case.steps.len());
        prefixes.push(&case.steps[..end]);
    }
    Ok(detected_ids(prefixes.iter().copied(), sut, options.match_op_kind))
}

/// Runs `suite` on `sut`.
///
/// Inconsistent steps are the adjacency findings of the transition system
/// plus influence events: when a step performs C/U/D through a function
/// with an influence fact touching the case entity, a Bernoulli draw with
/// the fact's probability marks the following step inconsistent. The draw
/// is skipped when a read on the influenced entity follows before the
/// case's next C/U/D.
pub fn simulate(
    suite: &TestSuite,
    sut: &ArtificialSut,
    seed: u64,
    options: SimulationOptions,
) -> Result<SimulationReport, SimulationError> {
    check_membership(suite, sut)?;
    let ts = build_transition_system(sut)?;
    let mut rng = seed::keyed_rng(seed, "simulate", "");

    let mut per_case = Vec::with_capacity(suite.cases.len());
    let mut total_steps = 0;
    let mut inconsistent_steps = 0;
    for case in &suite.cases {
        let mut marked: BTreeSet<usize> = check_case(case, &ts)?.into_iter().map(|f| f.step_index).collect();
        let mut influence_events = 0;
        let n = case.steps.len();
        for (i, step) in case.steps.iter().enumerate() {
            if !step.kind().is_some_and(crate::matrix::OpKind::is_change) {
                continue;
            }
            for fact in &sut.influences {
                if fact.function != step.function || (fact.influenced != case.entity && fact.source != case.entity) {
                    continue;
                }
                let verified = case.steps[i + 1..]
                    .iter()
                    .take_while(|s| !s.is_change_on(&case.entity))
                    .any(|s| s.is_read_on(&fact.influenced));
                if verified {
                    continue;
                }
                if rng.gen::<f64>() < fact.probability {
                    influence_events += 1;
                    marked.insert((i + 1).min(n - 1));
                }
            }
        }
        total_steps += n;
        inconsistent_steps += marked.len();
        per_case.push(CaseReport {
            entity: case.entity.clone(),
            steps: n,
            inconsistent: marked.into_iter().collect(),
            influence_events,
        });
    }

    let detected = detect_defects_with(suite, sut, options)?;
    let leaked: Vec<String> = sut.defects.iter().map(|d| d.id.clone()).filter(|id| !detected.contains(id)).collect();

    Ok(SimulationReport {
        sut_fingerprint: sut.fingerprint(),
        criterion: suite.criterion,
        seed,
        total_steps,
        inconsistent_steps,
        inconsistent_ratio: ratio(inconsistent_steps, total_steps),
        leakage_ratio: ratio(leaked.len(), sut.defects.len()),
        detected_defects: detected,
        leaked_defects: leaked,
        per_case,
    })
}

pub fn compare(baseline: &SimulationReport, candidate: &SimulationReport) -> Result<Comparison, SimulationError> {
    if baseline.sut_fingerprint != candidate.sut_fingerprint {
        return Err(SimulationError::SutMismatch);
    }
    if baseline.total_steps == 0 {
        return Err(SimulationError::EmptyBaseline);
    }
    Ok(Comparison {
        baseline: baseline.criterion,
        candidate: candidate.criterion,
        baseline_steps: baseline.total_steps,
        candidate_steps: candidate.total_steps,
        step_increase: (candidate.total_steps as f64 - baseline.total_steps as f64) / baseline.total_steps as f64,
        inconsistent_delta: candidate.inconsistent_ratio - baseline.inconsistent_ratio,
        leakage_delta: candidate.leakage_ratio - baseline.leakage_ratio,
    })
}
