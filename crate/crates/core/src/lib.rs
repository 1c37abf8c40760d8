//! Data cycle test generation over extended CRUD matrices.
//!
//! - [`matrix`]: the extended CRUD matrix (attribute-annotated R/U, best
//!   read B, influence I) and its validator.
//! - [`sut`]: artificial systems under test and the transition system and
//!   matrix derived from them.
//! - [`generator`]: test cases and suites under the coverage criteria.
//! - [`consistency`]: executability checks and shortest-filler repair.
//! - [`simulator`]: inconsistent-step and defect-leakage metrics.
//! - [`sutgen`]: seeded random SUT instances.
//! - [`document`] and [`experiment`]: file formats and the evaluation
//!   pipeline behind the `datacycle` binary.

pub mod consistency;
pub mod document;
pub mod experiment;
pub mod fixtures;
pub mod generator;
pub mod ids;
pub mod matrix;
pub mod seed;
pub mod simulator;
pub mod sut;
pub mod sutgen;
pub mod transition;
pub mod validation;

pub use consistency::{check_case, efficiency_flags, repair_case, ConsistencyFinding, FindingKind, RepairResult};
pub use generator::{
    audit_completeness, extend_influenced, generate_suite, generate_test_case, select_read, CoverageCriterion,
    Origin, TestCase, TestStep, TestSuite,
};
pub use ids::{AttributeId, EntityId, FunctionId, StateId};
pub use matrix::{operations_on, suggest_best_read, validate_matrix, CrudMatrix, Entity, Function, OpKind, OperationSpec};
pub use simulator::{compare, detect_defects, simulate, Comparison, SimulationOptions, SimulationReport};
pub use sut::{build_transition_system, derive_crud_matrix, validate_sut, ArtificialSut};
pub use sutgen::{generate_sut, inject_defects, SutGenConfig};
pub use transition::TransitionSystem;
pub use validation::{Rule, Severity, ValidationReport, Violation};
