//! Validation reports shared by the matrix and SUT validators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{EntityId, FunctionId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Identifier of the rule a violation breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EmptyId,
    DuplicateEntity,
    DuplicateFunction,
    DuplicateState,
    NoAttributes,
    DuplicateAttribute,
    UnknownSubEntity,
    SubEntityCycle,
    UnknownFunction,
    UnknownEntity,
    UnknownState,
    UnknownAttribute,
    MissingAttributes,
    UnexpectedAttributes,
    MissingSource,
    UnexpectedSource,
    SelfInfluence,
    DuplicateOperation,
    PlainMatrixOperation,
    MultipleBestReads,
    UnbackedInfluence,
    IncompleteColumn,
    LifecycleCount,
    LifecycleOperation,
    UnknownInitialState,
    DefectCause,
    DefectActivator,
    DuplicateDefect,
    InfluenceSource,
    InfluenceProbability,
    UnreachableFunction,
}

impl Rule {
    pub fn description(self) -> &'static str {
        match self {
            Rule::EmptyId => "empty identifier",
            Rule::DuplicateEntity => "duplicate entity",
            Rule::DuplicateFunction => "duplicate function",
            Rule::DuplicateState => "duplicate state",
            Rule::NoAttributes => "entity without attributes",
            Rule::DuplicateAttribute => "duplicate attribute",
            Rule::UnknownSubEntity => "unknown sub-entity",
            Rule::SubEntityCycle => "sub-entity cycle",
            Rule::UnknownFunction => "unknown function",
            Rule::UnknownEntity => "unknown entity",
            Rule::UnknownState => "unknown state",
            Rule::UnknownAttribute => "unknown attribute",
            Rule::MissingAttributes => "missing attribute set",
            Rule::UnexpectedAttributes => "unexpected attribute set",
            Rule::MissingSource => "I without source entity",
            Rule::UnexpectedSource => "source entity on non-I operation",
            Rule::SelfInfluence => "I referencing its own column",
            Rule::DuplicateOperation => "duplicate operation in cell",
            Rule::PlainMatrixOperation => "extended operation in plain matrix",
            Rule::MultipleBestReads => "multiple best reads",
            Rule::UnbackedInfluence => "I without backing C/U/D",
            Rule::IncompleteColumn => "entity lacks C, D or read",
            Rule::LifecycleCount => "|L| != |E|",
            Rule::LifecycleOperation => "invalid lifecycle operation",
            Rule::UnknownInitialState => "unknown initial state",
            Rule::DefectCause => "defect cause not performed",
            Rule::DefectActivator => "defect activator not performed",
            Rule::DuplicateDefect => "duplicate defect id",
            Rule::InfluenceSource => "influence without backing C/U/D",
            Rule::InfluenceProbability => "influence probability outside [0,1]",
            Rule::UnreachableFunction => "function unreachable from initial state",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.description())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{severity}: {}", self.rule)?;
        match (&self.function, &self.entity) {
            (Some(func), Some(ent)) => write!(f, " at ({func}, {ent})")?,
            (Some(func), None) => write!(f, " at {func}")?,
            (None, Some(ent)) => write!(f, " at {ent}")?,
            (None, None) => {}
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn has_rule(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub(crate) fn push(
        &mut self,
        rule: Rule,
        severity: Severity,
        function: Option<&FunctionId>,
        entity: Option<&EntityId>,
        message: impl Into<String>,
    ) {
        self.violations.push(Violation {
            rule,
            severity,
            function: function.cloned(),
            entity: entity.cloned(),
            message: message.into(),
        });
    }

    pub(crate) fn error(
        &mut self,
        rule: Rule,
        function: Option<&FunctionId>,
        entity: Option<&EntityId>,
        message: impl Into<String>,
    ) {
        self.push(rule, Severity::Error, function, entity, message);
    }

    pub(crate) fn warning(
        &mut self,
        rule: Rule,
        function: Option<&FunctionId>,
        entity: Option<&EntityId>,
        message: impl Into<String>,
    ) {
        self.push(rule, Severity::Warning, function, entity, message);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}
