//! JSON model documents, CSV matrix import and suite rendering.
//!
//! A document is a JSON object with `schema_version`, `kind` and the
//! payload's own fields at the top level:
//!
//! ```json
//! { "schema_version": 1, "kind": "matrix", "entities": [...], "functions": [...], "cells": [...] }
//! ```
//!
//! Rendering sorts object keys, so equal values always produce equal bytes.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::experiment::ExperimentConfig;
use crate::generator::TestSuite;
use crate::ids::EntityId;
use crate::matrix::{validate_matrix, Cell, CrudMatrix, Entity, Function, OpKind, OperationSpec};
use crate::sut::{validate_sut, ArtificialSut};
use crate::sutgen::SutGenConfig;
use crate::validation::ValidationReport;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u64),
    #[error("expected a {expected} document, found {found}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error("document does not validate:\n{0}")]
    Invalid(ValidationReport),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> DocumentError {
    DocumentError::Schema { path: path.into(), message: message.into() }
}

/// Configuration payloads, told apart by their `target` field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "lowercase")]
pub enum ConfigPayload {
    Sutgen(SutGenConfig),
    Experiment(ExperimentConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelDocument {
    Matrix(CrudMatrix),
    Sut(ArtificialSut),
    Suite(TestSuite),
    Config(ConfigPayload),
}

impl ModelDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDocument::Matrix(_) => "matrix",
            ModelDocument::Sut(_) => "sut",
            ModelDocument::Suite(_) => "suite",
            ModelDocument::Config(_) => "config",
        }
    }

    pub fn into_matrix(self) -> Result<CrudMatrix, DocumentError> {
        match self {
            ModelDocument::Matrix(m) => Ok(m),
            other => Err(DocumentError::WrongKind { expected: "matrix", found: other.kind() }),
        }
    }

    pub fn into_sut(self) -> Result<ArtificialSut, DocumentError> {
        match self {
            ModelDocument::Sut(s) => Ok(s),
            other => Err(DocumentError::WrongKind { expected: "sut", found: other.kind() }),
        }
    }

    pub fn into_suite(self) -> Result<TestSuite, DocumentError> {
        match self {
            ModelDocument::Suite(s) => Ok(s),
            other => Err(DocumentError::WrongKind { expected: "suite", found: other.kind() }),
        }
    }

    pub fn into_config(self) -> Result<ConfigPayload, DocumentError> {
        match self {
            ModelDocument::Config(c) => Ok(c),
            other => Err(DocumentError::WrongKind { expected: "config", found: other.kind() }),
        }
    }
}

fn payload<T: DeserializeOwned>(value: Value) -> Result<T, DocumentError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })
}

/// Parses a document without running the model validators.
pub fn parse_unchecked(text: &str) -> Result<ModelDocument, DocumentError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(mut map) = value else {
        return Err(schema(".", "document must be a JSON object"));
    };
    let version = map
        .remove("schema_version")
        .ok_or_else(|| schema("schema_version", "missing field"))?;
    let version = version.as_u64().ok_or_else(|| schema("schema_version", "expected an unsigned integer"))?;
    if version != SCHEMA_VERSION {
        return Err(DocumentError::UnsupportedVersion(version));
    }
    let kind = map.remove("kind").ok_or_else(|| schema("kind", "missing field"))?;
    let rest = Value::Object(map);
    match kind.as_str() {
        Some("matrix") => Ok(ModelDocument::Matrix(payload(rest)?)),
        Some("sut") => Ok(ModelDocument::Sut(payload(rest)?)),
        Some("suite") => Ok(ModelDocument::Suite(payload(rest)?)),
        Some("config") => Ok(ModelDocument::Config(payload(rest)?)),
        _ => Err(schema("kind", format!("expected one of matrix, sut, suite, config; found {kind}"))),
    }
}

/// Parses and validates a document. Validation warnings are accepted.
pub fn parse_model_document(text: &str) -> Result<ModelDocument, DocumentError> {
    let doc = parse_unchecked(text)?;
    let report = match &doc {
        ModelDocument::Matrix(m) => validate_matrix(m),
        ModelDocument::Sut(s) => validate_sut(s),
        ModelDocument::Config(ConfigPayload::Sutgen(c)) => {
            c.check().map_err(|e| schema("", e.to_string()))?;
            ValidationReport::default()
        }
        ModelDocument::Config(ConfigPayload::Experiment(c)) => {
            c.check().map_err(|e| schema("", e.to_string()))?;
            ValidationReport::default()
        }
        ModelDocument::Suite(_) => ValidationReport::default(),
    };
    if report.has_errors() {
        return Err(DocumentError::Invalid(report));
    }
    Ok(doc)
}

fn canonical<T: Serialize>(kind: &str, value: &T) -> String {
    let mut map = match serde_json::to_value(value).expect("model values serialize") {
        Value::Object(map) => map,
        other => {
            let mut map = Map::new();
            map.insert("value".into(), other);
            map
        }
    };
    map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    map.insert("kind".into(), Value::from(kind));
    let mut out = serde_json::to_string_pretty(&Value::Object(map)).expect("JSON values serialize");
    out.push('\n');
    out
}

pub fn render_document(doc: &ModelDocument) -> String {
    match doc {
        ModelDocument::Matrix(m) => canonical("matrix", m),
        ModelDocument::Sut(s) => canonical("sut", s),
        ModelDocument::Suite(s) => canonical("suite", s),
        ModelDocument::Config(c) => canonical("config", c),
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn render_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("reports serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("JSON values serialize");
    out.push('\n');
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteFormat {
    Json,
    Text,
}

pub fn render_suite(suite: &TestSuite, format: SuiteFormat) -> String {
    match format {
        SuiteFormat::Json => canonical("suite", suite),
        SuiteFormat::Text => render_suite_text(suite),
    }
}

fn render_suite_text(suite: &TestSuite) -> String {
    let mut out = String::new();
    for (i, case) in suite.cases.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {} {} ({} steps)", case.entity, case.criterion.name(), case.steps.len());
        for (n, step) in case.steps.iter().enumerate() {
            let kind = step.kind().map_or_else(|| "-".to_string(), |k| k.letter().to_string());
            let _ = write!(out, "{}. {} {kind}", n + 1, step.function);
            if let Some(op) = &step.op {
                if !op.attributes.is_empty() {
                    let attrs: Vec<&str> = op.attributes.iter().map(|a| a.as_str()).collect();
                    let _ = write!(out, " {{{}}}", attrs.join(","));
                }
                if let Some(source) = &op.source {
                    let _ = write!(out, " ({source})");
                }
            }
            let origin = serde_json::to_value(step.origin).expect("origin serializes");
            let _ = writeln!(out, " {} [{}]", step.entity, origin.as_str().unwrap_or_default());
        }
    }
    for s in &suite.skipped {
        let _ = writeln!(out, "# skipped {}: {}", s.entity, s.reason);
    }
    out
}

/// Reads a plain CRUD grid: first row entity ids, first column function
/// ids, cells a subset of the letters C, R, U, D.
pub fn import_csv(text: &str) -> Result<CrudMatrix, DocumentError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(DocumentError::Csv { line: 1, message: "empty input".into() }),
    };
    let entity_ids: Vec<EntityId> = header.iter().skip(1).map(EntityId::from).collect();
    let entities: Vec<Entity> = entity_ids.iter().map(|e| Entity::new(e.clone(), Vec::<String>::new())).collect();

    let mut functions = Vec::new();
    let mut cells = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let Some(fid) = row.get(0) else { continue };
        if fid.is_empty() && row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() > entity_ids.len() + 1 {
            return Err(DocumentError::Csv { line, message: format!("{} cells for {} entities", row.len() - 1, entity_ids.len()) });
        }
        functions.push(Function::new(fid));
        for (entity, text) in entity_ids.iter().zip(row.iter().skip(1)) {
            let mut ops = Vec::new();
            for c in text.chars().filter(|c| !c.is_whitespace()) {
                match OpKind::from_letter(c) {
                    Some(kind @ (OpKind::C | OpKind::R | OpKind::U | OpKind::D)) => ops.push(OperationSpec::bare(kind)),
                    _ => {
                        return Err(DocumentError::Csv {
                            line,
                            message: format!("`{c}` in cell ({fid}, {entity}) is not one of C, R, U, D"),
                        })
                    }
                }
            }
            if !ops.is_empty() {
                cells.push(Cell { function: fid.into(), entity: entity.clone(), ops });
            }
        }
    }
    let matrix = CrudMatrix::new_plain(entities, functions, cells);
    let report = validate_matrix(&matrix);
    if report.has_errors() {
        return Err(DocumentError::Invalid(report));
    }
    Ok(matrix)
}

fn csv_error(e: csv::Error) -> DocumentError {
    let line = e.position().map_or(0, |p| p.line());
    DocumentError::Csv { line, message: e.to_string() }
}
