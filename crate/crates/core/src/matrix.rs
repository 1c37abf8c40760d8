//! Extended CRUD matrix: functions × entities, each cell holding the
//! operations the function performs on the entity.
//!
//! Besides the classic C/R/U/D letters a cell may carry attribute sets on
//! reads and updates, a best read `B` (at most one per entity), and
//! influence markers `I(source)` recording that the row function changes
//! the column entity as a side effect of a C/U/D on `source`.
//!
//! A *plain* matrix is the attribute-erased form: no attribute sets, no B,
//! no I. It is what the classic data cycle baselines work from.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AttributeId, EntityId, FunctionId};
use crate::seed;
use crate::validation::{Rule, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("unknown function `{0}`")]
    UnknownFunction(FunctionId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    C,
    R,
    U,
    D,
    B,
    I,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [OpKind::C, OpKind::R, OpKind::U, OpKind::D, OpKind::B, OpKind::I];

    pub fn letter(self) -> char {
        match self {
            OpKind::C => 'C',
            OpKind::R => 'R',
            OpKind::U => 'U',
            OpKind::D => 'D',
            OpKind::B => 'B',
            OpKind::I => 'I',
        }
    }

    pub fn from_letter(c: char) -> Option<OpKind> {
        match c.to_ascii_uppercase() {
            'C' => Some(OpKind::C),
            'R' => Some(OpKind::R),
            'U' => Some(OpKind::U),
            'D' => Some(OpKind::D),
            'B' => Some(OpKind::B),
            'I' => Some(OpKind::I),
            _ => None,
        }
    }

    /// R or B.
    pub fn is_read(self) -> bool {
        matches!(self, OpKind::R | OpKind::B)
    }

    /// C, U or D.
    pub fn is_change(self) -> bool {
        matches!(self, OpKind::C | OpKind::U | OpKind::D)
    }

    pub fn carries_attributes(self) -> bool {
        matches!(self, OpKind::R | OpKind::U | OpKind::B)
    }

    /// Kind as seen by the classic CRUD letters: B counts as R.
    pub fn crud(self) -> OpKind {
        match self {
            OpKind::B => OpKind::R,
            k => k,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One operation in a matrix cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperationSpec {
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<EntityId>,
}

impl OperationSpec {
    fn with_attrs<I, A>(kind: OpKind, attrs: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AttributeId>,
    {
        Self {
            kind,
            attributes: attrs.into_iter().map(Into::into).collect(),
            source: None,
        }
    }

    pub fn bare(kind: OpKind) -> Self {
        Self { kind, attributes: Vec::new(), source: None }
    }

    pub fn create() -> Self {
        Self::bare(OpKind::C)
    }

    pub fn delete() -> Self {
        Self::bare(OpKind::D)
    }

    pub fn read<I, A>(attrs: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AttributeId>,
    {
        Self::with_attrs(OpKind::R, attrs)
    }

    pub fn update<I, A>(attrs: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AttributeId>,
    {
        Self::with_attrs(OpKind::U, attrs)
    }

    pub fn best_read<I, A>(attrs: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AttributeId>,
    {
        Self::with_attrs(OpKind::B, attrs)
    }

    pub fn influenced(source: impl Into<EntityId>) -> Self {
        Self { kind: OpKind::I, attributes: Vec::new(), source: Some(source.into()) }
    }

    /// Number of attributes shared with `other`.
    pub fn overlap(&self, other: &[AttributeId]) -> usize {
        self.attributes.iter().filter(|a| other.contains(a)).count()
    }
}

impl fmt::Display for OperationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if !self.attributes.is_empty() {
            let names: Vec<&str> = self.attributes.iter().map(AttributeId::as_str).collect();
            write!(f, "{{{}}}", names.join(","))?;
        }
        if let Some(src) = &self.source {
            write!(f, "({src})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub attributes: Vec<AttributeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_entities: Vec<EntityId>,
    /// Lower rank means more important.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
}

impl Entity {
    pub fn new<I, A>(id: impl Into<EntityId>, attributes: I) -> Self
    where
        I: IntoIterator<Item = A>,
        A: Into<AttributeId>,
    {
        Self {
            id: id.into(),
            attributes: attributes.into_iter().map(Into::into).collect(),
            sub_entities: Vec::new(),
            priority: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub id: FunctionId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Lower rank means more important.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
}

impl Function {
    pub fn new(id: impl Into<FunctionId>) -> Self {
        Self { id: id.into(), name: String::new(), priority: None }
    }
}

/// A function paired with one of its operations on some entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionOp {
    pub function: FunctionId,
    pub op: OperationSpec,
}

/// Serialized form of a cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub function: FunctionId,
    pub entity: EntityId,
    pub ops: Vec<OperationSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct MatrixRepr {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    plain: bool,
    entities: Vec<Entity>,
    functions: Vec<Function>,
    cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "MatrixRepr", into = "MatrixRepr")]
pub struct CrudMatrix {
    plain: bool,
    entities: Vec<Entity>,
    functions: Vec<Function>,
    cells: BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>>,
}

impl From<MatrixRepr> for CrudMatrix {
    fn from(repr: MatrixRepr) -> Self {
        let mut cells: BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>> = BTreeMap::new();
        for cell in repr.cells {
            cells.entry((cell.function, cell.entity)).or_default().extend(cell.ops);
        }
        Self { plain: repr.plain, entities: repr.entities, functions: repr.functions, cells }
    }
}

impl From<CrudMatrix> for MatrixRepr {
    fn from(m: CrudMatrix) -> Self {
        let cells = m.cell_list();
        MatrixRepr { plain: m.plain, entities: m.entities, functions: m.functions, cells }
    }
}

/// Operations on one entity column, grouped by kind, in function declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnOps {
    pub creates: Vec<FunctionOp>,
    /// R and B operations.
    pub reads: Vec<FunctionOp>,
    pub updates: Vec<FunctionOp>,
    pub deletes: Vec<FunctionOp>,
    /// Every `(f', e')` whose cell holds `I(entity)`.
    pub influence_targets: Vec<(FunctionId, EntityId)>,
}

impl ColumnOps {
    pub fn best_read(&self) -> Option<&FunctionOp> {
        self.reads.iter().find(|r| r.op.kind == OpKind::B)
    }

    pub fn change_count(&self) -> usize {
        self.creates.len() + self.updates.len() + self.deletes.len()
    }

    /// C, D and at least one read are present.
    pub fn is_generatable(&self) -> bool {
        !self.creates.is_empty() && !self.deletes.is_empty() && !self.reads.is_empty()
    }
}

impl CrudMatrix {
    /// Builds an extended (attribute-annotated) matrix.
    pub fn new(entities: Vec<Entity>, functions: Vec<Function>, cells: Vec<Cell>) -> Self {
        MatrixRepr { plain: false, entities, functions, cells }.into()
    }

    /// Builds a plain matrix (no attributes, no B or I operations).
    pub fn new_plain(entities: Vec<Entity>, functions: Vec<Function>, cells: Vec<Cell>) -> Self {
        MatrixRepr { plain: true, entities, functions, cells }.into()
    }

    pub fn is_plain(&self) -> bool {
        self.plain
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == *id)
    }

    pub fn function(&self, id: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.id == *id)
    }

    pub fn function_index(&self, id: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.id == *id)
    }

    /// Operations in cell `(function, entity)`; empty when the cell is absent.
    pub fn ops(&self, function: &FunctionId, entity: &EntityId) -> &[OperationSpec] {
        self.cells
            .get(&(function.clone(), entity.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Cells in function-major declaration order; cells naming undeclared
    /// functions or entities follow in key order.
    pub fn cell_list(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.cells.len());
        let mut emitted = HashSet::new();
        for f in &self.functions {
            for e in &self.entities {
                let key = (f.id.clone(), e.id.clone());
                if let Some(ops) = self.cells.get(&key) {
                    if emitted.insert(key) {
                        out.push(Cell { function: f.id.clone(), entity: e.id.clone(), ops: ops.clone() });
                    }
                }
            }
        }
        for ((f, e), ops) in &self.cells {
            if !emitted.contains(&(f.clone(), e.clone())) {
                out.push(Cell { function: f.clone(), entity: e.clone(), ops: ops.clone() });
            }
        }
        out
    }

    /// Content hash of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("matrix serializes");
        seed::fingerprint(&bytes)
    }

    /// The classic matrix: attribute sets erased, B turned into R, I dropped.
    pub fn erased(&self) -> CrudMatrix {
        let mut cells = Vec::new();
        for cell in self.cell_list() {
            let mut ops: Vec<OperationSpec> = Vec::new();
            for op in cell.ops {
                let kind = match op.kind {
                    OpKind::I => continue,
                    k => k.crud(),
                };
                let bare = OperationSpec::bare(kind);
                if !ops.contains(&bare) {
                    ops.push(bare);
                }
            }
            if !ops.is_empty() {
                cells.push(Cell { function: cell.function, entity: cell.entity, ops });
            }
        }
        CrudMatrix::new_plain(self.entities.clone(), self.functions.clone(), cells)
    }

    /// Copy of the matrix with `op` added to cell `(function, entity)`.
    pub fn with_op(&self, function: impl Into<FunctionId>, entity: impl Into<EntityId>, op: OperationSpec) -> CrudMatrix {
        let mut m = self.clone();
        m.cells.entry((function.into(), entity.into())).or_default().push(op);
        m
    }

    /// Copy of the matrix with every op matching `pred` removed from cell `(function, entity)`.
    pub fn without_ops(
        &self,
        function: impl Into<FunctionId>,
        entity: impl Into<EntityId>,
        pred: impl Fn(&OperationSpec) -> bool,
    ) -> CrudMatrix {
        let mut m = self.clone();
        let key = (function.into(), entity.into());
        if let Some(ops) = m.cells.get_mut(&key) {
            ops.retain(|op| !pred(op));
            if ops.is_empty() {
                m.cells.remove(&key);
            }
        }
        m
    }

    /// Turns, for every entity without a B, the suggested best read into a B.
    pub fn with_best_reads_assigned(&self) -> CrudMatrix {
        let mut m = self.clone();
        if m.plain {
            return m;
        }
        for entity in &self.entities {
            let Ok(col) = self.operations_on(&entity.id) else { continue };
            if col.best_read().is_some() {
                continue;
            }
            if let Ok(Some(f)) = suggest_best_read(self, &entity.id) {
                if let Some(ops) = m.cells.get_mut(&(f, entity.id.clone())) {
                    if let Some(op) = ops.iter_mut().find(|o| o.kind == OpKind::R) {
                        op.kind = OpKind::B;
                    }
                }
            }
        }
        m
    }

    pub fn operations_on(&self, entity: &EntityId) -> Result<ColumnOps, MatrixError> {
        operations_on(self, entity)
    }
}

/// Groups the operations of an entity column by kind.
pub fn operations_on(matrix: &CrudMatrix, entity: &EntityId) -> Result<ColumnOps, MatrixError> {
    if matrix.entity(entity.as_str()).is_none() {
        return Err(MatrixError::UnknownEntity(entity.clone()));
    }
    let mut col = ColumnOps::default();
    for f in &matrix.functions {
        for op in matrix.ops(&f.id, entity) {
            let item = FunctionOp { function: f.id.clone(), op: op.clone() };
            match op.kind {
                OpKind::C => col.creates.push(item),
                OpKind::R | OpKind::B => col.reads.push(item),
                OpKind::U => col.updates.push(item),
                OpKind::D => col.deletes.push(item),
                OpKind::I => {}
            }
        }
        for e in &matrix.entities {
            let marks = matrix
                .ops(&f.id, &e.id)
                .iter()
                .any(|op| op.kind == OpKind::I && op.source.as_ref() == Some(entity));
            if marks {
                col.influence_targets.push((f.id.clone(), e.id.clone()));
            }
        }
    }
    Ok(col)
}

/// Suggests the best read of `entity`: the R reading the largest attribute
/// set, earliest declared function on ties. An explicit B already in the
/// matrix is returned as is.
pub fn suggest_best_read(matrix: &CrudMatrix, entity: &EntityId) -> Result<Option<FunctionId>, MatrixError> {
    let col = operations_on(matrix, entity)?;
    if let Some(b) = col.best_read() {
        return Ok(Some(b.function.clone()));
    }
    let mut best: Option<&FunctionOp> = None;
    for read in col.reads.iter().filter(|r| r.op.kind == OpKind::R) {
        match best {
            Some(b) if b.op.attributes.len() >= read.op.attributes.len() => {}
            _ => best = Some(read),
        }
    }
    Ok(best.map(|b| b.function.clone()))
}

pub fn validate_matrix(matrix: &CrudMatrix) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut entity_ids = HashSet::new();
    for e in &matrix.entities {
        if e.id.as_str().is_empty() {
            report.error(Rule::EmptyId, None, Some(&e.id), "entity id is empty");
        }
        if !entity_ids.insert(e.id.clone()) {
            report.error(Rule::DuplicateEntity, None, Some(&e.id), format!("entity `{}` declared twice", e.id));
        }
        if e.attributes.is_empty() && !matrix.plain {
            report.error(Rule::NoAttributes, None, Some(&e.id), format!("entity `{}` has no attributes", e.id));
        }
        let mut attrs = HashSet::new();
        for a in &e.attributes {
            if a.as_str().is_empty() {
                report.error(Rule::EmptyId, None, Some(&e.id), "attribute id is empty");
            }
            if !attrs.insert(a) {
                report.error(Rule::DuplicateAttribute, None, Some(&e.id), format!("attribute `{a}` declared twice"));
            }
        }
    }
    let mut function_ids = HashSet::new();
    for f in &matrix.functions {
        if f.id.as_str().is_empty() {
            report.error(Rule::EmptyId, Some(&f.id), None, "function id is empty");
        }
        if !function_ids.insert(f.id.clone()) {
            report.error(Rule::DuplicateFunction, Some(&f.id), None, format!("function `{}` declared twice", f.id));
        }
    }

    validate_sub_entities(matrix, &entity_ids, &mut report);

    let attrs_of: HashMap<&EntityId, &[AttributeId]> =
        matrix.entities.iter().map(|e| (&e.id, e.attributes.as_slice())).collect();

    for ((f, e), ops) in &matrix.cells {
        if !function_ids.contains(f) {
            report.error(Rule::UnknownFunction, Some(f), Some(e), format!("cell references undeclared function `{f}`"));
        }
        let Some(entity_attrs) = attrs_of.get(e) else {
            report.error(Rule::UnknownEntity, Some(f), Some(e), format!("cell references undeclared entity `{e}`"));
            continue;
        };
        let mut seen: Vec<&OperationSpec> = Vec::new();
        for op in ops {
            if seen.contains(&op) {
                report.error(Rule::DuplicateOperation, Some(f), Some(e), format!("operation {op} listed twice"));
            }
            seen.push(op);
            check_operation(matrix.plain, f, e, op, entity_attrs, &entity_ids, &mut report);
        }
    }

    for e in &matrix.entities {
        let best: Vec<&FunctionId> = matrix
            .functions
            .iter()
            .filter(|f| matrix.ops(&f.id, &e.id).iter().any(|op| op.kind == OpKind::B))
            .map(|f| &f.id)
            .collect();
        if best.len() > 1 {
            for f in &best[1..] {
                report.error(
                    Rule::MultipleBestReads,
                    Some(f),
                    Some(&e.id),
                    format!("entity `{}` already has a best read in `{}`", e.id, best[0]),
                );
            }
        }
    }

    // Every I(e2) in (f, e1) needs a C, U or D by f on e2.
    for ((f, e), ops) in &matrix.cells {
        for op in ops.iter().filter(|op| op.kind == OpKind::I) {
            let Some(src) = &op.source else { continue };
            if !entity_ids.contains(src) || src == e {
                continue;
            }
            let backed = matrix.ops(f, src).iter().any(|o| o.kind.is_change());
            if !backed {
                report.error(
                    Rule::UnbackedInfluence,
                    Some(f),
                    Some(e),
                    format!("`{f}` marks I({src}) but performs no C, U or D on `{src}`"),
                );
            }
        }
    }

    for e in &matrix.entities {
        if let Ok(col) = operations_on(matrix, &e.id) {
            let mut missing = Vec::new();
            if col.creates.is_empty() {
                missing.push("C");
            }
            if col.deletes.is_empty() {
                missing.push("D");
            }
            if col.reads.is_empty() {
                missing.push("read");
            }
            if !missing.is_empty() {
                report.warning(
                    Rule::IncompleteColumn,
                    None,
                    Some(&e.id),
                    format!("column `{}` has no {}", e.id, missing.join(", ")),
                );
            }
        }
    }

    report
}

fn check_operation(
    plain: bool,
    f: &FunctionId,
    e: &EntityId,
    op: &OperationSpec,
    entity_attrs: &[AttributeId],
    entity_ids: &HashSet<EntityId>,
    report: &mut ValidationReport,
) {
    if plain {
        if matches!(op.kind, OpKind::B | OpKind::I) {
            report.error(Rule::PlainMatrixOperation, Some(f), Some(e), format!("{} is not allowed in a plain matrix", op.kind));
        }
        if !op.attributes.is_empty() {
            report.error(Rule::UnexpectedAttributes, Some(f), Some(e), "plain matrices carry no attribute sets");
        }
    } else if op.kind.carries_attributes() {
        if op.attributes.is_empty() {
            report.error(Rule::MissingAttributes, Some(f), Some(e), format!("{} needs a non-empty attribute set", op.kind));
        }
        let mut seen = HashSet::new();
        for a in &op.attributes {
            if !entity_attrs.contains(a) {
                report.error(Rule::UnknownAttribute, Some(f), Some(e), format!("attribute `{a}` is not declared on `{e}`"));
            }
            if !seen.insert(a) {
                report.error(Rule::DuplicateAttribute, Some(f), Some(e), format!("attribute `{a}` listed twice"));
            }
        }
    } else if !op.attributes.is_empty() {
        report.error(Rule::UnexpectedAttributes, Some(f), Some(e), format!("{} carries no attribute set", op.kind));
    }

    match (&op.kind, &op.source) {
        (OpKind::I, None) => report.error(Rule::MissingSource, Some(f), Some(e), "I needs a source entity"),
        (OpKind::I, Some(src)) => {
            if src == e {
                report.error(Rule::SelfInfluence, Some(f), Some(e), format!("I({src}) in its own column"));
            } else if !entity_ids.contains(src) {
                report.error(Rule::UnknownEntity, Some(f), Some(e), format!("I references undeclared entity `{src}`"));
            }
        }
        (_, Some(_)) => report.error(Rule::UnexpectedSource, Some(f), Some(e), format!("{} carries no source entity", op.kind)),
        (_, None) => {}
    }
}

fn validate_sub_entities(matrix: &CrudMatrix, entity_ids: &HashSet<EntityId>, report: &mut ValidationReport) {
    let mut graph: BTreeMap<&EntityId, Vec<&EntityId>> = BTreeMap::new();
    for e in &matrix.entities {
        for sub in &e.sub_entities {
            if sub == &e.id {
                report.error(Rule::SubEntityCycle, None, Some(&e.id), "entity lists itself as sub-entity");
            } else if !entity_ids.contains(sub) {
                report.error(Rule::UnknownSubEntity, None, Some(&e.id), format!("sub-entity `{sub}` is not declared"));
            } else {
                graph.entry(&e.id).or_default().push(sub);
            }
        }
    }
    // Colour-marking DFS; one report per entity that starts a cycle.
    let mut state: HashMap<&EntityId, u8> = HashMap::new();
    fn visit<'a>(
        node: &'a EntityId,
        graph: &BTreeMap<&'a EntityId, Vec<&'a EntityId>>,
        state: &mut HashMap<&'a EntityId, u8>,
    ) -> bool {
        match state.get(node) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(node, 1);
        let mut cyclic = false;
        for next in graph.get(node).into_iter().flatten() {
            cyclic |= visit(next, graph, state);
        }
        state.insert(node, 2);
        cyclic
    }
    let mut reported = BTreeSet::new();
    for e in &matrix.entities {
        if !state.contains_key(&e.id) && visit(&e.id, &graph, &mut state) && reported.insert(&e.id) {
            report.error(Rule::SubEntityCycle, None, Some(&e.id), "sub-entity nesting forms a cycle");
        }
    }
}
