//! Small hand-built models used by tests and examples.
//!
//! `m1` is an order/invoice CRUD matrix; `s1` is an artificial SUT whose
//! derived matrix at full capture is exactly `m1`.

use crate::matrix::{Cell, CrudMatrix, Entity, Function, OpKind, OperationSpec};
use crate::sut::{Activator, ArtificialSut, Defect, InfluenceFact, LifecycleEdge, LifecycleGraph};

fn entities() -> Vec<Entity> {
    vec![
        Entity::new("Order", ["status", "total", "customer"]),
        Entity::new("Invoice", ["amount", "paid"]),
    ]
}

fn functions() -> Vec<Function> {
    (1..=9).map(|i| Function::new(format!("f{i}"))).collect()
}

fn cell(f: &str, e: &str, ops: Vec<OperationSpec>) -> Cell {
    Cell { function: f.into(), entity: e.into(), ops }
}

pub fn m1() -> CrudMatrix {
    CrudMatrix::new(
        entities(),
        functions(),
        vec![
            cell("f1", "Order", vec![OperationSpec::create()]),
            cell("f2", "Order", vec![OperationSpec::best_read(["status", "total", "customer"])]),
            cell("f3", "Order", vec![OperationSpec::update(["status"])]),
            cell("f4", "Order", vec![OperationSpec::update(["total"])]),
            cell("f4", "Invoice", vec![OperationSpec::influenced("Order")]),
            cell("f5", "Order", vec![OperationSpec::read(["status"])]),
            cell("f6", "Order", vec![OperationSpec::delete()]),
            cell("f7", "Invoice", vec![OperationSpec::best_read(["amount", "paid"])]),
            cell("f8", "Invoice", vec![OperationSpec::create()]),
            cell("f9", "Invoice", vec![OperationSpec::delete()]),
        ],
    )
}

/// `m1` with every B turned back into an R.
pub fn m1_without_best_reads() -> CrudMatrix {
    m1().without_ops("f2", "Order", |op| op.kind == OpKind::B)
        .with_op("f2", "Order", OperationSpec::read(["status", "total", "customer"]))
        .without_ops("f7", "Invoice", |op| op.kind == OpKind::B)
        .with_op("f7", "Invoice", OperationSpec::read(["amount", "paid"]))
}

fn edge(from: &str, to: &str, f: &str, ops: Vec<OperationSpec>) -> LifecycleEdge {
    LifecycleEdge { from: from.into(), to: to.into(), function: f.into(), ops }
}

pub fn s1() -> ArtificialSut {
    let order = LifecycleGraph {
        entity: "Order".into(),
        edges: vec![
            edge("s0", "s1", "f1", vec![OperationSpec::create()]),
            edge("s1", "s1", "f3", vec![OperationSpec::update(["status"])]),
            edge("s1", "s1", "f4", vec![OperationSpec::update(["total"])]),
            edge("s1", "s1", "f5", vec![OperationSpec::read(["status"])]),
            edge("s1", "s1", "f2", vec![OperationSpec::read(["status", "total", "customer"])]),
            edge("s2", "s2", "f2", vec![OperationSpec::read(["status", "total", "customer"])]),
            edge("s1", "s2", "f6", vec![OperationSpec::delete()]),
        ],
    };
    let invoice = LifecycleGraph {
        entity: "Invoice".into(),
        edges: vec![
            edge("s1", "s1", "f8", vec![OperationSpec::create()]),
            edge("s1", "s1", "f7", vec![OperationSpec::read(["amount", "paid"])]),
            edge("s1", "s1", "f9", vec![OperationSpec::delete()]),
        ],
    };
    ArtificialSut {
        functions: functions(),
        entities: entities(),
        states: vec!["s0".into(), "s1".into(), "s2".into()],
        initial_state: "s0".into(),
        workflows: vec![],
        lifecycles: vec![order, invoice],
        defects: vec![
            Defect {
                id: "d1".into(),
                entity: "Order".into(),
                cause_function: "f4".into(),
                cause_op: OpKind::U,
                activators: vec![Activator { function: "f2".into(), op: OpKind::R }],
            },
            Defect {
                id: "d2".into(),
                entity: "Order".into(),
                cause_function: "f1".into(),
                cause_op: OpKind::C,
                activators: vec![Activator { function: "f5".into(), op: OpKind::R }],
            },
        ],
        influences: vec![InfluenceFact {
            influenced: "Invoice".into(),
            function: "f4".into(),
            source: "Order".into(),
            probability: 0.3,
        }],
    }
}
