//! Seeded random extended matrices shared by the integration tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use datacycle::matrix::Cell;
use datacycle::seed::{rng_from, Rng as SeededRng};
use datacycle::{AttributeId, CrudMatrix, Entity, Function, FunctionId, OpKind, OperationSpec};


pub fn subset(rng: &mut SeededRng, attrs: &[AttributeId]) -> Vec<AttributeId> {
    let mut out: Vec<AttributeId> = attrs.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
    if out.is_empty() {
        out.push(attrs.choose(rng).unwrap().clone());
    }
    out
}

/// 1-4 entities, 3-10 functions, every column with a C, a D and a read;
/// some explicit B and I entries, the rest of the B assigned by width on
/// two seeds out of three.
pub fn random_matrix(seed: u64) -> CrudMatrix {
    let mut rng = rng_from(seed);
    let n_entities = rng.gen_range(1..=4);
    let n_functions = rng.gen_range(3..=10);
    let entities: Vec<Entity> = (0..n_entities)
        .map(|i| Entity::new(format!("E{i}"), (0..rng.gen_range(1..=4)).map(|a| format!("a{a}"))))
        .collect();
    let functions: Vec<Function> = (0..n_functions).map(|i| Function::new(format!("f{i}"))).collect();
    let fid = |i: usize| FunctionId::from(format!("f{i}"));

    let mut cells: BTreeMap<(usize, usize), BTreeMap<OpKind, OperationSpec>> = BTreeMap::new();
    for (e, entity) in entities.iter().enumerate() {
        let mut add = |rng: &mut SeededRng, kind: OpKind, count: usize| {
            for _ in 0..count {
                let f = rng.gen_range(0..n_functions);
                let op = match kind {
                    OpKind::C => OperationSpec::create(),
                    OpKind::D => OperationSpec::delete(),
                    OpKind::R => OperationSpec::read(subset(rng, &entity.attributes)),
                    _ => OperationSpec::update(subset(rng, &entity.attributes)),
                };
                cells.entry((f, e)).or_default().entry(kind).or_insert(op);
            }
        };
        let c = rng.gen_range(1..=2);
        let d = rng.gen_range(1..=2);
        let r = rng.gen_range(1..=4);
        let u = rng.gen_range(0..=3);
        add(&mut rng, OpKind::C, c);
        add(&mut rng, OpKind::D, d);
        add(&mut rng, OpKind::R, r);
        add(&mut rng, OpKind::U, u);
    }

    // one explicit B on some entities, the widest read elsewhere (applied below)
    for e in 0..n_entities {
        if rng.gen_bool(0.3) {
            let reads: Vec<(usize, usize)> =
                cells.iter().filter(|(&(_, ce), ops)| ce == e && ops.contains_key(&OpKind::R)).map(|(k, _)| *k).collect();
            let key = *reads.choose(&mut rng).unwrap();
            let ops = cells.get_mut(&key).unwrap();
            let mut r = ops.remove(&OpKind::R).unwrap();
            r.kind = OpKind::B;
            ops.insert(OpKind::B, r);
        }
    }

    // I(e2) at (f, e1) only where f changes e2
    let changes: Vec<(usize, usize)> = cells
        .iter()
        .filter(|(_, ops)| ops.keys().any(|k| k.is_change()))
        .map(|(k, _)| *k)
        .collect();
    for (f, e2) in changes {
        for e1 in 0..n_entities {
            if e1 != e2 && rng.gen_bool(0.3) {
                cells.entry((f, e1)).or_default().insert(OpKind::I, OperationSpec::influenced(entities[e2].id.clone()));
            }
        }
    }

    let cell_list = cells
        .into_iter()
        .map(|((f, e), ops)| Cell { function: fid(f), entity: entities[e].id.clone(), ops: ops.into_values().collect() })
        .collect();
    let m = CrudMatrix::new(entities, functions, cell_list);
    if seed.is_multiple_of(3) {
        m
    } else {
        m.with_best_reads_assigned()
    }
}
