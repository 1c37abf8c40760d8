//! Seeded random artificial SUTs.
//!
//! Every entity gets a lifecycle spanning all states: a random spanning
//! arborescence rooted at the initial state whose first edge creates the
//! entity, a delete edge back to the initial state, a full-width read loop
//! on the creation target, and density-driven extra R/U edges. Workflows are
//! random walks from the initial state.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AttributeId, EntityId, FunctionId, StateId};
use crate::matrix::{Entity, Function, OpKind, OperationSpec};
use crate::seed::{self, Rng};
use crate::sut::{
    Activator, ArtificialSut, Defect, InfluenceFact, LifecycleEdge, LifecycleGraph, WorkflowEdge, WorkflowGraph,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SutGenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("unsatisfiable generator config: {0}")]
    Unsatisfiable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SutGenConfig {
    pub num_entities: usize,
    pub attrs_per_entity: (usize, usize),
    pub num_functions: usize,
    pub num_states: usize,
    #[serde(default)]
    pub num_workflows: usize,
    #[serde(default = "default_walk")]
    pub edges_per_workflow: (usize, usize),
    /// Chance that a lifecycle edge carries each of R and U.
    pub ops_density: f64,
    #[serde(default)]
    pub num_defects: usize,
    #[serde(default = "default_activators")]
    pub activators_per_defect: (usize, usize),
    #[serde(default)]
    pub num_influence_facts: usize,
    #[serde(default)]
    pub influence_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_walk() -> (usize, usize) {
    (2, 5)
}

fn default_activators() -> (usize, usize) {
    (1, 3)
}

pub const PRESETS: [&str; 4] = ["small", "medium", "large", "xlarge"];

impl SutGenConfig {
    /// Named instance sizes used by the experiment pipeline.
    pub fn preset(name: &str) -> Option<SutGenConfig> {
        let (entities, functions, states, workflows, defects, influences) = match name {
            "small" => (4, 12, 6, 2, 6, 3),
            "medium" => (6, 20, 10, 3, 10, 5),
            "large" => (8, 30, 14, 4, 14, 8),
            "xlarge" => (10, 40, 20, 5, 20, 10),
            _ => return None,
        };
        Some(SutGenConfig {
            num_entities: entities,
            attrs_per_entity: (2, 5),
            num_functions: functions,
            num_states: states,
            num_workflows: workflows,
            edges_per_workflow: (2, 6),
            ops_density: 0.4,
            num_defects: defects,
            activators_per_defect: (1, 3),
            num_influence_facts: influences,
            influence_probability: 0.3,
            seed: 0,
        })
    }

    pub fn check(&self) -> Result<(), SutGenError> {
        let bad = |msg: String| Err(SutGenError::InvalidConfig(msg));
        if self.num_entities == 0 {
            return bad("num_entities must be at least 1".into());
        }
        if self.num_functions == 0 {
            return bad("num_functions must be at least 1".into());
        }
        if self.num_states < 2 {
            return bad("num_states must be at least 2".into());
        }
        for (name, (lo, hi)) in [
            ("attrs_per_entity", self.attrs_per_entity),
            ("edges_per_workflow", self.edges_per_workflow),
            ("activators_per_defect", self.activators_per_defect),
        ] {
            if lo > hi {
                return bad(format!("{name}: min {lo} exceeds max {hi}"));
            }
        }
        if self.attrs_per_entity.0 == 0 {
            return bad("attrs_per_entity: entities need at least one attribute".into());
        }
        if self.activators_per_defect.0 == 0 {
            return bad("activators_per_defect: defects need at least one activator".into());
        }
        if !(self.ops_density > 0.0 && self.ops_density <= 1.0) {
            return bad(format!("ops_density {} is outside (0, 1]", self.ops_density));
        }
        if !(0.0..=1.0).contains(&self.influence_probability) {
            return bad(format!("influence_probability {} is outside [0, 1]", self.influence_probability));
        }
        Ok(())
    }
}

fn in_range(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi)
}

/// Non-empty random subset, in declaration order.
fn attr_subset(rng: &mut Rng, attrs: &[AttributeId]) -> Vec<AttributeId> {
    let mut picked: Vec<bool> = attrs.iter().map(|_| rng.gen_bool(0.5)).collect();
    if !picked.contains(&true) {
        picked[rng.gen_range(0..attrs.len())] = true;
    }
    attrs.iter().zip(picked).filter(|(_, p)| *p).map(|(a, _)| a.clone()).collect()
}

fn density_ops(rng: &mut Rng, attrs: &[AttributeId], density: f64, at_least_one: bool) -> Vec<OperationSpec> {
    let mut ops = Vec::new();
    if rng.gen_bool(density) {
        ops.push(OperationSpec::read(attr_subset(rng, attrs)));
    }
    if rng.gen_bool(density) {
        ops.push(OperationSpec::update(attr_subset(rng, attrs)));
    }
    if ops.is_empty() && at_least_one {
        ops.push(if rng.gen_bool(0.5) {
            OperationSpec::read(attr_subset(rng, attrs))
        } else {
            OperationSpec::update(attr_subset(rng, attrs))
        });
    }
    ops
}

fn lifecycle(rng: &mut Rng, entity: &Entity, states: &[StateId], functions: &[Function], density: f64) -> LifecycleGraph {
    let pick_fn = |rng: &mut Rng| functions.choose(rng).expect("functions exist").id.clone();
    let mut order: Vec<usize> = (1..states.len()).collect();
    order.shuffle(rng);
    order.insert(0, 0);

    let mut edges = Vec::new();
    for i in 1..order.len() {
        let parent = order[rng.gen_range(0..i)];
        let ops = if i == 1 {
            vec![OperationSpec::create()]
        } else {
            density_ops(rng, &entity.attributes, density, false)
        };
        // the creating edge must leave the root
        let from = if i == 1 { 0 } else { parent };
        edges.push(LifecycleEdge {
            from: states[from].clone(),
            to: states[order[i]].clone(),
            function: pick_fn(rng),
            ops,
        });
    }
    let created = states[order[1]].clone();
    edges.push(LifecycleEdge {
        from: created.clone(),
        to: created,
        function: pick_fn(rng),
        ops: vec![OperationSpec::read(entity.attributes.clone())],
    });
    let dying = rng.gen_range(1..states.len());
    edges.push(LifecycleEdge {
        from: states[dying].clone(),
        to: states[0].clone(),
        function: pick_fn(rng),
        ops: vec![OperationSpec::delete()],
    });
    let extra = (density * states.len() as f64).floor() as usize;
    for _ in 0..extra {
        let from = rng.gen_range(0..states.len());
        let to = rng.gen_range(0..states.len());
        edges.push(LifecycleEdge {
            from: states[from].clone(),
            to: states[to].clone(),
            function: pick_fn(rng),
            ops: density_ops(rng, &entity.attributes, density, true),
        });
    }
    LifecycleGraph { entity: entity.id.clone(), edges }
}

pub fn generate_sut(config: &SutGenConfig) -> Result<ArtificialSut, SutGenError> {
    config.check()?;
    let mut rng = seed::keyed_rng(config.seed, "sutgen", "model");

    let entities: Vec<Entity> = (1..=config.num_entities)
        .map(|i| {
            let n = in_range(&mut rng, config.attrs_per_entity);
            Entity::new(format!("E{i}"), (1..=n).map(|a| format!("a{a}")))
        })
        .collect();
    let functions: Vec<Function> = (1..=config.num_functions).map(|i| Function::new(format!("f{i}"))).collect();
    let states: Vec<StateId> = (0..config.num_states).map(|i| StateId::new(format!("s{i}"))).collect();

    let mut lifecycles: Vec<LifecycleGraph> = entities
        .iter()
        .map(|e| lifecycle(&mut rng, e, &states, &functions, config.ops_density))
        .collect();

    let used: BTreeSet<&FunctionId> = lifecycles.iter().flat_map(|l| l.edges.iter().map(|e| &e.function)).collect();
    let unused: Vec<FunctionId> = functions.iter().map(|f| &f.id).filter(|f| !used.contains(f)).cloned().collect();
    for f in unused {
        let li = rng.gen_range(0..lifecycles.len());
        let from = rng.gen_range(0..states.len());
        let to = rng.gen_range(0..states.len());
        let ops = density_ops(&mut rng, &entities[li].attributes, config.ops_density, true);
        lifecycles[li].edges.push(LifecycleEdge { from: states[from].clone(), to: states[to].clone(), function: f, ops });
    }

    let mut workflows = Vec::with_capacity(config.num_workflows);
    for w in 1..=config.num_workflows {
        let len = in_range(&mut rng, config.edges_per_workflow);
        let mut at = 0;
        let mut edges = Vec::with_capacity(len);
        for _ in 0..len {
            let to = rng.gen_range(0..states.len());
            let function = functions.choose(&mut rng).expect("functions exist").id.clone();
            edges.push(WorkflowEdge { from: states[at].clone(), to: states[to].clone(), function });
            at = to;
        }
        workflows.push(WorkflowGraph { id: format!("w{w}"), edges });
    }

    let mut sut = ArtificialSut {
        functions,
        entities,
        states: states.clone(),
        initial_state: states[0].clone(),
        workflows,
        lifecycles,
        defects: Vec::new(),
        influences: Vec::new(),
    };

    let mut influence_rng = seed::keyed_rng(config.seed, "sutgen", "influences");
    let candidates = influence_candidates(&sut);
    if config.num_influence_facts > candidates.len() {
        return Err(SutGenError::Unsatisfiable(format!(
            "{} influence facts requested, {} candidates exist",
            config.num_influence_facts,
            candidates.len()
        )));
    }
    let mut picked = index::sample(&mut influence_rng, candidates.len(), config.num_influence_facts).into_vec();
    picked.sort_unstable();
    sut.influences = picked
        .into_iter()
        .map(|i| {
            let (influenced, function, source) = candidates[i].clone();
            InfluenceFact { influenced, function, source, probability: config.influence_probability }
        })
        .collect();

    inject_defects(
        sut,
        config.num_defects,
        config.activators_per_defect,
        seed::derive_seed(config.seed, "sutgen", "defects"),
    )
}

/// `(influenced, function, source)` triples where `function` changes `source`.
fn influence_candidates(sut: &ArtificialSut) -> Vec<(EntityId, FunctionId, EntityId)> {
    let ops = sut.lifecycle_ops();
    let mut out = Vec::new();
    for influenced in &sut.entities {
        for f in &sut.functions {
            for source in &sut.entities {
                if source.id == influenced.id {
                    continue;
                }
                let changes = ops
                    .get(&(f.id.clone(), source.id.clone()))
                    .is_some_and(|ops| ops.iter().any(|o| o.kind.is_change()));
                if changes {
                    out.push((influenced.id.clone(), f.id.clone(), source.id.clone()));
                }
            }
        }
    }
    out
}

/// Adds `n` defects drawn without replacement from the `(entity, function,
/// C/U)` triples the lifecycles perform. Activators are other `(function,
/// op)` pairs on the same entity.
pub fn inject_defects(
    mut sut: ArtificialSut,
    n: usize,
    activators_per_defect: (usize, usize),
    seed: u64,
) -> Result<ArtificialSut, SutGenError> {
    if n == 0 {
        return Ok(sut);
    }
    if activators_per_defect.0 == 0 || activators_per_defect.0 > activators_per_defect.1 {
        return Err(SutGenError::InvalidConfig(format!(
            "activators_per_defect {activators_per_defect:?} is not a range of positive counts"
        )));
    }
    let ops = sut.lifecycle_ops();
    let performs = |f: &FunctionId, e: &EntityId, kind: OpKind| {
        ops.get(&(f.clone(), e.clone()))
            .is_some_and(|ops| ops.iter().any(|o| o.kind.crud() == kind))
    };
    let taken: BTreeSet<(EntityId, FunctionId, OpKind)> = sut
        .defects
        .iter()
        .map(|d| (d.entity.clone(), d.cause_function.clone(), d.cause_op))
        .collect();
    let mut causes = Vec::new();
    for e in &sut.entities {
        for f in &sut.functions {
            for kind in [OpKind::C, OpKind::U] {
                let key = (e.id.clone(), f.id.clone(), kind);
                if performs(&f.id, &e.id, kind) && !taken.contains(&key) {
                    causes.push(key);
                }
            }
        }
    }
    if n > causes.len() {
        return Err(SutGenError::Unsatisfiable(format!("{n} defects requested, {} cause triples available", causes.len())));
    }

    let mut rng = seed::rng_from(seed);
    let mut picked = index::sample(&mut rng, causes.len(), n).into_vec();
    picked.sort_unstable();
    let first_id = sut.defects.len() + 1;
    for (k, i) in picked.into_iter().enumerate() {
        let (entity, cause_function, cause_op) = causes[i].clone();
        let pool: Vec<Activator> = sut
            .functions
            .iter()
            .flat_map(|f| [OpKind::C, OpKind::R, OpKind::U, OpKind::D].map(|op| (f.id.clone(), op)))
            .filter(|(f, op)| performs(f, &entity, *op) && !(f == &cause_function && *op == cause_op))
            .map(|(function, op)| Activator { function, op })
            .collect();
        if pool.is_empty() {
            return Err(SutGenError::Unsatisfiable(format!("no activator candidates on `{entity}`")));
        }
        let want = in_range(&mut rng, activators_per_defect).min(pool.len());
        let mut chosen = index::sample(&mut rng, pool.len(), want).into_vec();
        chosen.sort_unstable();
        sut.defects.push(Defect {
            id: format!("d{}", first_id + k),
            entity,
            cause_function,
            cause_op,
            activators: chosen.into_iter().map(|j| pool[j].clone()).collect(),
        });
    }
    Ok(sut)
}
