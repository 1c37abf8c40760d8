//! Labeled transition system over SUT states, with functions as labels.
//!
//! States and functions are interned to indices; a state-set is a sorted,
//! deduplicated `Vec<usize>`. The same `(state, function)` pair may lead to
//! several successors.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ids::{EntityId, FunctionId, StateId};
use crate::matrix::OperationSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("unknown state `{0}`")]
    UnknownState(StateId),
    #[error("unknown function `{0}`")]
    UnknownFunction(FunctionId),
}

pub type StateSet = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSystem {
    states: Vec<StateId>,
    functions: Vec<FunctionId>,
    initial: usize,
    transitions: BTreeMap<(usize, usize), Vec<usize>>,
    state_index: HashMap<StateId, usize>,
    function_index: HashMap<FunctionId, usize>,
    effects: BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>>,
}

impl TransitionSystem {
    /// Builds a system from `(from, function, to)` edges. `functions` fixes
    /// the declaration order used for deterministic tie-breaking.
    pub fn new<I>(
        states: Vec<StateId>,
        functions: Vec<FunctionId>,
        initial: &StateId,
        edges: I,
    ) -> Result<Self, TransitionError>
    where
        I: IntoIterator<Item = (StateId, FunctionId, StateId)>,
    {
        let state_index: HashMap<StateId, usize> =
            states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let function_index: HashMap<FunctionId, usize> =
            functions.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        let initial_idx = *state_index
            .get(initial)
            .ok_or_else(|| TransitionError::UnknownState(initial.clone()))?;

        let mut transitions: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (from, func, to) in edges {
            let s = *state_index.get(&from).ok_or(TransitionError::UnknownState(from))?;
            let t = *state_index.get(&to).ok_or(TransitionError::UnknownState(to))?;
            let f = *function_index.get(&func).ok_or(TransitionError::UnknownFunction(func))?;
            transitions.entry((s, f)).or_default().push(t);
        }
        for succ in transitions.values_mut() {
            succ.sort_unstable();
            succ.dedup();
        }
        Ok(Self {
            states,
            functions,
            initial: initial_idx,
            transitions,
            state_index,
            function_index,
            effects: BTreeMap::new(),
        })
    }

    /// Attaches the data operations each function performs, used to annotate
    /// inserted filler steps.
    pub fn with_effects(mut self, effects: BTreeMap<(FunctionId, EntityId), Vec<OperationSpec>>) -> Self {
        self.effects = effects;
        self
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn functions(&self) -> &[FunctionId] {
        &self.functions
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn state_index(&self, id: &StateId) -> Option<usize> {
        self.state_index.get(id).copied()
    }

    pub fn function_index(&self, id: &FunctionId) -> Option<usize> {
        self.function_index.get(id).copied()
    }

    /// Number of distinct `(from, function, to)` triples.
    pub fn edge_count(&self) -> usize {
        self.transitions.values().map(Vec::len).sum()
    }

    /// Distinct edges as `(from, function, to)` ids, in index order.
    pub fn edges(&self) -> Vec<(StateId, FunctionId, StateId)> {
        let mut out = Vec::new();
        for (&(s, f), succ) in &self.transitions {
            for &t in succ {
                out.push((self.states[s].clone(), self.functions[f].clone(), self.states[t].clone()));
            }
        }
        out
    }

    pub fn successors(&self, state: usize, function: usize) -> &[usize] {
        self.transitions.get(&(state, function)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_label(&self, function: usize) -> bool {
        self.transitions.keys().any(|&(_, f)| f == function)
    }

    pub fn effects(&self, function: &FunctionId, entity: &EntityId) -> &[OperationSpec] {
        self.effects
            .get(&(function.clone(), entity.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn all_states(&self) -> StateSet {
        (0..self.states.len()).collect()
    }

    /// True when some state of `set` has an outgoing `function` edge.
    pub fn enables(&self, set: &[usize], function: usize) -> bool {
        set.iter().any(|&s| self.transitions.contains_key(&(s, function)))
    }

    /// Union of successors of `set` under `function`; states without an
    /// outgoing `function` edge drop out.
    pub fn step(&self, set: &[usize], function: usize) -> StateSet {
        let mut out: Vec<usize> = set.iter().flat_map(|&s| self.successors(s, function).iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
