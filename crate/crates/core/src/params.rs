//! Named trainable parameters and their per-model collections.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Ordered set of parameters with name lookup. Order is insertion order and
/// defines the checkpoint layout.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    entries: Vec<Parameter<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate param {name}");
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(Parameter {
            name,
            value,
            grad: None,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }

    pub fn get(&self, idx: usize) -> &Parameter<T> {
        &self.entries[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter<T> {
        &mut self.entries[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.entries.iter_mut()
    }

    /// Replaces a parameter value, keeping shape.
    pub fn set_value(&mut self, idx: usize, value: Tensor<T>) -> Result<()> {
        if self.entries[idx].value.shape() != value.shape() {
            return Err(dim_err!(
                "param-set",
                "parameter '{}' has shape {:?}, assignment has {:?}",
                self.entries[idx].name,
                self.entries[idx].value.shape(),
                value.shape()
            ));
        }
        self.entries[idx].value = value;
        Ok(())
    }

    /// Leafs every parameter into `g`, returning graph ids aligned with the
    /// set's order.
    pub fn bind(&self, g: &mut Graph<T>) -> Binding {
        Binding {
            ids: self.entries.iter().map(|p| g.param(p.value.clone())).collect(),
        }
    }

    /// Converts all values to another scalar type (f32 <-> f64).
    pub fn convert<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for p in &self.entries {
            out.add(p.name.clone(), p.value.convert::<U>());
        }
        out
    }
}

/// Graph node ids of one forward pass's bound parameters.
#[derive(Debug, Clone)]
pub struct Binding {
    ids: Vec<NodeId>,
}

impl Binding {
    /// Binding over externally leafed nodes (gradient checking re-leafs
    /// perturbed parameter values itself).
    pub fn from_ids(ids: Vec<NodeId>) -> Self {
        Binding { ids }
    }

    pub fn id(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}
