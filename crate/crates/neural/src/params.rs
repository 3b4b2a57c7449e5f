//! Named parameter tensors grouped by prefix, with per-group freezing.
//!
//! A parameter called `theta.fc1.w` belongs to the group `theta`. Freezing a
//! group binds its tensors as constants, so no gradient is ever produced for
//! them and the optimizer leaves them untouched.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{NeuralError, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamBundle {
    tensors: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(NeuralError::NameMismatch(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    /// Moves every tensor of `other` into this bundle, keeping its frozen
    /// flags. Names must not collide.
    pub fn merge(&mut self, other: ParamBundle) -> Result<()> {
        for (name, t) in other.tensors {
            self.insert(name, t)?;
        }
        self.frozen.extend(other.frozen);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn groups(&self) -> BTreeSet<String> {
        self.tensors.keys().map(|n| group_of(n).to_string()).collect()
    }

    pub fn freeze(&mut self, group: &str) {
        self.frozen.insert(group.to_string());
    }

    pub fn unfreeze(&mut self, group: &str) {
        self.frozen.remove(group);
    }

    pub fn is_group_frozen(&self, group: &str) -> bool {
        self.frozen.contains(group)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(group_of(name))
    }

    /// Removes and returns all tensors of `group`.
    pub fn split_off_group(&mut self, group: &str) -> ParamBundle {
        let names: Vec<String> = self.tensors.keys().filter(|n| group_of(n) == group).cloned().collect();
        let mut out = ParamBundle::new();
        for n in names {
            let t = self.tensors.remove(&n).unwrap();
            out.tensors.insert(n, t);
        }
        if self.frozen.remove(group) {
            out.frozen.insert(group.to_string());
        }
        out
    }

    /// Copy of the tensors whose group is in `groups`.
    pub fn subset(&self, groups: &[&str]) -> ParamBundle {
        let mut out = ParamBundle::new();
        for (n, t) in &self.tensors {
            if groups.contains(&group_of(n)) {
                out.tensors.insert(n.clone(), t.clone());
            }
        }
        for g in groups {
            if self.frozen.contains(*g) {
                out.frozen.insert(g.to_string());
            }
        }
        out
    }

    /// Renames every tensor of group `from` into group `to`.
    pub fn rename_group(&mut self, from: &str, to: &str) {
        let moved = self.split_off_group(from);
        for (n, t) in moved.tensors {
            let rest = &n[from.len()..];
            self.tensors.insert(format!("{to}{rest}"), t);
        }
        if moved.frozen.contains(from) {
            self.frozen.insert(to.to_string());
        }
    }

    /// Little-endian byte image of one group: names, shapes and values in
    /// name order. Two bundles serialize a group identically iff the group's
    /// tensors are bit-identical.
    pub fn group_bytes(&self, group: &str) -> Vec<u8> {
        let mut bytes = Vec::new();
        for (n, t) in self.tensors.iter().filter(|(n, _)| group_of(n) == group) {
            bytes.extend_from_slice(n.as_bytes());
            bytes.push(0);
            for d in t.shape() {
                bytes.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn group_hash(&self, group: &str) -> String {
        hex::encode(Sha256::digest(self.group_bytes(group)))
    }

    /// Hash over every group, frozen flags included.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for g in self.groups() {
            h.update(g.as_bytes());
            h.update([u8::from(self.is_group_frozen(&g))]);
            h.update(self.group_bytes(&g));
        }
        hex::encode(h.finalize())
    }

    /// Records every tensor on `graph`: trainable tensors as variables and
    /// frozen ones as constants.
    pub fn bind(&self, graph: &mut Graph) -> Bindings {
        let vars = self
            .tensors
            .iter()
            .map(|(n, t)| {
                let v = if self.is_frozen(n) {
                    graph.constant(t.clone())
                } else {
                    graph.variable(t.clone())
                };
                (n.clone(), v)
            })
            .collect();
        Bindings { vars }
    }
}

/// Graph handles for the tensors of a [`ParamBundle`].
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    /// Wraps handles that were recorded by hand rather than via
    /// [`ParamBundle::bind`].
    pub fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NeuralError::NameMismatch(format!("unbound parameter {name}")))
    }

    /// Collects gradients for every bound parameter that received one.
    pub fn gradients(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter_map(|(n, v)| grads.take(*v).map(|g| (n.clone(), g)))
            .collect()
    }
}
