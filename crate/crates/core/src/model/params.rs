//! Named parameter tensors grouped by sub-network, with per-group frozen flags.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Per-frame patch transformer feeding the alignment path.
    FrameEncoder,
    /// Text encoder with cross-attention onto frame tokens.
    TextEncoder,
    /// Spatiotemporal shifted-window encoder.
    Fidelity,
    Fusion,
    /// Fused tokens to decoder width.
    Projector,
    /// Causal language-model decoder and its level-token head.
    Decoder,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::FrameEncoder,
        Group::TextEncoder,
        Group::Fidelity,
        Group::Fusion,
        Group::Projector,
        Group::Decoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::FrameEncoder => "frame_encoder",
            Group::TextEncoder => "text_encoder",
            Group::Fidelity => "fidelity",
            Group::Fusion => "fusion",
            Group::Projector => "projector",
            Group::Decoder => "decoder",
        }
    }

    pub fn from_name(name: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.name() == name)
    }

    /// The frame encoder and decoder are frozen during training.
    pub fn frozen_by_default(self) -> bool {
        matches!(self, Group::FrameEncoder | Group::Decoder)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    frozen: BTreeMap<Group, bool>,
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        let frozen = Group::ALL.into_iter().map(|g| (g, g.frozen_by_default())).collect();
        ParamStore { params: Vec::new(), frozen }
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, group, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn is_frozen(&self, group: Group) -> bool {
        self.frozen[&group]
    }

    pub fn set_frozen(&mut self, group: Group, frozen: bool) {
        self.frozen.insert(group, frozen);
    }

    pub fn frozen_flags(&self) -> &BTreeMap<Group, bool> {
        &self.frozen
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        !self.is_frozen(self.params[id.0].group)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(id, _)| self.is_trainable(*id)).map(|(id, _)| id).collect()
    }

    pub fn group_ids(&self, group: Group) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.group == group).map(|(id, _)| id).collect()
    }

    /// Little-endian bytes of every parameter in `group`, in creation order.
    pub fn group_bytes(&self, group: Group) -> Vec<u8> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.value.to_le_bytes())
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }
}

/// Seeded parameter initialization helpers.
pub(crate) struct Initializer<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    pub group: Group,
}

pub(crate) const INIT_STD: f64 = 0.02;

impl<R: Rng> Initializer<'_, R> {
    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| dist.sample(self.rng)).collect();
        self.store.add(name, self.group, Matrix::from_vec(rows, cols, data))
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.store.add(name, self.group, Matrix::filled(rows, cols, value))
    }
}
