//! Bipartite hypergraph store.
//!
//! Entities and hyperedges share one node-id namespace: the top bit of the
//! 64-bit id tags the node kind, so traversal treats both uniformly. Links only
//! ever run between a hyperedge and its member entities.

mod ids;
mod persist;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64;
use crate::text::{collapse_whitespace, entity_key};
use crate::{Error, Result};

pub use ids::{EntityId, HyperedgeId, NodeId};
pub use persist::{StoreMeta, FORMAT_VERSION};

/// Which retrieval layer a hyperedge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Knowledge,
    Case,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Knowledge => "knowledge",
            Layer::Case => "case",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub etype: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub id: HyperedgeId,
    pub description: String,
    pub layer: Layer,
    pub members: BTreeSet<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// Result of a bounded traversal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subgraph {
    pub entities: BTreeSet<EntityId>,
    pub hyperedges: BTreeSet<HyperedgeId>,
}

impl Subgraph {
    pub fn contains(&self, node: NodeId) -> bool {
        match node.kind() {
            ids::NodeKind::Entity(e) => self.entities.contains(&e),
            ids::NodeKind::Hyperedge(h) => self.hyperedges.contains(&h),
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.hyperedges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &Subgraph) -> bool {
        self.entities.is_subset(&other.entities) && self.hyperedges.is_subset(&other.hyperedges)
    }
}

/// The unified entity/hyperedge store.
///
/// A store starts in its build phase; [`seal`](Self::seal) freezes it for
/// concurrent read-only use. Mutating a sealed store fails with [`Error::Sealed`].
#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphStore {
    embedding_dim: usize,
    entities: BTreeMap<EntityId, Entity>,
    hyperedges: BTreeMap<HyperedgeId, Hyperedge>,
    incidence: BTreeMap<EntityId, BTreeSet<HyperedgeId>>,
    sealed: bool,
}

impl HypergraphStore {
    pub fn new(embedding_dim: usize) -> Self {
        HypergraphStore {
            embedding_dim,
            entities: BTreeMap::new(),
            hyperedges: BTreeMap::new(),
            incidence: BTreeMap::new(),
            sealed: false,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    /// Reopen a sealed store for another build phase.
    pub fn into_build_phase(mut self) -> Self {
        self.sealed = false;
        self
    }

    pub(crate) fn require_sealed(&self) -> Result<()> {
        if self.sealed {
            Ok(())
        } else {
            Err(Error::NotSealed)
        }
    }

    fn require_unsealed(&self) -> Result<()> {
        if self.sealed {
            Err(Error::Sealed)
        } else {
            Ok(())
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.embedding_dim {
            return Err(Error::Dimension {
                expected: self.embedding_dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Deterministic id for an entity name.
    pub fn entity_id_for(name: &str) -> EntityId {
        EntityId::from_hash(fnv1a64(entity_key(name).as_bytes()))
    }

    /// Deterministic id for a hyperedge's content.
    pub fn hyperedge_id_for(description: &str, members: &BTreeSet<EntityId>, layer: Layer) -> HyperedgeId {
        let mut canon = collapse_whitespace(description);
        canon.push('\u{1f}');
        let ids: Vec<String> = members.iter().map(|m| m.to_string()).collect();
        canon.push_str(&ids.join(","));
        canon.push('\u{1f}');
        canon.push_str(layer.as_str());
        HyperedgeId::from_hash(fnv1a64(canon.as_bytes()))
    }

    /// Register an entity, or merge into the existing one with the same
    /// normalized name. Non-empty incoming `etype`/`definition` replace stored
    /// values; an embedding is only set when none is stored yet.
    pub fn add_entity(
        &mut self,
        name: &str,
        etype: &str,
        definition: &str,
        embedding: Option<Vec<f64>>,
    ) -> Result<EntityId> {
        self.require_unsealed()?;
        let name = collapse_whitespace(name);
        if name.is_empty() {
            return Err(Error::invalid("entity name must be non-empty"));
        }
        if let Some(v) = &embedding {
            self.check_dim(v)?;
        }
        let id = Self::entity_id_for(&name);
        let etype = etype.trim();
        let definition = definition.trim();
        match self.entities.get_mut(&id) {
            Some(existing) => {
                if !etype.is_empty() {
                    existing.etype = etype.to_string();
                }
                if !definition.is_empty() {
                    existing.definition = definition.to_string();
                }
                if existing.embedding.is_none() {
                    existing.embedding = embedding;
                }
            }
            None => {
                self.entities.insert(
                    id,
                    Entity {
                        id,
                        name,
                        etype: etype.to_string(),
                        definition: definition.to_string(),
                        embedding,
                    },
                );
                self.incidence.insert(id, BTreeSet::new());
            }
        }
        Ok(id)
    }

    /// Insert an n-ary relation over existing entities. Re-adding identical
    /// content is a no-op apart from filling a missing embedding.
    pub fn add_hyperedge(
        &mut self,
        description: &str,
        members: impl IntoIterator<Item = EntityId>,
        layer: Layer,
        embedding: Option<Vec<f64>>,
    ) -> Result<HyperedgeId> {
        self.require_unsealed()?;
        let description = collapse_whitespace(description);
        if description.is_empty() {
            return Err(Error::invalid("hyperedge description must be non-empty"));
        }
        let members: BTreeSet<EntityId> = members.into_iter().collect();
        if members.is_empty() {
            return Err(Error::invalid("hyperedge must have at least one member"));
        }
        if let Some(missing) = members.iter().find(|m| !self.entities.contains_key(m)) {
            return Err(Error::NotFound {
                kind: "entity",
                id: missing.to_string(),
            });
        }
        if let Some(v) = &embedding {
            self.check_dim(v)?;
        }
        let id = Self::hyperedge_id_for(&description, &members, layer);
        if let Some(existing) = self.hyperedges.get_mut(&id) {
            if existing.embedding.is_none() {
                existing.embedding = embedding;
            }
            return Ok(id);
        }
        for m in &members {
            self.incidence.entry(*m).or_default().insert(id);
        }
        self.hyperedges.insert(
            id,
            Hyperedge {
                id,
                description,
                layer,
                members,
                embedding,
            },
        );
        Ok(id)
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn hyperedge(&self, id: HyperedgeId) -> Option<&Hyperedge> {
        self.hyperedges.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn hyperedges(&self) -> impl Iterator<Item = &Hyperedge> {
        self.hyperedges.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn hyperedge_count(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        match node.kind() {
            ids::NodeKind::Entity(e) => self.entities.contains_key(&e),
            ids::NodeKind::Hyperedge(h) => self.hyperedges.contains_key(&h),
        }
    }

    pub fn incident_hyperedges(&self, entity: EntityId) -> Result<&BTreeSet<HyperedgeId>> {
        self.incidence.get(&entity).ok_or_else(|| Error::NotFound {
            kind: "entity",
            id: entity.to_string(),
        })
    }

    /// Bipartite neighbours of a node.
    pub fn neighbors(&self, node: NodeId) -> Result<Vec<NodeId>> {
        match node.kind() {
            ids::NodeKind::Entity(e) => Ok(self
                .incident_hyperedges(e)?
                .iter()
                .map(|&h| h.into())
                .collect()),
            ids::NodeKind::Hyperedge(h) => {
                let edge = self.hyperedges.get(&h).ok_or_else(|| Error::NotFound {
                    kind: "hyperedge",
                    id: h.to_string(),
                })?;
                Ok(edge.members.iter().map(|&e| e.into()).collect())
            }
        }
    }

    /// All nodes within `radius` bipartite hops of any seed.
    pub fn neighborhood(&self, seeds: &[NodeId], radius: usize) -> Result<Subgraph> {
        let mut out = Subgraph::default();
        let mut frontier = VecDeque::new();
        for &s in seeds {
            if !self.contains_node(s) {
                return Err(Error::NotFound {
                    kind: s.kind_name(),
                    id: s.to_string(),
                });
            }
            if insert_node(&mut out, s) {
                frontier.push_back((s, 0usize));
            }
        }
        while let Some((node, depth)) = frontier.pop_front() {
            if depth == radius {
                continue;
            }
            for next in self.neighbors(node)? {
                if insert_node(&mut out, next) {
                    frontier.push_back((next, depth + 1));
                }
            }
        }
        Ok(out)
    }
}

fn insert_node(sub: &mut Subgraph, node: NodeId) -> bool {
    match node.kind() {
        ids::NodeKind::Entity(e) => sub.entities.insert(e),
        ids::NodeKind::Hyperedge(h) => sub.hyperedges.insert(h),
    }
}
