use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, Hyperedge, HypergraphStore};
use crate::{jsonl, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const HYPEREDGES_FILE: &str = "hyperedges.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format_version: u32,
    pub embedding_dim: usize,
    pub entity_count: usize,
    pub hyperedge_count: usize,
}

impl HypergraphStore {
    pub fn meta(&self) -> StoreMeta {
        StoreMeta {
            format_version: FORMAT_VERSION,
            embedding_dim: self.embedding_dim,
            entity_count: self.entities.len(),
            hyperedge_count: self.hyperedges.len(),
        }
    }

    /// Write `entities.jsonl`, `hyperedges.jsonl` and `meta.json` into `dir`.
    /// Rows are emitted in id order so equal stores serialize identically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(ENTITIES_FILE), self.entities.values())?;
        jsonl::write(&dir.join(HYPEREDGES_FILE), self.hyperedges.values())?;
        jsonl::write_json(&dir.join(META_FILE), &self.meta())
    }

    /// Load a store written by [`save`](Self::save). The result is sealed.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        if !meta_path.exists() {
            return Err(Error::StoreMissing(dir.to_path_buf()));
        }
        let meta: StoreMeta = jsonl::read_json(&meta_path)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported store format version {} (expected {FORMAT_VERSION})",
                meta.format_version
            )));
        }
        let mut store = HypergraphStore::new(meta.embedding_dim);
        let entities: Vec<Entity> = jsonl::read(&dir.join(ENTITIES_FILE))?;
        for e in entities {
            if let Some(v) = &e.embedding {
                store.check_dim(v)?;
            }
            store.incidence.insert(e.id, Default::default());
            store.entities.insert(e.id, e);
        }
        let edges: Vec<Hyperedge> = jsonl::read(&dir.join(HYPEREDGES_FILE))?;
        for h in edges {
            if h.members.is_empty() {
                return Err(Error::invalid(format!("hyperedge {} has no members", h.id)));
            }
            for m in &h.members {
                store
                    .incidence
                    .get_mut(m)
                    .ok_or_else(|| Error::NotFound {
                        kind: "entity",
                        id: m.to_string(),
                    })?
                    .insert(h.id);
            }
            if let Some(v) = &h.embedding {
                store.check_dim(v)?;
            }
            store.hyperedges.insert(h.id, h);
        }
        if store.entities.len() != meta.entity_count || store.hyperedges.len() != meta.hyperedge_count {
            return Err(Error::invalid(format!(
                "{}: counts in meta.json do not match the stored rows",
                dir.display()
            )));
        }
        store.seal();
        Ok(store)
    }
}
