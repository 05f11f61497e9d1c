//! The three stores together, persisted side by side in one directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cases::CaseStore;
use crate::eeg::{EegDatabase, EegEmbedOptions};
use crate::hypergraph::{HypergraphStore, Layer};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Stores {
    pub graph: HypergraphStore,
    pub cases: CaseStore,
    pub eeg: EegDatabase,
}

/// Counts reported by `/healthz` and after ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub entities: usize,
    pub knowledge_hyperedges: usize,
    pub case_hyperedges: usize,
    pub cases: usize,
    pub synthetic_cases: usize,
    pub recordings: usize,
}

impl Stores {
    pub fn empty(embedding_dim: usize, eeg: EegEmbedOptions) -> Self {
        Stores {
            graph: HypergraphStore::new(embedding_dim),
            cases: CaseStore::new(embedding_dim),
            eeg: EegDatabase::new(eeg),
        }
    }

    pub fn seal(&mut self) {
        self.graph.seal();
        self.cases.seal();
        self.eeg.seal();
    }

    pub fn is_sealed(&self) -> bool {
        self.graph.is_sealed() && self.cases.is_sealed() && self.eeg.is_sealed()
    }

    pub fn into_build_phase(self) -> Self {
        Stores {
            graph: self.graph.into_build_phase(),
            cases: self.cases.into_build_phase(),
            eeg: self.eeg.into_build_phase(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.graph.embedding_dim()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.graph.save(dir)?;
        self.cases.save(dir)?;
        self.eeg.save(dir)
    }

    /// Load a sealed store set. The hypergraph must exist; case and EEG
    /// stores default to empty, the latter with `eeg` options.
    pub fn load(dir: &Path, eeg: EegEmbedOptions) -> Result<Self> {
        let graph = HypergraphStore::load(dir)?;
        let cases = CaseStore::load(dir, graph.embedding_dim())?;
        let eeg = match EegDatabase::load(dir)? {
            Some(db) => db,
            None => {
                let mut db = EegDatabase::new(eeg);
                db.seal();
                db
            }
        };
        Ok(Stores { graph, cases, eeg })
    }

    /// Existing stores reopened for building, or fresh empty ones.
    pub fn open_for_build(dir: &Path, embedding_dim: usize, eeg: EegEmbedOptions) -> Result<Self> {
        match Stores::load(dir, eeg) {
            Ok(s) => {
                if s.embedding_dim() != embedding_dim {
                    return Err(Error::Config(format!(
                        "store at {} uses embedding_dim {} but the configuration says {embedding_dim}",
                        dir.display(),
                        s.embedding_dim()
                    )));
                }
                Ok(s.into_build_phase())
            }
            Err(Error::StoreMissing(_)) => Ok(Stores::empty(embedding_dim, eeg)),
            Err(e) => Err(e),
        }
    }

    pub fn stats(&self) -> StoreStats {
        let case_hyperedges = self.graph.hyperedges().filter(|h| h.layer == Layer::Case).count();
        StoreStats {
            entities: self.graph.entity_count(),
            knowledge_hyperedges: self.graph.hyperedge_count() - case_hyperedges,
            case_hyperedges,
            cases: self.cases.len(),
            synthetic_cases: self.cases.len() - self.cases.real_count(),
            recordings: self.eeg.len(),
        }
    }
}
