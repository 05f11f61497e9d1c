//! End-to-end query path: channel retrieval, fusion and generation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::eeg::{EegMatch, EegRecording};
use crate::embed::Embedder;
use crate::fusion::{fuse, render_context, EntityHits, FusedContext, RetrievalBundle};
use crate::generation::{generate, Provenance, GenerationClient};
use crate::hypergraph::HyperedgeId;
use crate::retrieval::{
    expand_entities, extract_query_entities, retrieve_hyperedges, EntityMatch, MetadataQuery,
};
use crate::stores::Stores;
use crate::{Error, Result};

/// Which retrieval channels are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Knowledge retrieval: entity linking and expansion.
    pub cl: bool,
    /// Hyperedge retrieval by cosine.
    pub il: bool,
    /// EEG similarity search.
    pub el: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        cl: true,
        il: true,
        el: true,
    };
    /// Question-only generation.
    pub const NONE: Ablation = Ablation {
        cl: false,
        il: false,
        el: false,
    };
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

/// The EEG side of a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EegQuery {
    /// A fresh recording, embedded with the database's options.
    Recording(EegRecording),
    /// A recording already in the database, queried by its stored embedding.
    StoredId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInput {
    pub query: MetadataQuery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eeg: Option<EegQuery>,
}

impl QueryInput {
    pub fn text(text: impl Into<String>) -> Self {
        QueryInput {
            query: MetadataQuery::new(text),
            eeg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperedgeTrace {
    pub id: HyperedgeId,
    pub score: f64,
    pub rank: usize,
    pub description: String,
}

/// What each channel returned, before fusion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTraces {
    pub eeg: Vec<EegMatch>,
    pub hyperedges: Vec<HyperedgeTrace>,
    pub entities: Vec<EntityMatch>,
    pub expansion: Vec<HyperedgeId>,
}

impl RetrievalTraces {
    pub fn is_empty(&self) -> bool {
        self.eeg.is_empty() && self.hyperedges.is_empty() && self.entities.is_empty() && self.expansion.is_empty()
    }
}

/// The query transcript printed by the CLI and returned by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutput {
    pub question: String,
    pub role: Option<String>,
    pub answer: String,
    pub provenance: Provenance,
    pub traces: RetrievalTraces,
    pub context: FusedContext,
    pub rendered_context: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QueryOutput {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

/// A configured pipeline over sealed stores. Cheap to clone and safe to
/// share between threads.
#[derive(Clone)]
pub struct Pipeline {
    stores: Arc<Stores>,
    embedder: Arc<dyn Embedder>,
    client: Arc<dyn GenerationClient>,
    config: PipelineConfig,
    prompt: Arc<str>,
}

impl Pipeline {
    pub fn new(
        stores: Arc<Stores>,
        embedder: Arc<dyn Embedder>,
        client: Arc<dyn GenerationClient>,
        config: PipelineConfig,
        prompt: &str,
    ) -> Result<Self> {
        config.validate()?;
        if !stores.is_sealed() {
            return Err(Error::NotSealed);
        }
        if embedder.dim() != stores.embedding_dim() {
            return Err(Error::Dimension {
                expected: stores.embedding_dim(),
                actual: embedder.dim(),
            });
        }
        Ok(Pipeline {
            stores,
            embedder,
            client,
            config,
            prompt: prompt.into(),
        })
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn with_client(&self, client: Arc<dyn GenerationClient>) -> Self {
        Pipeline {
            client,
            ..self.clone()
        }
    }

    pub fn with_ablation(&self, ablation: Ablation) -> Self {
        let mut config = self.config.clone();
        config.set_ablation(ablation);
        Pipeline { config, ..self.clone() }
    }

    /// Run the enabled channels and collect their outputs.
    pub fn retrieve(&self, input: &QueryInput) -> Result<(RetrievalBundle, Vec<String>)> {
        input.query.validate()?;
        let ablation = self.config.ablation();
        let graph = &self.stores.graph;
        let mut warnings = Vec::new();
        let mut bundle = RetrievalBundle::default();

        match (&input.eeg, ablation.el) {
            (Some(_), false) => {
                let msg = "EEG fusion is disabled; the supplied EEG input was ignored".to_string();
                log::warn!("{msg}");
                warnings.push(msg);
            }
            (Some(eeg), true) => bundle.eeg_matches = self.retrieve_eeg(eeg)?,
            (None, _) => {}
        }
        if ablation.il {
            bundle.hyperedge_hits = retrieve_hyperedges(
                &input.query,
                self.embedder.as_ref(),
                graph,
                self.config.hyperedge_top_k,
                self.config.hyperedge_layer,
            )?;
        }
        if ablation.cl {
            let matches = extract_query_entities(&input.query, graph)?;
            let expansion = expand_entities(&matches, graph)?;
            bundle.entity_hits = EntityHits { matches, expansion };
        }
        Ok((bundle, warnings))
    }

    fn retrieve_eeg(&self, eeg: &EegQuery) -> Result<Vec<EegMatch>> {
        let db = &self.stores.eeg;
        let opts = self.config.dtw_options();
        let k = self.config.eeg_top_k;
        match eeg {
            EegQuery::Recording(rec) => db.retrieve_eeg(rec, k, &opts),
            EegQuery::StoredId(id) => {
                let stored = db.get(id).ok_or_else(|| Error::NotFound {
                    kind: "recording",
                    id: id.clone(),
                })?;
                db.retrieve_by_embedding(&stored.embedding, k, &opts)
            }
        }
    }

    pub fn query(&self, input: &QueryInput) -> Result<QueryOutput> {
        let (bundle, warnings) = self.retrieve(input)?;
        let context = fuse(&bundle, &self.stores, self.config.fuse_options())?;
        let answer = generate(&input.query, &context, self.client.as_ref(), &self.prompt)?;
        let traces = RetrievalTraces {
            eeg: bundle.eeg_matches,
            hyperedges: bundle
                .hyperedge_hits
                .iter()
                .map(|h| HyperedgeTrace {
                    id: h.id,
                    score: h.score,
                    rank: h.rank,
                    description: self.stores.graph.hyperedge(h.id).map(|e| e.description.clone()).unwrap_or_default(),
                })
                .collect(),
            entities: bundle.entity_hits.matches,
            expansion: bundle.entity_hits.expansion.into_iter().collect(),
        };
        Ok(QueryOutput {
            question: input.query.text.clone(),
            role: input.query.role.clone(),
            answer: answer.text,
            provenance: answer.provenance,
            traces,
            rendered_context: render_context(&context),
            context,
            warnings,
        })
    }

    /// Answer independent queries concurrently, with at most `max_in_flight`
    /// in progress. Results keep the input order.
    pub fn query_batch(&self, inputs: &[QueryInput]) -> Vec<Result<QueryOutput>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.max_in_flight)
            .build()
            .expect("thread pool");
        pool.install(|| inputs.par_iter().map(|i| self.query(i)).collect())
    }
}

/// Question-only generation with no retrieval at all.
pub fn naive_generation(q: &MetadataQuery, client: &dyn GenerationClient, prompt: &str, opts: crate::fusion::FuseOptions) -> Result<QueryOutput> {
    let context = FusedContext::empty(opts);
    let answer = generate(q, &context, client, prompt)?;
    Ok(QueryOutput {
        question: q.text.clone(),
        role: q.role.clone(),
        answer: answer.text,
        provenance: answer.provenance,
        traces: RetrievalTraces::default(),
        rendered_context: render_context(&context),
        context,
        warnings: Vec::new(),
    })
}
