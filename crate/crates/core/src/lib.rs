//! Three-layer hypergraph retrieval-augmented generation for EEG clinical
//! question answering.
//!
//! Knowledge extracted from documents lives in a bipartite hypergraph of
//! entities and n-ary fact hyperedges. Patient records become hashed case
//! tuples mirrored into the same graph, and EEG recordings are stored as PAA
//! embeddings searched by dynamic time warping. A query retrieves from all
//! three layers, [`fusion::fuse`] closes the hits into one bounded subgraph,
//! and a [`generation::GenerationClient`] answers over its rendering.
//!
//! ```
//! use std::sync::Arc;
//! use eegrag::{HashingEmbedder, HypergraphStore, Layer, MockClient, Pipeline, PipelineConfig, QueryInput, Stores};
//! use eegrag::embed::Embedder;
//!
//! let embedder = HashingEmbedder::new(64);
//! let mut stores = Stores::empty(64, Default::default());
//! let g = &mut stores.graph;
//! let spikes = g.add_entity("3 Hz spike-and-wave", "waveform", "", None)?;
//! let absence = g.add_entity("absence epilepsy", "diagnosis", "", None)?;
//! let fact = "3 Hz spike-and-wave discharges are the hallmark of absence epilepsy";
//! g.add_hyperedge(fact, [spikes, absence], Layer::Knowledge, Some(embedder.embed(fact).unwrap()))?;
//! stores.seal();
//!
//! let config = PipelineConfig { embedding_dim: 64, ..Default::default() };
//! let pipeline = Pipeline::new(Arc::new(stores), Arc::new(embedder), Arc::new(MockClient), config, eegrag::GENERATION_PROMPT)?;
//! let out = pipeline.query(&QueryInput::text("What does 3 Hz spike-and-wave suggest?"))?;
//! assert_eq!(out.answer, fact);
//! assert!(out.rendered_context.starts_with("[Knowledge]\n1. 3 Hz spike-and-wave"));
//! # Ok::<(), eegrag::Error>(())
//! ```

pub mod cases;
pub mod config;
pub mod eeg;
pub mod embed;
mod error;
pub mod eval;
pub mod fusion;
pub mod generation;
pub mod hash;
pub mod hypergraph;
pub mod jsonl;
pub mod knowledge;
pub mod pipeline;
pub mod retrieval;
pub mod stores;
pub mod text;
pub mod workspace;

pub use cases::{CaseHash, CaseStore, PatientCase, PatientRecord};
pub use config::{ClientKind, PipelineConfig};
pub use eeg::{dtw, paa, DtwMode, DtwOptions, EegDatabase, EegMatch, EegRecording};
pub use embed::{Embedder, HashingEmbedder};
pub use error::{Error, Result};
pub use eval::{EvalReport, QaExample};
pub use fusion::{fuse, render_context, FusedContext, RetrievalBundle};
pub use generation::{GenerationClient, MockClient, ScriptedClient, GENERATION_PROMPT};
pub use hypergraph::{EntityId, HyperedgeId, HypergraphStore, Layer, NodeId};
pub use pipeline::{Ablation, Pipeline, QueryInput, QueryOutput};
pub use retrieval::MetadataQuery;
pub use stores::Stores;
pub use workspace::Workspace;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/hypergraph.md")]
mod book_hypergraph {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/knowledge.md")]
mod book_knowledge {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cases.md")]
mod book_cases {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/eeg.md")]
mod book_eeg {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/retrieval.md")]
mod book_retrieval {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/fusion.md")]
mod book_fusion {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluation.md")]
mod book_evaluation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
