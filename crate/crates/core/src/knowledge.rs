//! Knowledge layer: turns documents into knowledge hyperedges.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::generation::ChatBackend;
use crate::hypergraph::{HypergraphStore, Layer};
use crate::text::{collapse_whitespace, entity_key};
use crate::{jsonl, Error, Result};

/// Versioned prompt handed to remote extractors. Placeholders: `{title}`,
/// `{source}`, `{body}`.
pub const EXTRACTION_PROMPT: &str = include_str!("../assets/extraction_prompt.v1.txt");
pub const EXTRACTION_PROMPT_VERSION: &str = "extraction_prompt.v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub source: String,
}

impl Document {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid("document id must be non-empty"));
        }
        if self.body.trim().is_empty() {
            return Err(Error::invalid(format!("document `{}` has an empty body", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub name: String,
    #[serde(default)]
    pub etype: String,
    #[serde(default)]
    pub definition: String,
}

impl ExtractedEntity {
    pub fn named(name: &str) -> Self {
        ExtractedEntity {
            name: name.to_string(),
            etype: String::new(),
            definition: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub description: String,
    pub entities: Vec<ExtractedEntity>,
}

/// Extractor output schema. Remote extractors must answer with this JSON.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub facts: Vec<Fact>,
    /// Facts removed by validation.
    #[serde(skip)]
    pub dropped: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed extractor output: {0}")]
    Malformed(String),
}

impl ExtractError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ExtractError::Transport(_))
    }
}

pub trait Extractor: Send + Sync {
    fn extract(&self, doc: &Document, prompt: &str) -> std::result::Result<ExtractionResult, ExtractError>;
}

/// Validate an extractor's facts: entity names are whitespace-normalized,
/// unnamed entities and facts with no description or no entities are dropped.
pub fn extract_hyperedges(doc: &Document, extractor: &dyn Extractor, prompt: &str) -> Result<ExtractionResult> {
    doc.validate()?;
    let raw = extractor.extract(doc, prompt).map_err(|source| Error::Extraction {
        doc_id: doc.id.clone(),
        source,
    })?;
    let mut out = ExtractionResult::default();
    for (i, fact) in raw.facts.into_iter().enumerate() {
        let description = collapse_whitespace(&fact.description);
        let entities: Vec<ExtractedEntity> = fact
            .entities
            .into_iter()
            .map(|e| ExtractedEntity {
                name: collapse_whitespace(&e.name),
                etype: e.etype.trim().to_string(),
                definition: collapse_whitespace(&e.definition),
            })
            .filter(|e| !e.name.is_empty())
            .collect();
        if description.is_empty() || entities.is_empty() {
            warn!("document `{}`: dropping fact {i} (no description or no entities)", doc.id);
            out.dropped += 1;
            continue;
        }
        out.facts.push(Fact { description, entities });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub entities_added: usize,
    pub entities_merged: usize,
    pub hyperedges_added: usize,
    pub hyperedges_merged: usize,
    pub facts_dropped: usize,
}

struct PreparedDoc {
    doc_id: String,
    facts: Vec<(Fact, Vec<f64>, Vec<Vec<f64>>)>,
    dropped: usize,
}

fn entity_text(e: &ExtractedEntity) -> String {
    if e.definition.is_empty() {
        e.name.clone()
    } else {
        format!("{}: {}", e.name, e.definition)
    }
}

fn embed(embedder: &dyn Embedder, text: &str, context: impl FnOnce() -> String) -> Result<Vec<f64>> {
    embedder.embed(text).map_err(|source| Error::Embedding {
        context: context(),
        source,
    })
}

/// Build (or extend) the knowledge hypergraph from `docs`.
///
/// Extraction and embedding run in parallel; insertion happens afterwards in
/// (document id, fact index) order, so the resulting store does not depend on
/// scheduling.
pub fn build_kgh(
    docs: &[Document],
    extractor: &dyn Extractor,
    embedder: &dyn Embedder,
    store: &mut HypergraphStore,
    prompt: &str,
) -> Result<IngestReport> {
    if store.is_sealed() {
        return Err(Error::Sealed);
    }
    if embedder.dim() != store.embedding_dim() {
        return Err(Error::Dimension {
            expected: store.embedding_dim(),
            actual: embedder.dim(),
        });
    }
    let mut prepared: Vec<PreparedDoc> = docs
        .par_iter()
        .map(|doc| {
            let extraction = extract_hyperedges(doc, extractor, prompt)?;
            let facts = extraction
                .facts
                .into_iter()
                .enumerate()
                .map(|(i, fact)| {
                    let edge_vec = embed(embedder, &fact.description, || format!("document `{}` fact {i}", doc.id))?;
                    let entity_vecs = fact
                        .entities
                        .iter()
                        .map(|e| embed(embedder, &entity_text(e), || format!("document `{}` entity `{}`", doc.id, e.name)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((fact, edge_vec, entity_vecs))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedDoc {
                doc_id: doc.id.clone(),
                facts,
                dropped: extraction.dropped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    prepared.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut report = IngestReport {
        documents: docs.len(),
        ..Default::default()
    };
    for doc in prepared {
        report.facts_dropped += doc.dropped;
        for (fact, edge_vec, entity_vecs) in doc.facts {
            let mut members = Vec::with_capacity(fact.entities.len());
            for (e, v) in fact.entities.iter().zip(entity_vecs) {
                let id = HypergraphStore::entity_id_for(&e.name);
                if store.entity(id).is_some() {
                    report.entities_merged += 1;
                } else {
                    report.entities_added += 1;
                }
                members.push(store.add_entity(&e.name, &e.etype, &e.definition, Some(v))?);
            }
            let before = store.hyperedge_count();
            store.add_hyperedge(&fact.description, members, Layer::Knowledge, Some(edge_vec))?;
            if store.hyperedge_count() > before {
                report.hyperedges_added += 1;
            } else {
                report.hyperedges_merged += 1;
            }
        }
    }
    Ok(report)
}

/// One row of the `docs.facts.jsonl` sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarFact {
    pub doc_id: String,
    pub description: String,
    pub entities: Vec<SidecarEntity>,
}

/// Sidecar entities may be a bare name or a full entity object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SidecarEntity {
    Name(String),
    Full(ExtractedEntity),
}

impl From<SidecarEntity> for ExtractedEntity {
    fn from(e: SidecarEntity) -> Self {
        match e {
            SidecarEntity::Name(n) => ExtractedEntity::named(&n),
            SidecarEntity::Full(e) => e,
        }
    }
}

/// Deterministic offline extractor.
///
/// Documents with sidecar annotations yield exactly those facts. Otherwise
/// each sentence mentioning at least two capitalized terms (runs of
/// capitalized words such as "Lennox Gastaut" or acronyms such as "EEG")
/// becomes one fact over those terms.
#[derive(Debug, Clone, Default)]
pub struct RuleExtractor {
    sidecar: BTreeMap<String, Vec<Fact>>,
}

const LEADING_STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "these", "that", "those", "in", "on", "at", "for", "during", "when", "while", "it",
    "its", "after", "before", "with", "most", "many", "some", "each", "both",
];

impl RuleExtractor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sidecar(rows: Vec<SidecarFact>) -> Self {
        let mut sidecar: BTreeMap<String, Vec<Fact>> = BTreeMap::new();
        for row in rows {
            sidecar.entry(row.doc_id).or_default().push(Fact {
                description: row.description,
                entities: row.entities.into_iter().map(Into::into).collect(),
            });
        }
        RuleExtractor { sidecar }
    }

    pub fn from_sidecar_file(path: &Path) -> Result<Self> {
        Ok(Self::with_sidecar(jsonl::read(path)?))
    }

    fn capitalized_terms(sentence: &str) -> Vec<String> {
        let mut terms: Vec<String> = Vec::new();
        let mut run: Vec<&str> = Vec::new();
        let flush = |run: &mut Vec<&str>, terms: &mut Vec<String>| {
            if !run.is_empty() {
                let term = run.join(" ");
                if !terms.iter().any(|t| entity_key(t) == entity_key(&term)) {
                    terms.push(term);
                }
                run.clear();
            }
        };
        for (i, raw) in sentence.split_whitespace().enumerate() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let capitalized = word.chars().next().is_some_and(char::is_uppercase);
            let stop = i == 0 && LEADING_STOPWORDS.contains(&word.to_lowercase().as_str());
            if capitalized && !stop {
                run.push(word);
            } else {
                flush(&mut run, &mut terms);
            }
            // Punctuation after a word ends the current term.
            if raw.ends_with(|c: char| !c.is_alphanumeric()) {
                flush(&mut run, &mut terms);
            }
        }
        flush(&mut run, &mut terms);
        terms
    }

    fn sentences(body: &str) -> Vec<&str> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = body.as_bytes();
        for (i, c) in body.char_indices() {
            if matches!(c, '.' | '!' | '?') {
                let end = i + 1;
                if end == body.len() || bytes[end].is_ascii_whitespace() {
                    out.push(body[start..end].trim());
                    start = end;
                }
            }
        }
        if start < body.len() {
            out.push(body[start..].trim());
        }
        out.into_iter().filter(|s| !s.is_empty()).collect()
    }
}

impl Extractor for RuleExtractor {
    fn extract(&self, doc: &Document, _prompt: &str) -> std::result::Result<ExtractionResult, ExtractError> {
        if let Some(facts) = self.sidecar.get(&doc.id) {
            return Ok(ExtractionResult {
                facts: facts.clone(),
                dropped: 0,
            });
        }
        let facts = Self::sentences(&doc.body)
            .into_iter()
            .filter_map(|s| {
                let terms = Self::capitalized_terms(s);
                (terms.len() >= 2).then(|| Fact {
                    description: s.to_string(),
                    entities: terms
                        .iter()
                        .map(|t| ExtractedEntity {
                            name: t.clone(),
                            etype: "concept".into(),
                            definition: String::new(),
                        })
                        .collect(),
                })
            })
            .collect();
        Ok(ExtractionResult { facts, dropped: 0 })
    }
}

/// Extractor backed by a chat-completion model. Output is parsed as
/// [`ExtractionResult`] JSON; a fenced code block around it is tolerated.
pub struct LlmExtractor<B> {
    backend: B,
}

impl<B: ChatBackend> LlmExtractor<B> {
    pub fn new(backend: B) -> Self {
        LlmExtractor { backend }
    }
}

pub fn render_extraction_prompt(template: &str, doc: &Document) -> String {
    template
        .replace("{title}", &doc.title)
        .replace("{source}", &doc.source)
        .replace("{body}", &doc.body)
}

fn strip_code_fence(s: &str) -> &str {
    let s = s.trim();
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

impl<B: ChatBackend> Extractor for LlmExtractor<B> {
    fn extract(&self, doc: &Document, prompt: &str) -> std::result::Result<ExtractionResult, ExtractError> {
        let user = render_extraction_prompt(prompt, doc);
        let reply = self
            .backend
            .chat("You are a precise clinical information extraction system.", &user)
            .map_err(|e| ExtractError::Transport(e.to_string()))?;
        serde_json::from_str(strip_code_fence(&reply)).map_err(|e| ExtractError::Malformed(e.to_string()))
    }
}
