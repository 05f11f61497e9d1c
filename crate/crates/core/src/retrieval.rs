//! Semantic retrieval over hyperedges and dictionary-based entity linking.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::hypergraph::{EntityId, HyperedgeId, HypergraphStore, Layer};
use crate::text::{match_form, token_spans, tokens};
use crate::{Error, Result};

/// Clinical roles the prompt can be tailored to.
pub const ROLES: &[&str] = &["doctor", "patient", "researcher", "intern", "nurse"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataQuery {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl MetadataQuery {
    pub fn new(text: impl Into<String>) -> Self {
        MetadataQuery {
            text: text.into(),
            role: None,
            domain: None,
        }
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = Some(role.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid("query text must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineScore {
    pub value: f64,
    /// One of the inputs was the zero vector; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_score(u: &[f64], v: &[f64]) -> Result<CosineScore> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(CosineScore {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(CosineScore {
        value: (dot / (nu * nv)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    cosine_score(u, v).map(|s| s.value)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerFilter {
    #[default]
    Knowledge,
    Case,
    Any,
}

impl LayerFilter {
    pub fn admits(self, layer: Layer) -> bool {
        match self {
            LayerFilter::Knowledge => layer == Layer::Knowledge,
            LayerFilter::Case => layer == Layer::Case,
            LayerFilter::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHyperedge {
    pub id: HyperedgeId,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Top-`k` hyperedges of the admitted layer by cosine to the query text.
pub fn retrieve_hyperedges(
    mq: &MetadataQuery,
    embedder: &dyn Embedder,
    store: &HypergraphStore,
    k: usize,
    layer: LayerFilter,
) -> Result<Vec<ScoredHyperedge>> {
    mq.validate()?;
    let q = embedder.embed(&mq.text).map_err(|source| Error::Embedding {
        context: "query text".into(),
        source,
    })?;
    retrieve_hyperedges_by_vector(&q, store, k, layer)
}

/// Exhaustive scan; descending score, ties by id ascending. Hyperedges with
/// no embedding are skipped.
pub fn retrieve_hyperedges_by_vector(
    query: &[f64],
    store: &HypergraphStore,
    k: usize,
    layer: LayerFilter,
) -> Result<Vec<ScoredHyperedge>> {
    store.require_sealed()?;
    if k == 0 {
        return Err(Error::invalid("hyperedge top-k must be at least 1"));
    }
    let candidates: Vec<_> = store
        .hyperedges()
        .filter(|h| layer.admits(h.layer))
        .filter_map(|h| h.embedding.as_deref().map(|e| (h.id, e)))
        .collect();
    let mut scored = candidates
        .par_iter()
        .map(|(id, e)| Ok((*id, cosine(query, e)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, score))| ScoredHyperedge { id, score, rank: i + 1 })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    /// Span equals the entity name up to letter case.
    ExactName,
    /// Same token sequence as the entity name but different punctuation or
    /// spacing, such as "spike and wave" for "spike-and-wave".
    AliasNormalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMatch {
    pub entity: EntityId,
    pub name: String,
    /// Byte range in the query text.
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub kind: MatchKind,
}

struct Candidate<'a> {
    tok_start: usize,
    tok_len: usize,
    entity: EntityId,
    name: &'a str,
    exact: bool,
}

type DictEntry<'a> = (Vec<String>, EntityId, &'a str);

/// Longest-match, case-insensitive dictionary linking of entity names.
///
/// Matching happens on alphanumeric token sequences. Overlaps are resolved
/// longest first, then leftmost; an exact-name match beats a normalized one
/// over the same span.
pub(crate) fn link_entities(store: &HypergraphStore, text: &str) -> Vec<EntityMatch> {
    let spans = token_spans(text);
    let qtoks: Vec<String> = spans.iter().map(|r| text[r.clone()].to_lowercase()).collect();
    // First token to (all tokens, id, name).
    let mut dictionary: HashMap<String, Vec<DictEntry>> = HashMap::new();
    for e in store.entities() {
        let toks = tokens(&e.name);
        if let Some(first) = toks.first() {
            dictionary.entry(first.clone()).or_default().push((toks, e.id, e.name.as_str()));
        }
    }
    let mut candidates = Vec::new();
    for (i, t) in qtoks.iter().enumerate() {
        let Some(entries) = dictionary.get(t) else { continue };
        for (toks, id, name) in entries {
            let end = i + toks.len();
            if end <= qtoks.len() && qtoks[i..end] == toks[..] {
                let surface = &text[spans[i].start..spans[end - 1].end];
                candidates.push(Candidate {
                    tok_start: i,
                    tok_len: toks.len(),
                    entity: *id,
                    name,
                    exact: surface.to_lowercase() == name.to_lowercase(),
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.tok_len
            .cmp(&a.tok_len)
            .then(a.tok_start.cmp(&b.tok_start))
            .then(b.exact.cmp(&a.exact))
            .then(a.entity.cmp(&b.entity))
    });
    let mut taken = vec![false; qtoks.len()];
    let mut out = Vec::new();
    for c in candidates {
        let range = c.tok_start..c.tok_start + c.tok_len;
        if taken[range.clone()].iter().any(|&t| t) {
            continue;
        }
        taken[range.clone()].iter_mut().for_each(|t| *t = true);
        let (start, end) = (spans[range.start].start, spans[range.end - 1].end);
        out.push(EntityMatch {
            entity: c.entity,
            name: c.name.to_string(),
            start,
            end,
            surface: text[start..end].to_string(),
            kind: if c.exact {
                MatchKind::ExactName
            } else {
                MatchKind::AliasNormalized
            },
        });
    }
    out.sort_by_key(|m| m.start);
    out
}

pub fn extract_query_entities(mq: &MetadataQuery, store: &HypergraphStore) -> Result<Vec<EntityMatch>> {
    store.require_sealed()?;
    Ok(link_entities(store, &mq.text))
}

/// Union of the hyperedges incident to every matched entity.
pub fn expand_entities(matches: &[EntityMatch], store: &HypergraphStore) -> Result<BTreeSet<HyperedgeId>> {
    store.require_sealed()?;
    let mut out = BTreeSet::new();
    for m in matches {
        out.extend(store.incident_hyperedges(m.entity)?.iter().copied());
    }
    Ok(out)
}

/// Whether `surface` and `name` agree after normalization (the linker invariant).
pub fn same_normalized(surface: &str, name: &str) -> bool {
    match_form(surface) == match_form(name)
}
