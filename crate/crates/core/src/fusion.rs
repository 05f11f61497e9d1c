//! Structure-aware fusion of the three retrieval channels into one context
//! subgraph, and its deterministic text rendering.
//!
//! Seeds are the retrieved hyperedges, the entity-linking hits with their
//! incident hyperedges, and the patient cases behind each EEG match (their
//! case hyperedges and the entities their attributes mention). Every hyperedge within `radius` hops of a seed is a
//! candidate; candidates are ranked by how many seeds they touch, then by
//! retrieval score, then by id, and the first `budget` are kept along with all
//! of their member entities.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cases::{case_hyperedge, case_members, CaseHash, PatientCase};
use crate::eeg::EegMatch;
use crate::hash::fnv1a64_hex;
use crate::hypergraph::{EntityId, HyperedgeId, Layer, NodeId};
use crate::retrieval::{EntityMatch, ScoredHyperedge};
use crate::stores::Stores;
use crate::{Error, Result};

pub const DEFAULT_RADIUS: usize = 1;
pub const DEFAULT_BUDGET: usize = 32;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityHits {
    pub matches: Vec<EntityMatch>,
    pub expansion: BTreeSet<HyperedgeId>,
}

/// Outputs of the EEG, hyperedge and entity retrieval channels. A disabled
/// channel is simply empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBundle {
    pub eeg_matches: Vec<EegMatch>,
    pub hyperedge_hits: Vec<ScoredHyperedge>,
    pub entity_hits: EntityHits,
}

impl RetrievalBundle {
    pub fn is_empty(&self) -> bool {
        self.eeg_matches.is_empty()
            && self.hyperedge_hits.is_empty()
            && self.entity_hits.matches.is_empty()
            && self.entity_hits.expansion.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuseOptions {
    pub radius: usize,
    pub budget: usize,
}

impl Default for FuseOptions {
    fn default() -> Self {
        FuseOptions {
            radius: DEFAULT_RADIUS,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InclusionReason {
    /// Returned by cosine hyperedge retrieval.
    Retrieved,
    /// Incident to a linked query entity.
    EntityExpansion,
    /// Mirrors a patient case linked from an EEG match.
    CaseLink,
    /// Reached only through the bounded neighbourhood.
    Closure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHyperedge {
    pub id: HyperedgeId,
    pub description: String,
    pub layer: Layer,
    pub reason: InclusionReason,
    /// Number of distinct seed nodes this hyperedge is or touches.
    pub connectivity: usize,
    pub score: Option<f64>,
    pub members: Vec<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedEntity {
    pub id: EntityId,
    pub name: String,
    pub etype: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub h: CaseHash,
    pub attributes: String,
    pub synthetic: bool,
    /// Recording whose match brought this case in.
    pub via_recording: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegSummary {
    pub recording_id: String,
    pub patient_hash: Option<String>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetInfo {
    pub radius: usize,
    pub cap: usize,
    pub candidates: usize,
    pub truncated: bool,
    /// Directly retrieved hyperedges dropped by the cap.
    pub evicted: Vec<HyperedgeId>,
}

/// The fused context subgraph handed to generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedContext {
    pub hyperedges: Vec<FusedHyperedge>,
    pub entities: Vec<FusedEntity>,
    pub cases: Vec<CaseSummary>,
    pub eeg_summaries: Vec<EegSummary>,
    pub budget: BudgetInfo,
}

impl FusedContext {
    pub fn empty(opts: FuseOptions) -> Self {
        FusedContext {
            hyperedges: Vec::new(),
            entities: Vec::new(),
            cases: Vec::new(),
            eeg_summaries: Vec::new(),
            budget: BudgetInfo {
                radius: opts.radius,
                cap: opts.budget,
                candidates: 0,
                truncated: false,
                evicted: Vec::new(),
            },
        }
    }

    /// True when nothing was retrieved to ground an answer.
    pub fn is_empty(&self) -> bool {
        self.hyperedges.is_empty() && self.cases.is_empty() && self.eeg_summaries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("context serializes")
    }
}

fn referential(kind: &'static str, id: impl ToString) -> Error {
    Error::NotFound {
        kind,
        id: id.to_string(),
    }
}

/// Cases behind an EEG match: the patient's real case plus any pseudo-cases
/// derived from it.
fn linked_cases<'a>(stores: &'a Stores, m: &EegMatch) -> Vec<&'a PatientCase> {
    let real = m
        .patient_hash
        .as_deref()
        .and_then(|h| stores.cases.get(&CaseHash::from(h)))
        .or_else(|| stores.cases.case_for_recording(&m.recording_id));
    let Some(real) = real else { return Vec::new() };
    let mut out = vec![real];
    out.extend(stores.cases.pseudo_cases_of(&real.h));
    out
}

pub fn fuse(bundle: &RetrievalBundle, stores: &Stores, opts: FuseOptions) -> Result<FusedContext> {
    if opts.budget == 0 {
        return Err(Error::invalid("closure budget must be at least 1"));
    }
    let graph = &stores.graph;

    let mut scores: BTreeMap<HyperedgeId, f64> = BTreeMap::new();
    for hit in &bundle.hyperedge_hits {
        if graph.hyperedge(hit.id).is_none() {
            return Err(referential("hyperedge", hit.id));
        }
        scores.insert(hit.id, hit.score);
    }
    for id in &bundle.entity_hits.expansion {
        if graph.hyperedge(*id).is_none() {
            return Err(referential("hyperedge", id));
        }
    }
    let mut seed_entities: BTreeSet<EntityId> = BTreeSet::new();
    for m in &bundle.entity_hits.matches {
        if graph.entity(m.entity).is_none() {
            return Err(referential("entity", m.entity));
        }
        seed_entities.insert(m.entity);
    }

    let mut cases = Vec::new();
    let mut seen_cases = BTreeSet::new();
    let mut eeg_summaries = Vec::new();
    let mut case_edges: BTreeSet<HyperedgeId> = BTreeSet::new();
    for m in &bundle.eeg_matches {
        if !stores.eeg.contains(&m.recording_id) {
            return Err(referential("recording", &m.recording_id));
        }
        let linked = linked_cases(stores, m);
        let patient_hash = m
            .patient_hash
            .clone()
            .or_else(|| linked.first().map(|c| c.h.to_string()));
        eeg_summaries.push(EegSummary {
            recording_id: m.recording_id.clone(),
            patient_hash,
            distance: m.distance,
        });
        for case in linked {
            if !seen_cases.insert(case.h.clone()) {
                continue;
            }
            seed_entities.extend(case_members(case, graph));
            case_edges.extend(case_hyperedge(case, graph));
            cases.push(CaseSummary {
                h: case.h.clone(),
                attributes: case.e.render(),
                synthetic: case.synthetic,
                via_recording: m.recording_id.clone(),
            });
        }
    }

    let seed_edges: BTreeSet<HyperedgeId> = scores
        .keys()
        .chain(bundle.entity_hits.expansion.iter())
        .chain(case_edges.iter())
        .copied()
        .collect();
    let seeds: Vec<NodeId> = seed_entities
        .iter()
        .map(|&e| e.into())
        .chain(seed_edges.iter().map(|&h| h.into()))
        .collect();
    let hood = graph.neighborhood(&seeds, opts.radius)?;

    let mut ranked: Vec<FusedHyperedge> = hood
        .hyperedges
        .iter()
        .map(|&id| {
            let edge = graph.hyperedge(id).expect("neighbourhood yields stored hyperedges");
            let connectivity = edge.members.intersection(&seed_entities).count() + usize::from(seed_edges.contains(&id));
            let reason = if scores.contains_key(&id) {
                InclusionReason::Retrieved
            } else if bundle.entity_hits.expansion.contains(&id) {
                InclusionReason::EntityExpansion
            } else if case_edges.contains(&id) {
                InclusionReason::CaseLink
            } else {
                InclusionReason::Closure
            };
            FusedHyperedge {
                id,
                description: edge.description.clone(),
                layer: edge.layer,
                reason,
                connectivity,
                score: scores.get(&id).copied(),
                members: edge.members.iter().copied().collect(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.connectivity
            .cmp(&a.connectivity)
            .then_with(|| match (a.score, b.score) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then(a.id.cmp(&b.id))
    });

    let candidates = ranked.len();
    let evicted: Vec<HyperedgeId> = ranked
        .iter()
        .skip(opts.budget)
        .filter(|h| h.reason != InclusionReason::Closure)
        .map(|h| h.id)
        .collect();
    ranked.truncate(opts.budget);

    let mut entity_ids = seed_entities;
    for h in &ranked {
        entity_ids.extend(h.members.iter().copied());
    }
    let entities = entity_ids
        .into_iter()
        .map(|id| {
            let e = graph.entity(id).expect("members are stored entities");
            FusedEntity {
                id,
                name: e.name.clone(),
                etype: e.etype.clone(),
                definition: e.definition.clone(),
            }
        })
        .collect();

    Ok(FusedContext {
        hyperedges: ranked,
        entities,
        cases,
        eeg_summaries,
        budget: BudgetInfo {
            radius: opts.radius,
            cap: opts.budget,
            candidates,
            truncated: candidates > opts.budget,
            evicted,
        },
    })
}

pub const KNOWLEDGE_HEADER: &str = "[Knowledge]";
pub const CASES_HEADER: &str = "[Similar Cases]";
pub const EEG_HEADER: &str = "[EEG Matches]";
const NONE: &str = "(none)";

/// Fixed-order text rendering of a fused context.
pub fn render_context(ctx: &FusedContext) -> String {
    let mut out = String::new();
    out.push_str(KNOWLEDGE_HEADER);
    out.push('\n');
    if ctx.hyperedges.is_empty() {
        out.push_str(NONE);
        out.push('\n');
    }
    for (i, h) in ctx.hyperedges.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, h.description));
    }
    out.push('\n');
    out.push_str(CASES_HEADER);
    out.push('\n');
    if ctx.cases.is_empty() {
        out.push_str(NONE);
        out.push('\n');
    }
    for c in &ctx.cases {
        let tag = if c.synthetic { " (pseudo-case)" } else { "" };
        out.push_str(&format!("- case {}{tag}: {}\n", c.h, c.attributes));
    }
    out.push('\n');
    out.push_str(EEG_HEADER);
    out.push('\n');
    if ctx.eeg_summaries.is_empty() {
        out.push_str(NONE);
        out.push('\n');
    }
    for s in &ctx.eeg_summaries {
        out.push_str(&format!(
            "- recording {} | patient {} | DTW {:.4}\n",
            s.recording_id,
            s.patient_hash.as_deref().unwrap_or("unknown"),
            s.distance
        ));
    }
    out
}

/// Provenance hash of a rendered context.
pub fn context_hash(rendered: &str) -> String {
    fnv1a64_hex(rendered.as_bytes())
}
