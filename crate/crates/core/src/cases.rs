//! Patient-case layer.
//!
//! Records are serialized into a canonical attribute tuple, addressed by the
//! FNV-1a hash of its rendering and embedded through the shared text encoder.
//! Incomplete records can be augmented with pseudo-cases that borrow missing
//! attributes from their nearest neighbour.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::embed::Embedder;
use crate::hash::fnv1a64_hex;
use crate::hypergraph::{EntityId, HyperedgeId, HypergraphStore, Layer};
use crate::retrieval::{cosine, link_entities};
use crate::text::collapse_whitespace;
use crate::{jsonl, Error, Result};

pub const SYNTHETIC_SUFFIX: &str = "-syn";
pub const CASES_FILE: &str = "cases.jsonl";
pub const DEFAULT_TAU: f64 = 0.80;

/// Share of cases that must carry an attribute before its absence counts as missing.
pub const PREVALENCE_THRESHOLD: f64 = 0.5;

/// Raw patient record: free attribute keys plus optional links to EEG recordings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(try_from = "Map<String, Value>")]
pub struct PatientRecord {
    pub attributes: BTreeMap<String, String>,
    pub eeg_refs: Vec<String>,
}

impl PatientRecord {
    pub fn new<K: Into<String>, V: Into<String>>(attrs: impl IntoIterator<Item = (K, V)>) -> Self {
        PatientRecord {
            attributes: attrs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            eeg_refs: Vec::new(),
        }
    }
}

fn scalar_text(key: &str, v: &Value) -> std::result::Result<Option<String>, String> {
    Ok(match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts = items
                .iter()
                .map(|i| scalar_text(key, i))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Some(parts.into_iter().flatten().collect::<Vec<_>>().join(", "))
        }
        Value::Object(_) => return Err(format!("attribute `{key}` must be a scalar or a list")),
    })
}

impl TryFrom<Map<String, Value>> for PatientRecord {
    type Error = String;

    fn try_from(map: Map<String, Value>) -> std::result::Result<Self, String> {
        let mut rec = PatientRecord::default();
        for (k, v) in map {
            if k == "eeg_refs" {
                rec.eeg_refs = serde_json::from_value(v).map_err(|e| format!("eeg_refs: {e}"))?;
                continue;
            }
            if let Some(text) = scalar_text(&k, &v)? {
                rec.attributes.insert(k, text);
            }
        }
        Ok(rec)
    }
}

/// Canonical attribute tuple: names trimmed, values whitespace-collapsed,
/// empty values dropped, ordered by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseTuple(BTreeMap<String, String>);

impl CaseTuple {
    pub fn attributes(&self) -> &BTreeMap<String, String> {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    /// `name=value;name=value;...`
    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Attribute values only, used for entity linking.
    pub fn value_text(&self) -> String {
        self.0.values().cloned().collect::<Vec<_>>().join("; ")
    }
}

impl fmt::Display for CaseTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Lowercase hex case identifier; synthetic cases carry [`SYNTHETIC_SUFFIX`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseHash(String);

impl CaseHash {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_synthetic(&self) -> bool {
        self.0.ends_with(SYNTHETIC_SUFFIX)
    }
}

impl fmt::Display for CaseHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CaseHash {
    fn from(s: &str) -> Self {
        CaseHash(s.to_string())
    }
}

pub fn serialize_case(record: &PatientRecord) -> Result<CaseTuple> {
    let attrs: BTreeMap<String, String> = record
        .attributes
        .iter()
        .map(|(k, v)| (k.trim().to_string(), collapse_whitespace(v)))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .collect();
    if attrs.is_empty() {
        return Err(Error::invalid("patient record has no attributes"));
    }
    Ok(CaseTuple(attrs))
}

pub fn case_id(e: &CaseTuple) -> CaseHash {
    CaseHash(fnv1a64_hex(e.render().as_bytes()))
}

/// Embed `h ‖ " | " ‖ render(e)` as one text.
pub fn embed_case(h: &CaseHash, e: &CaseTuple, embedder: &dyn Embedder) -> Result<Vec<f64>> {
    embedder
        .embed(&format!("{h} | {}", e.render()))
        .map_err(|source| Error::Embedding {
            context: format!("case {h}"),
            source,
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoOrigin {
    pub recipient: CaseHash,
    pub donor: CaseHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCase {
    pub h: CaseHash,
    pub e: CaseTuple,
    pub embedding: Vec<f64>,
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<PseudoOrigin>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eeg_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoFill {
    pub recipient: CaseHash,
    pub donor: CaseHash,
    pub synthetic: CaseHash,
    pub attributes: Vec<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub fills: Vec<PseudoFill>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseIngestReport {
    pub records: usize,
    pub cases_added: usize,
    pub cases_merged: usize,
    pub synthetic_added: usize,
    pub case_hyperedges_added: usize,
    pub case_hyperedges_merged: usize,
    pub cases_unlinked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStore {
    embedding_dim: usize,
    cases: BTreeMap<CaseHash, PatientCase>,
    attribute_index: BTreeMap<String, BTreeSet<CaseHash>>,
    recording_index: BTreeMap<String, CaseHash>,
    sealed: bool,
}

impl CaseStore {
    pub fn new(embedding_dim: usize) -> Self {
        CaseStore {
            embedding_dim,
            cases: BTreeMap::new(),
            attribute_index: BTreeMap::new(),
            recording_index: BTreeMap::new(),
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

    pub fn into_build_phase(mut self) -> Self {
        self.sealed = false;
        self
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.cases.values().filter(|c| !c.synthetic).count()
    }

    pub fn get(&self, h: &CaseHash) -> Option<&PatientCase> {
        self.cases.get(h)
    }

    pub fn cases(&self) -> impl Iterator<Item = &PatientCase> {
        self.cases.values()
    }

    pub fn with_attribute(&self, name: &str) -> Option<&BTreeSet<CaseHash>> {
        self.attribute_index.get(name)
    }

    pub fn attribute_index(&self) -> &BTreeMap<String, BTreeSet<CaseHash>> {
        &self.attribute_index
    }

    /// The case whose `eeg_refs` list the given recording.
    pub fn case_for_recording(&self, recording_id: &str) -> Option<&PatientCase> {
        self.recording_index.get(recording_id).and_then(|h| self.cases.get(h))
    }

    /// Pseudo-cases created for `recipient`.
    pub fn pseudo_cases_of<'a>(&'a self, recipient: &'a CaseHash) -> impl Iterator<Item = &'a PatientCase> + 'a {
        self.cases
            .values()
            .filter(move |c| c.derived_from.as_ref().is_some_and(|o| &o.recipient == recipient))
    }

    fn insert(&mut self, case: PatientCase) -> Result<()> {
        if case.embedding.len() != self.embedding_dim {
            return Err(Error::Dimension {
                expected: self.embedding_dim,
                actual: case.embedding.len(),
            });
        }
        for name in case.e.attributes().keys() {
            self.attribute_index.entry(name.clone()).or_default().insert(case.h.clone());
        }
        for r in &case.eeg_refs {
            self.recording_index.insert(r.clone(), case.h.clone());
        }
        self.cases.insert(case.h.clone(), case);
        Ok(())
    }

    /// Serialize, hash, embed and store a real case. Returns the hash and
    /// whether the case was new; re-adding identical content only merges
    /// additional `eeg_refs`.
    pub fn add_record(&mut self, record: &PatientRecord, embedder: &dyn Embedder) -> Result<(CaseHash, bool)> {
        if self.sealed {
            return Err(Error::Sealed);
        }
        let e = serialize_case(record)?;
        let h = case_id(&e);
        if let Some(existing) = self.cases.get_mut(&h) {
            for r in &record.eeg_refs {
                if !existing.eeg_refs.contains(r) {
                    existing.eeg_refs.push(r.clone());
                    self.recording_index.insert(r.clone(), h.clone());
                }
            }
            return Ok((h, false));
        }
        let embedding = embed_case(&h, &e, embedder)?;
        self.insert(PatientCase {
            h: h.clone(),
            e,
            embedding,
            synthetic: false,
            derived_from: None,
            eeg_refs: record.eeg_refs.clone(),
        })?;
        Ok((h, true))
    }

    /// Fill prevalent-but-missing attributes of each real case from its
    /// nearest real neighbour.
    ///
    /// An attribute is missing from a case when at least half of the real
    /// cases carry it. The donor is the most cosine-similar other real case
    /// holding at least one of the missing attributes (ties by hash). When its
    /// similarity reaches `tau`, a synthetic case is added with up to
    /// `max_fills` of the donor's values; real cases are never modified.
    pub fn augment_pseudo_cases(
        &mut self,
        tau: f64,
        max_fills: usize,
        embedder: &dyn Embedder,
    ) -> Result<AugmentationReport> {
        if self.sealed {
            return Err(Error::Sealed);
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::invalid(format!("similarity threshold must lie in (0, 1], got {tau}")));
        }
        let real: Vec<&PatientCase> = self.cases.values().filter(|c| !c.synthetic).collect();
        if real.len() < 2 {
            return Err(Error::invalid("pseudo-case augmentation needs at least two real cases"));
        }
        let mut prevalence: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &real {
            for k in c.e.attributes().keys() {
                *prevalence.entry(k.as_str()).or_default() += 1;
            }
        }
        let min_count = PREVALENCE_THRESHOLD * real.len() as f64;
        let prevalent: Vec<&str> = prevalence
            .iter()
            .filter(|(_, &n)| n as f64 >= min_count)
            .map(|(&k, _)| k)
            .collect();

        let mut planned = Vec::new();
        for recipient in &real {
            let missing: Vec<&str> = prevalent
                .iter()
                .copied()
                .filter(|k| recipient.e.get(k).is_none())
                .collect();
            if missing.is_empty() || max_fills == 0 {
                continue;
            }
            let mut best: Option<(f64, &PatientCase)> = None;
            for donor in &real {
                if donor.h == recipient.h || !missing.iter().any(|k| donor.e.get(k).is_some()) {
                    continue;
                }
                let sim = cosine(&recipient.embedding, &donor.embedding)?;
                // `real` is in hash order, so strict > keeps the smallest hash on ties.
                if best.is_none_or(|(s, _)| sim > s) {
                    best = Some((sim, donor));
                }
            }
            let Some((similarity, donor)) = best else { continue };
            if similarity < tau {
                continue;
            }
            let mut attrs = recipient.e.attributes().clone();
            let filled: Vec<String> = missing
                .iter()
                .filter_map(|k| donor.e.get(k).map(|v| (k, v)))
                .take(max_fills)
                .map(|(k, v)| {
                    attrs.insert(k.to_string(), v.to_string());
                    k.to_string()
                })
                .collect();
            let e = CaseTuple(attrs);
            let h = CaseHash(format!("{}{SYNTHETIC_SUFFIX}", case_id(&e)));
            if self.cases.contains_key(&h) {
                continue;
            }
            planned.push((recipient.h.clone(), donor.h.clone(), e, h, filled, similarity));
        }

        let mut report = AugmentationReport::default();
        for (recipient, donor, e, h, attributes, similarity) in planned {
            if self.cases.contains_key(&h) {
                continue;
            }
            let embedding = embed_case(&h, &e, embedder)?;
            self.insert(PatientCase {
                h: h.clone(),
                e,
                embedding,
                synthetic: true,
                derived_from: Some(PseudoOrigin {
                    recipient: recipient.clone(),
                    donor: donor.clone(),
                }),
                eeg_refs: Vec::new(),
            })?;
            report.fills.push(PseudoFill {
                recipient,
                donor,
                synthetic: h,
                attributes,
                similarity,
            });
        }
        Ok(report)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(CASES_FILE), self.cases.values())
    }

    /// Load `cases.jsonl` from `dir` (an empty store when absent). The
    /// result is sealed.
    pub fn load(dir: &Path, embedding_dim: usize) -> Result<Self> {
        let mut store = CaseStore::new(embedding_dim);
        let path = dir.join(CASES_FILE);
        if path.exists() {
            let rows: Vec<PatientCase> = jsonl::read(&path)?;
            for row in rows {
                store.insert(row)?;
            }
        }
        store.seal();
        Ok(store)
    }
}

/// Entities mentioned by a case's attribute values.
pub fn case_members(case: &PatientCase, graph: &HypergraphStore) -> BTreeSet<EntityId> {
    link_entities(graph, &case.e.value_text()).into_iter().map(|m| m.entity).collect()
}

fn case_description(case: &PatientCase) -> String {
    format!("Patient case {}: {}", case.h, case.e.render())
}

/// The `case`-layer hyperedge mirroring `case`, if it was linked.
pub fn case_hyperedge(case: &PatientCase, graph: &HypergraphStore) -> Option<HyperedgeId> {
    let members = case_members(case, graph);
    let id = HypergraphStore::hyperedge_id_for(&case_description(case), &members, Layer::Case);
    graph.hyperedge(id).map(|_| id)
}

/// Mirror every case into the hypergraph as a `case`-layer hyperedge over the
/// entities its attribute values mention. Cases mentioning no known entity are
/// skipped and counted.
pub fn link_cases_into_hypergraph(
    cases: &CaseStore,
    graph: &mut HypergraphStore,
    report: &mut CaseIngestReport,
) -> Result<()> {
    for case in cases.cases() {
        let members = case_members(case, graph);
        if members.is_empty() {
            report.cases_unlinked += 1;
            continue;
        }
        let description = case_description(case);
        let before = graph.hyperedge_count();
        graph.add_hyperedge(&description, members, Layer::Case, Some(case.embedding.clone()))?;
        if graph.hyperedge_count() > before {
            report.case_hyperedges_added += 1;
        } else {
            report.case_hyperedges_merged += 1;
        }
    }
    Ok(())
}
