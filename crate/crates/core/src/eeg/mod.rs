//! EEG vector database: PAA embeddings of multichannel recordings and
//! top-K retrieval by DTW distance.

mod dtw;
mod paa;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{jsonl, Error, Result};

pub use dtw::{dtw, dtw_banded, embedding_distance, DtwMode, DtwOptions};
pub use paa::paa;

pub const DEFAULT_SEGMENTS: usize = 20;

const STD_EPSILON: f64 = 1e-12;

pub const EVD_FILE: &str = "evd.jsonl";
pub const EVD_META_FILE: &str = "evd.meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
}

/// Raw input recording, as read from `eeg/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegRecording {
    pub id: String,
    #[serde(default)]
    pub patient_hash: Option<String>,
    pub sample_rate: f64,
    pub channels: Vec<Channel>,
}

impl EegRecording {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid("recording id must be non-empty"));
        }
        let Some(first) = self.channels.first() else {
            return Err(Error::invalid(format!("recording `{}` has no channels", self.id)));
        };
        let t = first.samples.len();
        if t == 0 {
            return Err(Error::invalid(format!("recording `{}` has no samples", self.id)));
        }
        for ch in &self.channels {
            if ch.samples.len() != t {
                return Err(Error::invalid(format!(
                    "recording `{}`: channel `{}` has {} samples, expected {t}",
                    self.id,
                    ch.name,
                    ch.samples.len()
                )));
            }
            if ch.samples.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "recording `{}`: channel `{}` contains non-finite samples",
                    self.id, ch.name
                )));
            }
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        jsonl::read_json(path)
    }
}

/// Channel-major concatenation of per-channel PAA vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaaEmbedding {
    pub segments_per_channel: usize,
    pub channel_order: Vec<String>,
    pub values: Vec<f64>,
}

impl PaaEmbedding {
    pub fn channel_count(&self) -> usize {
        self.channel_order.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.segments_per_channel;
        &self.values[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EegEmbedOptions {
    pub segments: usize,
    /// Per-channel z-score before PAA.
    pub zscore: bool,
}

impl Default for EegEmbedOptions {
    fn default() -> Self {
        EegEmbedOptions {
            segments: DEFAULT_SEGMENTS,
            zscore: true,
        }
    }
}

/// Subtract the mean and divide by the population standard deviation. A
/// (numerically) constant channel maps to all zeros.
pub fn zscore(samples: &[f64]) -> Vec<f64> {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t;
    let std = var.sqrt();
    if std < STD_EPSILON {
        return vec![0.0; samples.len()];
    }
    samples.iter().map(|x| (x - mean) / std).collect()
}

/// z-score each channel, compress it to `n` PAA segments and concatenate in
/// the recording's channel order.
pub fn eeg_embed(rec: &EegRecording, n: usize) -> Result<PaaEmbedding> {
    eeg_embed_with(
        rec,
        &EegEmbedOptions {
            segments: n,
            zscore: true,
        },
    )
}

pub fn eeg_embed_with(rec: &EegRecording, opts: &EegEmbedOptions) -> Result<PaaEmbedding> {
    rec.validate()?;
    let mut values = Vec::with_capacity(rec.channels.len() * opts.segments);
    for ch in &rec.channels {
        let series = if opts.zscore { zscore(&ch.samples) } else { ch.samples.clone() };
        values.extend(paa(&series, opts.segments)?);
    }
    Ok(PaaEmbedding {
        segments_per_channel: opts.segments,
        channel_order: rec.channels.iter().map(|c| c.name.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecording {
    pub id: String,
    #[serde(default)]
    pub patient_hash: Option<String>,
    pub sample_rate: f64,
    pub embedding: PaaEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegMatch {
    pub recording_id: String,
    pub patient_hash: Option<String>,
    pub distance: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvdMeta {
    format_version: u32,
    segments: usize,
    zscore: bool,
    channel_count: Option<usize>,
    recording_count: usize,
}

/// The EEG vector database. All recordings share one channel count and one
/// segment count so any two embeddings are comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct EegDatabase {
    options: EegEmbedOptions,
    entries: BTreeMap<String, StoredRecording>,
    channel_count: Option<usize>,
    fused: BTreeMap<String, PaaEmbedding>,
    sealed: bool,
}

impl EegDatabase {
    pub fn new(options: EegEmbedOptions) -> Self {
        EegDatabase {
            options,
            entries: BTreeMap::new(),
            channel_count: None,
            fused: BTreeMap::new(),
            sealed: false,
        }
    }

    pub fn options(&self) -> &EegEmbedOptions {
        &self.options
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
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&StoredRecording> {
        self.entries.get(id)
    }

    pub fn recordings(&self) -> impl Iterator<Item = &StoredRecording> {
        self.entries.values()
    }

    pub fn embed(&self, rec: &EegRecording) -> Result<PaaEmbedding> {
        eeg_embed_with(rec, &self.options)
    }

    pub fn insert_recording(&mut self, rec: &EegRecording) -> Result<String> {
        if self.sealed {
            return Err(Error::Sealed);
        }
        let embedding = self.embed(rec)?;
        self.insert_embedded(StoredRecording {
            id: rec.id.clone(),
            patient_hash: rec.patient_hash.clone(),
            sample_rate: rec.sample_rate,
            embedding,
        })
    }

    fn insert_embedded(&mut self, stored: StoredRecording) -> Result<String> {
        if self.entries.contains_key(&stored.id) {
            return Err(Error::Duplicate {
                kind: "recording",
                id: stored.id,
            });
        }
        if stored.embedding.segments_per_channel != self.options.segments {
            return Err(Error::Incomparable(format!(
                "recording `{}` has {} segments per channel, database uses {}",
                stored.id, stored.embedding.segments_per_channel, self.options.segments
            )));
        }
        let c = stored.embedding.channel_count();
        match self.channel_count {
            Some(expected) if expected != c => {
                return Err(Error::Incomparable(format!(
                    "recording `{}` has {c} channels, database holds {expected}-channel recordings",
                    stored.id
                )))
            }
            _ => self.channel_count = Some(c),
        }
        let id = stored.id.clone();
        let patient = stored.patient_hash.clone();
        self.entries.insert(id.clone(), stored);
        if let Some(p) = patient {
            self.refresh_fused(&p);
        }
        Ok(id)
    }

    fn refresh_fused(&mut self, patient: &str) {
        let recs: Vec<&StoredRecording> = self
            .entries
            .values()
            .filter(|r| r.patient_hash.as_deref() == Some(patient))
            .collect();
        let first = &recs[0].embedding;
        let mut values = vec![0.0; first.values.len()];
        for r in &recs {
            for (acc, v) in values.iter_mut().zip(&r.embedding.values) {
                *acc += v;
            }
        }
        let k = recs.len() as f64;
        values.iter_mut().for_each(|v| *v /= k);
        let fused = PaaEmbedding {
            segments_per_channel: first.segments_per_channel,
            channel_order: first.channel_order.clone(),
            values,
        };
        self.fused.insert(patient.to_string(), fused);
    }

    /// Segment-wise mean of all of a patient's recordings.
    pub fn patient_embedding(&self, patient_hash: &str) -> Option<&PaaEmbedding> {
        self.fused.get(patient_hash)
    }

    /// The `k` nearest recordings to `query` by DTW over PAA embeddings,
    /// ascending by distance with ties broken by recording id.
    pub fn retrieve_eeg(&self, query: &EegRecording, k: usize, opts: &DtwOptions) -> Result<Vec<EegMatch>> {
        let emb = self.embed(query)?;
        self.retrieve_by_embedding(&emb, k, opts)
    }

    pub fn retrieve_by_embedding(&self, query: &PaaEmbedding, k: usize, opts: &DtwOptions) -> Result<Vec<EegMatch>> {
        if !self.sealed {
            return Err(Error::NotSealed);
        }
        if k == 0 {
            return Err(Error::invalid("EEG top-K must be at least 1"));
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if Some(query.channel_count()) != self.channel_count {
            return Err(Error::Incomparable(format!(
                "query has {} channels, database holds {}-channel recordings",
                query.channel_count(),
                self.channel_count.unwrap_or(0)
            )));
        }
        if query.segments_per_channel != self.options.segments {
            return Err(Error::Incomparable(format!(
                "query has {} segments per channel, database uses {}",
                query.segments_per_channel, self.options.segments
            )));
        }
        let channels = query.channel_count();
        let mut scored: Vec<(f64, &StoredRecording)> = self
            .entries
            .par_iter()
            .map(|(_, rec)| Ok((embedding_distance(&query.values, &rec.embedding.values, channels, opts)?, rec)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (distance, rec))| EegMatch {
                recording_id: rec.id.clone(),
                patient_hash: rec.patient_hash.clone(),
                distance,
                rank: i + 1,
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join(EVD_FILE), self.entries.values())?;
        jsonl::write_json(
            &dir.join(EVD_META_FILE),
            &EvdMeta {
                format_version: crate::hypergraph::FORMAT_VERSION,
                segments: self.options.segments,
                zscore: self.options.zscore,
                channel_count: self.channel_count,
                recording_count: self.entries.len(),
            },
        )
    }

    /// Load a database written by [`save`](Self::save); `None` if the
    /// directory holds none. The result is sealed.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let meta_path = dir.join(EVD_META_FILE);
        if !meta_path.exists() {
            return Ok(None);
        }
        let meta: EvdMeta = jsonl::read_json(&meta_path)?;
        let mut db = EegDatabase::new(EegEmbedOptions {
            segments: meta.segments,
            zscore: meta.zscore,
        });
        let rows: Vec<StoredRecording> = jsonl::read(&dir.join(EVD_FILE))?;
        for row in rows {
            db.insert_embedded(row)?;
        }
        if db.len() != meta.recording_count {
            return Err(Error::invalid(format!(
                "{}: recording count does not match {EVD_META_FILE}",
                dir.display()
            )));
        }
        db.seal();
        Ok(Some(db))
    }
}
