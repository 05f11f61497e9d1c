//! A store directory plus a configuration: the orchestration shared by the
//! command line and the HTTP service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cases::{link_cases_into_hypergraph, CaseIngestReport, PatientRecord};
use crate::config::{ClientKind, PipelineConfig};
use crate::eeg::EegRecording;
use crate::embed::HashingEmbedder;
use crate::eval::{echo_gold_client, load_dataset, run_benchmark, EvalReport, QaExample};
use crate::generation::{GenerationClient, MockClient, RemoteClient, GENERATION_PROMPT};
use crate::knowledge::{build_kgh, Document, IngestReport, RuleExtractor, EXTRACTION_PROMPT};
use crate::pipeline::{Pipeline, QueryInput, QueryOutput};
use crate::stores::Stores;
use crate::{jsonl, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EegIngestReport {
    pub recordings: usize,
    pub added: usize,
    /// Identical to a recording already stored.
    pub merged: usize,
    /// Patient hash filled in from a case's `eeg_refs`.
    pub patients_linked: usize,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    dir: PathBuf,
    config: PipelineConfig,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Workspace { dir: dir.into(), config })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embedder(&self) -> HashingEmbedder {
        HashingEmbedder::new(self.config.embedding_dim)
    }

    fn open_for_build(&self) -> Result<Stores> {
        Stores::open_for_build(&self.dir, self.config.embedding_dim, self.config.eeg_options())
    }

    /// Extract knowledge hyperedges from a `docs.jsonl` file. Annotated facts
    /// from `facts` take precedence over the rule-based extractor.
    pub fn ingest_docs(&self, input: &Path, facts: Option<&Path>) -> Result<IngestReport> {
        let docs: Vec<Document> = jsonl::read(input)?;
        let extractor = match facts {
            Some(p) => RuleExtractor::from_sidecar_file(p)?,
            None => RuleExtractor::new(),
        };
        let mut stores = self.open_for_build()?;
        let report = build_kgh(&docs, &extractor, &self.embedder(), &mut stores.graph, EXTRACTION_PROMPT)?;
        stores.save(&self.dir)?;
        Ok(report)
    }

    /// Add patient records, augment them with pseudo-cases and mirror all
    /// cases into the hypergraph.
    pub fn ingest_cases(&self, input: &Path) -> Result<CaseIngestReport> {
        let records: Vec<PatientRecord> = jsonl::read(input)?;
        let embedder = self.embedder();
        let mut stores = self.open_for_build()?;
        let mut report = CaseIngestReport {
            records: records.len(),
            ..Default::default()
        };
        for r in &records {
            let (_, new) = stores.cases.add_record(r, &embedder)?;
            if new {
                report.cases_added += 1;
            } else {
                report.cases_merged += 1;
            }
        }
        if stores.cases.real_count() >= 2 {
            let before = stores.cases.len();
            stores
                .cases
                .augment_pseudo_cases(self.config.pseudo_tau, self.config.pseudo_max_fills, &embedder)?;
            report.synthetic_added = stores.cases.len() - before;
        }
        link_cases_into_hypergraph(&stores.cases, &mut stores.graph, &mut report)?;
        stores.save(&self.dir)?;
        Ok(report)
    }

    /// Add EEG recordings from one JSON file or every `*.json` file of a
    /// directory (in file-name order).
    pub fn ingest_eeg(&self, input: &Path) -> Result<EegIngestReport> {
        let recordings = read_recordings(input)?;
        let mut stores = self.open_for_build()?;
        let mut report = EegIngestReport {
            recordings: recordings.len(),
            ..Default::default()
        };
        for mut rec in recordings {
            if rec.patient_hash.is_none() {
                if let Some(case) = stores.cases.case_for_recording(&rec.id) {
                    rec.patient_hash = Some(case.h.to_string());
                    report.patients_linked += 1;
                }
            }
            if let Some(existing) = stores.eeg.get(&rec.id) {
                let embedding = stores.eeg.embed(&rec)?;
                if existing.embedding == embedding && existing.patient_hash == rec.patient_hash {
                    report.merged += 1;
                    continue;
                }
                return Err(Error::Duplicate {
                    kind: "recording",
                    id: rec.id,
                });
            }
            stores.eeg.insert_recording(&rec)?;
            report.added += 1;
        }
        stores.save(&self.dir)?;
        Ok(report)
    }

    pub fn load(&self) -> Result<Stores> {
        Stores::load(&self.dir, self.config.eeg_options())
    }

    /// The configured generation client. `echo-gold` needs the dataset whose
    /// gold answers it returns.
    pub fn client(&self, dataset: Option<&[QaExample]>) -> Result<Arc<dyn GenerationClient>> {
        Ok(match self.config.client {
            ClientKind::Mock => Arc::new(MockClient),
            ClientKind::EchoGold => match dataset {
                Some(d) => Arc::new(echo_gold_client(d)),
                None => return Err(Error::Config("the echo-gold client is only available to bench".into())),
            },
            ClientKind::Remote => Arc::new(RemoteClient::new(self.config.remote())),
        })
    }

    pub fn pipeline_with(&self, stores: Arc<Stores>, client: Arc<dyn GenerationClient>) -> Result<Pipeline> {
        Pipeline::new(
            stores,
            Arc::new(self.embedder()),
            client,
            self.config.clone(),
            GENERATION_PROMPT,
        )
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        self.pipeline_with(Arc::new(self.load()?), self.client(None)?)
    }

    pub fn query(&self, input: &QueryInput) -> Result<QueryOutput> {
        self.pipeline()?.query(input)
    }

    /// Benchmark `dataset` and write `report.json` and `report.txt` to `out`.
    pub fn bench(&self, dataset: &Path, out: &Path) -> Result<EvalReport> {
        let examples = load_dataset(dataset)?;
        let pipeline = self.pipeline_with(Arc::new(self.load()?), self.client(Some(&examples))?)?;
        let report = run_benchmark(&examples, &pipeline, self.config.bootstrap_resamples, self.config.seed)?;
        report.write(out)?;
        Ok(report)
    }
}

fn read_recordings(input: &Path) -> Result<Vec<EegRecording>> {
    if !input.is_dir() {
        return Ok(vec![EegRecording::from_file(input)?]);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(input, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| EegRecording::from_file(p)).collect()
}
