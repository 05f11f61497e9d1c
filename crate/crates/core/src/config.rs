//! Pipeline configuration, read from a flat TOML key-value file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cases::DEFAULT_TAU;
use crate::eeg::{DtwMode, DtwOptions, EegEmbedOptions, DEFAULT_SEGMENTS};
use crate::embed::DEFAULT_DIM;
use crate::fusion::{FuseOptions, DEFAULT_BUDGET, DEFAULT_RADIUS};
use crate::generation::RemoteConfig;
use crate::pipeline::Ablation;
use crate::retrieval::LayerFilter;
use crate::{Error, Result};

pub const DEFAULT_EEG_TOP_K: usize = 5;
pub const DEFAULT_HYPEREDGE_TOP_K: usize = 1;
pub const DEFAULT_MAX_FILLS: usize = 3;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientKind {
    /// Built-in pure template client.
    #[default]
    Mock,
    /// Answers each benchmark question with its gold answer.
    EchoGold,
    /// HTTP chat-completions backend described by the `remote_*` keys.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub embedding_dim: usize,
    pub paa_segments: usize,
    pub zscore: bool,
    /// Sakoe-Chiba half-width; absent means unbounded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dtw_band: Option<usize>,
    pub dtw_mode: DtwMode,
    pub eeg_top_k: usize,
    pub hyperedge_top_k: usize,
    pub hyperedge_layer: LayerFilter,
    pub closure_radius: usize,
    pub closure_budget: usize,
    pub pseudo_tau: f64,
    pub pseudo_max_fills: usize,
    /// Knowledge (entity-level) retrieval channel.
    pub cl: bool,
    /// Hyperedge retrieval channel.
    pub il: bool,
    /// EEG fusion channel.
    pub el: bool,
    pub client: ClientKind,
    pub remote_endpoint: String,
    pub remote_model: String,
    pub remote_api_key_env: String,
    pub remote_timeout_secs: u64,
    pub remote_retries: u32,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        PipelineConfig {
            embedding_dim: DEFAULT_DIM,
            paa_segments: DEFAULT_SEGMENTS,
            zscore: true,
            dtw_band: None,
            dtw_mode: DtwMode::default(),
            eeg_top_k: DEFAULT_EEG_TOP_K,
            hyperedge_top_k: DEFAULT_HYPEREDGE_TOP_K,
            hyperedge_layer: LayerFilter::default(),
            closure_radius: DEFAULT_RADIUS,
            closure_budget: DEFAULT_BUDGET,
            pseudo_tau: DEFAULT_TAU,
            pseudo_max_fills: DEFAULT_MAX_FILLS,
            cl: true,
            il: true,
            el: true,
            client: ClientKind::default(),
            remote_endpoint: remote.endpoint,
            remote_model: remote.model,
            remote_api_key_env: remote.api_key_env,
            remote_timeout_secs: remote.timeout_secs,
            remote_retries: remote.retries,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            seed: DEFAULT_SEED,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("embedding_dim", self.embedding_dim),
            ("paa_segments", self.paa_segments),
            ("eeg_top_k", self.eeg_top_k),
            ("hyperedge_top_k", self.hyperedge_top_k),
            ("closure_budget", self.closure_budget),
            ("pseudo_max_fills", self.pseudo_max_fills),
            ("max_in_flight", self.max_in_flight),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.pseudo_tau > 0.0 && self.pseudo_tau <= 1.0) {
            return Err(Error::Config(format!("pseudo_tau must lie in (0, 1], got {}", self.pseudo_tau)));
        }
        if self.client == ClientKind::Remote && self.remote_endpoint.trim().is_empty() {
            return Err(Error::Config("remote client needs remote_endpoint".into()));
        }
        Ok(())
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            cl: self.cl,
            il: self.il,
            el: self.el,
        }
    }

    pub fn set_ablation(&mut self, a: Ablation) {
        self.cl = a.cl;
        self.il = a.il;
        self.el = a.el;
    }

    pub fn eeg_options(&self) -> EegEmbedOptions {
        EegEmbedOptions {
            segments: self.paa_segments,
            zscore: self.zscore,
        }
    }

    pub fn dtw_options(&self) -> DtwOptions {
        DtwOptions {
            band: self.dtw_band,
            mode: self.dtw_mode,
        }
    }

    pub fn fuse_options(&self) -> FuseOptions {
        FuseOptions {
            radius: self.closure_radius,
            budget: self.closure_budget,
        }
    }

    pub fn remote(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.remote_endpoint.clone(),
            model: self.remote_model.clone(),
            api_key_env: self.remote_api_key_env.clone(),
            timeout_secs: self.remote_timeout_secs,
            retries: self.remote_retries,
        }
    }
}
