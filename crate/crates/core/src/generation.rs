//! Answer generation over a fused context through a pluggable client.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{context_hash, render_context, FusedContext};
use crate::retrieval::MetadataQuery;
use crate::{Error, Result};

pub const GENERATION_PROMPT: &str = include_str!("../assets/generation_prompt.v1.txt");
pub const GENERATION_PROMPT_VERSION: &str = "generation_prompt.v1";

/// Role assumed when a query names none.
pub const DEFAULT_ROLE: &str = "doctor";

/// Answer returned by the mock client when the context supports nothing.
pub const NO_ANSWER: &str = "insufficient information";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("client misconfigured: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Timeout(_) | ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            ClientError::Malformed(_) | ClientError::Config(_) => false,
        }
    }
}

/// A raw chat-completion backend: one system and one user message in, text out.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, system: &str, user: &str) -> std::result::Result<String, ClientError>;
}

/// Everything a generation client sees for one question.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    /// `p_gen` with the role interpolated.
    pub system: &'a str,
    pub rendered_context: &'a str,
    pub question: &'a str,
    pub context: &'a FusedContext,
}

impl GenerationRequest<'_> {
    /// The user turn sent to chat backends. An empty context is left out so
    /// the prompt reduces to the bare question.
    pub fn user_message(&self) -> String {
        if self.context.is_empty() {
            return format!("Question: {}", self.question);
        }
        format!("Context:\n{}\nQuestion: {}", self.rendered_context, self.question)
    }
}

pub trait GenerationClient: Send + Sync {
    /// Stable identifier recorded in provenance.
    fn id(&self) -> String;

    fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<String, ClientError>;
}

/// Pure template client.
///
/// Answers with the `diagnosis` attribute of the first similar case, else the
/// first knowledge fact, else [`NO_ANSWER`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockClient;

impl GenerationClient for MockClient {
    fn id(&self) -> String {
        "mock-template-v1".to_string()
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<String, ClientError> {
        let ctx = req.context;
        let diagnosis = ctx.cases.iter().find_map(|c| {
            c.attributes
                .split(';')
                .find_map(|kv| kv.strip_prefix("diagnosis="))
                .map(str::to_string)
        });
        if let Some(d) = diagnosis {
            return Ok(d);
        }
        if let Some(h) = ctx.hyperedges.first() {
            return Ok(h.description.clone());
        }
        Ok(NO_ANSWER.to_string())
    }
}

/// Answers looked up by exact question text; unknown questions get
/// [`NO_ANSWER`]. Used to force known outputs in benchmarks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedClient {
    answers: BTreeMap<String, String>,
}

impl ScriptedClient {
    pub fn new<Q: Into<String>, A: Into<String>>(answers: impl IntoIterator<Item = (Q, A)>) -> Self {
        ScriptedClient {
            answers: answers.into_iter().map(|(q, a)| (q.into(), a.into())).collect(),
        }
    }
}

impl GenerationClient for ScriptedClient {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<String, ClientError> {
        Ok(self
            .answers
            .get(req.question)
            .cloned()
            .unwrap_or_else(|| NO_ANSWER.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o-mini".to_string(),
            api_key_env: "EEGRAG_API_KEY".to_string(),
            timeout_secs: 60,
            retries: 2,
        }
    }
}

/// OpenAI-style chat-completions client with a global timeout and
/// exponential-backoff retries on retryable failures.
pub struct RemoteClient {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteClient {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        RemoteClient::with_key(config, api_key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient { config, api_key, agent }
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, ClientError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(t) => ClientError::Timeout(t.to_string()),
            other => ClientError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ClientError::Status { status, body });
        }
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))
    }
}

impl ChatBackend for RemoteClient {
    fn chat(&self, system: &str, user: &str) -> std::result::Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    log::warn!("remote generation attempt {} failed: {e}", attempt + 1);
                    std::thread::sleep(Duration::from_millis(250 << attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

impl GenerationClient for RemoteClient {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> std::result::Result<String, ClientError> {
        self.chat(req.system, &req.user_message())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub context_hash: String,
    pub client_id: String,
    pub prompt_version: String,
    /// The context held nothing to ground the answer in.
    pub ungrounded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub provenance: Provenance,
}

pub fn render_generation_prompt(template: &str, role: &str) -> String {
    template.replace("{role}", role)
}

/// Assemble `p_gen`, the rendered context and the question, and ask `client`.
pub fn generate(
    q: &MetadataQuery,
    ctx: &FusedContext,
    client: &dyn GenerationClient,
    prompt: &str,
) -> Result<Answer> {
    q.validate()?;
    let rendered = render_context(ctx);
    let system = render_generation_prompt(prompt, q.role.as_deref().unwrap_or(DEFAULT_ROLE));
    let provenance = Provenance {
        context_hash: context_hash(&rendered),
        client_id: client.id(),
        prompt_version: GENERATION_PROMPT_VERSION.to_string(),
        ungrounded: ctx.is_empty(),
    };
    let req = GenerationRequest {
        system: &system,
        rendered_context: &rendered,
        question: &q.text,
        context: ctx,
    };
    match client.generate(&req) {
        Ok(text) => Ok(Answer { text, provenance }),
        Err(source) => Err(Error::Generation {
            client_id: provenance.client_id,
            context_hash: provenance.context_hash,
            source,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{CaseSummary, FuseOptions};

    #[test]
    fn mock_is_pure_and_flags_empty_context() {
        let ctx = FusedContext::empty(FuseOptions::default());
        let q = MetadataQuery::new("What rhythm dominates?");
        let a = generate(&q, &ctx, &MockClient, GENERATION_PROMPT).unwrap();
        let b = generate(&q, &ctx, &MockClient, GENERATION_PROMPT).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, NO_ANSWER);
        assert!(a.provenance.ungrounded);
        assert_eq!(a.provenance.client_id, "mock-template-v1");
    }

    #[test]
    fn mock_prefers_case_diagnosis() {
        let mut ctx = FusedContext::empty(FuseOptions::default());
        ctx.cases.push(CaseSummary {
            h: "abc".into(),
            attributes: "age=9;diagnosis=absence epilepsy".into(),
            synthetic: false,
            via_recording: "r1".into(),
        });
        let a = generate(&MetadataQuery::new("dx?"), &ctx, &MockClient, GENERATION_PROMPT).unwrap();
        assert_eq!(a.text, "absence epilepsy");
        assert!(!a.provenance.ungrounded);
    }

    #[test]
    fn scripted_answers_by_question() {
        let client = ScriptedClient::new([("q1", "gold one")]);
        let ctx = FusedContext::empty(FuseOptions::default());
        assert_eq!(generate(&MetadataQuery::new("q1"), &ctx, &client, GENERATION_PROMPT).unwrap().text, "gold one");
        assert_eq!(generate(&MetadataQuery::new("q2"), &ctx, &client, GENERATION_PROMPT).unwrap().text, NO_ANSWER);
    }

    #[test]
    fn role_is_interpolated() {
        assert!(render_generation_prompt(GENERATION_PROMPT, "nurse").contains("answering for a nurse."));
    }

    struct Down;
    impl GenerationClient for Down {
        fn id(&self) -> String {
            "down".into()
        }
        fn generate(&self, _: &GenerationRequest<'_>) -> std::result::Result<String, ClientError> {
            Err(ClientError::Timeout("30s".into()))
        }
    }

    #[test]
    fn failures_carry_provenance() {
        let ctx = FusedContext::empty(FuseOptions::default());
        let err = generate(&MetadataQuery::new("q"), &ctx, &Down, GENERATION_PROMPT).unwrap_err();
        assert!(err.is_retryable());
        match err {
            Error::Generation { client_id, context_hash, .. } => {
                assert_eq!(client_id, "down");
                assert_eq!(context_hash, crate::fusion::context_hash(&render_context(&ctx)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn remote_retries_then_surfaces_transport_error() {
        let cfg = RemoteConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            timeout_secs: 1,
            retries: 1,
            ..RemoteConfig::default()
        };
        let client = RemoteClient::with_key(cfg, None);
        let err = client.chat("s", "u").unwrap_err();
        assert!(err.is_retryable(), "{err:?}");
    }
}
