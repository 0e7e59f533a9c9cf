//! Blocking client for the annotation service, with scripted answer
//! policies for headless runs.

use std::collections::BTreeMap;
use std::time::Duration;

use labelfix::{AnnotationItem, AnnotationRecord, LabelSet};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::ErrorBody;
use crate::session::{AdvanceOutcome, LeasedItem, Progress, SessionInfo};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("HTTP {status}: {} ({})", body.message, body.code)]
    Http { status: u16, body: ErrorBody },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cannot decode response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            Self::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// How the scripted annotator answers.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Submit the pre-checked suggestion unchanged.
    AcceptSuggestion,
    /// Confirm the labels the sample already carries.
    KeepCurrent,
    /// Answer with known labels, e.g. the synthetic ground truth.
    Truth(BTreeMap<u64, LabelSet>),
}

impl Policy {
    pub fn answer(&self, item: &AnnotationItem) -> LabelSet {
        match self {
            Policy::AcceptSuggestion => item.suggested_labels,
            Policy::KeepCurrent => item.current_labels,
            Policy::Truth(map) => map.get(&item.sample_id).copied().unwrap_or(item.current_labels),
        }
    }
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        Self { base: base_url.into().trim_end_matches('/').to_string(), agent }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<(u16, String), ClientError> {
        let mut resp = resp.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Transport(e.to_string()))?;
        if status >= 400 {
            let body = serde_json::from_str(&text)
                .unwrap_or(ErrorBody { code: "unknown".into(), message: text });
            return Err(ClientError::Http { status, body });
        }
        Ok((status, text))
    }

    fn decode<T: DeserializeOwned>(text: &str) -> Result<T, ClientError> {
        serde_json::from_str(text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn get(&self, path: &str, query: &[(&str, &str)]) -> Result<(u16, String), ClientError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        Self::finish(req.call())
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<(u16, String), ClientError> {
        let req = self.agent.post(format!("{}{path}", self.base)).header("content-type", "application/json");
        Self::finish(req.send(body.to_string()))
    }

    pub fn session(&self) -> Result<SessionInfo, ClientError> {
        Self::decode(&self.get("/session", &[])?.1)
    }

    /// `None` when nothing is available (HTTP 204).
    pub fn next(&self, annotator_id: &str) -> Result<Option<LeasedItem>, ClientError> {
        let (status, text) = self.get("/queue/next", &[("annotator_id", annotator_id)])?;
        if status == 204 {
            return Ok(None);
        }
        Self::decode(&text).map(Some)
    }

    pub fn submit(&self, lease_token: &str, labels: &[usize]) -> Result<AnnotationRecord, ClientError> {
        Self::decode(&self.post("/annotations", &json!({ "lease_token": lease_token, "labels": labels }))?.1)
    }

    pub fn advance(&self, force: bool) -> Result<AdvanceOutcome, ClientError> {
        Self::decode(&self.post("/iterations/advance", &json!({ "force": force }))?.1)
    }

    pub fn progress(&self) -> Result<Progress, ClientError> {
        Self::decode(&self.get("/progress", &[])?.1)
    }

    /// Answers every queued item, then advances. Returns the records made.
    pub fn run_iteration(
        &self,
        annotator_id: &str,
        policy: &Policy,
    ) -> Result<(Vec<AnnotationRecord>, AdvanceOutcome), ClientError> {
        let mut records = Vec::new();
        while let Some(leased) = self.next(annotator_id)? {
            let labels = policy.answer(&leased.item).to_vec();
            records.push(self.submit(&leased.lease_token, &labels)?);
        }
        let outcome = self.advance(false)?;
        Ok((records, outcome))
    }

    /// Runs iterations until the session reports done or `max_iterations`
    /// have been completed.
    pub fn run(
        &self,
        annotator_id: &str,
        policy: &Policy,
        max_iterations: usize,
    ) -> Result<Vec<AdvanceOutcome>, ClientError> {
        let mut out = Vec::new();
        for _ in 0..max_iterations {
            let (_, outcome) = self.run_iteration(annotator_id, policy)?;
            let done = outcome.status == crate::session::Status::Done;
            out.push(outcome);
            if done {
                break;
            }
        }
        Ok(out)
    }
}
