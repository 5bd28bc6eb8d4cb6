//! Blocking client for the landmark mapping service.
//!
//! Mirrors the pipeline's error model: server-side errors arrive as
//! [`landmark_api::ErrorBody`] and are rebuilt into the matching
//! `landmark_core::Error` variant, so callers see the same error kinds — and
//! exit codes — whether they run the pipeline in-process or remotely.
//! Connection problems surface as `Error::Transport`, off-contract replies as
//! `Error::Protocol`.

use std::time::Duration;

use landmark_api as api;
use landmark_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`. No timeout
    /// means no deadline — sweeps legitimately run for minutes.
    pub fn new(base: impl Into<String>, timeout: Option<Duration>) -> Result<Self> {
        let mut builder = reqwest::blocking::Client::builder();
        if let Some(t) = timeout {
            builder = builder.timeout(t);
        } else {
            builder = builder.timeout(None);
        }
        let http = builder
            .build()
            .map_err(|e| Error::Transport(format!("cannot build HTTP client: {e}")))?;
        let mut base = base.into();
        while base.ends_with('/') {
            base.pop();
        }
        if base.is_empty() {
            return Err(Error::InvalidInput("remote base URL is empty".to_string()));
        }
        Ok(Self { base, http })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<api::HealthResponse> {
        let url = format!("{}{}", self.base, api::paths::HEALTH);
        let response = self
            .http
            .get(&url)
            .send()
            .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?;
        decode(url, response)
    }

    pub fn ingest(&self, request: &api::IngestRequest) -> Result<api::IngestResponse> {
        self.post(api::paths::INGEST, request)
    }

    pub fn align(&self, request: &api::AlignRequest) -> Result<api::AlignResponse> {
        self.post(api::paths::ALIGN, request)
    }

    pub fn evaluate(&self, request: &api::EvaluateRequest) -> Result<api::EvaluateResponse> {
        self.post(api::paths::EVALUATE, request)
    }

    pub fn simulate(&self, request: &api::SimulateRequest) -> Result<api::SimulateResponse> {
        self.post(api::paths::SIMULATE, request)
    }

    pub fn sweep(&self, request: &api::SweepRequest) -> Result<api::SweepResponse> {
        self.post(api::paths::SWEEP, request)
    }

    pub fn render(&self, request: &api::RenderRequest) -> Result<api::RenderResponse> {
        self.post(api::paths::RENDER, request)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{path}", self.base);
        let response = self
            .http
            .post(&url)
            .json(request)
            .send()
            .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
        decode(url, response)
    }
}

fn decode<Resp: DeserializeOwned>(url: String, response: reqwest::blocking::Response) -> Result<Resp> {
    let status = response.status();
    let bytes = response
        .bytes()
        .map_err(|e| Error::Transport(format!("reading reply from {url}: {e}")))?;
    if status.is_success() {
        return serde_json::from_slice(&bytes).map_err(|e| {
            Error::Protocol(format!("malformed reply from {url}: {e}"))
        });
    }
    match serde_json::from_slice::<api::ErrorBody>(&bytes) {
        Ok(body) => Err(body.to_error()),
        Err(_) => Err(Error::Protocol(format!(
            "HTTP {status} from {url} without a decodable error body"
        ))),
    }
}
