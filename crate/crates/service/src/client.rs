//! Blocking HTTP clients for the gateway and for a single worker.
//!
//! These use `reqwest::blocking`, so call them from plain threads, not from
//! inside a tokio runtime.

use std::time::Duration;

use judgebox_core::eval::{DispatchError, Dispatcher};
use judgebox_core::{SubmissionRequest, VerificationReport};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::gateway::{parse_trace, ClusterSnapshot, Transition};
use crate::worker::{LogLine, WorkerStatus};
use crate::{ErrorBody, ROUTE_TRACE_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status}: {body:?}")]
    Status { status: u16, body: ErrorBody },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Transport(_) => None,
        }
    }
}

fn check(resp: Response) -> Result<Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().unwrap_or_default();
    let body = serde_json::from_str(&text)
        .unwrap_or(ErrorBody { error: status.canonical_reason().unwrap_or("error").to_lowercase(), message: text });
    Err(ClientError::Status { status: status.as_u16(), body })
}

fn json<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    Ok(check(resp)?.json()?)
}

fn build(timeout: Duration) -> Client {
    Client::builder().timeout(timeout).build().expect("http client")
}

/// A submission answered through the gateway, with the nodes it visited.
#[derive(Debug, Clone)]
pub struct Routed {
    pub report: VerificationReport,
    /// `(node_id, outcome)` per attempt.
    pub route: Vec<(String, String)>,
}

#[derive(Clone)]
pub struct GatewayClient {
    base: String,
    http: Client,
}

impl GatewayClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self::with_timeout(base, Duration::from_secs(600))
    }

    pub fn with_timeout(base: impl Into<String>, timeout: Duration) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: build(timeout) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post_json<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        json(self.http.post(self.url(path)).json(body).send()?)
    }

    /// Submits one request; the route trace comes from the response header.
    pub fn submit(&self, request: &SubmissionRequest) -> Result<Routed, ClientError> {
        let resp = self.http.post(self.url("/submit")).json(request).send()?;
        let route = resp
            .headers()
            .get(ROUTE_TRACE_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(parse_trace)
            .unwrap_or_default();
        let report = json(resp)?;
        Ok(Routed { report, route })
    }

    /// One JSON value per request: a report or an error object.
    pub fn submit_batch(&self, requests: &[SubmissionRequest]) -> Result<Vec<serde_json::Value>, ClientError> {
        self.post_json("/submit_batch", requests)
    }

    pub fn cluster(&self) -> Result<ClusterSnapshot, ClientError> {
        json(self.http.get(self.url("/cluster")).send()?)
    }

    pub fn transitions(&self) -> Result<Vec<Transition>, ClientError> {
        json(self.http.get(self.url("/transitions")).send()?)
    }

    pub fn enroll(&self, address: &str, node_id: Option<&str>) -> Result<ClusterSnapshot, ClientError> {
        self.post_json("/nodes", &serde_json::json!({ "address": address, "node_id": node_id }))
    }

    pub fn drain(&self, node_id: &str, shutdown: bool) -> Result<ClusterSnapshot, ClientError> {
        json(self.http.post(self.url(&format!("/nodes/{node_id}/drain?shutdown={shutdown}"))).send()?)
    }

    pub fn remove(&self, node_id: &str) -> Result<ClusterSnapshot, ClientError> {
        json(self.http.post(self.url(&format!("/nodes/{node_id}/remove"))).send()?)
    }

    pub fn reload(&self, node_id: &str) -> Result<ClusterSnapshot, ClientError> {
        json(self.http.post(self.url(&format!("/nodes/{node_id}/reload"))).send()?)
    }

    pub fn logs(&self, node_id: &str, tail: usize) -> Result<Vec<LogLine>, ClientError> {
        json(self.http.get(self.url(&format!("/nodes/{node_id}/logs?tail={tail}"))).send()?)
    }
}

fn dispatch_error(value: &serde_json::Value) -> DispatchError {
    let kind = value.get("error").and_then(|v| v.as_str()).unwrap_or("");
    let message = value.get("message").and_then(|v| v.as_str()).unwrap_or("").to_string();
    match kind {
        "no_capacity" | "overloaded" | "draining" => DispatchError::NoCapacity(message),
        "bad_request" => DispatchError::BadRequest(message),
        _ => DispatchError::Transport(format!("{kind}: {message}")),
    }
}

impl Dispatcher for GatewayClient {
    fn dispatch_batch(&self, requests: &[SubmissionRequest]) -> Vec<Result<VerificationReport, DispatchError>> {
        match self.submit_batch(requests) {
            Ok(values) if values.len() == requests.len() => values
                .into_iter()
                .map(|v| {
                    if v.get("error").is_some() {
                        Err(dispatch_error(&v))
                    } else {
                        serde_json::from_value(v).map_err(|e| DispatchError::Transport(format!("bad report: {e}")))
                    }
                })
                .collect(),
            Ok(values) => {
                let m = format!("gateway answered {} of {} requests", values.len(), requests.len());
                requests.iter().map(|_| Err(DispatchError::Transport(m.clone()))).collect()
            }
            Err(e) => {
                let err = match e.status() {
                    Some(503) => DispatchError::NoCapacity(e.to_string()),
                    Some(400) => DispatchError::BadRequest(e.to_string()),
                    _ => DispatchError::Transport(e.to_string()),
                };
                requests.iter().map(|_| Err(err.clone())).collect()
            }
        }
    }
}

/// Talks to one worker directly.
#[derive(Clone)]
pub struct WorkerClient {
    base: String,
    http: Client,
}

impl WorkerClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: build(Duration::from_secs(600)) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn submit(&self, request: &SubmissionRequest) -> Result<VerificationReport, ClientError> {
        json(self.http.post(self.url("/submit")).json(request).send()?)
    }

    /// Posts a raw body; handy for malformed-input checks.
    pub fn submit_raw(&self, body: &str) -> Result<(StatusCode, String), ClientError> {
        let resp = self
            .http
            .post(self.url("/submit"))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()?;
        let status = resp.status();
        Ok((status, resp.text()?))
    }

    pub fn health(&self) -> Result<WorkerStatus, ClientError> {
        json(self.http.get(self.url("/health")).send()?)
    }

    pub fn logs(&self, tail: usize) -> Result<Vec<LogLine>, ClientError> {
        json(self.http.get(self.url(&format!("/logs?tail={tail}"))).send()?)
    }

    pub fn drain(&self) -> Result<WorkerStatus, ClientError> {
        json(self.http.post(self.url("/drain")).send()?)
    }

    pub fn reload(&self) -> Result<WorkerStatus, ClientError> {
        json(self.http.post(self.url("/reload")).send()?)
    }
}
