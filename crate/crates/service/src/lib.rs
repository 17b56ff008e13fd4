//! Network services around the judgebox sandbox: the worker node, the
//! load-balancing gateway, and blocking clients for both plus an HTTP
//! chat-completion provider for judge synthesis.

pub mod client;
pub mod config;
pub mod gateway;
pub mod llm;
pub mod worker;

use serde::{Deserialize, Serialize};

/// Body of every non-2xx JSON response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// Response header carrying the gateway's routing trace.
pub const ROUTE_TRACE_HEADER: &str = "x-judgebox-route";
