use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const DEFAULT_LOG_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    /// Monotonic per worker; clients follow a log by remembering the last one.
    pub seq: u64,
    pub ts_ms: u64,
    pub level: String,
    pub message: String,
}

/// Fixed-capacity ring of the most recent log lines.
pub struct LogRing {
    inner: Mutex<(VecDeque<LogLine>, u64)>,
    capacity: usize,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl LogRing {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { inner: Mutex::new((VecDeque::with_capacity(capacity), 0)), capacity }
    }

    pub fn push(&self, level: &str, message: impl Into<String>) {
        let mut guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let (lines, next) = &mut *guard;
        if lines.len() == self.capacity {
            lines.pop_front();
        }
        *next += 1;
        lines.push_back(LogLine { seq: *next, ts_ms: now_ms(), level: level.to_string(), message: message.into() });
    }

    pub fn tail(&self, n: usize) -> Vec<LogLine> {
        let guard = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let skip = guard.0.len().saturating_sub(n);
        guard.0.iter().skip(skip).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Allocated slots; stays at the configured capacity.
    pub fn allocated(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).0.capacity()
    }
}
