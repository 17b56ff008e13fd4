use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::worker::{now_ms, WorkerStatus};

const TRANSITION_LOG_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Healthy,
    Unhealthy,
    Draining,
    Removed,
}

/// healthy <-> unhealthy, {healthy, unhealthy} -> draining -> removed.
pub fn transition_allowed(from: NodeState, to: NodeState) -> bool {
    use NodeState::*;
    matches!(
        (from, to),
        (Healthy, Unhealthy) | (Unhealthy, Healthy) | (Healthy, Draining) | (Unhealthy, Draining) | (Draining, Removed)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    pub address: String,
    pub state: NodeState,
    pub last_status: Option<WorkerStatus>,
    pub consecutive_failures: u32,
    pub enrolled_at: u64,
    /// Requests this gateway currently has open against the node.
    pub in_flight: usize,
    /// Responses received from the node (any status except 503).
    pub delivered_total: u64,
    /// Attempts that failed to connect or were shed.
    pub failed_total: u64,
    /// From the node's own received counter between the last two probes.
    pub requests_per_s: f64,
    pub last_probe_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub node_id: String,
    pub from: Option<NodeState>,
    pub to: NodeState,
    pub at: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {node} cannot go from {from:?} to {to:?}")]
    InvalidTransition { node: String, from: NodeState, to: NodeState },
}

struct Node {
    record: NodeRecord,
    in_flight: Arc<AtomicUsize>,
    consecutive_successes: u32,
    last_received: Option<(Instant, u64)>,
    /// Draining only: a probe after the drain found the node idle or gone.
    drain_settled: bool,
    /// Bumped by every drain so probes issued earlier cannot settle it.
    drain_epoch: u64,
}

/// A node picked for one routing attempt.
/// A node to probe, with the drain epoch current when the probe was issued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTarget {
    pub node_id: String,
    pub address: String,
    pub epoch: u64,
}

#[derive(Debug, Clone)]
pub struct Target {
    pub node_id: String,
    pub address: String,
    pub in_flight: Arc<AtomicUsize>,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    transitions: VecDeque<Transition>,
}

pub struct Registry {
    inner: RwLock<Inner>,
    cursor: AtomicUsize,
    next_id: AtomicU64,
    failure_threshold: u32,
    recovery_threshold: u32,
}

impl Inner {
    fn node_mut(&mut self, id: &str) -> Result<&mut Node, RegistryError> {
        self.nodes
            .iter_mut()
            .find(|n| n.record.node_id == id && n.record.state != NodeState::Removed)
            .ok_or_else(|| RegistryError::UnknownNode(id.to_string()))
    }

    fn set_state(&mut self, id: &str, to: NodeState, reason: &str) -> Result<(), RegistryError> {
        let node = self.node_mut(id)?;
        let from = node.record.state;
        if from == to {
            return Ok(());
        }
        if !transition_allowed(from, to) {
            return Err(RegistryError::InvalidTransition { node: id.to_string(), from, to });
        }
        node.record.state = to;
        if to == NodeState::Healthy {
            node.record.consecutive_failures = 0;
        }
        node.consecutive_successes = 0;
        tracing::info!(node = id, ?from, ?to, reason, "node transition");
        self.log(Transition { node_id: id.to_string(), from: Some(from), to, at: now_ms(), reason: reason.to_string() });
        Ok(())
    }

    fn log(&mut self, t: Transition) {
        if self.transitions.len() == TRANSITION_LOG_CAPACITY {
            self.transitions.pop_front();
        }
        self.transitions.push_back(t);
    }
}

impl Registry {
    pub fn new(failure_threshold: u32, recovery_threshold: u32) -> Self {
        Self {
            inner: RwLock::new(Inner::default()),
            cursor: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
            failure_threshold: failure_threshold.max(1),
            recovery_threshold: recovery_threshold.max(1),
        }
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a node with the outcome of its first probe: healthy on
    /// success, unhealthy (and unroutable) otherwise.
    pub fn enroll(&self, address: &str, node_id: Option<String>, probe: Result<WorkerStatus, String>) -> NodeRecord {
        let node_id = node_id.unwrap_or_else(|| format!("node-{}", self.next_id.fetch_add(1, Ordering::SeqCst)));
        let ok = probe.is_ok();
        let (state, failures, reason) = match &probe {
            Ok(_) => (NodeState::Healthy, 0, "enrolled; probe ok".to_string()),
            Err(e) => (NodeState::Unhealthy, self.failure_threshold, format!("enrolled; probe failed: {e}")),
        };
        let now = now_ms();
        let record = NodeRecord {
            node_id: node_id.clone(),
            address: address.trim_end_matches('/').to_string(),
            state,
            last_status: probe.ok(),
            consecutive_failures: failures,
            enrolled_at: now,
            in_flight: 0,
            delivered_total: 0,
            failed_total: 0,
            requests_per_s: 0.0,
            last_probe_at: Some(now),
        };
        let mut inner = self.write();
        let last_received = record.last_status.as_ref().map(|s| (Instant::now(), s.received_total));
        inner.nodes.push(Node { record: record.clone(), in_flight: Arc::new(AtomicUsize::new(0)), consecutive_successes: 0, last_received, drain_settled: false, drain_epoch: 0 });
        inner.log(Transition { node_id, from: None, to: state, at: now, reason });
        tracing::info!(node = %record.node_id, address = %record.address, ok, "node enrolled");
        record
    }

    /// Next healthy node in round-robin order that is not in `tried`.
    pub fn next_target(&self, tried: &[String]) -> Option<Target> {
        let inner = self.read();
        let healthy: Vec<&Node> = inner.nodes.iter().filter(|n| n.record.state == NodeState::Healthy).collect();
        if healthy.is_empty() {
            return None;
        }
        let start = self.cursor.fetch_add(1, Ordering::SeqCst);
        (0..healthy.len())
            .map(|i| healthy[(start + i) % healthy.len()])
            .find(|n| !tried.contains(&n.record.node_id))
            .map(|n| Target { node_id: n.record.node_id.clone(), address: n.record.address.clone(), in_flight: n.in_flight.clone() })
    }

    /// Nodes the health loop should probe.
    pub fn probe_targets(&self) -> Vec<ProbeTarget> {
        self.read()
            .nodes
            .iter()
            .filter(|n| n.record.state != NodeState::Removed)
            .map(|n| ProbeTarget {
                node_id: n.record.node_id.clone(),
                address: n.record.address.clone(),
                epoch: n.drain_epoch,
            })
            .collect()
    }

    /// Records a probe issued just now.
    pub fn record_probe(&self, id: &str, result: Result<WorkerStatus, String>) {
        let epoch = self.read().nodes.iter().find(|n| n.record.node_id == id).map_or(0, |n| n.drain_epoch);
        self.record_probe_for(id, epoch, result);
    }

    /// Records a probe issued when the node's drain epoch was `epoch`.
    pub fn record_probe_for(&self, id: &str, epoch: u64, result: Result<WorkerStatus, String>) {
        let mut inner = self.write();
        let failure_threshold = self.failure_threshold;
        let recovery_threshold = self.recovery_threshold;
        let Ok(node) = inner.node_mut(id) else { return };
        node.record.last_probe_at = Some(now_ms());
        let state = node.record.state;
        if state == NodeState::Draining && epoch == node.drain_epoch {
            node.drain_settled = result.as_ref().map_or(true, |s| s.in_flight == 0 && s.queue_depth == 0);
        }
        let change = match result {
            Ok(status) => {
                let now = Instant::now();
                if let Some((then, prev)) = node.last_received {
                    let dt = now.duration_since(then).as_secs_f64();
                    if dt > 0.0 {
                        node.record.requests_per_s = status.received_total.saturating_sub(prev) as f64 / dt;
                    }
                }
                node.last_received = Some((now, status.received_total));
                node.record.last_status = Some(status);
                node.consecutive_successes += 1;
                if state == NodeState::Unhealthy {
                    (node.consecutive_successes >= recovery_threshold).then_some((NodeState::Healthy, "recovered"))
                } else {
                    node.record.consecutive_failures = 0;
                    None
                }
            }
            Err(e) => {
                tracing::debug!(node = id, error = %e, "probe failed");
                node.consecutive_successes = 0;
                node.record.requests_per_s = 0.0;
                node.record.consecutive_failures = node.record.consecutive_failures.saturating_add(1);
                (state == NodeState::Healthy && node.record.consecutive_failures >= failure_threshold)
                    .then_some((NodeState::Unhealthy, "probe failures reached threshold"))
            }
        };
        if let Some((to, reason)) = change {
            let _ = inner.set_state(id, to, reason);
        }
    }

    /// Counts a failed routing attempt toward the failure threshold.
    pub fn record_route_failure(&self, id: &str, unreachable: bool) {
        let mut inner = self.write();
        let threshold = self.failure_threshold;
        let Ok(node) = inner.node_mut(id) else { return };
        node.record.failed_total += 1;
        if !unreachable {
            return;
        }
        node.consecutive_successes = 0;
        node.record.consecutive_failures = node.record.consecutive_failures.saturating_add(1);
        if node.record.state == NodeState::Healthy && node.record.consecutive_failures >= threshold {
            let _ = inner.set_state(id, NodeState::Unhealthy, "requests could not reach the node");
        }
    }

    pub fn record_delivery(&self, id: &str) {
        if let Ok(node) = self.write().node_mut(id) {
            node.record.delivered_total += 1;
        }
    }

    pub fn drain(&self, id: &str) -> Result<(), RegistryError> {
        let mut inner = self.write();
        inner.set_state(id, NodeState::Draining, "drain requested")?;
        let node = inner.node_mut(id)?;
        node.drain_settled = false;
        node.drain_epoch += 1;
        Ok(())
    }

    pub fn remove(&self, id: &str) -> Result<(), RegistryError> {
        self.write().set_state(id, NodeState::Removed, "remove requested")
    }

    /// Moves idle draining nodes to removed. A node counts as idle when this
    /// gateway has nothing open against it and a probe taken after the drain
    /// began found nothing in flight or queued (or found the node gone).
    pub fn retire_drained(&self) -> Vec<String> {
        let mut inner = self.write();
        let idle: Vec<String> = inner
            .nodes
            .iter()
            .filter(|n| n.record.state == NodeState::Draining && n.drain_settled)
            .filter(|n| n.in_flight.load(Ordering::SeqCst) == 0)
            .map(|n| n.record.node_id.clone())
            .collect();
        for id in &idle {
            let _ = inner.set_state(id, NodeState::Removed, "drain complete");
        }
        idle
    }

    pub fn get(&self, id: &str) -> Option<NodeRecord> {
        self.read()
            .nodes
            .iter()
            .find(|n| n.record.node_id == id && n.record.state != NodeState::Removed)
            .map(|n| NodeRecord { in_flight: n.in_flight.load(Ordering::SeqCst), ..n.record.clone() })
    }

    /// Every node that has not been removed, in enrollment order.
    pub fn records(&self) -> Vec<NodeRecord> {
        self.read()
            .nodes
            .iter()
            .filter(|n| n.record.state != NodeState::Removed)
            .map(|n| NodeRecord { in_flight: n.in_flight.load(Ordering::SeqCst), ..n.record.clone() })
            .collect()
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.read().transitions.iter().cloned().collect()
    }
}
