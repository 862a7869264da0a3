//! Node metrics for the control loop, behind one provider contract.
//!
//! Three concrete sources exist: the exposition-text scraper built here
//! ([`scrape::ScrapeProvider`]), the TCP RTT prober ([`probe`]), and the
//! cluster simulator (`crate::sim`, which implements [`MetricsProvider`]
//! directly).

pub mod cpu;
pub mod exposition;
pub mod probe;
pub mod scrape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::MetricKind;

/// One node's metrics snapshot as consumed by the control loop.
///
/// Fields are optional because a source can be partially available: the
/// scrape provider cannot derive CPU% until it has two scrapes, while the
/// RTT probe already works. `rtt_ue_to_app_ms` is the hypothetical UE→APP
/// RTT if the app were hosted on this node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node_id: String,
    pub cpu_percent: Option<f64>,
    pub rtt_ue_to_app_ms: Option<f64>,
    pub capture_time_ms: u64,
}

impl NodeMetrics {
    /// Build a snapshot, enforcing the range invariants on present values.
    pub fn new(
        node_id: impl Into<String>,
        cpu_percent: Option<f64>,
        rtt_ue_to_app_ms: Option<f64>,
        capture_time_ms: u64,
    ) -> Result<Self, MetricsError> {
        let node_id = node_id.into();
        if let Some(cpu) = cpu_percent {
            if !cpu.is_finite() || !(0.0..=100.0).contains(&cpu) {
                return Err(MetricsError::InvalidValue {
                    node: node_id,
                    metric: MetricKind::NodeCpuPercent,
                    value: cpu,
                });
            }
        }
        if let Some(rtt) = rtt_ue_to_app_ms {
            if !rtt.is_finite() || rtt < 0.0 {
                return Err(MetricsError::InvalidValue {
                    node: node_id,
                    metric: MetricKind::RttUeToAppMs,
                    value: rtt,
                });
            }
        }
        Ok(NodeMetrics {
            node_id,
            cpu_percent,
            rtt_ue_to_app_ms,
            capture_time_ms,
        })
    }

    pub fn metric(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::RttUeToAppMs => self.rtt_ue_to_app_ms,
            MetricKind::NodeCpuPercent => self.cpu_percent,
        }
    }

    /// True when every metric kind has a value.
    pub fn is_complete(&self) -> bool {
        self.cpu_percent.is_some() && self.rtt_ue_to_app_ms.is_some()
    }
}

/// Provider failures. `Unavailable` is scoped to one node and one cycle;
/// it never poisons other nodes' snapshots.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("metrics unavailable for node `{node}`: {cause}")]
    Unavailable { node: String, cause: String },
    #[error("node `{node}` reported {metric} = {value}, outside the valid range")]
    InvalidValue {
        node: String,
        metric: MetricKind,
        value: f64,
    },
}

/// The uniform source of node metrics for the orchestrator.
///
/// `snapshot` for a listed node returns a `NodeMetrics` (possibly with
/// absent values, see [`NodeMetrics`]) or a typed error. Implementations
/// must either tolerate concurrent snapshot calls or serialize internally;
/// both implementations in this crate serialize on an internal mutex.
pub trait MetricsProvider {
    fn list_nodes(&self) -> Vec<String>;
    fn snapshot(&self, node_id: &str) -> Result<NodeMetrics, MetricsError>;
}
