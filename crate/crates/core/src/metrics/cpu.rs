//! CPU utilisation derived from cumulative per-core busy/idle counters.
//!
//! Usage is the busy fraction of the window between two consecutive
//! scrapes, aggregated over cores: `100 · Σ Δbusy / (Σ Δbusy + Σ Δidle)`.
//! A shrinking counter means the node rebooted or the exporter restarted;
//! the window is then unusable.

use std::collections::BTreeMap;

use thiserror::Error;

use super::exposition::MetricSample;

/// Cumulative busy/idle seconds for one core at both window edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreWindow {
    pub busy_t0_s: f64,
    pub idle_t0_s: f64,
    pub busy_t1_s: f64,
    pub idle_t1_s: f64,
}

/// Per-core counters captured at two times `t0 < t1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuCounterWindow {
    pub t0_ms: u64,
    pub t1_ms: u64,
    pub cores: Vec<CoreWindow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CpuWindowError {
    #[error("window is not forward in time (t0={t0_ms} ms, t1={t1_ms} ms)")]
    NotForward { t0_ms: u64, t1_ms: u64 },
    #[error("counter reset detected on core {core}")]
    CounterReset { core: usize },
    #[error("counter for core {core} is not finite")]
    NonFinite { core: usize },
    #[error("zero total busy+idle delta over the window")]
    ZeroActivity,
}

/// Aggregate CPU usage percent over the window. Always in `[0, 100]`.
pub fn cpu_percent_from_counters(window: &CpuCounterWindow) -> Result<f64, CpuWindowError> {
    if window.t1_ms <= window.t0_ms {
        return Err(CpuWindowError::NotForward {
            t0_ms: window.t0_ms,
            t1_ms: window.t1_ms,
        });
    }
    let mut busy = 0.0;
    let mut idle = 0.0;
    for (core, w) in window.cores.iter().enumerate() {
        let all = [w.busy_t0_s, w.idle_t0_s, w.busy_t1_s, w.idle_t1_s];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CpuWindowError::NonFinite { core });
        }
        let d_busy = w.busy_t1_s - w.busy_t0_s;
        let d_idle = w.idle_t1_s - w.idle_t0_s;
        if d_busy < 0.0 || d_idle < 0.0 {
            return Err(CpuWindowError::CounterReset { core });
        }
        busy += d_busy;
        idle += d_idle;
    }
    let total = busy + idle;
    if total <= 0.0 {
        return Err(CpuWindowError::ZeroActivity);
    }
    Ok(100.0 * busy / total)
}

/// Cumulative (busy_s, idle_s) per core extracted from scraped samples.
///
/// Recognizes `node_cpu_seconds_total{cpu="...",mode="..."}`; `mode=idle`
/// counts as idle, every other mode as busy. Non-finite samples are
/// ignored.
pub fn cpu_counters_from_samples(samples: &[MetricSample]) -> BTreeMap<String, (f64, f64)> {
    let mut per_core: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for sample in samples {
        if sample.name != "node_cpu_seconds_total" {
            continue;
        }
        let (Some(core), Some(mode)) = (sample.labels.get("cpu"), sample.labels.get("mode"))
        else {
            continue;
        };
        let Some(value) = sample.value.finite() else {
            continue;
        };
        let entry = per_core.entry(core.clone()).or_insert((0.0, 0.0));
        if mode == "idle" {
            entry.1 += value;
        } else {
            entry.0 += value;
        }
    }
    per_core
}

/// Build a counter window from two consecutive scrapes' per-core counters.
/// Cores present in only one scrape are dropped; returns `None` when no
/// core overlaps.
pub fn window_from_counters(
    prev: &BTreeMap<String, (f64, f64)>,
    t0_ms: u64,
    cur: &BTreeMap<String, (f64, f64)>,
    t1_ms: u64,
) -> Option<CpuCounterWindow> {
    let cores: Vec<CoreWindow> = prev
        .iter()
        .filter_map(|(core, &(busy0, idle0))| {
            cur.get(core).map(|&(busy1, idle1)| CoreWindow {
                busy_t0_s: busy0,
                idle_t0_s: idle0,
                busy_t1_s: busy1,
                idle_t1_s: idle1,
            })
        })
        .collect();
    if cores.is_empty() {
        return None;
    }
    Some(CpuCounterWindow { t0_ms, t1_ms, cores })
}
