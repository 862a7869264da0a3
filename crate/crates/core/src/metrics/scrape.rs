//! Metrics provider that scrapes exposition endpoints and probes RTT.
//!
//! Each snapshot fetches the node's exposition text, extracts the CPU
//! counters, and derives CPU% as a rate over the window since the previous
//! scrape — so the very first snapshot of a node has no CPU value yet.
//! RTT comes from the TCP connect prober against the node's probe target.
//! A failure only marks that node unavailable for the cycle; other nodes
//! are unaffected.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;

use super::cpu::{cpu_counters_from_samples, cpu_percent_from_counters, window_from_counters};
use super::exposition::parse_exposition;
use super::probe::{measure_rtt_with, Dialer, TcpDialer};
use super::{MetricsError, MetricsProvider, NodeMetrics};

/// Fetches the raw exposition payload for a scrape URL.
pub trait ExpositionFetcher: Send {
    fn fetch(&mut self, url: &str) -> Result<Vec<u8>, String>;
}

/// Minimal HTTP GET over plain TCP, enough for exposition endpoints.
///
/// Supports `http://host:port[/path]` only. The request is HTTP/1.0 so the
/// body is simply everything after the headers until EOF (no chunked
/// transfer coding to deal with).
pub struct HttpFetcher {
    pub timeout_ms: u64,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        HttpFetcher { timeout_ms: 3_000 }
    }
}

impl ExpositionFetcher for HttpFetcher {
    fn fetch(&mut self, url: &str) -> Result<Vec<u8>, String> {
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| format!("unsupported URL `{url}`: only http:// is supported"))?;
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let addr = authority
            .to_socket_addrs()
            .map_err(|e| format!("resolve {authority}: {e}"))?
            .next()
            .ok_or_else(|| format!("resolve {authority}: no addresses"))?;
        let timeout = Duration::from_millis(self.timeout_ms.max(1));
        let mut stream =
            TcpStream::connect_timeout(&addr, timeout).map_err(|e| format!("connect: {e}"))?;
        stream.set_read_timeout(Some(timeout)).ok();
        stream.set_write_timeout(Some(timeout)).ok();
        let request =
            format!("GET {path} HTTP/1.0\r\nHost: {authority}\r\nAccept: text/plain\r\n\r\n");
        stream
            .write_all(request.as_bytes())
            .map_err(|e| format!("send request: {e}"))?;
        let mut response = Vec::new();
        stream
            .read_to_end(&mut response)
            .map_err(|e| format!("read response: {e}"))?;
        let header_end = response
            .windows(4)
            .position(|w| w == b"\r\n\r\n")
            .ok_or_else(|| "malformed HTTP response: missing header terminator".to_string())?;
        let head = String::from_utf8_lossy(&response[..header_end]);
        let status_line = head.lines().next().unwrap_or("");
        let code = status_line
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse::<u16>().ok())
            .ok_or_else(|| format!("malformed HTTP status line `{status_line}`"))?;
        if code != 200 {
            return Err(format!("HTTP status {code}"));
        }
        Ok(response[header_end + 4..].to_vec())
    }
}

/// Where to scrape and probe one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrapeTarget {
    pub metrics_url: String,
    pub rtt_host: String,
    pub rtt_port: u16,
}

struct PrevScrape {
    t_ms: u64,
    counters: BTreeMap<String, (f64, f64)>,
}

struct ScrapeState {
    fetcher: Box<dyn ExpositionFetcher>,
    dialer: Box<dyn Dialer + Send>,
    prev: HashMap<String, PrevScrape>,
}

/// [`MetricsProvider`] over exposition endpoints plus RTT probe targets.
/// Snapshot calls are serialized on an internal mutex.
pub struct ScrapeProvider {
    targets: IndexMap<String, ScrapeTarget>,
    state: Mutex<ScrapeState>,
    probe_runs: u32,
    probe_timeout_ms: u64,
    started: Instant,
    epoch_base_ms: u64,
    clock: Option<Box<dyn Fn() -> u64 + Send + Sync>>,
}

/// Build a provider from a node→scrape-URL map and a node→RTT-target map.
/// Every node must appear in both maps.
pub fn scrape_provider(
    endpoints: IndexMap<String, String>,
    rtt_targets: IndexMap<String, (String, u16)>,
) -> Result<ScrapeProvider, MetricsError> {
    let mut targets = IndexMap::new();
    for (node, metrics_url) in endpoints {
        let (rtt_host, rtt_port) =
            rtt_targets
                .get(&node)
                .cloned()
                .ok_or_else(|| MetricsError::Unavailable {
                    node: node.clone(),
                    cause: "no RTT target configured".to_string(),
                })?;
        targets.insert(
            node,
            ScrapeTarget {
                metrics_url,
                rtt_host,
                rtt_port,
            },
        );
    }
    for node in rtt_targets.keys() {
        if !targets.contains_key(node) {
            return Err(MetricsError::Unavailable {
                node: node.clone(),
                cause: "no metrics endpoint configured".to_string(),
            });
        }
    }
    Ok(ScrapeProvider::new(targets))
}

impl ScrapeProvider {
    pub fn new(targets: IndexMap<String, ScrapeTarget>) -> Self {
        let epoch_base_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        ScrapeProvider {
            targets,
            state: Mutex::new(ScrapeState {
                fetcher: Box::new(HttpFetcher::default()),
                dialer: Box::new(TcpDialer),
                prev: HashMap::new(),
            }),
            probe_runs: 5,
            probe_timeout_ms: 1_000,
            started: Instant::now(),
            epoch_base_ms,
            clock: None,
        }
    }

    pub fn with_fetcher(mut self, fetcher: Box<dyn ExpositionFetcher>) -> Self {
        self.state.get_mut().unwrap().fetcher = fetcher;
        self
    }

    pub fn with_dialer(mut self, dialer: Box<dyn Dialer + Send>) -> Self {
        self.state.get_mut().unwrap().dialer = dialer;
        self
    }

    pub fn with_probe(mut self, runs: u32, timeout_ms: u64) -> Self {
        self.probe_runs = runs;
        self.probe_timeout_ms = timeout_ms;
        self
    }

    /// Replace the wall clock with a deterministic one (test hook).
    pub fn with_clock(mut self, clock: Box<dyn Fn() -> u64 + Send + Sync>) -> Self {
        self.clock = Some(clock);
        self
    }

    fn now_ms(&self) -> u64 {
        match &self.clock {
            Some(clock) => clock(),
            None => self.started.elapsed().as_millis() as u64,
        }
    }

    fn unavailable(&self, node: &str, cause: impl Into<String>) -> MetricsError {
        MetricsError::Unavailable {
            node: node.to_string(),
            cause: cause.into(),
        }
    }
}

impl MetricsProvider for ScrapeProvider {
    fn list_nodes(&self) -> Vec<String> {
        self.targets.keys().cloned().collect()
    }

    fn snapshot(&self, node_id: &str) -> Result<NodeMetrics, MetricsError> {
        let target = self
            .targets
            .get(node_id)
            .ok_or_else(|| MetricsError::UnknownNode(node_id.to_string()))?;
        let now_ms = self.now_ms();
        let mut state = self.state.lock().expect("scrape state poisoned");

        let body = state
            .fetcher
            .fetch(&target.metrics_url)
            .map_err(|cause| self.unavailable(node_id, format!("scrape failed: {cause}")))?;
        let samples = parse_exposition(&body)
            .map_err(|e| self.unavailable(node_id, format!("exposition parse failed: {e}")))?;
        let counters = cpu_counters_from_samples(&samples);

        let prev = state.prev.insert(
            node_id.to_string(),
            PrevScrape {
                t_ms: now_ms,
                counters: counters.clone(),
            },
        );
        let cpu_percent = prev.and_then(|p| {
            let window = window_from_counters(&p.counters, p.t_ms, &counters, now_ms)?;
            match cpu_percent_from_counters(&window) {
                Ok(percent) => Some(percent),
                Err(e) => {
                    log::warn!("cpu derivation for {node_id} unavailable this cycle: {e}");
                    None
                }
            }
        });

        let rtt = measure_rtt_with(
            state.dialer.as_mut(),
            &target.rtt_host,
            target.rtt_port,
            self.probe_runs,
            self.probe_timeout_ms,
        )
        .map_err(|e| self.unavailable(node_id, format!("rtt probe failed: {e}")))?;

        NodeMetrics::new(
            node_id,
            cpu_percent,
            Some(rtt),
            self.epoch_base_ms.saturating_add(now_ms),
        )
    }
}
