//! TCP connect-time RTT probe.
//!
//! One measurement is the wall-clock time from connect start to connect
//! success. A probe performs `runs` measurements and reports their median
//! in milliseconds (mean of the middle two for even counts), which resists
//! the occasional outlier handshake. The dialer is a trait so tests can
//! inject scripted durations.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

/// One TCP connect attempt, reporting elapsed milliseconds.
pub trait Dialer {
    fn connect_ms(&mut self, host: &str, port: u16, timeout_ms: u64) -> Result<f64, String>;
}

/// The real dialer: resolve, connect with timeout, time it.
pub struct TcpDialer;

impl Dialer for TcpDialer {
    fn connect_ms(&mut self, host: &str, port: u16, timeout_ms: u64) -> Result<f64, String> {
        let addr = (host, port)
            .to_socket_addrs()
            .map_err(|e| format!("resolve {host}:{port}: {e}"))?
            .next()
            .ok_or_else(|| format!("resolve {host}:{port}: no addresses"))?;
        let timeout = Duration::from_millis(timeout_ms.max(1));
        let start = Instant::now();
        let stream = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| format!("connect {addr}: {e}"))?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        drop(stream);
        Ok(elapsed)
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("runs must be >= 1")]
    NoRuns,
    #[error("all {} probe runs failed: {}", .failures.len(), .failures.join("; "))]
    AllRunsFailed { failures: Vec<String> },
}

/// Probe `host:port` with the real TCP dialer.
pub fn measure_rtt(host: &str, port: u16, runs: u32, timeout_ms: u64) -> Result<f64, ProbeError> {
    measure_rtt_with(&mut TcpDialer, host, port, runs, timeout_ms)
}

/// Probe through an injected dialer. Runs that fail are recorded; the
/// median is taken over the successful runs, and only a fully failed
/// probe is an error.
pub fn measure_rtt_with(
    dialer: &mut dyn Dialer,
    host: &str,
    port: u16,
    runs: u32,
    timeout_ms: u64,
) -> Result<f64, ProbeError> {
    if runs == 0 {
        return Err(ProbeError::NoRuns);
    }
    let mut successes = Vec::with_capacity(runs as usize);
    let mut failures = Vec::new();
    for run in 1..=runs {
        match dialer.connect_ms(host, port, timeout_ms) {
            Ok(ms) => successes.push(ms),
            Err(reason) => failures.push(format!("run {run}: {reason}")),
        }
    }
    if successes.is_empty() {
        return Err(ProbeError::AllRunsFailed { failures });
    }
    Ok(median(&mut successes))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("probe durations are finite"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}
