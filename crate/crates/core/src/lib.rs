//! Engine for intent-driven application relocation on a simulated
//! edge/cloud cluster.
//!
//! The crate is organized around the closed control loop:
//!
//! * [`intent`] — the three input documents (orchestrator config, intent,
//!   app deployment) and pure condition/intent evaluation.
//! * [`metrics`] — node metrics behind the [`metrics::MetricsProvider`]
//!   contract: an exposition-text parser, CPU% derivation from scraped
//!   counters, a TCP RTT prober, and a scraping provider.
//! * [`sim`] — a deterministic simulated cluster with fault injection,
//!   implementing both the provider and the [`sim::ClusterBackend`]
//!   contract on a virtual clock.
//! * [`orch`] — the control loop itself: intent checking, target
//!   selection, make-before-break relocation.
//! * [`scenario`] — scripted experiment replay producing a
//!   [`scenario::Timeline`].
//! * [`report`] — static SVG rendering of a timeline.

pub mod docfmt;
pub mod intent;
pub mod metrics;
pub mod orch;
pub mod report;
pub mod scenario;
pub mod sim;
