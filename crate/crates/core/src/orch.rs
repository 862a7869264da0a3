//! The closed control loop: each check interval, evaluate the intent
//! against the hosting node and, on violation, pick a valid target and
//! relocate the app make-before-break through the [`ClusterBackend`].
//!
//! Target selection prefers nodes on the intent's priority list; among
//! unprioritized candidates it takes a seeded uniform draw from the nodes
//! whose CPU is within `cpu_tie_epsilon` of the minimum ("similar load").
//! Every relocation arms a cooldown of `cooldown_cycles` cycles during
//! which no further relocation fires, which keeps the loop from flapping
//! when a metric oscillates at a threshold.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::{
    evaluate_intent, AppDeployment, Intent, IntentEvaluation, MetricKind, OrchestratorConfig,
};
use crate::metrics::MetricsProvider;
use crate::sim::{BackendError, ClusterBackend, ReplicaStatus};

/// What a control cycle did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    /// Intent holds (or relocation is cooling down); nothing to do.
    Keep,
    /// First placement of an app that is hosted nowhere yet.
    Place { to: String },
    /// Make-before-break move completed.
    Relocate { from: String, to: String },
    /// Violation with no node fulfilling the intent; the app stays put.
    NoValidCandidate,
}

impl Action {
    /// Compact form for logs and timeline columns.
    pub fn summary(&self) -> String {
        match self {
            Action::Keep => "keep".to_string(),
            Action::Place { to } => format!("place({to})"),
            Action::Relocate { from, to } => format!("relocate({from}->{to})"),
            Action::NoValidCandidate => "no_valid_candidate".to_string(),
        }
    }

    /// The node the app is hosted on after this action, if it changed.
    pub fn target(&self) -> Option<&str> {
        match self {
            Action::Place { to } | Action::Relocate { to, .. } => Some(to),
            _ => None,
        }
    }
}

/// Why the cycle acted (or did not).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reason {
    /// First cycle: the app was placed honoring the priority list.
    InitialPriority,
    /// Hosting node satisfies every condition.
    AllFulfilled,
    /// A condition failed on the hosting node (the first one, in intent
    /// order).
    ConditionViolated { metric: MetricKind },
    /// The hosting node is fine, but a higher-priority node fulfills the
    /// intent again.
    ReturnToPriority,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::InitialPriority => f.write_str("initial_priority"),
            Reason::AllFulfilled => f.write_str("all_fulfilled"),
            Reason::ConditionViolated { metric } => write!(f, "condition_violated({metric})"),
            Reason::ReturnToPriority => f.write_str("return_to_priority"),
        }
    }
}

/// One control-cycle outcome, with the evaluations that justified it
/// (one per node considered this cycle, in provider order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub cycle_time_ms: u64,
    pub app_id: String,
    pub action: Action,
    pub reason: Reason,
    pub evaluations: Vec<IntentEvaluation>,
}

impl Decision {
    /// One line of the decision log.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("decisions serialize")
    }

    pub fn evaluation_for(&self, node_id: &str) -> Option<&IntentEvaluation> {
        self.evaluations.iter().find(|e| e.node_id == node_id)
    }
}

/// Everything target selection depends on besides the candidates
/// themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    pub node_priority: Vec<String>,
    pub cpu_tie_epsilon: f64,
    pub rng_seed: u64,
    pub return_to_priority: bool,
    pub cooldown_cycles: u32,
}

impl SelectionPolicy {
    pub fn from_config(config: &OrchestratorConfig, intent: &Intent) -> Self {
        SelectionPolicy {
            node_priority: intent.node_priority.clone(),
            cpu_tie_epsilon: config.cpu_tie_epsilon,
            rng_seed: config.rng_seed,
            return_to_priority: config.return_to_priority,
            cooldown_cycles: config.cooldown_cycles,
        }
    }

    /// Priority rank of a node: its index in the list, or usize::MAX when
    /// unlisted (lower means preferred).
    fn rank(&self, node_id: &str) -> usize {
        self.node_priority
            .iter()
            .position(|n| n == node_id)
            .unwrap_or(usize::MAX)
    }
}

/// A node eligible for selection, with the CPU load used for tie-banding.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub node_id: String,
    pub cpu_percent: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("select_target requires a non-empty candidate list")]
pub struct EmptyCandidates;

/// Pick the target node from non-empty candidates.
///
/// The highest-priority candidate wins outright when any candidate is on
/// the priority list. Otherwise the candidates within `cpu_tie_epsilon`
/// of the minimum CPU form the tie band and one is drawn uniformly with
/// the seeded generator (a singleton band skips the draw, so the RNG
/// state advances only when there is an actual tie to break).
pub fn select_target(
    candidates: &[Candidate],
    policy: &SelectionPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<String, EmptyCandidates> {
    if candidates.is_empty() {
        return Err(EmptyCandidates);
    }
    if let Some(preferred) = candidates
        .iter()
        .filter(|c| policy.rank(&c.node_id) != usize::MAX)
        .min_by_key(|c| policy.rank(&c.node_id))
    {
        return Ok(preferred.node_id.clone());
    }
    let min_cpu = candidates
        .iter()
        .map(|c| c.cpu_percent)
        .fold(f64::INFINITY, f64::min);
    let band: Vec<&Candidate> = candidates
        .iter()
        .filter(|c| c.cpu_percent <= min_cpu + policy.cpu_tie_epsilon)
        .collect();
    if band.len() == 1 {
        return Ok(band[0].node_id.clone());
    }
    let pick = rng.random_range(0..band.len());
    Ok(band[pick].node_id.clone())
}

/// Time source and wait primitive for the loop. Replay drives a virtual
/// clock; live mode sleeps on the wall clock.
pub trait Pacer {
    fn now_ms(&mut self) -> u64;
    /// Wait for `ms`. Returns `Stop` when the loop should shut down
    /// (stop signal, or end of a replayed scenario).
    fn wait_ms(&mut self, ms: u64) -> Pause;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pause {
    Elapsed,
    Stop,
}

/// Wall-clock pacer with a shared stop flag, for driving a live backend.
pub struct WallClockPacer {
    started: Instant,
    stop: Arc<AtomicBool>,
    poll_ms: u64,
}

impl WallClockPacer {
    pub fn new(stop: Arc<AtomicBool>) -> Self {
        WallClockPacer {
            started: Instant::now(),
            stop,
            poll_ms: 50,
        }
    }
}

impl Pacer for WallClockPacer {
    fn now_ms(&mut self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn wait_ms(&mut self, ms: u64) -> Pause {
        let deadline = self.started.elapsed() + Duration::from_millis(ms);
        while self.started.elapsed() < deadline {
            if self.stop.load(Ordering::Relaxed) {
                return Pause::Stop;
            }
            let remaining = deadline - self.started.elapsed();
            std::thread::sleep(remaining.min(Duration::from_millis(self.poll_ms)));
        }
        if self.stop.load(Ordering::Relaxed) {
            Pause::Stop
        } else {
            Pause::Elapsed
        }
    }
}

#[derive(Debug, Error)]
pub enum RelocateError {
    #[error("deploy on `{to}` failed: {source}")]
    DeployFailed { to: String, source: BackendError },
    #[error("replica on `{to}` did not reach running within {timeout_ms} ms")]
    StartupTimeout { to: String, timeout_ms: u64 },
    #[error("relocation interrupted by shutdown")]
    Interrupted,
    #[error("terminating source replica on `{from}` failed: {source}")]
    SourceTerminateFailed { from: String, source: BackendError },
    #[error("placement query failed: {0}")]
    Placement(BackendError),
}

/// Make-before-break relocation: deploy on `to`, wait until the new
/// replica is running (bounded by `timeout_ms`), then terminate on
/// `from`. On deploy failure or startup timeout the new replica is torn
/// down and the app remains on `from`. Relocating to the hosting node is
/// a no-op that touches the backend not at all.
pub fn relocate(
    app: &AppDeployment,
    from: &str,
    to: &str,
    backend: &dyn ClusterBackend,
    pacer: &mut dyn Pacer,
    timeout_ms: u64,
    poll_ms: u64,
) -> Result<(), RelocateError> {
    if from == to {
        return Ok(());
    }
    backend
        .deploy(app, to)
        .map_err(|source| RelocateError::DeployFailed {
            to: to.to_string(),
            source,
        })?;
    let deadline = pacer.now_ms().saturating_add(timeout_ms);
    loop {
        let placement = backend
            .placement(&app.app_id)
            .map_err(RelocateError::Placement)?;
        let running = placement
            .iter()
            .any(|(node, status)| node == to && *status == ReplicaStatus::Running);
        if running {
            break;
        }
        if pacer.now_ms() >= deadline {
            let _ = backend.terminate(&app.app_id, to);
            return Err(RelocateError::StartupTimeout {
                to: to.to_string(),
                timeout_ms,
            });
        }
        if pacer.wait_ms(poll_ms.max(1)) == Pause::Stop {
            let _ = backend.terminate(&app.app_id, to);
            return Err(RelocateError::Interrupted);
        }
    }
    backend
        .terminate(&app.app_id, from)
        .map_err(|source| RelocateError::SourceTerminateFailed {
            from: from.to_string(),
            source,
        })?;
    Ok(())
}

/// Cycle failure. Retryable errors leave the app where it is; the loop
/// counts them against its failure budget and tries again next interval.
#[derive(Debug, Error)]
pub enum CycleError {
    #[error("snapshot of hosting node `{node}` unavailable: {cause}")]
    HostingUnavailable { node: String, cause: String },
    #[error("no node produced a usable snapshot")]
    NoUsableSnapshot,
    #[error("app has replicas on {0} nodes, expected at most one hosting node")]
    AmbiguousPlacement(usize),
    #[error("placement query failed: {0}")]
    Placement(BackendError),
    #[error(transparent)]
    Relocation(RelocateError),
}

impl CycleError {
    fn interrupted(&self) -> bool {
        matches!(self, CycleError::Relocation(RelocateError::Interrupted))
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("{consecutive} consecutive cycle failures exhausted the budget; last: {last}")]
    FailureBudgetExhausted { consecutive: u32, last: CycleError },
}

/// Loop tuning knobs that are not part of the selection policy.
#[derive(Debug, Clone)]
pub struct LoopOptions {
    pub relocation_timeout_ms: u64,
    pub relocation_poll_ms: u64,
    /// Consecutive failed cycles tolerated before the loop stops.
    pub failure_budget: u32,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            relocation_timeout_ms: 10_000,
            relocation_poll_ms: 100,
            failure_budget: 3,
        }
    }
}

/// The per-app control loop.
pub struct ControlLoop {
    intent: Intent,
    deployment: AppDeployment,
    policy: SelectionPolicy,
    options: LoopOptions,
    check_interval_ms: u64,
    rng: ChaCha8Rng,
    cooldown_remaining: u32,
}

impl ControlLoop {
    pub fn new(
        intent: Intent,
        deployment: AppDeployment,
        policy: SelectionPolicy,
        options: LoopOptions,
        check_interval_ms: u64,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
        ControlLoop {
            intent,
            deployment,
            policy,
            options,
            check_interval_ms: check_interval_ms.max(1),
            rng,
            cooldown_remaining: 0,
        }
    }

    /// Run cycles at the check interval until the pacer stops the loop or
    /// the failure budget is exhausted. The first cycle runs one interval
    /// after start, so a stop before the first interval yields no
    /// decisions.
    pub fn run(
        &mut self,
        backend: &dyn ClusterBackend,
        provider: &dyn MetricsProvider,
        pacer: &mut dyn Pacer,
        on_decision: &mut dyn FnMut(&Decision),
    ) -> Result<(), LoopError> {
        let mut consecutive_failures = 0u32;
        loop {
            if pacer.wait_ms(self.check_interval_ms) == Pause::Stop {
                return Ok(());
            }
            match self.check_cycle(backend, provider, pacer) {
                Ok(decision) => {
                    consecutive_failures = 0;
                    log::info!(
                        "t={}ms app={} {} ({})",
                        decision.cycle_time_ms,
                        decision.app_id,
                        decision.action.summary(),
                        decision.reason
                    );
                    on_decision(&decision);
                }
                Err(e) if e.interrupted() => return Ok(()),
                Err(e) => {
                    consecutive_failures += 1;
                    log::warn!(
                        "cycle failed ({consecutive_failures}/{}): {e}",
                        self.options.failure_budget
                    );
                    if consecutive_failures >= self.options.failure_budget {
                        return Err(LoopError::FailureBudgetExhausted {
                            consecutive: consecutive_failures,
                            last: e,
                        });
                    }
                }
            }
        }
    }

    /// One control cycle against the current cluster state.
    pub fn check_cycle(
        &mut self,
        backend: &dyn ClusterBackend,
        provider: &dyn MetricsProvider,
        pacer: &mut dyn Pacer,
    ) -> Result<Decision, CycleError> {
        let cycle_time_ms = pacer.now_ms();
        let cooldown_active = self.cooldown_remaining > 0;
        if cooldown_active {
            self.cooldown_remaining -= 1;
        }

        let hosting = self.hosting_node(backend)?;

        // Snapshot and evaluate every node the provider knows. Failures on
        // non-hosting nodes only remove them from candidacy.
        let mut evaluations = Vec::new();
        let mut cpu_by_node = Vec::new();
        for node_id in provider.list_nodes() {
            match provider.snapshot(&node_id) {
                Ok(metrics) => match evaluate_intent(&self.intent, &node_id, &metrics) {
                    Ok(eval) => {
                        if let Some(cpu) = metrics.cpu_percent {
                            cpu_by_node.push((node_id.clone(), cpu));
                        }
                        evaluations.push(eval);
                    }
                    Err(e) => {
                        if hosting.as_deref() == Some(node_id.as_str()) {
                            return Err(CycleError::HostingUnavailable {
                                node: node_id,
                                cause: e.to_string(),
                            });
                        }
                        log::debug!("node {node_id} not evaluable this cycle: {e}");
                    }
                },
                Err(e) => {
                    if hosting.as_deref() == Some(node_id.as_str()) {
                        return Err(CycleError::HostingUnavailable {
                            node: node_id,
                            cause: e.to_string(),
                        });
                    }
                    log::debug!("node {node_id} snapshot unavailable this cycle: {e}");
                }
            }
        }

        let cpu_of = |node: &str| {
            cpu_by_node
                .iter()
                .find(|(n, _)| n == node)
                .map(|(_, cpu)| *cpu)
        };

        let Some(hosting) = hosting else {
            // Initial placement: choose over all usable nodes, honoring
            // priority. Fulfillment is not required to get the app
            // deployed somewhere.
            let candidates: Vec<Candidate> = evaluations
                .iter()
                .filter_map(|e| {
                    cpu_of(&e.node_id).map(|cpu_percent| Candidate {
                        node_id: e.node_id.clone(),
                        cpu_percent,
                    })
                })
                .collect();
            if candidates.is_empty() {
                return Err(CycleError::NoUsableSnapshot);
            }
            let target = select_target(&candidates, &self.policy, &mut self.rng)
                .expect("candidates checked non-empty");
            backend
                .deploy(&self.deployment, &target)
                .map_err(|e| CycleError::Relocation(RelocateError::DeployFailed {
                    to: target.clone(),
                    source: e,
                }))?;
            self.cooldown_remaining = self.policy.cooldown_cycles;
            return Ok(Decision {
                cycle_time_ms,
                app_id: self.deployment.app_id.clone(),
                action: Action::Place { to: target },
                reason: Reason::InitialPriority,
                evaluations,
            });
        };

        let host_eval = evaluations
            .iter()
            .find(|e| e.node_id == hosting)
            .ok_or_else(|| CycleError::HostingUnavailable {
                node: hosting.clone(),
                cause: "hosting node missing from provider".to_string(),
            })?;

        if !host_eval.all_fulfilled {
            let metric = host_eval
                .first_violation()
                .map(|s| s.condition.metric)
                .expect("violated evaluation has a violation");
            let reason = Reason::ConditionViolated { metric };
            if cooldown_active {
                return Ok(self.decision(cycle_time_ms, Action::Keep, reason, evaluations));
            }
            // Candidates: every *other* node fulfilling the whole intent.
            let candidates: Vec<Candidate> = evaluations
                .iter()
                .filter(|e| e.all_fulfilled && e.node_id != hosting)
                .filter_map(|e| {
                    cpu_of(&e.node_id).map(|cpu_percent| Candidate {
                        node_id: e.node_id.clone(),
                        cpu_percent,
                    })
                })
                .collect();
            if candidates.is_empty() {
                return Ok(self.decision(
                    cycle_time_ms,
                    Action::NoValidCandidate,
                    reason,
                    evaluations,
                ));
            }
            let target = select_target(&candidates, &self.policy, &mut self.rng)
                .expect("candidates checked non-empty");
            self.relocate_step(&hosting, &target, backend, pacer)?;
            return Ok(self.decision(
                cycle_time_ms,
                Action::Relocate {
                    from: hosting,
                    to: target,
                },
                reason,
                evaluations,
            ));
        }

        // Hosting node is healthy. Proactively return to the best-ranked
        // node that outranks it and fulfills the intent, unless cooling
        // down.
        if self.policy.return_to_priority && !cooldown_active {
            let hosting_rank = self.policy.rank(&hosting);
            let preferred = evaluations
                .iter()
                .filter(|e| e.all_fulfilled && e.node_id != hosting)
                .filter(|e| self.policy.rank(&e.node_id) < hosting_rank)
                .min_by_key(|e| self.policy.rank(&e.node_id))
                .map(|e| e.node_id.clone());
            if let Some(target) = preferred {
                self.relocate_step(&hosting, &target, backend, pacer)?;
                return Ok(self.decision(
                    cycle_time_ms,
                    Action::Relocate {
                        from: hosting,
                        to: target,
                    },
                    Reason::ReturnToPriority,
                    evaluations,
                ));
            }
        }

        Ok(self.decision(cycle_time_ms, Action::Keep, Reason::AllFulfilled, evaluations))
    }

    fn relocate_step(
        &mut self,
        from: &str,
        to: &str,
        backend: &dyn ClusterBackend,
        pacer: &mut dyn Pacer,
    ) -> Result<(), CycleError> {
        relocate(
            &self.deployment,
            from,
            to,
            backend,
            pacer,
            self.options.relocation_timeout_ms,
            self.options.relocation_poll_ms,
        )
        .map_err(CycleError::Relocation)?;
        self.cooldown_remaining = self.policy.cooldown_cycles;
        Ok(())
    }

    fn decision(
        &self,
        cycle_time_ms: u64,
        action: Action,
        reason: Reason,
        evaluations: Vec<IntentEvaluation>,
    ) -> Decision {
        Decision {
            cycle_time_ms,
            app_id: self.deployment.app_id.clone(),
            action,
            reason,
            evaluations,
        }
    }

    /// The node currently hosting the app: the one with a starting or
    /// running replica. Terminating replicas no longer count.
    fn hosting_node(&self, backend: &dyn ClusterBackend) -> Result<Option<String>, CycleError> {
        let placement = backend
            .placement(&self.deployment.app_id)
            .map_err(CycleError::Placement)?;
        let mut hosts: Vec<(String, ReplicaStatus)> = placement
            .into_iter()
            .filter(|(_, status)| {
                matches!(status, ReplicaStatus::Starting | ReplicaStatus::Running)
            })
            .collect();
        match hosts.len() {
            0 => Ok(None),
            1 => Ok(Some(hosts.remove(0).0)),
            n => {
                let mut running = hosts
                    .iter()
                    .filter(|(_, s)| *s == ReplicaStatus::Running)
                    .map(|(node, _)| node.clone());
                match (running.next(), running.next()) {
                    (Some(node), None) => Ok(Some(node)),
                    _ => Err(CycleError::AmbiguousPlacement(n)),
                }
            }
        }
    }
}
