//! The orchestrator's three input documents — configuration, intent, and
//! app deployment — plus pure condition/intent evaluation.
//!
//! An intent is an ordered set of threshold conditions over node metrics
//! (UE→APP RTT in milliseconds, node CPU in percent), a node priority
//! list, and a check interval. Evaluation is exact: no tolerance is
//! applied at the threshold, so `rtt < 25` is violated by an observation
//! of exactly 25.0.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docfmt::{self, ParseError};
use crate::metrics::NodeMetrics;

/// The metric kinds an intent condition can constrain.
///
/// The serialized names are the exact strings used in intent files and
/// metrics maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "rtt_ue_to_app_ms")]
    RttUeToAppMs,
    #[serde(rename = "node_cpu_percent")]
    NodeCpuPercent,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::RttUeToAppMs => "rtt_ue_to_app_ms",
            MetricKind::NodeCpuPercent => "node_cpu_percent",
        }
    }

    /// The fixed unit the metric is expressed in.
    pub fn unit(&self) -> &'static str {
        match self {
            MetricKind::RttUeToAppMs => "ms",
            MetricKind::NodeCpuPercent => "percent",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Threshold comparator. Serialized as `lt`, `le`, `gt`, `ge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    /// Exact comparison, no tolerance.
    pub fn holds(&self, observed: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => observed < threshold,
            Comparator::Le => observed <= threshold,
            Comparator::Gt => observed > threshold,
            Comparator::Ge => observed >= threshold,
        }
    }

    pub fn admits_equality(&self) -> bool {
        matches!(self, Comparator::Le | Comparator::Ge)
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

/// One threshold condition within an intent, e.g. `rtt_ue_to_app_ms < 25`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub metric: MetricKind,
    pub op: Comparator,
    pub threshold: f64,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.metric, self.op.symbol(), self.threshold)
    }
}

/// An app's service requirements: ordered conditions, node priority, and
/// an optional per-app check interval (the config default applies when
/// omitted; the intent wins when both are set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intent {
    pub app_id: String,
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub node_priority: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_interval_s: Option<f64>,
}

impl Intent {
    fn validate(&self) -> Result<(), String> {
        validate_identifier("app_id", &self.app_id)?;
        if self.conditions.is_empty() {
            return Err("intent must declare at least one condition".to_string());
        }
        let mut seen = Vec::new();
        for cond in &self.conditions {
            if !cond.threshold.is_finite() || cond.threshold < 0.0 {
                return Err(format!(
                    "condition on {} has invalid threshold {} (must be finite and >= 0)",
                    cond.metric, cond.threshold
                ));
            }
            if seen.contains(&cond.metric) {
                return Err(format!("duplicate condition for metric {}", cond.metric));
            }
            seen.push(cond.metric);
        }
        for (i, node) in self.node_priority.iter().enumerate() {
            validate_identifier("node_priority entry", node)?;
            if self.node_priority[..i].contains(node) {
                return Err(format!("duplicate node `{node}` in node_priority"));
            }
        }
        if let Some(s) = self.check_interval_s {
            validate_interval("check_interval_s", s)?;
        }
        Ok(())
    }

    /// Effective check interval in milliseconds, given the config default.
    pub fn check_interval_ms(&self, config: &OrchestratorConfig) -> u64 {
        let seconds = self
            .check_interval_s
            .unwrap_or(config.check_interval_default_s);
        (seconds * 1000.0).round().max(1.0) as u64
    }

    pub fn condition(&self, metric: MetricKind) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.metric == metric)
    }
}

/// Which backend the orchestrator drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Simulator,
    External,
}

/// Orchestrator configuration. Every field has a documented default so an
/// empty document is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrchestratorConfig {
    #[serde(default = "default_check_interval_s")]
    pub check_interval_default_s: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_cpu_tie_epsilon")]
    pub cpu_tie_epsilon: f64,
    #[serde(default = "default_true")]
    pub return_to_priority: bool,
    #[serde(default = "default_cooldown_cycles")]
    pub cooldown_cycles: u32,
    #[serde(default)]
    pub backend_kind: BackendKind,
    /// Opaque credential map, passed through untouched. The simulator
    /// backend never reads it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub credentials: BTreeMap<String, String>,
}

fn default_check_interval_s() -> f64 {
    1.0
}

fn default_cpu_tie_epsilon() -> f64 {
    5.0
}

fn default_true() -> bool {
    true
}

fn default_cooldown_cycles() -> u32 {
    1
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            check_interval_default_s: default_check_interval_s(),
            rng_seed: 0,
            cpu_tie_epsilon: default_cpu_tie_epsilon(),
            return_to_priority: true,
            cooldown_cycles: default_cooldown_cycles(),
            backend_kind: BackendKind::Simulator,
            credentials: BTreeMap::new(),
        }
    }
}

impl OrchestratorConfig {
    fn validate(&self) -> Result<(), String> {
        validate_interval("check_interval_default_s", self.check_interval_default_s)?;
        if !self.cpu_tie_epsilon.is_finite() || !(0.0..=100.0).contains(&self.cpu_tie_epsilon) {
            return Err(format!(
                "cpu_tie_epsilon {} must be within [0, 100]",
                self.cpu_tie_epsilon
            ));
        }
        Ok(())
    }
}

/// The containerized app to manage: image, CPU demand as a percent of one
/// node, and the TCP port its service listens on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppDeployment {
    pub app_id: String,
    pub image_ref: String,
    pub cpu_demand: f64,
    pub service_port: u16,
}

impl AppDeployment {
    fn validate(&self) -> Result<(), String> {
        validate_identifier("app_id", &self.app_id)?;
        if self.image_ref.is_empty() {
            return Err("image_ref must not be empty".to_string());
        }
        if !self.cpu_demand.is_finite() || !(0.0..=100.0).contains(&self.cpu_demand) {
            return Err(format!(
                "cpu_demand {} must be within [0, 100]",
                self.cpu_demand
            ));
        }
        Ok(())
    }
}

/// Outcome of checking one condition against an observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStatus {
    #[serde(flatten)]
    pub condition: Condition,
    pub observed: f64,
    pub fulfilled: bool,
}

/// One node's full evaluation against an intent: one status per condition,
/// in intent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEvaluation {
    pub node_id: String,
    pub statuses: Vec<ConditionStatus>,
    pub all_fulfilled: bool,
}

impl IntentEvaluation {
    /// The first violated condition, in intent order.
    pub fn first_violation(&self) -> Option<&ConditionStatus> {
        self.statuses.iter().find(|s| !s.fulfilled)
    }
}

/// Evaluation failure: the observation is unusable, not merely violating.
#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("observed value for {metric} is not finite: {value}")]
    NonFiniteObservation { metric: MetricKind, value: f64 },
    #[error("no value available for metric {metric}")]
    MissingMetric { metric: MetricKind },
}

/// Check one condition against an observed value. Exact comparator
/// semantics; the observation must be finite.
pub fn evaluate_condition(cond: &Condition, observed: f64) -> Result<ConditionStatus, EvalError> {
    if !observed.is_finite() {
        return Err(EvalError::NonFiniteObservation {
            metric: cond.metric,
            value: observed,
        });
    }
    Ok(ConditionStatus {
        condition: *cond,
        observed,
        fulfilled: cond.op.holds(observed, cond.threshold),
    })
}

/// Evaluate every intent condition against one node's metrics snapshot.
/// Errors if the snapshot lacks a value for a referenced metric.
pub fn evaluate_intent(
    intent: &Intent,
    node_id: &str,
    metrics: &NodeMetrics,
) -> Result<IntentEvaluation, EvalError> {
    let mut statuses = Vec::with_capacity(intent.conditions.len());
    for cond in &intent.conditions {
        let observed = metrics
            .metric(cond.metric)
            .ok_or(EvalError::MissingMetric {
                metric: cond.metric,
            })?;
        statuses.push(evaluate_condition(cond, observed)?);
    }
    let all_fulfilled = statuses.iter().all(|s| s.fulfilled);
    Ok(IntentEvaluation {
        node_id: node_id.to_string(),
        statuses,
        all_fulfilled,
    })
}

/// Parse and validate an intent document (keypath or JSON rendering).
pub fn parse_intent(text: &str) -> Result<Intent, ParseError> {
    let intent: Intent = docfmt::from_document(text)?;
    intent.validate().map_err(ParseError::validation)?;
    Ok(intent)
}

/// Parse and validate an orchestrator configuration document.
pub fn parse_orchestrator_config(text: &str) -> Result<OrchestratorConfig, ParseError> {
    let config: OrchestratorConfig = docfmt::from_document(text)?;
    config.validate().map_err(ParseError::validation)?;
    Ok(config)
}

/// Parse and validate an app deployment document.
pub fn parse_deployment(text: &str) -> Result<AppDeployment, ParseError> {
    let deployment: AppDeployment = docfmt::from_document(text)?;
    deployment.validate().map_err(ParseError::validation)?;
    Ok(deployment)
}

/// Identifiers (app ids, node ids) are non-empty `[A-Za-z0-9_.-]+`.
pub(crate) fn validate_identifier(what: &str, id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err(format!("{what} must not be empty"));
    }
    if !id
        .bytes()
        .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
    {
        return Err(format!(
            "{what} `{id}` contains characters outside [A-Za-z0-9_.-]"
        ));
    }
    Ok(())
}

fn validate_interval(what: &str, seconds: f64) -> Result<(), String> {
    if !seconds.is_finite() || seconds <= 0.0 {
        return Err(format!("{what} must be a positive duration, got {seconds}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEMO_INTENT: &str = "\
app_id nginx-app
conditions.0.metric rtt_ue_to_app_ms
conditions.0.op lt
conditions.0.threshold 25
conditions.1.metric node_cpu_percent
conditions.1.op lt
conditions.1.threshold 60
node_priority.0 master
check_interval_s 1
";

    fn metrics(cpu: Option<f64>, rtt: Option<f64>) -> NodeMetrics {
        NodeMetrics {
            node_id: "n".to_string(),
            cpu_percent: cpu,
            rtt_ue_to_app_ms: rtt,
            capture_time_ms: 0,
        }
    }

    #[test]
    fn parses_the_demo_intent() {
        let intent = parse_intent(DEMO_INTENT).unwrap();
        assert_eq!(intent.app_id, "nginx-app");
        assert_eq!(intent.conditions.len(), 2);
        assert_eq!(intent.conditions[0].metric, MetricKind::RttUeToAppMs);
        assert_eq!(intent.conditions[0].op, Comparator::Lt);
        assert_eq!(intent.conditions[0].threshold, 25.0);
        assert_eq!(intent.conditions[1].metric, MetricKind::NodeCpuPercent);
        assert_eq!(intent.conditions[1].threshold, 60.0);
        assert_eq!(intent.node_priority, vec!["master".to_string()]);
        assert_eq!(intent.check_interval_s, Some(1.0));
    }

    #[test]
    fn json_rendering_parses_too() {
        let json = r#"{
            "app_id": "nginx-app",
            "conditions": [{"metric": "rtt_ue_to_app_ms", "op": "lt", "threshold": 25.0}]
        }"#;
        let intent = parse_intent(json).unwrap();
        assert_eq!(intent.conditions.len(), 1);
        assert!(intent.node_priority.is_empty());
    }

    #[test]
    fn empty_conditions_rejected() {
        // Explicitly empty (expressible in the JSON rendering)…
        let err = parse_intent(r#"{"app_id": "a", "conditions": []}"#).unwrap_err();
        assert!(err.to_string().contains("at least one condition"));
        // …and absent entirely.
        assert!(parse_intent("app_id a\n").is_err());
    }

    #[test]
    fn duplicate_metric_rejected() {
        let doc = "\
app_id a
conditions.0.metric node_cpu_percent
conditions.0.op lt
conditions.0.threshold 60
conditions.1.metric node_cpu_percent
conditions.1.op le
conditions.1.threshold 80
";
        let err = parse_intent(doc).unwrap_err();
        assert!(err.to_string().contains("duplicate condition"));
    }

    #[test]
    fn unknown_metric_rejected() {
        let doc = "\
app_id a
conditions.0.metric memory_percent
conditions.0.op lt
conditions.0.threshold 60
";
        assert!(parse_intent(doc).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = format!("{DEMO_INTENT}surprise 1\n");
        let err = parse_intent(&doc).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn non_positive_interval_rejected() {
        let doc = DEMO_INTENT.replace("check_interval_s 1", "check_interval_s 0");
        assert!(parse_intent(&doc).is_err());
    }

    #[test]
    fn negative_threshold_rejected() {
        let doc = DEMO_INTENT.replace("conditions.0.threshold 25", "conditions.0.threshold -1");
        assert!(parse_intent(&doc).is_err());
    }

    #[test]
    fn duplicate_priority_rejected() {
        let doc = format!("{DEMO_INTENT}node_priority.1 master\n");
        assert!(parse_intent(&doc).is_err());
    }

    #[test]
    fn strict_less_than_at_the_boundary() {
        let cond = Condition {
            metric: MetricKind::RttUeToAppMs,
            op: Comparator::Lt,
            threshold: 25.0,
        };
        assert!(evaluate_condition(&cond, 24.999).unwrap().fulfilled);
        assert!(!evaluate_condition(&cond, 25.0).unwrap().fulfilled);

        let cpu = Condition {
            metric: MetricKind::NodeCpuPercent,
            op: Comparator::Lt,
            threshold: 60.0,
        };
        assert!(!evaluate_condition(&cpu, 60.0).unwrap().fulfilled);
    }

    #[test]
    fn non_finite_observation_is_an_error() {
        let cond = Condition {
            metric: MetricKind::NodeCpuPercent,
            op: Comparator::Lt,
            threshold: 60.0,
        };
        assert!(matches!(
            evaluate_condition(&cond, f64::NAN),
            Err(EvalError::NonFiniteObservation { .. })
        ));
        assert!(evaluate_condition(&cond, f64::INFINITY).is_err());
    }

    #[test]
    fn comparator_equality_semantics_are_exact() {
        for (op, admits) in [
            (Comparator::Lt, false),
            (Comparator::Le, true),
            (Comparator::Gt, false),
            (Comparator::Ge, true),
        ] {
            assert_eq!(op.admits_equality(), admits);
            for threshold in [0.0, 25.0, 60.0, 99.5] {
                let cond = Condition {
                    metric: MetricKind::RttUeToAppMs,
                    op,
                    threshold,
                };
                let status = evaluate_condition(&cond, threshold).unwrap();
                assert_eq!(status.fulfilled, admits, "{op:?} at threshold {threshold}");
            }
        }
    }

    #[test]
    fn evaluate_intent_all_fulfilled() {
        let intent = parse_intent(DEMO_INTENT).unwrap();
        let eval = evaluate_intent(&intent, "master", &metrics(Some(40.0), Some(10.0))).unwrap();
        assert!(eval.all_fulfilled);
        assert_eq!(eval.statuses.len(), 2);
        assert!(eval.first_violation().is_none());
    }

    #[test]
    fn evaluate_intent_rtt_violated() {
        // 8 ms base RTT + 20 ms injected delay.
        let intent = parse_intent(DEMO_INTENT).unwrap();
        let eval = evaluate_intent(&intent, "master", &metrics(Some(40.0), Some(28.0))).unwrap();
        assert!(!eval.all_fulfilled);
        let violation = eval.first_violation().unwrap();
        assert_eq!(violation.condition.metric, MetricKind::RttUeToAppMs);
        assert_eq!(violation.observed, 28.0);
        assert!(eval.statuses[1].fulfilled, "CPU condition unaffected");
    }

    #[test]
    fn evaluate_intent_missing_metric_errors() {
        let intent = parse_intent(DEMO_INTENT).unwrap();
        let err = evaluate_intent(&intent, "master", &metrics(None, Some(10.0))).unwrap_err();
        assert_eq!(
            err,
            EvalError::MissingMetric {
                metric: MetricKind::NodeCpuPercent
            }
        );
    }

    #[test]
    fn config_defaults_apply() {
        let config = parse_orchestrator_config("").unwrap();
        assert_eq!(config.rng_seed, 0);
        assert_eq!(config.cpu_tie_epsilon, 5.0);
        assert!(config.return_to_priority);
        assert_eq!(config.cooldown_cycles, 1);
        assert_eq!(config.check_interval_default_s, 1.0);
        assert_eq!(config.backend_kind, BackendKind::Simulator);
        assert!(config.credentials.is_empty());
    }

    #[test]
    fn config_negative_cooldown_rejected() {
        assert!(parse_orchestrator_config("cooldown_cycles -1\n").is_err());
    }

    #[test]
    fn config_credentials_are_opaque() {
        let config =
            parse_orchestrator_config("credentials.token abc123\ncredentials.user demo\n")
                .unwrap();
        assert_eq!(config.credentials["token"], "abc123");
        assert_eq!(config.credentials["user"], "demo");
    }

    #[test]
    fn config_round_trips() {
        let mut config = parse_orchestrator_config(
            "rng_seed 7\ncpu_tie_epsilon 2.5\nreturn_to_priority false\ncredentials.k v\n",
        )
        .unwrap();
        let rendered = docfmt::to_document(&config);
        assert_eq!(parse_orchestrator_config(&rendered).unwrap(), config);
        config.credentials.clear();
        let rendered = docfmt::to_document(&config);
        assert_eq!(parse_orchestrator_config(&rendered).unwrap(), config);
    }

    #[test]
    fn intent_interval_wins_over_config_default() {
        let config = parse_orchestrator_config("check_interval_default_s 2\n").unwrap();
        let mut intent = parse_intent(DEMO_INTENT).unwrap();
        assert_eq!(intent.check_interval_ms(&config), 1000);
        intent.check_interval_s = None;
        assert_eq!(intent.check_interval_ms(&config), 2000);
    }

    #[test]
    fn deployment_parses_and_round_trips() {
        let doc = "\
app_id nginx-app
image_ref nginx:1.25
cpu_demand 10
service_port 80
";
        let deployment = parse_deployment(doc).unwrap();
        assert_eq!(deployment.app_id, "nginx-app");
        assert_eq!(deployment.cpu_demand, 10.0);
        assert_eq!(deployment.service_port, 80);
        let rendered = docfmt::to_document(&deployment);
        assert_eq!(parse_deployment(&rendered).unwrap(), deployment);
    }

    #[test]
    fn deployment_demand_out_of_range_rejected() {
        let doc = "app_id a\nimage_ref i\ncpu_demand 130\nservice_port 80\n";
        assert!(parse_deployment(doc).is_err());
    }

    fn arb_condition() -> impl Strategy<Value = Condition> {
        (
            prop_oneof![
                Just(MetricKind::RttUeToAppMs),
                Just(MetricKind::NodeCpuPercent)
            ],
            prop_oneof![
                Just(Comparator::Lt),
                Just(Comparator::Le),
                Just(Comparator::Gt),
                Just(Comparator::Ge)
            ],
            0.0f64..1000.0,
        )
            .prop_map(|(metric, op, threshold)| Condition {
                metric,
                op,
                threshold,
            })
    }

    fn arb_intent() -> impl Strategy<Value = Intent> {
        (
            "[a-z][a-z0-9-]{0,12}",
            prop::collection::vec(arb_condition(), 1..=2),
            prop::collection::vec("[a-z][a-z0-9-]{0,8}", 0..3),
            prop::option::of(0.001f64..60.0),
        )
            .prop_filter_map(
                "valid intents only",
                |(app_id, mut conditions, mut priority, interval)| {
                    conditions.dedup_by_key(|c| c.metric);
                    priority.sort();
                    priority.dedup();
                    let intent = Intent {
                        app_id,
                        conditions,
                        node_priority: priority,
                        check_interval_s: interval,
                    };
                    intent.validate().ok().map(|_| intent)
                },
            )
    }

    proptest! {
        /// Parsing is total over rendered documents and round-trips.
        #[test]
        fn intent_round_trips(intent in arb_intent()) {
            let rendered = docfmt::to_document(&intent);
            let reparsed = parse_intent(&rendered).unwrap();
            prop_assert_eq!(reparsed, intent);
        }

        /// evaluate_condition is pure and all_fulfilled is the conjunction
        /// of the per-condition results.
        #[test]
        fn all_fulfilled_is_conjunction(
            conditions in prop::collection::vec(arb_condition(), 1..=2),
            cpu in 0.0f64..100.0,
            rtt in 0.0f64..100.0,
        ) {
            let mut conditions = conditions;
            conditions.dedup_by_key(|c| c.metric);
            let intent = Intent {
                app_id: "a".to_string(),
                conditions: conditions.clone(),
                node_priority: vec![],
                check_interval_s: None,
            };
            let m = metrics(Some(cpu), Some(rtt));
            let eval = evaluate_intent(&intent, "n", &m).unwrap();
            let expected = conditions.iter().all(|c| {
                let observed = match c.metric {
                    MetricKind::RttUeToAppMs => rtt,
                    MetricKind::NodeCpuPercent => cpu,
                };
                evaluate_condition(c, observed).unwrap().fulfilled
            });
            prop_assert_eq!(eval.all_fulfilled, expected);
            // Purity: re-evaluating yields the identical record.
            let again = evaluate_intent(&intent, "n", &m).unwrap();
            prop_assert_eq!(eval, again);
        }
    }
}
