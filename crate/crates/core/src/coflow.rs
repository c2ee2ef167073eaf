//! Co-flow detection and classification on top of taint findings.
//!
//! A co-flow rule asks whether several *groups* of signal labels converge on
//! one sink call: the rule fires at a sink site when every group contributes
//! at least one reaching label, and the finding carries every reaching
//! (label, site) pair. Classification is the aggregate verdict for one SDK:
//! it is flagged when the number of distinct signal labels across its
//! findings meets a threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::SdkCoordinate;
use crate::taint::{FlowFinding, SinkGroup, Site, TaintFlowGraph};

/// Errors raised while reading rules, detecting, or classifying.
#[derive(Debug, Error)]
pub enum CoFlowError {
    #[error("invalid co-flow configuration: {0}")]
    Config(String),
    #[error("flow findings do not belong to the given taint graph: {0}")]
    ForeignFindings(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Default classification threshold: an SDK is fingerprinting-like when at
/// least this many distinct signal labels reach sinks.
pub const DEFAULT_CLASSIFY_THRESHOLD: usize = 20;

fn default_min_distinct_sources() -> usize {
    1
}

/// One co-flow rule.
///
/// The general form uses several source groups, each of which must
/// contribute at a sink. The fingerprinting form uses a single group
/// holding every fingerprinting label; `min_distinct_sources` is that
/// form's classification threshold and does not gate detection.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CoFlowRule {
    pub name: String,
    /// Groups of source labels; every group must contribute at a sink.
    pub source_groups: Vec<BTreeSet<String>>,
    /// Sink groups the rule applies to.
    pub sink_groups: BTreeSet<SinkGroup>,
    /// Classification threshold carried with the fingerprinting rule form.
    #[serde(default = "default_min_distinct_sources")]
    pub min_distinct_sources: usize,
}

impl CoFlowRule {
    pub fn validate(&self) -> Result<(), CoFlowError> {
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return Err(CoFlowError::Config(format!(
                "rule name must be a non-empty token, got {:?}",
                self.name
            )));
        }
        if self.source_groups.is_empty() {
            return Err(CoFlowError::Config(format!(
                "rule {} has no source groups",
                self.name
            )));
        }
        for group in &self.source_groups {
            if group.is_empty() {
                return Err(CoFlowError::Config(format!(
                    "rule {} has an empty source group",
                    self.name
                )));
            }
            if group.iter().any(String::is_empty) {
                return Err(CoFlowError::Config(format!(
                    "rule {} has an empty source label",
                    self.name
                )));
            }
        }
        if self.sink_groups.is_empty() {
            return Err(CoFlowError::Config(format!(
                "rule {} has no sink groups",
                self.name
            )));
        }
        if self.min_distinct_sources == 0 {
            return Err(CoFlowError::Config(format!(
                "rule {} requires minDistinctSources of at least 1",
                self.name
            )));
        }
        Ok(())
    }
}

/// Reads a JSON array of rules, validating each and rejecting duplicate
/// rule names.
pub fn read_rules(path: &Path) -> Result<Vec<CoFlowRule>, CoFlowError> {
    let text = fs::read_to_string(path).map_err(|source| CoFlowError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let rules: Vec<CoFlowRule> =
        serde_json::from_str(&text).map_err(|source| CoFlowError::Json {
            path: path.display().to_string(),
            source,
        })?;
    let mut names = BTreeSet::new();
    for rule in &rules {
        rule.validate()?;
        if !names.insert(&rule.name) {
            return Err(CoFlowError::Config(format!("duplicate rule name {}", rule.name)));
        }
    }
    Ok(rules)
}

/// One source that reaches a co-flowing sink.
#[derive(Clone, Debug, Eq, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceRef {
    pub label: String,
    pub site: Site,
}

/// A rule match at one sink site, carrying ALL reaching sources — not one
/// per group — so downstream counting and inspection see the full picture.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoFlowFinding {
    pub rule: String,
    pub sink_site: Site,
    pub sink_group: SinkGroup,
    /// Reaching (label, source site) pairs within the rule's groups, sorted.
    pub sources: Vec<SourceRef>,
}

struct SinkAggregate {
    group: SinkGroup,
    sources: BTreeSet<(String, Site)>,
}

fn aggregate_sinks(findings: &[FlowFinding]) -> BTreeMap<&Site, SinkAggregate> {
    let mut sinks: BTreeMap<&Site, SinkAggregate> = BTreeMap::new();
    for finding in findings {
        let aggregate = sinks.entry(&finding.sink_site).or_insert_with(|| SinkAggregate {
            group: finding.sink_group,
            sources: BTreeSet::new(),
        });
        aggregate
            .sources
            .insert((finding.source_label.clone(), finding.source_site.clone()));
    }
    sinks
}

/// Checks that the findings reference nodes of `graph` — the detector's
/// precondition that findings and graph come from the same analysis.
fn check_findings_belong(
    graph: &TaintFlowGraph,
    findings: &[FlowFinding],
) -> Result<(), CoFlowError> {
    for finding in findings {
        for node in &finding.path {
            if !graph.contains(node) {
                return Err(CoFlowError::ForeignFindings(format!(
                    "path node {node:?} is not in the graph"
                )));
            }
        }
    }
    Ok(())
}

/// Evaluates one rule against an analysis' flow findings: one
/// [`CoFlowFinding`] per sink site (in site order) where every source group
/// contributes at least one reaching label.
pub fn detect(
    graph: &TaintFlowGraph,
    findings: &[FlowFinding],
    rule: &CoFlowRule,
) -> Result<Vec<CoFlowFinding>, CoFlowError> {
    rule.validate()?;
    check_findings_belong(graph, findings)?;
    let union: BTreeSet<&str> = rule.source_groups.iter().flatten().map(String::as_str).collect();
    let mut out = Vec::new();
    for (site, aggregate) in aggregate_sinks(findings) {
        if !rule.sink_groups.contains(&aggregate.group) {
            continue;
        }
        let reaching: Vec<&(String, Site)> = aggregate
            .sources
            .iter()
            .filter(|(label, _)| union.contains(label.as_str()))
            .collect();
        let distinct: BTreeSet<&str> =
            reaching.iter().map(|(label, _)| label.as_str()).collect();
        if !rule
            .source_groups
            .iter()
            .all(|group| group.iter().any(|label| distinct.contains(label.as_str())))
        {
            continue;
        }
        out.push(CoFlowFinding {
            rule: rule.name.clone(),
            sink_site: site.clone(),
            sink_group: aggregate.group,
            sources: reaching
                .iter()
                .map(|(label, site)| SourceRef { label: label.clone(), site: site.clone() })
                .collect(),
        });
    }
    Ok(out)
}

/// Runs [`detect`] for each rule in order and concatenates the findings.
pub fn detect_all(
    graph: &TaintFlowGraph,
    findings: &[FlowFinding],
    rules: &[CoFlowRule],
) -> Result<Vec<CoFlowFinding>, CoFlowError> {
    let mut out = Vec::new();
    for rule in rules {
        out.extend(detect(graph, findings, rule)?);
    }
    Ok(out)
}

/// The aggregate fingerprinting verdict for one analyzed SDK.
#[derive(Clone, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FingerprintVerdict {
    pub sdk: SdkCoordinate,
    pub flagged: bool,
    /// Distinct source labels across all findings.
    pub distinct_signals: usize,
    pub findings: Vec<CoFlowFinding>,
}

impl FingerprintVerdict {
    /// The distinct signal labels across the verdict's findings, sorted.
    pub fn signal_labels(&self) -> BTreeSet<&str> {
        self.findings
            .iter()
            .flat_map(|f| f.sources.iter().map(|s| s.label.as_str()))
            .collect()
    }
}

/// Flags an SDK when at least `threshold` distinct source labels appear
/// across its co-flow findings. A threshold of zero is rejected: it would
/// flag everything.
pub fn classify(
    sdk: &SdkCoordinate,
    findings: Vec<CoFlowFinding>,
    threshold: usize,
) -> Result<FingerprintVerdict, CoFlowError> {
    if threshold == 0 {
        return Err(CoFlowError::Config(
            "classification threshold must be at least 1".into(),
        ));
    }
    let distinct: BTreeSet<&str> = findings
        .iter()
        .flat_map(|f| f.sources.iter().map(|s| s.label.as_str()))
        .collect();
    let distinct_signals = distinct.len();
    Ok(FingerprintVerdict {
        sdk: sdk.clone(),
        flagged: distinct_signals >= threshold,
        distinct_signals,
        findings,
    })
}
