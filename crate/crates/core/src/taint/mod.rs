//! Interprocedural taint analysis over IR bundles.
//!
//! Sources, sinks, and propagators are framework APIs named in a
//! [`TaintConfig`]. The analysis walks every method reachable from the main
//! SDK's public methods (the entry points), builds a [`TaintFlowGraph`], and
//! propagates (label, source site) pairs to a fixed point.
//!
//! Sensitivity choices, fixed across the crate:
//!
//! * **Call-site contexts** up to a configurable depth `k` (0–2, default 1):
//!   entry frames carry the empty chain, direct callees a one-site chain,
//!   and anything deeper merges into a single ⊤ context, which also makes
//!   recursion terminate.
//! * **Field-sensitive, object-insensitive**: one node per field identifier,
//!   merged across all instances.
//! * **Flow-insensitive over single-pass def-use order**: register nodes are
//!   per-occurrence (parameter, definition at an instruction, use at an
//!   instruction), so redefining a register — e.g. with `const` — starts a
//!   fresh, untainted version while order within a body is otherwise
//!   ignored.
//! * **Arrays are one cell**: element loads and stores transfer taint
//!   through the array register itself.
//! * **Unknown external APIs propagate nothing** by default
//!   ([`TaintOptions::taint_unknown_apis`] switches to the conservative
//!   union of arguments).
//!
//! Scope controls where *sources* fire: [`Scope::MainOnly`] restricts them
//! to code of the main SDK, while sinks fire anywhere in the bundle either
//! way.

mod analyze;

pub use analyze::{analyze, TaintAnalysis};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{IrError, RegId, SdkCoordinate};

#[derive(Debug, Error)]
pub enum TaintError {
    #[error("taint config: {0}")]
    Config(String),
    #[error("no IR provided for bundle coordinate {0}")]
    MissingIr(SdkCoordinate),
    #[error("IR for {coordinate} is invalid: {source}")]
    InvalidIr {
        coordinate: SdkCoordinate,
        #[source]
        source: IrError,
    },
    #[error("node is not part of the taint flow graph: {0}")]
    UnknownNode(String),
    #[error("reading taint config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing taint config {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Sink categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SinkGroup {
    Network,
    Encryption,
}

/// Source labels, sink groups, and propagator APIs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TaintConfig {
    /// Source API → signal label attached to values it returns.
    pub sources: BTreeMap<String, String>,
    /// Sink API → group.
    pub sinks: BTreeMap<String, SinkGroup>,
    /// External APIs that pass taint from any argument to their result.
    #[serde(default)]
    pub propagators: BTreeSet<String>,
}

impl TaintConfig {
    pub fn validate(&self) -> Result<(), TaintError> {
        for (api, label) in &self.sources {
            if label.is_empty() {
                return Err(TaintError::Config(format!("source {api:?} has an empty label")));
            }
            if self.sinks.contains_key(api) {
                return Err(TaintError::Config(format!(
                    "API {api:?} is configured as both source and sink"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a [`TaintConfig`] from a JSON file.
pub fn read_taint_config(path: &Path) -> Result<TaintConfig, TaintError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaintError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: TaintConfig = serde_json::from_str(&text).map_err(|source| TaintError::Json {
        path: path.display().to_string(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

/// Where source APIs may generate taint. Sinks always fire bundle-wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    MainOnly,
    WholeBundle,
}

/// Analysis knobs; see the module docs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaintOptions {
    /// Call-site context depth `k`, 0–2.
    pub context_depth: u8,
    /// Treat unknown external APIs as argument-to-result propagators.
    pub taint_unknown_apis: bool,
}

impl Default for TaintOptions {
    fn default() -> Self {
        TaintOptions { context_depth: 1, taint_unknown_apis: false }
    }
}

/// A program point: method id plus instruction index within its body.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Site {
    pub method: String,
    pub index: usize,
}

impl Site {
    pub fn new(method: &str, index: usize) -> Site {
        Site { method: method.to_string(), index }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.method, self.index)
    }
}

/// Call-site context: a chain of at most `k` call sites, or the merged ⊤
/// context for anything deeper.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Context {
    Chain(Vec<Site>),
    Top,
}

impl Context {
    pub fn entry() -> Context {
        Context::Chain(Vec::new())
    }

    /// The context a callee runs in when invoked from `self` at `site`.
    pub fn extend(&self, site: &Site, context_depth: u8) -> Context {
        match self {
            Context::Top => Context::Top,
            Context::Chain(sites) => {
                if sites.len() >= context_depth as usize {
                    Context::Top
                } else {
                    let mut chain = sites.clone();
                    chain.push(site.clone());
                    Context::Chain(chain)
                }
            }
        }
    }
}

/// Which occurrence of a register a node stands for.
///
/// Per-occurrence granularity is what gives the analysis its def-use
/// precision: a redefinition (`Def` at a later index) is a fresh node with
/// no taint carried over, and a `Use` node is the exact endpoint a sink
/// reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RegSite {
    /// Bound at method entry.
    Param,
    /// Defined by the instruction at this body index.
    Def(usize),
    /// Read by the instruction at this body index.
    Use(usize),
}

/// A node of the taint flow graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum TaintNode {
    #[serde(rename_all = "camelCase")]
    Register {
        method: String,
        context: Context,
        reg: RegId,
        site: RegSite,
    },
    #[serde(rename_all = "camelCase")]
    Field { field: String },
    #[serde(rename_all = "camelCase")]
    MethodReturn { method: String, context: Context },
}

/// One taint fact: a source label plus the call site that produced it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Taint {
    pub label: String,
    pub site: Site,
}

/// Fixed-point taint flow graph.
///
/// Nodes are registers (per occurrence, per context), fields (merged across
/// instances), and method returns (per context). Each directed edge carries
/// the site of the instruction that induced it. `taints` maps every node to
/// the set of (label, source site) pairs that reach it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaintFlowGraph {
    pub(crate) edges: BTreeMap<TaintNode, BTreeMap<TaintNode, Site>>,
    pub(crate) taints: BTreeMap<TaintNode, BTreeSet<Taint>>,
    /// Origin nodes per taint fact (the `dst` of each firing source call).
    pub(crate) origins: BTreeMap<Taint, BTreeSet<TaintNode>>,
}

impl TaintFlowGraph {
    pub fn node_count(&self) -> usize {
        self.taints.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    pub fn contains(&self, node: &TaintNode) -> bool {
        self.taints.contains_key(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaintNode> {
        self.taints.keys()
    }

    /// Directed edges as (from, to, inducing instruction site).
    pub fn edges(&self) -> impl Iterator<Item = (&TaintNode, &TaintNode, &Site)> {
        self.edges
            .iter()
            .flat_map(|(from, outs)| outs.iter().map(move |(to, site)| (from, to, site)))
    }

    pub fn has_edge(&self, from: &TaintNode, to: &TaintNode) -> bool {
        self.edges.get(from).is_some_and(|outs| outs.contains_key(to))
    }

    /// The (label, source site) facts reaching a node.
    pub fn taints_at(&self, node: &TaintNode) -> Result<&BTreeSet<Taint>, TaintError> {
        self.taints
            .get(node)
            .ok_or_else(|| TaintError::UnknownNode(format!("{node:?}")))
    }

    /// True when one more propagation round over every edge would change no
    /// taint set — i.e. the graph is at its fixed point.
    pub fn is_fixed_point(&self) -> bool {
        self.edges().all(|(from, to, _)| {
            let from_taints = &self.taints[from];
            let to_taints = &self.taints[to];
            from_taints.is_subset(to_taints)
        })
    }
}

/// Source labels reaching `node` (the label projection of
/// [`TaintFlowGraph::taints_at`]); empty set for an untainted node, error
/// for a node that is not in the graph.
pub fn reachable_labels(
    graph: &TaintFlowGraph,
    node: &TaintNode,
) -> Result<BTreeSet<String>, TaintError> {
    Ok(graph
        .taints_at(node)?
        .iter()
        .map(|t| t.label.clone())
        .collect())
}

/// One source-to-sink flow at the fixed point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowFinding {
    pub source_label: String,
    pub source_site: Site,
    pub sink_api: String,
    pub sink_group: SinkGroup,
    pub sink_site: Site,
    /// Shortest node path from the source's result to the sink's argument;
    /// consecutive nodes are connected by graph edges.
    pub path: Vec<TaintNode>,
}
