//! The taint engine: frame discovery, graph construction, fixed-point
//! propagation, and finding extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    Context, FlowFinding, RegSite, Scope, SinkGroup, Site, Taint, TaintConfig, TaintError,
    TaintFlowGraph, TaintNode, TaintOptions,
};
use crate::depgraph::ResolvedBundle;
use crate::ir::{InstructionKind, IrError, MethodIR, RegId, SdkCoordinate, SdkIR};

/// Everything [`analyze`] produces: the fixed-point graph, one finding per
/// (source site, sink site, source label) that flows, and non-fatal
/// diagnostics (unresolved callees, duplicate method ids, arity mismatches).
#[derive(Clone, Debug)]
pub struct TaintAnalysis {
    pub graph: TaintFlowGraph,
    pub findings: Vec<FlowFinding>,
    pub diagnostics: Vec<String>,
}

struct MethodInfo<'a> {
    coordinate: &'a SdkCoordinate,
    method: &'a MethodIR,
}

/// A sink invocation observed during graph construction.
struct SinkHit {
    api: String,
    group: SinkGroup,
    site: Site,
    /// Argument `Use` nodes in operand order.
    args: Vec<TaintNode>,
}

impl TaintFlowGraph {
    fn ensure(&mut self, node: TaintNode) {
        self.taints.entry(node).or_default();
    }

    fn add_edge(&mut self, from: TaintNode, to: TaintNode, site: Site) {
        self.ensure(from.clone());
        self.ensure(to.clone());
        self.edges.entry(from).or_default().entry(to).or_insert(site);
    }
}

fn reg_node(method: &str, context: &Context, reg: RegId, site: RegSite) -> TaintNode {
    TaintNode::Register {
        method: method.to_string(),
        context: context.clone(),
        reg,
        site,
    }
}

/// Runs the analysis over one resolved bundle.
///
/// `code` must contain a valid [`SdkIR`] for every coordinate the bundle
/// keeps. Entry points are exactly the public methods of the main SDK; only
/// code reachable from them through `callee:` edges is visited.
pub fn analyze(
    bundle: &ResolvedBundle,
    code: &BTreeMap<SdkCoordinate, SdkIR>,
    config: &TaintConfig,
    scope: Scope,
    options: &TaintOptions,
) -> Result<TaintAnalysis, TaintError> {
    config.validate()?;
    if options.context_depth > 2 {
        return Err(TaintError::Config(format!(
            "context depth must be 0, 1, or 2 (got {})",
            options.context_depth
        )));
    }
    let k = options.context_depth;

    let mut diagnostics: BTreeSet<String> = BTreeSet::new();

    // Index methods bundle-wide. The main SDK is indexed first so that if a
    // method id collides across SDKs the main definition wins.
    let mut coordinates: Vec<&SdkCoordinate> = bundle.depth_of.keys().collect();
    coordinates.sort_by_key(|c| (**c != bundle.main, (*c).clone()));
    let mut methods: BTreeMap<&str, MethodInfo<'_>> = BTreeMap::new();
    for coordinate in coordinates {
        let sdk = code
            .get(coordinate)
            .ok_or_else(|| TaintError::MissingIr(coordinate.clone()))?;
        if sdk.coordinate != *coordinate {
            return Err(TaintError::InvalidIr {
                coordinate: coordinate.clone(),
                source: IrError::Invalid(format!(
                    "document declares coordinate {}, expected {coordinate}",
                    sdk.coordinate
                )),
            });
        }
        sdk.validate().map_err(|source| TaintError::InvalidIr {
            coordinate: coordinate.clone(),
            source,
        })?;
        for class in &sdk.classes {
            for method in &class.methods {
                if let Some(previous) = methods.get(method.id.as_str()) {
                    diagnostics.insert(format!(
                        "method id {} defined in both {} and {}; using the former",
                        method.id, previous.coordinate, coordinate
                    ));
                } else {
                    methods.insert(&method.id, MethodInfo { coordinate, method });
                }
            }
        }
    }

    // Discover (method, context) frames reachable from the entry points.
    let main_sdk = &code[&bundle.main];
    let mut frames: BTreeSet<(String, Context)> = BTreeSet::new();
    let mut worklist: VecDeque<(String, Context)> = VecDeque::new();
    for class in &main_sdk.classes {
        for method in &class.methods {
            if method.public {
                worklist.push_back((method.id.clone(), Context::entry()));
            }
        }
    }
    while let Some(frame) = worklist.pop_front() {
        if !frames.insert(frame.clone()) {
            continue;
        }
        let (method_id, context) = frame;
        let info = &methods[method_id.as_str()];
        for (i, instr) in info.method.body.iter().enumerate() {
            if let Some(callee) = &instr.callee {
                if methods.contains_key(callee.as_str()) {
                    let site = Site::new(&method_id, i);
                    worklist.push_back((callee.clone(), context.extend(&site, k)));
                } else {
                    diagnostics.insert(format!(
                        "unresolved callee {callee} (treated as an opaque propagator)"
                    ));
                }
            }
        }
    }

    // Build nodes and transfer edges frame by frame.
    let mut graph = TaintFlowGraph::default();
    let mut sink_hits: Vec<SinkHit> = Vec::new();
    for (method_id, context) in &frames {
        let info = &methods[method_id.as_str()];
        let method = info.method;
        let in_main = *info.coordinate == bundle.main;
        let mut last_def: BTreeMap<u32, TaintNode> = BTreeMap::new();
        for param in &method.params {
            let node = reg_node(method_id, context, *param, RegSite::Param);
            graph.ensure(node.clone());
            last_def.insert(param.0, node);
        }
        for (i, instr) in method.body.iter().enumerate() {
            let site = Site::new(method_id, i);
            // One Use node per distinct register read at this instruction,
            // wired to its reaching definition.
            let mut use_nodes: BTreeMap<u32, TaintNode> = BTreeMap::new();
            for src in &instr.srcs {
                if !use_nodes.contains_key(&src.0) {
                    let node = reg_node(method_id, context, *src, RegSite::Use(i));
                    graph.add_edge(last_def[&src.0].clone(), node.clone(), site.clone());
                    use_nodes.insert(src.0, node);
                }
            }
            let use_node = |r: RegId| use_nodes[&r.0].clone();
            let def_node = instr.dst.map(|d| {
                let node = reg_node(method_id, context, d, RegSite::Def(i));
                graph.ensure(node.clone());
                node
            });

            use InstructionKind::*;
            match instr.kind {
                Assign | Cast | MoveResult | UnaryOp => {
                    graph.add_edge(use_node(instr.srcs[0]), def_node.clone().unwrap(), site.clone());
                }
                Cmp | BinaryOp => {
                    let def = def_node.clone().unwrap();
                    graph.add_edge(use_node(instr.srcs[0]), def.clone(), site.clone());
                    graph.add_edge(use_node(instr.srcs[1]), def, site.clone());
                }
                LoadInstance | LoadStatic => {
                    let field = TaintNode::Field { field: instr.field.clone().unwrap() };
                    graph.add_edge(field, def_node.clone().unwrap(), site.clone());
                }
                StoreInstance => {
                    let field = TaintNode::Field { field: instr.field.clone().unwrap() };
                    graph.add_edge(use_node(instr.srcs[1]), field, site.clone());
                }
                StoreStatic => {
                    let field = TaintNode::Field { field: instr.field.clone().unwrap() };
                    graph.add_edge(use_node(instr.srcs[0]), field, site.clone());
                }
                LoadArray => {
                    // The whole array register is one cell: reading an
                    // element reads the array's taint.
                    graph.add_edge(use_node(instr.srcs[0]), def_node.clone().unwrap(), site.clone());
                }
                StoreArray => {
                    // Weak update into the array's current version.
                    let array_version = last_def[&instr.srcs[0].0].clone();
                    graph.add_edge(use_node(instr.srcs[2]), array_version, site.clone());
                }
                Return => {
                    let ret = TaintNode::MethodReturn {
                        method: method_id.clone(),
                        context: context.clone(),
                    };
                    graph.add_edge(use_node(instr.srcs[0]), ret, site.clone());
                }
                InvokeVirtual | InvokeStatic | InvokeDirect | InvokeInterface | InvokeSuper => {
                    let def = def_node.clone().unwrap();
                    if let Some(callee) = &instr.callee {
                        if let Some(callee_info) = methods.get(callee.as_str()) {
                            let callee_context = context.extend(&site, k);
                            let params = &callee_info.method.params;
                            if params.len() != instr.srcs.len() {
                                diagnostics.insert(format!(
                                    "call to {callee} at {site} passes {} arguments for {} parameters",
                                    instr.srcs.len(),
                                    params.len()
                                ));
                            }
                            for (arg, param) in instr.srcs.iter().zip(params) {
                                let pnode =
                                    reg_node(callee, &callee_context, *param, RegSite::Param);
                                graph.add_edge(use_node(*arg), pnode, site.clone());
                            }
                            let ret = TaintNode::MethodReturn {
                                method: callee.clone(),
                                context: callee_context,
                            };
                            graph.add_edge(ret, def.clone(), site.clone());
                        } else {
                            // Unresolved callee: opaque propagator.
                            for arg in &instr.srcs {
                                graph.add_edge(use_node(*arg), def.clone(), site.clone());
                            }
                        }
                    } else {
                        let api = instr.api.as_ref().expect("invoke carries api or callee");
                        let is_source = config.sources.contains_key(api);
                        let is_sink = config.sinks.contains_key(api);
                        let is_propagator = config.propagators.contains(api);
                        if is_source && (scope == Scope::WholeBundle || in_main) {
                            let taint = Taint {
                                label: config.sources[api].clone(),
                                site: site.clone(),
                            };
                            graph.taints.get_mut(&def).unwrap().insert(taint.clone());
                            graph.origins.entry(taint).or_default().insert(def.clone());
                        }
                        if is_sink {
                            sink_hits.push(SinkHit {
                                api: api.clone(),
                                group: config.sinks[api],
                                site: site.clone(),
                                args: instr.srcs.iter().map(|r| use_node(*r)).collect(),
                            });
                        }
                        let unknown = !is_source && !is_sink && !is_propagator;
                        if is_propagator || (unknown && options.taint_unknown_apis) {
                            for arg in &instr.srcs {
                                graph.add_edge(use_node(*arg), def.clone(), site.clone());
                            }
                        }
                    }
                }
                // No data transfer: allocation and inspection results are
                // fresh, control flow and monitors move no values.
                Const | ConstString | NewInstance | NewArray | MoveException | InstanceOf
                | ArrayLength | Throw | Goto | If | Switch | MonitorEnter | MonitorExit | Nop
                | FillArray | ReturnVoid => {}
            }

            if let Some(dst) = instr.dst {
                last_def.insert(dst.0, def_node.clone().unwrap());
            }
        }
    }

    propagate(&mut graph);
    let findings = collect_findings(&graph, &sink_hits);

    Ok(TaintAnalysis {
        graph,
        findings,
        diagnostics: diagnostics.into_iter().collect(),
    })
}

/// Monotone worklist propagation of taint sets along edges.
fn propagate(graph: &mut TaintFlowGraph) {
    let mut worklist: VecDeque<TaintNode> = graph
        .origins
        .values()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    while let Some(node) = worklist.pop_front() {
        let Some(outs) = graph.edges.get(&node) else { continue };
        let outs: Vec<TaintNode> = outs.keys().cloned().collect();
        let current = graph.taints[&node].clone();
        for to in outs {
            let target = graph.taints.get_mut(&to).expect("edge endpoints are ensured");
            let before = target.len();
            target.extend(current.iter().cloned());
            if target.len() > before {
                worklist.push_back(to);
            }
        }
    }
}

/// Extracts one finding per (source label, source site, sink site), with a
/// shortest source-to-sink node path.
fn collect_findings(graph: &TaintFlowGraph, sink_hits: &[SinkHit]) -> Vec<FlowFinding> {
    // Reverse adjacency for backward path search.
    let mut reverse: BTreeMap<&TaintNode, BTreeSet<&TaintNode>> = BTreeMap::new();
    for (from, outs) in &graph.edges {
        for to in outs.keys() {
            reverse.entry(to).or_default().insert(from);
        }
    }

    let mut seen: BTreeSet<(String, Site, Site)> = BTreeSet::new();
    let mut findings = Vec::new();
    for hit in sink_hits {
        for arg in &hit.args {
            for taint in &graph.taints[arg] {
                let key = (taint.label.clone(), taint.site.clone(), hit.site.clone());
                if !seen.insert(key) {
                    continue;
                }
                let path = shortest_taint_path(graph, &reverse, taint, arg);
                findings.push(FlowFinding {
                    source_label: taint.label.clone(),
                    source_site: taint.site.clone(),
                    sink_api: hit.api.clone(),
                    sink_group: hit.group,
                    sink_site: hit.site.clone(),
                    path,
                });
            }
        }
    }
    findings.sort_by(|a, b| {
        (&a.sink_site, &a.source_label, &a.source_site)
            .cmp(&(&b.sink_site, &b.source_label, &b.source_site))
    });
    findings
}

/// Backward BFS from the sink argument through taint-carrying nodes to the
/// nearest origin of `taint`; returns the forward source→sink path.
///
/// Propagation only moves taint along edges, so every node holding `taint`
/// has a taint-holding predecessor chain back to an origin; the search
/// cannot fail at the fixed point.
fn shortest_taint_path(
    graph: &TaintFlowGraph,
    reverse: &BTreeMap<&TaintNode, BTreeSet<&TaintNode>>,
    taint: &Taint,
    target: &TaintNode,
) -> Vec<TaintNode> {
    let origins = &graph.origins[taint];
    if origins.contains(target) {
        return vec![target.clone()];
    }
    let mut parent: BTreeMap<&TaintNode, &TaintNode> = BTreeMap::new();
    let mut queue: VecDeque<&TaintNode> = VecDeque::from([target]);
    while let Some(node) = queue.pop_front() {
        let Some(preds) = reverse.get(node) else { continue };
        for pred in preds {
            if parent.contains_key(*pred) || !graph.taints[*pred].contains(taint) {
                continue;
            }
            parent.insert(pred, node);
            if origins.contains(*pred) {
                let mut path = vec![(*pred).clone()];
                let mut cursor: &TaintNode = pred;
                while let Some(next) = parent.get(cursor) {
                    path.push((*next).clone());
                    if *next == target {
                        break;
                    }
                    cursor = next;
                }
                return path;
            }
            queue.push_back(pred);
        }
    }
    unreachable!("taint present at a node implies an origin path at the fixed point")
}
