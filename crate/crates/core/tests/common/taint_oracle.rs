//! Exhaustive def-use / call-expansion oracle for the taint analysis.
//!
//! Instead of building a flow graph and pushing taint along edges, this
//! oracle re-evaluates every reachable frame's transfer equations over flat
//! occurrence maps, sweeping until nothing changes. Call expansion follows
//! the same context rule (chains up to `k` call sites, then a single merged
//! ⊤), reimplemented locally.

use std::collections::{BTreeMap, BTreeSet};

use fpscope_core::depgraph::ResolvedBundle;
use fpscope_core::ir::{InstructionKind, MethodIR, SdkCoordinate, SdkIR};
use fpscope_core::taint::{Scope, SinkGroup, Site, TaintConfig};

/// One expected finding: (label, source site, sink api, sink group, sink
/// site).
pub type Expected = (String, Site, String, SinkGroup, Site);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ctx {
    Chain(Vec<Site>),
    Top,
}

impl Ctx {
    fn extend(&self, site: &Site, k: usize) -> Ctx {
        match self {
            Ctx::Top => Ctx::Top,
            Ctx::Chain(sites) if sites.len() >= k => Ctx::Top,
            Ctx::Chain(sites) => {
                let mut next = sites.clone();
                next.push(site.clone());
                Ctx::Chain(next)
            }
        }
    }
}

/// A register occurrence within one frame.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Occ {
    Param(u32),
    Def(usize, u32),
    Use(usize, u32),
}

type Frame = (String, Ctx);
type Fact = (String, Site); // (label, origin site)

/// Method table: id → (owning coordinate, class index, method index).
type MethodTable<'a> = BTreeMap<&'a str, (&'a SdkCoordinate, usize, usize)>;

fn method_of<'a>(
    code: &'a BTreeMap<SdkCoordinate, SdkIR>,
    table: &MethodTable<'a>,
    id: &str,
) -> (&'a MethodIR, &'a SdkCoordinate) {
    let (coordinate, ci, mi) = table[id];
    (&code[coordinate].classes[ci].methods[mi], coordinate)
}

#[derive(Default)]
struct State {
    occ: BTreeMap<(Frame, Occ), BTreeSet<Fact>>,
    fields: BTreeMap<String, BTreeSet<Fact>>,
    returns: BTreeMap<Frame, BTreeSet<Fact>>,
    changed: bool,
}

impl State {
    fn occ_get(&self, frame: &Frame, occ: &Occ) -> BTreeSet<Fact> {
        self.occ.get(&(frame.clone(), occ.clone())).cloned().unwrap_or_default()
    }

    fn occ_union(&mut self, frame: &Frame, occ: Occ, facts: &BTreeSet<Fact>) {
        let entry = self.occ.entry((frame.clone(), occ)).or_default();
        for fact in facts {
            if entry.insert(fact.clone()) {
                self.changed = true;
            }
        }
    }

    fn field_union(&mut self, field: &str, facts: &BTreeSet<Fact>) {
        let entry = self.fields.entry(field.to_string()).or_default();
        for fact in facts {
            if entry.insert(fact.clone()) {
                self.changed = true;
            }
        }
    }

    fn return_union(&mut self, frame: &Frame, facts: &BTreeSet<Fact>) {
        let entry = self.returns.entry(frame.clone()).or_default();
        for fact in facts {
            if entry.insert(fact.clone()) {
                self.changed = true;
            }
        }
    }
}

/// Computes the expected finding set by exhaustive re-evaluation.
pub fn expected_findings(
    bundle: &ResolvedBundle,
    code: &BTreeMap<SdkCoordinate, SdkIR>,
    config: &TaintConfig,
    scope: Scope,
    k: usize,
) -> BTreeSet<Expected> {
    let mut table: MethodTable = BTreeMap::new();
    for (coordinate, sdk) in code {
        for (ci, class) in sdk.classes.iter().enumerate() {
            for (mi, method) in class.methods.iter().enumerate() {
                table.entry(&method.id).or_insert((coordinate, ci, mi));
            }
        }
    }

    // Frame discovery: main's public methods at the empty chain, then every
    // resolved call site extends the caller's context.
    let mut frames: BTreeSet<Frame> = BTreeSet::new();
    let mut worklist: Vec<Frame> = Vec::new();
    for class in &code[&bundle.main].classes {
        for method in &class.methods {
            if method.public {
                worklist.push((method.id.clone(), Ctx::Chain(Vec::new())));
            }
        }
    }
    while let Some(frame) = worklist.pop() {
        if !frames.insert(frame.clone()) {
            continue;
        }
        let (method, _) = method_of(code, &table, &frame.0);
        for (i, instr) in method.body.iter().enumerate() {
            if let Some(callee) = &instr.callee {
                if table.contains_key(callee.as_str()) {
                    let site = Site::new(&frame.0, i);
                    worklist.push((callee.clone(), frame.1.extend(&site, k)));
                }
            }
        }
    }

    // Sweep all frames until no set grows.
    let mut state = State::default();
    loop {
        state.changed = false;
        for frame in &frames {
            sweep_frame(frame, &mut state, bundle, code, &table, config, scope, k);
        }
        if !state.changed {
            break;
        }
    }

    // Findings: taint reaching the use occurrences at sink-call arguments.
    let mut expected = BTreeSet::new();
    for frame in &frames {
        let (method, _) = method_of(code, &table, &frame.0);
        for (i, instr) in method.body.iter().enumerate() {
            let Some(api) = &instr.api else { continue };
            let Some(group) = config.sinks.get(api) else { continue };
            let sink_site = Site::new(&frame.0, i);
            for src in &instr.srcs {
                for (label, origin) in state.occ_get(frame, &Occ::Use(i, src.0)) {
                    expected.insert((
                        label,
                        origin,
                        api.clone(),
                        *group,
                        sink_site.clone(),
                    ));
                }
            }
        }
    }
    expected
}

#[allow(clippy::too_many_arguments)]
fn sweep_frame(
    frame: &Frame,
    state: &mut State,
    bundle: &ResolvedBundle,
    code: &BTreeMap<SdkCoordinate, SdkIR>,
    table: &MethodTable,
    config: &TaintConfig,
    scope: Scope,
    k: usize,
) {
    use InstructionKind::*;
    let (method, coordinate) = method_of(code, table, &frame.0);
    let in_main = *coordinate == bundle.main;

    let mut reaching: BTreeMap<u32, Occ> = BTreeMap::new();
    for param in &method.params {
        reaching.insert(param.0, Occ::Param(param.0));
    }
    for (i, instr) in method.body.iter().enumerate() {
        let site = Site::new(&frame.0, i);
        // Copy each read register's reaching definition into its use
        // occurrence.
        for src in &instr.srcs {
            let facts = state.occ_get(frame, &reaching[&src.0]);
            state.occ_union(frame, Occ::Use(i, src.0), &facts);
        }
        let use_facts = |state: &State, r: u32| state.occ_get(frame, &Occ::Use(i, r));

        match instr.kind {
            Assign | Cast | MoveResult | UnaryOp => {
                let facts = use_facts(state, instr.srcs[0].0);
                state.occ_union(frame, Occ::Def(i, instr.dst.unwrap().0), &facts);
            }
            Cmp | BinaryOp => {
                let mut facts = use_facts(state, instr.srcs[0].0);
                facts.extend(use_facts(state, instr.srcs[1].0));
                state.occ_union(frame, Occ::Def(i, instr.dst.unwrap().0), &facts);
            }
            LoadInstance | LoadStatic => {
                let field = instr.field.as_ref().unwrap();
                let facts = state.fields.get(field).cloned().unwrap_or_default();
                state.occ_union(frame, Occ::Def(i, instr.dst.unwrap().0), &facts);
            }
            StoreInstance => {
                let facts = use_facts(state, instr.srcs[1].0);
                state.field_union(instr.field.as_ref().unwrap(), &facts);
            }
            StoreStatic => {
                let facts = use_facts(state, instr.srcs[0].0);
                state.field_union(instr.field.as_ref().unwrap(), &facts);
            }
            LoadArray => {
                let facts = use_facts(state, instr.srcs[0].0);
                state.occ_union(frame, Occ::Def(i, instr.dst.unwrap().0), &facts);
            }
            StoreArray => {
                // Weak update into the array's reaching definition.
                let facts = use_facts(state, instr.srcs[2].0);
                let array = reaching[&instr.srcs[0].0].clone();
                state.occ_union(frame, array, &facts);
            }
            Return => {
                let facts = use_facts(state, instr.srcs[0].0);
                state.return_union(frame, &facts);
            }
            InvokeVirtual | InvokeStatic | InvokeDirect | InvokeInterface | InvokeSuper => {
                let dst = instr.dst.unwrap().0;
                if let Some(callee) = &instr.callee {
                    if table.contains_key(callee.as_str()) {
                        let callee_frame = (callee.clone(), frame.1.extend(&site, k));
                        let (callee_method, _) = method_of(code, table, callee);
                        for (arg, param) in instr.srcs.iter().zip(&callee_method.params) {
                            let facts = use_facts(state, arg.0);
                            state.occ_union(&callee_frame, Occ::Param(param.0), &facts);
                        }
                        let ret =
                            state.returns.get(&callee_frame).cloned().unwrap_or_default();
                        state.occ_union(frame, Occ::Def(i, dst), &ret);
                    } else {
                        // Unresolved callee: opaque argument-to-result flow.
                        for arg in &instr.srcs {
                            let facts = use_facts(state, arg.0);
                            state.occ_union(frame, Occ::Def(i, dst), &facts);
                        }
                    }
                } else {
                    let api = instr.api.as_ref().unwrap();
                    if let Some(label) = config.sources.get(api) {
                        if scope == Scope::WholeBundle || in_main {
                            let fact = (label.clone(), site.clone());
                            state.occ_union(frame, Occ::Def(i, dst), &BTreeSet::from([fact]));
                        }
                    }
                    if config.propagators.contains(api) {
                        for arg in &instr.srcs {
                            let facts = use_facts(state, arg.0);
                            state.occ_union(frame, Occ::Def(i, dst), &facts);
                        }
                    }
                }
            }
            Const | ConstString | NewInstance | NewArray | MoveException | InstanceOf
            | ArrayLength | Throw | Goto | If | Switch | MonitorEnter | MonitorExit | Nop
            | FillArray | ReturnVoid => {}
        }

        if let Some(dst) = instr.dst {
            reaching.insert(dst.0, Occ::Def(i, dst.0));
        }
    }
}
