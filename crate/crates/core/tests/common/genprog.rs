//! Random straight-line program generator for taint-oracle equivalence:
//! up to 5 methods, up to 30 instructions total, acyclic calls (a method
//! only calls higher-numbered methods), every structural IR invariant
//! respected.

use std::collections::BTreeMap;

use fpscope_core::depgraph::{build_graph, resolve, Manifest, ResolvedBundle};
use fpscope_core::ir::{
    ClassIR, Instruction, InstructionKind, MethodIR, RegId, SdkCoordinate, SdkIR,
};
use fpscope_core::taint::{SinkGroup, TaintConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct GeneratedProgram {
    pub bundle: ResolvedBundle,
    pub code: BTreeMap<SdkCoordinate, SdkIR>,
    pub config: TaintConfig,
}

/// The fixed analysis configuration all generated programs run under.
pub fn standard_config() -> TaintConfig {
    TaintConfig {
        sources: (1..=3).map(|i| (format!("fp.s{i}"), i.to_string())).collect(),
        sinks: BTreeMap::from([
            ("net.send".to_string(), SinkGroup::Network),
            ("enc.hash".to_string(), SinkGroup::Encryption),
        ]),
        propagators: ["util.mix".to_string()].into(),
    }
}

const FIELDS: [&str; 3] = ["f:a", "f:b", "f:c"];
const SOURCE_APIS: [&str; 3] = ["fp.s1", "fp.s2", "fp.s3"];
const SINK_APIS: [&str; 2] = ["net.send", "enc.hash"];
const UNKNOWN_APIS: [&str; 2] = ["raw.misc", "log.print"];

struct MethodPlan {
    id: String,
    public: bool,
    params: usize,
}

pub fn random_program(rng: &mut ChaCha8Rng) -> GeneratedProgram {
    let method_count = rng.gen_range(1..=5);
    let plans: Vec<MethodPlan> = (0..method_count)
        .map(|i| MethodPlan {
            id: format!("C.f{i}"),
            // The first method is always an entry point.
            public: i == 0 || rng.gen_bool(0.5),
            params: rng.gen_range(0..=2),
        })
        .collect();

    let mut budget: usize = 30;
    let methods: Vec<MethodIR> = (0..method_count)
        .map(|i| {
            let len = rng.gen_range(1..=6.min(budget.max(1)));
            budget = budget.saturating_sub(len);
            random_method(rng, &plans, i, len)
        })
        .collect();

    let coordinate: SdkCoordinate = "t:prog:1".parse().unwrap();
    let sdk = SdkIR {
        coordinate: coordinate.clone(),
        classes: vec![ClassIR { id: "C".to_string(), methods }],
    };
    sdk.validate().expect("generated program violates an IR invariant");

    let manifests =
        vec![Manifest { coordinate: coordinate.clone(), dependencies: Vec::new() }];
    let graph = build_graph(&manifests).unwrap();
    let bundle = resolve(&graph, &coordinate).unwrap();
    GeneratedProgram {
        bundle,
        code: BTreeMap::from([(coordinate, sdk)]),
        config: standard_config(),
    }
}

fn random_method(
    rng: &mut ChaCha8Rng,
    plans: &[MethodPlan],
    index: usize,
    len: usize,
) -> MethodIR {
    let plan = &plans[index];
    let params: Vec<RegId> = (0..plan.params).map(|r| RegId(r as u32)).collect();
    let mut defined: Vec<u32> = (0..plan.params as u32).collect();
    let mut next_reg = plan.params as u32;
    let mut body: Vec<Instruction> = Vec::new();

    for position in 0..len {
        let last = position == len - 1;
        if last {
            // Every method ends in a return so callers can read something.
            if defined.is_empty() || rng.gen_bool(0.2) {
                body.push(Instruction::bare(InstructionKind::ReturnVoid));
            } else {
                let mut instr = Instruction::bare(InstructionKind::Return);
                instr.srcs = vec![RegId(*defined.choose(rng).unwrap())];
                body.push(instr);
            }
            continue;
        }
        body.push(random_instruction(rng, plans, index, &mut defined, &mut next_reg));
    }

    MethodIR {
        id: plan.id.clone(),
        public: plan.public,
        signature: match plan.params {
            0 => "()->?".to_string(),
            n => format!("({})->?", vec!["?"; n].join(",")),
        },
        params,
        body,
    }
}

fn random_instruction(
    rng: &mut ChaCha8Rng,
    plans: &[MethodPlan],
    index: usize,
    defined: &mut Vec<u32>,
    next_reg: &mut u32,
) -> Instruction {
    use InstructionKind::*;

    // Either a brand-new destination register or a redefinition (a kill).
    let fresh_dst = |rng: &mut ChaCha8Rng, defined: &mut Vec<u32>, next: &mut u32| {
        let reg = if !defined.is_empty() && rng.gen_bool(0.3) {
            *defined.choose(rng).unwrap()
        } else {
            let r = *next;
            *next += 1;
            defined.push(r);
            r
        };
        RegId(reg)
    };
    let pick =
        |rng: &mut ChaCha8Rng, defined: &[u32]| RegId(*defined.choose(rng).unwrap());

    let callable: Vec<usize> = (index + 1..plans.len()).collect();
    loop {
        let roll = rng.gen_range(0..100);
        let have = defined.len();
        let kind = match roll {
            0..=9 => Const,
            10..=15 => ConstString,
            16..=23 => Assign,
            24..=27 => UnaryOp,
            28..=35 => BinaryOp,
            36..=38 => Cmp,
            39..=41 => Cast,
            42..=44 => MoveResult,
            45..=49 => LoadInstance,
            50..=54 => StoreInstance,
            55..=57 => LoadStatic,
            58..=60 => StoreStatic,
            61..=63 => NewArray,
            64..=66 => LoadArray,
            67..=69 => StoreArray,
            70..=71 => ArrayLength,
            72..=73 => InstanceOf,
            74..=75 => If,
            76 => Nop,
            _ => InvokeStatic,
        };
        let shape_needs = match kind {
            Const | ConstString | LoadStatic | Nop => 0,
            Assign | UnaryOp | Cast | MoveResult | NewArray | ArrayLength | InstanceOf
            | LoadInstance | StoreStatic => 1,
            BinaryOp | Cmp | If | StoreInstance | LoadArray => 2,
            StoreArray => 3,
            InvokeStatic => 0,
            _ => unreachable!(),
        };
        if shape_needs > have {
            continue;
        }

        let mut instr = Instruction::bare(kind);
        match kind {
            Const | ConstString => {
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
                if kind == ConstString {
                    instr.literal = Some(format!("s{}", rng.gen_range(0..4)));
                }
            }
            Assign | UnaryOp | Cast | MoveResult | NewArray | ArrayLength | InstanceOf => {
                instr.srcs = vec![pick(rng, defined)];
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            BinaryOp | Cmp => {
                instr.srcs = vec![pick(rng, defined), pick(rng, defined)];
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            If => {
                instr.srcs = vec![pick(rng, defined), pick(rng, defined)];
            }
            Nop => {}
            LoadInstance => {
                instr.srcs = vec![pick(rng, defined)];
                instr.field = Some(FIELDS.choose(rng).unwrap().to_string());
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            LoadStatic => {
                instr.field = Some(FIELDS.choose(rng).unwrap().to_string());
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            StoreInstance => {
                instr.srcs = vec![pick(rng, defined), pick(rng, defined)];
                instr.field = Some(FIELDS.choose(rng).unwrap().to_string());
            }
            StoreStatic => {
                instr.srcs = vec![pick(rng, defined)];
                instr.field = Some(FIELDS.choose(rng).unwrap().to_string());
            }
            LoadArray => {
                instr.srcs = vec![pick(rng, defined), pick(rng, defined)];
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            StoreArray => {
                instr.srcs =
                    vec![pick(rng, defined), pick(rng, defined), pick(rng, defined)];
            }
            InvokeStatic => {
                let call_target = !callable.is_empty() && rng.gen_bool(0.4);
                if call_target {
                    let target = &plans[*callable.choose(rng).unwrap()];
                    if target.params > have {
                        continue;
                    }
                    instr.callee = Some(target.id.clone());
                    instr.srcs = (0..target.params).map(|_| pick(rng, defined)).collect();
                } else {
                    let api = match rng.gen_range(0..9) {
                        0..=2 => *SOURCE_APIS.choose(rng).unwrap(),
                        3..=5 => *SINK_APIS.choose(rng).unwrap(),
                        6..=7 => "util.mix",
                        _ => *UNKNOWN_APIS.choose(rng).unwrap(),
                    };
                    let wants = match api {
                        a if SOURCE_APIS.contains(&a) => 0,
                        _ => rng.gen_range(1..=2.min(have.max(1))),
                    };
                    if wants > have {
                        continue;
                    }
                    instr.api = Some(api.to_string());
                    instr.srcs = (0..wants).map(|_| pick(rng, defined)).collect();
                }
                instr.dst = Some(fresh_dst(rng, defined, next_reg));
            }
            _ => unreachable!(),
        }
        return instr;
    }
}
