//! Brute-force matching oracle and corpus generators for the SDK matcher.
//!
//! The oracle scores every (app class, indexed class) pair directly — no
//! inverted index, no candidate pruning — and then applies the same support
//! filter and output construction as the production matcher. Generators
//! produce random reference corpora, partially-copied query apps, and a
//! planted-SDK recovery workload (identifier renaming plus method
//! deletion).

use std::collections::{BTreeMap, BTreeSet};

use fpscope_core::ir::{ClassIR, Instruction, InstructionKind, MethodIR, RegId, SdkCoordinate, SdkIR};
use fpscope_core::sdkmatch::{class_vector, match_app, MatchOutcome, SdkIndex, SdkMatch};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// All-pairs rescoring of one app against the index, mirroring the
/// production output construction (support filter, ordering, per-class
/// candidate sets) with exhaustive candidate enumeration.
pub fn brute_force_match(
    app: &SdkIR,
    index: &SdkIndex,
    class_similarity: f64,
    support: f64,
) -> MatchOutcome {
    let mut app_classes: Vec<(String, _)> = Vec::new();
    for class in &app.classes {
        if class.methods.is_empty() {
            continue;
        }
        let vector =
            class_vector(&app.coordinate, &class.id, &class.methods, &index.weights).unwrap();
        app_classes.push((class.id.clone(), vector));
    }
    app_classes.sort_by(|a, b| a.0.cmp(&b.0));

    let mut candidate_sets: Vec<BTreeSet<(u32, u32)>> = Vec::with_capacity(app_classes.len());
    let mut matched: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (_, vector) in &app_classes {
        let mut kept = BTreeSet::new();
        for (s, entry) in index.entries.iter().enumerate() {
            for (c, indexed) in entry.classes.iter().enumerate() {
                let Ok(similarity) = vector.cosine(&indexed.vector) else { continue };
                if similarity >= class_similarity {
                    kept.insert((s as u32, c as u32));
                    matched.entry(s as u32).or_default().insert(c as u32);
                }
            }
        }
        candidate_sets.push(kept);
    }

    let mut detected: BTreeSet<u32> = BTreeSet::new();
    let mut matches = Vec::new();
    for (s, classes) in &matched {
        let entry = &index.entries[*s as usize];
        let total = entry.classes.len();
        let share = classes.len() as f64 / total as f64;
        if share >= support {
            detected.insert(*s);
            matches.push(SdkMatch {
                coordinate: entry.coordinate.clone(),
                support: share,
                matched_class_count: classes.len(),
                total_class_count: total,
            });
        }
    }
    for set in &mut candidate_sets {
        set.retain(|(s, _)| detected.contains(s));
    }
    matches.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| a.coordinate.cmp(&b.coordinate))
    });

    let class_matches = app_classes
        .iter()
        .zip(&candidate_sets)
        .map(|((id, _), set)| {
            let coords: BTreeSet<SdkCoordinate> = set
                .iter()
                .map(|(s, _)| index.entries[*s as usize].coordinate.clone())
                .collect();
            (id.clone(), coords)
        })
        .collect();
    MatchOutcome { matches, class_matches }
}

/// Convenience wrapper asserting index and brute force agree for one app.
pub fn assert_match_agreement(app: &SdkIR, index: &SdkIndex, eta: f64, gamma: f64) {
    let fast = match_app(app, index, eta, gamma).unwrap();
    let slow = brute_force_match(app, index, eta, gamma);
    assert_eq!(
        fast, slow,
        "index-accelerated matching diverged from all-pairs scoring for {} at eta={eta} gamma={gamma}",
        app.coordinate
    );
}

// ---- instruction constructors ----------------------------------------------

fn const_instr(dst: u32) -> Instruction {
    let mut i = Instruction::bare(InstructionKind::Const);
    i.dst = Some(RegId(dst));
    i
}

fn const_string(dst: u32, literal: &str) -> Instruction {
    let mut i = Instruction::bare(InstructionKind::ConstString);
    i.dst = Some(RegId(dst));
    i.literal = Some(literal.to_string());
    i
}

fn api_call(dst: u32, api: &str) -> Instruction {
    let mut i = Instruction::bare(InstructionKind::InvokeStatic);
    i.dst = Some(RegId(dst));
    i.api = Some(api.to_string());
    i
}

fn assign(dst: u32, src: u32) -> Instruction {
    let mut i = Instruction::bare(InstructionKind::Assign);
    i.dst = Some(RegId(dst));
    i.srcs = vec![RegId(src)];
    i
}

fn binary(dst: u32, a: u32, b: u32) -> Instruction {
    let mut i = Instruction::bare(InstructionKind::BinaryOp);
    i.dst = Some(RegId(dst));
    i.srcs = vec![RegId(a), RegId(b)];
    i
}

fn return_void() -> Instruction {
    Instruction::bare(InstructionKind::ReturnVoid)
}

const SIGNATURES: [&str; 4] = ["()->void", "()->?", "()->int", "()->java.lang.String"];

// ---- random corpora for exactness checking ----------------------------------

/// A corpus of 3–8 SDKs totalling at most 100 classes, mixing features
/// shared across the corpus with per-SDK unique ones.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<SdkIR> {
    let sdk_count = rng.gen_range(3..=8);
    let mut budget = 100usize;
    let mut sdks = Vec::new();
    for s in 0..sdk_count {
        let reserved = sdk_count - s - 1; // one class per later SDK
        let max_here = (budget - reserved).min(12).max(1);
        let class_count = rng.gen_range(1..=max_here);
        budget -= class_count;

        let mut classes = Vec::new();
        for c in 0..class_count {
            let class_id = format!("S{s}C{c}");
            let method_count = rng.gen_range(1..=3);
            let mut methods = Vec::new();
            for m in 0..method_count {
                methods.push(MethodIR {
                    id: format!("{class_id}.m{m}"),
                    public: rng.gen_bool(0.5),
                    signature: SIGNATURES[rng.gen_range(0..SIGNATURES.len())].to_string(),
                    params: Vec::new(),
                    body: random_body(rng, s, c * 7 + m),
                });
            }
            classes.push(ClassIR { id: class_id, methods });
        }
        let sdk = SdkIR {
            coordinate: SdkCoordinate::new("g", &format!("m{s}"), "1").unwrap(),
            classes,
        };
        sdk.validate().expect("generated corpus SDK must validate");
        sdks.push(sdk);
    }
    sdks
}

fn random_body(rng: &mut ChaCha8Rng, sdk: usize, salt: usize) -> Vec<Instruction> {
    let mut body = Vec::new();
    let mut next_reg = 0u32;
    let mut defined: Vec<u32> = Vec::new();
    let mut fresh = |defined: &mut Vec<u32>| {
        let r = next_reg;
        next_reg += 1;
        defined.push(r);
        r
    };
    for k in 0..rng.gen_range(1..=5) {
        let roll = rng.gen_range(0..6);
        let instr = match roll {
            0 | 1 => {
                let api = if rng.gen_bool(0.6) {
                    format!("api.shared.f{}", rng.gen_range(0..9))
                } else {
                    format!("api.g{sdk}.f{}", rng.gen_range(0..7))
                };
                api_call(fresh(&mut defined), &api)
            }
            2 => {
                let lit = if rng.gen_bool(0.7) {
                    format!("s{}", rng.gen_range(0..7))
                } else {
                    format!("u{sdk}x{salt}k{k}")
                };
                const_string(fresh(&mut defined), &lit)
            }
            3 => const_instr(fresh(&mut defined)),
            4 if !defined.is_empty() => {
                let src = defined[rng.gen_range(0..defined.len())];
                assign(fresh(&mut defined), src)
            }
            5 if !defined.is_empty() => {
                let a = defined[rng.gen_range(0..defined.len())];
                let b = defined[rng.gen_range(0..defined.len())];
                binary(fresh(&mut defined), a, b)
            }
            _ => const_instr(fresh(&mut defined)),
        };
        body.push(instr);
    }
    body.push(return_void());
    body
}

/// A query app built from partial renamed copies of corpus SDKs plus a few
/// noise classes. Copies drop roughly 30% of methods but keep at least one
/// per class; every identifier is rewritten.
pub fn query_app(rng: &mut ChaCha8Rng, corpus: &[SdkIR], serial: usize) -> SdkIR {
    let copies = rng.gen_range(0..=3.min(corpus.len()));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(rng);

    let mut classes = Vec::new();
    let mut n = 0usize;
    for &s in order.iter().take(copies) {
        for class in &corpus[s].classes {
            let new_id = format!("q{serial}n{n}");
            n += 1;
            let mut methods: Vec<&MethodIR> =
                class.methods.iter().filter(|_| !rng.gen_bool(0.3)).collect();
            if methods.is_empty() {
                methods.push(&class.methods[rng.gen_range(0..class.methods.len())]);
            }
            let methods = methods
                .into_iter()
                .enumerate()
                .map(|(j, m)| MethodIR {
                    id: format!("{new_id}.m{j}"),
                    public: m.public,
                    signature: m.signature.clone(),
                    params: m.params.clone(),
                    body: m.body.clone(),
                })
                .collect();
            classes.push(ClassIR { id: new_id, methods });
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        let new_id = format!("q{serial}n{n}");
        n += 1;
        let body = vec![
            api_call(0, &format!("api.noise{serial}x{n}")),
            const_string(1, &format!("noise{serial}x{n}")),
            return_void(),
        ];
        classes.push(ClassIR {
            id: new_id.clone(),
            methods: vec![MethodIR {
                id: format!("{new_id}.m0"),
                public: true,
                signature: "()->void".to_string(),
                params: Vec::new(),
                body,
            }],
        });
    }

    let app = SdkIR {
        coordinate: SdkCoordinate::new("app", &format!("q{serial}"), "0").unwrap(),
        classes,
    };
    app.validate().expect("generated query app must validate");
    app
}

// ---- planted-SDK recovery workload -------------------------------------------

/// Fifty reference SDKs with strongly distinctive per-SDK features: every
/// method calls two of its SDK's six private apis and loads a private
/// string, so cross-SDK class similarity stays low.
pub fn planted_sdks(rng: &mut ChaCha8Rng) -> Vec<SdkIR> {
    let mut sdks = Vec::new();
    for s in 0..50 {
        let class_count = rng.gen_range(2..=4);
        let mut classes = Vec::new();
        for c in 0..class_count {
            let class_id = format!("P{s}C{c}");
            let method_count = rng.gen_range(2..=3);
            let mut methods = Vec::new();
            for m in 0..method_count {
                let a = (c * 3 + m) % 6;
                let b = (a + 1) % 6;
                let body = vec![
                    api_call(0, &format!("api.p{s}.f{a}")),
                    api_call(1, &format!("api.p{s}.f{b}")),
                    const_string(2, &format!("u{s}c{c}m{m}")),
                    binary(3, 0, 1),
                    return_void(),
                ];
                methods.push(MethodIR {
                    id: format!("{class_id}.m{m}"),
                    public: true,
                    signature: SIGNATURES[(s + c + m) % SIGNATURES.len()].to_string(),
                    params: Vec::new(),
                    body,
                });
            }
            classes.push(ClassIR { id: class_id, methods });
        }
        let sdk = SdkIR {
            coordinate: SdkCoordinate::new("fp", &format!("lib{s}"), "1").unwrap(),
            classes,
        };
        sdk.validate().expect("planted SDK must validate");
        sdks.push(sdk);
    }
    sdks
}

/// An app embedding three planted SDKs with every identifier renamed and
/// exactly ⌊20%⌋ of the copied methods deleted (never emptying a class).
pub fn planted_app(
    rng: &mut ChaCha8Rng,
    serial: usize,
    sdks: &[SdkIR],
    chosen: &[usize],
) -> SdkIR {
    let mut classes: Vec<ClassIR> = Vec::new();
    let mut n = 0usize;
    for &s in chosen {
        for class in &sdks[s].classes {
            let new_id = format!("a{serial}c{n}");
            n += 1;
            let methods = class
                .methods
                .iter()
                .enumerate()
                .map(|(j, m)| MethodIR {
                    id: format!("{new_id}.m{j}"),
                    public: m.public,
                    signature: m.signature.clone(),
                    params: m.params.clone(),
                    body: m.body.clone(),
                })
                .collect();
            classes.push(ClassIR { id: new_id, methods });
        }
    }

    let total_methods: usize = classes.iter().map(|c| c.methods.len()).sum();
    let mut to_delete = total_methods / 5;
    while to_delete > 0 {
        let shrinkable: Vec<usize> = (0..classes.len())
            .filter(|&i| classes[i].methods.len() > 1)
            .collect();
        let i = shrinkable[rng.gen_range(0..shrinkable.len())];
        let j = rng.gen_range(0..classes[i].methods.len());
        classes[i].methods.remove(j);
        to_delete -= 1;
    }
    // Method ids keep their original positions; reindex after deletion so
    // ids stay dense and class-qualified.
    for class in &mut classes {
        for (j, method) in class.methods.iter_mut().enumerate() {
            method.id = format!("{}.m{j}", class.id);
        }
    }

    let app = SdkIR {
        coordinate: SdkCoordinate::new("app", &format!("host{serial}"), "0").unwrap(),
        classes,
    };
    app.validate().expect("planted app must validate");
    app
}
