//! Textual intermediate representation for SDK bytecode.
//!
//! An IR document describes one SDK: a coordinate line, then classes, then
//! methods with straight-line instruction bodies. The format is line-oriented
//! UTF-8; `#` begins a comment line and blank lines are ignored:
//!
//! ```text
//! sdk com.example:tracker:1.4.0
//! class com.example.tracker.Collector
//! method com.example.tracker.Collector.grab public sig="()->java.lang.String" params=
//!   invoke_static r0 api:android.os.Build.getSerial
//!   return r0
//! ```
//!
//! Instructions are normalized into a closed set of 34 kinds covering the
//! Dalvik-style operations the analyses need. The grouping is a fixed project
//! convention: it keeps every register-level data move the taint analysis
//! cares about distinct, and folds everything else into coarse buckets that
//! still give the matcher a meaningful opcode histogram.
//!
//! Two invariants matter to everything downstream and are enforced on parse
//! and by [`SdkIR::validate`]:
//!
//! * registers are defined before use, in single-pass order (a register is a
//!   parameter or the `dst` of an earlier instruction in the same body);
//! * method signatures are anonymized — they may mention only framework
//!   types (`java.*`, `javax.*`, `android.*`), primitive type keywords, and
//!   the `?` placeholder for everything developer-named.

mod parse;
mod render;

pub use parse::parse_sdk_ir;
pub use render::render_sdk_ir;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by IR parsing and validation.
#[derive(Debug, Error)]
pub enum IrError {
    /// Syntax or semantic error found while parsing a document, with a
    /// 1-based line and column.
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    /// Structural invariant violated in a programmatically built [`SdkIR`].
    #[error("invalid IR: {0}")]
    Invalid(String),
}

/// Maven-style SDK coordinate `group:artifact:version`.
///
/// All three parts are non-empty and colon-free; the canonical rendering is
/// `group:artifact:version` and serde maps coordinates to that string form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SdkCoordinate {
    group: String,
    artifact: String,
    version: String,
}

impl SdkCoordinate {
    pub fn new(group: &str, artifact: &str, version: &str) -> Result<Self, IrError> {
        for (part, what) in [(group, "group"), (artifact, "artifact"), (version, "version")] {
            if part.is_empty() {
                return Err(IrError::Invalid(format!("coordinate {what} is empty")));
            }
            if part.contains(':') || part.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(IrError::Invalid(format!(
                    "coordinate {what} {part:?} contains a colon, whitespace, or control character"
                )));
            }
        }
        Ok(SdkCoordinate {
            group: group.to_string(),
            artifact: artifact.to_string(),
            version: version.to_string(),
        })
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn artifact(&self) -> &str {
        &self.artifact
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// `group:artifact` — the identity that version conflicts are resolved
    /// over.
    pub fn artifact_key(&self) -> (String, String) {
        (self.group.clone(), self.artifact.clone())
    }
}

impl fmt::Display for SdkCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.group, self.artifact, self.version)
    }
}

impl FromStr for SdkCoordinate {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, IrError> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(IrError::Invalid(format!(
                "coordinate {s:?} must have exactly three colon-separated parts"
            )));
        }
        SdkCoordinate::new(parts[0], parts[1], parts[2])
    }
}

impl TryFrom<String> for SdkCoordinate {
    type Error = IrError;

    fn try_from(s: String) -> Result<Self, IrError> {
        s.parse()
    }
}

impl From<SdkCoordinate> for String {
    fn from(c: SdkCoordinate) -> String {
        c.to_string()
    }
}

/// Virtual register id; rendered as `r<N>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegId(pub u32);

impl fmt::Display for RegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// The closed set of normalized instruction kinds.
///
/// `ALL` fixes the canonical order; [`InstructionKind::index`] is the
/// position in that order and is what the 34-bucket opcode histogram and the
/// `op:` feature namespace key on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InstructionKind {
    Assign,
    Const,
    ConstString,
    NewInstance,
    NewArray,
    LoadInstance,
    StoreInstance,
    LoadStatic,
    StoreStatic,
    LoadArray,
    StoreArray,
    InvokeVirtual,
    InvokeStatic,
    InvokeDirect,
    InvokeInterface,
    InvokeSuper,
    Return,
    ReturnVoid,
    Throw,
    Goto,
    If,
    Switch,
    Cmp,
    UnaryOp,
    BinaryOp,
    Cast,
    InstanceOf,
    ArrayLength,
    MonitorEnter,
    MonitorExit,
    MoveException,
    MoveResult,
    Nop,
    FillArray,
}

impl InstructionKind {
    pub const COUNT: usize = 34;

    pub const ALL: [InstructionKind; Self::COUNT] = [
        InstructionKind::Assign,
        InstructionKind::Const,
        InstructionKind::ConstString,
        InstructionKind::NewInstance,
        InstructionKind::NewArray,
        InstructionKind::LoadInstance,
        InstructionKind::StoreInstance,
        InstructionKind::LoadStatic,
        InstructionKind::StoreStatic,
        InstructionKind::LoadArray,
        InstructionKind::StoreArray,
        InstructionKind::InvokeVirtual,
        InstructionKind::InvokeStatic,
        InstructionKind::InvokeDirect,
        InstructionKind::InvokeInterface,
        InstructionKind::InvokeSuper,
        InstructionKind::Return,
        InstructionKind::ReturnVoid,
        InstructionKind::Throw,
        InstructionKind::Goto,
        InstructionKind::If,
        InstructionKind::Switch,
        InstructionKind::Cmp,
        InstructionKind::UnaryOp,
        InstructionKind::BinaryOp,
        InstructionKind::Cast,
        InstructionKind::InstanceOf,
        InstructionKind::ArrayLength,
        InstructionKind::MonitorEnter,
        InstructionKind::MonitorExit,
        InstructionKind::MoveException,
        InstructionKind::MoveResult,
        InstructionKind::Nop,
        InstructionKind::FillArray,
    ];

    /// Upper-case canonical name, e.g. `ASSIGN`, `CONST_STRING`.
    pub fn name(self) -> &'static str {
        match self {
            InstructionKind::Assign => "ASSIGN",
            InstructionKind::Const => "CONST",
            InstructionKind::ConstString => "CONST_STRING",
            InstructionKind::NewInstance => "NEW_INSTANCE",
            InstructionKind::NewArray => "NEW_ARRAY",
            InstructionKind::LoadInstance => "LOAD_INSTANCE",
            InstructionKind::StoreInstance => "STORE_INSTANCE",
            InstructionKind::LoadStatic => "LOAD_STATIC",
            InstructionKind::StoreStatic => "STORE_STATIC",
            InstructionKind::LoadArray => "LOAD_ARRAY",
            InstructionKind::StoreArray => "STORE_ARRAY",
            InstructionKind::InvokeVirtual => "INVOKE_VIRTUAL",
            InstructionKind::InvokeStatic => "INVOKE_STATIC",
            InstructionKind::InvokeDirect => "INVOKE_DIRECT",
            InstructionKind::InvokeInterface => "INVOKE_INTERFACE",
            InstructionKind::InvokeSuper => "INVOKE_SUPER",
            InstructionKind::Return => "RETURN",
            InstructionKind::ReturnVoid => "RETURN_VOID",
            InstructionKind::Throw => "THROW",
            InstructionKind::Goto => "GOTO",
            InstructionKind::If => "IF",
            InstructionKind::Switch => "SWITCH",
            InstructionKind::Cmp => "CMP",
            InstructionKind::UnaryOp => "UNARY_OP",
            InstructionKind::BinaryOp => "BINARY_OP",
            InstructionKind::Cast => "CAST",
            InstructionKind::InstanceOf => "INSTANCE_OF",
            InstructionKind::ArrayLength => "ARRAY_LENGTH",
            InstructionKind::MonitorEnter => "MONITOR_ENTER",
            InstructionKind::MonitorExit => "MONITOR_EXIT",
            InstructionKind::MoveException => "MOVE_EXCEPTION",
            InstructionKind::MoveResult => "MOVE_RESULT",
            InstructionKind::Nop => "NOP",
            InstructionKind::FillArray => "FILL_ARRAY",
        }
    }

    /// Lower-case mnemonic used in document text, e.g. `const_string`.
    pub fn mnemonic(self) -> String {
        self.name().to_ascii_lowercase()
    }

    pub fn from_mnemonic(s: &str) -> Option<InstructionKind> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s) && k.mnemonic() == s)
    }

    /// Position in [`InstructionKind::ALL`].
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).expect("kind listed in ALL")
    }

    pub fn is_invoke(self) -> bool {
        matches!(
            self,
            InstructionKind::InvokeVirtual
                | InstructionKind::InvokeStatic
                | InstructionKind::InvokeDirect
                | InstructionKind::InvokeInterface
                | InstructionKind::InvokeSuper
        )
    }

    pub fn is_field_access(self) -> bool {
        matches!(
            self,
            InstructionKind::LoadInstance
                | InstructionKind::StoreInstance
                | InstructionKind::LoadStatic
                | InstructionKind::StoreStatic
        )
    }
}

/// One normalized instruction.
///
/// `srcs` lists the registers the instruction reads, in operand order.
/// `api`/`callee` are mutually exclusive and occur only on invoke kinds;
/// `field` occurs exactly on the four field-access kinds; `literal` exactly
/// on `CONST_STRING`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub kind: InstructionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<RegId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub srcs: Vec<RegId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callee: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal: Option<String>,
}

impl Instruction {
    /// A bare instruction of the given kind with no operands.
    pub fn bare(kind: InstructionKind) -> Instruction {
        Instruction {
            kind,
            dst: None,
            srcs: Vec::new(),
            api: None,
            callee: None,
            field: None,
            literal: None,
        }
    }
}

/// A method body: identifier, visibility, anonymized signature, parameter
/// registers, and a straight-line instruction sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodIR {
    /// Class-qualified method identifier, unique within the document.
    pub id: String,
    pub public: bool,
    /// Anonymized signature; see the module docs for the allowed tokens.
    pub signature: String,
    pub params: Vec<RegId>,
    pub body: Vec<Instruction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassIR {
    pub id: String,
    pub methods: Vec<MethodIR>,
}

/// One SDK's worth of IR: the unit a document describes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdkIR {
    pub coordinate: SdkCoordinate,
    pub classes: Vec<ClassIR>,
}

impl SdkIR {
    /// Checks every structural invariant the parser enforces, for IR built
    /// in code rather than parsed from text.
    pub fn validate(&self) -> Result<(), IrError> {
        let mut class_ids = BTreeSet::new();
        let mut method_ids = BTreeSet::new();
        for class in &self.classes {
            check_token(&class.id, "class id")?;
            if !class_ids.insert(&class.id) {
                return Err(IrError::Invalid(format!("duplicate class id {:?}", class.id)));
            }
            for method in &class.methods {
                check_token(&method.id, "method id")?;
                if !method_ids.insert(&method.id) {
                    return Err(IrError::Invalid(format!(
                        "duplicate method id {:?}",
                        method.id
                    )));
                }
                check_signature_anonymized(&method.signature)
                    .map_err(|msg| IrError::Invalid(format!("method {}: {msg}", method.id)))?;
                validate_method_body(method)
                    .map_err(|msg| IrError::Invalid(format!("method {}: {msg}", method.id)))?;
            }
        }
        Ok(())
    }
}

/// Counts instruction kinds over a method body into the canonical 34-bucket
/// layout of [`InstructionKind::ALL`]; buckets sum to the body length.
pub fn kind_histogram(method: &MethodIR) -> [u32; InstructionKind::COUNT] {
    let mut buckets = [0u32; InstructionKind::COUNT];
    for instr in &method.body {
        buckets[instr.kind.index()] += 1;
    }
    buckets
}

/// Java primitive-type keywords allowed in anonymized signatures alongside
/// framework types and `?`.
const PRIMITIVE_TYPES: [&str; 9] = [
    "void", "boolean", "byte", "short", "char", "int", "long", "float", "double",
];

fn is_framework_type(name: &str) -> bool {
    name.starts_with("java.") || name.starts_with("javax.") || name.starts_with("android.")
}

/// Checks that a signature is anonymized: every name-like token is a
/// framework type, a primitive keyword, or numeric; `?` and punctuation are
/// structure. Returns a description of the first offending token.
pub(crate) fn check_signature_anonymized(sig: &str) -> Result<(), String> {
    let is_name_char = |c: char| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$');
    let mut rest = sig;
    while let Some(start) = rest.find(is_name_char) {
        let tail = &rest[start..];
        let end = tail.find(|c| !is_name_char(c)).unwrap_or(tail.len());
        let token = &tail[..end];
        let ok = token.chars().all(|c| c.is_ascii_digit())
            || PRIMITIVE_TYPES.contains(&token)
            || is_framework_type(token);
        if !ok {
            return Err(format!(
                "signature token {token:?} is not a framework type, primitive, or `?`"
            ));
        }
        rest = &tail[end..];
    }
    Ok(())
}

pub(crate) fn check_token(s: &str, what: &str) -> Result<(), IrError> {
    if s.is_empty() {
        return Err(IrError::Invalid(format!("{what} is empty")));
    }
    if s.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(IrError::Invalid(format!(
            "{what} {s:?} contains whitespace or control characters"
        )));
    }
    Ok(())
}

/// Expected operand layout for a kind; used by validation (the parser
/// enforces the same shapes syntactically).
pub(crate) struct OperandShape {
    pub dst: bool,
    pub srcs: usize,
    pub field: bool,
    pub target: bool,
    pub literal: bool,
}

pub(crate) fn operand_shape(kind: InstructionKind) -> OperandShape {
    use InstructionKind::*;
    let (dst, srcs, field, target, literal) = match kind {
        Assign | UnaryOp | Cast | InstanceOf | ArrayLength | MoveResult => (true, 1, false, false, false),
        Const | NewInstance | MoveException => (true, 0, false, false, false),
        ConstString => (true, 0, false, false, true),
        NewArray => (true, 1, false, false, false),
        LoadInstance => (true, 1, true, false, false),
        StoreInstance => (false, 2, true, false, false),
        LoadStatic => (true, 0, true, false, false),
        StoreStatic => (false, 1, true, false, false),
        LoadArray => (true, 2, false, false, false),
        StoreArray => (false, 3, false, false, false),
        InvokeVirtual | InvokeStatic | InvokeDirect | InvokeInterface | InvokeSuper => {
            // srcs count is the argument list length; validated as variable.
            (true, usize::MAX, false, true, false)
        }
        Return | Throw | Switch | MonitorEnter | MonitorExit | FillArray => (false, 1, false, false, false),
        ReturnVoid | Goto | Nop => (false, 0, false, false, false),
        If => (false, 2, false, false, false),
        Cmp | BinaryOp => (true, 2, false, false, false),
    };
    OperandShape { dst, srcs, field, target, literal }
}

fn validate_method_body(method: &MethodIR) -> Result<(), String> {
    let mut defined: BTreeSet<u32> = BTreeSet::new();
    for param in &method.params {
        if !defined.insert(param.0) {
            return Err(format!("duplicate parameter register {param}"));
        }
    }
    for (idx, instr) in method.body.iter().enumerate() {
        let shape = operand_shape(instr.kind);
        let kind = instr.kind.name();
        if instr.dst.is_some() != shape.dst {
            return Err(format!("instruction {idx} ({kind}): dst presence mismatch"));
        }
        if shape.srcs != usize::MAX && instr.srcs.len() != shape.srcs {
            return Err(format!(
                "instruction {idx} ({kind}): expected {} source registers, found {}",
                shape.srcs,
                instr.srcs.len()
            ));
        }
        if instr.field.is_some() != shape.field {
            return Err(format!(
                "instruction {idx} ({kind}): field operand allowed only on field-access kinds"
            ));
        }
        if shape.target {
            match (&instr.api, &instr.callee) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(format!(
                        "instruction {idx} ({kind}): exactly one of api/callee required"
                    ))
                }
            }
        } else if instr.api.is_some() || instr.callee.is_some() {
            return Err(format!(
                "instruction {idx} ({kind}): api/callee allowed only on invoke kinds"
            ));
        }
        if instr.literal.is_some() != shape.literal {
            return Err(format!(
                "instruction {idx} ({kind}): literal allowed only on CONST_STRING"
            ));
        }
        for (name, value) in [("api", &instr.api), ("callee", &instr.callee), ("field", &instr.field)] {
            if let Some(v) = value {
                check_token(v, name).map_err(|e| format!("instruction {idx} ({kind}): {e}"))?;
            }
        }
        for src in &instr.srcs {
            if !defined.contains(&src.0) {
                return Err(format!(
                    "instruction {idx} ({kind}): register {src} used before definition"
                ));
            }
        }
        if let Some(dst) = instr.dst {
            defined.insert(dst.0);
        }
    }
    Ok(())
}
