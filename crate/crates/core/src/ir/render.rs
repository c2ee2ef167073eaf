//! Canonical renderer for IR documents.
//!
//! `parse(render(sdk)) == sdk` for every valid [`SdkIR`], and rendering a
//! parsed canonical document reproduces it byte for byte. The canonical form
//! has no comments or blank lines, single spaces between tokens, and
//! two-space instruction indents.

use std::fmt::Write;

use super::{Instruction, InstructionKind, RegId, SdkIR};

/// Renders an [`SdkIR`] to canonical document text.
///
/// Expects a valid IR (see [`SdkIR::validate`]); output for invalid IR is
/// unspecified and may not re-parse.
pub fn render_sdk_ir(sdk: &SdkIR) -> String {
    let mut out = String::new();
    writeln!(out, "sdk {}", sdk.coordinate).unwrap();
    for class in &sdk.classes {
        writeln!(out, "class {}", class.id).unwrap();
        for method in &class.methods {
            writeln!(
                out,
                "method {} {} sig=\"{}\" params={}",
                method.id,
                if method.public { "public" } else { "nonpublic" },
                escape_quoted(&method.signature),
                reg_list(&method.params),
            )
            .unwrap();
            for instr in &method.body {
                out.push_str("  ");
                render_instruction(&mut out, instr);
                out.push('\n');
            }
        }
    }
    out
}

fn render_instruction(out: &mut String, instr: &Instruction) {
    out.push_str(&instr.kind.mnemonic());
    use InstructionKind::*;
    match instr.kind {
        Assign | UnaryOp | Cast | InstanceOf | ArrayLength | MoveResult | NewArray => {
            push_reg(out, instr.dst.expect("dst"));
            push_reg(out, instr.srcs[0]);
        }
        Const | NewInstance | MoveException => push_reg(out, instr.dst.expect("dst")),
        ConstString => {
            push_reg(out, instr.dst.expect("dst"));
            write!(out, " \"{}\"", escape_quoted(instr.literal.as_ref().expect("literal"))).unwrap();
        }
        LoadInstance => {
            push_reg(out, instr.dst.expect("dst"));
            push_reg(out, instr.srcs[0]);
            write!(out, " field:{}", instr.field.as_ref().expect("field")).unwrap();
        }
        StoreInstance => {
            push_reg(out, instr.srcs[0]);
            write!(out, " field:{}", instr.field.as_ref().expect("field")).unwrap();
            push_reg(out, instr.srcs[1]);
        }
        LoadStatic => {
            push_reg(out, instr.dst.expect("dst"));
            write!(out, " field:{}", instr.field.as_ref().expect("field")).unwrap();
        }
        StoreStatic => {
            write!(out, " field:{}", instr.field.as_ref().expect("field")).unwrap();
            push_reg(out, instr.srcs[0]);
        }
        LoadArray | Cmp | BinaryOp => {
            push_reg(out, instr.dst.expect("dst"));
            push_reg(out, instr.srcs[0]);
            push_reg(out, instr.srcs[1]);
        }
        StoreArray => {
            for reg in &instr.srcs {
                push_reg(out, *reg);
            }
        }
        InvokeVirtual | InvokeStatic | InvokeDirect | InvokeInterface | InvokeSuper => {
            push_reg(out, instr.dst.expect("dst"));
            match (&instr.api, &instr.callee) {
                (Some(api), None) => write!(out, " api:{api}").unwrap(),
                (None, Some(callee)) => write!(out, " callee:{callee}").unwrap(),
                _ => unreachable!("invoke carries exactly one of api/callee"),
            }
            if !instr.srcs.is_empty() {
                write!(out, " {}", reg_list(&instr.srcs)).unwrap();
            }
        }
        Return | Throw | Switch | MonitorEnter | MonitorExit | FillArray => {
            push_reg(out, instr.srcs[0]);
        }
        ReturnVoid | Goto | Nop => {}
        If => {
            push_reg(out, instr.srcs[0]);
            push_reg(out, instr.srcs[1]);
        }
    }
}

fn push_reg(out: &mut String, reg: RegId) {
    write!(out, " {reg}").unwrap();
}

fn reg_list(regs: &[RegId]) -> String {
    regs.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
