//! Parser for the line-oriented IR document format.
//!
//! The parser is a single pass over lines with a two-level state machine
//! (current class, current method). Every rejection carries a 1-based line
//! and column; semantic rules (duplicate ids, use-before-definition,
//! anonymized signatures) are checked inline so their positions are exact.

use std::collections::BTreeSet;

use super::{
    check_signature_anonymized, ClassIR, Instruction, InstructionKind, IrError, MethodIR, RegId,
    SdkCoordinate, SdkIR,
};

/// Parses one IR document into an [`SdkIR`], rejecting the whole document on
/// the first violation.
pub fn parse_sdk_ir(input: &str) -> Result<SdkIR, IrError> {
    let mut sdk: Option<SdkIR> = None;
    let mut method_ids: BTreeSet<String> = BTreeSet::new();
    // Registers defined so far in the current method (params plus dsts).
    let mut defined: BTreeSet<u32> = BTreeSet::new();
    let mut in_method = false;

    for (line_idx, raw_line) in input.lines().enumerate() {
        let line_no = line_idx + 1;
        if raw_line.trim().is_empty() || raw_line.trim_start().starts_with('#') {
            continue;
        }
        if let Some(rest) = raw_line.strip_prefix("  ") {
            // Instruction line.
            if rest.starts_with(char::is_whitespace) {
                return Err(err(line_no, 3, "expected instruction after two-space indent"));
            }
            let sdk = sdk.as_mut().ok_or_else(|| {
                err(line_no, 1, "instruction before any `sdk` declaration")
            })?;
            if !in_method {
                return Err(err(line_no, 1, "instruction outside a method"));
            }
            let mut cur = Cursor::new(rest, line_no, 3);
            let instr = parse_instruction(&mut cur, &mut defined)?;
            let class = sdk.classes.last_mut().expect("in_method implies a class");
            let method = class.methods.last_mut().expect("in_method implies a method");
            method.body.push(instr);
            continue;
        }
        if raw_line.starts_with(char::is_whitespace) {
            return Err(err(line_no, 1, "bad indentation: instructions are indented by exactly two spaces"));
        }

        let mut cur = Cursor::new(raw_line, line_no, 1);
        let keyword_col = cur.col();
        let keyword = cur.take_token("directive")?;
        match keyword {
            "sdk" => {
                if sdk.is_some() {
                    return Err(err(line_no, keyword_col, "duplicate `sdk` declaration"));
                }
                let coord_col = cur.col();
                let coord_token = cur.take_token("coordinate")?;
                let coordinate: SdkCoordinate = coord_token
                    .parse()
                    .map_err(|e: IrError| err(line_no, coord_col, &e.to_string()))?;
                cur.expect_end()?;
                sdk = Some(SdkIR { coordinate, classes: Vec::new() });
            }
            "class" => {
                let sdk = sdk
                    .as_mut()
                    .ok_or_else(|| err(line_no, keyword_col, "`class` before `sdk` declaration"))?;
                let id_col = cur.col();
                let id = cur.take_token("class id")?.to_string();
                cur.expect_end()?;
                if sdk.classes.iter().any(|c| c.id == id) {
                    return Err(err(line_no, id_col, &format!("duplicate class id {id:?}")));
                }
                sdk.classes.push(ClassIR { id, methods: Vec::new() });
                in_method = false;
            }
            "method" => {
                let sdk = sdk
                    .as_mut()
                    .ok_or_else(|| err(line_no, keyword_col, "`method` before `sdk` declaration"))?;
                let class = sdk
                    .classes
                    .last_mut()
                    .ok_or_else(|| err(line_no, keyword_col, "`method` outside a class"))?;
                let id_col = cur.col();
                let id = cur.take_token("method id")?.to_string();
                if !method_ids.insert(id.clone()) {
                    return Err(err(line_no, id_col, &format!("duplicate method id {id:?}")));
                }
                let vis_col = cur.col();
                let public = match cur.take_token("visibility")? {
                    "public" => true,
                    "nonpublic" => false,
                    other => {
                        return Err(err(
                            line_no,
                            vis_col,
                            &format!("expected `public` or `nonpublic`, found {other:?}"),
                        ))
                    }
                };
                cur.skip_ws();
                let sig_col = cur.col();
                cur.expect("sig=\"")?;
                let signature = cur.take_quoted_rest()?;
                check_signature_anonymized(&signature)
                    .map_err(|msg| err(line_no, sig_col, &msg))?;
                cur.skip_ws();
                cur.expect("params=")?;
                let params_col = cur.col();
                let params_token = cur.rest_token();
                let params = parse_reg_list(params_token, line_no, params_col)?;
                cur.expect_end()?;
                defined = BTreeSet::new();
                for param in &params {
                    if !defined.insert(param.0) {
                        return Err(err(
                            line_no,
                            params_col,
                            &format!("duplicate parameter register {param}"),
                        ));
                    }
                }
                class.methods.push(MethodIR {
                    id,
                    public,
                    signature,
                    params,
                    body: Vec::new(),
                });
                in_method = true;
            }
            other => {
                return Err(err(
                    line_no,
                    keyword_col,
                    &format!("unknown directive {other:?} (expected sdk, class, or method)"),
                ));
            }
        }
    }

    sdk.ok_or_else(|| err(1, 1, "document contains no `sdk` declaration"))
}

fn parse_instruction(cur: &mut Cursor<'_>, defined: &mut BTreeSet<u32>) -> Result<Instruction, IrError> {
    let kind_col = cur.col();
    let mnemonic = cur.take_token("instruction kind")?;
    let kind = InstructionKind::from_mnemonic(mnemonic).ok_or_else(|| {
        err(cur.line, kind_col, &format!("unknown instruction kind {mnemonic:?}"))
    })?;

    let mut instr = Instruction::bare(kind);
    use InstructionKind::*;
    match kind {
        Assign | UnaryOp | Cast | InstanceOf | ArrayLength | MoveResult => {
            instr.dst = Some(cur.take_reg()?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        Const | NewInstance | MoveException => {
            instr.dst = Some(cur.take_reg()?);
        }
        ConstString => {
            instr.dst = Some(cur.take_reg()?);
            cur.skip_ws();
            cur.expect("\"")?;
            instr.literal = Some(cur.take_quoted_rest()?);
        }
        NewArray => {
            instr.dst = Some(cur.take_reg()?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        LoadInstance => {
            instr.dst = Some(cur.take_reg()?);
            instr.srcs.push(cur.take_src_reg(defined)?);
            instr.field = Some(cur.take_prefixed("field:")?);
        }
        StoreInstance => {
            let obj = cur.take_src_reg(defined)?;
            instr.field = Some(cur.take_prefixed("field:")?);
            let value = cur.take_src_reg(defined)?;
            instr.srcs = vec![obj, value];
        }
        LoadStatic => {
            instr.dst = Some(cur.take_reg()?);
            instr.field = Some(cur.take_prefixed("field:")?);
        }
        StoreStatic => {
            instr.field = Some(cur.take_prefixed("field:")?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        LoadArray => {
            instr.dst = Some(cur.take_reg()?);
            instr.srcs.push(cur.take_src_reg(defined)?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        StoreArray => {
            for _ in 0..3 {
                instr.srcs.push(cur.take_src_reg(defined)?);
            }
        }
        InvokeVirtual | InvokeStatic | InvokeDirect | InvokeInterface | InvokeSuper => {
            instr.dst = Some(cur.take_reg()?);
            cur.skip_ws();
            let target_col = cur.col();
            let target = cur.take_token("invoke target")?;
            if let Some(api) = target.strip_prefix("api:") {
                if api.is_empty() {
                    return Err(err(cur.line, target_col, "empty api identifier"));
                }
                instr.api = Some(api.to_string());
            } else if let Some(callee) = target.strip_prefix("callee:") {
                if callee.is_empty() {
                    return Err(err(cur.line, target_col, "empty callee identifier"));
                }
                instr.callee = Some(callee.to_string());
            } else {
                return Err(err(
                    cur.line,
                    target_col,
                    &format!("invoke target must start with api: or callee:, found {target:?}"),
                ));
            }
            cur.skip_ws();
            if !cur.at_end() {
                let args_col = cur.col();
                let args_token = cur.take_token("argument list")?;
                for reg in parse_reg_list(args_token, cur.line, args_col)? {
                    if !defined.contains(&reg.0) {
                        return Err(err(
                            cur.line,
                            args_col,
                            &format!("register {reg} used before definition"),
                        ));
                    }
                    instr.srcs.push(reg);
                }
            }
        }
        Return | Throw | Switch | MonitorEnter | MonitorExit | FillArray => {
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        ReturnVoid | Goto | Nop => {}
        If => {
            instr.srcs.push(cur.take_src_reg(defined)?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
        Cmp | BinaryOp => {
            instr.dst = Some(cur.take_reg()?);
            instr.srcs.push(cur.take_src_reg(defined)?);
            instr.srcs.push(cur.take_src_reg(defined)?);
        }
    }
    cur.expect_end()?;
    if let Some(dst) = instr.dst {
        defined.insert(dst.0);
    }
    Ok(instr)
}

fn parse_reg_list(token: &str, line: usize, col: usize) -> Result<Vec<RegId>, IrError> {
    if token.is_empty() {
        return Ok(Vec::new());
    }
    token
        .split(',')
        .map(|part| parse_reg(part).ok_or_else(|| err(line, col, &format!("expected register, found {part:?}"))))
        .collect()
}

fn parse_reg(token: &str) -> Option<RegId> {
    let digits = token.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(RegId)
}

fn err(line: usize, col: usize, msg: &str) -> IrError {
    IrError::Parse { line, col, msg: msg.to_string() }
}

/// Character cursor over one line, tracking the column for error reports.
struct Cursor<'a> {
    rest: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str, line: usize, start_col: usize) -> Self {
        Cursor { rest: s, line, col: start_col }
    }

    fn col(&self) -> usize {
        self.col
    }

    fn advance(&mut self, n: usize) {
        self.col += self.rest[..n].chars().count();
        self.rest = &self.rest[n..];
    }

    fn skip_ws(&mut self) {
        let n = self.rest.len() - self.rest.trim_start().len();
        self.advance(n);
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.rest.is_empty()
    }

    fn expect_end(&mut self) -> Result<(), IrError> {
        if !self.at_end() {
            return Err(err(self.line, self.col, &format!("unexpected trailing input {:?}", self.rest)));
        }
        Ok(())
    }

    /// Next whitespace-delimited token; errors if the line is exhausted.
    fn take_token(&mut self, what: &str) -> Result<&'a str, IrError> {
        self.skip_ws();
        if self.rest.is_empty() {
            return Err(err(self.line, self.col, &format!("expected {what}, found end of line")));
        }
        let end = self
            .rest
            .find(char::is_whitespace)
            .unwrap_or(self.rest.len());
        let token = &self.rest[..end];
        self.advance(end);
        Ok(token)
    }

    /// Remainder of the line as a single token (used for `params=` lists,
    /// which may legitimately be empty).
    fn rest_token(&mut self) -> &'a str {
        let end = self
            .rest
            .find(char::is_whitespace)
            .unwrap_or(self.rest.len());
        let token = &self.rest[..end];
        self.advance(end);
        token
    }

    fn expect(&mut self, prefix: &str) -> Result<(), IrError> {
        if let Some(rest) = self.rest.strip_prefix(prefix) {
            let n = self.rest.len() - rest.len();
            self.advance(n);
            Ok(())
        } else {
            Err(err(self.line, self.col, &format!("expected {prefix:?}")))
        }
    }

    /// Consumes a quoted-string body up to its closing `"`; the opening quote
    /// has already been consumed. Escapes: `\"` and `\\` only.
    fn take_quoted_rest(&mut self) -> Result<String, IrError> {
        let mut out = String::new();
        let mut chars = self.rest.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.advance(i + 1);
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((j, other)) => {
                        let col = self.col + self.rest[..j].chars().count();
                        return Err(err(
                            self.line,
                            col,
                            &format!("invalid escape \\{other} (only \\\" and \\\\ are allowed)"),
                        ));
                    }
                    None => break,
                },
                _ => out.push(c),
            }
        }
        Err(err(self.line, self.col + self.rest.chars().count(), "unterminated string literal"))
    }

    fn take_reg(&mut self) -> Result<RegId, IrError> {
        self.skip_ws();
        let col = self.col;
        let token = self.take_token("register")?;
        parse_reg(token).ok_or_else(|| err(self.line, col, &format!("expected register, found {token:?}")))
    }

    /// A register read: must already be defined.
    fn take_src_reg(&mut self, defined: &BTreeSet<u32>) -> Result<RegId, IrError> {
        self.skip_ws();
        let col = self.col;
        let reg = self.take_reg()?;
        if !defined.contains(&reg.0) {
            return Err(err(self.line, col, &format!("register {reg} used before definition")));
        }
        Ok(reg)
    }

    /// A token of the form `<prefix><id>`, returning the id (which may
    /// itself contain colons).
    fn take_prefixed(&mut self, prefix: &str) -> Result<String, IrError> {
        self.skip_ws();
        let col = self.col;
        let token = self.take_token(prefix)?;
        match token.strip_prefix(prefix) {
            Some(id) if !id.is_empty() => Ok(id.to_string()),
            Some(_) => Err(err(self.line, col, &format!("empty identifier after {prefix:?}"))),
            None => Err(err(
                self.line,
                col,
                &format!("expected token starting with {prefix:?}, found {token:?}"),
            )),
        }
    }
}
