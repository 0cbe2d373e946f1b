use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::{BasicBlock, DepEdge, DepKind, Instruction, Operand, Procedure, Program, SymbolDecl, SymbolKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}: duplicate block label `{label}` in procedure `{proc}`")]
    DuplicateLabel {
        line: usize,
        proc: String,
        label: String,
    },
    #[error("{line}: duplicate procedure `{name}`")]
    DuplicateProcedure { line: usize, name: String },
}

/// A non-fatal finding reported while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub line: usize,
    pub msg: String,
}

pub fn parse_iseq(text: &str) -> Result<Program, ParseError> {
    parse_iseq_with_warnings(text).map(|(p, _)| p)
}

pub fn parse_iseq_with_warnings(text: &str) -> Result<(Program, Vec<Warning>), ParseError> {
    let mut parser = Parser::default();
    for (idx, raw) in text.lines().enumerate() {
        parser.line(idx + 1, raw)?;
    }
    parser.finish()
}

fn err(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

#[derive(Default)]
struct Parser {
    program: Option<Program>,
    proc: Option<Procedure>,
    block: Option<(BasicBlock, usize)>,
    // (line, producer, consumer) of dep lines, validated when the block closes
    pending_deps: Vec<usize>,
    proc_names: HashSet<String>,
    labels: HashSet<String>,
    // (line, proc index, name) of every symbol use, checked at the end
    uses: Vec<(usize, usize, String)>,
}

impl Parser {
    fn line(&mut self, line: usize, raw: &str) -> Result<(), ParseError> {
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim_start();
        if trimmed.trim().is_empty() {
            return Ok(());
        }
        let indent = body.len() - trimmed.len();
        let trimmed = trimmed.trim_end();
        let (head, rest) = match trimmed.find(char::is_whitespace) {
            Some(i) => (&trimmed[..i], trimmed[i..].trim()),
            None => (trimmed, ""),
        };
        let col = indent + 1;

        if self.block.is_some() {
            return match head {
                "end" => self.close_block(line),
                "dep" => self.dep(line, col, rest),
                _ => self.instruction(line, col, trimmed),
            };
        }

        match head {
            "program" => {
                if self.program.is_some() {
                    return Err(err(line, col, "second `program` directive"));
                }
                let name = single_word(line, col, rest, "program name")?;
                self.program = Some(Program {
                    name,
                    ..Default::default()
                });
            }
            "gsym" | "lsym" => {
                let decl = symbol_decl(line, col, rest)?;
                let program = self.program_mut(line, col)?;
                if head == "gsym" {
                    program.globals.push(decl);
                } else {
                    match self.proc.as_mut() {
                        Some(p) => p.locals.push(decl),
                        None => return Err(err(line, col, "`lsym` outside a procedure")),
                    }
                }
            }
            "proc" => {
                self.program_mut(line, col)?;
                if self.proc.is_some() {
                    return Err(err(line, col, "nested `proc`; missing `end`"));
                }
                let name = single_word(line, col, rest, "procedure name")?;
                if !self.proc_names.insert(name.clone()) {
                    return Err(ParseError::DuplicateProcedure { line, name });
                }
                self.labels.clear();
                self.proc = Some(Procedure {
                    name,
                    ..Default::default()
                });
            }
            "bb" => {
                let Some(proc) = self.proc.as_ref() else {
                    return Err(err(line, col, "`bb` outside a procedure"));
                };
                let label = single_word(line, col, rest, "block label")?;
                if !self.labels.insert(label.clone()) {
                    return Err(ParseError::DuplicateLabel {
                        line,
                        proc: proc.name.clone(),
                        label,
                    });
                }
                self.block = Some((BasicBlock::new(label), line));
            }
            "end" => {
                let proc = self
                    .proc
                    .take()
                    .ok_or_else(|| err(line, col, "`end` without an open procedure"))?;
                self.program_mut(line, col)?.procedures.push(proc);
            }
            other => return Err(err(line, col, format!("unexpected `{other}`"))),
        }
        Ok(())
    }

    fn program_mut(&mut self, line: usize, col: usize) -> Result<&mut Program, ParseError> {
        self.program
            .as_mut()
            .ok_or_else(|| err(line, col, "expected `program` first"))
    }

    fn instruction(&mut self, line: usize, col: usize, text: &str) -> Result<(), ParseError> {
        let (block, _) = self.block.as_mut().expect("inside a block");
        let colon = text
            .find(':')
            .ok_or_else(|| err(line, col, "expected `<id>: <opcode> ...`"))?;
        let id: usize = text[..colon]
            .trim()
            .parse()
            .map_err(|_| err(line, col, format!("bad instruction id `{}`", text[..colon].trim())))?;
        if id != block.instructions.len() {
            return Err(err(
                line,
                col,
                format!("instruction id {id}, expected {}", block.instructions.len()),
            ));
        }
        let after = &text[colon + 1..];
        let after_col = col + colon + 1;
        let arrow = after
            .find("<-")
            .ok_or_else(|| err(line, after_col, "missing `<-`"))?;
        let left = after[..arrow].trim();
        let (opcode, dest_text) = match left.find(char::is_whitespace) {
            Some(i) => (&left[..i], left[i..].trim()),
            None => (left, ""),
        };
        if opcode.is_empty() {
            return Err(err(line, after_col, "missing opcode"));
        }
        let dests = operand_list(line, after_col, dest_text)?;
        let srcs = operand_list(line, after_col + arrow + 2, after[arrow + 2..].trim())?;
        let proc_idx = self.program.as_ref().map_or(0, |p| p.procedures.len());
        for o in dests.iter().chain(&srcs) {
            if let Some(name) = o.name() {
                self.uses.push((line, proc_idx, name.to_string()));
            }
        }
        block.instructions.push(Instruction::new(id, opcode, dests, srcs));
        Ok(())
    }

    fn dep(&mut self, line: usize, col: usize, rest: &str) -> Result<(), ParseError> {
        let mut words = rest.split_whitespace();
        let mut index = |what: &str| -> Result<usize, ParseError> {
            words
                .next()
                .ok_or_else(|| err(line, col, format!("dep: missing {what}")))?
                .parse()
                .map_err(|_| err(line, col, format!("dep: bad {what}")))
        };
        let producer = index("producer")?;
        let consumer = index("consumer")?;
        let tok = words
            .next()
            .ok_or_else(|| err(line, col, "dep: missing operand"))?;
        let via = operand(line, col, tok)?;
        if producer >= consumer {
            return Err(err(line, col, "dep: producer must precede consumer"));
        }
        let kind = if matches!(via, Operand::Reg { .. }) {
            DepKind::RegisterFlow
        } else {
            DepKind::MemoryOrder
        };
        let (block, _) = self.block.as_mut().expect("inside a block");
        block.explicit_deps.push(DepEdge {
            producer,
            consumer,
            kind,
            via,
        });
        self.pending_deps.push(line);
        Ok(())
    }

    fn close_block(&mut self, line: usize) -> Result<(), ParseError> {
        let (block, _) = self.block.take().expect("inside a block");
        for (d, dep_line) in block.explicit_deps.iter().zip(&self.pending_deps) {
            if d.consumer >= block.instructions.len() {
                return Err(err(*dep_line, 1, format!("dep: no instruction {}", d.consumer)));
            }
        }
        self.pending_deps.clear();
        self.proc
            .as_mut()
            .ok_or_else(|| err(line, 1, "block outside a procedure"))?
            .blocks
            .push(block);
        Ok(())
    }

    fn finish(self) -> Result<(Program, Vec<Warning>), ParseError> {
        if let Some((b, l)) = &self.block {
            return Err(err(*l, 1, format!("block `{}` is not closed", b.label)));
        }
        if let Some(p) = &self.proc {
            return Err(err(0, 1, format!("procedure `{}` is not closed", p.name)));
        }
        let program = self
            .program
            .ok_or_else(|| err(1, 1, "expected `program` first"))?;

        let mut warnings = Vec::new();
        let globals: BTreeSet<&str> = program.globals.iter().map(|d| d.name.as_str()).collect();
        let mut seen = HashSet::new();
        for (line, proc_idx, name) in &self.uses {
            let Some(proc) = program.procedures.get(*proc_idx) else {
                continue;
            };
            // Only programs that declare symbols are checked.
            if globals.is_empty() && proc.locals.is_empty() {
                continue;
            }
            let declared = globals.contains(name.as_str()) || proc.locals.iter().any(|d| &d.name == name);
            if !declared && seen.insert((*proc_idx, name.clone())) {
                warnings.push(Warning {
                    line: *line,
                    msg: format!("undeclared symbol `{name}` in procedure `{}`", proc.name),
                });
            }
        }
        Ok((program, warnings))
    }
}

fn single_word(line: usize, col: usize, rest: &str, what: &str) -> Result<String, ParseError> {
    let mut words = rest.split_whitespace();
    match (words.next(), words.next()) {
        (Some(w), None) => Ok(w.to_string()),
        (None, _) => Err(err(line, col, format!("missing {what}"))),
        (Some(_), Some(_)) => Err(err(line, col, format!("trailing text after {what}"))),
    }
}

fn symbol_decl(line: usize, col: usize, rest: &str) -> Result<SymbolDecl, ParseError> {
    let words: Vec<&str> = rest.split_whitespace().collect();
    let [name, kind, width] = words[..] else {
        return Err(err(line, col, "expected `<name> <kind> <width>`"));
    };
    let kind = match kind {
        "reg" | "r" => SymbolKind::Register,
        "mem" | "m" => SymbolKind::Memory,
        "addr" | "a" => SymbolKind::Address,
        other => return Err(err(line, col, format!("unknown symbol kind `{other}`"))),
    };
    Ok(SymbolDecl {
        name: name.to_string(),
        kind,
        width: parse_width(line, col, width)?,
    })
}

fn parse_width(line: usize, col: usize, text: &str) -> Result<u32, ParseError> {
    match text.parse::<u32>() {
        Ok(w) if w >= 1 => Ok(w),
        _ => Err(err(line, col, format!("bad width `{text}`"))),
    }
}

fn operand_list(line: usize, col: usize, text: &str) -> Result<Vec<Operand>, ParseError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.is_empty() {
                Err(err(line, col, "empty operand"))
            } else {
                operand(line, col, tok)
            }
        })
        .collect()
}

fn parse_int(text: &str) -> Option<i64> {
    let (neg, digits) = match text.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, text),
    };
    let magnitude = if let Some(hex) = digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
        i128::from_str_radix(hex, 16).ok()?
    } else {
        digits.parse::<i128>().ok()?
    };
    let v = if neg { -magnitude } else { magnitude };
    // Allow full-width unsigned bit patterns such as 0xffffffffffffffff.
    if v > i128::from(u64::MAX) || v < i128::from(i64::MIN) {
        return None;
    }
    Some(v as i64)
}

pub(super) fn operand(line: usize, col: usize, tok: &str) -> Result<Operand, ParseError> {
    let bad = |msg: &str| err(line, col, format!("{msg}: `{tok}`"));
    let (prefix, rest) = tok.split_once(':').ok_or_else(|| bad("operand needs a kind prefix"))?;
    match prefix {
        "r" | "c" => {
            let (head, width) = rest.rsplit_once(':').ok_or_else(|| bad("missing width"))?;
            let width = parse_width(line, col, width)?;
            if head.is_empty() || head.contains(':') {
                return Err(bad("malformed operand"));
            }
            if prefix == "r" {
                Ok(Operand::reg(head, width))
            } else {
                let value = parse_int(head).ok_or_else(|| bad("bad integer constant"))?;
                Ok(Operand::constant(value, width))
            }
        }
        "m" | "a" => {
            if rest.is_empty() || rest.contains(':') {
                return Err(bad("malformed symbol"));
            }
            Ok(if prefix == "m" {
                Operand::mem(rest)
            } else {
                Operand::addr(rest)
            })
        }
        _ => Err(bad("unknown operand kind")),
    }
}
