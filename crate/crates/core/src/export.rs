//! Exporters: Graphviz DOT, VCG GDL, an ANSI C subset and CSV reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::analysis::ProgramStats;
use crate::cigen::Pattern;
use crate::ir::{BasicBlock, DepEdge, DepKind, Instruction, MemRole, Operand};
use crate::isomatch::CandidateClass;
use crate::machdesc::{MachineDesc, OpSemantics, UnknownOpcode};
use crate::select::Curve;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn edge_text(e: &DepEdge) -> String {
    match e.kind {
        DepKind::RegisterFlow => e.via.name().unwrap_or_default().to_string(),
        DepKind::MemoryOrder => format!("mem {}", e.via.name().unwrap_or_default()),
    }
}

fn sorted_edges<'e>(edges: impl Iterator<Item = &'e DepEdge>) -> Vec<&'e DepEdge> {
    let mut v: Vec<&DepEdge> = edges.collect();
    v.sort();
    v
}

fn write_dot(name: &str, insts: &[Instruction], edges: &[&DepEdge]) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(name)).unwrap();
    writeln!(out, "  node [shape=box];").unwrap();
    for i in insts {
        writeln!(out, "  n{} [label={}];", i.id, quote(&format!("{}: {}", i.id, i.opcode))).unwrap();
    }
    for e in edges {
        let style = if e.kind == DepKind::MemoryOrder { ", style=dashed" } else { "" };
        writeln!(out, "  n{} -> n{} [label={}{}];", e.producer, e.consumer, quote(&edge_text(e)), style).unwrap();
    }
    out.push_str("}\n");
    out
}

/// DOT graph of a block: one node per instruction, one edge per dependence.
pub fn to_dot(block: &BasicBlock) -> String {
    write_dot(&block.label, &block.instructions, &sorted_edges(block.edges.iter()))
}

pub fn pattern_to_dot(p: &Pattern, name: &str) -> String {
    write_dot(name, &p.instructions, &sorted_edges(p.edges.iter()))
}

/// GDL graph of a block with each pattern folded into a subgraph. A node
/// lying in several patterns is drawn in the first.
pub fn to_gdl(block: &BasicBlock, patterns: &[&Pattern]) -> String {
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (k, p) in patterns.iter().enumerate() {
        for &v in &p.nodes {
            owner.entry(v).or_insert(k);
        }
    }
    let node = |i: &Instruction| {
        format!(
            "node: {{ title: {} label: {} }}",
            quote(&format!("n{}", i.id)),
            quote(&format!("{}: {}", i.id, i.opcode))
        )
    };
    let mut out = String::new();
    writeln!(out, "graph: {{").unwrap();
    writeln!(out, "  title: {}", quote(&block.label)).unwrap();
    for k in 0..patterns.len() {
        let members: Vec<&Instruction> = block
            .instructions
            .iter()
            .filter(|i| owner.get(&i.id) == Some(&k))
            .collect();
        if members.is_empty() {
            continue;
        }
        writeln!(out, "  graph: {{").unwrap();
        writeln!(out, "    title: {}", quote(&format!("pattern{k}"))).unwrap();
        writeln!(out, "    folding: 1").unwrap();
        for i in members {
            writeln!(out, "    {}", node(i)).unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }
    for i in block.instructions.iter().filter(|i| !owner.contains_key(&i.id)) {
        writeln!(out, "  {}", node(i)).unwrap();
    }
    for e in sorted_edges(block.edges.iter()) {
        let style = if e.kind == DepKind::MemoryOrder { " linestyle: dashed" } else { "" };
        writeln!(
            out,
            "  edge: {{ sourcename: {} targetname: {} label: {}{} }}",
            quote(&format!("n{}", e.producer)),
            quote(&format!("n{}", e.consumer)),
            quote(&edge_text(e)),
            style
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CExportError {
    #[error(transparent)]
    UnknownOpcode(#[from] UnknownOpcode),
    #[error("operator `{0}` has no C emission rule")]
    NoRule(String),
    #[error("operator `{opcode}` expects {expected} source operands, got {got}")]
    Arity { opcode: String, expected: usize, got: usize },
}

fn ident(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub const C_PRELUDE: &str = "#include <stdint.h>\n\n\
static inline uint64_t ci_mask(uint64_t x, unsigned w) { return w >= 64 ? x : x & ((UINT64_C(1) << w) - 1); }\n\
static inline int64_t ci_sext(uint64_t x, unsigned w) {\n\
    x = ci_mask(x, w);\n\
    if (w >= 64 || !((x >> (w - 1)) & 1)) return (int64_t)x;\n\
    return (int64_t)(x | ~((UINT64_C(1) << w) - 1));\n\
}\n\
static inline uint64_t ci_shl(uint64_t x, uint64_t s) { return s >= 64 ? 0 : x << s; }\n\
static inline uint64_t ci_shr(uint64_t x, uint64_t s) { return s >= 64 ? 0 : x >> s; }\n\
static inline uint64_t ci_sar(int64_t x, uint64_t s) { return (uint64_t)(x >> (s >= 63 ? 63 : s)); }\n\
static inline uint64_t ci_field(uint64_t l, uint64_t h) { return h < l ? 0 : ci_mask(~UINT64_C(0), (unsigned)(h - l + 1 > 64 ? 64 : h - l + 1)); }\n";

/// C function computing a pattern: inputs by value, outputs through
/// pointers, one assignment per instruction in order. Parameters are the
/// distinct input registers in first-use order followed by the distinct
/// output registers. Values are carried in `uint64_t` and masked to each
/// operand's width; emit [`C_PRELUDE`] once before the functions.
pub fn to_c(p: &Pattern, md: &MachineDesc, name: &str) -> Result<String, CExportError> {
    let n = p.len();
    let mut internal: HashMap<(usize, &str), (usize, usize)> = HashMap::new();
    for (u, v, e) in p.local_edges() {
        if e.kind != DepKind::RegisterFlow {
            continue;
        }
        let Some(reg) = e.via.reg_name() else { continue };
        let dest = p.instructions[u]
            .dests
            .iter()
            .position(|d| d.reg_name() == Some(reg))
            .unwrap_or(0);
        internal.insert((v, reg), (u, dest));
    }

    let mut params: Vec<String> = Vec::new();
    let mut inputs: HashMap<String, String> = HashMap::new();
    let mut outputs: Vec<(String, String)> = Vec::new();
    for o in &p.operands.inputs {
        if let Some(reg) = o.reg_name() {
            if !inputs.contains_key(reg) {
                let param = format!("in{}_{}", inputs.len(), ident(reg));
                params.push(format!("uint64_t {param}"));
                inputs.insert(reg.to_string(), param);
            }
        }
    }
    for o in &p.operands.outputs {
        if let Some(reg) = o.reg_name() {
            if !outputs.iter().any(|(r, _)| r == reg) {
                let param = format!("out{}_{}", outputs.len(), ident(reg));
                params.push(format!("uint64_t *{param}"));
                outputs.push((reg.to_string(), param));
            }
        }
    }

    let var = |v: usize, d: usize| format!("v{v}_{d}");
    let mut body = String::new();
    let mut last_def: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut defined = Vec::new();
    for v in 0..n {
        let inst = &p.instructions[v];
        let spec = md.lookup_op(&inst.opcode)?;
        if MemRole::of(spec) != MemRole::None || spec.flags.cti {
            return Err(CExportError::NoRule(inst.opcode.clone()));
        }
        let sem = spec.semantics.ok_or_else(|| CExportError::NoRule(inst.opcode.clone()))?;
        let srcs: Vec<(String, u32)> = inst
            .srcs
            .iter()
            .map(|o| source(o, v, &internal, &inputs, &var))
            .collect();
        let Some(dest) = inst.dests.iter().position(|d| d.reg_name().is_some()) else {
            continue;
        };
        let width = inst.dests[dest].width().unwrap_or(64);
        let expr = c_expr(sem, &inst.opcode, &srcs)?;
        writeln!(body, "    uint64_t {} = ci_mask({}, {});", var(v, dest), expr, width).unwrap();
        last_def.insert(inst.dests[dest].reg_name().unwrap(), (v, dest));
        defined.push((v, dest));
    }
    let mut read: std::collections::HashSet<(usize, usize)> = internal.values().copied().collect();
    for (reg, param) in &outputs {
        if let Some(&(v, d)) = last_def.get(reg.as_str()) {
            writeln!(body, "    *{param} = {};", var(v, d)).unwrap();
            read.insert((v, d));
        }
    }
    for (v, d) in defined {
        if !read.contains(&(v, d)) {
            writeln!(body, "    (void){};", var(v, d)).unwrap();
        }
    }
    let params = if params.is_empty() { "void".to_string() } else { params.join(", ") };
    Ok(format!("void {}({}) {{\n{}}}\n", ident(name), params, body))
}

fn source(
    o: &Operand,
    v: usize,
    internal: &HashMap<(usize, &str), (usize, usize)>,
    inputs: &HashMap<String, String>,
    var: &dyn Fn(usize, usize) -> String,
) -> (String, u32) {
    let width = o.width().unwrap_or(64);
    match o {
        Operand::Const { value, .. } => (format!("ci_mask((uint64_t)INT64_C({value}), {width})"), width),
        Operand::Reg { name, .. } => match internal.get(&(v, name.as_str())) {
            Some(&(u, d)) => (format!("ci_mask({}, {width})", var(u, d)), width),
            None => (
                format!("ci_mask({}, {width})", inputs.get(name).cloned().unwrap_or_else(|| "0".into())),
                width,
            ),
        },
        _ => ("0".into(), 64),
    }
}

fn c_expr(sem: OpSemantics, opcode: &str, s: &[(String, u32)]) -> Result<String, CExportError> {
    use OpSemantics::*;
    let need = |k: usize| -> Result<(), CExportError> {
        if s.len() < k {
            Err(CExportError::Arity {
                opcode: opcode.to_string(),
                expected: k,
                got: s.len(),
            })
        } else {
            Ok(())
        }
    };
    let a = |i: usize| s[i].0.as_str();
    let sx = |i: usize| format!("ci_sext({}, {})", s[i].0, s[i].1);
    let expr = match sem {
        Add | Sub | Mul | And | Or | Xor => {
            need(2)?;
            let op = match sem {
                Add => "+",
                Sub => "-",
                Mul => "*",
                And => "&",
                Or => "|",
                _ => "^",
            };
            format!("({} {op} {})", a(0), a(1))
        }
        Div | Rem => {
            need(2)?;
            let op = if sem == Div { "/" } else { "%" };
            format!("({1} ? {0} {op} {1} : 0)", a(0), a(1))
        }
        Neg => {
            need(1)?;
            format!("(UINT64_C(0) - {})", a(0))
        }
        Not => {
            need(1)?;
            format!("(~{})", a(0))
        }
        Shl => {
            need(2)?;
            format!("ci_shl({}, {})", a(0), a(1))
        }
        Shr => {
            need(2)?;
            format!("ci_shr({}, {})", a(0), a(1))
        }
        Sar => {
            need(2)?;
            format!("ci_sar({}, {})", sx(0), a(1))
        }
        Min | Max => {
            need(2)?;
            let op = if sem == Min { "<" } else { ">" };
            format!("({} {op} {} ? {} : {})", sx(0), sx(1), a(0), a(1))
        }
        Abs => {
            need(1)?;
            format!("({} < 0 ? UINT64_C(0) - {} : {})", sx(0), a(0), a(0))
        }
        Mov | Zxt => {
            need(1)?;
            a(0).to_string()
        }
        Sxt => {
            need(1)?;
            format!("(uint64_t){}", sx(0))
        }
        Seq => {
            need(2)?;
            format!("(uint64_t)({} == {})", a(0), a(1))
        }
        Sne => {
            need(2)?;
            format!("(uint64_t)({} != {})", a(0), a(1))
        }
        Slt => {
            need(2)?;
            format!("(uint64_t)({} < {})", sx(0), sx(1))
        }
        Sle => {
            need(2)?;
            format!("(uint64_t)({} <= {})", sx(0), sx(1))
        }
        Sltu => {
            need(2)?;
            format!("(uint64_t)({} < {})", a(0), a(1))
        }
        Select => {
            need(3)?;
            format!("({} ? {} : {})", a(0), a(1), a(2))
        }
        BitExtract => {
            need(3)?;
            format!("(ci_shr({0}, {1}) & ci_field({1}, {2}))", a(0), a(1), a(2))
        }
        BitInsert => {
            need(4)?;
            format!(
                "(({0} & ~ci_shl(ci_field({2}, {3}), {2})) | (ci_shl({1}, {2}) & ci_shl(ci_field({2}, {3}), {2})))",
                a(0),
                a(1),
                a(2),
                a(3)
            )
        }
        Concat => {
            need(1)?;
            let mut shift = 0u32;
            let mut parts = Vec::new();
            for (expr, w) in s.iter().rev() {
                parts.push(format!("ci_shl({expr}, {shift})"));
                shift += w;
            }
            parts.reverse();
            format!("({})", parts.join(" | "))
        }
        Load | Store | Branch => return Err(CExportError::NoRule(opcode.to_string())),
    };
    Ok(expr)
}

fn f6(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn candidates_csv(patterns: &[Pattern]) -> String {
    csv_string(|w| {
        w.write_record(["proc", "block", "nodes", "inputs", "outputs", "constants", "mem_ops", "freq"])?;
        for p in patterns {
            w.write_record([
                p.proc_name.clone(),
                p.block_label.clone(),
                join(&p.nodes),
                join(&p.operands.inputs),
                join(&p.operands.outputs),
                join(&p.operands.constants),
                p.mem_ops.to_string(),
                p.freq.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn classes_csv(classes: &[CandidateClass]) -> String {
    csv_string(|w| {
        w.write_record([
            "class",
            "instances",
            "nodes",
            "opcodes",
            "seq_cycles",
            "ci_cycles",
            "gain",
            "area",
            "weighted_gain",
            "selectable",
        ])?;
        for c in classes {
            let rep = &c.representative;
            let seq = c.instances.first().map_or(0, |i| i.seq_cycles);
            let gain = c.instances.first().map_or(0, |i| i.gain);
            w.write_record([
                c.id.to_string(),
                c.instances.len().to_string(),
                rep.len().to_string(),
                join(rep.instructions.iter().map(|i| i.opcode.as_str())),
                seq.to_string(),
                c.ci_cycles.to_string(),
                gain.to_string(),
                f6(c.area),
                c.total_gain().to_string(),
                (gain > 0).to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Isomorphism classes before estimation, one row per class, with its
/// instances as `proc:label:n1+n2+...`.
pub fn dedup_csv(classes: &[CandidateClass]) -> String {
    csv_string(|w| {
        w.write_record(["class", "instances", "nodes", "opcodes", "members"])?;
        for c in classes {
            let members = c
                .instances
                .iter()
                .map(|i| format!("{}:{}:{}", i.proc_name, i.block_label, join(&i.nodes).replace(' ', "+")));
            w.write_record([
                c.id.to_string(),
                c.instances.len().to_string(),
                c.representative.len().to_string(),
                join(c.representative.instructions.iter().map(|i| i.opcode.as_str())),
                members.collect::<Vec<_>>().join(" "),
            ])?;
        }
        Ok(())
    })
}

pub fn curve_csv(curve: &Curve) -> String {
    csv_string(|w| {
        w.write_record(["step", "class", "priority", "weighted_gain", "area", "speedup", "cumulative_area"])?;
        for r in &curve.rows {
            w.write_record([
                r.step.to_string(),
                r.class_id.to_string(),
                f6(r.priority),
                r.gain.to_string(),
                f6(r.area),
                f6(r.speedup),
                f6(r.cumulative_area),
            ])?;
        }
        Ok(())
    })
}

pub fn stats_csv(stats: &ProgramStats) -> String {
    csv_string(|w| {
        w.write_record(["opcode", "static", "dynamic"])?;
        for (op, count) in &stats.static_ops {
            w.write_record([op.clone(), count.to_string(), stats.dynamic_ops[op].to_string()])?;
        }
        Ok(())
    })
}

pub fn blocks_csv(stats: &ProgramStats) -> String {
    csv_string(|w| {
        w.write_record(["proc", "block", "size", "freq", "sw_cycles"])?;
        for b in &stats.blocks {
            w.write_record([
                b.proc_name.clone(),
                b.label.clone(),
                b.size.to_string(),
                b.freq.to_string(),
                b.sw_cycles.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn stats_text(stats: &ProgramStats) -> String {
    let mut out = String::new();
    writeln!(out, "base cycles: {}", stats.base_cycles).unwrap();
    writeln!(out, "blocks:").unwrap();
    for b in &stats.blocks {
        writeln!(
            out,
            "  {}:{}  size {}  freq {}  cycles {}",
            b.proc_name, b.label, b.size, b.freq, b.sw_cycles
        )
        .unwrap();
    }
    writeln!(out, "opcodes (static / dynamic):").unwrap();
    for (op, count) in &stats.static_ops {
        writeln!(out, "  {op:<12} {count:>8} {:>12}", stats.dynamic_ops[op]).unwrap();
    }
    out
}
