//! Application model: programs made of procedures made of basic blocks of
//! in-order instructions, plus the data-dependence edges derived for each
//! block.

mod cfg;
pub(crate) mod ddg;
mod parse;

use std::fmt;

use crate::machdesc::{MachineDesc, OperatorSpec, UnknownOpcode};

pub use cfg::{parse_cfg, parse_profile, Cfg, CfgEdge, CfgEdgeKind, CfgError, Profile, ProfileError};
pub use ddg::{build_ddg, MemDepPolicy};
pub use parse::{parse_iseq, parse_iseq_with_warnings, ParseError, Warning};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operand {
    Reg { name: String, width: u32 },
    Const { value: i64, width: u32 },
    Mem { symbol: String },
    Addr { symbol: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperandKind {
    Register,
    Constant,
    Memory,
    Address,
}

impl Operand {
    pub fn reg(name: impl Into<String>, width: u32) -> Self {
        Operand::Reg {
            name: name.into(),
            width,
        }
    }

    pub fn constant(value: i64, width: u32) -> Self {
        Operand::Const { value, width }
    }

    pub fn mem(symbol: impl Into<String>) -> Self {
        Operand::Mem {
            symbol: symbol.into(),
        }
    }

    pub fn addr(symbol: impl Into<String>) -> Self {
        Operand::Addr {
            symbol: symbol.into(),
        }
    }

    pub fn kind(&self) -> OperandKind {
        match self {
            Operand::Reg { .. } => OperandKind::Register,
            Operand::Const { .. } => OperandKind::Constant,
            Operand::Mem { .. } => OperandKind::Memory,
            Operand::Addr { .. } => OperandKind::Address,
        }
    }

    /// Register name or memory/address symbol; constants have none.
    pub fn name(&self) -> Option<&str> {
        match self {
            Operand::Reg { name, .. } => Some(name),
            Operand::Mem { symbol } | Operand::Addr { symbol } => Some(symbol),
            Operand::Const { .. } => None,
        }
    }

    pub fn value(&self) -> Option<i64> {
        match self {
            Operand::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    /// Bit width; memory and address symbols denote storage, not values.
    pub fn width(&self) -> Option<u32> {
        match self {
            Operand::Reg { width, .. } | Operand::Const { width, .. } => Some(*width),
            _ => None,
        }
    }

    pub fn reg_name(&self) -> Option<&str> {
        match self {
            Operand::Reg { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn is_symbol(&self) -> bool {
        matches!(self, Operand::Mem { .. } | Operand::Addr { .. })
    }

    /// Same storage location: kind and name agree, width is ignored.
    pub fn same_location(&self, other: &Operand) -> bool {
        match (self, other) {
            (Operand::Reg { name: a, .. }, Operand::Reg { name: b, .. }) => a == b,
            (Operand::Mem { symbol: a }, Operand::Mem { symbol: b })
            | (Operand::Addr { symbol: a }, Operand::Addr { symbol: b }) => a == b,
            (Operand::Const { value: a, .. }, Operand::Const { value: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg { name, width } => write!(f, "r:{name}:{width}"),
            Operand::Const { value, width } => write!(f, "c:{value}:{width}"),
            Operand::Mem { symbol } => write!(f, "m:{symbol}"),
            Operand::Addr { symbol } => write!(f, "a:{symbol}"),
        }
    }
}

/// How an instruction touches data memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemRole {
    None,
    Load,
    Store,
}

impl MemRole {
    pub fn of(op: &OperatorSpec) -> MemRole {
        if op.flags.load {
            MemRole::Load
        } else if op.flags.store {
            MemRole::Store
        } else {
            MemRole::None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub id: usize,
    pub opcode: String,
    pub dests: Vec<Operand>,
    pub srcs: Vec<Operand>,
}

impl Instruction {
    pub fn new(id: usize, opcode: impl Into<String>, dests: Vec<Operand>, srcs: Vec<Operand>) -> Self {
        Instruction {
            id,
            opcode: opcode.into(),
            dests,
            srcs,
        }
    }

    /// Registers written. A store's register destination is its address
    /// base, which it reads.
    pub fn reg_defs(&self, role: MemRole) -> impl Iterator<Item = &Operand> {
        let defs: &[Operand] = if role == MemRole::Store { &[] } else { &self.dests };
        defs.iter().filter(|o| matches!(o, Operand::Reg { .. }))
    }

    /// Registers read, with their use slot: sources first, then the
    /// address base registers of a store.
    pub fn reg_uses(&self, role: MemRole) -> Vec<(usize, &Operand)> {
        let mut uses: Vec<(usize, &Operand)> = self
            .srcs
            .iter()
            .enumerate()
            .filter(|(_, o)| matches!(o, Operand::Reg { .. }))
            .collect();
        if role == MemRole::Store {
            let base = self.srcs.len();
            uses.extend(
                self.dests
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| matches!(o, Operand::Reg { .. }))
                    .map(|(i, o)| (base + i, o)),
            );
        }
        uses
    }

    /// The memory location a load reads or a store writes: its memory or
    /// address symbol, else its base register.
    pub fn mem_location(&self, role: MemRole) -> Option<&Operand> {
        let side = match role {
            MemRole::None => return None,
            MemRole::Load => &self.srcs,
            MemRole::Store => &self.dests,
        };
        side.iter()
            .find(|o| o.is_symbol())
            .or_else(|| side.iter().find(|o| matches!(o, Operand::Reg { .. })))
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.opcode)?;
        if !self.dests.is_empty() {
            f.write_str(" ")?;
            write_list(f, &self.dests)?;
        }
        f.write_str(" <-")?;
        if !self.srcs.is_empty() {
            f.write_str(" ")?;
            write_list(f, &self.srcs)?;
        }
        Ok(())
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, ops: &[Operand]) -> fmt::Result {
    for (i, o) in ops.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{o}")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepKind {
    RegisterFlow,
    MemoryOrder,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DepEdge {
    pub producer: usize,
    pub consumer: usize,
    pub kind: DepKind,
    pub via: Operand,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BasicBlock {
    pub label: String,
    pub instructions: Vec<Instruction>,
    /// Derived dependence edges, sorted and free of duplicates.
    pub edges: Vec<DepEdge>,
    /// Edges given by `dep` lines in the source file; merged into `edges`
    /// whenever the graph is rebuilt.
    pub explicit_deps: Vec<DepEdge>,
}

impl BasicBlock {
    pub fn new(label: impl Into<String>) -> Self {
        BasicBlock {
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Appends an instruction, assigning it the next id.
    pub fn push(&mut self, opcode: &str, dests: Vec<Operand>, srcs: Vec<Operand>) -> usize {
        let id = self.instructions.len();
        self.instructions.push(Instruction::new(id, opcode, dests, srcs));
        id
    }

    /// Recomputes `edges` from the instructions and `explicit_deps`.
    pub fn rebuild_edges(&mut self, md: &MachineDesc, policy: MemDepPolicy) -> Result<(), UnknownOpcode> {
        let mut edges = build_ddg(self, md, policy)?;
        edges.extend(self.explicit_deps.iter().cloned());
        edges.sort();
        edges.dedup();
        self.edges = edges;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Register,
    Memory,
    Address,
}

impl SymbolKind {
    fn keyword(self) -> &'static str {
        match self {
            SymbolKind::Register => "reg",
            SymbolKind::Memory => "mem",
            SymbolKind::Address => "addr",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolDecl {
    pub name: String,
    pub kind: SymbolKind,
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Procedure {
    pub name: String,
    pub locals: Vec<SymbolDecl>,
    pub blocks: Vec<BasicBlock>,
}

impl Procedure {
    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub name: String,
    pub globals: Vec<SymbolDecl>,
    pub procedures: Vec<Procedure>,
}

impl Program {
    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name == name)
    }

    pub fn block(&self, proc_name: &str, label: &str) -> Option<&BasicBlock> {
        self.procedure(proc_name)?.block(label)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&Procedure, &BasicBlock)> {
        self.procedures
            .iter()
            .flat_map(|p| p.blocks.iter().map(move |b| (p, b)))
    }

    /// Builds the dependence graph of every block.
    pub fn build_ddgs(&mut self, md: &MachineDesc, policy: MemDepPolicy) -> Result<(), UnknownOpcode> {
        for proc in &mut self.procedures {
            for block in &mut proc.blocks {
                block.rebuild_edges(md, policy)?;
            }
        }
        Ok(())
    }

    /// Serializes to the ISeq text format.
    pub fn to_iseq(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {}", self.name)?;
        for g in &self.globals {
            writeln!(f, "gsym {} {} {}", g.name, g.kind.keyword(), g.width)?;
        }
        for p in &self.procedures {
            writeln!(f, "proc {}", p.name)?;
            for l in &p.locals {
                writeln!(f, "lsym {} {} {}", l.name, l.kind.keyword(), l.width)?;
            }
            for b in &p.blocks {
                writeln!(f, "bb {}", b.label)?;
                for i in &b.instructions {
                    writeln!(f, "{i}")?;
                }
                for d in &b.explicit_deps {
                    writeln!(f, "dep {} {} {}", d.producer, d.consumer, d.via)?;
                }
                writeln!(f, "end")?;
            }
            writeln!(f, "end")?;
        }
        Ok(())
    }
}
