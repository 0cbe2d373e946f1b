//! Dataflow analyses over blocks and node sets: operand collection,
//! false-dependency removal, convexity and application statistics.

use std::collections::{BTreeMap, HashMap, HashSet};

use fixedbitset::FixedBitSet;

use crate::ir::{BasicBlock, DepKind, MemRole, Operand, Procedure, Profile, Program};
use crate::ir::ddg::UNKNOWN_LOCATION;
use crate::machdesc::{MachineDesc, OperatorSpec, UnknownOpcode};

/// Operands of a node set: registers flowing in, registers flowing out and
/// constants baked in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperandList {
    pub inputs: Vec<Operand>,
    pub outputs: Vec<Operand>,
    pub constants: Vec<Operand>,
    /// Each sublist holds a name at most once.
    pub unique: bool,
}

impl OperandList {
    /// Drops repeated entries, keeping first occurrences. Registers compare
    /// by name, constants by value.
    pub fn collapse_to_unique(&mut self) {
        for list in [&mut self.inputs, &mut self.outputs, &mut self.constants] {
            let mut kept: Vec<Operand> = Vec::with_capacity(list.len());
            for o in list.drain(..) {
                if !kept.iter().any(|k| k.same_location(&o)) {
                    kept.push(o);
                }
            }
            *list = kept;
        }
        self.unique = true;
    }

    pub fn unique_input_count(&self) -> usize {
        count_unique(&self.inputs)
    }

    pub fn unique_output_count(&self) -> usize {
        count_unique(&self.outputs)
    }
}

fn count_unique(list: &[Operand]) -> usize {
    let mut seen: Vec<&Operand> = Vec::new();
    for o in list {
        if !seen.iter().any(|s| s.same_location(o)) {
            seen.push(o);
        }
    }
    seen.len()
}

#[derive(Clone, Debug)]
pub struct Read {
    pub slot: usize,
    pub reg: usize,
    /// Last in-block definition before the reader; `None` for block inputs.
    pub producer: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Def {
    pub dest: usize,
    pub reg: usize,
    /// Readers of this definition, ascending.
    pub consumers: Vec<usize>,
    pub live_out: bool,
}

/// Indexed view of one block used by the generators and estimators.
///
/// Successor and descendant relations follow the block's current edge set,
/// so memory-order edges (and their removal) are honored. Register
/// def-use chains are recomputed from the instructions.
#[derive(Clone, Debug)]
pub struct BlockGraph<'a> {
    pub proc_name: String,
    pub block: &'a BasicBlock,
    pub md: &'a MachineDesc,
    pub specs: Vec<&'a OperatorSpec>,
    pub roles: Vec<MemRole>,
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    /// Strict descendants of each node.
    pub desc: Vec<FixedBitSet>,
    pub reg_names: Vec<String>,
    pub reads: Vec<Vec<Read>>,
    pub defs: Vec<Vec<Def>>,
    /// Some value of the node is live-out or never read in the block.
    pub always_escapes: Vec<bool>,
}

impl<'a> BlockGraph<'a> {
    /// `live_out` names the registers assumed live after the block.
    pub fn new(
        proc_name: &str,
        block: &'a BasicBlock,
        md: &'a MachineDesc,
        live_out: &HashSet<String>,
    ) -> Result<Self, UnknownOpcode> {
        let n = block.len();
        let mut specs = Vec::with_capacity(n);
        let mut roles = Vec::with_capacity(n);
        for inst in &block.instructions {
            let spec = md.lookup_op(&inst.opcode)?;
            specs.push(spec);
            roles.push(MemRole::of(spec));
        }

        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for e in &block.edges {
            if e.producer < n && e.consumer < n {
                succs[e.producer].push(e.consumer);
                preds[e.consumer].push(e.producer);
            }
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        let mut desc = vec![FixedBitSet::with_capacity(n); n];
        for v in (0..n).rev() {
            let mut d = FixedBitSet::with_capacity(n);
            for &s in &succs[v] {
                d.insert(s);
                d.union_with(&desc[s]);
            }
            desc[v] = d;
        }

        let mut reg_ids: HashMap<&str, usize> = HashMap::new();
        let mut reg_names = Vec::new();
        let mut intern = |name: &'a str| -> usize {
            *reg_ids.entry(name).or_insert_with(|| {
                reg_names.push(name.to_string());
                reg_names.len() - 1
            })
        };
        let mut reads = vec![Vec::new(); n];
        let mut defs: Vec<Vec<Def>> = vec![Vec::new(); n];
        let mut last_def: HashMap<usize, (usize, usize)> = HashMap::new();
        for (v, inst) in block.instructions.iter().enumerate() {
            for (slot, used) in inst.reg_uses(roles[v]) {
                let reg = intern(used.reg_name().expect("register"));
                let producer = last_def.get(&reg).map(|&(p, di)| {
                    let list = &mut defs[p][di].consumers;
                    if list.last() != Some(&v) {
                        list.push(v);
                    }
                    p
                });
                reads[v].push(Read { slot, reg, producer });
            }
            for (dest, d) in inst.dests.iter().enumerate() {
                if roles[v] == MemRole::Store {
                    break;
                }
                let Some(name) = d.reg_name() else { continue };
                let reg = intern(name);
                defs[v].push(Def {
                    dest,
                    reg,
                    consumers: Vec::new(),
                    live_out: false,
                });
                last_def.insert(reg, (v, defs[v].len() - 1));
            }
        }
        for (&reg, &(p, di)) in &last_def {
            if live_out.contains(&reg_names[reg]) {
                defs[p][di].live_out = true;
            }
        }
        let always_escapes = defs
            .iter()
            .map(|ds| ds.iter().any(|d| d.live_out || d.consumers.is_empty()))
            .collect();

        Ok(BlockGraph {
            proc_name: proc_name.to_string(),
            block,
            md,
            specs,
            roles,
            preds,
            succs,
            desc,
            reg_names,
            reads,
            defs,
            always_escapes,
        })
    }

    /// Graph with block-local liveness only.
    pub fn local(block: &'a BasicBlock, md: &'a MachineDesc) -> Result<Self, UnknownOpcode> {
        Self::new("", block, md, &HashSet::new())
    }

    /// Graph of a block of `proc`, treating registers named in its other
    /// blocks as live-out.
    pub fn in_procedure(proc: &Procedure, block: &'a BasicBlock, md: &'a MachineDesc) -> Result<Self, UnknownOpcode> {
        Self::new(&proc.name, block, md, &live_out_registers(proc, &block.label))
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.block.label
    }

    pub fn set_of(&self, nodes: &[usize]) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.len());
        for &v in nodes {
            s.insert(v);
        }
        s
    }

    /// A value of `v` is needed outside `set`.
    pub fn escapes(&self, v: usize, set: &FixedBitSet) -> bool {
        self.defs[v]
            .iter()
            .any(|d| d.live_out || d.consumers.is_empty() || d.consumers.iter().any(|&c| !set.contains(c)))
    }

    /// `v` has a successor outside `set`, no successor at all, or a value
    /// needed outside `set`.
    pub fn is_exit(&self, v: usize, set: &FixedBitSet) -> bool {
        self.succs[v].is_empty() || self.succs[v].iter().any(|&s| !set.contains(s)) || self.escapes(v, set)
    }

    /// Distinct input registers of `set`, ascending by interned id.
    pub fn input_regs(&self, set: &FixedBitSet) -> Vec<usize> {
        let mut regs: Vec<usize> = set
            .ones()
            .flat_map(|v| self.reads[v].iter())
            .filter(|r| r.producer.is_none_or(|p| !set.contains(p)))
            .map(|r| r.reg)
            .collect();
        regs.sort_unstable();
        regs.dedup();
        regs
    }

    /// Distinct output registers of `set`.
    pub fn output_regs(&self, set: &FixedBitSet) -> Vec<usize> {
        let mut regs: Vec<usize> = set
            .ones()
            .flat_map(|v| self.defs[v].iter())
            .filter(|d| d.live_out || d.consumers.is_empty() || d.consumers.iter().any(|&c| !set.contains(c)))
            .map(|d| d.reg)
            .collect();
        regs.sort_unstable();
        regs.dedup();
        regs
    }

    pub fn constant_count(&self, set: &FixedBitSet) -> usize {
        let mut values: Vec<i64> = set
            .ones()
            .flat_map(|v| self.block.instructions[v].srcs.iter())
            .filter_map(Operand::value)
            .collect();
        values.sort_unstable();
        values.dedup();
        values.len()
    }

    pub fn mem_ops(&self, set: &FixedBitSet) -> usize {
        set.ones().filter(|&v| self.roles[v] != MemRole::None).count()
    }

    pub fn is_convex(&self, set: &FixedBitSet) -> bool {
        // Any path leaving and re-entering `set` passes through an outside
        // node that is both a descendant and an ancestor of members.
        let mut reach = FixedBitSet::with_capacity(self.len());
        for v in set.ones() {
            reach.union_with(&self.desc[v]);
        }
        reach.difference_with(set);
        reach.ones().all(|x| self.desc[x].is_disjoint(set))
    }

    pub fn operands(&self, set: &FixedBitSet, unique: bool) -> OperandList {
        let insts = &self.block.instructions;
        let mut list = OperandList::default();
        for v in set.ones() {
            let inst = &insts[v];
            for r in &self.reads[v] {
                if r.producer.is_none_or(|p| !set.contains(p)) {
                    list.inputs.push(operand_at(inst, self.roles[v], r.slot).clone());
                }
            }
            for d in &self.defs[v] {
                if d.live_out || d.consumers.is_empty() || d.consumers.iter().any(|&c| !set.contains(c)) {
                    list.outputs.push(inst.dests[d.dest].clone());
                }
            }
            list.constants
                .extend(inst.srcs.iter().filter(|o| o.value().is_some()).cloned());
        }
        if unique {
            list.collapse_to_unique();
        }
        list
    }
}

/// Operand at a use slot as numbered by `Instruction::reg_uses`.
pub(crate) fn operand_at(inst: &crate::ir::Instruction, role: MemRole, slot: usize) -> &Operand {
    if slot < inst.srcs.len() {
        &inst.srcs[slot]
    } else {
        debug_assert_eq!(role, MemRole::Store);
        &inst.dests[slot - inst.srcs.len()]
    }
}

/// Registers named anywhere in the other blocks of `proc`.
pub fn live_out_registers(proc: &Procedure, label: &str) -> HashSet<String> {
    proc.blocks
        .iter()
        .filter(|b| b.label != label)
        .flat_map(|b| b.instructions.iter())
        .flat_map(|i| i.dests.iter().chain(i.srcs.iter()))
        .filter_map(|o| o.reg_name().map(str::to_string))
        .collect()
}

/// Operands of `nodes` within `block`, with block-local liveness.
pub fn collect_operands(
    block: &BasicBlock,
    md: &MachineDesc,
    nodes: &[usize],
    unique: bool,
) -> Result<OperandList, UnknownOpcode> {
    let g = BlockGraph::local(block, md)?;
    Ok(g.operands(&g.set_of(nodes), unique))
}

/// True when an instruction in `lpos..=hpos` stores to `opnd`: a memory or
/// address symbol destination, or the base register of an indirect store.
/// A store without a location operand, or an `opnd` of unknown location,
/// is assumed to alias.
pub fn is_false_dependency(
    block: &BasicBlock,
    md: &MachineDesc,
    lpos: usize,
    hpos: usize,
    opnd: &Operand,
) -> Result<bool, UnknownOpcode> {
    if block.is_empty() {
        return Ok(false);
    }
    let hpos = hpos.min(block.len() - 1);
    if lpos > hpos {
        return Ok(false);
    }
    let unknown = Operand::mem(UNKNOWN_LOCATION);
    for inst in &block.instructions[lpos..=hpos] {
        if MemRole::of(md.lookup_op(&inst.opcode)?) != MemRole::Store {
            continue;
        }
        if opnd.same_location(&unknown) {
            return Ok(true);
        }
        let mut located = false;
        for d in &inst.dests {
            if d.is_symbol() || d.reg_name().is_some() {
                located = true;
                if d.same_location(opnd) {
                    return Ok(true);
                }
            }
        }
        if !located {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Deletes memory-order edges that no store in their span can justify.
/// Returns the number of edges removed.
///
/// The span of an edge i→j is `i..=j`, except for store→store edges whose
/// span stops before the later store (it would trivially justify itself).
pub fn remove_false_deps(block: &mut BasicBlock, md: &MachineDesc) -> Result<usize, UnknownOpcode> {
    let mut keep = Vec::with_capacity(block.edges.len());
    for e in &block.edges {
        if e.kind != DepKind::MemoryOrder {
            keep.push(true);
            continue;
        }
        let producer_store = MemRole::of(md.lookup_op(&block.instructions[e.producer].opcode)?) == MemRole::Store;
        let consumer_store = MemRole::of(md.lookup_op(&block.instructions[e.consumer].opcode)?) == MemRole::Store;
        let hpos = if producer_store && consumer_store {
            e.consumer - 1
        } else {
            e.consumer
        };
        keep.push(is_false_dependency(block, md, e.producer, hpos, &e.via)?);
    }
    let before = block.edges.len();
    let mut flags = keep.into_iter();
    block.edges.retain(|_| flags.next().unwrap_or(true));
    Ok(before - block.edges.len())
}

/// No dependence path leaves `nodes` and re-enters it.
pub fn is_convex(block: &BasicBlock, nodes: &[usize]) -> bool {
    let n = block.len();
    let mut succs = vec![Vec::new(); n];
    for e in &block.edges {
        succs[e.producer].push(e.consumer);
    }
    let mut inside = FixedBitSet::with_capacity(n);
    for &v in nodes {
        inside.insert(v);
    }
    // Nodes outside the set reachable from it; any of them reaching back in
    // breaks convexity.
    let mut seen = FixedBitSet::with_capacity(n);
    let mut stack: Vec<usize> = Vec::new();
    for &v in nodes {
        for &s in &succs[v] {
            if !inside.contains(s) && !seen.put(s) {
                stack.push(s);
            }
        }
    }
    while let Some(x) = stack.pop() {
        for &s in &succs[x] {
            if inside.contains(s) {
                return false;
            }
            if !seen.put(s) {
                stack.push(s);
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockStats {
    pub proc_name: String,
    pub label: String,
    pub size: usize,
    pub freq: u64,
    /// Software cycles of one execution.
    pub sw_cycles: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProgramStats {
    pub static_ops: BTreeMap<String, u64>,
    pub dynamic_ops: BTreeMap<String, u64>,
    pub blocks: Vec<BlockStats>,
    /// Total base software cycles, weighted by block frequency.
    pub base_cycles: u64,
}

pub fn program_stats(program: &Program, profile: &Profile, md: &MachineDesc) -> Result<ProgramStats, UnknownOpcode> {
    let mut stats = ProgramStats::default();
    for (proc, block) in program.blocks() {
        let freq = profile.freq(&proc.name, &block.label);
        let mut cycles = 0;
        for inst in &block.instructions {
            let spec = md.lookup_op(&inst.opcode)?;
            cycles += md.software_cycles(spec);
            *stats.static_ops.entry(inst.opcode.clone()).or_insert(0) += 1;
            *stats.dynamic_ops.entry(inst.opcode.clone()).or_insert(0) += freq;
        }
        stats.base_cycles += freq * cycles;
        stats.blocks.push(BlockStats {
            proc_name: proc.name.clone(),
            label: block.label.clone(),
            size: block.len(),
            freq,
            sw_cycles: cycles,
        });
    }
    Ok(stats)
}
