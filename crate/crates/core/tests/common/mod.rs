//! Brute-force oracles shared by the integration and acceptance tests.
//! Nothing here calls the analysis, generation or matching code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use isegen_core::analysis::BlockGraph;
use isegen_core::bundled;
use isegen_core::corpus::{random_block, BlockShape};
use isegen_core::ir::{BasicBlock, DepKind, Instruction, MemDepPolicy, Operand, Procedure};
use isegen_core::select::AREA_QUANTUM;
use isegen_core::{CandidateClass, Constraints, Instance, MachineDesc, MemMode, Pattern};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random block inside a two-block procedure whose second block reads a
/// few of the first block's registers, so that some values are live-out.
pub fn random_proc(seed: u64, shape: &BlockShape, md: &MachineDesc) -> Procedure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = random_block(&mut rng, "body", shape);
    b.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    let mut tail = BasicBlock::new("tail");
    let names: BTreeSet<String> = b
        .instructions
        .iter()
        .flat_map(|i| i.dests.iter())
        .filter_map(|o| o.reg_name().map(str::to_string))
        .collect();
    for name in names {
        if rng.gen_bool(0.2) {
            tail.push("mov", vec![Operand::reg(format!("u_{name}"), 32)], vec![Operand::reg(name, 32)]);
        }
    }
    tail.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    Procedure {
        name: "f".into(),
        locals: Vec::new(),
        blocks: vec![b, tail],
    }
}

pub fn shape(nodes: usize, mem: bool) -> BlockShape {
    BlockShape {
        mem_prob: if mem { 0.25 } else { 0.0 },
        indirect_prob: 0.4,
        redefine_prob: 0.1,
        branch: false,
        ..BlockShape::new(nodes)
    }
}

/// Transitive closure of the dependence edges by repeated relaxation.
pub fn reach(block: &BasicBlock) -> Vec<Vec<bool>> {
    let n = block.len();
    let mut r = vec![vec![false; n]; n];
    for e in &block.edges {
        r[e.producer][e.consumer] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

pub fn convex_oracle(r: &[Vec<bool>], set: &[bool]) -> bool {
    let n = set.len();
    for u in 0..n {
        for v in 0..n {
            for w in 0..n {
                if set[u] && !set[v] && set[w] && r[u][v] && r[v][w] {
                    return false;
                }
            }
        }
    }
    true
}

fn is_store(md: &MachineDesc, op: &str) -> bool {
    md.lookup_op(op).unwrap().flags.store
}

fn is_load(md: &MachineDesc, op: &str) -> bool {
    md.lookup_op(op).unwrap().flags.load
}

/// Register names an instruction reads: its register sources, plus the
/// base register of a store.
pub fn reads(md: &MachineDesc, block: &BasicBlock, v: usize) -> Vec<String> {
    let inst = &block.instructions[v];
    let mut out: Vec<String> = inst.srcs.iter().filter_map(|o| o.reg_name().map(str::to_string)).collect();
    if is_store(md, &inst.opcode) {
        out.extend(inst.dests.iter().filter_map(|o| o.reg_name().map(str::to_string)));
    }
    out
}

pub fn writes(md: &MachineDesc, block: &BasicBlock, v: usize) -> Vec<String> {
    let inst = &block.instructions[v];
    if is_store(md, &inst.opcode) {
        return Vec::new();
    }
    inst.dests.iter().filter_map(|o| o.reg_name().map(str::to_string)).collect()
}

/// In-block producer of the value `v` reads as `name`.
pub fn producer(md: &MachineDesc, block: &BasicBlock, v: usize, name: &str) -> Option<usize> {
    (0..v).rev().find(|&u| writes(md, block, u).iter().any(|w| w == name))
}

pub fn live_out(proc: &Procedure, label: &str) -> HashSet<String> {
    let mut out = HashSet::new();
    for b in proc.blocks.iter().filter(|b| b.label != label) {
        for i in &b.instructions {
            for o in i.dests.iter().chain(&i.srcs) {
                if let Operand::Reg { name, .. } = o {
                    out.insert(name.clone());
                }
            }
        }
    }
    out
}

/// (unique input names, unique output names, exit nodes) of a node set.
pub fn io_oracle(
    md: &MachineDesc,
    block: &BasicBlock,
    live: &HashSet<String>,
    set: &[bool],
) -> (BTreeSet<String>, BTreeSet<String>, Vec<usize>) {
    let n = block.len();
    let mut inputs = BTreeSet::new();
    let mut outputs = BTreeSet::new();
    let mut exits = Vec::new();
    for v in (0..n).filter(|&v| set[v]) {
        for name in reads(md, block, v) {
            match producer(md, block, v, &name) {
                Some(u) if set[u] => {}
                _ => {
                    inputs.insert(name);
                }
            }
        }
        let mut escapes = false;
        for name in writes(md, block, v) {
            let consumers: Vec<usize> = (v + 1..n)
                .filter(|&w| reads(md, block, w).contains(&name) && producer(md, block, w, &name) == Some(v))
                .collect();
            let last = !(v + 1..n).any(|w| writes(md, block, w).contains(&name));
            let out = consumers.is_empty() || consumers.iter().any(|&w| !set[w]) || (last && live.contains(&name));
            if out {
                escapes = true;
                outputs.insert(name);
            }
        }
        let succs: Vec<usize> = block.edges.iter().filter(|e| e.producer == v).map(|e| e.consumer).collect();
        if escapes || succs.is_empty() || succs.iter().any(|&w| !set[w]) {
            exits.push(v);
        }
    }
    (inputs, outputs, exits)
}

pub fn forbidden(md: &MachineDesc, c: &Constraints, block: &BasicBlock, v: usize) -> bool {
    let op = &block.instructions[v].opcode;
    c.forbidden.contains(op) || (c.mem_mode == MemMode::NoMem && (is_load(md, op) || is_store(md, op)))
}

pub fn members(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|v| mask >> v & 1 == 1).collect()
}

pub fn nodes_of(set: &[bool]) -> Vec<usize> {
    (0..set.len()).filter(|&v| set[v]).collect()
}

/// Every nonempty convex node set satisfying the constraints, by brute
/// force over all subsets.
pub fn feasible_sets(md: &MachineDesc, proc: &Procedure, c: &Constraints) -> BTreeSet<Vec<usize>> {
    let block = &proc.blocks[0];
    let n = block.len();
    assert!(n <= 16);
    let r = reach(block);
    let live = live_out(proc, &block.label);
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << n) {
        let set = members(mask, n);
        if nodes_of(&set).iter().any(|&v| forbidden(md, c, block, v)) {
            continue;
        }
        if !convex_oracle(&r, &set) {
            continue;
        }
        let (ins, outs, _) = io_oracle(md, block, &live, &set);
        if c.max_inputs.is_some_and(|b| ins.len() > b) || c.max_outputs.is_some_and(|b| outs.len() > b) {
            continue;
        }
        if c.max_nodes.is_some_and(|b| set.iter().filter(|&&x| x).count() > b) {
            continue;
        }
        out.insert(nodes_of(&set));
    }
    out
}

pub fn node_sets(patterns: &[Pattern]) -> BTreeSet<Vec<usize>> {
    patterns.iter().map(|p| p.nodes.clone()).collect()
}

/// Sets in `all` that are not a strict subset of another set in `all`.
pub fn maximal(all: &BTreeSet<Vec<usize>>) -> BTreeSet<Vec<usize>> {
    all.iter()
        .filter(|s| {
            !all.iter()
                .any(|t| t.len() > s.len() && s.iter().all(|v| t.contains(v)))
        })
        .cloned()
        .collect()
}

/// Node label and labeled edge multiset used by the isomorphism oracles.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Label(String, usize, usize, Vec<(Option<usize>, i64)>);

pub struct Graph {
    pub labels: Vec<Label>,
    /// For each (u, v): sorted labels of the edges u -> v.
    pub edges: BTreeMap<(usize, usize), Vec<(u8, usize, Option<usize>)>>,
}

pub fn graph_of(md: &MachineDesc, p: &Pattern, shape_only: bool) -> Graph {
    let n = p.instructions.len();
    let mut labels = Vec::new();
    for inst in &p.instructions {
        let comm = md.lookup_op(&inst.opcode).unwrap().flags.commutative;
        let mut consts: Vec<(Option<usize>, i64)> = inst
            .srcs
            .iter()
            .enumerate()
            .filter_map(|(i, o)| match o {
                Operand::Const { value, .. } => Some((if comm { None } else { Some(i) }, if shape_only { 0 } else { *value })),
                _ => None,
            })
            .collect();
        consts.sort();
        labels.push(Label(inst.opcode.clone(), inst.dests.len(), inst.srcs.len(), consts));
    }
    let pos: BTreeMap<usize, usize> = p.nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut edges: BTreeMap<(usize, usize), Vec<(u8, usize, Option<usize>)>> = BTreeMap::new();
    for e in &p.edges {
        let (Some(&u), Some(&v)) = (pos.get(&e.producer), pos.get(&e.consumer)) else { continue };
        assert!(u < n && v < n);
        match e.kind {
            DepKind::MemoryOrder => edges.entry((u, v)).or_default().push((1, 0, None)),
            DepKind::RegisterFlow => {
                let name = e.via.reg_name().unwrap();
                let prod = &p.instructions[u];
                let cons = &p.instructions[v];
                let dest = prod.dests.iter().position(|d| d.reg_name() == Some(name)).unwrap_or(0);
                let spec = md.lookup_op(&cons.opcode).unwrap();
                let mut slots: Vec<usize> = cons
                    .srcs
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.reg_name() == Some(name))
                    .map(|(i, _)| i)
                    .collect();
                if spec.flags.store {
                    slots.extend(
                        cons.dests
                            .iter()
                            .enumerate()
                            .filter(|(_, o)| o.reg_name() == Some(name))
                            .map(|(i, _)| cons.srcs.len() + i),
                    );
                }
                for s in slots {
                    let slot = if spec.flags.commutative && s < cons.srcs.len() { None } else { Some(s) };
                    edges.entry((u, v)).or_default().push((0, dest, slot));
                }
            }
        }
    }
    for list in edges.values_mut() {
        list.sort();
    }
    Graph { labels, edges }
}

fn permutations(k: usize, items: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == items.len() {
        return f(items);
    }
    for i in k..items.len() {
        items.swap(k, i);
        if permutations(k + 1, items, f) {
            items.swap(k, i);
            return true;
        }
        items.swap(k, i);
    }
    false
}

/// Whether the injective map `image[u]` of `g`'s nodes into `h` preserves
/// node labels and the edges among the image exactly.
fn maps_exactly(g: &Graph, h: &Graph, image: &[usize]) -> bool {
    let n = g.labels.len();
    for u in 0..n {
        if g.labels[u] != h.labels[image[u]] {
            return false;
        }
    }
    for u in 0..n {
        for v in 0..n {
            let a = g.edges.get(&(u, v));
            let b = h.edges.get(&(image[u], image[v]));
            if a != b {
                return false;
            }
        }
    }
    true
}

/// Isomorphism by trying every permutation.
pub fn iso_oracle(g: &Graph, h: &Graph) -> bool {
    let n = g.labels.len();
    if n != h.labels.len() {
        return false;
    }
    let mut a = g.labels.clone();
    let mut b = h.labels.clone();
    a.sort();
    b.sort();
    if a != b {
        return false;
    }
    let mut items: Vec<usize> = (0..n).collect();
    permutations(0, &mut items, &mut |perm| maps_exactly(g, h, perm))
}

/// Induced-subgraph embedding by trying every subset of `h` of the right
/// size and every permutation of it.
pub fn embeds_oracle(g: &Graph, h: &Graph) -> bool {
    let (k, n) = (g.labels.len(), h.labels.len());
    if k > n {
        return false;
    }
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut items: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        if permutations(0, &mut items, &mut |perm| maps_exactly(g, h, perm)) {
            return true;
        }
    }
    false
}

pub fn suif() -> MachineDesc {
    bundled::suifvmenh()
}

pub fn pattern_of(md: &MachineDesc, block: &BasicBlock, nodes: &[usize]) -> Pattern {
    let g = BlockGraph::local(block, md).unwrap();
    Pattern::from_set(&g, &g.set_of(nodes), false)
}

pub fn small_block(rng: &mut ChaCha8Rng, md: &MachineDesc, n: usize) -> BasicBlock {
    let shape = BlockShape {
        mem_prob: 0.15,
        const_prob: 0.25,
        ..BlockShape::new(n)
    };
    let mut b = random_block(rng, "L", &shape);
    b.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    b
}

/// Same computation: a random topological reordering with registers
/// renamed and commutative sources swapped at random.
pub fn disguise(rng: &mut ChaCha8Rng, md: &MachineDesc, b: &BasicBlock) -> BasicBlock {
    let n = b.len();
    let mut placed = vec![false; n];
    let mut order = Vec::new();
    while order.len() < n {
        let ready: Vec<usize> = (0..n)
            .filter(|&v| !placed[v] && b.edges.iter().all(|e| e.consumer != v || placed[e.producer]))
            .collect();
        let v = *ready.choose(rng).unwrap();
        placed[v] = true;
        order.push(v);
    }
    let mut names: HashMap<String, String> = HashMap::new();
    let mut rename = |o: &Operand, rng: &mut ChaCha8Rng| match o {
        Operand::Reg { name, width } => {
            let k = names.len();
            let fresh = names.entry(name.clone()).or_insert_with(|| format!("x{}_{}", rng.gen_range(0..1000), k));
            Operand::reg(fresh.clone(), *width)
        }
        other => other.clone(),
    };
    let mut out = BasicBlock::new("D");
    for &v in &order {
        let inst = &b.instructions[v];
        let dests: Vec<Operand> = inst.dests.iter().map(|o| rename(o, rng)).collect();
        let mut srcs: Vec<Operand> = inst.srcs.iter().map(|o| rename(o, rng)).collect();
        if md.lookup_op(&inst.opcode).unwrap().flags.commutative && rng.gen_bool(0.5) {
            srcs.reverse();
        }
        out.instructions.push(Instruction::new(out.len(), inst.opcode.clone(), dests, srcs));
    }
    out.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    out
}

pub fn mutate(rng: &mut ChaCha8Rng, md: &MachineDesc, b: &BasicBlock) -> BasicBlock {
    let mut out = b.clone();
    let v = rng.gen_range(0..out.len());
    let inst = &mut out.instructions[v];
    match rng.gen_range(0..3) {
        0 if inst.srcs.len() == 2 && md.lookup_op(&inst.opcode).unwrap().semantics.is_some() => {
            let swap = ["add", "sub", "and", "xor", "min", "asl"];
            inst.opcode = swap.choose(rng).unwrap().to_string();
        }
        1 => {
            for s in &mut inst.srcs {
                if let Operand::Const { value, .. } = s {
                    *value += 1;
                }
            }
        }
        _ => inst.srcs.reverse(),
    }
    out.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    out
}

pub fn whole(md: &MachineDesc, b: &BasicBlock) -> Pattern {
    let all: Vec<usize> = (0..b.len()).collect();
    pattern_of(md, b, &all)
}

pub fn class(id: usize, area: f64, gain: i64, instances: Vec<(String, Vec<usize>, u64)>) -> CandidateClass {
    CandidateClass {
        id,
        representative: Pattern {
            proc_name: "f".into(),
            block_label: "L".into(),
            nodes: Vec::new(),
            instructions: Vec::new(),
            edges: Vec::new(),
            operands: Default::default(),
            mem_ops: 0,
            freq: 0,
        },
        instances: instances
            .into_iter()
            .map(|(label, nodes, freq)| Instance {
                proc_name: "f".into(),
                block_label: label,
                nodes,
                freq,
                seq_cycles: gain.max(0) as u64 + 1,
                gain,
            })
            .collect(),
        ci_cycles: 1,
        area,
        estimated: true,
    }
}

/// Classes whose instances sit in private blocks, so nothing overlaps.
pub fn disjoint_classes(rng: &mut ChaCha8Rng, n: usize) -> Vec<CandidateClass> {
    (0..n)
        .map(|id| {
            let inst = (0..rng.gen_range(1..4))
                .map(|k| (format!("B{id}_{k}"), vec![0, 1], rng.gen_range(0..50)))
                .collect();
            class(id, rng.gen_range(0..1500) as f64 * AREA_QUANTUM, rng.gen_range(-2..12), inst)
        })
        .collect()
}

/// Classes with instances over a few shared blocks.
pub fn overlapping_classes(rng: &mut ChaCha8Rng, n: usize) -> Vec<CandidateClass> {
    (0..n)
        .map(|id| {
            let inst = (0..rng.gen_range(1..5))
                .map(|_| {
                    let start = rng.gen_range(0..8);
                    let len = rng.gen_range(1..4);
                    (format!("B{}", rng.gen_range(0..3)), (start..start + len).collect(), rng.gen_range(1..40))
                })
                .collect();
            class(id, rng.gen_range(1..1500) as f64 * AREA_QUANTUM, rng.gen_range(1..12), inst)
        })
        .collect()
}
