//! Structural equivalence of patterns: labeled-DAG isomorphism, induced
//! subgraph isomorphism, grouping into classes and pattern libraries.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::BlockGraph;
use crate::cigen::Pattern;
use crate::ir::{parse_iseq, BasicBlock, DepKind, Instruction, MemDepPolicy, MemRole, Operand, ParseError, Procedure, Program};
use crate::machdesc::{MachineDesc, UnknownOpcode};

/// How constant operands take part in node labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ConstMatch {
    /// Constants must agree in value.
    #[default]
    Value,
    /// Only the position of constants matters.
    Shape,
}

impl FromStr for ConstMatch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "value" => Ok(ConstMatch::Value),
            "shape" => Ok(ConstMatch::Shape),
            _ => Err(format!("unknown constant matching `{s}` (expected value or shape)")),
        }
    }
}

impl fmt::Display for ConstMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstMatch::Value => "value",
            ConstMatch::Shape => "shape",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum EdgeLabel {
    /// Register flow from destination `dest` into use slot `slot`; the slot
    /// is erased for the sources of a commutative consumer.
    Reg { dest: u16, slot: Option<u16> },
    Mem,
}

/// A pattern reduced to node labels and labeled edges.
#[derive(Clone, Debug)]
pub struct PatternGraph {
    labels: Vec<String>,
    /// Row-major `n × n` matrix of sorted edge-label lists.
    edges: Vec<Vec<EdgeLabel>>,
    out_deg: Vec<usize>,
    in_deg: Vec<usize>,
    hash: u64,
}

impl PatternGraph {
    pub fn new(p: &Pattern, md: &MachineDesc, mode: ConstMatch) -> Result<Self, UnknownOpcode> {
        let n = p.len();
        let mut labels = Vec::with_capacity(n);
        let mut commutative = Vec::with_capacity(n);
        let mut roles = Vec::with_capacity(n);
        for inst in &p.instructions {
            let spec = md.lookup_op(&inst.opcode)?;
            commutative.push(spec.flags.commutative);
            roles.push(MemRole::of(spec));
            labels.push(node_label(inst, spec.flags.commutative, mode));
        }
        let mut edges = vec![Vec::new(); n * n];
        let mut out_deg = vec![0; n];
        let mut in_deg = vec![0; n];
        for (u, v, e) in p.local_edges() {
            let label = match e.kind {
                DepKind::MemoryOrder => EdgeLabel::Mem,
                DepKind::RegisterFlow => {
                    let producer = &p.instructions[u];
                    let consumer = &p.instructions[v];
                    let dest = producer
                        .dests
                        .iter()
                        .position(|d| d.same_location(&e.via))
                        .unwrap_or(0) as u16;
                    let mut found = false;
                    for (slot, used) in consumer.reg_uses(roles[v]) {
                        if used.same_location(&e.via) {
                            found = true;
                            let slot = if commutative[v] && slot < consumer.srcs.len() {
                                None
                            } else {
                                Some(slot as u16)
                            };
                            edges[u * n + v].push(EdgeLabel::Reg { dest, slot });
                        }
                    }
                    if found {
                        out_deg[u] += 1;
                        in_deg[v] += 1;
                    }
                    continue;
                }
            };
            edges[u * n + v].push(label);
            out_deg[u] += 1;
            in_deg[v] += 1;
        }
        for list in &mut edges {
            list.sort_unstable();
        }
        let mut g = PatternGraph {
            labels,
            edges,
            out_deg,
            in_deg,
            hash: 0,
        };
        g.hash = g.wl_hash();
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Invariant under isomorphism; equal graphs hash equally.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    fn edge(&self, u: usize, v: usize) -> &[EdgeLabel] {
        &self.edges[u * self.len() + v]
    }

    fn wl_hash(&self) -> u64 {
        let n = self.len();
        let mut colors: Vec<u64> = self.labels.iter().map(hash_of).collect();
        for _ in 0..n.min(4) {
            let next = (0..n)
                .map(|v| {
                    let mut outs: Vec<(u64, &[EdgeLabel])> =
                        (0..n).filter(|&w| !self.edge(v, w).is_empty()).map(|w| (colors[w], self.edge(v, w))).collect();
                    let mut ins: Vec<(u64, &[EdgeLabel])> =
                        (0..n).filter(|&w| !self.edge(w, v).is_empty()).map(|w| (colors[w], self.edge(w, v))).collect();
                    outs.sort_unstable();
                    ins.sort_unstable();
                    hash_of(&(colors[v], outs, ins))
                })
                .collect();
            colors = next;
        }
        colors.sort_unstable();
        hash_of(&colors)
    }
}

fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

fn node_label(inst: &Instruction, commutative: bool, mode: ConstMatch) -> String {
    let mut label = format!("{}/{}/{}", inst.opcode, inst.dests.len(), inst.srcs.len());
    let consts: Vec<(usize, i64)> = inst
        .srcs
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.value().map(|v| (i, v)))
        .collect();
    match (commutative, mode) {
        (false, ConstMatch::Value) => {
            for (i, v) in consts {
                label.push_str(&format!(" {i}={v}"));
            }
        }
        (false, ConstMatch::Shape) => {
            for (i, _) in consts {
                label.push_str(&format!(" {i}"));
            }
        }
        (true, ConstMatch::Value) => {
            let mut values: Vec<i64> = consts.iter().map(|&(_, v)| v).collect();
            values.sort_unstable();
            for v in values {
                label.push_str(&format!(" ={v}"));
            }
        }
        (true, ConstMatch::Shape) => label.push_str(&format!(" #{}", consts.len())),
    }
    label
}

/// Backtracking matcher. With `bijection` unset it looks for an induced
/// embedding of `p` into `q`.
struct Matcher<'a> {
    p: &'a PatternGraph,
    q: &'a PatternGraph,
    order: Vec<usize>,
    map: Vec<usize>,
    used: Vec<bool>,
    bijection: bool,
}

impl Matcher<'_> {
    fn run(&mut self, k: usize) -> bool {
        if k == self.order.len() {
            return true;
        }
        let a = self.order[k];
        for b in 0..self.q.len() {
            if self.used[b] || !self.compatible(a, b, k) {
                continue;
            }
            self.map[a] = b;
            self.used[b] = true;
            if self.run(k + 1) {
                return true;
            }
            self.used[b] = false;
            self.map[a] = usize::MAX;
        }
        false
    }

    fn compatible(&self, a: usize, b: usize, k: usize) -> bool {
        let (p, q) = (self.p, self.q);
        if p.labels[a] != q.labels[b] {
            return false;
        }
        if self.bijection {
            if p.out_deg[a] != q.out_deg[b] || p.in_deg[a] != q.in_deg[b] {
                return false;
            }
        } else if p.out_deg[a] > q.out_deg[b] || p.in_deg[a] > q.in_deg[b] {
            return false;
        }
        if p.edge(a, a) != q.edge(b, b) {
            return false;
        }
        self.order[..k].iter().all(|&x| {
            let y = self.map[x];
            p.edge(a, x) == q.edge(b, y) && p.edge(x, a) == q.edge(y, b)
        })
    }
}

/// Visit order: each node after as many already-placed neighbors as
/// possible, rarest labels first.
fn match_order(p: &PatternGraph, q: &PatternGraph) -> Vec<usize> {
    let n = p.len();
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for l in &q.labels {
        *freq.entry(l.as_str()).or_insert(0) += 1;
    }
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !placed[v])
            .min_by_key(|&v| {
                let linked = order
                    .iter()
                    .filter(|&&x| !p.edge(v, x).is_empty() || !p.edge(x, v).is_empty())
                    .count();
                let rarity = freq.get(p.labels[v].as_str()).copied().unwrap_or(0);
                (std::cmp::Reverse(linked), rarity, std::cmp::Reverse(p.out_deg[v] + p.in_deg[v]), v)
            })
            .expect("unplaced node");
        placed[next] = true;
        order.push(next);
    }
    order
}

pub fn graphs_isomorphic(p: &PatternGraph, q: &PatternGraph) -> bool {
    if p.len() != q.len() || p.hash != q.hash {
        return false;
    }
    let mut pl = p.labels.clone();
    let mut ql = q.labels.clone();
    pl.sort_unstable();
    ql.sort_unstable();
    if pl != ql {
        return false;
    }
    let mut m = Matcher {
        p,
        q,
        order: match_order(p, q),
        map: vec![usize::MAX; p.len()],
        used: vec![false; q.len()],
        bijection: true,
    };
    m.run(0)
}

pub fn graph_embeds(p: &PatternGraph, q: &PatternGraph) -> bool {
    if p.len() > q.len() {
        return false;
    }
    let mut m = Matcher {
        p,
        q,
        order: match_order(p, q),
        map: vec![usize::MAX; p.len()],
        used: vec![false; q.len()],
        bijection: false,
    };
    m.run(0)
}

/// Some node bijection preserves opcode labels, constants (per `mode`) and
/// labeled edges. Operand names never matter.
pub fn iso_equal(p: &Pattern, q: &Pattern, md: &MachineDesc, mode: ConstMatch) -> Result<bool, UnknownOpcode> {
    Ok(graphs_isomorphic(&PatternGraph::new(p, md, mode)?, &PatternGraph::new(q, md, mode)?))
}

/// `p` is isomorphic to an induced subgraph of `q`.
pub fn is_subpattern(p: &Pattern, q: &Pattern, md: &MachineDesc, mode: ConstMatch) -> Result<bool, UnknownOpcode> {
    Ok(graph_embeds(&PatternGraph::new(p, md, mode)?, &PatternGraph::new(q, md, mode)?))
}

/// One occurrence of a class in the program.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub proc_name: String,
    pub block_label: String,
    pub nodes: Vec<usize>,
    pub freq: u64,
    /// Base-processor cycles of the instance; filled by estimation.
    pub seq_cycles: u64,
    /// Cycles saved per execution; filled by estimation.
    pub gain: i64,
}

/// Isomorphic candidates sharing one hardware implementation.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateClass {
    pub id: usize,
    pub representative: Pattern,
    pub instances: Vec<Instance>,
    /// Latency of the custom instruction; filled by estimation.
    pub ci_cycles: u64,
    /// Area in multiplier area units; filled by estimation.
    pub area: f64,
    pub estimated: bool,
}

impl CandidateClass {
    /// Σ gain × frequency over all instances.
    pub fn total_gain(&self) -> i128 {
        self.instances.iter().map(|i| i.gain as i128 * i.freq as i128).sum()
    }
}

fn instance_of(p: &Pattern) -> Instance {
    Instance {
        proc_name: p.proc_name.clone(),
        block_label: p.block_label.clone(),
        nodes: p.nodes.clone(),
        freq: p.freq,
        seq_cycles: 0,
        gain: 0,
    }
}

/// Groups patterns into isomorphism classes. Classes are numbered in order
/// of first appearance and represented by their first member.
pub fn dedup(patterns: &[Pattern], md: &MachineDesc, mode: ConstMatch) -> Result<Vec<CandidateClass>, UnknownOpcode> {
    let graphs: Vec<PatternGraph> = patterns
        .par_iter()
        .map(|p| PatternGraph::new(p, md, mode))
        .collect::<Result<_, _>>()?;
    let mut classes: Vec<CandidateClass> = Vec::new();
    let mut reps: Vec<usize> = Vec::new();
    let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, p) in patterns.iter().enumerate() {
        let bucket = buckets.entry(graphs[i].hash).or_default();
        let hit = bucket
            .iter()
            .copied()
            .find(|&c| graphs_isomorphic(&graphs[reps[c]], &graphs[i]));
        match hit {
            Some(c) => classes[c].instances.push(instance_of(p)),
            None => {
                let id = classes.len();
                bucket.push(id);
                reps.push(i);
                classes.push(CandidateClass {
                    id,
                    representative: p.clone(),
                    instances: vec![instance_of(p)],
                    ci_cycles: 0,
                    area: 0.0,
                    estimated: false,
                });
            }
        }
    }
    Ok(classes)
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    UnknownOpcode(#[from] UnknownOpcode),
    #[error("procedure `{0}` must hold exactly one block")]
    Shape(String),
}

/// Patterns of a library file: one procedure with one block per pattern.
/// Each pattern covers its whole block and has frequency 0.
pub fn library_patterns(text: &str, md: &MachineDesc) -> Result<Vec<Pattern>, LibraryError> {
    let mut program = parse_iseq(text)?;
    program.build_ddgs(md, MemDepPolicy::Conservative)?;
    let mut out = Vec::new();
    for proc in &program.procedures {
        let [block] = proc.blocks.as_slice() else {
            return Err(LibraryError::Shape(proc.name.clone()));
        };
        if block.is_empty() {
            return Err(LibraryError::Shape(proc.name.clone()));
        }
        let g = BlockGraph::new(&proc.name, block, md, &Default::default())?;
        let all: Vec<usize> = (0..block.len()).collect();
        out.push(Pattern::from_set(&g, &g.set_of(&all), false));
    }
    Ok(out)
}

pub fn import_library(text: &str, md: &MachineDesc, mode: ConstMatch) -> Result<Vec<CandidateClass>, LibraryError> {
    Ok(dedup(&library_patterns(text, md)?, md, mode)?)
}

/// Writes class representatives as a library. Registers are renamed so
/// that re-deriving the dependence graph reproduces the pattern's
/// internal register flow; memory-order edges are written as `dep` lines.
pub fn export_library(classes: &[CandidateClass], md: &MachineDesc) -> Result<String, UnknownOpcode> {
    let mut program = Program {
        name: "library".into(),
        ..Default::default()
    };
    for class in classes {
        program.procedures.push(Procedure {
            name: format!("class{}", class.id),
            locals: Vec::new(),
            blocks: vec![library_block(&class.representative, md)?],
        });
    }
    Ok(program.to_iseq())
}

fn library_block(p: &Pattern, md: &MachineDesc) -> Result<BasicBlock, UnknownOpcode> {
    let mut block = BasicBlock::new("pattern");
    // Internal producer of each (consumer, register) read.
    let mut internal: HashMap<(usize, &str), usize> = HashMap::new();
    for e in &p.edges {
        if e.kind == DepKind::RegisterFlow {
            if let (Some(u), Some(v), Some(name)) = (p.local(e.producer), p.local(e.consumer), e.via.reg_name()) {
                internal.insert((v, name), u);
            }
        }
    }
    let fresh = |u: usize, name: &str| format!("t{u}_{name}");
    // Names of external inputs must not collide with fresh names.
    let external = |name: &str| {
        if name.starts_with('t') {
            format!("in_{name}")
        } else {
            name.to_string()
        }
    };
    for (v, inst) in p.instructions.iter().enumerate() {
        let store = MemRole::of(md.lookup_op(&inst.opcode)?) == MemRole::Store;
        let rename = |o: &Operand, is_def: bool| -> Operand {
            match o {
                Operand::Reg { name, width } => {
                    let new = if is_def {
                        fresh(v, name)
                    } else {
                        match internal.get(&(v, name.as_str())) {
                            Some(&u) => fresh(u, name),
                            None => external(name),
                        }
                    };
                    Operand::reg(new, *width)
                }
                other => other.clone(),
            }
        };
        let srcs: Vec<Operand> = inst.srcs.iter().map(|o| rename(o, false)).collect();
        // A store's register destinations are address bases it reads.
        let dests: Vec<Operand> = inst.dests.iter().map(|o| rename(o, !store)).collect();
        block.push(&inst.opcode, dests, srcs);
    }
    for (u, v, e) in p.local_edges() {
        if e.kind == DepKind::MemoryOrder {
            block.explicit_deps.push(crate::ir::DepEdge {
                producer: u,
                consumer: v,
                kind: DepKind::MemoryOrder,
                via: e.via.clone(),
            });
        }
    }
    Ok(block)
}
