//! Candidate custom-instruction generation per basic block.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{BlockGraph, OperandList};
use crate::ir::{DepEdge, Instruction, Profile, Program};
use crate::machdesc::{MachineDesc, OperatorSpec, UnknownOpcode};

/// How custom instructions reach data memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemMode {
    /// Loads and stores stay outside custom instructions.
    #[default]
    NoMem,
    /// Custom instructions share the data memory; their accesses serialize.
    Cdm,
    /// Custom instructions access local storage kept coherent for free.
    IdealCam,
}

impl MemMode {
    pub const ALL: [MemMode; 3] = [MemMode::NoMem, MemMode::Cdm, MemMode::IdealCam];

    pub fn name(self) -> &'static str {
        match self {
            MemMode::NoMem => "nomem",
            MemMode::Cdm => "cdm",
            MemMode::IdealCam => "idealcam",
        }
    }
}

impl fmt::Display for MemMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nomem" => Ok(MemMode::NoMem),
            "cdm" => Ok(MemMode::Cdm),
            "idealcam" => Ok(MemMode::IdealCam),
            _ => Err(format!("unknown memory mode `{s}` (expected nomem, cdm or idealcam)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MaxMiso,
    Miso,
    #[default]
    Mimo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MaxMiso => "maxmiso",
            Method::Miso => "miso",
            Method::Mimo => "mimo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "maxmiso" => Ok(Method::MaxMiso),
            "miso" => Ok(Method::Miso),
            "mimo" => Ok(Method::Mimo),
            _ => Err(format!("unknown method `{s}` (expected maxmiso, miso or mimo)")),
        }
    }
}

/// Default number of search nodes visited per block before enumeration
/// stops and the block is reported as truncated.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    /// Distinct input registers; `None` is unlimited.
    pub max_inputs: Option<usize>,
    /// Distinct output registers; `None` is unlimited.
    pub max_outputs: Option<usize>,
    /// Distinct constant values; `None` is unlimited.
    pub max_constants: Option<usize>,
    pub forbidden: BTreeSet<String>,
    pub mem_mode: MemMode,
    pub max_nodes: Option<usize>,
    /// Collapse repeated operands in reported operand lists.
    pub unique_operands: bool,
    pub method: Method,
    pub exhaustive: bool,
    pub enumeration_cap: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("{0} bound must be at least 1")]
    ZeroBound(&'static str),
}

impl Constraints {
    /// Unlimited bounds, the description's default forbidden set, no
    /// memory operations, heuristic MIMO.
    pub fn new(md: &MachineDesc) -> Self {
        Constraints {
            max_inputs: None,
            max_outputs: None,
            max_constants: None,
            forbidden: md.forbidden_default().into_iter().map(str::to_string).collect(),
            mem_mode: MemMode::NoMem,
            max_nodes: None,
            unique_operands: false,
            method: Method::Mimo,
            exhaustive: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn with_io(mut self, max_inputs: Option<usize>, max_outputs: Option<usize>) -> Self {
        self.max_inputs = max_inputs;
        self.max_outputs = max_outputs;
        self
    }

    pub fn with_method(mut self, method: Method, exhaustive: bool) -> Self {
        self.method = method;
        self.exhaustive = exhaustive;
        self
    }

    pub fn with_mem_mode(mut self, mode: MemMode) -> Self {
        self.mem_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.max_inputs == Some(0) {
            return Err(ConstraintError::ZeroBound("input"));
        }
        if self.max_outputs == Some(0) {
            return Err(ConstraintError::ZeroBound("output"));
        }
        if self.max_nodes == Some(0) {
            return Err(ConstraintError::ZeroBound("node"));
        }
        Ok(())
    }

    /// Excluded from patterns: listed opcodes, plus loads and stores when
    /// memory is kept out of custom instructions.
    pub fn forbids(&self, op: &OperatorSpec) -> bool {
        self.forbidden.contains(&op.mnemonic) || (self.mem_mode == MemMode::NoMem && op.is_memory())
    }

    fn allowed(&self, g: &BlockGraph) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(g.len());
        for (v, spec) in g.specs.iter().enumerate() {
            if !self.forbids(spec) {
                s.insert(v);
            }
        }
        s
    }

    fn fits(&self, g: &BlockGraph, set: &FixedBitSet) -> bool {
        bound_ok(self.max_inputs, g.input_regs(set).len())
            && bound_ok(self.max_outputs, g.output_regs(set).len())
            && bound_ok(self.max_constants, g.constant_count(set))
            && bound_ok(self.max_nodes, set.count_ones(..))
    }
}

fn bound_ok(bound: Option<usize>, value: usize) -> bool {
    bound.is_none_or(|b| value <= b)
}

/// A node set of one block together with a self-contained copy of its
/// instructions and internal edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub proc_name: String,
    pub block_label: String,
    /// Instruction ids, ascending.
    pub nodes: Vec<usize>,
    /// Instructions of `nodes`, in the same order, with original ids.
    pub instructions: Vec<Instruction>,
    /// Dependence edges with both ends in `nodes`.
    pub edges: Vec<DepEdge>,
    pub operands: OperandList,
    pub mem_ops: usize,
    /// Execution frequency of the owning block.
    pub freq: u64,
}

impl Pattern {
    pub fn from_set(g: &BlockGraph, set: &FixedBitSet, unique: bool) -> Pattern {
        let nodes: Vec<usize> = set.ones().collect();
        let instructions = nodes.iter().map(|&v| g.block.instructions[v].clone()).collect();
        let edges = g
            .block
            .edges
            .iter()
            .filter(|e| set.contains(e.producer) && set.contains(e.consumer))
            .cloned()
            .collect();
        Pattern {
            proc_name: g.proc_name.clone(),
            block_label: g.label().to_string(),
            nodes,
            instructions,
            edges,
            operands: g.operands(set, unique),
            mem_ops: g.mem_ops(set),
            freq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of an instruction id within `nodes`.
    pub fn local(&self, id: usize) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    /// Internal edges as local index pairs.
    pub fn local_edges(&self) -> impl Iterator<Item = (usize, usize, &DepEdge)> + '_ {
        self.edges.iter().filter_map(|e| Some((self.local(e.producer)?, self.local(e.consumer)?, e)))
    }
}

/// Patterns of one block plus enumeration bookkeeping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenOutput {
    pub patterns: Vec<Pattern>,
    pub visited: u64,
    /// The enumeration cap was hit; `patterns` is incomplete.
    pub truncated: bool,
}

fn finish(g: &BlockGraph, c: &Constraints, mut sets: Vec<FixedBitSet>, visited: u64, truncated: bool) -> GenOutput {
    let key = |s: &FixedBitSet| s.ones().collect::<Vec<_>>();
    sets.sort_by_cached_key(key);
    sets.dedup();
    GenOutput {
        patterns: sets.iter().map(|s| Pattern::from_set(g, s, c.unique_operands)).collect(),
        visited,
        truncated,
    }
}

/// Maximal single-exit subgraphs.
///
/// Nodes are visited from the last to the first. A node joins the
/// subgraph of its successors when it is allowed, all its successors lie in
/// one subgraph and none of its values is needed elsewhere; otherwise it
/// starts a new subgraph. Allowed nodes are partitioned; subgraphs that
/// violate the operand bounds are then dropped.
pub fn gen_maxmiso(g: &BlockGraph, c: &Constraints) -> Vec<Pattern> {
    let n = g.len();
    let allowed = c.allowed(g);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<FixedBitSet> = Vec::new();
    for v in (0..n).rev() {
        if !allowed.contains(v) {
            continue;
        }
        let joined = if g.succs[v].is_empty() || g.always_escapes[v] {
            None
        } else {
            let first = owner[g.succs[v][0]];
            if first.is_some() && g.succs[v].iter().all(|&s| owner[s] == first) {
                first
            } else {
                None
            }
        };
        let id = joined.unwrap_or_else(|| {
            groups.push(FixedBitSet::with_capacity(n));
            groups.len() - 1
        });
        groups[id].insert(v);
        owner[v] = Some(id);
    }
    let sets: Vec<FixedBitSet> = groups.into_iter().filter(|s| c.fits(g, s)).collect();
    finish(g, c, sets, n as u64, false).patterns
}

/// Reference-counted set of register ids for incremental operand counts.
struct RegCounter {
    counts: Vec<u32>,
    distinct: usize,
}

impl RegCounter {
    fn new(n: usize) -> Self {
        RegCounter {
            counts: vec![0; n],
            distinct: 0,
        }
    }

    fn add(&mut self, r: usize) {
        if self.counts[r] == 0 {
            self.distinct += 1;
        }
        self.counts[r] += 1;
    }

    fn remove(&mut self, r: usize) {
        self.counts[r] -= 1;
        if self.counts[r] == 0 {
            self.distinct -= 1;
        }
    }
}

/// Include/exclude search shared by the MISO and MIMO generators.
///
/// Nodes are decided from the last id to the first, so every successor of
/// a node is decided before the node itself. That makes three quantities
/// exact at decision time: the outputs of the current set (a later
/// addition can never consume them), the excluded nodes that reach the set
/// (convexity), and inputs whose producer is already out.
struct Search<'g, 'a> {
    g: &'g BlockGraph<'a>,
    c: &'g Constraints,
    allowed: FixedBitSet,
    order: Vec<usize>,
    /// Allowed nodes among `order[k..]`.
    rest: Vec<FixedBitSet>,
    set: FixedBitSet,
    blocked: FixedBitSet,
    outputs: RegCounter,
    permanent_inputs: RegCounter,
    size: usize,
    visited: u64,
    truncated: bool,
    /// MISO mode: members other than the root must keep every successor
    /// and value inside the set.
    single_exit: bool,
    heuristic: bool,
    found: Vec<FixedBitSet>,
}

impl<'g, 'a> Search<'g, 'a> {
    fn new(g: &'g BlockGraph<'a>, c: &'g Constraints, order: Vec<usize>) -> Self {
        let n = g.len();
        let allowed = c.allowed(g);
        let mut rest = vec![FixedBitSet::with_capacity(n); order.len() + 1];
        for k in (0..order.len()).rev() {
            let mut r = rest[k + 1].clone();
            if allowed.contains(order[k]) {
                r.insert(order[k]);
            }
            rest[k] = r;
        }
        Search {
            g,
            c,
            allowed,
            order,
            rest,
            set: FixedBitSet::with_capacity(n),
            blocked: FixedBitSet::with_capacity(n),
            outputs: RegCounter::new(g.reg_names.len()),
            permanent_inputs: RegCounter::new(g.reg_names.len()),
            size: 0,
            visited: 0,
            truncated: false,
            single_exit: false,
            heuristic: false,
            found: Vec::new(),
        }
    }

    fn output_defs(&self, v: usize) -> Vec<usize> {
        self.g.defs[v]
            .iter()
            .filter(|d| d.live_out || d.consumers.is_empty() || d.consumers.iter().any(|&c| !self.set.contains(c)))
            .map(|d| d.reg)
            .collect()
    }

    fn fixed_inputs(&self, v: usize) -> Vec<usize> {
        self.g.reads[v]
            .iter()
            .filter(|r| r.producer.is_none_or(|p| !self.allowed.contains(p)))
            .map(|r| r.reg)
            .collect()
    }

    /// Registers read by the set from `u`, which is being excluded.
    fn orphaned_inputs(&self, u: usize) -> Vec<usize> {
        if !self.allowed.contains(u) {
            return Vec::new();
        }
        self.g.defs[u]
            .iter()
            .filter(|d| d.consumers.iter().any(|&c| self.set.contains(c)))
            .map(|d| d.reg)
            .collect()
    }

    fn can_include(&self, v: usize) -> bool {
        if !self.allowed.contains(v)
            || !self.g.desc[v].is_disjoint(&self.blocked)
            || !bound_ok(self.c.max_nodes, self.size + 1)
        {
            return false;
        }
        if self.single_exit && self.size > 0 {
            let g = self.g;
            return !g.succs[v].is_empty()
                && g.succs[v].iter().all(|&s| self.set.contains(s))
                && !g.always_escapes[v];
        }
        true
    }

    fn run(&mut self, k: usize) {
        if self.truncated {
            return;
        }
        self.visited += 1;
        if self.visited > self.c.enumeration_cap {
            self.truncated = true;
            return;
        }
        if k == self.order.len() {
            self.leaf();
            return;
        }
        let v = self.order[k];

        if self.can_include(v) {
            let outs = self.output_defs(v);
            let fixed = self.fixed_inputs(v);
            for &r in &outs {
                self.outputs.add(r);
            }
            for &r in &fixed {
                self.permanent_inputs.add(r);
            }
            if bound_ok(self.c.max_outputs, self.outputs.distinct)
                && bound_ok(self.c.max_inputs, self.permanent_inputs.distinct)
            {
                self.set.insert(v);
                self.size += 1;
                self.run(k + 1);
                self.size -= 1;
                self.set.set(v, false);
            }
            for &r in &outs {
                self.outputs.remove(r);
            }
            for &r in &fixed {
                self.permanent_inputs.remove(r);
            }
        }

        if self.single_exit && self.size == 0 {
            // The root is always included.
            return;
        }
        let reaches_set = !self.g.desc[v].is_disjoint(&self.set);
        if reaches_set {
            self.blocked.insert(v);
        }
        if !(self.heuristic && self.dominated(k + 1)) {
            let orphans = self.orphaned_inputs(v);
            for &r in &orphans {
                self.permanent_inputs.add(r);
            }
            if bound_ok(self.c.max_inputs, self.permanent_inputs.distinct) {
                self.run(k + 1);
            }
            for &r in &orphans {
                self.permanent_inputs.remove(r);
            }
        }
        if reaches_set {
            self.blocked.set(v, false);
        }
    }

    /// Every set reachable from here is contained in one already found.
    fn dominated(&self, k: usize) -> bool {
        if self.found.is_empty() {
            return false;
        }
        let mut potential = self.rest[k].clone();
        let blocked = &self.blocked;
        let candidates: Vec<usize> = potential.ones().filter(|&u| !self.g.desc[u].is_disjoint(blocked)).collect();
        for u in candidates {
            potential.set(u, false);
        }
        potential.union_with(&self.set);
        self.found.iter().any(|f| potential.is_subset(f))
    }

    fn leaf(&mut self) {
        if self.size == 0 {
            return;
        }
        if !bound_ok(self.c.max_inputs, self.g.input_regs(&self.set).len())
            || !bound_ok(self.c.max_constants, self.g.constant_count(&self.set))
        {
            return;
        }
        if self.heuristic && self.found.iter().any(|f| self.set.is_subset(f)) {
            return;
        }
        self.found.push(self.set.clone());
    }
}

/// Single-output subgraphs rooted at each allowed node and grown over its
/// ancestors. Every member but the root keeps all its successors and
/// values inside the subgraph.
pub fn gen_miso(g: &BlockGraph, c: &Constraints) -> GenOutput {
    let n = g.len();
    let allowed = c.allowed(g);
    let mut sets = Vec::new();
    let mut visited = 0;
    let mut truncated = false;
    for root in 0..n {
        if !allowed.contains(root) {
            continue;
        }
        let mut outs: Vec<usize> = g.defs[root].iter().map(|d| d.reg).collect();
        outs.sort_unstable();
        outs.dedup();
        if outs.len() > 1 || !bound_ok(c.max_outputs, outs.len()) {
            continue;
        }
        let mut order = vec![root];
        order.extend((0..root).rev().filter(|&u| g.desc[u].contains(root)));
        let mut s = Search::new(g, c, order);
        s.single_exit = true;
        s.c = c;
        s.run(0);
        visited += s.visited;
        truncated |= s.truncated;
        sets.append(&mut s.found);
        if truncated {
            break;
        }
    }
    finish(g, c, sets, visited, truncated)
}

/// Convex subgraphs within the operand bounds. Exhaustive mode returns all
/// of them; heuristic mode returns only those not contained in another
/// feasible subgraph.
pub fn gen_mimo(g: &BlockGraph, c: &Constraints) -> GenOutput {
    let order: Vec<usize> = (0..g.len()).rev().collect();
    let mut s = Search::new(g, c, order);
    s.heuristic = !c.exhaustive;
    s.run(0);
    let (visited, truncated) = (s.visited, s.truncated);
    finish(g, c, s.found, visited, truncated)
}

/// Generates with the method selected in `c`.
pub fn gen_block(g: &BlockGraph, c: &Constraints) -> GenOutput {
    match c.method {
        Method::MaxMiso => GenOutput {
            patterns: gen_maxmiso(g, c),
            visited: g.len() as u64,
            truncated: false,
        },
        Method::Miso => gen_miso(g, c),
        Method::Mimo => gen_mimo(g, c),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error(transparent)]
    UnknownOpcode(#[from] UnknownOpcode),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Candidates of a whole program in canonical order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Candidates {
    pub patterns: Vec<Pattern>,
    /// Blocks whose enumeration hit the cap, as (procedure, label).
    pub truncated: Vec<(String, String)>,
    pub visited: u64,
}

/// Runs the generator over every block, in parallel, and concatenates the
/// results in program order. Each pattern carries its block frequency.
pub fn gen_program(program: &Program, profile: &Profile, md: &MachineDesc, c: &Constraints) -> Result<Candidates, GenError> {
    c.validate()?;
    let blocks: Vec<_> = program.blocks().collect();
    let outputs: Vec<Result<GenOutput, UnknownOpcode>> = blocks
        .par_iter()
        .map(|(proc, block)| {
            let g = BlockGraph::in_procedure(proc, block, md)?;
            let mut out = gen_block(&g, c);
            let freq = profile.freq(&proc.name, &block.label);
            for p in &mut out.patterns {
                p.freq = freq;
            }
            Ok(out)
        })
        .collect();
    let mut all = Candidates::default();
    for ((proc, block), out) in blocks.iter().zip(outputs) {
        let mut out = out?;
        if out.truncated {
            all.truncated.push((proc.name.clone(), block.label.clone()));
        }
        all.visited += out.visited;
        all.patterns.append(&mut out.patterns);
    }
    Ok(all)
}
