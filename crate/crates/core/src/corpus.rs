//! Seeded random blocks and programs over the bundled extended SUIFvm
//! opcodes, for tests, benchmarks and the `corpus` command.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{BasicBlock, Operand, Procedure, Profile, Program};

const BINARY: &[&str] = &["add", "sub", "mul", "and", "ior", "xor", "asl", "lsr", "min", "max", "sl"];
const UNARY: &[&str] = &["neg", "not", "sxt"];

#[derive(Clone, Debug, PartialEq)]
pub struct BlockShape {
    pub nodes: usize,
    /// Distinct external input registers to draw from.
    pub inputs: usize,
    /// Chance that a source operand is a constant.
    pub const_prob: f64,
    /// Chance that an instruction is a load or a store.
    pub mem_prob: f64,
    /// Chance that a load or store addresses memory through a register
    /// instead of a symbol.
    pub indirect_prob: f64,
    /// Chance that an instruction redefines an earlier register.
    pub redefine_prob: f64,
    /// Close the block with a conditional branch on the last value.
    pub branch: bool,
}

impl BlockShape {
    pub fn new(nodes: usize) -> Self {
        BlockShape {
            nodes,
            inputs: 4,
            const_prob: 0.15,
            mem_prob: 0.0,
            indirect_prob: 0.0,
            redefine_prob: 0.0,
            branch: false,
        }
    }
}

fn pick_source(rng: &mut impl Rng, defined: &[String], shape: &BlockShape) -> Operand {
    if rng.gen_bool(shape.const_prob) {
        return Operand::constant(rng.gen_range(0..16), 32);
    }
    let from_defs = !defined.is_empty() && rng.gen_bool(0.7);
    if from_defs {
        // Favour recent values so that chains form.
        let k = defined.len();
        let back = rng.gen_range(0..k.min(4));
        let i = if rng.gen_bool(0.75) { k - 1 - back } else { rng.gen_range(0..k) };
        Operand::reg(defined[i].clone(), 32)
    } else {
        Operand::reg(format!("a{}", rng.gen_range(0..shape.inputs.max(1))), 32)
    }
}

/// A random block with instructions numbered from 0. Dependence edges are
/// not built.
pub fn random_block(rng: &mut impl Rng, label: &str, shape: &BlockShape) -> BasicBlock {
    let mut b = BasicBlock::new(label);
    let mut defined: Vec<String> = Vec::new();
    let body = if shape.branch { shape.nodes.saturating_sub(1) } else { shape.nodes };
    for k in 0..body {
        let dest = if !defined.is_empty() && rng.gen_bool(shape.redefine_prob) {
            defined.choose(rng).unwrap().clone()
        } else {
            format!("t{k}")
        };
        if shape.mem_prob > 0.0 && rng.gen_bool(shape.mem_prob) {
            let loc = if rng.gen_bool(shape.indirect_prob) {
                Operand::reg(format!("p{}", rng.gen_range(0..2)), 32)
            } else {
                Operand::mem(format!("M{}", rng.gen_range(0..3)))
            };
            if rng.gen_bool(0.5) || defined.is_empty() {
                b.push("lod", vec![Operand::reg(dest.clone(), 32)], vec![loc]);
                defined.push(dest);
            } else {
                let v = pick_source(rng, &defined, shape);
                b.push("str", vec![loc], vec![v]);
            }
            continue;
        }
        let (op, arity) = if rng.gen_bool(0.8) {
            (*BINARY.choose(rng).unwrap(), 2)
        } else {
            (*UNARY.choose(rng).unwrap(), 1)
        };
        let srcs: Vec<Operand> = (0..arity).map(|_| pick_source(rng, &defined, shape)).collect();
        let width = if op == "sl" { 1 } else { 32 };
        b.push(op, vec![Operand::reg(dest.clone(), width)], srcs);
        defined.push(dest);
    }
    if shape.branch {
        let cond = match defined.last() {
            Some(r) => Operand::reg(r.clone(), 32),
            None => Operand::reg("a0", 32),
        };
        b.push("btrue", vec![], vec![cond, Operand::addr(label)]);
    }
    b
}

/// A one-procedure program of `blocks` random blocks with a random
/// profile. Equal seeds give equal programs.
pub fn random_program(seed: u64, blocks: usize, shape: &BlockShape) -> (Program, Profile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut proc = Procedure {
        name: "main".into(),
        ..Default::default()
    };
    let mut profile = Profile::new();
    for k in 0..blocks {
        let label = format!("B{k}");
        let nodes = rng.gen_range(1..=shape.nodes.max(1));
        let b = random_block(&mut rng, &label, &BlockShape { nodes, ..shape.clone() });
        profile.add("main", &label, rng.gen_range(1..=1000));
        proc.blocks.push(b);
    }
    let program = Program {
        name: format!("random{seed}"),
        globals: Vec::new(),
        procedures: vec![proc],
    };
    (program, profile)
}
