//! Shared fixtures for the benchmarks.

use isegen_core::bundled::{self, Loaded};
use isegen_core::corpus::{random_program, BlockShape};
use isegen_core::flow::FlowConfig;
use isegen_core::{MachineDesc, MemDepPolicy, MemMode, Profile, Program};

pub fn kernel(name: &str) -> Loaded {
    bundled::kernel(name).unwrap_or_else(|| panic!("no bundled kernel `{name}`")).load()
}

/// Seeded random program with dependence graphs built against `md`.
pub fn random(md: &MachineDesc, seed: u64, blocks: usize, nodes: usize) -> (Program, Profile) {
    let shape = BlockShape {
        mem_prob: 0.2,
        ..BlockShape::new(nodes)
    };
    let (mut program, profile) = random_program(seed, blocks, &shape);
    program.build_ddgs(md, MemDepPolicy::Conservative).expect("corpus opcodes are in the bundled machines");
    (program, profile)
}

pub fn config(md: &MachineDesc, ni: usize, no: usize, mem: MemMode) -> FlowConfig {
    let mut cfg = FlowConfig::new(md);
    cfg.constraints = cfg.constraints.with_io(Some(ni), Some(no)).with_mem_mode(mem);
    cfg
}
