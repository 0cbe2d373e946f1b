//! Cycle, area and gain estimates for patterns and classes.

use rayon::prelude::*;
use thiserror::Error;

use crate::cigen::{MemMode, Pattern};
use crate::ir::{Instruction, MemRole, Profile, Program};
use crate::isomatch::CandidateClass;
use crate::machdesc::{MachineDesc, UnknownOpcode};
use crate::select::Selection;

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    pub mem: MemMode,
    /// Under shared memory, limit accesses only by the port counts instead
    /// of serializing all of them.
    pub ports_only: bool,
}

impl EstimateOptions {
    pub fn new(mem: MemMode) -> Self {
        EstimateOptions { mem, ports_only: false }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimateError {
    #[error(transparent)]
    UnknownOpcode(#[from] UnknownOpcode),
    #[error("dependence edge {0}->{1} does not point forward")]
    Cycle(usize, usize),
    #[error("gain {saved} is not below the base cycle count {base}")]
    NonPositiveRemainder { base: u64, saved: i128 },
}

/// Sequential software cycles. Loads and stores cost the shared-memory
/// access time, or the local access time under `IdealCam`.
pub fn seq_cycles(instructions: &[Instruction], md: &MachineDesc, mem: MemMode) -> Result<u64, UnknownOpcode> {
    let mut total = 0;
    for inst in instructions {
        let spec = md.lookup_op(&inst.opcode)?;
        total += if spec.is_memory() && mem == MemMode::IdealCam {
            u64::from(md.memports.local_access_cycles)
        } else {
            md.software_cycles(spec)
        };
    }
    Ok(total)
}

fn whole(x: f64) -> f64 {
    (x - EPS).ceil().max(0.0)
}

/// Latency of a pattern as a custom instruction: an as-soon-as-possible
/// schedule with unlimited functional units.
///
/// Operators shorter than a cycle chain within the current cycle while they
/// fit and otherwise start at the next cycle boundary; longer operators
/// start on a boundary and take whole cycles. Memory accesses start on a
/// boundary. Under shared memory they cost the memory access time and run
/// one at a time in program order; under local memory they cost the local
/// access time and run in parallel.
pub fn asap_cycles(p: &Pattern, md: &MachineDesc, opts: EstimateOptions) -> Result<u64, EstimateError> {
    let n = p.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, v, _) in p.local_edges() {
        if u >= v {
            return Err(EstimateError::Cycle(p.nodes[u], p.nodes[v]));
        }
        preds[v].push(u);
    }
    let ports = md.memports;
    let mut finish = vec![0.0f64; n];
    let mut memory_free = 0.0f64;
    let mut read_free = vec![0.0f64; ports.read.max(1) as usize];
    let mut write_free = vec![0.0f64; ports.write.max(1) as usize];
    for v in 0..n {
        let spec = md.lookup_op(&p.instructions[v].opcode)?;
        let ready = preds[v].iter().map(|&u| finish[u]).fold(0.0, f64::max);
        let role = MemRole::of(spec);
        finish[v] = if role != MemRole::None {
            let at = whole(ready);
            match opts.mem {
                MemMode::IdealCam => at + f64::from(ports.local_access_cycles),
                MemMode::Cdm | MemMode::NoMem if opts.ports_only => {
                    let pool = if role == MemRole::Load { &mut read_free } else { &mut write_free };
                    let (slot, free) = pool
                        .iter()
                        .copied()
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("at least one port");
                    let start = at.max(free);
                    pool[slot] = start + f64::from(ports.mem_cycles);
                    pool[slot]
                }
                MemMode::Cdm | MemMode::NoMem => {
                    let start = at.max(memory_free);
                    memory_free = start + f64::from(ports.mem_cycles);
                    memory_free
                }
            }
        } else {
            let d = spec.hw_delay / md.clock;
            if d <= EPS {
                ready
            } else if d <= 1.0 + EPS {
                let boundary = (ready + EPS).floor() + 1.0;
                let start = if ready + d <= boundary + EPS { ready } else { whole(ready) };
                start + d
            } else {
                whole(ready) + whole(d)
            }
        };
    }
    let end = finish.iter().copied().fold(0.0, f64::max);
    Ok((whole(end) as u64).max(1))
}

/// Sum of operator areas in multiplier area units.
pub fn ci_area(instructions: &[Instruction], md: &MachineDesc) -> Result<f64, UnknownOpcode> {
    let mut area = 0.0;
    for inst in instructions {
        area += md.lookup_op(&inst.opcode)?.hw_area;
    }
    Ok(area)
}

/// Fills latency, area and per-instance gains of a class.
///
/// The gain of an instance is its base-processor cycle count minus the
/// custom instruction latency. Instances are isomorphic to the
/// representative, so they share its opcode multiset and cycle count.
pub fn estimate_class(class: &mut CandidateClass, md: &MachineDesc, opts: EstimateOptions) -> Result<(), EstimateError> {
    let rep = &class.representative;
    let ci = asap_cycles(rep, md, opts)?;
    let seq = seq_cycles(&rep.instructions, md, MemMode::Cdm)?;
    class.ci_cycles = ci;
    class.area = ci_area(&rep.instructions, md)?;
    for inst in &mut class.instances {
        inst.seq_cycles = seq;
        inst.gain = seq as i64 - ci as i64;
    }
    class.estimated = true;
    Ok(())
}

pub fn estimate_classes(classes: &mut [CandidateClass], md: &MachineDesc, opts: EstimateOptions) -> Result<(), EstimateError> {
    classes.par_iter_mut().try_for_each(|c| estimate_class(c, md, opts))
}

/// `base / (base - saved)`; 1.0 when nothing runs.
pub fn speedup_ratio(base: u64, saved: i128) -> Result<f64, EstimateError> {
    if base == 0 {
        return Ok(1.0);
    }
    let rest = base as i128 - saved;
    if rest <= 0 {
        return Err(EstimateError::NonPositiveRemainder { base, saved });
    }
    Ok(base as f64 / rest as f64)
}

/// Whole-application speedup of a selection over the base processor.
pub fn app_speedup(program: &Program, profile: &Profile, selection: &Selection, md: &MachineDesc) -> Result<f64, EstimateError> {
    let base = crate::analysis::program_stats(program, profile, md)?.base_cycles;
    speedup_ratio(base, selection.total_gain)
}
