use std::collections::HashMap;

use super::{BasicBlock, DepEdge, DepKind, MemRole, Operand};
use crate::machdesc::{MachineDesc, UnknownOpcode};

/// How memory-order edges are derived.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MemDepPolicy {
    /// Every store orders against every later load or store, and every
    /// load against every later store, regardless of symbols.
    #[default]
    Conservative,
    /// As `Conservative`, except that two accesses naming distinct memory
    /// or address symbols are independent.
    SymbolAware,
}

/// Placeholder location for a memory instruction without a location operand.
pub(crate) const UNKNOWN_LOCATION: &str = "*";

/// Derives the dependence edges of a block.
///
/// Register-flow edges run from the last prior definition of each register
/// read. Memory-order edges cover store→load, store→store and load→store
/// pairs in program order; load→load pairs never depend. The `via` operand
/// of a memory edge is the location whose write makes the dependence real:
/// the load's location for store→load and load→store, the later store's
/// location for store→store.
pub fn build_ddg(
    block: &BasicBlock,
    md: &MachineDesc,
    policy: MemDepPolicy,
) -> Result<Vec<DepEdge>, UnknownOpcode> {
    let mut edges = Vec::new();
    let mut last_def: HashMap<&str, usize> = HashMap::new();
    let mut mem_ops: Vec<(usize, MemRole, Operand)> = Vec::new();

    for inst in &block.instructions {
        let role = MemRole::of(md.lookup_op(&inst.opcode)?);
        for (_, used) in inst.reg_uses(role) {
            let name = used.reg_name().expect("register use");
            if let Some(&producer) = last_def.get(name) {
                edges.push(DepEdge {
                    producer,
                    consumer: inst.id,
                    kind: DepKind::RegisterFlow,
                    via: used.clone(),
                });
            }
        }

        if role != MemRole::None {
            let here = inst
                .mem_location(role)
                .cloned()
                .unwrap_or_else(|| Operand::mem(UNKNOWN_LOCATION));
            for (prev, prev_role, prev_loc) in &mem_ops {
                let via = match (prev_role, role) {
                    (MemRole::Load, MemRole::Load) => continue,
                    (MemRole::Store, MemRole::Load) | (MemRole::Store, MemRole::Store) => here.clone(),
                    (MemRole::Load, MemRole::Store) => prev_loc.clone(),
                    _ => unreachable!("only memory instructions are recorded"),
                };
                if policy == MemDepPolicy::SymbolAware
                    && here.is_symbol()
                    && prev_loc.is_symbol()
                    && !here.same_location(prev_loc)
                {
                    continue;
                }
                edges.push(DepEdge {
                    producer: *prev,
                    consumer: inst.id,
                    kind: DepKind::MemoryOrder,
                    via,
                });
            }
            mem_ops.push((inst.id, role, here));
        }

        for def in inst.reg_defs(role) {
            last_def.insert(def.reg_name().expect("register def"), inst.id);
        }
    }

    edges.sort();
    // One edge per (producer, consumer, kind, location name).
    edges.dedup_by(|a, b| {
        a.producer == b.producer && a.consumer == b.consumer && a.kind == b.kind && a.via.same_location(&b.via)
    });
    Ok(edges)
}
