mod common;

use common::*;
use isegen_core::analysis::BlockGraph;
use isegen_core::ir::DepKind;
use isegen_core::{collect_operands, gen_maxmiso, gen_mimo, gen_miso, is_convex, remove_false_deps, Constraints, MemMode, Method};
use proptest::prelude::*;

fn constraints(md: &isegen_core::MachineDesc, ni: Option<usize>, no: Option<usize>, mem: MemMode) -> Constraints {
    Constraints::new(md).with_io(ni, no).with_mem_mode(mem)
}

fn bound() -> impl Strategy<Value = Option<usize>> {
    prop_oneof![Just(None), (1usize..5).prop_map(Some)]
}

fn mem_mode() -> impl Strategy<Value = MemMode> {
    prop_oneof![Just(MemMode::NoMem), Just(MemMode::Cdm), Just(MemMode::IdealCam)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn exhaustive_mimo_is_the_feasible_family(seed in any::<u64>(), n in 1usize..=9, ni in bound(), no in bound(), mem in mem_mode()) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let c = constraints(&md, ni, no, mem).with_method(Method::Mimo, true);
        let g = BlockGraph::in_procedure(&proc, &proc.blocks[0], &md).unwrap();
        let out = gen_mimo(&g, &c);
        prop_assert!(!out.truncated);
        prop_assert_eq!(node_sets(&out.patterns), feasible_sets(&md, &proc, &c));
    }

    #[test]
    fn heuristic_mimo_is_the_maximal_family(seed in any::<u64>(), n in 1usize..=9, ni in bound(), no in bound()) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let c = constraints(&md, ni, no, MemMode::Cdm);
        let g = BlockGraph::in_procedure(&proc, &proc.blocks[0], &md).unwrap();
        let heur = node_sets(&gen_mimo(&g, &c).patterns);
        prop_assert_eq!(heur, maximal(&feasible_sets(&md, &proc, &c)));
    }

    #[test]
    fn miso_patterns_have_one_output(seed in any::<u64>(), n in 1usize..=9, ni in bound()) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, false), &md);
        let block = &proc.blocks[0];
        let c = constraints(&md, ni, None, MemMode::NoMem).with_method(Method::Miso, false);
        let g = BlockGraph::in_procedure(&proc, block, &md).unwrap();
        let live = live_out(&proc, &block.label);
        let got = node_sets(&gen_miso(&g, &c).patterns);
        let feasible = feasible_sets(&md, &proc, &c);
        for s in &got {
            prop_assert!(feasible.contains(s), "{:?} infeasible", s);
            let mut set = vec![false; block.len()];
            for &v in s { set[v] = true; }
            let (_, outs, _) = io_oracle(&md, block, &live, &set);
            prop_assert!(outs.len() <= 1);
        }
    }

    #[test]
    fn maxmiso_partitions_and_is_maximal(seed in any::<u64>(), n in 1usize..=12) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let block = &proc.blocks[0];
        let c = constraints(&md, None, None, MemMode::NoMem);
        let g = BlockGraph::in_procedure(&proc, block, &md).unwrap();
        let pats = gen_maxmiso(&g, &c);
        let live = live_out(&proc, &block.label);
        let mut owner = vec![None; block.len()];
        for (k, p) in pats.iter().enumerate() {
            for &v in &p.nodes {
                prop_assert!(owner[v].is_none());
                owner[v] = Some(k);
            }
        }
        for v in 0..block.len() {
            prop_assert_eq!(owner[v].is_some(), !forbidden(&md, &c, block, v));
        }
        for p in &pats {
            let mut set = vec![false; block.len()];
            for &v in &p.nodes { set[v] = true; }
            prop_assert_eq!(io_oracle(&md, block, &live, &set).2.len(), 1);
            for e in block.edges.iter().filter(|e| set[e.consumer] && !set[e.producer]) {
                if forbidden(&md, &c, block, e.producer) { continue; }
                let mut grown = set.clone();
                grown[e.producer] = true;
                prop_assert!(io_oracle(&md, block, &live, &grown).2.len() > 1, "{:?} grows by {}", p.nodes, e.producer);
            }
        }
    }

    #[test]
    fn convexity_matches_paths(seed in any::<u64>(), n in 1usize..=10, mask in any::<u32>()) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let block = &proc.blocks[0];
        let set = members(mask & ((1 << block.len()) - 1), block.len());
        prop_assert_eq!(is_convex(block, &nodes_of(&set)), convex_oracle(&reach(block), &set));
    }

    #[test]
    fn register_reads_are_edges_or_inputs(seed in any::<u64>(), n in 1usize..=14) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let block = &proc.blocks[0];
        let all: Vec<usize> = (0..block.len()).collect();
        let ops = collect_operands(block, &md, &all, true).unwrap();
        let inputs: std::collections::BTreeSet<String> = ops.inputs.iter().filter_map(|o| o.reg_name().map(str::to_string)).collect();
        let mut expected = std::collections::BTreeSet::new();
        for v in 0..block.len() {
            for name in reads(&md, block, v) {
                match producer(&md, block, v, &name) {
                    Some(u) => prop_assert!(block.edges.iter().any(|e| e.producer == u && e.consumer == v && e.kind == DepKind::RegisterFlow && e.via.reg_name() == Some(name.as_str()))),
                    None => { expected.insert(name); }
                }
            }
        }
        prop_assert_eq!(inputs, expected);
        for e in &block.edges {
            prop_assert!(e.producer < e.consumer);
        }
    }

    #[test]
    fn false_dep_removal_is_idempotent(seed in any::<u64>(), n in 1usize..=16) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let mut block = proc.blocks[0].clone();
        let before = block.edges.clone();
        let removed = remove_false_deps(&mut block, &md).unwrap();
        prop_assert_eq!(before.len() - block.edges.len(), removed);
        for e in &block.edges {
            prop_assert!(before.contains(e));
        }
        for e in before.iter().filter(|e| e.kind == DepKind::RegisterFlow) {
            prop_assert!(block.edges.contains(e));
        }
        prop_assert_eq!(remove_false_deps(&mut block, &md).unwrap(), 0);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 1usize..=12) {
        let md = suif();
        let proc = random_proc(seed, &shape(n, true), &md);
        let c = constraints(&md, Some(3), Some(2), MemMode::Cdm);
        let g = BlockGraph::in_procedure(&proc, &proc.blocks[0], &md).unwrap();
        let a = gen_mimo(&g, &c).patterns;
        let b = gen_mimo(&g, &c).patterns;
        prop_assert_eq!(&a, &b);
        let sets: Vec<Vec<usize>> = a.iter().map(|p| p.nodes.clone()).collect();
        let mut sorted = sets.clone();
        sorted.sort();
        prop_assert_eq!(sets, sorted);
    }
}

#[test]
fn nomem_patterns_carry_no_memory() {
    let md = suif();
    for seed in 0..50 {
        let proc = random_proc(seed, &shape(10, true), &md);
        let c = constraints(&md, None, None, MemMode::NoMem);
        let g = BlockGraph::in_procedure(&proc, &proc.blocks[0], &md).unwrap();
        for p in gen_mimo(&g, &c).patterns {
            assert_eq!(p.mem_ops, 0);
        }
    }
}

#[test]
fn cap_truncation_is_reported() {
    let md = suif();
    let proc = random_proc(3, &shape(16, false), &md);
    let mut c = constraints(&md, None, None, MemMode::NoMem).with_method(Method::Mimo, true);
    c.enumeration_cap = 50;
    let g = BlockGraph::in_procedure(&proc, &proc.blocks[0], &md).unwrap();
    let out = gen_mimo(&g, &c);
    assert!(out.truncated);
    assert!(out.visited <= 51);
}
