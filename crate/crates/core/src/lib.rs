//! Identification, estimation and selection of custom instructions over
//! flat basic-block dataflow graphs.
//!
//! The usual flow is: parse a machine description and an application,
//! build the per-block dependence graphs, generate candidate patterns
//! under [`Constraints`], group them into isomorphism classes, estimate
//! each class, and select an extension set. [`flow::run`] strings the
//! steps together.

pub mod analysis;
pub mod bundled;
pub mod cigen;
pub mod corpus;
pub mod estimate;
pub mod export;
pub mod flow;
pub mod ir;
pub mod isomatch;
pub mod machdesc;
pub mod select;
pub mod sweep;

pub use analysis::{collect_operands, is_convex, is_false_dependency, program_stats, remove_false_deps, BlockGraph, OperandList, ProgramStats};
pub use cigen::{gen_maxmiso, gen_mimo, gen_miso, gen_program, Candidates, Constraints, GenOutput, MemMode, Method, Pattern};
pub use estimate::{app_speedup, asap_cycles, ci_area, estimate_class, estimate_classes, seq_cycles, EstimateOptions};
pub use ir::{
    build_ddg, parse_cfg, parse_iseq, parse_profile, BasicBlock, Cfg, DepEdge, DepKind, Instruction, MemDepPolicy, Operand, Procedure, Profile, Program,
};
pub use isomatch::{dedup, export_library, import_library, is_subpattern, iso_equal, CandidateClass, ConstMatch, Instance};
pub use machdesc::{MachineDesc, OperatorSpec, UnknownOpcode};
pub use select::{greedy_select, knapsack_select, priority, speedup_curve, Limits, Metric, Selection};
