//! The whole identification flow on one application.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{program_stats, remove_false_deps};
use crate::cigen::{gen_program, Candidates, Constraints, GenError};
use crate::estimate::{estimate_classes, EstimateError, EstimateOptions};
use crate::ir::{Profile, Program};
use crate::isomatch::{dedup, CandidateClass, ConstMatch};
use crate::machdesc::{MachineDesc, UnknownOpcode};
use crate::select::{greedy_select, knapsack_select, speedup_curve, Curve, Limits, Metric, SelectError, Selection};

/// How the extension set is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Greedy(Metric),
    Knapsack,
}

impl Default for Selector {
    fn default() -> Self {
        Selector::Greedy(Metric::Gain)
    }
}

impl Selector {
    pub const ALL: [Selector; 3] = [
        Selector::Greedy(Metric::Gain),
        Selector::Greedy(Metric::GainPerArea),
        Selector::Knapsack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Greedy(m) => m.name(),
            Selector::Knapsack => "knapsack",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "knapsack" => Ok(Selector::Knapsack),
            other => other
                .parse::<Metric>()
                .map(Selector::Greedy)
                .map_err(|_| format!("unknown metric `{other}` (expected gain, gain-per-area or knapsack)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub constraints: Constraints,
    pub const_match: ConstMatch,
    pub ports_only: bool,
    pub selector: Selector,
    pub limits: Limits,
    /// Recompute greedy priorities after each pick.
    pub recompute: bool,
    pub remove_false_deps: bool,
}

impl FlowConfig {
    pub fn new(md: &MachineDesc) -> Self {
        FlowConfig {
            constraints: Constraints::new(md),
            const_match: ConstMatch::Value,
            ports_only: false,
            selector: Selector::default(),
            limits: Limits::default(),
            recompute: false,
            remove_false_deps: false,
        }
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            mem: self.constraints.mem_mode,
            ports_only: self.ports_only,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    UnknownOpcode(#[from] UnknownOpcode),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub candidates: Candidates,
    pub classes: Vec<CandidateClass>,
    pub selection: Selection,
    pub curve: Curve,
    pub base_cycles: u64,
    pub false_deps_removed: usize,
}

impl FlowResult {
    pub fn speedup(&self) -> f64 {
        self.curve.final_speedup()
    }
}

/// Generates, groups, estimates and selects custom instructions for a
/// program whose dependence graphs are already built.
pub fn run(program: &Program, profile: &Profile, md: &MachineDesc, cfg: &FlowConfig) -> Result<FlowResult, FlowError> {
    let mut owned;
    let mut program = program;
    let mut removed = 0;
    if cfg.remove_false_deps {
        owned = program.clone();
        for proc in &mut owned.procedures {
            for block in &mut proc.blocks {
                removed += remove_false_deps(block, md)?;
            }
        }
        program = &owned;
    }
    let base_cycles = program_stats(program, profile, md)?.base_cycles;
    let candidates = gen_program(program, profile, md, &cfg.constraints)?;
    let mut classes = dedup(&candidates.patterns, md, cfg.const_match)?;
    estimate_classes(&mut classes, md, cfg.estimate_options())?;
    let selection = match cfg.selector {
        Selector::Greedy(metric) => greedy_select(&classes, metric, cfg.limits, cfg.recompute)?,
        Selector::Knapsack => {
            let budget = cfg
                .limits
                .area_budget
                .unwrap_or_else(|| classes.iter().map(|c| c.area).sum());
            let mut sel = knapsack_select(&classes, budget)?;
            if let Some(k) = cfg.limits.max_classes {
                sel.steps.truncate(k);
                sel.total_gain = sel.steps.iter().map(|s| s.gain).sum();
                sel.total_area = sel.steps.iter().map(|s| s.area).sum();
            }
            sel
        }
    };
    let curve = speedup_curve(&selection, base_cycles)?;
    Ok(FlowResult {
        candidates,
        classes,
        selection,
        curve,
        base_cycles,
        false_deps_removed: removed,
    })
}
