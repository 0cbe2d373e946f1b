//! Runs the flow over the cartesian product of constraint settings.

use rayon::prelude::*;
use thiserror::Error;

use crate::cigen::{MemMode, Method};
use crate::flow::{run, FlowConfig, Selector};
use crate::ir::{Profile, Program};
use crate::machdesc::MachineDesc;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    /// Input bounds; `None` is unlimited.
    pub ni: Vec<Option<usize>>,
    pub no: Vec<Option<usize>>,
    pub methods: Vec<Method>,
    pub mem_modes: Vec<MemMode>,
    pub selectors: Vec<Selector>,
    /// Area budgets; `None` is unlimited.
    pub budgets: Vec<Option<f64>>,
    /// Settings shared by every row (forbidden set, exhaustive search,
    /// operand matching, ...).
    pub base: FlowConfig,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SweepError {
    #[error("sweep axis `{0}` is empty")]
    EmptyAxis(&'static str),
}

/// One configuration of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub ni: Option<usize>,
    pub no: Option<usize>,
    pub method: Method,
    pub mem: MemMode,
    pub selector: Selector,
    pub budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub outcome: Result<SweepOutcome, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub classes: usize,
    pub selected: usize,
    pub speedup: f64,
    pub area: f64,
    pub step95: usize,
    pub truncated_blocks: usize,
}

impl SweepConfig {
    pub fn new(base: FlowConfig) -> Self {
        SweepConfig {
            ni: vec![base.constraints.max_inputs],
            no: vec![base.constraints.max_outputs],
            methods: vec![base.constraints.method],
            mem_modes: vec![base.constraints.mem_mode],
            selectors: vec![base.selector],
            budgets: vec![base.limits.area_budget],
            base,
        }
    }

    /// Number of rows the sweep will produce.
    pub fn size(&self) -> usize {
        self.ni.len() * self.no.len() * self.methods.len() * self.mem_modes.len() * self.selectors.len() * self.budgets.len()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let axes = [
            ("ni", self.ni.len()),
            ("no", self.no.len()),
            ("method", self.methods.len()),
            ("mem", self.mem_modes.len()),
            ("metric", self.selectors.len()),
            ("area-budget", self.budgets.len()),
        ];
        match axes.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(SweepError::EmptyAxis(name)),
            None => Ok(()),
        }
    }

    /// Every configuration in canonical order: axes nested as listed in
    /// the struct, the first one outermost.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::with_capacity(self.size());
        for &ni in &self.ni {
            for &no in &self.no {
                for &method in &self.methods {
                    for &mem in &self.mem_modes {
                        for &selector in &self.selectors {
                            for &budget in &self.budgets {
                                out.push(SweepPoint {
                                    ni,
                                    no,
                                    method,
                                    mem,
                                    selector,
                                    budget,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn flow_config(&self, p: &SweepPoint) -> FlowConfig {
        let mut cfg = self.base.clone();
        cfg.constraints.max_inputs = p.ni;
        cfg.constraints.max_outputs = p.no;
        cfg.constraints.method = p.method;
        cfg.constraints.mem_mode = p.mem;
        cfg.selector = p.selector;
        cfg.limits.area_budget = p.budget;
        cfg
    }
}

/// Runs every configuration, in parallel, and returns rows in canonical
/// order. A failing configuration yields a row carrying its error.
pub fn run_sweep(cfg: &SweepConfig, program: &Program, profile: &Profile, md: &MachineDesc) -> Result<Vec<SweepRow>, SweepError> {
    cfg.validate()?;
    let rows = cfg
        .points()
        .into_par_iter()
        .map(|point| {
            let outcome = run(program, profile, md, &cfg.flow_config(&point))
                .map(|r| SweepOutcome {
                    classes: r.classes.len(),
                    selected: r.selection.steps.len(),
                    speedup: r.speedup(),
                    area: r.selection.total_area,
                    step95: r.curve.step95,
                    truncated_blocks: r.candidates.truncated.len(),
                })
                .map_err(|e| e.to_string());
            SweepRow { point, outcome }
        })
        .collect();
    Ok(rows)
}

fn bound(b: Option<usize>) -> String {
    b.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "ni", "no", "method", "mem", "metric", "area_budget", "classes", "selected", "speedup", "area", "step95", "truncated_blocks", "error",
    ];
    w.write_record(header).expect("writing to memory");
    for r in rows {
        let p = &r.point;
        let mut rec = vec![
            bound(p.ni),
            bound(p.no),
            p.method.to_string(),
            p.mem.to_string(),
            p.selector.to_string(),
            p.budget.map_or_else(|| "inf".to_string(), |b| format!("{b:.6}")),
        ];
        match &r.outcome {
            Ok(o) => rec.extend([
                o.classes.to_string(),
                o.selected.to_string(),
                format!("{:.6}", o.speedup),
                format!("{:.6}", o.area),
                o.step95.to_string(),
                o.truncated_blocks.to_string(),
                String::new(),
            ]),
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 6));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}
