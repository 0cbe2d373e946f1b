//! Extension-set selection: priorities, greedy selection with overlap
//! resolution, 0-1 knapsack under an area budget, and cumulative curves.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::estimate::{speedup_ratio, EstimateError};
use crate::isomatch::CandidateClass;

/// Greedy priority metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// Σ gain × frequency.
    #[default]
    Gain,
    /// Σ gain × frequency per unit of area.
    GainPerArea,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Gain => "gain",
            Metric::GainPerArea => "gain-per-area",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gain" => Ok(Metric::Gain),
            "gain-per-area" => Ok(Metric::GainPerArea),
            _ => Err(format!("unknown metric `{s}` (expected gain or gain-per-area)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Limits {
    pub max_classes: Option<usize>,
    /// Area budget in multiplier area units.
    pub area_budget: Option<f64>,
}

/// One chosen class.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub class_id: usize,
    pub priority: f64,
    /// Indices into the class's instance list.
    pub instances: Vec<usize>,
    /// Σ gain × frequency over the claimed instances.
    pub gain: i128,
    pub area: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selection {
    pub steps: Vec<Step>,
    pub total_gain: i128,
    pub total_area: f64,
}

impl Selection {
    fn push(&mut self, step: Step) {
        self.total_gain += step.gain;
        self.total_area += step.area;
        self.steps.push(step);
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.class_id).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("area budget {0} is negative")]
    NegativeBudget(f64),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

fn metric_value(gain: i128, area: f64, metric: Metric) -> f64 {
    match metric {
        Metric::Gain => gain as f64,
        Metric::GainPerArea if area <= 0.0 => {
            if gain > 0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
        Metric::GainPerArea => gain as f64 / area,
    }
}

/// Priority of a class over all its instances.
pub fn priority(class: &CandidateClass, metric: Metric) -> f64 {
    metric_value(class.total_gain(), class.area, metric)
}

/// Priorities within a relative 1e-12 of each other tie.
fn greater(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a.is_infinite() && !b.is_infinite();
    }
    a - b > 1e-12 * a.abs().max(b.abs())
}

/// Claimed (block, node) pairs.
struct Claims<'c> {
    blocks: HashMap<(&'c str, &'c str), usize>,
    taken: HashSet<(usize, usize)>,
}

impl<'c> Claims<'c> {
    fn new() -> Self {
        Claims {
            blocks: HashMap::new(),
            taken: HashSet::new(),
        }
    }

    fn key(&mut self, proc_name: &'c str, label: &'c str) -> usize {
        let next = self.blocks.len();
        *self.blocks.entry((proc_name, label)).or_insert(next)
    }

    /// Instances of the class's own non-overlapping subset (chosen by
    /// descending frequency, independent of other claims) that avoid every
    /// earlier claim. Claims only remove instances, so a class's gain never
    /// grows as selection proceeds.
    fn claimable(&mut self, class: &'c CandidateClass) -> Vec<usize> {
        let mut order: Vec<usize> = (0..class.instances.len()).collect();
        order.sort_by(|&a, &b| class.instances[b].freq.cmp(&class.instances[a].freq).then(a.cmp(&b)));
        let mut local: HashSet<(usize, usize)> = HashSet::new();
        let mut out = Vec::new();
        for i in order {
            let inst = &class.instances[i];
            let b = self.key(&inst.proc_name, &inst.block_label);
            if inst.nodes.iter().any(|&v| local.contains(&(b, v))) {
                continue;
            }
            local.extend(inst.nodes.iter().map(|&v| (b, v)));
            if !inst.nodes.iter().any(|&v| self.taken.contains(&(b, v))) {
                out.push(i);
            }
        }
        out.sort_unstable();
        out
    }

    fn claim(&mut self, class: &'c CandidateClass, instances: &[usize]) {
        for &i in instances {
            let inst = &class.instances[i];
            let b = self.key(&inst.proc_name, &inst.block_label);
            self.taken.extend(inst.nodes.iter().map(|&v| (b, v)));
        }
    }
}

fn gain_of(class: &CandidateClass, instances: &[usize]) -> i128 {
    instances
        .iter()
        .map(|&i| class.instances[i].gain as i128 * class.instances[i].freq as i128)
        .sum()
}

/// Classes with a positive per-instance gain take part in selection.
fn eligible(class: &CandidateClass) -> bool {
    class.instances.first().is_some_and(|i| i.gain > 0)
}

fn fits(area: f64, used: f64, limits: &Limits) -> bool {
    limits.area_budget.is_none_or(|b| used + area <= b + 1e-9)
}

/// Greedy selection. With `recompute`, priorities are re-evaluated over
/// still-claimable instances after every pick; otherwise they are computed
/// once over all instances and classes are visited in that order.
pub fn greedy_select(classes: &[CandidateClass], metric: Metric, limits: Limits, recompute: bool) -> Result<Selection, SelectError> {
    if let Some(b) = limits.area_budget {
        if b < 0.0 {
            return Err(SelectError::NegativeBudget(b));
        }
    }
    let mut claims = Claims::new();
    let mut sel = Selection::default();
    let mut chosen = vec![false; classes.len()];
    let at_limit = |sel: &Selection| limits.max_classes.is_some_and(|m| sel.steps.len() >= m);

    if recompute {
        while !at_limit(&sel) {
            let mut best: Option<(usize, f64, Vec<usize>, i128)> = None;
            for (ci, class) in classes.iter().enumerate() {
                if chosen[ci] || !eligible(class) || !fits(class.area, sel.total_area, &limits) {
                    continue;
                }
                let inst = claims.claimable(class);
                let gain = gain_of(class, &inst);
                if gain <= 0 {
                    continue;
                }
                let p = metric_value(gain, class.area, metric);
                if best.as_ref().is_none_or(|b| greater(p, b.1)) {
                    best = Some((ci, p, inst, gain));
                }
            }
            let Some((ci, p, inst, gain)) = best else { break };
            chosen[ci] = true;
            claims.claim(&classes[ci], &inst);
            sel.push(Step {
                class_id: classes[ci].id,
                priority: p,
                instances: inst,
                gain,
                area: classes[ci].area,
            });
        }
    } else {
        let prios: Vec<f64> = classes.iter().map(|c| priority(c, metric)).collect();
        for ci in ranked(&prios) {
            if at_limit(&sel) {
                break;
            }
            let class = &classes[ci];
            if !eligible(class) || prios[ci] <= 0.0 || !fits(class.area, sel.total_area, &limits) {
                continue;
            }
            let inst = claims.claimable(class);
            let gain = gain_of(class, &inst);
            if gain <= 0 {
                continue;
            }
            claims.claim(class, &inst);
            sel.push(Step {
                class_id: class.id,
                priority: prios[ci],
                instances: inst,
                gain,
                area: class.area,
            });
        }
    }
    Ok(sel)
}

/// Indices by descending priority; ties keep the lower index first.
fn ranked(prios: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..prios.len()).collect();
    let mut out = Vec::with_capacity(prios.len());
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if greater(prios[left[k]], prios[left[best]]) {
                best = k;
            }
        }
        out.push(left.remove(best));
    }
    out
}

/// Area resolution of the knapsack, in multiplier area units.
pub const AREA_QUANTUM: f64 = 1e-3;

fn weight(area: f64) -> usize {
    (area / AREA_QUANTUM - 1e-9).ceil().max(0.0) as usize
}

/// Exact 0-1 knapsack over classes (value Σ gain × frequency, weight area)
/// within `area_budget`, with areas rounded up to [`AREA_QUANTUM`].
///
/// Overlapping instances are first resolved by one greedy pass in
/// descending gain order so that class values are independent. Among
/// optimal sets the lexicographically smallest list of class positions is
/// returned; steps are ordered by descending value.
pub fn knapsack_select(classes: &[CandidateClass], area_budget: f64) -> Result<Selection, SelectError> {
    if area_budget < 0.0 {
        return Err(SelectError::NegativeBudget(area_budget));
    }
    let mut claims = Claims::new();
    let prios: Vec<f64> = classes.iter().map(|c| priority(c, Metric::Gain)).collect();
    let mut claimed: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    let mut values: Vec<i128> = vec![0; classes.len()];
    for ci in ranked(&prios) {
        let class = &classes[ci];
        if !eligible(class) {
            continue;
        }
        let inst = claims.claimable(class);
        let gain = gain_of(class, &inst);
        if gain > 0 {
            claims.claim(class, &inst);
            values[ci] = gain;
            claimed[ci] = inst;
        }
    }

    let items: Vec<usize> = (0..classes.len()).filter(|&ci| values[ci] > 0).collect();
    let weights: Vec<usize> = items.iter().map(|&ci| weight(classes[ci].area)).collect();
    let total_weight: usize = weights.iter().sum();
    let capacity = ((area_budget / AREA_QUANTUM + 1e-9).floor() as usize).min(total_weight);

    // best[c] over the suffix items[i..]; take[i][c] records whether item i
    // belongs to some optimal solution of that suffix at capacity c.
    let n = items.len();
    let mut best = vec![0i128; capacity + 1];
    let mut take = vec![fixedbitset::FixedBitSet::with_capacity(capacity + 1); n];
    for i in (0..n).rev() {
        let (w, v) = (weights[i], values[items[i]]);
        let mut next = best.clone();
        for c in w..=capacity {
            let with = v + best[c - w];
            if with >= best[c] {
                take[i].insert(c);
                next[c] = with;
            }
        }
        best = next;
    }
    let mut picked = Vec::new();
    let mut c = capacity;
    for i in 0..n {
        if take[i].contains(c) {
            picked.push(items[i]);
            c -= weights[i];
        }
    }

    picked.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
    let mut sel = Selection::default();
    for ci in picked {
        sel.push(Step {
            class_id: classes[ci].id,
            priority: values[ci] as f64,
            instances: std::mem::take(&mut claimed[ci]),
            gain: values[ci],
            area: classes[ci].area,
        });
    }
    Ok(sel)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    /// 1-based selection step.
    pub step: usize,
    pub class_id: usize,
    pub priority: f64,
    pub gain: i128,
    pub area: f64,
    pub speedup: f64,
    pub cumulative_area: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curve {
    pub rows: Vec<CurveRow>,
    /// Fewest steps reaching 95% of the final speedup; 0 when empty.
    pub step95: usize,
}

impl Curve {
    pub fn final_speedup(&self) -> f64 {
        self.rows.last().map_or(1.0, |r| r.speedup)
    }
}

/// Cumulative speedup and area after each step of `selection`, given the
/// application's base cycle count.
pub fn speedup_curve(selection: &Selection, base_cycles: u64) -> Result<Curve, EstimateError> {
    let mut rows = Vec::with_capacity(selection.steps.len());
    let (mut gain, mut area) = (0i128, 0.0);
    for (k, s) in selection.steps.iter().enumerate() {
        gain += s.gain;
        area += s.area;
        rows.push(CurveRow {
            step: k + 1,
            class_id: s.class_id,
            priority: s.priority,
            gain: s.gain,
            area: s.area,
            speedup: speedup_ratio(base_cycles, gain)?,
            cumulative_area: area,
        });
    }
    let target = rows.last().map_or(1.0, |r| r.speedup) * 0.95;
    let step95 = rows
        .iter()
        .find(|r| r.speedup >= target - 1e-12)
        .map_or(0, |r| r.step);
    Ok(Curve { rows, step95 })
}
