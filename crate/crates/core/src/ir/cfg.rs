use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use super::{Program, Warning};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CfgEdgeKind {
    Fallthrough,
    Branch,
    Call,
}

impl CfgEdgeKind {
    fn keyword(self) -> &'static str {
        match self {
            CfgEdgeKind::Fallthrough => "ft",
            CfgEdgeKind::Branch => "br",
            CfgEdgeKind::Call => "call",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CfgEdge {
    pub src: String,
    pub dst: String,
    pub kind: CfgEdgeKind,
    /// A call edge whose target is not a block of this procedure.
    pub external: bool,
}

/// Typed control-flow edges per procedure.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cfg {
    pub procs: IndexMap<String, Vec<CfgEdge>>,
}

impl Cfg {
    pub fn edges(&self, proc_name: &str) -> &[CfgEdge] {
        self.procs.get(proc_name).map_or(&[], Vec::as_slice)
    }
}

impl fmt::Display for Cfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (proc, edges) in &self.procs {
            writeln!(f, "proc {proc}")?;
            for e in edges {
                writeln!(f, "edge {} {} {}", e.src, e.dst, e.kind.keyword())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CfgError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown procedure `{name}`")]
    UnknownProcedure { line: usize, name: String },
    #[error("line {line}: unknown block `{label}` in procedure `{proc}`")]
    UnknownLabel {
        line: usize,
        proc: String,
        label: String,
    },
}

pub fn parse_cfg(text: &str, program: &Program) -> Result<Cfg, CfgError> {
    let mut cfg = Cfg::default();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        match words[..] {
            ["proc", name] => {
                if program.procedure(name).is_none() {
                    return Err(CfgError::UnknownProcedure {
                        line,
                        name: name.to_string(),
                    });
                }
                cfg.procs.entry(name.to_string()).or_default();
                current = Some(name.to_string());
            }
            ["edge", src, dst, kind] => {
                let Some(proc_name) = current.clone() else {
                    return Err(CfgError::Syntax {
                        line,
                        msg: "edge before any `proc`".into(),
                    });
                };
                let kind = match kind {
                    "ft" => CfgEdgeKind::Fallthrough,
                    "br" => CfgEdgeKind::Branch,
                    "call" => CfgEdgeKind::Call,
                    other => {
                        return Err(CfgError::Syntax {
                            line,
                            msg: format!("unknown edge type `{other}`"),
                        })
                    }
                };
                let proc = program.procedure(&proc_name).expect("checked at `proc`");
                let unknown = |label: &str| CfgError::UnknownLabel {
                    line,
                    proc: proc_name.clone(),
                    label: label.to_string(),
                };
                if proc.block(src).is_none() {
                    return Err(unknown(src));
                }
                let mut external = false;
                if proc.block(dst).is_none() {
                    if kind == CfgEdgeKind::Call {
                        external = true;
                    } else {
                        return Err(unknown(dst));
                    }
                }
                cfg.procs.entry(proc_name).or_default().push(CfgEdge {
                    src: src.to_string(),
                    dst: dst.to_string(),
                    kind,
                    external,
                });
            }
            _ => {
                return Err(CfgError::Syntax {
                    line,
                    msg: format!("unexpected `{body}`"),
                })
            }
        }
    }
    Ok(cfg)
}

/// Basic-block execution frequencies. Unlisted blocks run zero times.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Profile {
    freqs: BTreeMap<(String, String), u64>,
}

impl Profile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freq(&self, proc_name: &str, label: &str) -> u64 {
        // BTreeMap lookups need an owned key; profiles are small.
        self.freqs
            .get(&(proc_name.to_string(), label.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Adds `count` executions to a block.
    pub fn add(&mut self, proc_name: &str, label: &str, count: u64) {
        *self
            .freqs
            .entry((proc_name.to_string(), label.to_string()))
            .or_insert(0) += count;
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.freqs.iter().map(|((p, l), f)| (p.as_str(), l.as_str(), *f))
    }

    /// Every frequency multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Profile {
        Profile {
            freqs: self.freqs.iter().map(|(key, f)| (key.clone(), f * k)).collect(),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((p, l), n) in &self.freqs {
            writeln!(f, "freq {p} {l} {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: negative frequency {value}")]
    NegativeFrequency { line: usize, value: i64 },
}

/// Parses `freq <proc> <label> <count>` lines; repeated lines accumulate.
/// Lines naming blocks absent from `program` are skipped with a warning.
pub fn parse_profile(text: &str, program: &Program) -> Result<(Profile, Vec<Warning>), ProfileError> {
    let mut profile = Profile::new();
    let mut warnings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        let ["freq", proc_name, label, count] = words[..] else {
            return Err(ProfileError::Syntax {
                line,
                msg: format!("expected `freq <proc> <label> <count>`, got `{body}`"),
            });
        };
        let value: i64 = count.parse().map_err(|_| ProfileError::Syntax {
            line,
            msg: format!("bad count `{count}`"),
        })?;
        if value < 0 {
            return Err(ProfileError::NegativeFrequency { line, value });
        }
        if program.block(proc_name, label).is_none() {
            warnings.push(Warning {
                line,
                msg: format!("unknown block `{proc_name}:{label}` skipped"),
            });
            continue;
        }
        profile.add(proc_name, label, value as u64);
    }
    Ok((profile, warnings))
}
