//! Machine (IR architecture) descriptions.
//!
//! A description lists every IR operator with its software cycle count,
//! hardware delay and area, and behavioral flags, plus the data-memory
//! port model used by the estimators. Descriptions are read from and
//! written to a small line-oriented text format:
//!
//! ```text
//! machine suifvmenh
//! clock 1.0
//! memports read=1 write=1 cycles=1 local=1
//! group logic and,ior,xor
//! op add arity=2 sw=1 delay=0.35 area=0.04 flags=commutative
//! op lod arity=1 sw=1 delay=1 area=0 flags=load
//! ```

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

/// Scalar behavior of an operator, used by the C exporter and by
/// anything that needs to know what an opcode computes rather than what
/// it is called.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpSemantics {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Neg,
    Not,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Sar,
    Min,
    Max,
    Abs,
    Mov,
    Seq,
    Sne,
    Slt,
    Sle,
    Sltu,
    Sxt,
    Zxt,
    Select,
    BitInsert,
    BitExtract,
    Concat,
    Load,
    Store,
    Branch,
}

impl OpSemantics {
    const ALL: [(OpSemantics, &'static str); 31] = [
        (OpSemantics::Add, "add"),
        (OpSemantics::Sub, "sub"),
        (OpSemantics::Mul, "mul"),
        (OpSemantics::Div, "div"),
        (OpSemantics::Rem, "rem"),
        (OpSemantics::Neg, "neg"),
        (OpSemantics::Not, "not"),
        (OpSemantics::And, "and"),
        (OpSemantics::Or, "or"),
        (OpSemantics::Xor, "xor"),
        (OpSemantics::Shl, "shl"),
        (OpSemantics::Shr, "shr"),
        (OpSemantics::Sar, "sar"),
        (OpSemantics::Min, "min"),
        (OpSemantics::Max, "max"),
        (OpSemantics::Abs, "abs"),
        (OpSemantics::Mov, "mov"),
        (OpSemantics::Seq, "seq"),
        (OpSemantics::Sne, "sne"),
        (OpSemantics::Slt, "slt"),
        (OpSemantics::Sle, "sle"),
        (OpSemantics::Sltu, "sltu"),
        (OpSemantics::Sxt, "sxt"),
        (OpSemantics::Zxt, "zxt"),
        (OpSemantics::Select, "select"),
        (OpSemantics::BitInsert, "bitinsert"),
        (OpSemantics::BitExtract, "bitextract"),
        (OpSemantics::Concat, "concat"),
        (OpSemantics::Load, "load"),
        (OpSemantics::Store, "store"),
        (OpSemantics::Branch, "branch"),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL
            .iter()
            .find(|(s, _)| *s == self)
            .map(|(_, n)| *n)
            .expect("every variant is listed")
    }

    /// Bit-level operators that extend a plain RISC-like IR.
    pub fn is_bit_level(self) -> bool {
        matches!(
            self,
            OpSemantics::BitInsert | OpSemantics::BitExtract | OpSemantics::Concat
        )
    }
}

impl FromStr for OpSemantics {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(sem, _)| *sem)
            .ok_or(())
    }
}

impl fmt::Display for OpSemantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arity {
    Fixed(u8),
    Variadic,
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Fixed(n) => write!(f, "{n}"),
            Arity::Variadic => f.write_str("var"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpFlags {
    pub load: bool,
    pub store: bool,
    /// Control-transfer instruction.
    pub cti: bool,
    /// Excluded from pattern formation unless the user overrides it.
    pub forbidden: bool,
    /// Source operands may be swapped without changing the result.
    pub commutative: bool,
}

impl OpFlags {
    fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.load {
            out.push("load");
        }
        if self.store {
            out.push("store");
        }
        if self.cti {
            out.push("cti");
        }
        if self.forbidden {
            out.push("forbidden");
        }
        if self.commutative {
            out.push("commutative");
        }
        out
    }

    pub fn is_memory(&self) -> bool {
        self.load || self.store
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSpec {
    pub mnemonic: String,
    pub arity: Arity,
    pub sw_cycles: u32,
    /// Combinational delay in normalized delay units.
    pub hw_delay: f64,
    /// Area in multiplier area units (a 32-bit single-cycle multiplier is 1.0).
    pub hw_area: f64,
    pub flags: OpFlags,
    pub semantics: Option<OpSemantics>,
}

impl OperatorSpec {
    pub fn is_memory(&self) -> bool {
        self.flags.is_memory()
    }
}

/// Data-memory port model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemPorts {
    pub read: u32,
    pub write: u32,
    /// Cycles for one access to the shared data memory.
    pub mem_cycles: u32,
    /// Cycles for one access to local AFU storage.
    pub local_access_cycles: u32,
}

impl Default for MemPorts {
    fn default() -> Self {
        MemPorts {
            read: 1,
            write: 1,
            mem_cycles: 1,
            local_access_cycles: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MachineDesc {
    pub name: String,
    /// Delay units per clock cycle.
    pub clock: f64,
    pub memports: MemPorts,
    ops: IndexMap<String, OperatorSpec>,
    groups: IndexMap<String, Vec<String>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown opcode `{0}`")]
pub struct UnknownOpcode(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BxirError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate mnemonic `{mnemonic}`")]
    DuplicateMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: negative value for `{field}`")]
    NegativeCost { line: usize, field: String },
    #[error("line {line}: operator `{mnemonic}` is missing `area=`")]
    MissingArea { line: usize, mnemonic: String },
    #[error("line {line}: operator `{mnemonic}` cannot be both load and store")]
    LoadAndStore { line: usize, mnemonic: String },
    #[error("missing `clock` directive")]
    MissingClock,
    #[error("missing `machine` directive")]
    MissingName,
    #[error("group `{group}` names unknown opcode `{opcode}`")]
    UnknownGroupMember { group: String, opcode: String },
}

impl MachineDesc {
    pub fn new(name: impl Into<String>, clock: f64) -> Self {
        MachineDesc {
            name: name.into(),
            clock,
            memports: MemPorts::default(),
            ops: IndexMap::new(),
            groups: IndexMap::new(),
        }
    }

    /// Adds or replaces an operator.
    pub fn insert(&mut self, op: OperatorSpec) {
        self.ops.insert(op.mnemonic.clone(), op);
    }

    pub fn lookup_op(&self, mnemonic: &str) -> Result<&OperatorSpec, UnknownOpcode> {
        self.ops
            .get(mnemonic)
            .ok_or_else(|| UnknownOpcode(mnemonic.to_string()))
    }

    pub fn ops(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.ops.values()
    }

    pub fn group(&self, name: &str) -> Option<&[String]> {
        self.groups.get(name).map(Vec::as_slice)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Mnemonics carrying the forbidden-default flag, in declaration order.
    pub fn forbidden_default(&self) -> Vec<&str> {
        self.ops
            .values()
            .filter(|op| op.flags.forbidden)
            .map(|op| op.mnemonic.as_str())
            .collect()
    }

    /// Expands a user list of opcodes and group names into mnemonics.
    pub fn expand_names<'a>(
        &'a self,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<Vec<String>, UnknownOpcode> {
        let mut out = Vec::new();
        for name in names {
            if let Some(members) = self.groups.get(name) {
                out.extend(members.iter().cloned());
            } else {
                self.lookup_op(name)?;
                out.push(name.to_string());
            }
        }
        Ok(out)
    }

    /// Cycles the base processor spends on one instance of `op`.
    ///
    /// Loads and stores go to the shared data memory and cost
    /// `mem_cycles`; everything else costs its declared software cycles.
    pub fn software_cycles(&self, op: &OperatorSpec) -> u64 {
        if op.is_memory() {
            u64::from(self.memports.mem_cycles)
        } else {
            u64::from(op.sw_cycles)
        }
    }

    /// Number of whole cycles needed by a hardware delay.
    pub fn delay_cycles(&self, delay: f64) -> u64 {
        let units = delay / self.clock;
        if units <= 1e-9 {
            0
        } else {
            (units - 1e-9).ceil() as u64
        }
    }

    pub fn parse_bxir(text: &str) -> Result<MachineDesc, BxirError> {
        parse_bxir(text)
    }

    pub fn to_bxir(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("machine {}\n", self.name));
        out.push_str(&format!("clock {}\n", fmt_real(self.clock)));
        let m = &self.memports;
        out.push_str(&format!(
            "memports read={} write={} cycles={} local={}\n",
            m.read, m.write, m.mem_cycles, m.local_access_cycles
        ));
        for (name, members) in &self.groups {
            out.push_str(&format!("group {} {}\n", name, members.join(",")));
        }
        for op in self.ops.values() {
            out.push_str(&format!(
                "op {} arity={} sw={} delay={} area={}",
                op.mnemonic,
                op.arity,
                op.sw_cycles,
                fmt_real(op.hw_delay),
                fmt_real(op.hw_area)
            ));
            let flags = op.flags.names();
            if !flags.is_empty() {
                out.push_str(&format!(" flags={}", flags.join(",")));
            }
            if let Some(sem) = op.semantics {
                if sem.name() != op.mnemonic {
                    out.push_str(&format!(" sem={sem}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_real(x: f64) -> String {
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> BxirError {
    BxirError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_real(line: usize, field: &str, v: &str) -> Result<f64, BxirError> {
    let x: f64 = v
        .parse()
        .map_err(|_| syntax(line, format!("bad real `{v}` for `{field}`")))?;
    if !x.is_finite() {
        return Err(syntax(line, format!("non-finite value for `{field}`")));
    }
    if x < 0.0 {
        return Err(BxirError::NegativeCost {
            line,
            field: field.to_string(),
        });
    }
    Ok(x)
}

fn parse_uint(line: usize, field: &str, v: &str) -> Result<u32, BxirError> {
    if let Some(rest) = v.strip_prefix('-') {
        if rest.parse::<u64>().is_ok() {
            return Err(BxirError::NegativeCost {
                line,
                field: field.to_string(),
            });
        }
    }
    v.parse()
        .map_err(|_| syntax(line, format!("bad integer `{v}` for `{field}`")))
}

fn parse_bxir(text: &str) -> Result<MachineDesc, BxirError> {
    let mut name: Option<String> = None;
    let mut clock: Option<f64> = None;
    let mut memports = MemPorts::default();
    let mut ops: IndexMap<String, OperatorSpec> = IndexMap::new();
    let mut groups: IndexMap<String, Vec<String>> = IndexMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut words = body.split_whitespace();
        let head = words.next().unwrap_or_default();
        match head {
            "machine" => {
                let n = words.next().ok_or_else(|| syntax(line, "machine needs a name"))?;
                name = Some(n.to_string());
            }
            "clock" => {
                let v = words.next().ok_or_else(|| syntax(line, "clock needs a value"))?;
                let c = parse_real(line, "clock", v)?;
                if c <= 0.0 {
                    return Err(syntax(line, "clock must be positive"));
                }
                clock = Some(c);
            }
            "memports" => {
                for kv in words {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| syntax(line, format!("expected key=value, got `{kv}`")))?;
                    let n = parse_uint(line, k, v)?;
                    match k {
                        "read" => memports.read = n,
                        "write" => memports.write = n,
                        "cycles" => memports.mem_cycles = n,
                        "local" => memports.local_access_cycles = n,
                        _ => return Err(syntax(line, format!("unknown memports key `{k}`"))),
                    }
                }
                if memports.read == 0 || memports.write == 0 || memports.mem_cycles == 0 {
                    return Err(syntax(line, "memports read, write and cycles must be >= 1"));
                }
            }
            "group" => {
                let g = words.next().ok_or_else(|| syntax(line, "group needs a name"))?;
                let members: Vec<String> = words
                    .flat_map(|w| w.split(','))
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                groups.insert(g.to_string(), members);
            }
            "op" => {
                let mnemonic = words
                    .next()
                    .ok_or_else(|| syntax(line, "op needs a mnemonic"))?
                    .to_string();
                if ops.contains_key(&mnemonic) {
                    return Err(BxirError::DuplicateMnemonic { line, mnemonic });
                }
                let mut spec = OperatorSpec {
                    mnemonic: mnemonic.clone(),
                    arity: Arity::Variadic,
                    sw_cycles: 1,
                    hw_delay: 1.0,
                    hw_area: 0.0,
                    flags: OpFlags::default(),
                    semantics: mnemonic.parse().ok(),
                };
                let mut has_area = false;
                for kv in words {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| syntax(line, format!("expected key=value, got `{kv}`")))?;
                    match k {
                        "arity" => {
                            spec.arity = if v == "var" {
                                Arity::Variadic
                            } else {
                                let n = parse_uint(line, k, v)?;
                                Arity::Fixed(
                                    u8::try_from(n).map_err(|_| syntax(line, "arity too large"))?,
                                )
                            }
                        }
                        "sw" => spec.sw_cycles = parse_uint(line, k, v)?,
                        "delay" => spec.hw_delay = parse_real(line, k, v)?,
                        "area" => {
                            spec.hw_area = parse_real(line, k, v)?;
                            has_area = true;
                        }
                        "flags" => {
                            for f in v.split(',').filter(|s| !s.is_empty()) {
                                match f {
                                    "load" => spec.flags.load = true,
                                    "store" => spec.flags.store = true,
                                    "cti" => spec.flags.cti = true,
                                    "forbidden" | "forbidden-default" => {
                                        spec.flags.forbidden = true
                                    }
                                    "commutative" => spec.flags.commutative = true,
                                    _ => return Err(syntax(line, format!("unknown flag `{f}`"))),
                                }
                            }
                        }
                        "sem" => {
                            spec.semantics = Some(v.parse().map_err(|_| {
                                syntax(line, format!("unknown semantics `{v}`"))
                            })?)
                        }
                        _ => return Err(syntax(line, format!("unknown op attribute `{k}`"))),
                    }
                }
                if !has_area {
                    return Err(BxirError::MissingArea { line, mnemonic });
                }
                if spec.flags.load && spec.flags.store {
                    return Err(BxirError::LoadAndStore { line, mnemonic });
                }
                ops.insert(mnemonic, spec);
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    for (g, members) in &groups {
        if let Some(bad) = members.iter().find(|m| !ops.contains_key(*m)) {
            return Err(BxirError::UnknownGroupMember {
                group: g.clone(),
                opcode: bad.clone(),
            });
        }
    }

    Ok(MachineDesc {
        name: name.ok_or(BxirError::MissingName)?,
        clock: clock.ok_or(BxirError::MissingClock)?,
        memports,
        ops,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "machine t\nclock 1.0\n";

    #[test]
    fn parses_plain_op() {
        let md = parse_bxir(&format!("{HEADER}op add arity=2 sw=1 delay=1.0 area=0.01\n")).unwrap();
        let add = md.lookup_op("add").unwrap();
        assert_eq!(add.arity, Arity::Fixed(2));
        assert_eq!(add.sw_cycles, 1);
        assert_eq!(add.hw_delay, 1.0);
        assert_eq!(add.hw_area, 0.01);
        assert_eq!(add.semantics, Some(OpSemantics::Add));
        assert!(!add.flags.load && !add.flags.store);
    }

    #[test]
    fn parses_load_flag() {
        let md =
            parse_bxir(&format!("{HEADER}op lw arity=1 sw=2 delay=1.0 area=0.0 flags=load\n"))
                .unwrap();
        let lw = md.lookup_op("lw").unwrap();
        assert!(lw.flags.load);
        assert_eq!(lw.sw_cycles, 2);
        assert_eq!(lw.semantics, None);
    }

    #[test]
    fn defaults_apply() {
        let md = parse_bxir(&format!("{HEADER}op foo area=0.5\n")).unwrap();
        let foo = md.lookup_op("foo").unwrap();
        assert_eq!(foo.sw_cycles, 1);
        assert_eq!(foo.hw_delay, 1.0);
        assert_eq!(foo.arity, Arity::Variadic);
        assert_eq!(md.memports, MemPorts::default());
    }

    #[test]
    fn rejects_bad_descriptions() {
        let dup = format!("{HEADER}op a area=1\nop a area=2\n");
        assert!(matches!(
            parse_bxir(&dup),
            Err(BxirError::DuplicateMnemonic { line: 4, .. })
        ));
        let neg = format!("{HEADER}op a area=-1\n");
        assert!(matches!(parse_bxir(&neg), Err(BxirError::NegativeCost { .. })));
        let negsw = format!("{HEADER}op a sw=-3 area=1\n");
        assert!(matches!(parse_bxir(&negsw), Err(BxirError::NegativeCost { .. })));
        assert_eq!(
            parse_bxir("machine t\nop a area=1\n"),
            Err(BxirError::MissingClock)
        );
        let noarea = format!("{HEADER}op a sw=1\n");
        assert!(matches!(parse_bxir(&noarea), Err(BxirError::MissingArea { .. })));
        let both = format!("{HEADER}op a area=0 flags=load,store\n");
        assert!(matches!(parse_bxir(&both), Err(BxirError::LoadAndStore { .. })));
    }

    #[test]
    fn unknown_opcode_is_an_error() {
        let md = parse_bxir(HEADER).unwrap();
        assert_eq!(
            md.lookup_op("frobnicate").unwrap_err(),
            UnknownOpcode("frobnicate".into())
        );
    }

    #[test]
    fn groups_expand() {
        let md = parse_bxir(&format!(
            "{HEADER}op j area=0 flags=cti\nop jr area=0 flags=cti\ngroup jumps j,jr\n"
        ))
        .unwrap();
        assert_eq!(md.expand_names(["jumps"]).unwrap(), vec!["j", "jr"]);
        assert!(md.expand_names(["nope"]).is_err());
    }

    #[test]
    fn delay_cycles_rounds_up() {
        let md = parse_bxir(HEADER).unwrap();
        assert_eq!(md.delay_cycles(0.0), 0);
        assert_eq!(md.delay_cycles(0.3), 1);
        assert_eq!(md.delay_cycles(1.0), 1);
        assert_eq!(md.delay_cycles(1.0000000000001), 1);
        assert_eq!(md.delay_cycles(2.5), 3);
    }

    #[test]
    fn serialize_round_trips() {
        let text = format!(
            "{HEADER}memports read=2 write=1 cycles=5 local=1\n\
             op add arity=2 sw=1 delay=0.35 area=0.04 flags=commutative\n\
             op lod arity=1 sw=1 delay=1 area=0 flags=load\n\
             op cat arity=var sw=1 delay=0 area=0.001 sem=concat\n"
        );
        let md = parse_bxir(&text).unwrap();
        let again = parse_bxir(&md.to_bxir()).unwrap();
        assert_eq!(md, again);
        assert_eq!(md.to_bxir(), again.to_bxir());
        assert_eq!(again.lookup_op("cat").unwrap().semantics, Some(OpSemantics::Concat));
    }
}
