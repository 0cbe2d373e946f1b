//! Machine descriptions and kernels shipped with the crate.

use crate::ir::{parse_cfg, parse_iseq, parse_profile, Cfg, MemDepPolicy, Profile, Program};
use crate::machdesc::MachineDesc;

pub const SUIFVMENH_BXIR: &str = include_str!("../corpus/machines/suifvmenh.bxir");
pub const IDLX_BXIR: &str = include_str!("../corpus/machines/idlx.bxir");

/// SUIFvm-style IR with type conversion, predication and bit-level operators.
pub fn suifvmenh() -> MachineDesc {
    MachineDesc::parse_bxir(SUIFVMENH_BXIR).expect("bundled description parses")
}

/// Integer DLX subset; control transfers are forbidden by default.
pub fn idlx() -> MachineDesc {
    MachineDesc::parse_bxir(IDLX_BXIR).expect("bundled description parses")
}

pub fn machine(name: &str) -> Option<MachineDesc> {
    match name {
        "suifvmenh" => Some(suifvmenh()),
        "idlx" => Some(idlx()),
        _ => None,
    }
}

pub const MACHINE_NAMES: &[&str] = &["suifvmenh", "idlx"];

/// A bundled application: program text, control flow, profile and the
/// machine description it is written against.
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    pub name: &'static str,
    pub machine: &'static str,
    pub iseq: &'static str,
    pub cfg: &'static str,
    pub prof: &'static str,
}

macro_rules! kernel {
    ($name:literal, $machine:literal) => {
        Kernel {
            name: $name,
            machine: $machine,
            iseq: include_str!(concat!("../corpus/kernels/", $name, ".iseq")),
            cfg: include_str!(concat!("../corpus/kernels/", $name, ".cfg")),
            prof: include_str!(concat!("../corpus/kernels/", $name, ".prof")),
        }
    };
}

pub const KERNELS: &[Kernel] = &[
    kernel!("crcsp_plain", "suifvmenh"),
    kernel!("crcsp_bit", "suifvmenh"),
    kernel!("crcdp_plain", "suifvmenh"),
    kernel!("crcdp_bit", "suifvmenh"),
    kernel!("memk", "suifvmenh"),
    kernel!("sha", "idlx"),
];

pub fn kernel(name: &str) -> Option<&'static Kernel> {
    KERNELS.iter().find(|k| k.name == name)
}

/// A kernel parsed and ready for generation, with dependence graphs built
/// under the conservative memory policy.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub md: MachineDesc,
    pub program: Program,
    pub cfg: Cfg,
    pub profile: Profile,
}

impl Kernel {
    pub fn load(&self) -> Loaded {
        let md = machine(self.machine).expect("bundled machine");
        let mut program = parse_iseq(self.iseq).expect("bundled kernel parses");
        program
            .build_ddgs(&md, MemDepPolicy::Conservative)
            .expect("bundled kernel resolves");
        let cfg = parse_cfg(self.cfg, &program).expect("bundled cfg parses");
        let (profile, warnings) = parse_profile(self.prof, &program).expect("bundled profile parses");
        debug_assert!(warnings.is_empty());
        Loaded {
            md,
            program,
            cfg,
            profile,
        }
    }
}
