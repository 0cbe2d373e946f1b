//! Emitted C, compiled with the system compiler and run on random inputs,
//! against a direct interpreter of the pattern graph.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::process::Command;

use isegen_core::analysis::BlockGraph;
use isegen_core::bundled;
use isegen_core::export::{to_c, C_PRELUDE};
use isegen_core::ir::{BasicBlock, MemDepPolicy, Operand};
use isegen_core::{MachineDesc, Pattern};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BINARY: &[&str] = &[
    "add", "sub", "mul", "div", "rem", "and", "ior", "xor", "asl", "lsr", "asr", "min", "max", "seq", "sne", "sl", "sle",
];
const UNARY: &[&str] = &["neg", "not", "abs", "sxt", "zxt", "mov", "cvt"];
const WIDTHS: &[u32] = &[1, 8, 16, 32, 64];

fn mask(x: u64, w: u32) -> u64 {
    if w >= 64 {
        x
    } else {
        x & ((1u64 << w) - 1)
    }
}

fn sext(x: u64, w: u32) -> i64 {
    let x = mask(x, w);
    if w >= 64 || x >> (w - 1) & 1 == 0 {
        x as i64
    } else {
        (x | !((1u64 << w) - 1)) as i64
    }
}

fn field(l: u64, h: u64) -> u64 {
    if h < l {
        0
    } else {
        let k = h - l + 1;
        if k >= 64 {
            u64::MAX
        } else {
            (1u64 << k) - 1
        }
    }
}

fn shl(x: u64, s: u64) -> u64 {
    if s >= 64 {
        0
    } else {
        x << s
    }
}

fn shr(x: u64, s: u64) -> u64 {
    if s >= 64 {
        0
    } else {
        x >> s
    }
}

/// Value of one instruction from its (value, width) sources.
fn eval(op: &str, s: &[(u64, u32)]) -> u64 {
    let a = |i: usize| s[i].0;
    let sa = |i: usize| sext(s[i].0, s[i].1);
    match op {
        "add" => a(0).wrapping_add(a(1)),
        "sub" => a(0).wrapping_sub(a(1)),
        "mul" => a(0).wrapping_mul(a(1)),
        "div" => a(0).checked_div(a(1)).unwrap_or(0),
        "rem" => a(0).checked_rem(a(1)).unwrap_or(0),
        "and" => a(0) & a(1),
        "ior" => a(0) | a(1),
        "xor" => a(0) ^ a(1),
        "asl" => shl(a(0), a(1)),
        "lsr" => shr(a(0), a(1)),
        "asr" => (sa(0) >> a(1).min(63)) as u64,
        "min" => if sa(0) < sa(1) { a(0) } else { a(1) },
        "max" => if sa(0) > sa(1) { a(0) } else { a(1) },
        "seq" => (a(0) == a(1)) as u64,
        "sne" => (a(0) != a(1)) as u64,
        "sl" => (sa(0) < sa(1)) as u64,
        "sle" => (sa(0) <= sa(1)) as u64,
        "neg" => a(0).wrapping_neg(),
        "not" => !a(0),
        "abs" => if sa(0) < 0 { a(0).wrapping_neg() } else { a(0) },
        "sxt" => sa(0) as u64,
        "zxt" | "mov" | "cvt" => a(0),
        "select" => if a(0) != 0 { a(1) } else { a(2) },
        "bitextract" => shr(a(0), a(1)) & field(a(1), a(2)),
        "bitinsert" => {
            let m = shl(field(a(2), a(3)), a(2));
            (a(0) & !m) | (shl(a(1), a(2)) & m)
        }
        "concat" => {
            let mut v = 0u64;
            for &(x, w) in s {
                v = shl(v, w as u64) | x;
            }
            v
        }
        other => panic!("no semantics for {other}"),
    }
}

fn interpret(p: &Pattern, inputs: &HashMap<String, u64>) -> HashMap<String, u64> {
    let mut env: HashMap<String, u64> = HashMap::new();
    for inst in &p.instructions {
        let srcs: Vec<(u64, u32)> = inst
            .srcs
            .iter()
            .map(|o| match o {
                Operand::Reg { name, width } => (mask(*env.get(name).or_else(|| inputs.get(name)).unwrap(), *width), *width),
                Operand::Const { value, width } => (mask(*value as u64, *width), *width),
                _ => unreachable!(),
            })
            .collect();
        let Operand::Reg { name, width } = &inst.dests[0] else { unreachable!() };
        env.insert(name.clone(), mask(eval(&inst.opcode, &srcs), *width));
    }
    env
}

fn random_pattern(rng: &mut ChaCha8Rng, md: &MachineDesc, n: usize) -> Pattern {
    let mut b = BasicBlock::new("L");
    let mut regs: Vec<(String, u32)> = (0..3).map(|k| (format!("in.{k}"), *WIDTHS.choose(rng).unwrap())).collect();
    let pick = |rng: &mut ChaCha8Rng, regs: &[(String, u32)]| -> Operand {
        if rng.gen_bool(0.15) {
            return Operand::constant(rng.gen_range(-40..200), *WIDTHS.choose(rng).unwrap());
        }
        let (name, w) = if rng.gen_bool(0.7) { &regs[regs.len() - 1 - rng.gen_range(0..regs.len().min(3))] } else { regs.choose(rng).unwrap() };
        Operand::reg(name.clone(), *w)
    };
    for k in 0..n {
        let w = *WIDTHS.choose(rng).unwrap();
        let roll = rng.gen_range(0..10);
        let (op, srcs) = match roll {
            0 => ("select", vec![pick(rng, &regs), pick(rng, &regs), pick(rng, &regs)]),
            1 => {
                let l = rng.gen_range(0..40);
                ("bitextract", vec![pick(rng, &regs), Operand::constant(l, 32), Operand::constant(l + rng.gen_range(0..24), 32)])
            }
            2 => {
                let l = rng.gen_range(0..40);
                ("bitinsert", vec![pick(rng, &regs), pick(rng, &regs), Operand::constant(l, 32), Operand::constant(l + rng.gen_range(0..24), 32)])
            }
            3 => ("concat", (0..rng.gen_range(1..4)).map(|_| pick(rng, &regs)).collect()),
            4 => (*UNARY.choose(rng).unwrap(), vec![pick(rng, &regs)]),
            _ => (*BINARY.choose(rng).unwrap(), vec![pick(rng, &regs), pick(rng, &regs)]),
        };
        let name = if rng.gen_bool(0.1) { regs.choose(rng).unwrap().0.clone() } else { format!("t{k}") };
        b.push(op, vec![Operand::reg(name.clone(), w)], srcs);
        regs.push((name, w));
    }
    b.rebuild_edges(md, MemDepPolicy::Conservative).unwrap();
    let g = BlockGraph::local(&b, md).unwrap();
    let all: Vec<usize> = (0..b.len()).collect();
    Pattern::from_set(&g, &g.set_of(&all), false)
}

fn unique(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

#[test]
fn compiled_patterns_match_the_interpreter() {
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&compiler).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler `{compiler}`");
        return;
    }
    let md = bundled::suifvmenh();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    const PATTERNS: usize = 120;
    const TRIALS: usize = 16;
    let mut src = String::from(C_PRELUDE);
    src.push_str("#include <stdio.h>\n");
    let mut main = String::from("int main(void) {\n");
    let mut expected = String::new();
    for k in 0..PATTERNS {
        let n = rng.gen_range(1..=16);
        let p = random_pattern(&mut rng, &md, n);
        src.push_str(&to_c(&p, &md, &format!("ci{k}")).unwrap());
        let ins = unique(p.operands.inputs.iter().filter_map(|o| o.reg_name().map(str::to_string)));
        let outs = unique(p.operands.outputs.iter().filter_map(|o| o.reg_name().map(str::to_string)));
        for _ in 0..TRIALS {
            let values: HashMap<String, u64> = ins.iter().map(|n| (n.clone(), rng.gen::<u64>() >> rng.gen_range(0..64))).collect();
            let env = interpret(&p, &values);
            let mut args: Vec<String> = ins.iter().map(|n| format!("UINT64_C({})", values[n])).collect();
            writeln!(main, "  {{").unwrap();
            for (j, _) in outs.iter().enumerate() {
                writeln!(main, "    uint64_t o{j} = 0;").unwrap();
                args.push(format!("&o{j}"));
            }
            writeln!(main, "    ci{k}({});", args.join(", ")).unwrap();
            write!(main, "    printf(\"{k}").unwrap();
            for _ in &outs {
                main.push_str(" %llu");
            }
            main.push_str("\\n\"");
            for j in 0..outs.len() {
                write!(main, ", (unsigned long long)o{j}").unwrap();
            }
            main.push_str(");\n  }\n");
            write!(expected, "{k}").unwrap();
            for n in &outs {
                write!(expected, " {}", env[n]).unwrap();
            }
            expected.push('\n');
        }
    }
    main.push_str("  return 0;\n}\n");
    src.push_str(&main);

    let dir = tempfile::tempdir().unwrap();
    let c_path = dir.path().join("patterns.c");
    let exe = dir.path().join("patterns");
    std::fs::write(&c_path, &src).unwrap();
    let status = Command::new(&compiler)
        .args(["-std=c99", "-O1", "-Wall", "-Werror", "-Wno-unused-function", "-o"])
        .arg(&exe)
        .arg(&c_path)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success());
    let got = String::from_utf8(out.stdout).unwrap();
    for (line, (g, e)) in got.lines().zip(expected.lines()).enumerate() {
        assert_eq!(g, e, "line {line}");
    }
    assert_eq!(got.lines().count(), PATTERNS * TRIALS);
}
