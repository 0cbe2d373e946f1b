//! `isegen`: command-line front end for custom instruction generation.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use isegen_core::bundled;
use isegen_core::corpus::{random_program, BlockShape};
use isegen_core::export::{self, blocks_csv, candidates_csv, classes_csv, curve_csv, dedup_csv, stats_csv, stats_text, to_c, to_dot, to_gdl};
use isegen_core::flow::{self, FlowConfig, FlowResult, Selector};
use isegen_core::ir::{parse_iseq_with_warnings, MemDepPolicy};
use isegen_core::sweep::{run_sweep, sweep_csv, SweepConfig};
use isegen_core::{
    dedup, export_library, gen_program, parse_cfg, parse_profile, program_stats, remove_false_deps, ConstMatch, MachineDesc, MemMode, Method, Pattern,
    Profile, Program,
};

#[derive(Parser)]
#[command(name = "isegen", version, about = "Identify, estimate and select custom instructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-block and program statistics.
    Analyze {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum, default_value_t = StatsFormat::Text)]
        format: StatsFormat,
        #[arg(long)]
        remove_false_deps: bool,
    },
    /// Candidate patterns as CSV.
    Gen {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Isomorphism classes of the candidates.
    Dedup {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Classes with cycle, gain and area estimates.
    Estimate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Selected classes as a speedup curve.
    Select {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        sel: SelectArgs,
    },
    /// Graphs, C code or a pattern library for the selected classes.
    Export {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        sel: SelectArgs,
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// Restrict graphs to one block, as `proc:label`.
        #[arg(long)]
        block: Option<String>,
        /// Export every class, not only the selected ones (c, library).
        #[arg(long)]
        all_classes: bool,
    },
    /// One CSV row per point of the cartesian product of the axes.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        axes: SweepArgs,
    },
    /// Writes a seeded random program and its profile.
    Corpus {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        /// Largest block size.
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 0.2)]
        mem_prob: f64,
        /// Program output; the profile goes next to it with a `.prof` extension.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Io {
    /// Machine description: a BXIR file or a bundled machine name.
    #[arg(short = 'm', long)]
    machine: Option<String>,
    /// Program in ISeq form.
    #[arg(short = 'i', long)]
    iseq: Option<PathBuf>,
    /// Control-flow graph, checked against the program.
    #[arg(short = 'c', long)]
    cfg: Option<PathBuf>,
    /// Block frequencies. Without one, every block runs once.
    #[arg(short = 'p', long)]
    profile: Option<PathBuf>,
    /// Bundled kernel to use instead of -i/-c/-p (and -m, unless given).
    #[arg(short = 'k', long, conflicts_with_all = ["iseq", "cfg", "profile"])]
    kernel: Option<String>,
    /// Output file; stdout when absent.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Treat accesses to distinct memory symbols as independent.
    #[arg(long)]
    symbol_aware: bool,
    /// Override the data memory access latency.
    #[arg(long)]
    mem_cycles: Option<u32>,
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, default_value = "mimo")]
    method: Method,
    /// Enumerate every feasible pattern instead of the maximal ones.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long = "ni", default_value = "inf", value_parser = parse_bound)]
    ni: Bound,
    #[arg(long = "no", default_value = "inf", value_parser = parse_bound)]
    no: Bound,
    #[arg(long, default_value = "nomem")]
    mem: MemMode,
    /// Extra forbidden opcodes or group names, comma separated.
    #[arg(long, value_delimiter = ',')]
    forbid: Vec<String>,
    #[arg(long)]
    unique_operands: bool,
    #[arg(long, default_value = "value")]
    const_match: ConstMatch,
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Visited-subset cap per block for exhaustive enumeration.
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    remove_false_deps: bool,
    /// Under CDM, bound memory accesses by port counts only.
    #[arg(long)]
    ports_only: bool,
}

#[derive(Args, Clone)]
struct SelectArgs {
    #[arg(long, default_value = "gain")]
    metric: Selector,
    #[arg(long, value_parser = parse_budget)]
    area_budget: Option<f64>,
    #[arg(long)]
    max_classes: Option<usize>,
    /// Recompute greedy priorities after each pick.
    #[arg(long)]
    recompute: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "ni", value_delimiter = ',', default_value = "inf", value_parser = parse_bound)]
    ni: Vec<Bound>,
    #[arg(long = "no", value_delimiter = ',', default_value = "inf", value_parser = parse_bound)]
    no: Vec<Bound>,
    #[arg(long, value_delimiter = ',', default_value = "mimo")]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "nomem")]
    mem: Vec<MemMode>,
    #[arg(long, value_delimiter = ',', default_value = "gain")]
    metric: Vec<Selector>,
    #[arg(long, value_delimiter = ',', default_value = "inf", value_parser = parse_budget_axis)]
    area_budget: Vec<Budget>,
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, value_delimiter = ',')]
    forbid: Vec<String>,
    #[arg(long, default_value = "value")]
    const_match: ConstMatch,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    remove_false_deps: bool,
    #[arg(long)]
    ports_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Text,
    Csv,
    Blocks,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Gdl,
    C,
    Library,
}

/// `None` is unlimited.
type Bound = Option<usize>;
type Budget = Option<f64>;

fn parse_bound(s: &str) -> Result<Bound, String> {
    if s == "inf" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("bound must be at least 1".into()),
        Ok(n) => Ok(Some(n)),
        Err(_) => Err(format!("expected a positive integer or `inf`, got `{s}`")),
    }
}

fn parse_budget(s: &str) -> Result<f64, String> {
    let v = f64::from_str(s).map_err(|_| format!("bad area budget `{s}`"))?;
    if v < 0.0 || v.is_nan() {
        return Err(format!("area budget must be non-negative, got `{s}`"));
    }
    Ok(v)
}

fn parse_budget_axis(s: &str) -> Result<Budget, String> {
    if s == "inf" {
        Ok(None)
    } else {
        parse_budget(s).map(Some)
    }
}

struct Inputs {
    md: MachineDesc,
    program: Program,
    profile: Profile,
    output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_machine(arg: &str) -> Result<MachineDesc> {
    if let Some(md) = bundled::machine(arg) {
        if !Path::new(arg).exists() {
            return Ok(md);
        }
    }
    if !Path::new(arg).exists() {
        bail!("unknown machine `{arg}`: not a file and not one of {}", bundled::MACHINE_NAMES.join(", "));
    }
    let text = read(Path::new(arg))?;
    MachineDesc::parse_bxir(&text).with_context(|| format!("parsing {arg}"))
}

fn load(io: &Io) -> Result<Inputs> {
    let (md, program, profile) = if let Some(name) = &io.kernel {
        let k = bundled::kernel(name).with_context(|| {
            let names: Vec<&str> = bundled::KERNELS.iter().map(|k| k.name).collect();
            format!("unknown kernel `{name}` (bundled: {})", names.join(", "))
        })?;
        let md = match &io.machine {
            Some(m) => load_machine(m)?,
            None => load_machine(k.machine)?,
        };
        let program = parse_iseq_with_warnings(k.iseq)?.0;
        let profile = parse_profile(k.prof, &program)?.0;
        (md, program, profile)
    } else {
        let machine = io.machine.as_deref().context("missing -m <machine>")?;
        let md = load_machine(machine)?;
        let path = io.iseq.as_deref().context("missing -i <program.iseq>")?;
        let (program, warnings) = parse_iseq_with_warnings(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
        for w in warnings {
            eprintln!("warning: {}:{}: {}", path.display(), w.line, w.msg);
        }
        if let Some(cfg) = &io.cfg {
            parse_cfg(&read(cfg)?, &program).with_context(|| format!("parsing {}", cfg.display()))?;
        }
        let profile = match &io.profile {
            Some(p) => {
                let (profile, warnings) = parse_profile(&read(p)?, &program).with_context(|| format!("parsing {}", p.display()))?;
                for w in warnings {
                    eprintln!("warning: {}:{}: {}", p.display(), w.line, w.msg);
                }
                profile
            }
            None => {
                let mut profile = Profile::new();
                for (proc, block) in program.blocks() {
                    profile.add(&proc.name, &block.label, 1);
                }
                profile
            }
        };
        (md, program, profile)
    };
    let mut md = md;
    if let Some(c) = io.mem_cycles {
        md.memports.mem_cycles = c;
    }
    let mut program = program;
    let policy = if io.symbol_aware { MemDepPolicy::SymbolAware } else { MemDepPolicy::Conservative };
    program.build_ddgs(&md, policy)?;
    Ok(Inputs {
        md,
        program,
        profile,
        output: io.output.clone(),
    })
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn forbid(md: &MachineDesc, cfg: &mut FlowConfig, names: &[String]) -> Result<()> {
    let extra = md.expand_names(names.iter().map(String::as_str))?;
    cfg.constraints.forbidden.extend(extra);
    Ok(())
}

fn flow_config(md: &MachineDesc, gen: &GenArgs, sel: Option<&SelectArgs>) -> Result<FlowConfig> {
    let mut cfg = FlowConfig::new(md);
    cfg.constraints = cfg.constraints.with_io(gen.ni, gen.no).with_method(gen.method, gen.exhaustive).with_mem_mode(gen.mem);
    cfg.constraints.unique_operands = gen.unique_operands;
    cfg.constraints.max_nodes = gen.max_nodes;
    if let Some(cap) = gen.cap {
        cfg.constraints.enumeration_cap = cap;
    }
    forbid(md, &mut cfg, &gen.forbid)?;
    cfg.const_match = gen.const_match;
    cfg.ports_only = gen.ports_only;
    cfg.remove_false_deps = gen.remove_false_deps;
    if let Some(sel) = sel {
        cfg.selector = sel.metric;
        cfg.limits.area_budget = sel.area_budget;
        cfg.limits.max_classes = sel.max_classes;
        cfg.recompute = sel.recompute;
    }
    cfg.constraints.validate()?;
    Ok(cfg)
}

fn report_truncation(r: &FlowResult) {
    for (proc, label) in &r.candidates.truncated {
        eprintln!("warning: enumeration cap reached in {proc}:{label}; candidates are incomplete");
    }
}

fn run_flow(inp: &Inputs, gen: &GenArgs, sel: Option<&SelectArgs>) -> Result<FlowResult> {
    let cfg = flow_config(&inp.md, gen, sel)?;
    let r = flow::run(&inp.program, &inp.profile, &inp.md, &cfg)?;
    report_truncation(&r);
    Ok(r)
}

/// Program with false dependencies removed when asked for, so that
/// candidates and graphs refer to the same edges.
fn prepared(inp: &Inputs, gen: &GenArgs) -> Result<Program> {
    let mut program = inp.program.clone();
    if gen.remove_false_deps {
        for proc in &mut program.procedures {
            for block in &mut proc.blocks {
                remove_false_deps(block, &inp.md)?;
            }
        }
    }
    Ok(program)
}

fn block_filter(block: &Option<String>) -> Result<Option<(String, String)>> {
    match block {
        None => Ok(None),
        Some(spec) => match spec.split_once(':') {
            Some((p, l)) => Ok(Some((p.to_string(), l.to_string()))),
            None => bail!("--block expects `proc:label`, got `{spec}`"),
        },
    }
}

fn export(inp: &Inputs, gen: &GenArgs, sel: &SelectArgs, format: ExportFormat, block: &Option<String>, all_classes: bool) -> Result<String> {
    let only = block_filter(block)?;
    let program = prepared(inp, gen)?;
    let blocks: Vec<_> = program
        .blocks()
        .filter(|(p, b)| only.as_ref().is_none_or(|(pn, l)| *pn == p.name && *l == b.label))
        .collect();
    if only.is_some() && blocks.is_empty() {
        bail!("no block {}", block.as_deref().unwrap_or_default());
    }
    if let ExportFormat::Dot = format {
        return Ok(blocks.iter().map(|(_, b)| to_dot(b)).collect());
    }
    let r = run_flow(inp, gen, Some(sel))?;
    let chosen: Vec<_> = if all_classes {
        r.classes.iter().collect()
    } else {
        r.selection.steps.iter().filter_map(|s| r.classes.iter().find(|c| c.id == s.class_id)).collect()
    };
    match format {
        ExportFormat::Dot => unreachable!(),
        ExportFormat::Gdl => {
            let by_nodes: HashMap<(&str, &str, &[usize]), &Pattern> = r
                .candidates
                .patterns
                .iter()
                .map(|p| ((p.proc_name.as_str(), p.block_label.as_str(), p.nodes.as_slice()), p))
                .collect();
            let mut text = String::new();
            for (proc, b) in &blocks {
                let mut pats = Vec::new();
                for step in &r.selection.steps {
                    for &i in &step.instances {
                        let inst = &r.classes[step.class_id].instances[i];
                        if inst.proc_name == proc.name && inst.block_label == b.label {
                            if let Some(p) = by_nodes.get(&(inst.proc_name.as_str(), inst.block_label.as_str(), inst.nodes.as_slice())) {
                                pats.push(*p);
                            }
                        }
                    }
                }
                text.push_str(&to_gdl(b, &pats));
            }
            Ok(text)
        }
        ExportFormat::C => {
            let mut text = String::from(export::C_PRELUDE);
            for c in chosen {
                text.push('\n');
                match to_c(&c.representative, &inp.md, &format!("ci{}", c.id)) {
                    Ok(code) => text.push_str(&code),
                    Err(e) => text.push_str(&format!("/* class {}: {e} */\n", c.id)),
                }
            }
            Ok(text)
        }
        ExportFormat::Library => {
            let owned: Vec<_> = chosen.into_iter().cloned().collect();
            Ok(export_library(&owned, &inp.md)?)
        }
    }
}

fn sweep(inp: &Inputs, a: &SweepArgs) -> Result<String> {
    let mut base = FlowConfig::new(&inp.md);
    base.constraints = base.constraints.with_method(Method::Mimo, a.exhaustive);
    base.constraints.max_nodes = a.max_nodes;
    if let Some(cap) = a.cap {
        base.constraints.enumeration_cap = cap;
    }
    forbid(&inp.md, &mut base, &a.forbid)?;
    base.const_match = a.const_match;
    base.ports_only = a.ports_only;
    base.remove_false_deps = a.remove_false_deps;
    let mut cfg = SweepConfig::new(base);
    cfg.ni = a.ni.clone();
    cfg.no = a.no.clone();
    cfg.methods = a.method.clone();
    cfg.mem_modes = a.mem.clone();
    cfg.selectors = a.metric.clone();
    cfg.budgets = a.area_budget.clone();
    cfg.validate()?;
    eprintln!("sweep: {} configurations", cfg.size());
    let rows = run_sweep(&cfg, &inp.program, &inp.profile, &inp.md)?;
    for row in &rows {
        if let Err(e) = &row.outcome {
            eprintln!("warning: {:?}: {e}", row.point);
        }
    }
    Ok(sweep_csv(&rows))
}

fn corpus(seed: u64, blocks: usize, nodes: usize, mem_prob: f64, output: &Path) -> Result<()> {
    if !(0.0..=1.0).contains(&mem_prob) {
        bail!("--mem-prob must lie in [0, 1]");
    }
    let shape = BlockShape {
        mem_prob,
        ..BlockShape::new(nodes)
    };
    let (program, profile) = random_program(seed, blocks, &shape);
    fs::write(output, program.to_iseq()).with_context(|| format!("writing {}", output.display()))?;
    let prof = output.with_extension("prof");
    fs::write(&prof, profile.to_string()).with_context(|| format!("writing {}", prof.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Analyze { io, format, remove_false_deps } => {
            let mut inp = load(&io)?;
            if remove_false_deps {
                let mut removed = 0;
                for proc in &mut inp.program.procedures {
                    for block in &mut proc.blocks {
                        removed += isegen_core::remove_false_deps(block, &inp.md)?;
                    }
                }
                eprintln!("removed {removed} false dependencies");
            }
            let stats = program_stats(&inp.program, &inp.profile, &inp.md)?;
            let text = match format {
                StatsFormat::Text => stats_text(&stats),
                StatsFormat::Csv => stats_csv(&stats),
                StatsFormat::Blocks => blocks_csv(&stats),
            };
            emit(&inp.output, &text)
        }
        Command::Gen { io, gen } => {
            let inp = load(&io)?;
            let cfg = flow_config(&inp.md, &gen, None)?;
            let program = prepared(&inp, &gen)?;
            let cands = gen_program(&program, &inp.profile, &inp.md, &cfg.constraints)?;
            for (proc, label) in &cands.truncated {
                eprintln!("warning: enumeration cap reached in {proc}:{label}; candidates are incomplete");
            }
            emit(&inp.output, &candidates_csv(&cands.patterns))
        }
        Command::Dedup { io, gen } => {
            let inp = load(&io)?;
            let cfg = flow_config(&inp.md, &gen, None)?;
            let program = prepared(&inp, &gen)?;
            let cands = gen_program(&program, &inp.profile, &inp.md, &cfg.constraints)?;
            let classes = dedup(&cands.patterns, &inp.md, cfg.const_match)?;
            emit(&inp.output, &dedup_csv(&classes))
        }
        Command::Estimate { io, gen } => {
            let inp = load(&io)?;
            let r = run_flow(&inp, &gen, None)?;
            emit(&inp.output, &classes_csv(&r.classes))
        }
        Command::Select { io, gen, sel } => {
            let inp = load(&io)?;
            let r = run_flow(&inp, &gen, Some(&sel))?;
            eprintln!(
                "selected {} of {} classes: speedup {:.6}, area {:.6}, 95% of speedup at step {}",
                r.selection.steps.len(),
                r.classes.len(),
                r.speedup(),
                r.selection.total_area,
                r.curve.step95
            );
            emit(&inp.output, &curve_csv(&r.curve))
        }
        Command::Export { io, gen, sel, format, block, all_classes } => {
            let inp = load(&io)?;
            let text = export(&inp, &gen, &sel, format, &block, all_classes)?;
            emit(&inp.output, &text)
        }
        Command::Sweep { io, axes } => {
            let inp = load(&io)?;
            let text = sweep(&inp, &axes)?;
            emit(&inp.output, &text)
        }
        Command::Corpus { seed, blocks, nodes, mem_prob, output } => corpus(seed, blocks, nodes, mem_prob, &output),
    }
}
