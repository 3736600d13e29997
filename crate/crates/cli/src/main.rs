//! Command-line front end: compile circuits to schedules, verify them,
//! run distillation Monte-Carlo, and print resource estimates.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blockforge::ancilla::{bell_spec, logical_plus_spec, logical_zero_spec, psi_spec, AncillaSpec};
use blockforge::clifford::{parse_circuit, CliffordOp, Stage};
use blockforge::css::{parse_code_file, CssCode};
use blockforge::distill::{
    monte_carlo, render_report, resource_estimate, two_stage_protocol, ClassicalCode, NoiseModel,
};
use blockforge::gf2::{BitMatrix, BitVec};
use blockforge::schedule::{
    compile_knill, compile_steane, dump_schedule, fault_injection_sweep, parse_schedule,
    verify_schedule, RoundKind, Schedule,
};

#[derive(Parser)]
#[command(name = "blockforge", version, about = "Constant-round fault-tolerant Clifford schedules on CSS block codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Knill,
    Steane,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a logical Clifford circuit into a fault-tolerant schedule.
    Compile {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        code: PathBuf,
        #[arg(long, value_enum)]
        backend: Backend,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompile a schedule dump and run noiseless verification; with
    /// --sweep, also the exhaustive single-fault injection sweep.
    Verify {
        schedule: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        sweep: bool,
    },
    /// Two-stage distillation Monte-Carlo for a named ancilla spec.
    Distill {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        spec: String,
        #[arg(long)]
        c1: PathBuf,
        #[arg(long)]
        c2: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resource table for a distillation protocol on a code.
    Resources {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        c1: PathBuf,
        #[arg(long)]
        c2: PathBuf,
        #[arg(long, default_value = "zero")]
        spec: String,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_code(path: &PathBuf) -> Result<CssCode, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_code_file(&text).map_err(|e| e.to_string())
}

fn load_ccode(path: &PathBuf) -> Result<ClassicalCode, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ClassicalCode::parse(&text).map_err(|e| e.to_string())
}

/// Named ancilla specs: zero | plus | bell | psi_p:<mask> | psi_h:<mask> |
/// psi_c:<matrix file>; masks are '0'/'1' strings over the code's k.
fn named_spec(name: &str, code: &CssCode) -> Result<AncillaSpec, String> {
    let k = code.k();
    let parse_mask = |s: &str| -> Result<BitVec, String> {
        if s.len() != k {
            return Err(format!("mask must have {k} bits"));
        }
        Ok(BitVec::from_bits(&s.chars().map(|c| c == '1').collect::<Vec<_>>()))
    };
    match name {
        "zero" => Ok(logical_zero_spec(k)),
        "plus" => Ok(logical_plus_spec(k)),
        "bell" => Ok(bell_spec(k)),
        _ => {
            if let Some(m) = name.strip_prefix("psi_p:") {
                psi_spec(&Stage::P { mask: parse_mask(m)? }, k).map_err(|e| e.to_string())
            } else if let Some(m) = name.strip_prefix("psi_h:") {
                psi_spec(&Stage::H { mask: parse_mask(m)? }, k).map_err(|e| e.to_string())
            } else if let Some(path) = name.strip_prefix("psi_c:") {
                let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
                let u = BitMatrix::from_text(&text).map_err(|e| e.to_string())?;
                psi_spec(&Stage::C { u }, k).map_err(|e| e.to_string())
            } else {
                Err(format!("unknown spec '{name}'"))
            }
        }
    }
}

fn ancilla_inventory(sched: &Schedule) -> String {
    let mut counts: std::collections::BTreeMap<&'static str, usize> = Default::default();
    for r in &sched.rounds {
        *counts.entry(r.ancilla.family.as_str()).or_default() += 1;
    }
    counts
        .iter()
        .map(|(f, c)| format!("{f} x{c}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Compile {
            circuit,
            code,
            backend,
            out,
        } => {
            let code = load_code(&code)?;
            let text = fs::read_to_string(&circuit).map_err(|e| format!("{}: {e}", circuit.display()))?;
            let gates = parse_circuit(&text).map_err(|e| e.to_string())?;
            let k = match backend {
                Backend::Knill => code.k(),
                Backend::Steane => {
                    if code.k() % 2 != 0 {
                        return Err(format!("steane backend needs an even-k code, got k={}", code.k()));
                    }
                    code.k() / 2
                }
            };
            let target = CliffordOp::from_gates(k, &gates).map_err(|e| e.to_string())?;
            let sched = match backend {
                Backend::Knill => compile_knill(&target, &code),
                Backend::Steane => compile_steane(&target, &code),
            }
            .map_err(|e| e.to_string())?;
            let dump = dump_schedule(&sched);
            match out {
                Some(p) => fs::write(&p, dump).map_err(|e| format!("{}: {e}", p.display()))?,
                None => print!("{dump}"),
            }
            let bound = match sched.kind {
                RoundKind::Knill => 11,
                RoundKind::Steane => 22,
            };
            eprintln!(
                "compiled {} rounds (bound {bound}); ancillas: {}",
                sched.round_count(),
                ancilla_inventory(&sched)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { schedule, seed, sweep } => {
            let text = fs::read_to_string(&schedule).map_err(|e| format!("{}: {e}", schedule.display()))?;
            let sched = parse_schedule(&text).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = verify_schedule(&sched, &mut rng).map_err(|e| e.to_string())?;
            for (name, ok) in &report.cases {
                println!("{}\t{}", if *ok { "pass" } else { "FAIL" }, name);
            }
            let mut ok = report.all_pass();
            if sweep {
                let sr = fault_injection_sweep(&sched, seed).map_err(|e| e.to_string())?;
                println!("fault-sweep\t{} locations\t{} failures", sr.locations, sr.failures.len());
                for f in &sr.failures {
                    println!("FAIL\t{f}");
                }
                ok &= sr.failures.is_empty();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Distill {
            code,
            spec,
            c1,
            c2,
            p,
            trials,
            seed,
            out,
        } => {
            let code = load_code(&code)?;
            let spec = named_spec(&spec, &code)?;
            let c1 = load_ccode(&c1)?;
            let c2 = load_ccode(&c2)?;
            let proto = two_stage_protocol(&code, &spec, &c1, &c2, seed).map_err(|e| e.to_string())?;
            if proto.distance_warning {
                eprintln!(
                    "warning: classical distance does not exceed the code distance (d_c1={}, d_c2={})",
                    proto.c1.d_c, proto.c2.d_c
                );
            }
            let report = monte_carlo(&proto, &NoiseModel::uniform(p), trials, seed).map_err(|e| e.to_string())?;
            let rendered = render_report(&report, &proto.c1, &proto.c2);
            match out {
                Some(path) => fs::write(&path, rendered).map_err(|e| format!("{}: {e}", path.display()))?,
                None => print!("{rendered}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Resources {
            code,
            c1,
            c2,
            spec,
            p,
            trials,
            seed,
        } => {
            let code = load_code(&code)?;
            let spec = named_spec(&spec, &code)?;
            let c1 = load_ccode(&c1)?;
            let c2 = load_ccode(&c2)?;
            let proto = two_stage_protocol(&code, &spec, &c1, &c2, seed).map_err(|e| e.to_string())?;
            let y = if p > 0.0 {
                let report = monte_carlo(&proto, &NoiseModel::uniform(p), trials, seed).map_err(|e| e.to_string())?;
                report.yield_rate(&proto.c1, &proto.c2)
            } else {
                (c1.k_c * c2.k_c) as f64 / (c1.n_c * c2.n_c) as f64
            };
            let table = resource_estimate(&proto, y);
            print!("{}", table.render());
            println!("k/n\t{}/{}", code.k(), code.n());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
