//! Command-line front end behind the `chr` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::abstract_engine::{final_stores, run_random, AbstractStore, Answer, Limits};
use crate::concurrent::{run_concurrent, EngineConfig};
use crate::corpus::goals_line;
use crate::goal_engine::{run_sequential, Policy, Run, SeqConfig, Status};
use crate::syntax::{parse_goals, parse_program, Program};
use crate::term::Constraint;
use crate::verify::{check_final, verify_trace_text};

#[derive(Debug, Parser)]
#[command(name = "chr", version, about = "Run Constraint Handling Rules programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a program on a goal sequence and print the final store.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Nondeterministic rewriting, one random firing at a time.
    Abstract,
    /// Goal-based interpreter.
    Sequential,
    /// Goal-based interpreter with a pool of worker threads.
    Concurrent,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Program file.
    pub program: PathBuf,
    /// Comma-separated goals. Defaults to the program's `% goals:` line.
    #[arg(long, conflicts_with = "goals_file")]
    pub goals: Option<String>,
    /// File holding the goals.
    #[arg(long, value_name = "PATH")]
    pub goals_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Engine::Sequential)]
    pub engine: Engine,
    /// Worker threads for the concurrent engine.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, env = "CHR_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "N")]
    pub max_steps: Option<u64>,
    /// Goal ordering of the sequential engine.
    #[arg(long, default_value_t = Policy::Fifo)]
    pub policy: Policy,
    /// Write the derivation trace here.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Check the run's trace and final state.
    #[arg(long)]
    pub verify: bool,
    /// Also write the final store dump to PATH.
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    pub dump_store: Option<Option<PathBuf>>,
    /// Print every final store the abstract semantics can reach.
    #[arg(long)]
    pub oracle: bool,
    /// Run N times with seeds seed..seed+N-1 and report the distinct stores.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub repeat: Option<u64>,
    /// Check the active-instance invariant after every sequential step.
    #[arg(long)]
    pub check_invariants: bool,
}

/// Exit codes.
pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const INVARIANT_BREACH: i32 = 2;

/// Parses `argv` and runs the command.
pub fn main_with(argv: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { FAILURE } else { OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => run(&args, out, err),
    }
}

struct Outcome {
    dump: String,
    answer: Answer,
    status: Status,
    trace: Option<String>,
    failed_checks: usize,
}

enum Problem {
    Fail(String),
    Breach(String),
}

/// Executes `chr run`.
pub fn run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match run_inner(args, out, err) {
        Ok(code) => code,
        Err(Problem::Fail(m)) => {
            let _ = writeln!(err, "error: {m}");
            FAILURE
        }
        Err(Problem::Breach(m)) => {
            let _ = writeln!(err, "error: {m}");
            INVARIANT_BREACH
        }
    }
}

fn read(path: &Path) -> Result<String, Problem> {
    std::fs::read_to_string(path).map_err(|e| Problem::Fail(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Problem> {
    std::fs::write(path, text).map_err(|e| Problem::Fail(format!("cannot write {}: {e}", path.display())))
}

fn load(args: &RunArgs) -> Result<(Program, Vec<Constraint>), Problem> {
    let source = read(&args.program)?;
    let program = parse_program(&source).map_err(|e| Problem::Fail(format!("{}: {e}", args.program.display())))?;
    let goals_text = match (&args.goals, &args.goals_file) {
        (Some(g), _) => g.clone(),
        (None, Some(path)) => read(path)?,
        (None, None) => goals_line(&source).unwrap_or("").to_string(),
    };
    let goals = parse_goals(&goals_text).map_err(|e| Problem::Fail(format!("goals: {e}")))?;
    Ok((program, goals))
}

fn run_inner(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Problem> {
    let (p, goals) = load(args)?;
    if args.oracle {
        return oracle(&p, &goals, args, out);
    }
    let io = |e: std::io::Error| Problem::Fail(e.to_string());
    let Some(n) = args.repeat else {
        let o = once(&p, &goals, args, args.seed, err)?;
        if let Some(path) = &args.trace {
            write_file(path, o.trace.as_deref().unwrap_or(""))?;
        }
        if let Some(Some(path)) = &args.dump_store {
            write_file(path, &o.dump)?;
        }
        out.write_all(o.dump.as_bytes()).map_err(io)?;
        return Ok(report(&o, err));
    };
    let mut seen: BTreeMap<Answer, u64> = BTreeMap::new();
    let mut code = OK;
    for seed in args.seed..args.seed.saturating_add(n) {
        let o = once(&p, &goals, args, seed, err)?;
        if report(&o, err) != OK {
            let _ = writeln!(err, "seed {seed} failed");
            code = FAILURE;
        }
        *seen.entry(o.answer).or_default() += 1;
    }
    writeln!(out, "{} distinct final stores in {n} runs", seen.len()).map_err(io)?;
    for (answer, count) in &seen {
        writeln!(out, "{answer} x{count}").map_err(io)?;
    }
    Ok(code)
}

fn report(o: &Outcome, err: &mut dyn Write) -> i32 {
    match o.status {
        Status::Done if o.failed_checks == 0 => OK,
        Status::Done => {
            let _ = writeln!(err, "verification failed");
            FAILURE
        }
        s => {
            let _ = writeln!(err, "run ended with status {s}");
            FAILURE
        }
    }
}

fn once(p: &Program, goals: &[Constraint], args: &RunArgs, seed: u64, err: &mut dyn Write) -> Result<Outcome, Problem> {
    let max_steps = args.max_steps.or(Some(1_000_000));
    let run: Run = match args.engine {
        Engine::Abstract => return abstract_once(p, goals, args, seed, max_steps, err),
        Engine::Sequential => {
            let cfg = SeqConfig {
                policy: args.policy,
                max_steps,
                check_invariants: args.check_invariants,
            };
            run_sequential(goals.to_vec(), p, cfg).map_err(|b| Problem::Breach(b.to_string()))?
        }
        Engine::Concurrent => run_concurrent(
            goals.to_vec(),
            p,
            EngineConfig {
                workers: args.workers as usize,
                seed,
                max_steps,
            },
        ),
    };
    let text = run.trace.to_text();
    let mut failed_checks = 0;
    if args.verify {
        let mut verdicts = verify_trace_text(&text, goals, p);
        if run.status() == Status::Done {
            verdicts.push(check_final(&run.state, &run.history, p));
        }
        for v in verdicts {
            let _ = writeln!(err, "{v}");
            failed_checks += usize::from(!v.passed);
        }
    }
    Ok(Outcome {
        dump: run.dump(),
        answer: run.answer(),
        status: run.status(),
        trace: Some(text),
        failed_checks,
    })
}

fn abstract_dump(s: &AbstractStore) -> String {
    let theta = s.theta().unwrap_or_default();
    let mut out = String::new();
    let mut eqs = Vec::new();
    for (tag, c) in s.items() {
        match c {
            Constraint::Chr(c) => {
                let _ = writeln!(out, "{}#{tag}", theta.resolve_chr(c));
            }
            Constraint::Eq(e) => eqs.push(e.to_string()),
        }
    }
    eqs.sort();
    for e in eqs {
        out.push_str(&e);
        out.push('\n');
    }
    out
}

fn abstract_once(
    p: &Program,
    goals: &[Constraint],
    args: &RunArgs,
    seed: u64,
    max_steps: Option<u64>,
    err: &mut dyn Write,
) -> Result<Outcome, Problem> {
    let start = AbstractStore::new(goals.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = max_steps.unwrap_or(u64::MAX).min(usize::MAX as u64) as usize;
    let (store, firings, status) = match run_random(&start, p, &mut rng, limit) {
        Ok((s, f)) => {
            let status = if s.theta().is_some() { Status::Done } else { Status::Failed };
            (s, f, status)
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            (start, Vec::new(), Status::StepLimit)
        }
    };
    let mut trace = String::from("# chr-abstract\n");
    for (i, f) in firings.iter().enumerate() {
        let _ = writeln!(trace, "{} rule={} heads={:?} phi={}", i + 1, p.rules[f.rule].name, f.heads, f.phi);
    }
    let mut failed_checks = 0;
    if args.verify && status == Status::Done {
        let ok = crate::abstract_engine::is_final(&store, p);
        let _ = writeln!(err, "{} check-final", if ok { "PASS" } else { "FAIL" });
        failed_checks += usize::from(!ok);
    }
    Ok(Outcome {
        dump: abstract_dump(&store),
        answer: store.answer(),
        status,
        trace: Some(trace),
        failed_checks,
    })
}

fn oracle(p: &Program, goals: &[Constraint], args: &RunArgs, out: &mut dyn Write) -> Result<i32, Problem> {
    let mut limits = Limits::default();
    if let Some(m) = args.max_steps {
        limits.max_depth = m as usize;
    }
    let answers = final_stores(&AbstractStore::new(goals.iter().cloned()), p, limits)
        .map_err(|e| Problem::Fail(format!("oracle gave up: {e}")))?;
    let io = |e: std::io::Error| Problem::Fail(e.to_string());
    writeln!(out, "{} final stores", answers.len()).map_err(io)?;
    for a in &answers {
        writeln!(out, "{a}").map_err(io)?;
    }
    Ok(OK)
}
