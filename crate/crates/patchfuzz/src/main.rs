//! Command-line harness: `repair` drives a whole campaign against a test
//! directory and writes the report plus replayable artifacts; `exec` runs a
//! single input, optionally through a saved patch, for debugging.

use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use patchfuzz::coevolve::{Budget, CoevolveConfig, RepairState};
use patchfuzz::exec::{compile, ExecLimits, Outcome, Vm};
use patchfuzz::lang::{parse_program, refactor_conditionals, StmtId};
use patchfuzz::patch::detour::{detour_for, DetourTable};
use patchfuzz::patch::flat::{deserialize_patch, serialize_patch};
use patchfuzz::report::Report;
use patchfuzz::suite::{load_test_suite, save_tests};

#[derive(Parser)]
#[command(
    name = "patchfuzz",
    version,
    about = "Fuzzes patches against inputs until only credible repairs survive"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Repair a program against a test-suite directory.
    Repair(RepairArgs),
    /// Run a program on one input, optionally with a patch applied.
    Exec(ExecArgs),
}

#[derive(Args)]
struct RepairArgs {
    /// Program source file.
    program: PathBuf,
    /// Test-suite directory: <name>.in plus <name>.out or <name>.crashfree.
    #[arg(long)]
    tests: PathBuf,
    /// Stop condition: `<seconds>s` wall time, or `<executions>x` for
    /// deterministic runs.
    #[arg(long, default_value = "500000x")]
    budget: String,
    /// Campaign RNG seed. The RLANG_SEED environment variable overrides
    /// this flag.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Patch pool size at which slices switch to input fuzzing.
    #[arg(long, default_value_t = 10)]
    target: usize,
    /// Statement id of the known fix location; its rank lands in the report.
    #[arg(long)]
    known_fix_loc: Option<StmtId>,
    /// Artifact directory (default: `<program>.repair`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Patch-validation worker threads. Results are identical at any level.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-run step limit; exceeding it counts as a crash.
    #[arg(long, default_value_t = 20_000)]
    max_steps: u64,
}

#[derive(Args)]
struct ExecArgs {
    /// Program source file.
    program: PathBuf,
    /// File holding the raw input bytes.
    #[arg(long)]
    input: PathBuf,
    /// Flat patch file (as written to `patches/` by repair) to apply.
    #[arg(long)]
    patch: Option<PathBuf>,
    /// Per-run step limit.
    #[arg(long, default_value_t = 200_000)]
    max_steps: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help and --version land here.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match cli.cmd {
        Cmd::Repair(args) => cmd_repair(args),
        Cmd::Exec(args) => cmd_exec(args),
    }
}

fn usage(err: impl Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

macro_rules! try_usage {
    ($expr:expr, $($ctx:tt)+) => {
        match $expr {
            Ok(v) => v,
            Err(e) => return usage(format_args!("{}: {e}", format_args!($($ctx)+))),
        }
    };
}

fn cmd_repair(args: RepairArgs) -> ExitCode {
    let budget: Budget = match args.budget.parse() {
        Ok(b) => b,
        Err(e) => return usage(e),
    };
    let seed = match std::env::var("RLANG_SEED") {
        Ok(s) => try_usage!(s.parse::<u64>(), "RLANG_SEED `{s}` is not an integer"),
        Err(_) => args.seed,
    };
    let source =
        try_usage!(fs::read_to_string(&args.program), "cannot read {}", args.program.display());
    let tests = try_usage!(load_test_suite(&args.tests), "--tests {}", args.tests.display());

    let config = CoevolveConfig {
        seed,
        pool_target: args.target,
        budget,
        max_steps: args.max_steps,
        jobs: args.jobs.max(1),
        ..CoevolveConfig::default()
    };
    let mut st = match RepairState::new(&source, tests, config) {
        Ok(st) => st,
        Err(e) => return usage(e),
    };

    let mut log = Vec::new();
    st.run_campaign(|s| {
        eprintln!(
            "slice {:>3} {:<5} execs={:<8} pool={} killed={} oracle={}",
            s.slice,
            format!("{:?}", s.kind).to_lowercase(),
            s.executions,
            s.pool_live,
            s.killed_crash + s.killed_diff,
            s.oracle_tests,
        );
        log.push(s.clone());
    });

    let ranked = st.rank_patches();
    let report =
        Report::build(&st, &ranked, &args.program.display().to_string(), args.known_fix_loc);

    let out = args.out.unwrap_or_else(|| args.program.with_extension("repair"));
    let patches_dir = out.join("patches");
    try_usage!(fs::create_dir_all(&patches_dir), "cannot create {}", patches_dir.display());

    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    try_usage!(
        fs::write(out.join("report.json"), report_json + "\n"),
        "cannot write {}",
        out.join("report.json").display()
    );

    let mut lines = String::new();
    for s in &log {
        lines.push_str(&serde_json::to_string(s).expect("slice summary serializes"));
        lines.push('\n');
    }
    try_usage!(
        fs::write(out.join("log.jsonl"), lines),
        "cannot write {}",
        out.join("log.jsonl").display()
    );

    for (ix, r) in ranked.iter().enumerate() {
        let bytes = try_usage!(serialize_patch(&r.patch, &st.bc), "cannot encode patch {}", ix + 1);
        let path = patches_dir.join(format!("rank-{:03}.fpz", ix + 1));
        try_usage!(fs::write(&path, bytes), "cannot write {}", path.display());
    }

    let tests_out: Vec<_> = st.oracle.entries().iter().map(|e| e.test.clone()).collect();
    try_usage!(
        save_tests(&out.join("tests"), &tests_out),
        "cannot write {}",
        out.join("tests").display()
    );

    println!(
        "{} plausible, {} killed ({} crash, {} diff), {} executions, {} counter-examples",
        report.plausible.len(),
        report.overfit_crash_count + report.overfit_diff_count,
        report.overfit_crash_count,
        report.overfit_diff_count,
        report.executions,
        report.counter_examples,
    );
    for p in report.plausible.iter().take(5) {
        println!("  #{} {}@{} ({}): {}", p.rank, p.function, p.stmt_id, p.cf_distance, p.statement);
    }
    println!("report: {}", out.join("report.json").display());

    if report.plausible.is_empty() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_exec(args: ExecArgs) -> ExitCode {
    let source =
        try_usage!(fs::read_to_string(&args.program), "cannot read {}", args.program.display());
    let input = try_usage!(fs::read(&args.input), "cannot read {}", args.input.display());
    let parsed = match parse_program(&source) {
        Ok(p) => p,
        Err(e) => return usage(e),
    };
    let program = refactor_conditionals(&parsed);
    let bc = match compile(&program) {
        Ok(b) => b,
        Err(e) => return usage(e),
    };

    let table = match &args.patch {
        None => DetourTable::empty(),
        Some(path) => {
            let bytes = try_usage!(fs::read(path), "cannot read {}", path.display());
            let patch = try_usage!(deserialize_patch(&bytes, &bc), "{}", path.display());
            println!("patch: {}", patch.describe());
            try_usage!(detour_for(&bc, &patch), "{}", path.display())
        }
    };

    let r = Vm::new().run(&bc, &table, &input, ExecLimits::with_steps(args.max_steps));
    match r.outcome {
        Outcome::Normal(v) => println!("outcome: normal, exit {v}"),
        Outcome::Crash { kind, at } => {
            println!("outcome: crash, {kind:?} at statement {at}");
            if let Some(stmt) = program.stmt(at) {
                println!("   site: {stmt}");
            }
        }
    }
    println!(" output: {:?}", String::from_utf8_lossy(&r.output));
    println!("  steps: {}", r.steps_used);
    println!("  edges: {}", r.coverage.indices().count());
    ExitCode::SUCCESS
}
