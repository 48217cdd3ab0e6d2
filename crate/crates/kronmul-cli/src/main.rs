//! `kronmul` — run, benchmark, tune, and simulate Kronecker matrix-matrix
//! multiplication.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 parse error.

mod datagen;
mod runner;
mod spec;
mod table4;

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kronmul::{
    autotune, cache_append, cache_lookup, enumerate_configs, sliced_kronmatmul, CacheRecord,
    CostMode, DistPlan, Error, FactorChain, OpCounters, ProcGrid, Result, Scalar, TileConfig,
};

use crate::runner::{run_one, Algo, RunOptions, RunRecord, CSV_HEADER};
use crate::spec::{parse_factors, ProblemSpec};

#[derive(Parser)]
#[command(name = "kronmul", version, about = "Transpose-free Kronecker matrix-matrix multiplication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem with one algorithm.
    Run(RunArgs),
    /// Run a preset suite of problems and emit one CSV row each.
    Bench(BenchArgs),
    /// Search tile configurations for the best-performing one.
    Tune(TuneArgs),
    /// Simulate multi-worker execution and report communication volume.
    Dist(DistArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Naive,
    Shuffle,
    Ftmmt,
    Sliced,
    Fused,
    Dist,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Naive => Algo::Naive,
            AlgoArg::Shuffle => Algo::Shuffle,
            AlgoArg::Ftmmt => Algo::Ftmmt,
            AlgoArg::Sliced => Algo::Sliced,
            AlgoArg::Fused => Algo::Fused,
            AlgoArg::Dist => Algo::Dist,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostModelArg {
    Wall,
    Counter,
}

#[derive(Args)]
struct CommonArgs {
    /// Number of input rows M.
    #[arg(short)]
    m: usize,
    /// Factor shapes, e.g. "8^5" or "52x50,65x20" or "2x3^3,5".
    #[arg(short)]
    f: String,
    /// Element type.
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
    /// RNG seed for input data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw real-valued data in [-1, 1) instead of small integers.
    #[arg(long)]
    real: bool,
    /// Append CSV rows to this file instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Algorithm to run.
    #[arg(long, value_enum, default_value = "sliced")]
    algo: AlgoArg,
    /// Check the output against a reference computation.
    #[arg(long)]
    verify: bool,
    /// Tile sizes: tileM,tileK,tileP,tileQ,regK,regP,regQ.
    #[arg(long, value_delimiter = ',')]
    tile: Option<Vec<usize>>,
    /// Number of factors applied per fused pass.
    #[arg(long, default_value_t = 1)]
    fused: usize,
    /// Worker grid as GMxGK (dist only).
    #[arg(long)]
    grid: Option<String>,
    /// Factors applied per communication round (dist only).
    #[arg(long, default_value_t = 1)]
    local: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark suite name.
    #[arg(long, default_value = "table4-desk")]
    suite: String,
    /// Comma-separated 1-based row numbers to run (default: all).
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    /// Algorithms to run per row.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = vec![AlgoArg::Sliced, AlgoArg::Shuffle, AlgoArg::Ftmmt]
    )]
    algo: Vec<AlgoArg>,
    /// Element type.
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
    /// RNG seed for input data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw real-valued data instead of small integers.
    #[arg(long)]
    real: bool,
    /// Skip output verification (on by default for the suite).
    #[arg(long)]
    no_verify: bool,
    /// Append CSV rows to this file instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scratch budget in bytes per tile.
    #[arg(long, default_value_t = kronmul::DEFAULT_SCRATCH_BYTES)]
    budget: usize,
    /// How candidates are scored.
    #[arg(long, value_enum, default_value = "counter")]
    cost_model: CostModelArg,
    /// Timed repetitions per candidate in wall mode.
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Reuse and record winners in this cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct DistArgs {
    /// Number of input rows M (ignored with --scenario).
    #[arg(short, default_value_t = 1)]
    m: usize,
    /// Factor shapes (ignored with --scenario).
    #[arg(short, default_value = "")]
    f: String,
    /// Worker grid as GMxGK.
    #[arg(long)]
    grid: Option<String>,
    /// Factors applied per communication round.
    #[arg(long, default_value_t = 1)]
    local: usize,
    /// CSV file of scenarios: m,p,q,n,gm,gk,local,dtype,seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Write a per-message trace CSV to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Element type (ignored with --scenario).
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Dtype,
    /// RNG seed for input data (ignored with --scenario).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check the gathered output against the reference computation.
    #[arg(long)]
    verify: bool,
    /// Append CSV rows to this file instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_grid(text: &str) -> Result<ProcGrid> {
    let (gm, gk) = text.split_once('x').ok_or_else(|| Error::Parse {
        pos: 0,
        msg: format!("grid must look like GMxGK, got {text:?}"),
    })?;
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Parse {
            pos: 0,
            msg: format!("invalid grid extent {s:?}"),
        })
    };
    Ok(ProcGrid {
        gm: num(gm)?,
        gk: num(gk)?,
    })
}

fn parse_tile(values: &[usize]) -> Result<TileConfig> {
    if values.len() != 7 {
        return Err(Error::Parse {
            pos: 0,
            msg: format!("--tile needs 7 values, got {}", values.len()),
        });
    }
    Ok(TileConfig {
        tile_m: values[0],
        tile_k: values[1],
        tile_p: values[2],
        tile_q: values[3],
        reg_k: values[4],
        reg_p: values[5],
        reg_q: values[6],
    })
}

/// Print rows to stdout or append them (with a header on a fresh file) to
/// the `--csv` target.
fn emit_rows(csv: &Option<PathBuf>, rows: &[RunRecord]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Config(format!("csv output: {e}"));
    match csv {
        Some(path) => {
            let fresh = !path.exists();
            let mut f = File::options()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?;
            if fresh {
                writeln!(f, "{CSV_HEADER}").map_err(io_err)?;
            }
            for r in rows {
                writeln!(f, "{}", r.to_csv_row()).map_err(io_err)?;
            }
        }
        None => {
            println!("{CSV_HEADER}");
            for r in rows {
                println!("{}", r.to_csv_row());
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let spec = ProblemSpec {
        m: args.common.m,
        shapes: parse_factors(&args.common.f)?,
    };
    let opts = RunOptions {
        tile: args.tile.as_deref().map(parse_tile).transpose()?,
        fused: args.fused,
        grid: args.grid.as_deref().map(parse_grid).transpose()?,
        local: args.local,
        verify: args.verify,
        real: args.common.real,
    };
    let rec = match args.common.dtype {
        Dtype::F32 => run_one::<f32>(&spec, args.algo.into(), args.common.seed, &opts)?,
        Dtype::F64 => run_one::<f64>(&spec, args.algo.into(), args.common.seed, &opts)?,
    };
    emit_rows(&args.common.csv, &[rec])
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.suite != "table4-desk" {
        return Err(Error::Config(format!(
            "unknown suite {:?}; available: table4-desk",
            args.suite
        )));
    }
    let rows = table4::desk_rows();
    let selected: Vec<_> = rows
        .iter()
        .filter(|(idx, _)| args.rows.is_empty() || args.rows.contains(idx))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config("row filter matched no suite rows".into()));
    }
    let opts = RunOptions {
        verify: !args.no_verify,
        real: args.real,
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (idx, spec) in selected {
        for &algo in &args.algo {
            let res = match args.dtype {
                Dtype::F32 => run_one::<f32>(spec, algo.into(), args.seed, &opts),
                Dtype::F64 => run_one::<f64>(spec, algo.into(), args.seed, &opts),
            };
            match res {
                Ok(rec) => records.push(rec),
                Err(Error::Verify(msg)) => {
                    eprintln!("row {idx} ({}): {msg}", spec.canonical());
                    failures.push(*idx);
                }
                Err(e) => return Err(e),
            }
        }
    }
    emit_rows(&args.csv, &records)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Verify(format!(
            "{} suite row(s) failed verification: {failures:?}",
            failures.len()
        )))
    }
}

fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let spec = ProblemSpec {
        m: args.common.m,
        shapes: parse_factors(&args.common.f)?,
    };
    match args.common.dtype {
        Dtype::F32 => tune_typed::<f32>(args, &spec),
        Dtype::F64 => tune_typed::<f64>(args, &spec),
    }
}

fn tune_typed<T: Scalar>(args: &TuneArgs, spec: &ProblemSpec) -> Result<()> {
    let (x, chain) = datagen::gen_problem::<T>(spec, args.common.seed, args.common.real);
    let (p, q) = chain.uniform_shape().ok_or_else(|| {
        Error::Config("tuning needs a chain of identically shaped factors".into())
    })?;
    if let Some(path) = &args.cache {
        if let Some(hit) = cache_lookup(path, spec.m, p, q, chain.n(), T::DTYPE)? {
            let t = hit.candidate.tile;
            println!(
                "cached: tileM={} tileK={} tileP={} tileQ={} regK={} regP={} regQ={} fused={}",
                t.tile_m, t.tile_k, t.tile_p, t.tile_q, t.reg_k, t.reg_p, t.reg_q,
                hit.candidate.fused
            );
            return run_with_candidate(&x, &chain, spec, args, hit.candidate);
        }
    }
    let space = enumerate_configs(spec.m, p, q, chain.k(), args.budget, T::BYTES)?;
    let mode = match args.cost_model {
        CostModelArg::Wall => CostMode::Wall,
        CostModelArg::Counter => CostMode::Counter,
    };
    let result = autotune(&x, &chain, &space, args.trials, mode)?;
    let t = result.best.tile;
    println!(
        "best of {} candidates ({} disqualified): tileM={} tileK={} tileP={} tileQ={} regK={} \
         regP={} regQ={} fused={}",
        result.timings.len(),
        result.disqualified.len(),
        t.tile_m, t.tile_k, t.tile_p, t.tile_q, t.reg_k, t.reg_p, t.reg_q, result.best.fused
    );
    if let Some(path) = &args.cache {
        let record = CacheRecord {
            m: spec.m,
            p,
            q,
            n: chain.n(),
            dtype: T::DTYPE.to_string(),
            candidate: result.best,
        };
        cache_append(path, &record).map_err(|e| Error::Config(format!("cache write: {e}")))?;
    }
    run_with_candidate(&x, &chain, spec, args, result.best)
}

/// Re-run the winning configuration to produce the reported CSV row.
fn run_with_candidate<T: Scalar>(
    x: &kronmul::Matrix<T>,
    chain: &FactorChain<T>,
    spec: &ProblemSpec,
    args: &TuneArgs,
    candidate: kronmul::Candidate,
) -> Result<()> {
    let mut counters = OpCounters::default();
    let t0 = std::time::Instant::now();
    if candidate.fused > 1 {
        kronmul::fused_kronmatmul(
            x,
            chain,
            &kronmul::FuseConfig::new(candidate.fused, candidate.tile),
            &mut counters,
        )?;
    } else {
        sliced_kronmatmul(x, chain, Some(&candidate.tile), &mut counters)?;
    }
    let wall = t0.elapsed().as_secs_f64();
    let rec = RunRecord {
        spec: spec.canonical(),
        algorithm: if candidate.fused > 1 { "fused" } else { "sliced" },
        dtype: T::DTYPE,
        seed: args.common.seed,
        wall_ms: wall * 1e3,
        counters,
        gflops: if wall > 0.0 {
            2.0 * counters.macs as f64 / wall / 1e9
        } else {
            0.0
        },
        verified: Some(true),
        comm_total: None,
    };
    emit_rows(&args.common.csv, &[rec])
}

fn cmd_dist(args: &DistArgs) -> Result<()> {
    let mut records = Vec::new();
    if let Some(path) = &args.scenario {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("scenario file: {e}")))?;
        for sc in kronmul::Scenario::parse_file(&text)? {
            let spec = ProblemSpec {
                m: sc.m,
                shapes: vec![(sc.p, sc.q); sc.n],
            };
            let opts = RunOptions {
                grid: Some(ProcGrid {
                    gm: sc.gm,
                    gk: sc.gk,
                }),
                local: sc.local,
                verify: args.verify,
                ..Default::default()
            };
            records.push(match sc.dtype.as_str() {
                "f32" => run_one::<f32>(&spec, Algo::Dist, sc.seed, &opts)?,
                _ => run_one::<f64>(&spec, Algo::Dist, sc.seed, &opts)?,
            });
        }
    } else {
        let spec = ProblemSpec {
            m: args.m,
            shapes: parse_factors(&args.f)?,
        };
        let grid = args
            .grid
            .as_deref()
            .map(parse_grid)
            .transpose()?
            .ok_or_else(|| Error::Config("dist needs --grid GMxGK or --scenario".into()))?;
        let opts = RunOptions {
            grid: Some(grid),
            local: args.local,
            verify: args.verify,
            ..Default::default()
        };
        if args.trace.is_some() {
            // extra simulator pass that records every message
            match args.dtype {
                Dtype::F32 => write_trace::<f32>(&spec, grid, args)?,
                Dtype::F64 => write_trace::<f64>(&spec, grid, args)?,
            }
        }
        records.push(match args.dtype {
            Dtype::F32 => run_one::<f32>(&spec, Algo::Dist, args.seed, &opts)?,
            Dtype::F64 => run_one::<f64>(&spec, Algo::Dist, args.seed, &opts)?,
        });
    }
    emit_rows(&args.csv, &records)
}

fn write_trace<T: Scalar>(spec: &ProblemSpec, grid: ProcGrid, args: &DistArgs) -> Result<()> {
    let (x, chain) = datagen::gen_problem::<T>(spec, args.seed, false);
    let plan = DistPlan::new(spec.m, &chain, grid, args.local)?;
    let (_, ledger) = kronmul::dist_kronmatmul(&x, &chain, &plan)?;
    let path = args.trace.as_ref().expect("trace path checked by caller");
    let f = File::create(path).map_err(|e| Error::Config(format!("trace output: {e}")))?;
    ledger
        .write_trace(f)
        .map_err(|e| Error::Config(format!("trace output: {e}")))
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Verify(_) => 1,
        Error::Parse { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Dist(args) => cmd_dist(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
