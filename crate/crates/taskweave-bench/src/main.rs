use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use taskweave::frontend::{Backend, Strategy, DEFAULT_GRAINSIZE};
use taskweave::mesh::Mesh;
use taskweave::scheduler::Scheduler;
use taskweave::smooth::DEFAULT_SMOOTH_GRAINSIZE;
use taskweave_bench::{
    quality_histogram, run_delaunay, run_smoothing_bench, run_synthetic, summary_row, verify,
    write_csv, write_histogram, BenchRecord, Calibration, DelaunayConfig, SmoothingConfig,
    SyntheticSpec,
};

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum WorkloadArg {
    Delaunay,
    Smoothing,
    Synthetic,
}

impl WorkloadArg {
    fn name(self) -> &'static str {
        match self {
            WorkloadArg::Delaunay => "delaunay",
            WorkloadArg::Smoothing => "smoothing",
            WorkloadArg::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Workstealing,
    Sequential,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Flat,
    #[value(name = "2level")]
    TwoLevel,
    Hierarchical,
    Sequential,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Flat => Strategy::Flat,
            StrategyArg::TwoLevel => Strategy::TwoLevel,
            StrategyArg::Hierarchical => Strategy::Hierarchical,
            StrategyArg::Sequential => Strategy::Sequential,
        }
    }
}

/// Benchmark and verification driver for the taskweave runtime.
#[derive(Debug, Parser)]
#[command(name = "taskweave-bench", version, about)]
struct Cli {
    /// Workload to run.
    #[arg(long, value_enum)]
    workload: WorkloadArg,

    /// Execution backend.
    #[arg(long, value_enum, default_value = "workstealing")]
    backend: BackendArg,

    /// Loop strategy; omitted runs every strategy that fits the backend.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,

    /// Worker threads (default: $TASKWEAVE_THREADS, else 4).
    #[arg(long)]
    threads: Option<usize>,

    /// Chunk size for parallel-for workloads.
    #[arg(long)]
    grainsize: Option<usize>,

    /// Comma-separated grainsize list; one configuration per value.
    #[arg(long, value_delimiter = ',')]
    grainsize_scan: Vec<usize>,

    /// Elements each scheduling task hands to refinement per round.
    #[arg(long, default_value_t = 64)]
    schedule_limit: usize,

    /// Comma-separated schedule-limit list; one configuration per value.
    #[arg(long, value_delimiter = ',')]
    schedule_limit_scan: Vec<usize>,

    /// Refinement: split triangles larger than this area.
    #[arg(long, default_value_t = 1e-3)]
    max_area: f64,

    /// Refinement: split triangles with a smaller minimum angle (degrees).
    #[arg(long, default_value_t = 0.0)]
    min_angle: f64,

    /// Smoothing passes.
    #[arg(long, default_value_t = 5)]
    passes: usize,

    /// Synthetic workload: number of loop iterations.
    #[arg(long, default_value_t = 100_000)]
    n: usize,

    /// Synthetic workload: busy time per iteration.
    #[arg(long, default_value_t = 0)]
    cost_ns: u64,

    /// Repetitions per configuration.
    #[arg(long, default_value_t = 10)]
    reps: u32,

    /// Seed for workload inputs.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Quality-histogram bin count.
    #[arg(long, default_value_t = 32)]
    bins: usize,

    /// Write records to this file instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Export the final mesh of the last run.
    #[arg(long)]
    mesh_out: Option<PathBuf>,

    /// Write the final mesh's mean-ratio histogram.
    #[arg(long)]
    histogram: Option<PathBuf>,

    /// Run the invariant suite instead of benchmarking.
    #[arg(long)]
    verify: bool,

    /// With --verify: leave a lock held so the residue check must trip.
    #[arg(long)]
    inject_fault: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn effective_threads(cli: &Cli) -> usize {
    if cli.backend == BackendArg::Sequential {
        return 1;
    }
    cli.threads
        .or_else(|| {
            std::env::var("TASKWEAVE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(4)
        .max(1)
}

fn run(cli: Cli) -> Result<i32> {
    let threads = effective_threads(&cli);

    if cli.verify {
        let report = verify(
            cli.workload.name(),
            threads,
            cli.seed,
            cli.passes,
            cli.inject_fault,
        )?;
        for c in &report.checks {
            println!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        return Ok(if report.all_passed() { 0 } else { 2 });
    }

    let sched = match cli.backend {
        BackendArg::Workstealing => Some(Arc::new(Scheduler::start(threads)?)),
        BackendArg::Sequential => None,
    };

    let strategies: Vec<Strategy> = match (cli.strategy, cli.backend) {
        (Some(s), _) => vec![s.into()],
        (None, BackendArg::Sequential) => vec![Strategy::Sequential],
        (None, BackendArg::Workstealing) => {
            vec![Strategy::Flat, Strategy::TwoLevel, Strategy::Hierarchical]
        }
    };

    let mut rows: Vec<BenchRecord> = Vec::new();
    let mut last_mesh: Option<Arc<Mesh>> = None;

    match cli.workload {
        WorkloadArg::Synthetic => {
            let cal = Calibration::measure();
            let grainsizes = scan_or(&cli.grainsize_scan, cli.grainsize, DEFAULT_GRAINSIZE);
            for &g in &grainsizes {
                for &strategy in &strategies {
                    let spec = SyntheticSpec {
                        n: cli.n,
                        cost_ns: cli.cost_ns,
                        grainsize: g,
                        strategy,
                    };
                    let mut config_rows = Vec::new();
                    for rep in 0..cli.reps {
                        config_rows.push(run_synthetic(
                            backend(&sched),
                            threads,
                            &spec,
                            &cal,
                            rep as i64,
                        )?);
                    }
                    push_config(&mut rows, config_rows);
                }
            }
        }
        WorkloadArg::Delaunay => {
            let limits = scan_or(&cli.schedule_limit_scan, Some(cli.schedule_limit), 64);
            for &limit in &limits {
                let cfg = DelaunayConfig {
                    max_area: cli.max_area,
                    min_angle: cli.min_angle,
                    schedule_limit: limit,
                    seed: cli.seed,
                };
                let mut config_rows = Vec::new();
                for rep in 0..cli.reps {
                    let (rec, mesh) = run_delaunay(sched.as_ref(), threads, &cfg, rep as i64)?;
                    config_rows.push(rec);
                    last_mesh = Some(mesh);
                }
                push_config(&mut rows, config_rows);
            }
        }
        WorkloadArg::Smoothing => {
            let grainsizes = scan_or(&cli.grainsize_scan, cli.grainsize, DEFAULT_SMOOTH_GRAINSIZE);
            for &g in &grainsizes {
                for &strategy in &strategies {
                    let cfg = SmoothingConfig {
                        max_area: cli.max_area,
                        passes: cli.passes,
                        grainsize: g,
                        seed: cli.seed,
                    };
                    let mut config_rows = Vec::new();
                    for rep in 0..cli.reps {
                        let (rec, mesh, _) = run_smoothing_bench(
                            backend(&sched),
                            strategy,
                            threads,
                            &cfg,
                            rep as i64,
                        )?;
                        config_rows.push(rec);
                        last_mesh = Some(mesh);
                    }
                    push_config(&mut rows, config_rows);
                }
            }
        }
    }

    match &cli.csv {
        Some(path) => {
            let mut f = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_csv(&rows, &mut f)?;
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&rows, &mut stdout.lock())?;
        }
    }

    if let Some(path) = &cli.mesh_out {
        let mesh = last_mesh
            .as_ref()
            .context("--mesh-out needs a mesh workload")?;
        let mut f = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        f.write_all(mesh.export_string()?.as_bytes())?;
    }

    if let Some(path) = &cli.histogram {
        let mesh = last_mesh
            .as_ref()
            .context("--histogram needs a mesh workload")?;
        let h = quality_histogram(mesh, cli.bins)?;
        let mut f = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        write_histogram(&h, &mut f)?;
    }

    if let Some(s) = sched {
        s.shutdown()?;
    }
    Ok(0)
}

fn backend(sched: &Option<Arc<Scheduler>>) -> Backend<'_> {
    match sched {
        Some(s) => Backend::WorkStealing(s),
        None => Backend::Sequential,
    }
}

fn scan_or(scan: &[usize], single: Option<usize>, default: usize) -> Vec<usize> {
    if !scan.is_empty() {
        scan.to_vec()
    } else {
        vec![single.unwrap_or(default)]
    }
}

fn push_config(rows: &mut Vec<BenchRecord>, config_rows: Vec<BenchRecord>) {
    let summary = summary_row(&config_rows);
    rows.extend(config_rows);
    rows.push(summary);
}
