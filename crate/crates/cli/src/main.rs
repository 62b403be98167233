use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gpmro_cli::config::SeedList;
use gpmro_cli::{drive, plot, synthetic, tau, Benchmark, ExperimentConfig, Profile};

#[derive(Parser)]
#[command(name = "gpmro", version, about = "Robust mixed-strategy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON document overriding the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: results/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, replacing the configured list.
    #[arg(long)]
    seeds: Option<SeedList>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
}

#[derive(Subcommand)]
enum Command {
    /// Random GP sample on [-1, 1]², all algorithms against each other.
    #[command(name = "synth-1d")]
    Synth1d(Common),
    /// Perturbed polynomial, all algorithms against each other.
    SynthPoly(Common),
    /// Precompute the driving policy over the scenario grid.
    DrivePrecompute(Common),
    /// Closed-loop overtaking episodes, mixed policy against max-min.
    DriveClosedLoop {
        #[command(flatten)]
        common: Common,
        /// Use this policy CSV instead of precomputing.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Median and interquartile band of performance curves as SVG.
    Plot {
        /// Curve CSVs, or result directories to search for them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "performance.svg")]
        out: PathBuf,
        #[arg(long, default_value = "Performance")]
        title: String,
    },
    /// Maximin value and strategy of a payoff table CSV.
    OracleTau {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// Where to write the maximin strategy.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(benchmark: Benchmark, c: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let config = ExperimentConfig::load(benchmark, c.profile, c.config.as_deref(), c.seeds.clone().map(|s| s.0))?;
    Ok((config, c.out.clone().unwrap_or_default()))
}

fn out_dir(given: PathBuf, command: &str) -> PathBuf {
    if given.as_os_str().is_empty() {
        PathBuf::from("results").join(command)
    } else {
        given
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let start = Instant::now();
    let ok = match cli.command {
        Command::Synth1d(c) => synth(Benchmark::Synth1d, "synth-1d", &c)?,
        Command::SynthPoly(c) => synth(Benchmark::SynthPoly, "synth-poly", &c)?,
        Command::DrivePrecompute(c) => {
            let (config, out) = load(Benchmark::Drive, &c)?;
            let out = out_dir(out, "drive-precompute");
            let m = drive::run_drive_precompute(&config, &out, "drive-precompute")?;
            for r in &m.runs {
                match (&r.error, r.queries) {
                    (Some(e), _) => eprintln!("{} seed {}: FAILED: {e}", r.label, r.seed),
                    (None, Some(q)) => println!("{} seed {}: {q} queries", r.label, r.seed),
                    (None, None) => {}
                }
            }
            println!("wrote {}", out.display());
            m.all_ok()
        }
        Command::DriveClosedLoop { common, policy } => {
            let (config, out) = load(Benchmark::Drive, &common)?;
            let out = out_dir(out, "drive-closed-loop");
            let (m, rows) = drive::run_drive_closed_loop(&config, &out, "drive-closed-loop", policy.as_deref())?;
            println!("{:>6} {:>8} {:>10} {:>12} {:>12}", "seed", "policy", "overtakes", "av final x", "hv final x");
            for r in &rows {
                println!(
                    "{:>6} {:>8} {:>5}/{:<4} {:>12.1} {:>12.1}",
                    r.seed, r.policy, r.overtakes, r.episodes, r.mean_av_final_x, r.mean_hv_final_x
                );
            }
            for r in m.runs.iter().filter(|r| !r.ok) {
                eprintln!("seed {}: FAILED: {}", r.seed, r.error.as_deref().unwrap_or(""));
            }
            println!("wrote {}", out.display());
            m.all_ok()
        }
        Command::Plot { inputs, out, title } => {
            let series = plot::plot(&inputs, &out, &title)?;
            println!("{} series -> {}", series.len(), out.display());
            true
        }
        Command::OracleTau { table, epsilon, out } => {
            let sol = tau::oracle_tau(&table, epsilon, out.as_deref())?;
            println!("tau >= {} (certified upper bound {}, {} iterations)", sol.value, sol.upper_bound, sol.iterations);
            for &(x, p) in sol.strategy.support() {
                println!("  x{x}: {p}");
            }
            true
        }
    };
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(ok)
}

fn synth(benchmark: Benchmark, command: &str, c: &Common) -> anyhow::Result<bool> {
    let (config, out) = load(benchmark, c)?;
    let out = out_dir(out, command);
    let m = synthetic::run_synthetic(&config, &out, command)?;
    for (alg, median) in synthetic::final_medians(&config, &m) {
        println!("{:<14} median final performance {median:.4}", alg.name());
    }
    for r in m.runs.iter().filter(|r| !r.ok) {
        eprintln!("{} seed {}: FAILED: {}", r.label, r.seed, r.error.as_deref().unwrap_or(""));
    }
    println!("wrote {} ({} runs, {} failed)", out.display(), m.runs.len(), m.failures());
    Ok(m.all_ok())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
