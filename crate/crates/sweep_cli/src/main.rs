//! `grpo-lab`: command-line front end for the laboratory. Every
//! subcommand emits CSV, either to `--out` or to stdout.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use bandit_sim::{SimConfig, SimMode};
use clap::{Parser, Subcommand};
use meanfield::{Method, OdeConfig};
use noise_model::NoiseSpec;
use simplex_core::{BlockState, ProbVector};
use sweep_cli::{
    detect_transition, fixed_point_rows, learnability_curve, ode_scan, phase_surface, run_sweep,
    sim_scan, write_fixed_point_csv, write_learnability_csv, write_surface_csv, Engine, SweepSpec,
};

#[derive(Parser)]
#[command(name = "grpo-lab", version, about = "Group-normalized learning laboratory")]
struct Cli {
    /// Override the base seed from the config (sampling engines).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for `sweep`, a file elsewhere. Most
    /// commands print to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sweep configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel runs; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn parse_mode(raw: &str) -> Result<SimMode, String> {
    match raw {
        "reinforce" => Ok(SimMode::Reinforce),
        "grpo_clipped" => Ok(SimMode::GrpoClipped),
        "wright_fisher" => Ok(SimMode::WrightFisher),
        other => Err(format!(
            "unknown mode {other:?} (expected reinforce, grpo_clipped, or wright_fisher)"
        )),
    }
}

fn parse_method(raw: &str) -> Result<Method, String> {
    match raw {
        "rk4" | "rk4_fixed" => Ok(Method::Rk4Fixed),
        "rk45" | "rk45_adaptive" => Ok(Method::Rk45Adaptive),
        other => Err(format!("unknown method {other:?} (expected rk4 or rk45)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the deterministic flow from a uniform-shape start and
    /// write the trajectory as CSV.
    Ode {
        #[arg(long)]
        fnr: f64,
        #[arg(long)]
        fpr: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Starting bad mass; defaults to m / (k + m).
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, value_parser = parse_method, default_value = "rk45")]
        method: Method,
        /// Fixed step for rk4, initial step for rk45.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 2000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-9)]
        abs_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        rel_tol: f64,
        /// Keep every n-th sample (the last is always kept).
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// One sampled group run; the CSV carries its seed and replica, so
    /// any run from a sweep ledger can be replayed bit for bit.
    Simulate {
        #[arg(long)]
        fnr: f64,
        #[arg(long)]
        fpr: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        g: usize,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        #[arg(long, value_parser = parse_mode, default_value = "reinforce")]
        mode: SimMode,
        #[arg(long, default_value_t = 500)]
        record_every: usize,
        #[arg(long, default_value_t = 0.0)]
        clip_low: f64,
        #[arg(long, default_value_t = 0.0)]
        clip_high: f64,
        /// Anchoring strength toward the uniform-shape start.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 0)]
        replica: u64,
    },
    /// Run a configured sweep into a directory: per-run CSVs, a summary
    /// keyed by grid point, and a failure ledger when runs go down.
    Sweep,
    /// Anchored rest points of the regularized scalar flow across a list
    /// of anchoring strengths.
    FixedPoint {
        #[arg(long)]
        fnr: f64,
        #[arg(long)]
        fpr: f64,
        #[arg(long, default_value_t = 0.5)]
        p_ref: f64,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Good-shape collision mass; defaults to the uniform value 1/k.
        #[arg(long)]
        s2: Option<f64>,
        /// Bad-shape collision mass; defaults to the uniform value 1/m.
        #[arg(long)]
        t2: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1,10,100")]
        betas: Vec<f64>,
    },
    /// The learnability landscape over the square of error rates.
    PhaseSurface {
        #[arg(long, default_value_t = 21)]
        resolution: usize,
    },
    /// Reward spread and learnability speed as functions of the bad mass
    /// for one verifier.
    Learnability {
        #[arg(long)]
        fnr: f64,
        #[arg(long)]
        fpr: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Scan symmetric verifiers across discriminations and print the
    /// interpolated sign change of the mass drift.
    Transition {
        #[arg(long, value_enum, default_value_t = Engine::Ode)]
        engine: Engine,
        #[arg(long, value_delimiter = ',', default_value = "-0.2,-0.1,0,0.1,0.2", allow_hyphen_values = true)]
        js: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        g: usize,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
    },
}

/// CSV sink: the `--out` file, or stdout.
fn sink(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn uniform_start(p0: Option<f64>, k: usize, m: usize) -> f64 {
    p0.unwrap_or(m as f64 / (k + m) as f64)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }

    match cli.command {
        Command::Ode {
            fnr,
            fpr,
            k,
            m,
            p0,
            eta,
            method,
            step,
            horizon,
            abs_tol,
            rel_tol,
            stride,
        } => {
            let spec = NoiseSpec::new(fnr, fpr)?;
            let initial = BlockState::new(
                uniform_start(p0, k, m),
                ProbVector::uniform(k)?,
                ProbVector::uniform(m)?,
            )?;
            let cfg = OdeConfig { eta, step, horizon, method, abs_tol, rel_tol };
            let traj = meanfield::integrate(&initial, &spec, &cfg)?;
            meanfield::write_trajectory_csv(&traj, sink(&cli.out)?, stride)?;
        }
        Command::Simulate {
            fnr,
            fpr,
            k,
            m,
            g,
            p0,
            eta,
            steps,
            mode,
            record_every,
            clip_low,
            clip_high,
            beta,
            nu,
            replica,
        } => {
            let spec = NoiseSpec::new(fnr, fpr)?;
            let p0 = uniform_start(p0, k, m);
            let mut flat = vec![(1.0 - p0) / k as f64; k];
            flat.extend(std::iter::repeat(p0 / m as f64).take(m));
            let mut cfg = SimConfig::new(mode, k, m, g, eta, steps, cli.seed.unwrap_or(0));
            cfg.record_every = record_every;
            cfg.clip_low = clip_low;
            cfg.clip_high = clip_high;
            cfg.beta = beta;
            if beta > 0.0 {
                cfg.reference = Some(flat.clone());
            }
            cfg.nu = nu;
            let initial = ProbVector::new(flat)?;
            let traj = bandit_sim::run_replica(&cfg, &spec, &initial, replica)?;
            bandit_sim::write_sim_csv(&traj, &spec, sink(&cli.out)?)?;
        }
        Command::Sweep => {
            let config = cli
                .config
                .as_ref()
                .context("`sweep` needs --config pointing at a TOML sweep description")?;
            let out = cli
                .out
                .as_ref()
                .context("`sweep` needs --out naming the output directory")?;
            let mut spec = SweepSpec::load(config)?;
            if let Some(seed) = cli.seed {
                spec.base_seed = seed;
            }
            let outcome = run_sweep(&spec, out)?;
            eprintln!(
                "{} points, {} runs failed; summary at {}",
                outcome.summaries.len(),
                outcome.failures.len(),
                out.join("summary.csv").display()
            );
            if !outcome.all_succeeded() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::FixedPoint { fnr, fpr, p_ref, eta, k, m, s2, t2, betas } => {
            let spec = NoiseSpec::new(fnr, fpr)?;
            let s2 = s2.unwrap_or(1.0 / k as f64);
            let t2 = t2.unwrap_or(1.0 / m as f64);
            let rows = fixed_point_rows(&spec, eta, p_ref, k, m, s2, t2, &betas)?;
            write_fixed_point_csv(&rows, sink(&cli.out)?)?;
        }
        Command::PhaseSurface { resolution } => {
            let cells = phase_surface(resolution)?;
            write_surface_csv(&cells, sink(&cli.out)?)?;
        }
        Command::Learnability { fnr, fpr, points } => {
            let spec = NoiseSpec::new(fnr, fpr)?;
            let curve = learnability_curve(&spec, points)?;
            write_learnability_csv(&curve, sink(&cli.out)?)?;
        }
        Command::Transition {
            engine,
            js,
            k,
            m,
            g,
            eta,
            steps,
            replicas,
            step,
            horizon,
        } => {
            if js.len() < 2 {
                bail!("--js needs at least two scan values");
            }
            let p0 = m as f64 / (k + m) as f64;
            let points = match engine {
                Engine::Ode => ode_scan(&js, k, m, p0, eta.unwrap_or(1.0), step, horizon)?,
                Engine::Sim => sim_scan(
                    &js,
                    k,
                    m,
                    g,
                    eta.unwrap_or(1e-2),
                    steps,
                    replicas,
                    cli.seed.unwrap_or(0),
                )?,
                Engine::WrightFisher => {
                    bail!("the transition scan supports the ode and sim engines")
                }
            };
            if let Some(path) = &cli.out {
                let mut out = csv::Writer::from_writer(fs::File::create(path)?);
                out.write_record(["j", "shift"])?;
                for &(j, d) in &points {
                    out.write_record([format!("{j}"), format!("{d}")])?;
                }
                out.flush()?;
            }
            let root = detect_transition(&points)?;
            println!("{root}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
