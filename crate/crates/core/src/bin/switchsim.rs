use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchsim::experiment::{self, ExperimentConfig};
use switchsim::{Error, Result};

/// Rydberg single-photon switch simulations.
///
/// Config values can be overridden with dotted keys, e.g. `--medium.d_b=10`
/// or `--task.trials=10000`.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    task: Task,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror of every table.
    #[arg(long)]
    json: bool,
    #[arg(long = "d_b")]
    d_b: Option<f64>,
    #[arg(long = "L-over-zb")]
    l_over_zb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Task {
    /// Time-domain free and blockaded kernels.
    Kernel(Common),
    /// Rescaled density matrices and the boundary cut.
    Rho(Common),
    /// Optimal gate envelope and stored mode.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "alpha")]
        n_photons: Option<u32>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        emit_mode: bool,
        #[arg(long)]
        emit_envelope: bool,
    },
    /// Efficiency against d_b for several medium lengths.
    SweepDb(Common),
    /// Efficiency against target amplitude.
    SweepAlpha(Common),
    /// Monte Carlo gate statistics.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        alpha_sq_grid: Option<Vec<f64>>,
        #[arg(long)]
        alpha_g_sq: Option<f64>,
        #[arg(long, value_delimiter = ',', conflicts_with = "from_medium")]
        p_sc: Option<Vec<f64>>,
        #[arg(long)]
        from_medium: bool,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Direct time-domain integration around one excitation.
    Oracle(Common),
}

fn json<T: serde::Serialize>(v: T) -> String {
    serde_json::to_string(&v).expect("plain values serialize")
}

fn collect(task: &Task) -> (&'static str, &Common, Vec<(String, String)>) {
    let mut o = Vec::new();
    let (name, common) = match task {
        Task::Kernel(c) => ("kernel", c),
        Task::Rho(c) => ("rho", c),
        Task::SweepDb(c) => ("sweep-db", c),
        Task::SweepAlpha(c) => ("sweep-alpha", c),
        Task::Oracle(c) => ("oracle", c),
        Task::Optimize { common, n_photons, alpha, emit_mode, emit_envelope } => {
            if let Some(n) = n_photons {
                o.push(("task.n_photons".into(), json(n)));
            }
            if let Some(a) = alpha {
                o.push(("task.alpha".into(), json(a)));
            }
            if *emit_mode {
                o.push(("task.emit_mode".into(), "true".into()));
            }
            if *emit_envelope {
                o.push(("task.emit_envelope".into(), "true".into()));
            }
            ("optimize", common)
        }
        Task::Mc { common, alpha_sq_grid, alpha_g_sq, p_sc, from_medium, trials } => {
            if let Some(g) = alpha_sq_grid {
                o.push(("task.alpha_sq_grid".into(), json(g)));
            }
            if let Some(a) = alpha_g_sq {
                o.push(("task.alpha_g_sq".into(), json(a)));
            }
            if let Some(p) = p_sc {
                o.push(("task.p_sc".into(), json(p)));
            }
            if *from_medium {
                o.push(("task.from_medium".into(), "true".into()));
            }
            if let Some(t) = trials {
                o.push(("task.trials".into(), json(t)));
            }
            ("mc", common)
        }
    };
    if let Some(v) = common.d_b {
        o.push(("medium.d_b".into(), json(v)));
    }
    if let Some(v) = common.l_over_zb {
        o.push(("medium.L_over_zb".into(), json(v)));
    }
    if let Some(v) = common.seed {
        o.push(("seed".into(), json(v)));
    }
    (name, common, o)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SWITCHSIM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("SWITCHSIM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main_inner() -> Result<()> {
    // dotted --key=value pairs are config overrides, everything else goes to clap
    let (mut args, mut overrides) = (Vec::new(), Vec::new());
    for a in std::env::args() {
        match a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            Some((k, v)) if k.contains('.') => overrides.push((k.to_string(), v.to_string())),
            _ => args.push(a),
        }
    }
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    configure_threads()?;
    let (name, common, flags) = collect(&cli.task);
    overrides.extend(flags);
    let cfg = ExperimentConfig::load(common.config.as_deref(), Some(name), &overrides)?;
    let out = common.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let tables = experiment::run(&cfg)?;
    let written = experiment::write_tables(&out, &tables, &experiment::metadata(&cfg), common.json)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("switchsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
