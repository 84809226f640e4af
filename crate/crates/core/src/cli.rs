//! Command-line front end: `run`, `sweep`, `compare` and `validate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::engine::{run, run_replicates, Regime, RunResult, SimConfig};
use crate::error::{Error, Result};
use crate::genome::PolicyEffectSpec;
use crate::io;
use crate::virus::OffspringMode;

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "COEVO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "coevo", version, about = "Virus/policy coevolution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single simulation.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run replicates over a list of seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all three regimes on the same seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config and effect spec without running.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        effects: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; the bundled defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Effect-interval CSV; the bundled synthetic spec when omitted.
    #[arg(long)]
    effects: Option<PathBuf>,
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    mode: Option<OffspringMode>,
    #[arg(long)]
    tmax: Option<u32>,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("seed_source").required(true).args(["seeds", "seed_list"])))]
struct SeedArgs {
    /// Number of replicates, seeded base-seed, base-seed+1, ...
    #[arg(long)]
    seeds: Option<u64>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1, requires = "seeds")]
    base_seed: u64,
}

impl SeedArgs {
    fn seeds(&self) -> Vec<u64> {
        match (&self.seed_list, self.seeds) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => (0..n).map(|i| self.base_seed + i).collect(),
            (None, None) => Vec::new(),
        }
    }
}

fn load_inputs(config: Option<&Path>, effects: Option<&Path>) -> Result<(SimConfig, PolicyEffectSpec)> {
    let cfg = match config {
        Some(p) => io::load_config(p)?,
        None => io::default_config(),
    };
    let spec = match effects {
        Some(p) => io::load_effect_spec(p, Some(cfg.policy_size))?,
        None => io::default_effect_spec(),
    };
    if spec.len() != cfg.policy_size {
        return Err(Error::MeasureCount {
            expected: cfg.policy_size,
            found: spec.len(),
        });
    }
    Ok((cfg, spec))
}

impl Common {
    fn resolve(&self) -> Result<(SimConfig, PolicyEffectSpec)> {
        let (mut cfg, spec) = load_inputs(self.config.as_deref(), self.effects.as_deref())?;
        if let Some(r) = self.regime {
            cfg.regime = r;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(t) = self.tmax {
            cfg.tmax = t;
        }
        cfg.validate()?;
        Ok((cfg, spec))
    }
}

fn final_row_line(r: &RunResult) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let last = r.last_alive();
    format!(
        "seed {} {} {}: rows {}, final mean_virus_r {}, final freq_best_gene {}, peak strains {}",
        r.config.seed,
        r.config.regime,
        r.termination,
        r.rows.len(),
        fmt(last.and_then(|l| l.mean_virus_r)),
        fmt(last.and_then(|l| l.freq_best_gene)),
        r.peak_strains()
    )
}

/// Per-seed end-of-run values for every regime, one row per (seed, regime).
fn write_finals(by_regime: &[(Regime, Vec<RunResult>)], path: &Path) -> Result<()> {
    let mut out = String::from(
        "seed,regime,termination,rows,final_mean_virus_r,final_freq_best_gene,final_mean_effective_r,peak_n_strains\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (regime, results) in by_regime {
        for r in results {
            let last = r.last_alive();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.config.seed,
                regime,
                r.termination,
                r.rows.len(),
                opt(last.and_then(|l| l.mean_virus_r)),
                opt(last.and_then(|l| l.freq_best_gene)),
                opt(last.and_then(|l| l.mean_effective_r)),
                r.peak_strains()
            );
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { common, seed, out } => {
            let (mut cfg, spec) = common.resolve()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run(&cfg, &spec)?;
            io::write_run(&result, &out)?;
            println!("{}", final_row_line(&result));
        }
        Command::Sweep { common, seeds, out } => {
            let (cfg, spec) = common.resolve()?;
            let results = run_replicates(&cfg, &spec, &seeds.seeds())?;
            io::write_results(&results, &out)?;
            for r in &results {
                println!("{}", final_row_line(r));
            }
        }
        Command::Compare { common, seeds, out } => {
            let (cfg, spec) = common.resolve()?;
            let seeds = seeds.seeds();
            let mut by_regime = Vec::new();
            for regime in Regime::ALL {
                let results = run_replicates(&cfg.with_regime(regime), &spec, &seeds)?;
                io::write_results(&results, &out.join(regime.as_str()))?;
                by_regime.push((regime, results));
            }
            write_finals(&by_regime, &out.join("finals.csv"))?;
            for (regime, results) in &by_regime {
                let finals: Vec<f64> = results
                    .iter()
                    .filter_map(|r| r.last_alive().and_then(|l| l.mean_virus_r))
                    .collect();
                let mean = io::Moments::of(&finals).mean.unwrap_or(f64::NAN);
                println!("{regime}: {} runs, mean final mean_virus_r {mean:.4}", results.len());
            }
        }
        Command::Validate { config, effects } => {
            let (cfg, spec) = load_inputs(config.as_deref(), effects.as_deref())?;
            cfg.validate()?;
            println!(
                "ok: {} measures, regime {}, mode {}, tmax {}",
                spec.len(),
                cfg.regime,
                cfg.mode,
                cfg.tmax
            );
        }
    }
    Ok(())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(vec![format!("{THREADS_ENV} must be a positive integer, got {v:?}")]))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Logic(format!("thread pool: {e}")))
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn cli_main<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = thread_pool().and_then(|pool| pool.install(|| execute(cli.command)));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
