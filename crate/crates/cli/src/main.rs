use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use spindle_core::checks::{self, CheckConfig, Profile, CATALOG};
use spindle_core::fv::fv_path;
use spindle_core::kernels::KernelSampler;
use spindle_core::measures::AtomicMeasure;
use spindle_core::pdrm::{pdrm_sample, DEFAULT_TRUNCATION};
use spindle_core::scaffolding::{sample_prm, StopRule, DEFAULT_EPS};
use spindle_core::sssp::sssp_path;
use spindle_core::stats::TestReport;
use spindle_core::Error;

#[derive(Parser, Debug)]
#[command(name = "spindle-sim", version, about = "Simulate SSSP(alpha, theta) and FV(alpha, theta) and run the validation catalog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate paths and write them as CSV.
    Simulate {
        target: Target,
        #[command(flatten)]
        opts: Opts,
    },
    /// Run one catalog entry, or `all`, and write JSON and CSV reports.
    Validate {
        name: String,
        #[command(flatten)]
        opts: Opts,
    },
    /// List the catalog entries.
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Target {
    /// Pathwise SSSP from b·δ(1/2)
    Sssp,
    /// Kernel chain from b·δ(1/2)
    Kernel,
    /// FV from a normalized PDRM(alpha, theta) sample
    Fv,
    /// Spindle-marked point process up to the horizon
    Prm,
}

/// Settings shared by `simulate` and `validate`. Every field may also be
/// given in the `--config` file under the same name; flags win.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Opts {
    /// TOML file with defaults for the other options
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Initial mass at type 1/2 (simulate) or clade mass (validate)
    #[arg(long)]
    b: Option<f64>,
    /// Small-jump truncation
    #[arg(long)]
    eps: Option<f64>,
    /// Number of grid steps
    #[arg(long)]
    levels: Option<usize>,
    /// Last level (or last u for fv, time for prm)
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// quick or full
    #[arg(long)]
    profile: Option<String>,
}

impl Opts {
    /// Fill every unset flag from the config file, if one was given.
    fn merged(self) -> Result<Opts, String> {
        let Some(path) = &self.config else { return Ok(self) };
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file: Opts = toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        Ok(Opts {
            config: self.config.clone(),
            alpha: self.alpha.or(file.alpha),
            theta: self.theta.or(file.theta),
            b: self.b.or(file.b),
            eps: self.eps.or(file.eps),
            levels: self.levels.or(file.levels),
            horizon: self.horizon.or(file.horizon),
            paths: self.paths.or(file.paths),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            threads: self.threads.or(file.threads),
            profile: self.profile.or(file.profile),
        })
    }
}

/// Fully resolved settings with parameter ranges checked.
#[derive(Debug, Clone)]
struct ExperimentConfig {
    alpha: f64,
    theta: f64,
    b: f64,
    eps: f64,
    levels: usize,
    horizon: f64,
    paths: usize,
    seed: u64,
    out: Option<PathBuf>,
    profile: Profile,
}

impl ExperimentConfig {
    fn resolve(o: &Opts, default_horizon: f64) -> Result<Self, String> {
        let c = Self {
            alpha: o.alpha.unwrap_or(0.5),
            theta: o.theta.unwrap_or(0.5),
            b: o.b.unwrap_or(1.0),
            eps: o.eps.unwrap_or(DEFAULT_EPS),
            levels: o.levels.unwrap_or(20),
            horizon: o.horizon.unwrap_or(default_horizon),
            paths: o.paths.unwrap_or(1),
            seed: o.seed.unwrap_or(1),
            out: o.out.clone(),
            profile: match &o.profile {
                Some(p) => p.parse().map_err(|e: Error| e.to_string())?,
                None => Profile::Full,
            },
        };
        let checks = [
            (c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0,1)"),
            (c.theta >= 0.0 && c.theta.is_finite(), "theta must be non-negative"),
            (c.b >= 0.0 && c.b.is_finite(), "b must be non-negative"),
            (c.eps > 0.0 && c.eps < 1.0, "eps must lie in (0,1)"),
            (c.levels >= 1, "levels must be at least 1"),
            (c.horizon > 0.0 && c.horizon.is_finite(), "horizon must be positive"),
            (c.paths >= 1, "paths must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(msg.to_string());
            }
        }
        Ok(c)
    }

    fn grid(&self) -> Vec<f64> {
        (0..=self.levels).map(|i| self.horizon * i as f64 / self.levels as f64).collect()
    }
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Failure::Run(format!("cannot write {}: {e}", p.display())))
}

fn simulate(target: Target, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("spindle-out"));
    let grid = cfg.grid();
    let files = checks::replicate(cfg.seed, 100 + target as u64, cfg.paths, |r| {
        let start = if cfg.b > 0.0 { AtomicMeasure::new([(cfg.b, 0.5)])? } else { AtomicMeasure::zero() };
        Ok(match target {
            Target::Sssp => {
                let p = sssp_path(cfg.alpha, cfg.theta, &start, &grid, cfg.eps, r)?.path;
                (p.to_csv(), Some(p.trace_csv()))
            }
            Target::Kernel => {
                let mut ks = KernelSampler::new(cfg.alpha, cfg.theta)?;
                let p = ks.kernel_chain(&start, &grid, r)?;
                (p.to_csv(), Some(p.trace_csv()))
            }
            Target::Fv => {
                let pi = pdrm_sample(cfg.alpha, cfg.theta, DEFAULT_TRUNCATION, r)?.normalize()?;
                let dy = cfg.horizon / cfg.levels as f64 / 4.0;
                let p = fv_path(cfg.alpha, cfg.theta, &pi, &grid, dy, cfg.eps, r)?.path;
                (p.to_csv(), Some(p.trace_csv()))
            }
            Target::Prm => {
                let (points, _) = sample_prm(cfg.alpha, cfg.eps, StopRule::Horizon(cfg.horizon), &[], r)?;
                (points.to_csv(), None)
            }
        })
    })?;
    for (i, (path, trace)) in files.iter().enumerate() {
        write(&out, &format!("path_{i:04}.csv"), path)?;
        if let Some(t) = trace {
            write(&out, &format!("trace_{i:04}.csv"), t)?;
        }
    }
    println!("wrote {} path(s) to {}", files.len(), out.display());
    Ok(())
}

/// Runs the entries and reports whether every check passed.
fn validate(name: &str, cfg: &ExperimentConfig, opts: &Opts) -> Result<bool, Failure> {
    let names: Vec<&str> = if name == "all" {
        CATALOG.to_vec()
    } else if CATALOG.contains(&name) {
        vec![name]
    } else {
        return Err(Failure::Usage(format!("unknown check {name:?}; run `spindle-sim list`")));
    };
    let check_cfg = CheckConfig {
        seed: cfg.seed,
        profile: cfg.profile,
        eps: opts.eps,
        alpha: opts.alpha,
        theta: opts.theta,
        b: opts.b,
        paths: opts.paths,
    };
    let mut all_pass = true;
    for n in names {
        let reports = checks::run_check(n, &check_cfg)?;
        for r in &reports {
            println!("{}", r.line());
            all_pass &= r.pass;
        }
        if let Some(dir) = &cfg.out {
            let json = serde_json::to_string_pretty(&reports).map_err(|e| Failure::Run(e.to_string()))?;
            write(dir, &format!("{n}.json"), &json)?;
            let mut csv = format!("{}\n", TestReport::csv_header());
            for r in &reports {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            write(dir, &format!("{n}.csv"), &csv)?;
        }
    }
    Ok(all_pass)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::List => {
            for n in CATALOG {
                println!("{n:<22} {}", checks::describe(n).unwrap_or(""));
            }
            Ok(true)
        }
        Command::Simulate { target, opts } => {
            let opts = opts.merged().map_err(Failure::Usage)?;
            threads(opts.threads)?;
            let horizon = if target == Target::Fv { 0.3 } else { 1.0 };
            let cfg = ExperimentConfig::resolve(&opts, horizon).map_err(Failure::Usage)?;
            simulate(target, &cfg).map(|_| true)
        }
        Command::Validate { name, opts } => {
            let opts = opts.merged().map_err(Failure::Usage)?;
            threads(opts.threads)?;
            let cfg = ExperimentConfig::resolve(&opts, 1.0).map_err(Failure::Usage)?;
            validate(&name, &cfg, &opts)
        }
    }
}

fn threads(n: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Usage("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
