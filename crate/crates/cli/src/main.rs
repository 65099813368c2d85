//! Command-line front end: distance sweeps to CSV, and the validation
//! suites.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mdiqkd::checks::{self, SuiteStatus};
use mdiqkd::keyrate::{self, Mode};
use mdiqkd::params;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "mdiqkd", version, about = "Certified key rates for MDI-QKD with an untrusted source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Asymptotic,
    Finite,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Asymptotic => Mode::Asymptotic,
            ModeArg::Finite => Mode::Finite,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sweep distances, optimizing the signal intensity per point; writes CSV.
    Sweep {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Finite-data handling.
        #[arg(long, value_enum, default_value = "asymptotic")]
        mode: ModeArg,
        /// Distance grid in km as START:STOP:STEP (inclusive ends).
        #[arg(long, default_value = "0:220:5")]
        distances: String,
        /// Override the relay source mean photon number from the config.
        #[arg(long)]
        mc: Option<f64>,
        /// Output path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        out: String,
        /// Also compute the trusted-source baseline column (otherwise NaN).
        #[arg(long)]
        trusted_baseline: bool,
        /// Worker threads for the sweep (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the validation suites (sampling bounds, oracle agreement, solver
    /// cross-checks, approximation regimes).
    Validate {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Base seed for every randomized suite.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Monte Carlo samples for the oracle-agreement suite.
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Optional path for oracle fixture rows (CSV).
        #[arg(long)]
        fixtures_out: Option<PathBuf>,
    },
}

fn parse_distances(arg: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = arg.split(':').collect();
    if parts.len() != 3 {
        return Err(anyhow!("--distances expects START:STOP:STEP, got `{arg}`"));
    }
    let start: f64 = parts[0].parse().context("bad START")?;
    let stop: f64 = parts[1].parse().context("bad STOP")?;
    let step: f64 = parts[2].parse().context("bad STEP")?;
    if !(step > 0.0 && stop >= start && start >= 0.0) {
        return Err(anyhow!("--distances requires 0 <= START <= STOP and STEP > 0"));
    }
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let d = start + step * i as f64;
        if d > stop + 1e-9 {
            break;
        }
        out.push(d);
        i += 1;
    }
    Ok(out)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9e}")
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config: PathBuf,
    mode: ModeArg,
    distances: String,
    mc: Option<f64>,
    out: String,
    trusted_baseline: bool,
    jobs: Option<usize>,
) -> anyhow::Result<()> {
    let mut p = params::load_config(&config).map_err(ConfigError)?;
    if let Some(mc) = mc {
        p.m_c = mc;
        p.validate().map_err(ConfigError)?;
    }
    let grid = parse_distances(&distances).map_err(|e| ConfigError2(e.to_string()))?;
    let mode_name = match mode {
        ModeArg::Asymptotic => "asymptotic",
        ModeArg::Finite => "finite",
    };

    let run = || -> anyhow::Result<Vec<keyrate::KeyRatePoint>> {
        Ok(keyrate::sweep_opts(&p, &grid, mode.into(), trusted_baseline)?)
    };
    let points = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("thread pool")?
            .install(run)?,
        None => run()?,
    };

    let mut buf = String::new();
    buf.push_str(&format!("# mdiqkd sweep v{VERSION}\n"));
    buf.push_str(&format!("# config: {}\n", config.display()));
    buf.push_str(&format!(
        "# command: sweep --config {} --mode {} --distances {} --out {}{}{}\n",
        config.display(),
        mode_name,
        distances,
        out,
        mc.map(|v| format!(" --mc {v}")).unwrap_or_default(),
        if trusted_baseline { " --trusted-baseline" } else { "" },
    ));
    buf.push_str(&format!("# mode: {mode_name}\n"));
    buf.push_str(&format!("# mc: {}\n", fmt(p.m_c)));
    buf.push_str(
        "distance_km,mu_opt,rate_untrusted,rate_trusted,q11_lower,e11_upper,delta_frac,epsilon_sample\n",
    );
    for pt in &points {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(pt.distance_km),
            fmt(pt.mu_opt),
            fmt(pt.rate_untrusted),
            fmt(pt.rate_trusted),
            fmt(pt.q11_lower),
            fmt(pt.e11_upper),
            fmt(pt.delta_frac),
            fmt(pt.epsilon_sample),
        ));
    }

    if out == "-" {
        std::io::stdout().write_all(buf.as_bytes())?;
    } else {
        std::fs::write(&out, buf).with_context(|| format!("writing {out}"))?;
    }
    Ok(())
}

fn cmd_validate(
    config: PathBuf,
    seed: u64,
    samples: u64,
    fixtures_out: Option<PathBuf>,
) -> anyhow::Result<bool> {
    let p = params::load_config(&config).map_err(ConfigError)?;
    let reports = checks::run_all(&p, seed, samples)?;
    println!("validation suites (seed {seed}, samples {samples})");
    let mut all_ok = true;
    for r in &reports {
        let status = match r.status {
            SuiteStatus::Pass => "PASS",
            SuiteStatus::Fail => "FAIL",
            SuiteStatus::InsufficientStatistics => "INSUFFICIENT STATISTICS",
        };
        println!("{:<28} {status}", r.name);
        for d in &r.details {
            println!("    {d}");
        }
        all_ok &= r.passed();
    }
    if let Some(path) = fixtures_out {
        let mut buf = String::new();
        buf.push_str(&format!("# mdiqkd validate v{VERSION} fixtures, seed {seed}\n"));
        buf.push_str("distance_km,mu,");
        buf.push_str(mdiqkd::channel::OracleEstimate::csv_header());
        buf.push('\n');
        for (i, &(d, mu)) in [(0.0, 0.5), (25.0, 0.3), (50.0, 0.5)].iter().enumerate() {
            let pp = p.with_mu(mu)?;
            let est =
                mdiqkd::channel::z_basis_oracle(&pp, mu, mu, d, samples, seed.wrapping_add(i as u64))?;
            buf.push_str(&format!("{},{},{}\n", fmt(d), fmt(mu), est.csv_row()));
        }
        std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(all_ok)
}

/// Config-stage failures exit with code 1; runtime failures with 2;
/// validation-suite failures with 3.
#[derive(Debug)]
struct ConfigError(mdiqkd::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
struct ConfigError2(String);

impl std::fmt::Display for ConfigError2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for ConfigError2 {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep {
            config,
            mode,
            distances,
            mc,
            out,
            trusted_baseline,
            jobs,
        } => cmd_sweep(config, mode, distances, mc, out, trusted_baseline, jobs).map(|()| true),
        Command::Validate {
            config,
            seed,
            samples,
            fixtures_out,
        } => cmd_validate(config, seed, samples, fixtures_out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<ConfigError2>().is_some()
            {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
