//! Command-line front end. Exit codes: 0 on success, 1 for argument and
//! configuration errors, 2 for runtime and numerical failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig};
use crate::mixing::profile_for_spec;
use crate::process::{ArSpec, MarkovSpec, ProcessSpec};

#[derive(Parser, Debug)]
#[command(name = "mixreg", version, about = "Least squares on beta-mixing data: bounds and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Text,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory; defaults to the config's, else the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit one trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory length; defaults to the first entry of `ns`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Emit a mixing profile as CSV.
    Mixing {
        #[command(flatten)]
        common: Common,
        /// Two-state symmetric chain, e.g. `q=0.3`.
        #[arg(long)]
        markov: Option<String>,
        /// AR coefficients, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ar: Option<Vec<f64>>,
        /// Lag window for `--ar`.
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        max_gap: usize,
        /// Trajectory length for processes started away from stationarity.
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
    },
    /// Evaluate the main bound (and the corollary when it applies).
    Bound {
        #[command(flatten)]
        common: Common,
    },
    /// Coverage of the main bound.
    Coverage {
        #[command(flatten)]
        common: Common,
    },
    /// Frequency of the lower uniform law event.
    LowerTail {
        #[command(flatten)]
        common: Common,
    },
    /// Exceedance of the dependent random-walk threshold.
    NoiseWalk {
        #[command(flatten)]
        common: Common,
    },
    /// Block-length sweep of the CLT variance.
    Clt {
        #[command(flatten)]
        common: Common,
    },
    /// Log-log slope of the median excess risk.
    Slope {
        #[command(flatten)]
        common: Common,
    },
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_argument_error() {
                1
            } else {
                2
            }
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("MIXREG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // fails only when a pool already exists, which then stays in use
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.experiment.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.experiment.trials = t;
    }
    if let Some(o) = &common.out {
        cfg.output.dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(common: &Common, dir: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match (common.out.as_deref(), dir) {
        (Some(d), _) | (None, Some(d)) => harness::write_file(d, name, contents),
        (None, None) => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, n } => {
            let cfg = load(&common)?;
            let n = n.unwrap_or(cfg.experiment.ns[0]);
            let traj = cfg.spec()?.simulate(n, cfg.experiment.seed)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            emit(&common, cfg.output.dir.as_deref(), "trajectory.csv", &String::from_utf8_lossy(&buf))
        }
        Command::Mixing { common, markov, ar, window, max_gap, horizon } => {
            let spec = match (markov, ar, &common.config) {
                (Some(m), None, None) => ProcessSpec::FiniteMarkov(MarkovSpec::symmetric_flip(parse_q(&m)?)?),
                (None, Some(theta), None) => ProcessSpec::GaussianAr(ArSpec::new(theta, 1.0, window)?),
                (None, None, Some(_)) => load(&common)?.spec()?,
                _ => return Err(Error::InvalidArgument("give exactly one of --markov, --ar, --config".into())),
            };
            if max_gap == 0 {
                return Err(Error::InvalidArgument("--max-gap must be >= 1".into()));
            }
            let profile = profile_for_spec(&spec, max_gap, horizon)?;
            let mut buf = String::from("gap,beta\n");
            for (gap, beta) in (1..=max_gap).zip(profile.betas(&(1..=max_gap).collect::<Vec<_>>())?) {
                buf.push_str(&format!("{gap},{beta}\n"));
            }
            emit(&common, None, "mixing.csv", &buf)
        }
        Command::Bound { common } => {
            let cfg = load(&common)?;
            let setups = harness::evaluate_bounds(&cfg)?;
            let reports: Vec<&BoundReport> =
                setups.iter().flat_map(|s| std::iter::once(&s.report).chain(s.corollary.as_ref())).collect();
            let text = match common.format {
                Format::Text => reports.iter().map(|r| r.text()).collect::<Vec<_>>().join("\n"),
                Format::Csv => {
                    let mut s = format!("{}\n", BoundReport::CSV_HEADER);
                    for r in &reports {
                        s.push_str(&r.csv_row());
                        s.push('\n');
                    }
                    s
                }
            };
            emit(&common, None, "bound.csv", &text)
        }
        Command::Coverage { common } => {
            let cfg = load(&common)?;
            let reports = harness::run_coverage(&cfg)?;
            let dir = cfg.output_dir();
            harness::write_coverage(&reports, &dir)?;
            if common.format == Format::Text {
                for r in &reports {
                    println!(
                        "n = {}: bound = {}, quantile = {}, coverage = {}, burn-ins hold = {}, degenerate = {}",
                        r.n,
                        r.bound_value,
                        r.quantile,
                        r.coverage,
                        r.burnins_hold(),
                        r.degenerate
                    );
                }
            }
            Ok(())
        }
        Command::LowerTail { common } => {
            let cfg = load(&common)?;
            let res = harness::verify_lower_tail(&cfg)?;
            finish(&common, &cfg, "lower_tail.csv", &harness::lower_tail_csv(&res))
        }
        Command::NoiseWalk { common } => {
            let cfg = load(&common)?;
            let res = harness::verify_noise_walk(&cfg)?;
            finish(&common, &cfg, "noise_walk.csv", &harness::noise_walk_csv(&res))
        }
        Command::Clt { common } => {
            let cfg = load(&common)?;
            let res = harness::clt_consistency(&cfg)?;
            if common.format == Format::Text {
                match res.stabilized_from {
                    Some(l) => println!("stabilizes from block length {l}"),
                    None => println!("no stabilization within the sweep"),
                }
            }
            finish(&common, &cfg, "clt.csv", &res.csv())
        }
        Command::Slope { common } => {
            let cfg = load(&common)?;
            let res = harness::rate_slope(&cfg)?;
            if common.format == Format::Text {
                println!("slope = {}", res.slope);
            }
            harness::write_file(&cfg.output_dir(), "slope_fit.csv", &format!("slope\n{}\n", res.slope))?;
            finish(&common, &cfg, "slope.csv", &res.csv())
        }
    }
}

fn finish(common: &Common, cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<()> {
    if common.format == Format::Text {
        print!("{contents}");
    }
    harness::write_file(&cfg.output_dir(), name, contents)
}

fn parse_q(arg: &str) -> Result<f64> {
    let value = arg.strip_prefix("q=").unwrap_or(arg);
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("--markov expects q=<prob>, got {arg:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<String> {
        std::iter::once("mixreg").chain(args.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn exit_codes() {
        assert_eq!(cli_main(argv(&["frobnicate"])), 1);
        assert_eq!(cli_main(argv(&["bound"])), 1);
        assert_eq!(cli_main(argv(&["mixing", "--markov", "q=nope"])), 1);
        assert_eq!(cli_main(argv(&["mixing", "--markov", "q=1.5"])), 1);
        assert_eq!(cli_main(argv(&["mixing", "--ar", "1.0"])), 2);
    }

    #[test]
    fn mixing_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(cli_main(argv(&["mixing", "--markov", "q=0.3", "--max-gap", "10", "--out", out])), 0);
        let text = std::fs::read_to_string(dir.path().join("mixing.csv")).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "gap,beta");
        assert_eq!(rows.len(), 11);
        for (i, row) in rows[1..].iter().enumerate() {
            let beta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
            assert!((beta - 0.4f64.powi(i as i32 + 1) / 2.0).abs() < 1e-12);
        }
    }
}
