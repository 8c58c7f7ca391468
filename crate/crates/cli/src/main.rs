//! msrkit: risk and performance measures for scenario distributions.

mod commands;
mod output;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{CliError, OutputFormat, Rendered};

#[derive(Parser)]
#[command(
    name = "msrkit",
    version,
    about = "Monotone Sharpe ratio, Lp-CVAR and buffered probability toolkit",
    long_about = "Computes Lp risk and performance measures for finite scenario \
                  distributions (CSV samples or JSON scenarios), solves the \
                  buffered-probability portfolio problem, and evaluates the \
                  closed-form dynamic trading and optimal selling solutions \
                  with seeded Monte Carlo validation."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format; scalar results default to json, curves to csv
    #[arg(long, global = true, value_enum)]
    output: Option<OutputArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Lp-deviation of a distribution (minimal Lp-distance to a constant)
    #[command(allow_negative_numbers = true)]
    Deviation {
        /// Input file: CSV of samples or JSON scenario object
        #[arg(long)]
        input: String,
        /// Norm exponent p >= 1
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Lp-Sharpe ratio E(X - r)/sigma_p(X - r)
    #[command(allow_negative_numbers = true)]
    Sharpe {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Risk-free rate subtracted from returns
        #[arg(long, default_value_t = 0.0)]
        riskfree: f64,
    },
    /// Monotone Sharpe ratio (one-parameter solve for p in {1,2},
    /// two-parameter solve otherwise)
    #[command(allow_negative_numbers = true)]
    Msr {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        riskfree: f64,
    },
    /// Lp-CVAR (superquantile) at a risk level, or a level curve
    #[command(allow_negative_numbers = true)]
    Cvar {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Risk level in [0, 1)
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Emit CSV of (level, cvar) over start:end:step instead
        #[arg(long)]
        curve: Option<String>,
    },
    /// Buffered probability of exceedance at a threshold, or an x-curve
    #[command(allow_negative_numbers = true)]
    Bpoe {
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Exceedance threshold x
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Emit CSV of (x, bpoe) over start:end:step instead
        #[arg(long)]
        curve: Option<String>,
    },
    /// Buffered-probability-optimal portfolio for a target premium
    #[command(allow_negative_numbers = true)]
    Portfolio {
        /// Market JSON file
        #[arg(long)]
        market: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Required expected return premium over the riskless rate
        #[arg(long)]
        delta: f64,
    },
    /// Markowitz frontier point (closed form) for a target expected return
    #[command(allow_negative_numbers = true)]
    Frontier {
        #[arg(long)]
        market: String,
        /// Target expected portfolio return
        #[arg(long)]
        target: f64,
    },
    /// Optimal selling threshold for a GBM-held asset
    #[command(allow_negative_numbers = true)]
    Stop {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        /// Goal price x (at least the starting price)
        #[arg(long)]
        goal: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        /// Emit a CSV curve instead: `f` (objective) or `g` (Sharpe, p=2)
        #[arg(long)]
        curve: Option<String>,
        /// Grid start:end:step for --curve
        #[arg(long)]
        grid: Option<String>,
        /// Validate the threshold by first-passage Monte Carlo
        #[arg(long)]
        validate: bool,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Optimal proportional trading toward a target level
    #[command(allow_negative_numbers = true)]
    Control {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Target level c > 0
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Simulate GBM paths (CSV of terminals, or all points with --full)
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 250)]
        steps: usize,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Emit every path point instead of terminals only
        #[arg(long)]
        full: bool,
    },
}

fn run(cmd: Command) -> Result<Rendered, CliError> {
    match cmd {
        Command::Deviation { input, p } => commands::deviation_cmd(&input, p),
        Command::Sharpe { input, p, riskfree } => commands::sharpe_cmd(&input, p, riskfree),
        Command::Msr { input, p, riskfree } => commands::msr_cmd(&input, p, riskfree),
        Command::Cvar { input, p, level, curve } => {
            commands::cvar_cmd(&input, p, level, curve.as_deref())
        }
        Command::Bpoe { input, p, threshold, curve } => {
            commands::bpoe_cmd(&input, p, threshold, curve.as_deref())
        }
        Command::Portfolio { market, p, delta } => commands::portfolio_cmd(&market, p, delta),
        Command::Frontier { market, target } => commands::frontier_cmd(&market, target),
        Command::Stop {
            mu,
            sigma,
            goal,
            p,
            s0,
            curve,
            grid,
            validate,
            paths,
            seed,
            threads,
        } => commands::stop_cmd(
            mu,
            sigma,
            goal,
            p,
            s0,
            curve.as_deref(),
            grid.as_deref(),
            validate.then_some((paths, seed, threads)),
        ),
        Command::Control { mu, sigma, p, c, horizon, paths, seed, threads } => {
            commands::control_cmd(mu, sigma, p, c, horizon, paths, seed, threads)
        }
        Command::Simulate { mu, sigma, s0, horizon, steps, paths, seed, threads, full } => {
            commands::simulate_cmd(mu, sigma, s0, horizon, steps, paths, seed, threads, full)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(rendered) => {
            let format = match (cli.output, &rendered) {
                (Some(OutputArg::Json), _) => OutputFormat::Json,
                (Some(OutputArg::Csv), _) => OutputFormat::Csv,
                (None, Rendered::Json(_)) => OutputFormat::Json,
                (None, Rendered::Table(_)) => OutputFormat::Csv,
            };
            rendered.print(format);
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
