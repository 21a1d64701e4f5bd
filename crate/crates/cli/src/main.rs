mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::Zero;
use serde_json::Value;

use discourage_core::bounds::{self, bessel_numbers, build_m_triangle};
use discourage_core::embedded::{self, EmbeddedTable};
use discourage_core::model::{format_rational, parse_rational, rational_to_f64};
use discourage_core::oracle::{self, SimConfig, SimMode};
use discourage_core::series::{solve_transient, SolveOptions};
use discourage_core::{BirthDeathRates, Error, Execution, ModelParams, VERSION};

use output::{num, Emission, Format};

#[derive(Parser, Debug)]
#[command(name = "discourage", version, about = "Transient analysis of the discouragement queue")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Transient distribution p(k, τ) from the power series.
    Transient(TransientArgs),
    /// Transient law of the embedded jump chain, exact.
    Embedded(EmbeddedArgs),
    /// Bessel numbers and, optionally, the majorant triangle.
    Bessel(BesselArgs),
    /// Series against uniformization; exits 0 iff every state agrees.
    Validate(ValidateArgs),
    /// Seeded Monte Carlo estimate of the distribution.
    Simulate(SimulateArgs),
}

fn rational(s: &str) -> Result<BigRational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

/// A fixed value or `auto`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Setting<T> {
    Auto,
    Fixed(T),
}

impl<T> Setting<T> {
    fn get(self) -> Option<T> {
        match self {
            Setting::Auto => None,
            Setting::Fixed(v) => Some(v),
        }
    }
}

fn auto<T: std::str::FromStr>(s: &str) -> Result<Setting<T>, String> {
    if s == "auto" {
        return Ok(Setting::Auto);
    }
    s.parse()
        .map(Setting::Fixed)
        .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
}

#[derive(Args, Debug)]
struct Rates {
    #[arg(long, value_parser = rational)]
    lambda: BigRational,
    #[arg(long, value_parser = rational)]
    mu: BigRational,
}

impl Rates {
    fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.lambda.clone(), self.mu.clone()).map_err(CliError::from)
    }
}

#[derive(Args, Debug)]
struct Truncation {
    /// Coefficient depth available to the series, or `auto`.
    #[arg(long, default_value = "512", value_parser = auto::<usize>)]
    depth: Setting<usize>,
    /// Working bits for summation, or `auto`.
    #[arg(long = "precision-bits", default_value = "256", value_parser = auto::<u32>)]
    precision_bits: Setting<u32>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("time").required(true).args(["t", "tau"]))]
struct TransientArgs {
    #[command(flatten)]
    rates: Rates,
    /// Physical time; rescaled to τ = λt.
    #[arg(long, value_parser = rational)]
    t: Option<BigRational>,
    /// Rescaled time.
    #[arg(long, value_parser = rational)]
    tau: Option<BigRational>,
    #[arg(long)]
    kmax: usize,
    #[arg(long)]
    eps: f64,
    #[command(flatten)]
    truncation: Truncation,
    /// Sum the series in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Recursion,
    Closed,
    Both,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["lambda", "rates"]))]
struct EmbeddedArgs {
    #[arg(long, value_parser = rational, requires = "mu")]
    lambda: Option<BigRational>,
    #[arg(long, value_parser = rational, requires = "lambda")]
    mu: Option<BigRational>,
    /// Rates file (JSON).
    #[arg(long, conflicts_with_all = ["lambda", "mu"])]
    rates: Option<PathBuf>,
    /// Step horizon.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Method::Recursion)]
    method: Method,
}

#[derive(Args, Debug)]
struct BesselArgs {
    #[arg(long)]
    depth: usize,
    /// Emit every triangle entry instead of the first column.
    #[arg(long)]
    triangle: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    rates: Rates,
    #[arg(long, value_parser = rational)]
    tau: BigRational,
    #[arg(long)]
    kmax: usize,
    #[arg(long)]
    tol: f64,
    #[command(flatten)]
    truncation: Truncation,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("horizon").required(true).args(["t", "steps"]))]
struct SimulateArgs {
    #[command(flatten)]
    rates: Rates,
    /// Physical end time (continuous mode).
    #[arg(long)]
    t: Option<f64>,
    /// Number of jumps (embedded mode).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    seed: u64,
    /// Run paths on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Tolerance(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::ParseRational { .. } | Error::Rates(_) | Error::Cache(_) => {
                CliError::Usage(e.to_string())
            }
            e if e.is_tolerance_failure() => CliError::Tolerance(e.to_string()),
            e => CliError::Failed(e.to_string()),
        }
    }
}

/// Adds the settings that would certify `eps` to a tolerance failure.
fn with_recommendation(
    e: Error,
    params: &ModelParams,
    tau: &BigRational,
    k_max: usize,
    eps: f64,
) -> CliError {
    if !e.is_tolerance_failure() {
        return e.into();
    }
    match bounds::recommend_truncation(params, rational_to_f64(tau), k_max, eps) {
        Ok(plan) => CliError::Tolerance(format!(
            "{e}\nrecommended: --depth {} --precision-bits {}",
            plan.depth, plan.precision_bits
        )),
        Err(_) => e.into(),
    }
}

fn solve_options(t: &Truncation, exact: bool) -> SolveOptions {
    SolveOptions {
        depth: t.depth.get(),
        precision_bits: t.precision_bits.get(),
        exact_summation: exact,
        exec: Execution::default(),
    }
}

fn setting(v: Option<impl ToString>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn common_meta(e: &mut Emission, command: &str) {
    e.meta("version", VERSION).meta("command", command);
}

fn rates_meta(e: &mut Emission, params: &ModelParams) {
    e.meta("lambda", format_rational(params.lambda()))
        .meta("mu", format_rational(params.mu()))
        .meta("alpha_sq", format_rational(params.alpha_sq()));
}

fn transient(a: &TransientArgs) -> Result<Emission, CliError> {
    let params = a.rates.params()?;
    let tau = match (&a.tau, &a.t) {
        (Some(tau), _) => tau.clone(),
        (None, Some(t)) => params.rescale_time(t)?,
        _ => unreachable!("clap requires one of --t/--tau"),
    };
    let opts = solve_options(&a.truncation, a.exact);
    let r = solve_transient(&params, &tau, a.kmax, a.eps, opts)
        .map_err(|e| with_recommendation(e, &params, &tau, a.kmax, a.eps))?;
    let mut e = Emission::new(&["k", "p", "tail_bound"]);
    common_meta(&mut e, "transient");
    rates_meta(&mut e, &params);
    e.meta("tau", format_rational(&tau))
        .meta("kmax", a.kmax)
        .meta("eps", num(a.eps))
        .meta("depth_setting", setting(a.truncation.depth.get()))
        .meta("precision_bits_setting", setting(a.truncation.precision_bits.get()))
        .meta("truncation_order", r.truncation_order)
        .meta("depth_used", r.depth)
        .meta("working_bits", r.working_bits.map_or(Value::from("exact"), Value::from))
        .meta("exact_coefficients", r.exact_coefficients);
    for k in 0..=a.kmax {
        e.row(vec![k.into(), num(r.probabilities[k]), num(r.tail_bounds[k])]);
    }
    Ok(e)
}

fn embedded_rows(e: &mut Emission, table: &EmbeddedTable) {
    for entry in table.entries() {
        e.row(vec![
            entry.n.into(),
            entry.k.into(),
            entry.p_num.into(),
            entry.p_den.into(),
            num(entry.p_float),
        ]);
    }
}

fn embedded(a: &EmbeddedArgs) -> Result<(Emission, bool), CliError> {
    let mut e = Emission::new(&["n", "k", "p_num", "p_den", "p_float"]);
    common_meta(&mut e, "embedded");
    let rates = match (&a.rates, &a.lambda, &a.mu) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|err| CliError::Usage(format!("{}: {err}", path.display())))?;
            let rates = BirthDeathRates::from_json(&text)
                .map_err(|err| CliError::Usage(format!("{}: {err}", path.display())))?;
            let table: Value = serde_json::from_str(&rates.to_json()).expect("rates render as json");
            e.meta("rates_file", path.display().to_string()).meta("rates", table);
            rates
        }
        (None, Some(lambda), Some(mu)) => {
            let params = ModelParams::new(lambda.clone(), mu.clone())?;
            rates_meta(&mut e, &params);
            BirthDeathRates::discouragement(&params)
        }
        _ => return Err(CliError::Usage("give --lambda and --mu, or --rates".into())),
    };
    e.meta("n", a.n).meta(
        "method",
        match a.method {
            Method::Recursion => "recursion",
            Method::Closed => "closed",
            Method::Both => "both",
        },
    );
    let recursion = || embedded::embedded_recursion(&rates, a.n);
    let closed = || embedded::closed_form(&rates, a.n).map(|(_, t)| t);
    let mut equal = true;
    let table = match a.method {
        Method::Recursion => recursion()?,
        Method::Closed => closed()?,
        Method::Both => {
            let (rec, cf) = (recursion()?, closed()?);
            let verdict = match embedded::first_difference(&rec, &cf) {
                None => "equal".to_string(),
                Some((n, k)) => {
                    equal = false;
                    format!("differ at n={n} k={k}")
                }
            };
            e.meta("verdict", verdict);
            rec
        }
    };
    e.meta("normalized", embedded::normalization_check(&table))
        .meta("parity", embedded::parity_check(&table));
    embedded_rows(&mut e, &table);
    Ok((e, equal))
}

fn bessel(a: &BesselArgs) -> Result<Emission, CliError> {
    let mut e;
    if a.triangle {
        e = Emission::new(&["i", "k", "m"]);
        common_meta(&mut e, "bessel");
        e.meta("depth", a.depth);
        let m = build_m_triangle(a.depth);
        for (i, row) in m.rows().iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                e.row(vec![i.into(), k.into(), v.to_string().into()]);
            }
        }
    } else {
        e = Emission::new(&["i", "bessel"]);
        common_meta(&mut e, "bessel");
        e.meta("depth", a.depth);
        for (i, b) in bessel_numbers(a.depth).iter().enumerate() {
            e.row(vec![i.into(), b.to_string().into()]);
        }
    }
    Ok(e)
}

fn validate(a: &ValidateArgs) -> Result<(Emission, bool), CliError> {
    let params = a.rates.params()?;
    let opts = solve_options(&a.truncation, false);
    let r = oracle::validate(&params, &a.tau, a.kmax, a.tol, opts)
        .map_err(|e| with_recommendation(e, &params, &a.tau, a.kmax, a.tol / 100.0))?;
    let mut e = Emission::new(&[
        "k",
        "series",
        "oracle",
        "abs_diff",
        "tail_bound",
        "boundary_mass",
        "verdict",
    ]);
    common_meta(&mut e, "validate");
    rates_meta(&mut e, &params);
    e.meta("tau", r.tau.clone())
        .meta("t", num(r.t))
        .meta("kmax", a.kmax)
        .meta("tol", num(a.tol))
        .meta("series_eps", num(r.series_epsilon))
        .meta("oracle_eps", num(r.oracle_epsilon))
        .meta("oracle_states", r.oracle_states)
        .meta("depth_setting", setting(a.truncation.depth.get()))
        .meta("precision_bits_setting", setting(a.truncation.precision_bits.get()))
        .meta("truncation_order", r.truncation_order)
        .meta("depth_used", r.depth)
        .meta("working_bits", r.working_bits.map_or(Value::from("exact"), Value::from))
        .meta("passed", r.passed);
    for row in &r.rows {
        e.row(vec![
            row.k.into(),
            num(row.series),
            num(row.oracle),
            num(row.abs_diff),
            num(row.tail_bound),
            num(row.boundary_mass),
            (if row.pass { "pass" } else { "fail" }).into(),
        ]);
    }
    Ok((e, r.passed))
}

fn simulate(a: &SimulateArgs) -> Result<Emission, CliError> {
    let params = a.rates.params()?;
    let mode = match (a.t, a.steps) {
        (Some(t_end), _) => SimMode::Continuous { t_end },
        (None, Some(steps)) => SimMode::Embedded { steps },
        _ => unreachable!("clap requires one of --t/--steps"),
    };
    let exec = if a.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let cfg = SimConfig {
        seed: a.seed,
        paths: a.paths,
    };
    let r = oracle::simulate_paths(&params, cfg, mode, exec)?;
    let mut e = Emission::new(&["k", "count", "p_hat", "std_error"]);
    common_meta(&mut e, "simulate");
    rates_meta(&mut e, &params);
    e.meta("seed", a.seed).meta("paths", a.paths);
    match mode {
        SimMode::Continuous { t_end } => e.meta("mode", "continuous").meta("t", num(t_end)),
        SimMode::Embedded { steps } => e.meta("mode", "embedded").meta("steps", steps),
    };
    for (k, &c) in r.counts.iter().enumerate() {
        e.row(vec![k.into(), c.into(), num(r.probabilities[k]), num(r.std_errors[k])]);
    }
    Ok(e)
}

fn finite_positive(x: f64, flag: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{flag} must be a positive number, got {x}")))
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let (emission, ok) = match &cli.command {
        Command::Transient(a) => {
            finite_positive(a.eps, "eps")?;
            if a.tau.as_ref().is_some_and(|t| t < &BigRational::zero()) {
                return Err(CliError::Usage("--tau must be nonnegative".into()));
            }
            (transient(a)?, true)
        }
        Command::Embedded(a) => embedded(a)?,
        Command::Bessel(a) => (bessel(a)?, true),
        Command::Validate(a) => {
            finite_positive(a.tol, "tol")?;
            validate(a)?
        }
        Command::Simulate(a) => {
            if a.paths == 0 {
                return Err(CliError::Usage("--paths must be at least 1".into()));
            }
            (simulate(a)?, true)
        }
    };
    let text = emission.render(cli.format);
    match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
