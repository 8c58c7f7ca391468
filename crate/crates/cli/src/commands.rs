//! Command handlers: parse flags into core calls, shape results for output.

use std::path::Path;

use msrkit::deviation::{self, DeviationError};
use msrkit::dynamic::{self, ControlSpec, DynamicError, GbmParams, StoppingCase};
use msrkit::msr::{self, MsrCase, MsrDiagnostics, MsrError};
use msrkit::portfolio::{self, PortfolioCase, PortfolioError};
use msrkit::risk::{self, BpoeCase};
use msrkit::scenario::{self, Exponent, ScenarioDistribution, ScenarioError};

use crate::output::{Csv, JsonObj, Val};

/// Input errors exit with 2, solver failures with 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DeviationError> for CliError {
    fn from(e: DeviationError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MsrError> for CliError {
    fn from(e: MsrError) -> Self {
        match e {
            MsrError::UnsupportedExponent(_) => CliError::Input(e.to_string()),
            MsrError::SolverFailure(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<PortfolioError> for CliError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::SolverFailure(_) => CliError::Solver(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DynamicError> for CliError {
    fn from(e: DynamicError) -> Self {
        CliError::Input(e.to_string())
    }
}

pub enum Rendered {
    Json(JsonObj),
    Table(Csv),
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl Rendered {
    pub fn print(&self, format: OutputFormat) {
        match (self, format) {
            (Rendered::Json(o), OutputFormat::Json) => println!("{}", o.render()),
            (Rendered::Json(o), OutputFormat::Csv) => print!("{}", o.render_csv()),
            // curve tables are CSV-native; as JSON they carry header + rows
            (Rendered::Table(t), OutputFormat::Csv) => print!("{}", t.render()),
            (Rendered::Table(t), OutputFormat::Json) => {
                let cols: Vec<Val> = t
                    .header
                    .split(',')
                    .map(|c| Val::Str(c.to_string()))
                    .collect();
                let rows: Vec<Val> = t
                    .rows
                    .iter()
                    .map(|row| Val::List(row.iter().map(|x| Val::Num(*x)).collect()))
                    .collect();
                let obj = JsonObj::new()
                    .field("columns", Val::List(cols))
                    .field("rows", Val::List(rows));
                println!("{}", obj.render());
            }
        }
    }
}

/// CSV inputs are sample sets; `.json` inputs are scenario objects.
pub fn load_distribution(path: &str) -> Result<ScenarioDistribution, CliError> {
    let p = Path::new(path);
    if p.extension().and_then(|e| e.to_str()) == Some("json") {
        Ok(scenario::load_scenario_json(p)?)
    } else {
        Ok(scenario::load_csv(p)?.to_distribution())
    }
}

pub fn exponent(p: f64) -> Result<Exponent, CliError> {
    Exponent::new(p).map_err(|e| CliError::Input(e.to_string()))
}

/// Parse a grid spec `start:end:step` into inclusive grid points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!(
            "grid spec must be start:end:step, got `{spec}`"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Input(format!("bad grid number `{s}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if step.is_nan() || step <= 0.0 || end < start || !start.is_finite() || !end.is_finite() {
        return Err(CliError::Input(format!("bad grid range `{spec}`")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

fn msr_case_name(case: MsrCase) -> &'static str {
    match case {
        MsrCase::Zero => "zero",
        MsrCase::Infinite => "infinite",
        MsrCase::Interior => "interior",
    }
}

fn bpoe_case_name(case: BpoeCase) -> &'static str {
    match case {
        BpoeCase::AboveSup => "above_sup",
        BpoeCase::AtSup => "at_sup",
        BpoeCase::Main => "main",
        BpoeCase::BelowMean => "below_mean",
    }
}

fn stopping_case_name(case: StoppingCase) -> &'static str {
    match case {
        StoppingCase::AnyTimeOptimal => "any_time_optimal",
        StoppingCase::AnyLevelOptimal => "any_level_optimal",
        StoppingCase::Threshold => "threshold",
    }
}

pub fn deviation_cmd(input: &str, p: f64) -> Result<Rendered, CliError> {
    let d = load_distribution(input)?;
    let e = exponent(p)?;
    let r = deviation::lp_deviation(&d, e);
    Ok(Rendered::Json(
        JsonObj::new()
            .field("sigma", Val::Num(r.sigma))
            .field("center", Val::Num(r.center))
            .field("p", Val::Num(e.p()))
            .field("q", Val::Num(e.q())),
    ))
}

pub fn sharpe_cmd(input: &str, p: f64, riskfree: f64) -> Result<Rendered, CliError> {
    let d = load_distribution(input)?;
    let e = exponent(p)?;
    let s = deviation::lp_sharpe(&d, e, riskfree)?;
    Ok(Rendered::Json(
        JsonObj::new()
            .field("sharpe", Val::Num(s))
            .field("p", Val::Num(e.p()))
            .field("riskfree", Val::Num(riskfree)),
    ))
}

pub fn msr_cmd(input: &str, p: f64, riskfree: f64) -> Result<Rendered, CliError> {
    let d = load_distribution(input)?;
    let e = exponent(p)?;
    let r = if p == 1.0 || p == 2.0 {
        msr::msr_p12(&d, e, riskfree)?
    } else {
        msr::msr_general(&d, e, riskfree)?
    };
    let mut obj = JsonObj::new()
        .field("msr", Val::Num(r.value))
        .field("case", Val::Str(msr_case_name(r.case).to_string()));
    match r.diagnostics {
        Some(MsrDiagnostics::MinScale { c }) => {
            obj = obj.field("c_star", Val::Num(c));
        }
        Some(MsrDiagnostics::MaxPair { a, b }) => {
            obj = obj.field("a_star", Val::Num(a)).field("b_star", Val::Num(b));
        }
        None => {
            obj = obj.field("c_star", Val::Null);
        }
    }
    Ok(Rendered::Json(obj))
}

pub fn cvar_cmd(
    input: &str,
    p: f64,
    level: f64,
    curve: Option<&str>,
) -> Result<Rendered, CliError> {
    let d = load_distribution(input)?;
    let e = exponent(p)?;
    if let Some(spec) = curve {
        let rows = parse_grid(spec)?
            .into_iter()
            .filter(|lam| (0.0..1.0).contains(lam))
            .map(|lam| {
                let r = risk::cvar(&d, e, lam);
                vec![lam, r.value]
            })
            .collect();
        return Ok(Rendered::Table(Csv { header: "level,cvar", rows }));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(CliError::Input(format!(
            "level must lie in [0, 1), got {level}"
        )));
    }
    let r = risk::cvar(&d, e, level);
    Ok(Rendered::Json(
        JsonObj::new()
            .field("cvar", Val::Num(r.value))
            .field("level", Val::Num(r.level))
            .field("center", Val::Num(r.center))
            .field("p", Val::Num(e.p())),
    ))
}

pub fn bpoe_cmd(
    input: &str,
    p: f64,
    threshold: f64,
    curve: Option<&str>,
) -> Result<Rendered, CliError> {
    let d = load_distribution(input)?;
    let e = exponent(p)?;
    if let Some(spec) = curve {
        let rows = parse_grid(spec)?
            .into_iter()
            .map(|x| vec![x, risk::bpoe(&d, e, x).value])
            .collect();
        return Ok(Rendered::Table(Csv { header: "x,bpoe", rows }));
    }
    let r = risk::bpoe(&d, e, threshold);
    Ok(Rendered::Json(
        JsonObj::new()
            .field("bpoe", Val::Num(r.value))
            .field("case", Val::Str(bpoe_case_name(r.case).to_string()))
            .field("threshold", Val::Num(threshold))
            .field("c_star", r.c_star.map_or(Val::Null, Val::Num)),
    ))
}

pub fn portfolio_cmd(market: &str, p: f64, delta: f64) -> Result<Rendered, CliError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(CliError::Input(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let m = portfolio::load_market_json(market)?;
    let e = exponent(p)?;
    let sol = portfolio::solve_bpoe_portfolio(&m, e, delta)?;
    let case = match sol.case {
        PortfolioCase::Solved => "solved",
        PortfolioCase::NoPremiumAchievable => "no_premium_achievable",
    };
    Ok(Rendered::Json(
        JsonObj::new()
            .field("case", Val::Str(case.to_string()))
            .field(
                "assets",
                Val::List(
                    m.asset_names()
                        .iter()
                        .map(|n| Val::Str(n.clone()))
                        .collect(),
                ),
            )
            .field(
                "risky_weights",
                Val::List(sol.risky_weights.iter().map(|w| Val::Num(*w)).collect()),
            )
            .field(
                "full_weights",
                Val::List(sol.full_weights.iter().map(|w| Val::Num(*w)).collect()),
            )
            .field("delta", Val::Num(sol.delta))
            .field("objective", Val::Num(sol.objective)),
    ))
}

pub fn frontier_cmd(market: &str, target: f64) -> Result<Rendered, CliError> {
    let m = portfolio::load_market_json(market)?;
    let (means, cov) = m.moments();
    let (weights, stdev) = portfolio::markowitz_frontier(&means, &cov, m.riskfree(), target)?;
    let slope = portfolio::tangency_sharpe_check(&means, &cov, m.riskfree())
        .map_or(Val::Null, Val::Num);
    Ok(Rendered::Json(
        JsonObj::new()
            .field("target", Val::Num(target))
            .field(
                "weights",
                Val::List(weights.iter().map(|w| Val::Num(*w)).collect()),
            )
            .field("stdev", Val::Num(stdev))
            .field("slope", slope),
    ))
}

#[allow(clippy::too_many_arguments)]
pub fn stop_cmd(
    mu: f64,
    sigma: f64,
    goal: f64,
    p: f64,
    s0: f64,
    curve: Option<&str>,
    grid: Option<&str>,
    validate: Option<(usize, u64, usize)>,
) -> Result<Rendered, CliError> {
    let g = GbmParams::new(mu, sigma, s0)?;
    if let Some(kind) = curve {
        let spec = grid.ok_or_else(|| {
            CliError::Input("--curve needs --grid start:end:step".to_string())
        })?;
        let points = parse_grid(spec)?;
        return match kind {
            "f" => {
                let rows = points
                    .into_iter()
                    .filter(|b| *b >= goal)
                    .map(|b| Ok(vec![b, dynamic::stopping_objective_at(&g, goal, p, b)?]))
                    .collect::<Result<Vec<_>, DynamicError>>()?;
                Ok(Rendered::Table(Csv { header: "b,f", rows }))
            }
            "g" => {
                let rows = points
                    .into_iter()
                    .filter(|b| *b > goal)
                    .map(|b| Ok(vec![b, dynamic::stopping_sharpe_at(&g, goal, b)?]))
                    .collect::<Result<Vec<_>, DynamicError>>()?;
                Ok(Rendered::Table(Csv { header: "b,g", rows }))
            }
            other => Err(CliError::Input(format!(
                "unknown curve kind `{other}` (expected f or g)"
            ))),
        };
    }

    let sol = dynamic::problem2_threshold(&g, goal, p)?;
    let mut obj = JsonObj::new()
        .field("case", Val::Str(stopping_case_name(sol.case).to_string()))
        .field("gamma", Val::Num(sol.gamma))
        .field("b_star", Val::Num(sol.b_star))
        .field("c_star", Val::Num(sol.c_star))
        .field("value", Val::Num(sol.value));

    if let Some((paths, seed, threads)) = validate {
        if sol.case != StoppingCase::Threshold {
            return Err(CliError::Input(
                "--validate applies to the threshold case only".to_string(),
            ));
        }
        let cap = dynamic::suggested_horizon_cap(&g, sol.b_star, 0.001);
        let mc = dynamic::problem2_mc_validate(&sol, &g, goal, p, paths, cap, seed, threads)?;
        obj = obj
            .field("mc_estimate", Val::Num(mc.estimate))
            .field("mc_stderr", Val::Num(mc.stderr))
            .field("hit_fraction", Val::Num(mc.hit_fraction))
            .field("hit_probability", Val::Num(dynamic::hitting_probability(&g, sol.b_star)))
            .field("horizon_cap", Val::Num(cap));
    }
    Ok(Rendered::Json(obj))
}

#[allow(clippy::too_many_arguments)]
pub fn control_cmd(
    mu: f64,
    sigma: f64,
    p: f64,
    c: f64,
    horizon: f64,
    paths: usize,
    seed: u64,
    threads: usize,
) -> Result<Rendered, CliError> {
    let g = GbmParams::new(mu, sigma, 1.0)?;
    let spec = ControlSpec::new(c, p, horizon)?;
    let sol = dynamic::problem1_optimal_control(&spec, &g)?;
    let est = dynamic::problem1_value(&spec, &g, paths, seed, threads)?;
    Ok(Rendered::Json(
        JsonObj::new()
            .field("y_drift", Val::Num(sol.y_drift))
            .field("y_vol", Val::Num(sol.y_vol))
            .field("feedback_gain", Val::Num(sol.feedback_gain()))
            .field("closed_form_value", Val::Num(sol.closed_form_value()))
            .field("estimate", Val::Num(est.value))
            .field("stderr", Val::Num(est.stderr))
            .field("c_star", est.c_star.map_or(Val::Null, Val::Num))
            .field("paths", Val::Int(paths as i64))
            .field("seed", Val::Int(seed as i64)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Solver("x".into()).exit_code(), 3);
        let from_msr: CliError = MsrError::UnsupportedExponent(0.5).into();
        assert_eq!(from_msr.exit_code(), 2);
        let from_portfolio: CliError = PortfolioError::SolverFailure("stall".into()).into();
        assert_eq!(from_portfolio.exit_code(), 3);
    }

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.5").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_cmd(
    mu: f64,
    sigma: f64,
    s0: f64,
    horizon: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    threads: usize,
    full: bool,
) -> Result<Rendered, CliError> {
    if steps == 0 || paths == 0 {
        return Err(CliError::Input("steps and paths must be positive".to_string()));
    }
    let g = GbmParams::new(mu, sigma, s0)?;
    let trajectories = dynamic::gbm_paths(&g, horizon, steps, paths, seed, threads);
    if full {
        let dt = horizon / steps as f64;
        let mut rows = Vec::with_capacity(paths * (steps + 1));
        for (i, path) in trajectories.iter().enumerate() {
            for (k, s) in path.iter().enumerate() {
                rows.push(vec![i as f64, k as f64 * dt, *s]);
            }
        }
        Ok(Rendered::Table(Csv { header: "path,time,price", rows }))
    } else {
        let rows = trajectories
            .iter()
            .enumerate()
            .map(|(i, path)| vec![i as f64, *path.last().expect("nonempty path")])
            .collect();
        Ok(Rendered::Table(Csv { header: "path,terminal", rows }))
    }
}
