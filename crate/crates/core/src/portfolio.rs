//! Static portfolio selection.
//!
//! Two solvers side by side: the buffered-probability portfolio, which
//! minimizes the buffered probability that the portfolio underperforms the
//! riskless return subject to an expected premium, and the classical
//! mean-variance frontier used as a baseline. The buffered problem reduces
//! to the unconstrained convex minimization of E(1 - <x, Rbar>)_+^p over
//! the risky positions, followed by a linear rescale to hit the premium.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::optim::{self, SolveOptions};
use crate::scenario::{Exponent, ScenarioDistribution, ScenarioError};

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("covariance is not symmetric positive definite: {0}")]
    SingularCovariance(String),
    #[error("target return is unreachable: {0}")]
    InfeasibleTarget(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Joint scenario model for one riskless and n risky assets.
#[derive(Debug, Clone)]
pub struct MarketScenarios {
    returns: Vec<Vec<f64>>, // rows = scenarios, columns = risky assets
    weights: Vec<f64>,
    riskfree: f64,
    assets: Vec<String>,
}

impl MarketScenarios {
    pub fn new(
        returns: Vec<Vec<f64>>,
        weights: Vec<f64>,
        riskfree: f64,
    ) -> Result<Self, PortfolioError> {
        let names = (0..returns.first().map(Vec::len).unwrap_or(0))
            .map(|i| format!("asset{}", i + 1))
            .collect();
        Self::with_names(returns, weights, riskfree, names)
    }

    pub fn with_names(
        returns: Vec<Vec<f64>>,
        weights: Vec<f64>,
        riskfree: f64,
        assets: Vec<String>,
    ) -> Result<Self, PortfolioError> {
        if returns.is_empty() {
            return Err(ScenarioError::EmptyInput.into());
        }
        let n_assets = returns[0].len();
        if n_assets == 0 {
            return Err(ScenarioError::EmptyInput.into());
        }
        for (s, row) in returns.iter().enumerate() {
            if row.len() != n_assets {
                return Err(PortfolioError::Scenario(ScenarioError::ParseError {
                    line: s + 1,
                    msg: format!("scenario row has {} entries, expected {n_assets}", row.len()),
                }));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(ScenarioError::NonFiniteValue(s * n_assets + i).into());
            }
        }
        if !riskfree.is_finite() {
            return Err(ScenarioError::NonFiniteValue(0).into());
        }
        if assets.len() != n_assets {
            return Err(PortfolioError::Scenario(ScenarioError::ParseError {
                line: 0,
                msg: format!("{} asset names for {n_assets} columns", assets.len()),
            }));
        }
        // reuse the scenario weight validation
        let probe = ScenarioDistribution::new(vec![0.0; weights.len()], weights)?;
        Ok(Self {
            returns,
            weights: probe.weights().to_vec(),
            riskfree,
            assets,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.returns[0].len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.returns.len()
    }

    pub fn riskfree(&self) -> f64 {
        self.riskfree
    }

    pub fn asset_names(&self) -> &[String] {
        &self.assets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn returns(&self) -> &[Vec<f64>] {
        &self.returns
    }

    /// Scenario rows of excess returns Rbar = (R_1 - r, ..., R_n - r).
    pub fn excess_returns(&self) -> Vec<Vec<f64>> {
        self.returns
            .iter()
            .map(|row| row.iter().map(|v| v - self.riskfree).collect())
            .collect()
    }

    /// Expected excess return per risky asset.
    pub fn premia(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_assets()];
        for (row, &w) in self.returns.iter().zip(&self.weights) {
            for (i, &v) in row.iter().enumerate() {
                out[i] += w * (v - self.riskfree);
            }
        }
        out
    }

    /// Distribution of the total portfolio return for full weights
    /// (riskless first, then risky).
    pub fn portfolio_return(&self, full_weights: &[f64]) -> ScenarioDistribution {
        assert_eq!(full_weights.len(), self.n_assets() + 1);
        let values: Vec<f64> = self
            .returns
            .iter()
            .map(|row| {
                full_weights[0] * self.riskfree
                    + row
                        .iter()
                        .zip(&full_weights[1..])
                        .map(|(v, x)| v * x)
                        .sum::<f64>()
            })
            .collect();
        ScenarioDistribution::new(values, self.weights.clone())
            .expect("market invariants guarantee a valid distribution")
    }

    /// Weighted mean vector and covariance matrix of the risky returns.
    pub fn moments(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n_assets();
        let mut mean = vec![0.0; n];
        for (row, &w) in self.returns.iter().zip(&self.weights) {
            for (i, &v) in row.iter().enumerate() {
                mean[i] += w * v;
            }
        }
        let mut cov = vec![vec![0.0; n]; n];
        for (row, &w) in self.returns.iter().zip(&self.weights) {
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += w * (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        (mean, cov)
    }
}

#[derive(Deserialize)]
struct MarketJson {
    riskfree: f64,
    assets: Vec<String>,
    scenarios: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// Load a market from JSON:
/// `{"riskfree": r, "assets": [...], "scenarios": [[...], ...], "probs": [...]}`.
pub fn load_market_json(path: impl AsRef<Path>) -> Result<MarketScenarios, PortfolioError> {
    let text = std::fs::read_to_string(path).map_err(ScenarioError::from)?;
    parse_market_json(&text)
}

pub fn parse_market_json(text: &str) -> Result<MarketScenarios, PortfolioError> {
    let parsed: MarketJson =
        serde_json::from_str(text).map_err(|e| ScenarioError::ParseError {
            line: e.line(),
            msg: e.to_string(),
        })?;
    MarketScenarios::with_names(parsed.scenarios, parsed.probs, parsed.riskfree, parsed.assets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortfolioCase {
    Solved,
    /// Every risky premium is zero, so no expected premium is achievable
    /// and the rescaling step would divide by zero.
    NoPremiumAchievable,
}

#[derive(Debug, Clone)]
pub struct PortfolioSolution {
    /// Unscaled risky direction solving the convex program.
    pub risky_weights: Vec<f64>,
    /// Budget-feasible weights (riskless first) hitting the premium.
    pub full_weights: Vec<f64>,
    pub delta: f64,
    pub objective: f64,
    pub case: PortfolioCase,
}

/// Minimize the buffered probability of underperforming the riskless rate
/// subject to an expected premium `delta`.
///
/// Solves min E(1 - <x, Rbar>)_+^p over the risky positions (the premium
/// constraint drops: violating directions score at least one), then
/// rescales x*_i = delta x_i / E<x, Rbar> and funds the rest risklessly.
pub fn solve_bpoe_portfolio(
    m: &MarketScenarios,
    p: Exponent,
    delta: f64,
) -> Result<PortfolioSolution, PortfolioError> {
    assert!(delta > 0.0, "delta must be positive");
    let n = m.n_assets();
    let excess = m.excess_returns();
    let weights = m.weights().to_vec();
    let premia = m.premia();
    let scale = excess
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));

    if premia.iter().all(|pr| pr.abs() <= 1e-12 * scale.max(1.0)) {
        let mut full = vec![0.0; n + 1];
        full[0] = 1.0;
        return Ok(PortfolioSolution {
            risky_weights: vec![0.0; n],
            full_weights: full,
            delta,
            objective: 1.0,
            case: PortfolioCase::NoPremiumAchievable,
        });
    }

    let pw = p.p();
    let objective = |x: &[f64]| -> f64 {
        excess
            .iter()
            .zip(&weights)
            .map(|(row, w)| {
                let z: f64 = row.iter().zip(x).map(|(r, xi)| r * xi).sum();
                let t = (1.0 - z).max(0.0);
                if pw == 1.0 {
                    w * t
                } else if pw == 2.0 {
                    w * t * t
                } else {
                    w * t.powf(pw)
                }
            })
            .sum()
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        for (row, &w) in excess.iter().zip(&weights) {
            let z: f64 = row.iter().zip(x).map(|(r, xi)| r * xi).sum();
            let t = (1.0 - z).max(0.0);
            if t > 0.0 {
                let factor = if pw == 2.0 { 2.0 * t } else { pw * t.powf(pw - 1.0) };
                for (gi, &r) in g.iter_mut().zip(row) {
                    *gi -= w * factor * r;
                }
            }
        }
        g
    };

    // multi-start: origin, +/- unit directions of the two largest premia,
    // and seeded random fills
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| premia[b].abs().total_cmp(&premia[a].abs()));
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for &i in order.iter().take(2) {
        for sign in [1.0, -1.0] {
            let mut s = vec![0.0; n];
            s[i] = sign / scale.max(1e-9);
            starts.push(s);
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    while starts.len() < 8 {
        starts.push(
            (0..n)
                .map(|_| rng.random_range(-1.0..1.0) / scale.max(1e-9))
                .collect(),
        );
    }

    let inner = SolveOptions::with_tol(1e-11);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mut x in starts {
        for _ in 0..300 {
            for i in 0..n {
                let xi = x[i];
                let line = |t: f64| {
                    let mut z = x.clone();
                    z[i] = t;
                    objective(&z)
                };
                let h = 1.0f64.max(xi.abs());
                let report = optim::minimize_scalar_convex(line, (xi - h, xi + h), inner.tol)
                    .map_err(|e| PortfolioError::SolverFailure(e.to_string()))?;
                x[i] = report.argmin;
            }
            let g = gradient(&x);
            let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm <= 1e-10 * scale.max(1.0) {
                break;
            }
        }
        let val = objective(&x);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, x));
        }
    }
    let (objective_value, risky) = best.expect("at least one start");

    let premium: f64 = risky.iter().zip(&premia).map(|(x, pr)| x * pr).sum();
    if premium <= 0.0 {
        return Err(PortfolioError::SolverFailure(format!(
            "optimal direction has non-positive expected premium {premium}"
        )));
    }

    let factor = delta / premium;
    let mut full = vec![0.0; n + 1];
    for (i, x) in risky.iter().enumerate() {
        full[i + 1] = factor * x;
    }
    full[0] = 1.0 - full[1..].iter().sum::<f64>();

    Ok(PortfolioSolution {
        risky_weights: risky,
        full_weights: full,
        delta,
        objective: objective_value,
        case: PortfolioCase::Solved,
    })
}

/// Closed-form Markowitz frontier point with a riskless asset: minimal
/// variance for the target expected return. Returns the full weight vector
/// (riskless first) and the portfolio standard deviation.
pub fn markowitz_frontier(
    means: &[f64],
    covariance: &[Vec<f64>],
    riskfree: f64,
    mu_target: f64,
) -> Result<(Vec<f64>, f64), PortfolioError> {
    let n = means.len();
    let chol = cholesky(covariance)?;
    let excess: Vec<f64> = means.iter().map(|m| m - riskfree).collect();
    let z = chol_solve(&chol, &excess);
    let s: f64 = excess.iter().zip(&z).map(|(e, zi)| e * zi).sum();

    if mu_target == riskfree {
        let mut full = vec![0.0; n + 1];
        full[0] = 1.0;
        return Ok((full, 0.0));
    }
    if s <= 1e-14 {
        return Err(PortfolioError::InfeasibleTarget(format!(
            "no risky premium available to reach mu = {mu_target}"
        )));
    }
    let nu = (mu_target - riskfree) / s;
    let risky: Vec<f64> = z.iter().map(|zi| nu * zi).collect();
    let stdev = nu.abs() * s.sqrt();
    let mut full = vec![0.0; n + 1];
    full[0] = 1.0 - risky.iter().sum::<f64>();
    full[1..].copy_from_slice(&risky);
    Ok((full, stdev))
}

/// Sharpe ratio of the tangency portfolio. Along the efficient frontier
/// the ratio (mu - r)/sigma is constant and equal to this value.
pub fn tangency_sharpe_check(
    means: &[f64],
    covariance: &[Vec<f64>],
    riskfree: f64,
) -> Result<f64, PortfolioError> {
    let chol = cholesky(covariance)?;
    let excess: Vec<f64> = means.iter().map(|m| m - riskfree).collect();
    let z = chol_solve(&chol, &excess);
    let total: f64 = z.iter().sum();
    if total.abs() <= 1e-14 {
        return Err(PortfolioError::InfeasibleTarget(
            "tangency weights sum to zero".to_string(),
        ));
    }
    let w: Vec<f64> = z.iter().map(|zi| zi / total).collect();
    let mean: f64 = means.iter().zip(&w).map(|(m, wi)| m * wi).sum();
    let var = quad_form(covariance, &w);
    if var <= 0.0 {
        return Err(PortfolioError::SingularCovariance(
            "tangency portfolio has zero variance".to_string(),
        ));
    }
    Ok((mean - riskfree) / var.sqrt())
}

/// Direction of the tangency portfolio (unnormalized): inverse covariance
/// applied to the excess means.
pub fn tangency_direction(
    means: &[f64],
    covariance: &[Vec<f64>],
    riskfree: f64,
) -> Result<Vec<f64>, PortfolioError> {
    let chol = cholesky(covariance)?;
    let excess: Vec<f64> = means.iter().map(|m| m - riskfree).collect();
    Ok(chol_solve(&chol, &excess))
}

const PIVOT_TOL: f64 = 1e-12;

#[allow(clippy::needless_range_loop)]
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PortfolioError> {
    let n = a.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for i in 0..n {
        if a[i].len() != n {
            return Err(PortfolioError::SingularCovariance("not square".into()));
        }
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-10 * scale {
                return Err(PortfolioError::SingularCovariance(format!(
                    "asymmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum < PIVOT_TOL {
                    return Err(PortfolioError::SingularCovariance(format!(
                        "pivot {sum:.3e} at row {i}"
                    )));
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

fn quad_form(a: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, xi) in x.iter().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            total += a[i][j] * xi * xj;
        }
    }
    total
}
