//! Dynamic problems under geometric Brownian motion.
//!
//! Two closed-form solutions, each paired with a seeded Monte Carlo
//! validator:
//!
//! * proportional trading toward a target level c on a fixed horizon,
//!   where the optimally controlled shortfall Y = c - X is itself a GBM
//!   with drift -mu^2/(sigma^2 (p-1)) and volatility mu/(sigma (p-1));
//! * selling an indivisible asset at a threshold b, where the stopped
//!   price takes just two values (b with the hitting probability
//!   b^(gamma-1), else 0) and the optimal b minimizes an explicit
//!   function f(b).
//!
//! Path simulation is embarrassingly parallel: every path draws from its
//! own substream keyed by (seed, path index), so aggregates are identical
//! for any thread count.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::optim::{self, SolveOptions};
use crate::risk::{self, BpoeCase};
use crate::scenario::{Exponent, ScenarioDistribution};

#[derive(Debug, Error)]
pub enum DynamicError {
    #[error("p must exceed 1 for the dynamic problems, got {0}")]
    InvalidP(f64),
    #[error("goal price must be at least the starting price, got {0}")]
    InvalidGoal(f64),
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Market parameters of the geometric Brownian motion
/// S_t = s0 exp(sigma W_t + (mu - sigma^2/2) t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub s0: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64, s0: f64) -> Result<Self, DynamicError> {
        if !mu.is_finite() || !sigma.is_finite() || !s0.is_finite() {
            return Err(DynamicError::InvalidParams("non-finite parameter".into()));
        }
        if sigma <= 0.0 {
            return Err(DynamicError::InvalidParams(format!(
                "volatility must be positive, got {sigma}"
            )));
        }
        if s0 <= 0.0 {
            return Err(DynamicError::InvalidParams(format!(
                "initial price must be positive, got {s0}"
            )));
        }
        Ok(Self { mu, sigma, s0 })
    }
}

/// Specification of the trading problem: target level, exponent, horizon.
#[derive(Debug, Clone, Copy)]
pub struct ControlSpec {
    pub c: f64,
    pub p: f64,
    pub horizon: f64,
}

impl ControlSpec {
    pub fn new(c: f64, p: f64, horizon: f64) -> Result<Self, DynamicError> {
        if p <= 1.0 || !p.is_finite() {
            return Err(DynamicError::InvalidP(p));
        }
        if c <= 0.0 || horizon <= 0.0 {
            return Err(DynamicError::InvalidParams(format!(
                "target {c} and horizon {horizon} must be positive"
            )));
        }
        Ok(Self { c, p, horizon })
    }
}

// ---------------------------------------------------------------------------
// seeded normal sampling with per-path substreams
// ---------------------------------------------------------------------------

struct NormalSource {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl NormalSource {
    fn for_path(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(path.wrapping_add(1));
        Self { rng, spare: None }
    }

    fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - self.rng.random::<f64>(); // in (0, 1]
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    fn next_uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

/// Run one closure per path index and collect results in path order.
/// Chunked across `threads` workers; the output (and anything folded from
/// it) is bit-identical for any thread count.
pub(crate) fn run_paths<T, F>(n_paths: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let threads = threads.max(1).min(n_paths.max(1));
    if threads <= 1 {
        return (0..n_paths as u64).map(f).collect();
    }
    let chunk = n_paths.div_ceil(threads);
    let mut out: Vec<Vec<T>> = Vec::with_capacity(threads);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(n_paths);
            if lo >= hi {
                break;
            }
            let f = &f;
            handles.push(scope.spawn(move || (lo..hi).map(|i| f(i as u64)).collect::<Vec<T>>()));
        }
        for h in handles {
            out.push(h.join().expect("path worker panicked"));
        }
    });
    out.into_iter().flatten().collect()
}

/// Exact-discretization GBM paths, `n_steps + 1` points per path starting
/// at s0. Identical seeds give bit-identical paths for any thread count.
pub fn gbm_paths(
    g: &GbmParams,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    threads: usize,
) -> Vec<Vec<f64>> {
    assert!(n_steps >= 1 && n_paths >= 1 && horizon > 0.0);
    let dt = horizon / n_steps as f64;
    let drift = (g.mu - 0.5 * g.sigma * g.sigma) * dt;
    let vol = g.sigma * dt.sqrt();
    run_paths(n_paths, threads, |path| {
        let mut src = NormalSource::for_path(seed, path);
        let mut s = g.s0;
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(s);
        for _ in 0..n_steps {
            s *= (drift + vol * src.next_normal()).exp();
            out.push(s);
        }
        out
    })
}

/// Seeded i.i.d. normal draws, used for empirical front-ends and tests.
pub fn normal_samples(mean: f64, sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut src = NormalSource::for_path(seed, 0);
    (0..n).map(|_| mean + sd * src.next_normal()).collect()
}

// ---------------------------------------------------------------------------
// Problem 1: proportional trading toward a target
// ---------------------------------------------------------------------------

/// Closed-form law of the optimally controlled portfolio. The optimal
/// control is u_t = mu/(sigma^2 (p-1)) (c - X_t); the shortfall
/// Y_t = c - X_t is a GBM started at c with the drift and volatility
/// below, and X_T = c - Y_T.
#[derive(Debug, Clone, Copy)]
pub struct Problem1Solution {
    pub spec: ControlSpec,
    pub market: GbmParams,
    pub y_drift: f64,
    pub y_vol: f64,
    pub y0: f64,
}

pub fn problem1_optimal_control(
    spec: &ControlSpec,
    g: &GbmParams,
) -> Result<Problem1Solution, DynamicError> {
    if spec.p <= 1.0 {
        return Err(DynamicError::InvalidP(spec.p));
    }
    let denom = g.sigma * g.sigma * (spec.p - 1.0);
    Ok(Problem1Solution {
        spec: *spec,
        market: *g,
        y_drift: -g.mu * g.mu / denom,
        y_vol: g.mu.abs() / (g.sigma * (spec.p - 1.0)),
        y0: spec.c,
    })
}

impl Problem1Solution {
    /// Proportional gain of the optimal control u_t = k (c - X_t).
    pub fn feedback_gain(&self) -> f64 {
        self.market.mu / (self.market.sigma * self.market.sigma * (self.spec.p - 1.0))
    }

    /// Mean and variance of Y_T from the lognormal law.
    pub fn y_terminal_moments(&self) -> (f64, f64) {
        let t = self.spec.horizon;
        let mean = self.y0 * (self.y_drift * t).exp();
        let var = mean * mean * ((self.y_vol * self.y_vol * t).exp() - 1.0);
        (mean, var)
    }

    /// Exact draws of X_T = c - Y_T from the closed-form law.
    pub fn terminal_samples(&self, n_paths: usize, seed: u64, threads: usize) -> Vec<f64> {
        let t = self.spec.horizon;
        let drift = (self.y_drift - 0.5 * self.y_vol * self.y_vol) * t;
        let vol = self.y_vol * t.sqrt();
        let y0 = self.y0;
        run_paths(n_paths, threads, move |path| {
            let mut src = NormalSource::for_path(seed, path);
            y0.mul_add(-(drift + vol * src.next_normal()).exp(), y0)
        })
    }

    /// Population value of the control problem,
    /// exp(-T mu^2 / (2 sigma^2 (p-1))).
    pub fn closed_form_value(&self) -> f64 {
        (0.5 * self.y_drift * self.spec.horizon).exp()
    }
}

/// Euler simulation of the controlled wealth SDE dX = u (mu dt + sigma dW)
/// under the optimal feedback control; returns terminal values. This is
/// the validation route for the closed-form law above.
pub fn euler_controlled_terminal(
    spec: &ControlSpec,
    g: &GbmParams,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<f64>, DynamicError> {
    let sol = problem1_optimal_control(spec, g)?;
    let gain = sol.feedback_gain();
    let dt = spec.horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let (mu, sigma, c) = (g.mu, g.sigma, spec.c);
    Ok(run_paths(n_paths, threads, move |path| {
        let mut src = NormalSource::for_path(seed, path);
        let mut x = 0.0;
        for _ in 0..n_steps {
            let u = gain * (c - x);
            x += u * (mu * dt + sigma * sqrt_dt * src.next_normal());
        }
        x
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct Problem1Value {
    pub value: f64,
    pub stderr: f64,
    pub c_star: Option<f64>,
}

/// Monte Carlo estimate of the value P_p(-X_T, 0) of the trading problem,
/// sampling X_T from the closed-form law and taking the buffered
/// probability of the empirical distribution.
pub fn problem1_value(
    spec: &ControlSpec,
    g: &GbmParams,
    n_paths: usize,
    seed: u64,
    threads: usize,
) -> Result<Problem1Value, DynamicError> {
    let sol = problem1_optimal_control(spec, g)?;
    let xs = sol.terminal_samples(n_paths, seed, threads);
    let losses: Vec<f64> = xs.iter().map(|x| -x).collect();
    let d = ScenarioDistribution::from_samples(&losses)
        .map_err(|e| DynamicError::InvalidParams(e.to_string()))?;
    let p = Exponent::new(spec.p).map_err(|e| DynamicError::InvalidParams(e.to_string()))?;
    let b = risk::bpoe(&d, p, 0.0);

    let stderr = match b.case {
        BpoeCase::Main => {
            let c = b.c_star.unwrap_or(0.0);
            let n = losses.len() as f64;
            let zs: Vec<f64> = losses
                .iter()
                .map(|l| (c * l + 1.0).max(0.0).powf(spec.p))
                .collect();
            let mean = zs.iter().sum::<f64>() / n;
            let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1.0);
            let se_mean = (var / n).sqrt();
            (1.0 / spec.p) * mean.powf(1.0 / spec.p - 1.0) * se_mean
        }
        _ => 0.0,
    };

    Ok(Problem1Value { value: b.value, stderr, c_star: b.c_star })
}

// ---------------------------------------------------------------------------
// Problem 2: optimal selling at a threshold
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingCase {
    /// mu <= 0: every Markov time is optimal, the value is 1.
    AnyTimeOptimal,
    /// mu >= sigma^2/2: the price reaches any level with probability 1,
    /// so any sufficiently high selling level is optimal, the value is 0.
    AnyLevelOptimal,
    /// 0 < mu < sigma^2/2: sell at the first passage of b_star.
    Threshold,
}

/// Solution of the optimal selling problem. All quantities are in original
/// price units (inputs with s0 != 1 are normalized internally).
#[derive(Debug, Clone, Copy)]
pub struct StoppingSolution {
    pub case: StoppingCase,
    pub gamma: f64,
    pub b_star: f64,
    pub c_star: f64,
    pub value: f64,
}

/// Optimal coefficient c*(b) for a fixed threshold b, in normalized units
/// (s0 = 1, x >= 1). Clamped at zero, which makes f(x) = f(inf) = 1 exact.
fn stopping_coefficient(b: f64, x: f64, gamma: f64, p: f64) -> f64 {
    if b <= x {
        return 0.0;
    }
    let a = (x * (b.powf(1.0 - gamma) - 1.0) / (b - x)).powf(1.0 / (p - 1.0));
    ((1.0 - a) / (b - x + a * x)).max(0.0)
}

/// Objective f(b): the p-th power of the buffered shortfall probability of
/// selling at the first passage of b, with the optimal coefficient plugged
/// in. The stopped price takes the values b (probability b^(gamma-1)) and
/// 0 (never sold).
fn stopping_objective(b: f64, x: f64, gamma: f64, p: f64) -> f64 {
    let c = stopping_coefficient(b, x, gamma, p);
    let hit = b.powf(gamma - 1.0);
    let sold = (1.0 + c * (x - b)).max(0.0).powf(p);
    let unsold = (1.0 + c * x).powf(p);
    sold * hit + unsold * (1.0 - hit)
}

pub fn problem2_threshold(
    g: &GbmParams,
    x: f64,
    p: f64,
) -> Result<StoppingSolution, DynamicError> {
    if p <= 1.0 || !p.is_finite() {
        return Err(DynamicError::InvalidP(p));
    }
    let goal = x / g.s0; // normalize to s0 = 1
    if goal < 1.0 - 1e-12 {
        return Err(DynamicError::InvalidGoal(x));
    }
    let goal = goal.max(1.0);
    let gamma = 2.0 * g.mu / (g.sigma * g.sigma);

    if g.mu <= 0.0 {
        return Ok(StoppingSolution {
            case: StoppingCase::AnyTimeOptimal,
            gamma,
            b_star: goal * g.s0,
            c_star: 0.0,
            value: 1.0,
        });
    }
    if gamma >= 1.0 {
        return Ok(StoppingSolution {
            case: StoppingCase::AnyLevelOptimal,
            gamma,
            b_star: goal * g.s0,
            c_star: 0.0,
            value: 0.0,
        });
    }

    // interior minimum of f on (x, inf): f is continuous with
    // f(x) = f(inf) = 1, so expand until the tail is rising again
    let f = |b: f64| stopping_objective(b, goal, gamma, p);
    let lo = goal + 1e-8 * (1.0 + goal);
    let mut hi = (2.0 * goal).max(goal + 1.0);
    let mut best = (f(lo), lo);
    for _ in 0..60 {
        let mut tail_rising = true;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=256 {
            let b = lo * (hi / lo).powf(k as f64 / 256.0);
            let v = f(b);
            if v < best.0 {
                best = (v, b);
            }
            if k >= 232 {
                // last tenth of the grid must be rising
                if v < prev {
                    tail_rising = false;
                }
                prev = v;
            } else if k == 231 {
                prev = v;
            }
        }
        if tail_rising && f(hi) > best.0 {
            break;
        }
        hi *= 2.0;
    }
    let b_lo = (best.1 / 1.1).max(lo);
    let b_hi = (best.1 * 1.1).min(hi);
    let report = optim::minimize_scalar_convex_in(
        f,
        (b_lo, b_hi),
        (lo, hi),
        &SolveOptions::with_tol(1e-11 * (1.0 + best.1)),
    )
    .map_err(|e| DynamicError::InvalidRegime(e.to_string()))?;
    let b_star = report.argmin;

    Ok(StoppingSolution {
        case: StoppingCase::Threshold,
        gamma,
        b_star: b_star * g.s0,
        c_star: stopping_coefficient(b_star, goal, gamma, p) / g.s0,
        value: report.value.powf(1.0 / p),
    })
}

/// Evaluate f(b) in original units, for curve output and tests.
pub fn stopping_objective_at(
    g: &GbmParams,
    x: f64,
    p: f64,
    b: f64,
) -> Result<f64, DynamicError> {
    if p <= 1.0 || !p.is_finite() {
        return Err(DynamicError::InvalidP(p));
    }
    let gamma = 2.0 * g.mu / (g.sigma * g.sigma);
    if !(0.0 < g.mu && gamma < 1.0) {
        return Err(DynamicError::InvalidRegime(format!(
            "f(b) is defined for 0 < mu < sigma^2/2, got mu = {}, sigma = {}",
            g.mu, g.sigma
        )));
    }
    let goal = x / g.s0;
    if goal < 1.0 - 1e-12 {
        return Err(DynamicError::InvalidGoal(x));
    }
    Ok(stopping_objective((b / g.s0).max(goal), goal.max(1.0), gamma, p))
}

/// Sharpe ratio of the stopped return S_tau(b) - x as a function of the
/// threshold; for p = 2 its maximizer is an independent route to b*.
pub fn stopping_sharpe_at(g: &GbmParams, x: f64, b: f64) -> Result<f64, DynamicError> {
    let gamma = 2.0 * g.mu / (g.sigma * g.sigma);
    if !(0.0 < g.mu && gamma < 1.0) {
        return Err(DynamicError::InvalidRegime(
            "Sharpe curve needs 0 < mu < sigma^2/2".to_string(),
        ));
    }
    let goal = x / g.s0;
    let bn = b / g.s0;
    if bn <= goal {
        return Ok(0.0);
    }
    Ok((bn.powf(gamma) - goal)
        / (bn.powf(0.5 * (gamma + 1.0)) * (1.0 - bn.powf(gamma - 1.0)).sqrt()))
}

/// For p = 2 the optimal threshold also maximizes
/// g(b) = (b^gamma - x) / (b^((gamma+1)/2) sqrt(1 - b^(gamma-1))).
/// Returns the argmax; it must agree with the f-minimizer.
pub fn problem2_g_check(g: &GbmParams, x: f64) -> Result<f64, DynamicError> {
    let gamma = 2.0 * g.mu / (g.sigma * g.sigma);
    if !(0.0 < g.mu && gamma < 1.0) {
        return Err(DynamicError::InvalidRegime(format!(
            "the Sharpe route needs 0 < mu < sigma^2/2, got mu = {}, sigma = {}",
            g.mu, g.sigma
        )));
    }
    let goal = (x / g.s0).max(1.0);
    let neg_g = |b: f64| -> f64 {
        let num = b.powf(gamma) - goal;
        if b <= goal || num <= 0.0 {
            return 0.0;
        }
        -num / (b.powf(0.5 * (gamma + 1.0)) * (1.0 - b.powf(gamma - 1.0)).sqrt())
    };
    let lo = goal + 1e-8 * (1.0 + goal);
    let mut hi = (2.0 * goal).max(goal + 1.0);
    let mut best = (neg_g(lo), lo);
    for _ in 0..60 {
        for k in 0..=256 {
            let b = lo * (hi / lo).powf(k as f64 / 256.0);
            let v = neg_g(b);
            if v < best.0 {
                best = (v, b);
            }
        }
        if neg_g(hi) > best.0 {
            break;
        }
        hi *= 2.0;
    }
    let report = optim::minimize_scalar_convex_in(
        neg_g,
        ((best.1 / 1.1).max(lo), (best.1 * 1.1).min(hi)),
        (lo, hi),
        &SolveOptions::with_tol(1e-11 * (1.0 + best.1)),
    )
    .map_err(|e| DynamicError::InvalidRegime(e.to_string()))?;
    Ok(report.argmin * g.s0)
}

/// Probability that the GBM ever reaches level b (normalized s0 = 1).
pub fn hitting_probability(g: &GbmParams, b: f64) -> f64 {
    let level = b / g.s0;
    if level <= 1.0 {
        return 1.0;
    }
    let gamma = 2.0 * g.mu / (g.sigma * g.sigma);
    if gamma >= 1.0 {
        1.0
    } else {
        level.powf(gamma - 1.0)
    }
}

/// P(first passage of the log level happens by time T) for a Brownian
/// motion with drift nu and volatility sigma.
fn first_passage_cdf(level_log: f64, nu: f64, sigma: f64, t: f64) -> f64 {
    if level_log <= 0.0 {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let st = sigma * t.sqrt();
    let a = normal_cdf((nu * t - level_log) / st);
    let expo = 2.0 * nu * level_log / (sigma * sigma);
    let b = if expo > 700.0 {
        0.0 // reflected term underflows only when the direct term is ~1
    } else {
        expo.exp() * normal_cdf((-nu * t - level_log) / st)
    };
    (a + b).clamp(0.0, 1.0)
}

/// Shortest horizon T such that the analytic probability of hitting after
/// T, among eventually hitting paths, is below `residual`.
pub fn suggested_horizon_cap(g: &GbmParams, b: f64, residual: f64) -> f64 {
    let level = (b / g.s0).max(1.0 + 1e-12);
    let l = level.ln();
    let nu = g.mu - 0.5 * g.sigma * g.sigma;
    let p_ever = hitting_probability(g, b);
    let target = p_ever * (1.0 - residual);
    let mut lo = 1e-6;
    let mut hi = 1.0;
    while first_passage_cdf(l, nu, g.sigma, hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if first_passage_cdf(l, nu, g.sigma, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Monte Carlo cross-check of a Threshold solution.
#[derive(Debug, Clone, Copy)]
pub struct McValidation {
    /// Estimated buffered shortfall probability at the solved (b*, c*).
    pub estimate: f64,
    pub stderr: f64,
    pub hit_fraction: f64,
    pub hit_stderr: f64,
    /// Analytic bound on the hit-frequency bias from capping the horizon.
    pub hit_bias_bound: f64,
    /// Induced bound on the estimate bias.
    pub estimate_bias_bound: f64,
}

/// Simulate first passage of b* under the exact bridge-crossing law
/// (unbiased for any step size) up to `horizon_cap`; residual paths are
/// scored as never sold with S = 0.
#[allow(clippy::too_many_arguments)]
pub fn problem2_mc_validate(
    sol: &StoppingSolution,
    g: &GbmParams,
    x: f64,
    p: f64,
    n_paths: usize,
    horizon_cap: f64,
    seed: u64,
    threads: usize,
) -> Result<McValidation, DynamicError> {
    if sol.case != StoppingCase::Threshold {
        return Err(DynamicError::InvalidRegime(
            "Monte Carlo validation applies to the Threshold case".to_string(),
        ));
    }
    let goal = x / g.s0;
    let level = sol.b_star / g.s0;
    let c = sol.c_star * g.s0;
    let l = level.ln();
    let nu = g.mu - 0.5 * g.sigma * g.sigma;
    let sigma = g.sigma;

    let dt = (horizon_cap / 4000.0).max(1.0).min(horizon_cap);
    let n_steps = (horizon_cap / dt).ceil() as usize;

    let hits = run_paths(n_paths, threads, move |path| {
        let mut src = NormalSource::for_path(seed, path);
        let mut y = 0.0f64; // log price
        for _ in 0..n_steps {
            let y_next = y + nu * dt + sigma * dt.sqrt() * src.next_normal();
            if y_next >= l {
                return true;
            }
            // exact conditional crossing probability of the bridge
            let p_cross = (-2.0 * (l - y) * (l - y_next) / (sigma * sigma * dt)).exp();
            if src.next_uniform() < p_cross {
                return true;
            }
            y = y_next;
        }
        false
    });

    let n = n_paths as f64;
    let n_hit = hits.iter().filter(|h| **h).count() as f64;
    let hit_fraction = n_hit / n;
    let hit_stderr = (hit_fraction * (1.0 - hit_fraction) / n).sqrt();

    let z_hit = (1.0 + c * (goal - level)).max(0.0).powf(p);
    let z_miss = (1.0 + c * goal).powf(p);
    let mean = hit_fraction * z_hit + (1.0 - hit_fraction) * z_miss;
    let var = (hit_fraction * (z_hit - mean).powi(2) + (1.0 - hit_fraction) * (z_miss - mean).powi(2))
        * n
        / (n - 1.0);
    let estimate = mean.powf(1.0 / p);
    let dmean = (1.0 / p) * mean.powf(1.0 / p - 1.0);
    let stderr = dmean * (var / n).sqrt();

    let p_ever = hitting_probability(g, sol.b_star);
    let p_by_cap = first_passage_cdf(l, nu, sigma, horizon_cap);
    let hit_bias_bound = (p_ever - p_by_cap).max(0.0);
    let estimate_bias_bound = dmean * hit_bias_bound * (z_hit - z_miss).abs();

    Ok(McValidation {
        estimate,
        stderr,
        hit_fraction,
        hit_stderr,
        hit_bias_bound,
        estimate_bias_bound,
    })
}

/// Standard normal CDF (Abramowitz-Stegun 7.1.26 via erfc; about 1e-7
/// absolute accuracy, used only for horizon-cap calibration).
pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let sign_negative = x < 0.0;
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let val = poly * (-x * x).exp();
    if sign_negative {
        2.0 - val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(mu: f64, sigma: f64) -> GbmParams {
        GbmParams::new(mu, sigma, 1.0).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(GbmParams::new(0.1, 0.0, 1.0).is_err());
        assert!(GbmParams::new(0.1, 0.2, -1.0).is_err());
        assert!(ControlSpec::new(1.0, 1.0, 1.0).is_err());
        assert!(ControlSpec::new(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn gbm_same_seed_is_bit_identical() {
        let g = market(0.05, 0.3);
        let a = gbm_paths(&g, 1.0, 16, 32, 42, 1);
        let b = gbm_paths(&g, 1.0, 16, 32, 42, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn gbm_thread_count_does_not_change_paths() {
        let g = market(0.05, 0.3);
        let a = gbm_paths(&g, 1.0, 8, 33, 7, 1);
        let b = gbm_paths(&g, 1.0, 8, 33, 7, 4);
        let c = gbm_paths(&g, 1.0, 8, 33, 7, 8);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn gbm_degenerate_volatility_stays_at_start() {
        let g = GbmParams::new(0.0, 1e-8, 2.0).unwrap();
        let paths = gbm_paths(&g, 1.0, 4, 8, 1, 1);
        for path in paths {
            for s in path {
                assert!((s - 2.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gbm_terminal_mean_matches_lognormal_moment() {
        let g = market(0.07, 0.25);
        let t = 1.5;
        let paths = gbm_paths(&g, t, 1, 100_000, 42, 4);
        let terminals: Vec<f64> = paths.iter().map(|p| *p.last().unwrap()).collect();
        let n = terminals.len() as f64;
        let mean = terminals.iter().sum::<f64>() / n;
        let sd = (terminals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = g.s0 * (g.mu * t).exp();
        assert!(
            (mean - expected).abs() <= 3.0 * sd / n.sqrt(),
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn problem1_law_coefficients() {
        let spec = ControlSpec::new(1.0, 2.0, 1.0).unwrap();
        let sol = problem1_optimal_control(&spec, &market(0.1, 0.2)).unwrap();
        assert!((sol.y_drift + 0.25).abs() < 1e-15);
        assert!((sol.y_vol - 0.5).abs() < 1e-15);
        assert_eq!(sol.y0, 1.0);
    }

    #[test]
    fn problem1_no_drift_means_no_edge() {
        let spec = ControlSpec::new(1.0, 2.0, 1.0).unwrap();
        let g = market(0.0, 0.2);
        let v = problem1_value(&spec, &g, 1000, 3, 1).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn problem1_euler_matches_closed_form_moments() {
        let spec = ControlSpec::new(1.0, 2.0, 1.0).unwrap();
        let g = market(0.1, 0.2);
        let sol = problem1_optimal_control(&spec, &g).unwrap();
        let (ey, vy) = sol.y_terminal_moments();

        let n_paths = 4000;
        let xs = euler_controlled_terminal(&spec, &g, 2000, n_paths, 11, 2).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| spec.c - x).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
        let se_mean = (var / n).sqrt();
        assert!((mean - ey).abs() <= 3.0 * se_mean, "mean {mean} vs {ey}");

        let fourth = ys.iter().map(|y| (y - mean).powi(4)).sum::<f64>() / n;
        let se_var = ((fourth - var * var).max(0.0) / n).sqrt();
        assert!((var - vy).abs() <= 3.0 * se_var + 1e-3 * vy, "var {var} vs {vy}");
    }

    #[test]
    fn problem1_value_approaches_population_value() {
        let spec = ControlSpec::new(1.0, 2.0, 1.0).unwrap();
        let g = market(0.1, 0.2);
        let sol = problem1_optimal_control(&spec, &g).unwrap();
        let closed = sol.closed_form_value();
        assert!((closed - (-0.125f64).exp()).abs() < 1e-15);
        let v = problem1_value(&spec, &g, 100_000, 5, 4).unwrap();
        assert!(
            (v.value - closed).abs() <= 4.0 * v.stderr + 2e-3,
            "estimate {} vs closed form {closed} (se {})",
            v.value,
            v.stderr
        );
        assert!(v.value < 1.0 - 5.0 * v.stderr);
    }

    #[test]
    fn problem1_value_is_invariant_in_target_scale() {
        let g = market(0.1, 0.2);
        let mut values = Vec::new();
        for c in [0.5, 1.0, 2.0] {
            let spec = ControlSpec::new(c, 2.0, 1.0).unwrap();
            values.push(problem1_value(&spec, &g, 20_000, 9, 2).unwrap().value);
        }
        assert!((values[0] - values[1]).abs() < 1e-9);
        assert!((values[1] - values[2]).abs() < 1e-9);
    }

    #[test]
    fn problem2_degenerate_branches() {
        let down = problem2_threshold(&market(-0.05, 0.3), 1.0, 2.0).unwrap();
        assert_eq!(down.case, StoppingCase::AnyTimeOptimal);
        assert_eq!(down.value, 1.0);

        let up = problem2_threshold(&market(0.1, 0.4), 1.0, 2.0).unwrap();
        assert_eq!(up.case, StoppingCase::AnyLevelOptimal);
        assert_eq!(up.value, 0.0);
        // mu >= sigma^2/2 exactly at the boundary (binary-exact inputs)
        let edge = problem2_threshold(&market(0.125, 0.5), 1.0, 2.0).unwrap();
        assert_eq!(edge.case, StoppingCase::AnyLevelOptimal);

        assert!(matches!(
            problem2_threshold(&market(0.05, 0.4), 0.5, 2.0),
            Err(DynamicError::InvalidGoal(_))
        ));
        assert!(matches!(
            problem2_threshold(&market(0.05, 0.4), 1.0, 1.0),
            Err(DynamicError::InvalidP(_))
        ));
    }

    #[test]
    fn problem2_spec_point_has_gamma_0625() {
        let sol = problem2_threshold(&market(0.05, 0.4), 1.0, 2.0).unwrap();
        assert_eq!(sol.case, StoppingCase::Threshold);
        assert!((sol.gamma - 0.625).abs() < 1e-12);
        assert!(sol.b_star > 1.0);
        assert!(sol.value > 0.0 && sol.value < 1.0);
        // f at the minimizer beats a coarse oracle over (b, c)
        let g = market(0.05, 0.4);
        let mut oracle = f64::INFINITY;
        let mut oracle_b = 0.0;
        for i in 1..600 {
            let b = 1.0 + 49.0 * i as f64 / 600.0;
            for j in 0..=600 {
                let c = j as f64 / 600.0 / (b - 1.0).max(1e-9);
                let v = (1.0 + c * (1.0 - b)).max(0.0).powi(2) * b.powf(sol.gamma - 1.0)
                    + (1.0 + c).powi(2) * (1.0 - b.powf(sol.gamma - 1.0));
                if v < oracle {
                    oracle = v;
                    oracle_b = b;
                }
            }
        }
        assert!((sol.b_star - oracle_b).abs() < 0.1, "{} vs grid {}", sol.b_star, oracle_b);
        assert!(sol.value.powi(2) <= oracle + 1e-6);
        let _ = g;
    }

    #[test]
    fn problem2_f_endpoints_are_one() {
        let g = market(0.05, 0.4);
        for x in [1.0, 1.3, 2.0] {
            let near = stopping_objective_at(&g, x, 2.0, x * (1.0 + 1e-9)).unwrap();
            assert!((near - 1.0).abs() < 1e-6, "f(x+) = {near}");
            let far = stopping_objective_at(&g, x, 2.0, 1e9).unwrap();
            assert!((far - 1.0).abs() < 1e-3, "f(inf) = {far}");
            let sol = problem2_threshold(&g, x, 2.0).unwrap();
            let at_min = stopping_objective_at(&g, x, 2.0, sol.b_star).unwrap();
            assert!(at_min < 1.0);
        }
    }

    #[test]
    fn problem2_sharpe_route_matches_threshold() {
        let g = market(0.05, 0.4);
        let sol = problem2_threshold(&g, 1.0, 2.0).unwrap();
        let b_g = problem2_g_check(&g, 1.0).unwrap();
        assert!(
            (sol.b_star - b_g).abs() < 1e-4,
            "f-minimizer {} vs g-maximizer {}",
            sol.b_star,
            b_g
        );
        // the g-curve is maximal at the returned point
        let best = stopping_sharpe_at(&g, 1.0, b_g).unwrap();
        for k in 1..100 {
            let b = 1.0 + 0.5 * k as f64;
            let s = stopping_sharpe_at(&g, 1.0, b).unwrap();
            assert!(s <= best + 1e-9, "g({b}) = {s} > {best}");
        }
    }

    #[test]
    fn problem2_value_monotone_in_goal() {
        let g = market(0.05, 0.4);
        let mut prev = 0.0;
        for k in 0..6 {
            let x = 1.0 + 0.4 * k as f64;
            let sol = problem2_threshold(&g, x, 2.0).unwrap();
            assert!(sol.value >= prev - 1e-9, "x = {x}");
            prev = sol.value;
        }
    }

    #[test]
    fn problem2_s0_rescaling() {
        let unit = problem2_threshold(&market(0.05, 0.4), 1.2, 2.0).unwrap();
        let scaled_g = GbmParams::new(0.05, 0.4, 50.0).unwrap();
        let scaled = problem2_threshold(&scaled_g, 60.0, 2.0).unwrap();
        assert!((scaled.b_star - 50.0 * unit.b_star).abs() < 1e-6 * unit.b_star);
        assert!((scaled.value - unit.value).abs() < 1e-10);
        assert!((scaled.c_star - unit.c_star / 50.0).abs() < 1e-10);
    }

    #[test]
    fn problem2_mc_agrees_with_analytics() {
        let g = market(0.05, 0.4);
        let sol = problem2_threshold(&g, 1.0, 2.0).unwrap();
        let cap = suggested_horizon_cap(&g, sol.b_star, 0.002);
        let mc = problem2_mc_validate(&sol, &g, 1.0, 2.0, 20_000, cap, 13, 4).unwrap();
        let p_hit = hitting_probability(&g, sol.b_star);
        assert!(
            (mc.hit_fraction - p_hit).abs() <= 4.0 * mc.hit_stderr + mc.hit_bias_bound,
            "hit {} vs analytic {p_hit} (se {})",
            mc.hit_fraction,
            mc.hit_stderr
        );
        assert!(
            (mc.estimate - sol.value).abs() <= 4.0 * mc.stderr + mc.estimate_bias_bound,
            "estimate {} vs value {} (se {})",
            mc.estimate,
            sol.value,
            mc.stderr
        );
    }

    #[test]
    fn problem2_mc_is_thread_invariant() {
        let g = market(0.05, 0.4);
        let sol = problem2_threshold(&g, 1.0, 2.0).unwrap();
        let a = problem2_mc_validate(&sol, &g, 1.0, 2.0, 4000, 500.0, 99, 1).unwrap();
        let b = problem2_mc_validate(&sol, &g, 1.0, 2.0, 4000, 500.0, 99, 8).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.hit_fraction.to_bits(), b.hit_fraction.to_bits());
    }

    #[test]
    fn supercritical_drift_hits_everything() {
        // mu >= sigma^2/2: hitting probability of any level is 1
        let g = market(0.1, 0.4);
        assert_eq!(hitting_probability(&g, 3.0), 1.0);
        let sol = StoppingSolution {
            case: StoppingCase::Threshold,
            gamma: 2.0 * 0.1 / 0.16,
            b_star: 1.5,
            c_star: 0.4,
            value: 0.5,
        };
        let cap = suggested_horizon_cap(&g, 1.5, 0.001);
        let mc = problem2_mc_validate(&sol, &g, 1.0, 2.0, 4000, cap, 21, 2).unwrap();
        assert!(mc.hit_fraction > 0.99, "hit fraction {}", mc.hit_fraction);
    }

    #[test]
    fn p2_sharpe_of_optimal_control_beats_constant_strategies() {
        // closed form: Sharpe of X_T under the optimal control is
        // sqrt(exp(mu^2 T / sigma^2) - 1), constants give mu sqrt(T)/sigma
        let (mu, sigma, t) = (0.15f64, 0.2f64, 1.0f64);
        let theta = mu * mu * t / (sigma * sigma);
        let opt = (theta.exp() - 1.0).sqrt();
        let constant = theta.sqrt();
        assert!(opt > constant);

        let spec = ControlSpec::new(1.0, 2.0, t).unwrap();
        let sol = problem1_optimal_control(&spec, &market(mu, sigma)).unwrap();
        let xs = sol.terminal_samples(50_000, 31, 4);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let sharpe_mc = mean / sd;
        assert!((sharpe_mc - opt).abs() < 0.05, "MC sharpe {sharpe_mc} vs {opt}");
    }

    #[test]
    fn normal_cdf_sanity() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((normal_cdf(1.959_964) - 0.975).abs() < 1e-5);
        assert!(normal_cdf(-8.0) < 1e-14);
    }
}
