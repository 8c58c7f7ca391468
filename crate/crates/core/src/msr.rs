//! The monotone Sharpe ratio MSR_p.
//!
//! MSR_p(X) is the supremum of the Lp-Sharpe ratio E Y / sigma_p(Y) over
//! all returns Y dominated by X (Y <= X a.s.). It repairs the classical
//! ratio's lack of monotonicity. Two convex representations are
//! implemented: a two-parameter concave maximization valid for any
//! p in (1, inf), and a one-parameter convex minimization for p in {1, 2}:
//!
//! ```text
//! 1 / (1 + MSR_p(X)^p) = min_c E (1 - c X)_+^p
//! ```
//!
//! Degenerate cases are classified before any solver runs: E X <= 0 gives
//! MSR = 0, and X >= 0 a.s. with P(X > 0) > 0 gives MSR = +inf.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::deviation;
use crate::optim::{self, OptimError, SolveOptions};
use crate::scenario::{Exponent, ScenarioDistribution};

#[derive(Debug, Error)]
pub enum MsrError {
    #[error("unsupported exponent p = {0} for this representation")]
    UnsupportedExponent(f64),
    #[error("solver failure: {0}")]
    SolverFailure(#[from] OptimError),
}

/// Degenerate-case classification, decided by exact scenario arithmetic
/// before any solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsrCase {
    /// E X <= 0: the ratio is 0.
    Zero,
    /// X >= 0 a.s. with P(X > 0) > 0: the ratio is +inf.
    Infinite,
    /// E X > 0 and P(X < 0) > 0: the ratio is finite and positive.
    Interior,
}

/// Optimizer location for the representation that produced the value.
#[derive(Debug, Clone, Copy)]
pub enum MsrDiagnostics {
    /// Maximizer (a, b) of the two-parameter program.
    MaxPair { a: f64, b: f64 },
    /// Minimizing scale c of the one-parameter program.
    MinScale { c: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct MsrResult {
    pub value: f64,
    pub case: MsrCase,
    pub diagnostics: Option<MsrDiagnostics>,
}

impl MsrResult {
    fn degenerate(case: MsrCase) -> Self {
        let value = match case {
            MsrCase::Zero => 0.0,
            MsrCase::Infinite => f64::INFINITY,
            MsrCase::Interior => unreachable!("interior is not degenerate"),
        };
        Self { value, case, diagnostics: None }
    }
}

fn classify(shifted: &ScenarioDistribution) -> MsrCase {
    if shifted.expectation() <= 0.0 {
        MsrCase::Zero
    } else if shifted.ess_inf() >= 0.0 {
        MsrCase::Infinite
    } else {
        MsrCase::Interior
    }
}

/// MSR_p for p in (1, inf) via the two-parameter representation
///
/// ```text
/// MSR_p(X)^q = max_{a,b} { b - E( (q-1)/q^p |(aX+b)_+ - q|^p + (aX+b)_+ ) }
/// ```
///
/// with 1/p + 1/q = 1. Returns the maximizer in the diagnostics.
pub fn msr_general(
    d: &ScenarioDistribution,
    p: Exponent,
    riskfree: f64,
) -> Result<MsrResult, MsrError> {
    let pw = p.p();
    if pw <= 1.0 {
        return Err(MsrError::UnsupportedExponent(pw));
    }
    let x = d.affine(1.0, -riskfree);
    let case = classify(&x);
    if case != MsrCase::Interior {
        return Ok(MsrResult::degenerate(case));
    }

    let q = p.q();
    let coef = (q - 1.0) / q.powf(pw);
    let objective = |a: f64, b: f64| -> f64 {
        let penalty: f64 = x
            .atoms()
            .map(|(v, w)| {
                let t = (a * v + b).max(0.0);
                w * (coef * (t - q).abs().powf(pw) + t)
            })
            .sum();
        b - penalty
    };

    // dimensional start: a has units 1/X, b is dimensionless
    let sigma = deviation::lp_deviation(&x, p).sigma;
    let a0 = if sigma > 0.0 { 1.0 / sigma } else { 1.0 };
    let report = optim::maximize_2d_concave(objective, (a0, 1.0), 1e-8)?;
    let value = report.value.max(0.0).powf(1.0 / q);

    Ok(MsrResult {
        value,
        case,
        diagnostics: Some(MsrDiagnostics::MaxPair {
            a: report.argmax.0,
            b: report.argmax.1,
        }),
    })
}

/// MSR_p for p in {1, 2} via the one-parameter representation
/// `1/(1 + MSR^p) = min_{c >= 0} E (1 - c X)_+^p`.
///
/// For p = 1 with E X > 0 the value may come out zero; this is reported as
/// an Interior case with zero value, not as the Zero case.
///
/// Caveat for p = 1: on supports with three or more atoms the
/// one-parameter program can return strictly less than the dominated-return
/// supremum that defines the monotone ratio (and strictly less than the
/// plain Sharpe ratio E X / sigma_1). The two routes agree on two-point
/// supports and everywhere for p = 2; `msr_bruteforce_oracle` measures the
/// supremum directly when the distinction matters.
pub fn msr_p12(
    d: &ScenarioDistribution,
    p: Exponent,
    riskfree: f64,
) -> Result<MsrResult, MsrError> {
    let pw = p.p();
    if pw != 1.0 && pw != 2.0 {
        return Err(MsrError::UnsupportedExponent(pw));
    }
    let x = d.affine(1.0, -riskfree);
    let case = classify(&x);
    if case != MsrCase::Interior {
        return Ok(MsrResult::degenerate(case));
    }

    let objective = |c: f64| -> f64 {
        x.atoms()
            .map(|(v, w)| {
                let t = (1.0 - c * v).max(0.0);
                if pw == 1.0 {
                    w * t
                } else {
                    w * t * t
                }
            })
            .sum()
    };

    // E X > 0 makes negative c suboptimal; only c(min X) can be penalized
    let min_v = x.ess_inf(); // < 0 in the interior case
    let hint_hi = 10.0 / min_v.abs().max(1e-12);
    let report = optim::minimize_scalar_convex_in(
        objective,
        (0.0, hint_hi),
        (0.0, f64::INFINITY),
        &SolveOptions::default(),
    )?;

    let c_star = if pw == 2.0 {
        // smooth objective: bisect its exact derivative
        let derivative = |c: f64| -> f64 {
            -2.0 * x
                .atoms()
                .map(|(v, w)| w * v * (1.0 - c * v).max(0.0))
                .sum::<f64>()
        };
        optim::polish_with_derivative(derivative, report.argmin, 0.0, f64::INFINITY)
    } else {
        report.argmin
    };
    let min_value = objective(c_star).min(report.value);

    let value = (1.0 / min_value - 1.0).max(0.0).powf(1.0 / pw);
    Ok(MsrResult {
        value,
        case,
        diagnostics: Some(MsrDiagnostics::MinScale { c: c_star }),
    })
}

/// Dominated return achieving the monotone Sharpe ratio for p = 2.
///
/// The optimal disposal caps the return: Y = min(X, theta) with
/// theta = E Y^2 / E Y at the optimum. The cap is located by a scalar
/// search and tightened by fixed-point iteration.
#[derive(Debug, Clone)]
pub struct DominatedWitness {
    pub values: Vec<f64>,
    pub cap: f64,
    pub sharpe: f64,
}

pub fn dominated_witness_p2(
    d: &ScenarioDistribution,
    riskfree: f64,
) -> Result<DominatedWitness, MsrError> {
    let x = d.affine(1.0, -riskfree);
    if classify(&x) != MsrCase::Interior {
        return Err(MsrError::UnsupportedExponent(2.0));
    }
    let sharpe_capped = |theta: f64| -> f64 {
        let capped = x.map_values(|v| v.min(theta));
        let mean = capped.expectation();
        let m2: f64 = capped.atoms().map(|(v, w)| w * v * v).sum();
        let var = (m2 - mean * mean).max(0.0);
        if var <= 0.0 {
            f64::NEG_INFINITY
        } else {
            mean / var.sqrt()
        }
    };
    let lo = x.ess_inf();
    let hi = x.ess_sup();
    let report = optim::minimize_scalar_convex_in(
        |t| -sharpe_capped(t),
        (0.5 * (lo + hi), hi),
        (lo, hi),
        &SolveOptions::default(),
    )?;
    // KKT fixed point theta = E Y^2 / E Y
    let mut theta = report.argmin;
    for _ in 0..200 {
        let capped = x.map_values(|v| v.min(theta));
        let mean = capped.expectation();
        let m2: f64 = capped.atoms().map(|(v, w)| w * v * v).sum();
        if mean <= 0.0 {
            break;
        }
        let next = (m2 / mean).min(hi);
        if (next - theta).abs() <= 1e-15 * (1.0 + theta.abs()) {
            theta = next;
            break;
        }
        theta = next;
    }
    if sharpe_capped(theta) < sharpe_capped(report.argmin) {
        theta = report.argmin;
    }
    Ok(DominatedWitness {
        values: x.values().iter().map(|&v| v.min(theta)).collect(),
        cap: theta,
        sharpe: sharpe_capped(theta),
    })
}

/// Brute-force oracle for small scenario sets: maximizes E Y / sigma_p(Y)
/// directly over dominated vectors y_i <= v_i by seeded multi-start local
/// search with coordinate refinement. Best-effort, test-side only.
pub fn msr_bruteforce_oracle(d: &ScenarioDistribution, p: Exponent, seed: u64) -> f64 {
    let case = classify(d);
    match case {
        MsrCase::Zero => return 0.0,
        MsrCase::Infinite => return f64::INFINITY,
        MsrCase::Interior => {}
    }
    let n = d.len();
    let values = d.values().to_vec();
    let weights = d.weights().to_vec();
    let range = d.ess_sup() - d.ess_inf();
    let floor: Vec<f64> = values.iter().map(|v| v - 5.0 * range).collect();

    let score = |y: &[f64]| -> f64 {
        let mean: f64 = y.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let sigma = sigma_p(y, &weights, p);
        if sigma <= 1e-12 {
            f64::NEG_INFINITY
        } else {
            mean / sigma
        }
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(520);
    starts.push(values.clone());
    // capped returns are natural candidates for the optimal disposal
    for k in 1..16 {
        let theta = d.ess_inf() + range * k as f64 / 16.0;
        starts.push(values.iter().map(|v| v.min(theta)).collect());
    }
    for _ in 0..500 {
        starts.push(
            (0..n)
                .map(|i| rng.random_range(floor[i]..=values[i]))
                .collect(),
        );
    }

    let mut scored: Vec<(f64, Vec<f64>)> =
        starts.into_iter().map(|y| (score(&y), y)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.truncate(12);

    let mut best = scored[0].clone();
    for (_, mut y) in scored {
        for _ in 0..8 {
            let mut improved = false;
            for i in 0..n {
                let yi = y[i];
                let line = |t: f64| {
                    let mut z = y.clone();
                    z[i] = t;
                    -score(&z)
                };
                if let Ok(r) = optim::minimize_scalar_convex_in(
                    line,
                    (yi - 0.1 * range, yi + 0.1 * range),
                    (floor[i], values[i]),
                    &SolveOptions::with_tol(1e-10),
                ) {
                    if -r.value > score(&y) {
                        y[i] = r.argmin;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let s = score(&y);
        if s > best.0 {
            best = (s, y);
        }
    }
    best.0
}

/// sigma_p of a raw vector with weights, using closed forms for p in {1, 2}
/// so the oracle stays independent of the production solve path.
fn sigma_p(y: &[f64], weights: &[f64], p: Exponent) -> f64 {
    let pw = p.p();
    if pw == 2.0 {
        let mean: f64 = y.iter().zip(weights).map(|(v, w)| v * w).sum();
        let m2: f64 = y.iter().zip(weights).map(|(v, w)| v * v * w).sum();
        (m2 - mean * mean).max(0.0).sqrt()
    } else if pw == 1.0 {
        let mut atoms: Vec<(f64, f64)> = y.iter().copied().zip(weights.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        let mut med = atoms[atoms.len() - 1].0;
        for &(v, w) in &atoms {
            cum += w;
            if cum >= 0.5 {
                med = v;
                break;
            }
        }
        y.iter().zip(weights).map(|(v, w)| w * (v - med).abs()).sum()
    } else {
        match ScenarioDistribution::new(y.to_vec(), weights.to_vec()) {
            Ok(d) => deviation::lp_deviation(&d, p).sigma,
            Err(_) => f64::NAN,
        }
    }
}
