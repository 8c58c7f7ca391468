//! Lp-CVAR (superquantile) and the buffered probability of exceedance.
//!
//! The Lp-CVAR at level `lambda` is
//!
//! ```text
//! Q_p(X, lambda) = min_c ( (1 - lambda)^-1 ||(X - c)_+||_p + c )
//! ```
//!
//! and the buffered probability of exceedance (BPOE) is its inverse in the
//! level, computable directly as
//!
//! ```text
//! P_p(X, x) = min_{c >= 0} ||(c (X - x) + 1)_+||_p
//! ```
//!
//! BPOE dominates the plain exceedance probability P(X > x) and, unlike
//! it, is convex-friendly. For p in {1, 2} it connects to the monotone
//! Sharpe ratio: 1/(1 + MSR_p(X)^p) = P_p(-X, 0)^p.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::msr::{self, MsrError};
use crate::optim::{self, SolveOptions};
use crate::scenario::{Exponent, ScenarioDistribution};

/// CVAR value with the minimizing center.
///
/// At level 0 the value is E X exactly; for p > 1 that infimum is only
/// approached as c goes to -infinity, so the reported center is the
/// nominal `min X`.
#[derive(Debug, Clone, Copy)]
pub struct CvarResult {
    pub value: f64,
    pub level: f64,
    pub center: f64,
    pub p: Exponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpoeCase {
    /// x > ess sup X: probability 0.
    AboveSup,
    /// x = ess sup X: probability mass_at_sup^(1/p).
    AtSup,
    /// E X < x < ess sup X: solved by scalar minimization.
    Main,
    /// x <= E X: probability 1.
    BelowMean,
}

#[derive(Debug, Clone, Copy)]
pub struct BpoeResult {
    pub value: f64,
    pub case: BpoeCase,
    pub c_star: Option<f64>,
}

fn pw_pow(t: f64, pw: f64) -> f64 {
    if pw == 1.0 {
        t
    } else if pw == 2.0 {
        t * t
    } else {
        t.powf(pw)
    }
}

fn positive_part_norm(d: &ScenarioDistribution, c: f64, pw: f64) -> f64 {
    let s: f64 = d
        .atoms()
        .map(|(v, w)| w * pw_pow((v - c).max(0.0), pw))
        .sum();
    if pw == 1.0 {
        s
    } else {
        s.powf(1.0 / pw)
    }
}

/// Lp-CVAR at `level` in [0, 1). Panics if the level is out of range;
/// callers validate user input before reaching this point.
pub fn cvar(d: &ScenarioDistribution, p: Exponent, level: f64) -> CvarResult {
    assert!((0.0..1.0).contains(&level), "level must lie in [0, 1)");
    let pw = p.p();
    let lo = d.ess_inf();
    let hi = d.ess_sup();

    if level == 0.0 {
        return CvarResult { value: d.expectation(), level, center: lo, p };
    }
    if lo == hi {
        return CvarResult { value: lo, level, center: lo, p };
    }

    let scale = 1.0 / (1.0 - level);
    let objective = |c: f64| scale * positive_part_norm(d, c, pw) + c;
    // the minimizer can fall below min X for p > 1, so only the upper end
    // of the domain is capped (at c = ess sup the objective equals c)
    let report = optim::minimize_scalar_convex_in(
        objective,
        (lo, hi),
        (f64::NEG_INFINITY, hi),
        &SolveOptions::default(),
    )
    .expect("finite objective on a finite distribution");

    let center = if pw > 1.0 && !report.at_boundary {
        let derivative = |c: f64| {
            let mp: f64 = d
                .atoms()
                .map(|(v, w)| w * pw_pow((v - c).max(0.0), pw))
                .sum();
            if mp <= 0.0 {
                return 1.0;
            }
            let mtail: f64 = d
                .atoms()
                .map(|(v, w)| w * pw_pow((v - c).max(0.0), pw - 1.0))
                .sum();
            1.0 - scale * mtail * mp.powf((1.0 - pw) / pw)
        };
        optim::polish_with_derivative(derivative, report.argmin, f64::NEG_INFINITY, hi)
    } else {
        report.argmin
    };
    let value = objective(center).min(report.value);

    CvarResult { value, level, center, p }
}

/// Buffered probability that X exceeds x.
pub fn bpoe(d: &ScenarioDistribution, p: Exponent, x: f64) -> BpoeResult {
    let pw = p.p();
    let mean = d.expectation();
    let sup = d.ess_sup();

    if x <= mean {
        return BpoeResult { value: 1.0, case: BpoeCase::BelowMean, c_star: None };
    }
    if x > sup {
        return BpoeResult { value: 0.0, case: BpoeCase::AboveSup, c_star: None };
    }
    if x == sup {
        let value = d.mass_at_sup().powf(1.0 / pw);
        return BpoeResult { value, case: BpoeCase::AtSup, c_star: None };
    }

    let shifted = d.affine(1.0, -x); // E < 0 < ess sup after the shift
    let objective = |c: f64| -> f64 {
        let s: f64 = shifted
            .atoms()
            .map(|(v, w)| w * pw_pow((c * v + 1.0).max(0.0), pw))
            .sum();
        if pw == 1.0 {
            s
        } else {
            s.powf(1.0 / pw)
        }
    };

    let hint_hi = 1.0 / (x - d.ess_inf());
    let opts = SolveOptions {
        expand_factor: 4.0,
        max_expansions: 40,
        ..SolveOptions::default()
    };
    let report = optim::minimize_scalar_convex_in(
        objective,
        (0.0, hint_hi),
        (0.0, f64::INFINITY),
        &opts,
    )
    .expect("finite objective on a finite distribution");

    let c_star = if pw > 1.0 && !report.at_boundary {
        let derivative = |c: f64| {
            let mp: f64 = shifted
                .atoms()
                .map(|(v, w)| w * pw_pow((c * v + 1.0).max(0.0), pw))
                .sum();
            if mp <= 0.0 {
                return 0.0;
            }
            let grad: f64 = shifted
                .atoms()
                .map(|(v, w)| w * v * pw_pow((c * v + 1.0).max(0.0), pw - 1.0))
                .sum();
            grad * mp.powf((1.0 - pw) / pw)
        };
        optim::polish_with_derivative(derivative, report.argmin, 0.0, f64::INFINITY)
    } else {
        report.argmin
    };
    let value = objective(c_star).min(report.value).min(1.0);

    BpoeResult { value, case: BpoeCase::Main, c_star: Some(c_star) }
}

/// Round-trip check of the inverse relation: evaluates
/// `Q_p(X, 1 - P_p(X, x))`, which must reproduce x for Main-branch x.
pub fn bpoe_cvar_inverse_check(d: &ScenarioDistribution, p: Exponent, x: f64) -> f64 {
    let b = bpoe(d, p, x);
    debug_assert_eq!(b.case, BpoeCase::Main, "inverse check needs a Main-branch x");
    cvar(d, p, (1.0 - b.value).max(0.0)).value
}

/// Evaluates both sides of the identity 1/(1 + MSR_p(X)^p) = P_p(-X, 0)^p
/// for p in {1, 2} and returns them as (lhs, rhs).
pub fn msr_bpoe_identity_check(
    d: &ScenarioDistribution,
    p: Exponent,
) -> Result<(f64, f64), MsrError> {
    let pw = p.p();
    let m = msr::msr_p12(d, p, 0.0)?;
    let lhs = if m.value.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + m.value.powf(pw))
    };
    let neg = d.affine(-1.0, 0.0);
    let rhs = pw_pow(bpoe(&neg, p, 0.0).value, pw);
    Ok((lhs, rhs))
}

/// Best-effort numerical evaluation of the dual representation
///
/// ```text
/// Q_p(X, lambda) = sup { E(R X) : R >= 0, ||R||_q <= (1-lambda)^-1, E R = 1 }
/// ```
///
/// by projected multi-start search over the scaled constraint set.
/// Test-side only; the production value is always the primal.
pub fn cvar_dual_check(d: &ScenarioDistribution, p: Exponent, level: f64) -> f64 {
    assert!((0.0..1.0).contains(&level));
    let q = p.q();
    assert!(q.is_finite(), "dual check needs p > 1");
    let kappa = 1.0 / (1.0 - level);
    let n = d.len();
    let weights: Vec<f64> = d.weights().to_vec();
    let values: Vec<f64> = d.values().to_vec();

    let qnorm = |r: &[f64]| -> f64 {
        r.iter()
            .zip(&weights)
            .map(|(ri, w)| w * ri.abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    };
    let mean = |r: &[f64]| -> f64 { r.iter().zip(&weights).map(|(ri, w)| w * ri).sum() };
    let objective = |r: &[f64]| -> f64 {
        r.iter()
            .zip(values.iter().zip(&weights))
            .map(|(ri, (v, w))| w * ri * v)
            .sum()
    };

    // clip to R >= 0, rescale to E R = 1, then pull toward R = 1 until the
    // q-norm cap holds (R = 1 is always feasible)
    let project = |r: &[f64]| -> Vec<f64> {
        let mut r: Vec<f64> = r.iter().map(|x| x.max(0.0)).collect();
        let m = mean(&r);
        if m <= 1e-300 {
            return vec![1.0; n];
        }
        for x in &mut r {
            *x /= m;
        }
        if qnorm(&r) <= kappa {
            return r;
        }
        let (mut t_lo, mut t_hi) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let t = 0.5 * (t_lo + t_hi);
            let blend: Vec<f64> = r.iter().map(|x| t * x + (1.0 - t)).collect();
            if qnorm(&blend) <= kappa {
                t_lo = t;
            } else {
                t_hi = t;
            }
        }
        r.iter().map(|x| t_lo * x + (1.0 - t_lo)).collect()
    };

    let mut candidates: Vec<Vec<f64>> = vec![vec![1.0; n]];
    // tilted candidates concentrated on the upper tail, scanned over the
    // tilt location and refined around the best one
    let lo = d.ess_inf();
    let hi = d.ess_sup();
    let range = (hi - lo).max(1e-12);
    let tilt = |c: f64| -> Vec<f64> {
        let r: Vec<f64> = values
            .iter()
            .map(|v| (v - c).max(0.0).powf(p.p() - 1.0))
            .collect();
        project(&r)
    };
    let mut c_lo = lo - range;
    let mut c_hi = hi;
    let mut best_c = c_lo;
    let mut best_val = f64::NEG_INFINITY;
    for _ in 0..6 {
        for k in 0..=64 {
            let c = c_lo + (c_hi - c_lo) * k as f64 / 64.0;
            let val = objective(&tilt(c));
            if val > best_val {
                best_val = val;
                best_c = c;
            }
        }
        let step = (c_hi - c_lo) / 64.0;
        c_lo = best_c - step;
        c_hi = best_c + step;
    }
    candidates.push(tilt(best_c));
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for _ in 0..40 {
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        candidates.push(project(&r));
    }

    let mut best = candidates
        .into_iter()
        .map(|r| (objective(&r), r))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty candidate set");

    // projected ascent along the objective gradient
    let mut eta = range;
    while eta > 1e-12 {
        let proposal: Vec<f64> = best.1.iter().zip(&values).map(|(r, v)| r + eta * v).collect();
        let projected = project(&proposal);
        let val = objective(&projected);
        if val > best.0 + 1e-15 {
            best = (val, projected);
        } else {
            eta *= 0.5;
        }
    }
    best.0
}
