//! Scalar and two-variable smooth optimization.
//!
//! Everything here is derivative-free: golden-section search with parabolic
//! acceleration for one variable, coordinate ascent over nested scalar
//! solves for two. The objectives in this crate are convex (or concave)
//! finite sums with at most one kink family, so this is both robust and
//! fast. No external solver is used.

use thiserror::Error;

/// Default argument tolerance for scalar minimization.
pub const DEFAULT_SCALAR_TOL: f64 = 1e-9;
/// Default gradient-norm tolerance for two-variable maximization.
pub const DEFAULT_2D_TOL: f64 = 1e-7;

const GOLDEN: f64 = 0.381_966_011_250_105_2; // 2 - phi

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("objective is not finite at {0}")]
    NonFiniteObjective(f64),
    #[error("iterate diverged (norm exceeded {0:e})")]
    Diverged(f64),
}

/// Options for the scalar solver. `expand_factor` and `max_expansions`
/// control the geometric bracket search around the caller's hint.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub expand_factor: f64,
    pub max_expansions: u32,
    pub max_iterations: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SCALAR_TOL,
            expand_factor: 2.0,
            max_expansions: 90,
            max_iterations: 400,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Result of a scalar minimization.
///
/// `at_boundary` is set when the objective was monotone over the whole
/// expansion range (or the domain edge is the minimizer), in which case
/// `argmin` is the best boundary point rather than an interior minimum.
#[derive(Debug, Clone, Copy)]
pub struct ScalarSolveReport {
    pub argmin: f64,
    pub value: f64,
    pub iterations: u64,
    pub bracket: (f64, f64),
    pub at_boundary: bool,
}

/// Minimize a convex function over the whole real line, starting from a
/// bracket hint that is expanded geometrically until it contains a minimum.
pub fn minimize_scalar_convex(
    f: impl Fn(f64) -> f64,
    bracket_hint: (f64, f64),
    tol: f64,
) -> Result<ScalarSolveReport, OptimError> {
    minimize_scalar_convex_in(
        f,
        bracket_hint,
        (f64::NEG_INFINITY, f64::INFINITY),
        &SolveOptions::with_tol(tol),
    )
}

/// Minimize a convex function over `domain`, expanding the bracket hint
/// geometrically inside the domain. A boundary minimizer is returned
/// exactly, with `at_boundary` set.
pub fn minimize_scalar_convex_in(
    f: impl Fn(f64) -> f64,
    bracket_hint: (f64, f64),
    domain: (f64, f64),
    opts: &SolveOptions,
) -> Result<ScalarSolveReport, OptimError> {
    let (dlo, dhi) = domain;
    debug_assert!(dlo < dhi);
    // non-finite values never win a comparison
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            y
        } else {
            f64::INFINITY
        }
    };

    let (mut a, mut b) = bracket_hint;
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    a = a.clamp(dlo, dhi);
    b = b.clamp(dlo, dhi);
    if a == b {
        let step = 0.5 * (1.0 + a.abs());
        a = (a - step).max(dlo);
        b = (b + step).min(dhi);
    }

    let mut m = 0.5 * (a + b);
    let (mut fa, mut fm, mut fb) = (eval(a), eval(m), eval(b));
    let mut span = b - a;
    let mut expansions = 0u32;
    let boundary = |x: f64, fx: f64, a: f64, b: f64| -> Result<ScalarSolveReport, OptimError> {
        if !fx.is_finite() {
            return Err(OptimError::NonFiniteObjective(x));
        }
        Ok(ScalarSolveReport {
            argmin: x,
            value: fx,
            iterations: 0,
            bracket: (a, b),
            at_boundary: true,
        })
    };

    // expand until f(m) <= f(a) and f(m) <= f(b); at a domain edge the
    // interval shrinks toward the edge instead, since the minimum may
    // still hide between the edge and the midpoint
    let mut shrinks = 0u32;
    loop {
        if fm <= fa && fm <= fb {
            break;
        }
        if expansions >= opts.max_expansions || shrinks >= 120 {
            // monotone over the maximum expansion range
            return if fa < fb { boundary(a, fa, a, b) } else { boundary(b, fb, a, b) };
        }
        if fa < fm {
            if a <= dlo {
                if b - a <= 2.0 * opts.tol {
                    return boundary(a, fa, a, b);
                }
                shrinks += 1;
                b = m;
                fb = fm;
                m = 0.5 * (a + b);
                fm = eval(m);
                continue;
            }
            expansions += 1;
            span *= opts.expand_factor;
            b = m;
            fb = fm;
            m = a;
            fm = fa;
            a = (m - span).max(dlo);
            fa = eval(a);
        } else {
            if b >= dhi {
                if b - a <= 2.0 * opts.tol {
                    return boundary(b, fb, a, b);
                }
                shrinks += 1;
                a = m;
                fa = fm;
                m = 0.5 * (a + b);
                fm = eval(m);
                continue;
            }
            expansions += 1;
            span *= opts.expand_factor;
            a = m;
            fa = fm;
            m = b;
            fm = fb;
            b = (m + span).min(dhi);
            fb = eval(b);
        }
    }

    // Brent: golden section with parabolic acceleration on [a, b]
    let mut x = m;
    let mut w = m;
    let mut v = m;
    let mut fx = fm;
    let mut fw = fm;
    let mut fv = fm;
    let mut d = 0.0f64;
    let mut e = 0.0f64;
    let mut iterations = 0u64;

    for _ in 0..opts.max_iterations {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let tol1 = opts.tol + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut use_golden = true;
        if e.abs() > tol1 {
            // parabolic fit through (x, w, v)
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + if d >= 0.0 { tol1 } else { -tol1 }
        };
        let fu = eval(u);

        // ties move left so flat regions resolve to the smallest argmin
        if fu < fx || (fu == fx && u < x) {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    // a domain edge inside the final bracket may still be the exact minimizer
    let mut at_boundary = false;
    for edge in [a, b] {
        if (edge == dlo || edge == dhi) && eval(edge) <= fx {
            x = edge;
            fx = eval(edge);
            at_boundary = true;
        }
    }

    if !fx.is_finite() {
        return Err(OptimError::NonFiniteObjective(x));
    }
    Ok(ScalarSolveReport {
        argmin: x,
        value: fx,
        iterations,
        bracket: (a, b),
        at_boundary,
    })
}

/// Polish a convex minimizer to near machine precision by bisecting the
/// (nondecreasing) derivative of the objective inside `[lo, hi]`.
///
/// Value-only search localizes a smooth minimum no better than
/// sqrt(machine epsilon); callers that can evaluate the exact derivative
/// of their finite-sum objectives use this to tighten the argmin.
/// Falls back to `x0` when no sign change is found.
pub fn polish_with_derivative(
    df: impl Fn(f64) -> f64,
    x0: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let d0 = df(x0);
    if !d0.is_finite() {
        return x0;
    }
    // grow an interval around x0 until the derivative changes sign
    let mut step = 1e-7 * (1.0 + x0.abs());
    let (mut a, mut b) = (x0, x0);
    let (mut da, mut db) = (d0, d0);
    for _ in 0..80 {
        if da > 0.0 && a > lo {
            a = (a - step).max(lo);
            da = df(a);
        }
        if db < 0.0 && b < hi {
            b = (b + step).min(hi);
            db = df(b);
        }
        if da <= 0.0 && db >= 0.0 {
            break;
        }
        step *= 4.0;
    }
    if !(da <= 0.0 && db >= 0.0) || !(da.is_finite() && db.is_finite()) {
        return x0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let dm = df(mid);
        if !dm.is_finite() {
            break;
        }
        if dm < 0.0 {
            a = mid;
        } else if dm > 0.0 {
            b = mid;
        } else {
            return mid;
        }
    }
    0.5 * (a + b)
}

/// Result of a two-variable concave maximization.
#[derive(Debug, Clone, Copy)]
pub struct Solve2dReport {
    pub argmax: (f64, f64),
    pub value: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Maximize a concave function of two variables by coordinate ascent over
/// nested scalar solves, multi-started from a fixed 3x3 grid of scaled
/// starts. Convergence is declared when the central finite-difference
/// gradient norm drops below `tol`.
pub fn maximize_2d_concave(
    f: impl Fn(f64, f64) -> f64,
    start: (f64, f64),
    tol: f64,
) -> Result<Solve2dReport, OptimError> {
    const DIVERGENCE_NORM: f64 = 1e8;

    let scales = |s: f64| -> [f64; 3] {
        if s == 0.0 {
            [-1.0, 0.0, 1.0]
        } else {
            [0.5 * s, s, 2.0 * s]
        }
    };

    let mut best: Option<Solve2dReport> = None;
    for &x0 in &scales(start.0) {
        for &y0 in &scales(start.1) {
            if !f(x0, y0).is_finite() {
                continue;
            }
            let report = ascend(&f, (x0, y0), tol, DIVERGENCE_NORM)?;
            let better = match &best {
                None => true,
                Some(b) => report.value > b.value,
            };
            if better {
                best = Some(report);
            }
        }
    }
    best.ok_or(OptimError::NonFiniteObjective(start.0))
}

fn ascend(
    f: &impl Fn(f64, f64) -> f64,
    start: (f64, f64),
    tol: f64,
    divergence_norm: f64,
) -> Result<Solve2dReport, OptimError> {
    let mut x = [start.0, start.1];
    let mut iterations = 0u64;
    let mut converged = false;
    let inner = SolveOptions::with_tol(1e-11);

    for _ in 0..400 {
        iterations += 1;
        let prev = x;
        for k in 0..2 {
            let other = x[1 - k];
            let line = |t: f64| {
                if k == 0 {
                    -f(t, other)
                } else {
                    -f(other, t)
                }
            };
            let h = 1.0f64.max(x[k].abs());
            let report =
                minimize_scalar_convex_in(line, (x[k] - h, x[k] + h), (f64::NEG_INFINITY, f64::INFINITY), &inner)?;
            x[k] = report.argmin;
        }
        if x[0].hypot(x[1]) > divergence_norm {
            return Err(OptimError::Diverged(divergence_norm));
        }
        let g = fd_gradient(f, x[0], x[1]);
        if g.0.hypot(g.1) <= tol {
            converged = true;
            break;
        }
        let moved = (x[0] - prev[0]).abs() + (x[1] - prev[1]).abs();
        if moved < 1e-14 * (1.0 + x[0].abs() + x[1].abs()) {
            break; // stalled on a kink; gradient test above decides `converged`
        }
    }

    let value = f(x[0], x[1]);
    if !value.is_finite() {
        return Err(OptimError::NonFiniteObjective(x[0]));
    }
    Ok(Solve2dReport {
        argmax: (x[0], x[1]),
        value,
        iterations,
        converged,
    })
}

fn fd_gradient(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64) -> (f64, f64) {
    let hx = 1e-6f64.max(1e-6 * x.abs());
    let hy = 1e-6f64.max(1e-6 * y.abs());
    (
        (f(x + hx, y) - f(x - hx, y)) / (2.0 * hx),
        (f(x, y + hy) - f(x, y - hy)) / (2.0 * hy),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn quadratic_from_narrow_hint() {
        let r = minimize_scalar_convex(|c| (c - 3.0) * (c - 3.0), (0.0, 1.0), 1e-9).unwrap();
        assert!((r.argmin - 3.0).abs() <= 1e-8, "argmin {}", r.argmin);
        assert!(!r.at_boundary);
    }

    #[test]
    fn kink_at_zero() {
        let r = minimize_scalar_convex(|c: f64| c.abs(), (-1.0, 1.0), 1e-9).unwrap();
        assert!(r.argmin.abs() <= 1e-8, "argmin {}", r.argmin);
    }

    #[test]
    fn piecewise_anchor_matches_grid_oracle() {
        // one-sided square plus full square; stationarity gives c* = 0.2
        let f = |c: f64| {
            let a = (1.0 - 2.0 * c).max(0.0);
            0.5 * a * a + 0.5 * (1.0 + c) * (1.0 + c)
        };
        // independent oracle: dense grid over [0, 1]
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=1_000_000u32 {
            let c = i as f64 * 1e-6;
            let v = f(c);
            if v < best.0 {
                best = (v, c);
            }
        }
        assert!((best.1 - 0.2).abs() < 2e-6);
        assert!((best.0 - 0.9).abs() < 1e-10);

        let r = minimize_scalar_convex(f, (0.0, 1.0), 1e-9).unwrap();
        assert!((r.argmin - 0.2).abs() <= 1e-8);
        assert!((r.value - 0.9).abs() <= 1e-12);
    }

    #[test]
    fn monotone_returns_domain_boundary_with_flag() {
        let r = minimize_scalar_convex_in(
            |c| c,
            (0.5, 1.0),
            (0.0, f64::INFINITY),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(r.argmin, 0.0);
        assert!(r.at_boundary);
    }

    #[test]
    fn boundary_kink_is_exact() {
        // decreasing on [0, 1], increasing beyond the domain: min at domain edge 1
        let r = minimize_scalar_convex_in(
            |c| 2.0 - c,
            (0.0, 1.0),
            (f64::NEG_INFINITY, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(r.argmin, 1.0);
        assert!(r.at_boundary);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = minimize_scalar_convex(|_| f64::NAN, (0.0, 1.0), 1e-9);
        assert!(matches!(r, Err(OptimError::NonFiniteObjective(_))));
    }

    #[test]
    fn polish_tightens_smooth_minimum() {
        // f(c) = (c - 1/3)^2, derivative 2(c - 1/3)
        let rough = minimize_scalar_convex(|c| (c - 1.0 / 3.0).powi(2), (0.0, 1.0), 1e-6).unwrap();
        let polished = polish_with_derivative(
            |c| 2.0 * (c - 1.0 / 3.0),
            rough.argmin,
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        assert!((polished - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn separable_quadratic_2d() {
        let r = maximize_2d_concave(
            |a, b| -(a - 1.0) * (a - 1.0) - (b + 2.0) * (b + 2.0),
            (0.0, 0.0),
            1e-7,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.argmax.0 - 1.0).abs() < 1e-6);
        assert!((r.argmax.1 + 2.0).abs() < 1e-6);
    }

    #[test]
    fn flat_coordinate_2d() {
        // flat in a; concave in b with maximum at b = 0
        let r = maximize_2d_concave(|_a, b: f64| b - b.exp(), (1.0, 1.0), 1e-7).unwrap();
        assert!(r.converged);
        assert!(r.argmax.1.abs() < 1e-6);
        assert!((r.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn msr2_objective_value_on_two_point() {
        // two-parameter program for the monotone Sharpe ratio at p = q = 2
        // on X = {-1: 1/2, 2: 1/2}; its maximum must equal (1/0.9 - 1) = 1/9,
        // the value of the independent one-parameter solve.
        let xs = [-1.0, 2.0];
        let obj = |a: f64, b: f64| {
            let mut e = 0.0;
            for &x in &xs {
                let t = (a * x + b).max(0.0);
                e += 0.5 * (0.25 * (t - 2.0) * (t - 2.0) + t);
            }
            b - e
        };
        let one_param = minimize_scalar_convex(
            |c: f64| {
                xs.iter()
                    .map(|&x| {
                        let t = (1.0 - c * x).max(0.0);
                        0.5 * t * t
                    })
                    .sum::<f64>()
            },
            (0.0, 1.0),
            1e-10,
        )
        .unwrap();
        let expected = 1.0 / one_param.value - 1.0;
        assert!((expected - 1.0 / 9.0).abs() < 1e-9);

        let r = maximize_2d_concave(obj, (1.0, 1.0), 1e-8).unwrap();
        assert!((r.value - expected).abs() < 1e-6, "value {} vs {}", r.value, expected);
    }

    #[test]
    fn random_quadratics_are_exact_to_tol() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let center: f64 = rng.random_range(-50.0..50.0);
            let curv: f64 = rng.random_range(0.1..20.0);
            let f = |c: f64| curv * (c - center) * (c - center);
            let r = minimize_scalar_convex(f, (-1.0, 1.0), 1e-9).unwrap();
            assert!(
                (r.argmin - center).abs() <= 1e-7 * (1.0 + center.abs()),
                "center {center} got {}",
                r.argmin
            );
        }
    }

    #[test]
    fn random_negative_definite_quadratics_2d() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let tol = 1e-7;
        for _ in 0..50 {
            // -(x - m)' A (x - m) with A = L L' positive definite
            let l11: f64 = rng.random_range(0.5..3.0);
            let l21: f64 = rng.random_range(-1.0..1.0);
            let l22: f64 = rng.random_range(0.5..3.0);
            let (m0, m1): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let f = move |a: f64, b: f64| {
                let d = (a - m0, b - m1);
                let q1 = l11 * d.0;
                let q2 = l21 * d.0 + l22 * d.1;
                -(q1 * q1 + q2 * q2)
            };
            let r = maximize_2d_concave(f, (1.0, 1.0), tol).unwrap();
            assert!(
                (r.argmax.0 - m0).abs() <= 10.0 * tol.max(1e-6) && (r.argmax.1 - m1).abs() <= 10.0 * tol.max(1e-6),
                "argmax {:?} vs ({m0}, {m1})",
                r.argmax
            );
        }
    }

    #[test]
    fn divergence_is_detected() {
        // unbounded above along a line
        let r = maximize_2d_concave(|a, _b| a, (1.0, 1.0), 1e-7);
        assert!(matches!(r, Err(OptimError::Diverged(_))));
    }
}
