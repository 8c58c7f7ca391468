//! Lp-norm, Lp-deviation, its dual witness and the Lp-Sharpe ratio.
//!
//! The Lp-deviation of X is the minimal Lp-distance to a constant,
//! `sigma_p(X) = min_c ||X - c||_p`. It generalizes the standard deviation
//! (p = 2, minimizer E X) and the absolute deviation from the median
//! (p = 1). The deviation is always computed by the scalar solver; the
//! closed forms serve as test oracles.

use thiserror::Error;

use crate::optim::{self, SolveOptions};
use crate::scenario::{Exponent, ScenarioDistribution};

#[derive(Debug, Error)]
pub enum DeviationError {
    #[error("degenerate deviation: the random variable is a.s. constant")]
    DegenerateDeviation,
    #[error("unsupported exponent p = {0} for this operation")]
    UnsupportedExponent(f64),
}

/// Deviation value together with the minimizing center.
#[derive(Debug, Clone, Copy)]
pub struct DeviationResult {
    pub sigma: f64,
    pub center: f64,
    pub p: Exponent,
}

/// Dual witness R for the deviation: E R = 0, ||R||_q <= 1 and
/// E(R X) = sigma_p(X), aligned with the scenario atoms.
#[derive(Debug, Clone)]
pub struct DualWitness {
    pub r_values: Vec<f64>,
}

/// ||X||_p = (E |X|^p)^(1/p).
pub fn lp_norm(d: &ScenarioDistribution, p: Exponent) -> f64 {
    let pw = p.p();
    if pw == 1.0 {
        d.atoms().map(|(v, w)| w * v.abs()).sum()
    } else {
        d.atoms()
            .map(|(v, w)| w * v.abs().powf(pw))
            .sum::<f64>()
            .powf(1.0 / pw)
    }
}

fn norm_of_shift(d: &ScenarioDistribution, c: f64, pw: f64) -> f64 {
    if pw == 1.0 {
        d.atoms().map(|(v, w)| w * (v - c).abs()).sum()
    } else {
        d.atoms()
            .map(|(v, w)| w * (v - c).abs().powf(pw))
            .sum::<f64>()
            .powf(1.0 / pw)
    }
}

/// sigma_p(X) = min_c ||X - c||_p, solved over [min X, max X].
///
/// For p > 1 the minimizer is polished with the exact derivative of the
/// objective. For p = 1 the minimizing set can be an interval of medians;
/// the reported center is its midpoint.
pub fn lp_deviation(d: &ScenarioDistribution, p: Exponent) -> DeviationResult {
    let lo = d.ess_inf();
    let hi = d.ess_sup();
    if lo == hi {
        return DeviationResult { sigma: 0.0, center: lo, p };
    }
    let pw = p.p();

    let report = optim::minimize_scalar_convex_in(
        |c| norm_of_shift(d, c, pw),
        (lo, hi),
        (lo, hi),
        &SolveOptions::default(),
    )
    .expect("finite objective on a finite distribution");

    let center = if pw == 1.0 {
        median_interval_midpoint(d)
    } else {
        // derivative of E|X - c|^p up to a positive factor
        let dfdc = |c: f64| -> f64 {
            -d.atoms()
                .map(|(v, w)| {
                    let t = v - c;
                    w * t.signum() * t.abs().powf(pw - 1.0)
                })
                .sum::<f64>()
        };
        optim::polish_with_derivative(dfdc, report.argmin, lo, hi)
    };

    DeviationResult {
        sigma: norm_of_shift(d, center, pw),
        center,
        p,
    }
}

/// Midpoint of the weighted median interval. When the cumulative weight
/// hits exactly one half at an atom, the minimizing set extends to the
/// next atom and the midpoint is reported.
fn median_interval_midpoint(d: &ScenarioDistribution) -> f64 {
    let mut atoms: Vec<(f64, f64)> = d.atoms().collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0.0;
    for (i, &(v, w)) in atoms.iter().enumerate() {
        cum += w;
        if (cum - 0.5).abs() <= 1e-12 {
            let next = atoms.get(i + 1).map(|&(nv, _)| nv).unwrap_or(v);
            return 0.5 * (v + next);
        }
        if cum > 0.5 {
            return v;
        }
    }
    atoms.last().expect("nonempty").0
}

/// Explicit maximizer of E(R X) over {E R = 0, ||R||_q <= 1}:
/// R = sgn(X - c*) |X - c*|^(p-1) / ||X - c*||_p^(p-1).
pub fn dual_witness(
    d: &ScenarioDistribution,
    p: Exponent,
) -> Result<DualWitness, DeviationError> {
    let pw = p.p();
    if pw <= 1.0 || !pw.is_finite() {
        return Err(DeviationError::UnsupportedExponent(pw));
    }
    let dev = lp_deviation(d, p);
    if dev.sigma == 0.0 {
        return Err(DeviationError::DegenerateDeviation);
    }
    let scale = dev.sigma.powf(pw - 1.0);
    let r_values = d
        .values()
        .iter()
        .map(|&v| {
            let t = v - dev.center;
            t.signum() * t.abs().powf(pw - 1.0) / scale
        })
        .collect();
    Ok(DualWitness { r_values })
}

/// Lp-Sharpe ratio E(X - r) / sigma_p(X - r). May be negative.
pub fn lp_sharpe(
    d: &ScenarioDistribution,
    p: Exponent,
    riskfree: f64,
) -> Result<f64, DeviationError> {
    let shifted = d.affine(1.0, -riskfree);
    let dev = lp_deviation(&shifted, p);
    if dev.sigma == 0.0 {
        return Err(DeviationError::DegenerateDeviation);
    }
    Ok(shifted.expectation() / dev.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioDistribution;

    fn dist(values: &[f64], weights: &[f64]) -> ScenarioDistribution {
        ScenarioDistribution::new(values.to_vec(), weights.to_vec()).unwrap()
    }

    fn p(x: f64) -> Exponent {
        Exponent::new(x).unwrap()
    }

    #[test]
    fn lp_norm_examples() {
        let sym = dist(&[-1.0, 1.0], &[0.5, 0.5]);
        assert!((lp_norm(&sym, p(2.0)) - 1.0).abs() < 1e-15);

        let point = dist(&[3.0], &[1.0]);
        assert!((lp_norm(&point, p(1.0)) - 3.0).abs() < 1e-15);

        let d = dist(&[-1.0, 2.0], &[0.5, 0.5]);
        let expected = 4.5f64.powf(1.0 / 3.0); // (0.5*1 + 0.5*8)^(1/3)
        assert!((lp_norm(&d, p(3.0)) - expected).abs() < 1e-14);
    }

    #[test]
    fn deviation_p2_matches_std_closed_form() {
        let d = dist(&[-1.0, 2.0], &[0.5, 0.5]);
        let r = lp_deviation(&d, p(2.0));
        // closed form: sqrt(E X^2 - (E X)^2) with center E X
        let mean = d.expectation();
        let var: f64 = d.atoms().map(|(v, w)| w * v * v).sum::<f64>() - mean * mean;
        assert!((r.sigma - var.sqrt()).abs() < 1e-12);
        assert!((r.sigma - 1.5).abs() < 1e-12);
        assert!((r.center - 0.5).abs() < 1e-10);
    }

    #[test]
    fn deviation_p1_is_mad_from_median() {
        let d = dist(&[0.0, 1.0, 2.0], &[0.25, 0.5, 0.25]);
        let r = lp_deviation(&d, p(1.0));
        // grid oracle over the center
        let mut best = f64::INFINITY;
        for i in 0..=4000 {
            let c = i as f64 * 5e-4;
            let v: f64 = d.atoms().map(|(x, w)| w * (x - c).abs()).sum();
            best = best.min(v);
        }
        assert!((r.sigma - best).abs() < 1e-9);
        assert!((r.sigma - 0.5).abs() < 1e-12);
        assert!((r.center - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_of_point_mass_is_zero() {
        for pw in [1.0, 1.5, 2.0, 3.0] {
            let d = dist(&[4.2], &[1.0]);
            let r = lp_deviation(&d, p(pw));
            assert_eq!(r.sigma, 0.0);
            assert_eq!(r.center, 4.2);
        }
    }

    #[test]
    fn even_mass_median_reports_interval_midpoint() {
        let d = dist(&[0.0, 1.0], &[0.5, 0.5]);
        let r = lp_deviation(&d, p(1.0));
        assert!((r.center - 0.5).abs() < 1e-12);
        assert!((r.sigma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn witness_on_symmetric_two_point() {
        let d = dist(&[-1.0, 1.0], &[0.5, 0.5]);
        let w = dual_witness(&d, p(2.0)).unwrap();
        assert!((w.r_values[0] + 1.0).abs() < 1e-9);
        assert!((w.r_values[1] - 1.0).abs() < 1e-9);
        let erx: f64 = d
            .atoms()
            .zip(w.r_values.iter())
            .map(|((v, wt), r)| wt * r * v)
            .sum();
        assert!((erx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn witness_on_skewed_two_point() {
        let d = dist(&[-1.0, 2.0], &[0.5, 0.5]);
        let w = dual_witness(&d, p(2.0)).unwrap();
        assert!((w.r_values[0] + 1.0).abs() < 1e-9);
        assert!((w.r_values[1] - 1.0).abs() < 1e-9);
        let erx: f64 = d
            .atoms()
            .zip(w.r_values.iter())
            .map(|((v, wt), r)| wt * r * v)
            .sum();
        assert!((erx - 1.5).abs() < 1e-10);
    }

    #[test]
    fn witness_rejects_constant() {
        let d = dist(&[1.0, 1.0], &[0.5, 0.5]);
        assert!(matches!(
            dual_witness(&d, p(2.0)),
            Err(DeviationError::DegenerateDeviation)
        ));
    }

    #[test]
    fn sharpe_examples() {
        let d = dist(&[-1.0, 2.0], &[0.5, 0.5]);
        let s = lp_sharpe(&d, p(2.0), 0.0).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-10);

        // zero expected excess return
        let centered = d.affine(1.0, -0.5);
        let s0 = lp_sharpe(&centered, p(2.0), 0.0).unwrap();
        assert!(s0.abs() < 1e-10);

        let neg = dist(&[-2.0, 1.0], &[0.5, 0.5]);
        let sn = lp_sharpe(&neg, p(2.0), 0.0).unwrap();
        assert!((sn + 1.0 / 3.0).abs() < 1e-10);

        assert!(matches!(
            lp_sharpe(&dist(&[1.0], &[1.0]), p(2.0), 0.0),
            Err(DeviationError::DegenerateDeviation)
        ));
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        fn values_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            proptest::collection::vec((-10.0..10.0f64, 0.05..1.0f64), 2..8).prop_map(|pairs| {
                let total: f64 = pairs.iter().map(|(_, w)| w).sum();
                (
                    pairs.iter().map(|(v, _)| *v).collect(),
                    pairs.iter().map(|(_, w)| w / total).collect(),
                )
            })
        }

        proptest! {
            #[test]
            fn sublinear_in_shared_atoms(
                (vals, weights) in values_and_weights(),
                (other, _) in values_and_weights(),
                pw in prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0)],
            ) {
                let n = vals.len().min(other.len());
                let x = ScenarioDistribution::new(vals[..n].to_vec(), normalize(&weights[..n])).unwrap();
                let y = ScenarioDistribution::new(other[..n].to_vec(), normalize(&weights[..n])).unwrap();
                let sum_vals: Vec<f64> = (0..n).map(|i| vals[i] + other[i]).collect();
                let s = ScenarioDistribution::new(sum_vals, normalize(&weights[..n])).unwrap();
                let e = Exponent::new(pw).unwrap();
                let (sx, sy, ss) = (
                    lp_deviation(&x, e).sigma,
                    lp_deviation(&y, e).sigma,
                    lp_deviation(&s, e).sigma,
                );
                prop_assert!(ss <= sx + sy + 1e-8, "{ss} > {sx} + {sy}");
            }

            #[test]
            fn positively_homogeneous(
                (vals, weights) in values_and_weights(),
                lambda in 0.0..4.0f64,
                pw in prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(3.0)],
            ) {
                let x = ScenarioDistribution::new(vals.clone(), weights.clone()).unwrap();
                let lx = x.affine(lambda, 0.0);
                let e = Exponent::new(pw).unwrap();
                let a = lp_deviation(&lx, e).sigma;
                let b = lambda * lp_deviation(&x, e).sigma;
                prop_assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
            }

            #[test]
            fn law_invariant_under_permutation(
                (vals, weights) in values_and_weights(),
                pw in prop_oneof![Just(1.5), Just(2.0), Just(3.0)],
            ) {
                let x = ScenarioDistribution::new(vals.clone(), weights.clone()).unwrap();
                let mut rev_v = vals.clone();
                let mut rev_w = weights.clone();
                rev_v.reverse();
                rev_w.reverse();
                let y = ScenarioDistribution::new(rev_v, rev_w).unwrap();
                let e = Exponent::new(pw).unwrap();
                let a = lp_deviation(&x, e).sigma;
                let b = lp_deviation(&y, e).sigma;
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }

            #[test]
            fn p2_center_is_mean_and_p1_center_is_median(
                (vals, weights) in values_and_weights(),
            ) {
                let x = ScenarioDistribution::new(vals, weights).unwrap();
                let r2 = lp_deviation(&x, Exponent::new(2.0).unwrap());
                prop_assert!((r2.center - x.expectation()).abs() <= 1e-9 * (1.0 + x.expectation().abs()));

                let r1 = lp_deviation(&x, Exponent::new(1.0).unwrap());
                let below: f64 = x.atoms().filter(|&(v, _)| v <= r1.center + 1e-12).map(|(_, w)| w).sum();
                let above: f64 = x.atoms().filter(|&(v, _)| v >= r1.center - 1e-12).map(|(_, w)| w).sum();
                prop_assert!(below >= 0.5 - 1e-9 && above >= 0.5 - 1e-9);
            }

            #[test]
            fn duality_gap_is_tiny(
                (vals, weights) in values_and_weights(),
                pw in prop_oneof![Just(1.5), Just(2.0), Just(3.0)],
            ) {
                let x = ScenarioDistribution::new(vals, weights).unwrap();
                let e = Exponent::new(pw).unwrap();
                let sigma = lp_deviation(&x, e).sigma;
                prop_assume!(sigma > 1e-9);
                let w = dual_witness(&x, e).unwrap();
                let er: f64 = x.atoms().zip(w.r_values.iter()).map(|((_, wt), r)| wt * r).sum();
                let erx: f64 = x.atoms().zip(w.r_values.iter()).map(|((v, wt), r)| wt * r * v).sum();
                let qn: f64 = x
                    .atoms()
                    .zip(w.r_values.iter())
                    .map(|((_, wt), r)| wt * r.abs().powf(e.q()))
                    .sum::<f64>()
                    .powf(1.0 / e.q());
                prop_assert!(er.abs() <= 1e-10, "E R = {er}");
                prop_assert!(qn <= 1.0 + 1e-10, "||R||_q = {qn}");
                prop_assert!((erx - sigma).abs() <= 1e-8, "gap {}", erx - sigma);
            }
        }

        fn normalize(w: &[f64]) -> Vec<f64> {
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        }
    }
}
