//! Finite scenario distributions and empirical samples.
//!
//! Every static measure in this crate consumes a [`ScenarioDistribution`]:
//! a finite list of outcome values with strictly positive probability
//! weights. Empirical data enters through [`SampleSet`] (equal weights) or
//! through the CSV/JSON loaders.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

/// Tolerance under which a weight vector is silently renormalized to sum
/// to one. Larger deviations are rejected as input errors.
pub const WEIGHT_RENORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("empty input: need at least one observation")]
    EmptyInput,
    #[error("non-finite value at position {0}")]
    NonFiniteValue(usize),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("weight error: {0}")]
    WeightError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A finite discrete probability distribution given by outcome values and
/// positive weights summing to one.
///
/// Values are kept in input order and duplicates are not merged; weight
/// aggregation happens on demand (see [`ScenarioDistribution::mass_at_sup`]).
/// Immutable after construction, safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl ScenarioDistribution {
    /// Build a distribution from values and weights.
    ///
    /// Weights must be strictly positive and sum to one within
    /// [`WEIGHT_RENORM_TOL`]; sums inside the tolerance are renormalized.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, ScenarioError> {
        if values.is_empty() || weights.is_empty() {
            return Err(ScenarioError::EmptyInput);
        }
        if values.len() != weights.len() {
            return Err(ScenarioError::WeightError(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::NonFiniteValue(i));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(ScenarioError::WeightError(format!(
                    "weight {w} at position {i} is not strictly positive"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_RENORM_TOL {
            return Err(ScenarioError::WeightError(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(Self { values, weights })
    }

    /// Equal-weight distribution over the observations, in input order.
    /// Duplicates are preserved as separate atoms.
    pub fn from_samples(observations: &[f64]) -> Result<Self, ScenarioError> {
        if observations.is_empty() {
            return Err(ScenarioError::EmptyInput);
        }
        if let Some(i) = observations.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::NonFiniteValue(i));
        }
        let n = observations.len();
        Ok(Self {
            values: observations.to_vec(),
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // len >= 1 by construction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    /// E X = sum of w_i v_i.
    pub fn expectation(&self) -> f64 {
        self.atoms().map(|(v, w)| w * v).sum()
    }

    /// Largest outcome value (the essential supremum).
    pub fn ess_sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest outcome value (the essential infimum).
    pub fn ess_inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total weight carried by atoms equal to the essential supremum.
    /// Duplicate values are aggregated here.
    pub fn mass_at_sup(&self) -> f64 {
        let sup = self.ess_sup();
        self.atoms().filter(|&(v, _)| v == sup).map(|(_, w)| w).sum()
    }

    /// Atom-wise affine image a*X + b, same weights.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| a * v + b).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Atom-wise map, same weights. The caller must keep values finite.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// A raw list of observations, interpreted as an equal-weight
/// [`ScenarioDistribution`] with multiplicity preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    observations: Vec<f64>,
}

impl SampleSet {
    pub fn new(observations: Vec<f64>) -> Result<Self, ScenarioError> {
        if observations.is_empty() {
            return Err(ScenarioError::EmptyInput);
        }
        if let Some(i) = observations.iter().position(|v| !v.is_finite()) {
            return Err(ScenarioError::NonFiniteValue(i));
        }
        Ok(Self { observations })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_distribution(&self) -> ScenarioDistribution {
        ScenarioDistribution::from_samples(&self.observations)
            .expect("SampleSet invariants guarantee a valid distribution")
    }
}

/// The conjugate pair (p, q) with 1/p + 1/q = 1.
///
/// Only p is stored; q is always recomputed so the conjugacy relation
/// cannot drift. For p = 1 the conjugate is +infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    p: f64,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self, ScenarioError> {
        if !p.is_finite() || p < 1.0 {
            return Err(ScenarioError::WeightError(format!(
                "exponent p must be a finite real >= 1, got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent q = p/(p-1), +infinity when p = 1.
    pub fn q(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

/// Load a sample set from CSV: one real per line, with an optional
/// non-numeric header line (e.g. `value`) which is skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SampleSet, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub(crate) fn parse_csv(text: &str) -> Result<SampleSet, ScenarioError> {
    let mut observations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => observations.push(v),
            Ok(v) => {
                return Err(ScenarioError::ParseError {
                    line: i + 1,
                    msg: format!("non-finite value {v}"),
                })
            }
            Err(_) if i == 0 => continue, // header line
            Err(e) => {
                return Err(ScenarioError::ParseError {
                    line: i + 1,
                    msg: e.to_string(),
                })
            }
        }
    }
    SampleSet::new(observations)
}

#[derive(Deserialize)]
struct ScenarioJson {
    values: Vec<f64>,
    probs: Vec<f64>,
}

/// Load a scenario distribution from JSON of the form
/// `{"values": [...], "probs": [...]}` with equal-length arrays.
pub fn load_scenario_json(path: impl AsRef<Path>) -> Result<ScenarioDistribution, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_json(&text)
}

pub(crate) fn parse_scenario_json(text: &str) -> Result<ScenarioDistribution, ScenarioError> {
    let parsed: ScenarioJson = serde_json::from_str(text).map_err(|e| ScenarioError::ParseError {
        line: e.line(),
        msg: e.to_string(),
    })?;
    ScenarioDistribution::new(parsed.values, parsed.probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> ScenarioDistribution {
        ScenarioDistribution::new(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn from_samples_equal_weights() {
        let d = ScenarioDistribution::from_samples(&[1.0, 1.0, 4.0]).unwrap();
        assert_eq!(d.values(), &[1.0, 1.0, 4.0]);
        for &w in d.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn from_samples_singleton_and_two_point() {
        let point = ScenarioDistribution::from_samples(&[5.0]).unwrap();
        assert_eq!(point.values(), &[5.0]);
        assert_eq!(point.weights(), &[1.0]);

        let d = ScenarioDistribution::from_samples(&[-1.0, 2.0]).unwrap();
        assert_eq!(d.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn from_samples_rejects_bad_input() {
        assert!(matches!(
            ScenarioDistribution::from_samples(&[]),
            Err(ScenarioError::EmptyInput)
        ));
        assert!(matches!(
            ScenarioDistribution::from_samples(&[1.0, f64::NAN]),
            Err(ScenarioError::NonFiniteValue(1))
        ));
        assert!(matches!(
            ScenarioDistribution::from_samples(&[1.0, f64::INFINITY]),
            Err(ScenarioError::NonFiniteValue(1))
        ));
    }

    #[test]
    fn expectation_examples() {
        assert!((two_point().expectation() - 0.5).abs() < 1e-15);
        let point = ScenarioDistribution::from_samples(&[5.0]).unwrap();
        assert_eq!(point.expectation(), 5.0);
        let sym =
            ScenarioDistribution::new(vec![0.0, 1.0, 2.0], vec![0.25, 0.5, 0.25]).unwrap();
        assert!((sym.expectation() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ess_sup_and_mass() {
        let d = two_point();
        assert_eq!(d.ess_sup(), 2.0);
        assert_eq!(d.mass_at_sup(), 0.5);

        let point = ScenarioDistribution::from_samples(&[5.0]).unwrap();
        assert_eq!(point.ess_sup(), 5.0);
        assert_eq!(point.mass_at_sup(), 1.0);

        // duplicate values aggregate their mass
        let dup = ScenarioDistribution::new(vec![2.0, 2.0, 0.0], vec![0.3, 0.2, 0.5]).unwrap();
        assert_eq!(dup.ess_sup(), 2.0);
        assert!((dup.mass_at_sup() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        assert!(ScenarioDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(ScenarioDistribution::new(vec![0.0, 1.0], vec![0.5, -0.5]).is_err());
        assert!(ScenarioDistribution::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        // tiny drift is renormalized
        let d = ScenarioDistribution::new(vec![0.0, 1.0], vec![0.5 + 2e-10, 0.5]).unwrap();
        let sum: f64 = d.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_conjugacy() {
        let e = Exponent::new(2.0).unwrap();
        assert_eq!(e.q(), 2.0);
        let e = Exponent::new(1.0).unwrap();
        assert_eq!(e.q(), f64::INFINITY);
        let e = Exponent::new(1.5).unwrap();
        assert!((1.0 / e.p() + 1.0 / e.q() - 1.0).abs() < 1e-15);
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
    }

    #[test]
    fn csv_parsing() {
        let s = parse_csv("1\n-0.5\n").unwrap();
        assert_eq!(s.observations(), &[1.0, -0.5]);

        let with_header = parse_csv("value\n1\n-0.5\n").unwrap();
        assert_eq!(with_header.observations(), &[1.0, -0.5]);

        let bad = parse_csv("1\nxyz\n");
        assert!(matches!(bad, Err(ScenarioError::ParseError { line: 2, .. })));
    }

    #[test]
    fn scenario_json_parsing() {
        let d = parse_scenario_json(r#"{"values":[-1,2],"probs":[0.5,0.5]}"#).unwrap();
        assert_eq!(d.values(), &[-1.0, 2.0]);
        assert_eq!(d.weights(), &[0.5, 0.5]);

        let bad = parse_scenario_json(r#"{"values":[-1,2],"probs":[0.5,0.6]}"#);
        assert!(matches!(bad, Err(ScenarioError::WeightError(_))));
    }

    #[test]
    fn sample_mean_matches_expectation() {
        let obs = [0.3, -1.2, 4.0, 4.0, 0.0];
        let d = ScenarioDistribution::from_samples(&obs).unwrap();
        let mean: f64 = obs.iter().sum::<f64>() / obs.len() as f64;
        assert!((d.expectation() - mean).abs() < 1e-12);
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn expectation_is_linear(
                vals in proptest::collection::vec(-100.0..100.0f64, 1..12),
                a in -5.0..5.0f64,
                b in -5.0..5.0f64,
            ) {
                let d = ScenarioDistribution::from_samples(&vals).unwrap();
                let shifted = d.affine(a, b);
                let lhs = shifted.expectation();
                let rhs = a * d.expectation() + b;
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }

            #[test]
            fn loader_round_trip_normalizes(
                vals in proptest::collection::vec(-10.0..10.0f64, 1..8),
                raw_w in proptest::collection::vec(0.05..1.0f64, 1..8),
            ) {
                // build weights that sum to one, then perturb inside the tolerance
                let n = vals.len().min(raw_w.len());
                let vals = &vals[..n];
                let total: f64 = raw_w[..n].iter().sum();
                let mut w: Vec<f64> = raw_w[..n].iter().map(|x| x / total).collect();
                w[0] += 5e-10;
                let json = format!(
                    r#"{{"values":[{}],"probs":[{}]}}"#,
                    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                    w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                );
                let d = parse_scenario_json(&json).unwrap();
                let sum: f64 = d.weights().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert_eq!(d.values(), vals);
            }
        }
    }
}
