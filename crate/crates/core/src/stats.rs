//! Test statistics and p-values shared by both testing procedures.
//!
//! All statistics are scalar functions of scalar model outputs. Multi-output
//! models must be reduced to a scalar (e.g. the logit of the predicted class)
//! before they reach this module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which test statistic `T` is applied to model outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// `T(y) = y`: tests for an increase of the output.
    OneSided,
    /// `T(y) = (y - y_bar)^2`, where `y_bar` is the output on an extra
    /// counterfactual draw (the centering sample).
    TwoSidedCentered,
}

impl Statistic {
    pub fn needs_center(self) -> bool {
        matches!(self, Statistic::TwoSidedCentered)
    }

    /// Number of centering draws needed per tested subset.
    pub fn center_draws(self) -> usize {
        usize::from(self.needs_center())
    }

    /// Applies the statistic to one output. `center` must be present exactly
    /// when the statistic is two-sided.
    pub fn apply(self, y: f64, center: Option<f64>) -> Result<f64> {
        match (self, center) {
            (Statistic::OneSided, None) => one_sided_stat(y),
            (Statistic::TwoSidedCentered, Some(c)) => two_sided_stat(y, c),
            (Statistic::OneSided, Some(_)) => Err(Error::StatisticMismatch {
                statistic: "one-sided",
                needed: "no centering value",
            }),
            (Statistic::TwoSidedCentered, None) => Err(Error::StatisticMismatch {
                statistic: "two-sided",
                needed: "exactly one centering value per subset",
            }),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Statistic::OneSided => "one-sided",
            Statistic::TwoSidedCentered => "two-sided",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteOutput(v))
    }
}

/// Identity statistic.
pub fn one_sided_stat(y: f64) -> Result<f64> {
    finite(y)
}

/// Centered square `(y - y_bar)^2`.
pub fn two_sided_stat(y: f64, y_bar: f64) -> Result<f64> {
    let diff = finite(y)? - finite(y_bar)?;
    finite(diff * diff)
}

/// A randomization p-value, always in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue(f64);

impl PValue {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidPValue { index: 0, value })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Randomization p-value `(1 + #{k : t <= t_k}) / (K + 1)`.
///
/// Ties count toward the numerator, which keeps the p-value valid for models
/// with discrete outputs.
pub fn irt_pvalue(t: f64, null_stats: &[f64]) -> Result<PValue> {
    if null_stats.is_empty() {
        return Err(Error::EmptyNullSample);
    }
    finite(t)?;
    let mut at_least = 0usize;
    for &s in null_stats {
        if finite(s)? >= t {
            at_least += 1;
        }
    }
    Ok(PValue(
        (1 + at_least) as f64 / (null_stats.len() + 1) as f64,
    ))
}

/// Signed difference `t - t_tilde` between the observed and the counterfactual
/// statistic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DifferenceStatistic(f64);

impl DifferenceStatistic {
    pub fn new(z: f64) -> Result<Self> {
        finite(z).map(Self)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn difference_stat(t: f64, t_tilde: f64) -> Result<DifferenceStatistic> {
    DifferenceStatistic::new(finite(t)? - finite(t_tilde)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_sided_is_identity() {
        assert_eq!(one_sided_stat(0.0).unwrap(), 0.0);
        assert_eq!(one_sided_stat(-3.25).unwrap(), -3.25);
        assert_eq!(one_sided_stat(0.904).unwrap(), 0.904);
        assert!(matches!(
            one_sided_stat(f64::NAN),
            Err(Error::NonFiniteOutput(_))
        ));
        assert!(one_sided_stat(f64::INFINITY).is_err());
    }

    #[test]
    fn two_sided_examples() {
        assert_eq!(two_sided_stat(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(two_sided_stat(3.0, 1.0).unwrap(), 4.0);
        assert_eq!(two_sided_stat(1.0, 3.0).unwrap(), 4.0);
        assert_eq!(two_sided_stat(-1.5, 0.5).unwrap(), 4.0);
        assert!(two_sided_stat(1.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn statistic_center_contract() {
        assert!(Statistic::OneSided.apply(1.0, Some(0.0)).is_err());
        assert!(Statistic::TwoSidedCentered.apply(1.0, None).is_err());
        assert_eq!(Statistic::TwoSidedCentered.apply(3.0, Some(1.0)).unwrap(), 4.0);
        assert_eq!(Statistic::OneSided.apply(3.0, None).unwrap(), 3.0);
    }

    #[test]
    fn pvalue_extremes() {
        let nulls: Vec<f64> = (0..100).map(|k| k as f64).collect();
        assert_eq!(irt_pvalue(1000.0, &nulls).unwrap().value(), 1.0 / 101.0);
        assert_eq!(irt_pvalue(-1.0, &nulls).unwrap().value(), 1.0);
        // t equal to every null statistic: ties are inclusive.
        assert_eq!(irt_pvalue(5.0, &[5.0; 100]).unwrap().value(), 1.0);
    }

    #[test]
    fn pvalue_hand_example() {
        // Brute-force count: 2.5 and 3.0 are >= 2.0.
        let nulls = [1.0, 2.5, 3.0, 0.5];
        let brute = (1 + nulls.iter().filter(|&&s| 2.0 <= s).count()) as f64 / 5.0;
        assert_eq!(brute, 0.6);
        assert_eq!(irt_pvalue(2.0, &nulls).unwrap().value(), brute);
    }

    #[test]
    fn pvalue_errors() {
        assert!(matches!(irt_pvalue(1.0, &[]), Err(Error::EmptyNullSample)));
        assert!(irt_pvalue(f64::NAN, &[1.0]).is_err());
        assert!(irt_pvalue(1.0, &[f64::NAN]).is_err());
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference_stat(5.0, 2.0).unwrap().value(), 3.0);
        assert_eq!(difference_stat(1.7, 1.7).unwrap().value(), 0.0);
        let z = difference_stat(0.904, 0.307).unwrap().value();
        assert!((z - 0.597).abs() < 1e-12);
        assert!(difference_stat(f64::INFINITY, 1.0).is_err());
        assert!(DifferenceStatistic::new(f64::NAN).is_err());
    }

    #[test]
    fn pvalue_super_uniform_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 10_000;
        let k = 19;
        let mut pvals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t: f64 = rng.random();
            let nulls: Vec<f64> = (0..k).map(|_| rng.random()).collect();
            pvals.push(irt_pvalue(t, &nulls).unwrap().value());
        }
        // 3 binomial standard errors around u.
        for step in 1..20 {
            let u = step as f64 * 0.05;
            let frac = pvals.iter().filter(|&&p| p <= u).count() as f64 / reps as f64;
            let se = (u * (1.0 - u) / reps as f64).sqrt();
            assert!(frac <= u + 3.0 * se, "P(p <= {u}) = {frac}");
        }
    }

    proptest! {
        #[test]
        fn pvalue_on_grid(t in -10.0f64..10.0, nulls in prop::collection::vec(-10.0f64..10.0, 1..60)) {
            let p = irt_pvalue(t, &nulls).unwrap().value();
            let scaled = p * (nulls.len() + 1) as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
            prop_assert!(scaled.round() >= 1.0 && scaled.round() <= (nulls.len() + 1) as f64);
        }

        #[test]
        fn pvalue_monotone_in_null_stats(
            t in -5.0f64..5.0,
            nulls in prop::collection::vec(-5.0f64..5.0, 1..40),
            idx in any::<prop::sample::Index>(),
            bump in 0.0f64..5.0,
        ) {
            let before = irt_pvalue(t, &nulls).unwrap().value();
            let mut raised = nulls.clone();
            raised[idx.index(nulls.len())] += bump;
            let after = irt_pvalue(t, &raised).unwrap().value();
            prop_assert!(after >= before);
        }

        #[test]
        fn two_sided_reflection(y in -1e3f64..1e3, c in -1e3f64..1e3) {
            let a = two_sided_stat(y, c).unwrap();
            let b = two_sided_stat(2.0 * c - y, c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn difference_antisymmetric(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            prop_assert_eq!(
                difference_stat(a, b).unwrap().value(),
                -difference_stat(b, a).unwrap().value()
            );
        }
    }
}
