//! Moment bounds `psi` and their Legendre–Fenchel conjugates.
//!
//! A reward family is `psi`-subgaussian when the log moment generating
//! function of its centered samples is dominated by a convex `psi` on
//! `lambda >= 0`. The conjugate `psi*(eps) = sup_lambda (lambda * eps - psi(lambda))`
//! sets both the exploration bonus of SB-UCB (through `(psi*)^-1`) and the
//! exponents of the concentration bounds.
//!
//! Only two families are supported, each with closed forms:
//!
//! | family         | `psi(l)`        | `psi*(e)`         | `(psi*)^-1(x)`    |
//! |----------------|-----------------|-------------------|-------------------|
//! | bounded `[0,1]`| `l^2 / 8`       | `2 e^2`           | `sqrt(x / 2)`     |
//! | gaussian `s2`  | `s2 l^2 / 2`    | `e^2 / (2 s2)`    | `sqrt(2 s2 x)`    |

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiFamily {
    /// Rewards supported on `[0, 1]` (Hoeffding's lemma).
    #[default]
    BoundedUnit,
    /// Subgaussian with variance proxy `variance`.
    Gaussian { variance: f64 },
}


fn check_nonneg(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 {
        Ok(())
    } else {
        // Also rejects NaN.
        Err(Error::Domain { what, value })
    }
}

impl PsiFamily {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if variance.is_finite() && variance > 0.0 {
            Ok(PsiFamily::Gaussian { variance })
        } else {
            Err(Error::Config(format!(
                "gaussian psi family needs a positive finite variance, got {variance}"
            )))
        }
    }

    pub fn psi(&self, lambda: f64) -> Result<f64> {
        check_nonneg("lambda", lambda)?;
        Ok(match *self {
            PsiFamily::BoundedUnit => lambda * lambda / 8.0,
            PsiFamily::Gaussian { variance } => variance * lambda * lambda / 2.0,
        })
    }

    pub fn psi_star(&self, epsilon: f64) -> Result<f64> {
        check_nonneg("epsilon", epsilon)?;
        Ok(match *self {
            PsiFamily::BoundedUnit => 2.0 * epsilon * epsilon,
            PsiFamily::Gaussian { variance } => epsilon * epsilon / (2.0 * variance),
        })
    }

    pub fn psi_star_inv(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        Ok(match *self {
            PsiFamily::BoundedUnit => (x / 2.0).sqrt(),
            PsiFamily::Gaussian { variance } => (2.0 * variance * x).sqrt(),
        })
    }

    /// Maximizer of `lambda * eps - psi(lambda)`; the point where Fenchel–Young is tight.
    pub fn conjugate_argmax(&self, epsilon: f64) -> Result<f64> {
        check_nonneg("epsilon", epsilon)?;
        Ok(match *self {
            PsiFamily::BoundedUnit => 4.0 * epsilon,
            PsiFamily::Gaussian { variance } => epsilon / variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{numeric_conjugate, numeric_conjugate_inverse};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const BU: PsiFamily = PsiFamily::BoundedUnit;

    #[test]
    fn psi_examples() {
        assert_eq!(BU.psi(0.0).unwrap(), 0.0);
        assert_eq!(BU.psi(4.0).unwrap(), 2.0);
        let g = PsiFamily::gaussian(0.25).unwrap();
        assert_abs_diff_eq!(g.psi(2.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn psi_star_examples() {
        assert_eq!(BU.psi_star(0.0).unwrap(), 0.0);
        assert_eq!(BU.psi_star(0.5).unwrap(), 0.5);
        assert_eq!(BU.psi_star(1.0).unwrap(), 2.0);
        // Grid sup over [0, 16].
        let grid_sup = (0..=160_000)
            .map(|k| k as f64 * 1e-4)
            .map(|l| l * 1.0 - l * l / 8.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(grid_sup, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn psi_star_inv_examples() {
        assert_eq!(BU.psi_star_inv(2.0).unwrap(), 1.0);
        assert_eq!(BU.psi_star_inv(0.5).unwrap(), 0.5);
        assert_eq!(BU.psi_star_inv(8.0).unwrap(), 2.0);
    }

    #[test]
    fn negative_inputs_are_domain_errors() {
        assert!(matches!(BU.psi(-1.0), Err(Error::Domain { what: "lambda", .. })));
        assert!(matches!(BU.psi_star(-1e-9), Err(Error::Domain { .. })));
        assert!(matches!(BU.psi_star_inv(-2.0), Err(Error::Domain { .. })));
        assert!(BU.psi(f64::NAN).is_err());
        assert!(PsiFamily::gaussian(0.0).is_err());
    }

    #[test]
    fn round_trip_on_unit_grid() {
        for fam in [BU, PsiFamily::gaussian(0.3).unwrap(), PsiFamily::gaussian(2.0).unwrap()] {
            for k in 0..100 {
                let eps = k as f64 / 99.0;
                let back = fam.psi_star_inv(fam.psi_star(eps).unwrap()).unwrap();
                assert!((back - eps).abs() <= 1e-12, "{fam:?} eps={eps} back={back}");
            }
        }
    }

    #[test]
    fn fenchel_young_and_tightness() {
        for fam in [BU, PsiFamily::gaussian(0.5).unwrap()] {
            for i in 0..50 {
                let eps = i as f64 / 49.0;
                let star = fam.psi_star(eps).unwrap();
                for j in 0..50 {
                    let lambda = j as f64 * 0.3;
                    assert!(lambda * eps - fam.psi(lambda).unwrap() <= star + 1e-12);
                }
                let l = fam.conjugate_argmax(eps).unwrap();
                assert_abs_diff_eq!(l * eps - fam.psi(l).unwrap(), star, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn closed_forms_match_numeric_oracle() {
        for fam in [BU, PsiFamily::gaussian(0.25).unwrap()] {
            for k in 0..100 {
                let eps = k as f64 / 99.0;
                let num = numeric_conjugate(&fam, eps);
                assert_abs_diff_eq!(fam.psi_star(eps).unwrap(), num, epsilon = 1e-6);
                let x = 2.0 * k as f64 / 99.0;
                let inv = numeric_conjugate_inverse(&fam, x);
                assert_abs_diff_eq!(fam.psi_star_inv(x).unwrap(), inv, epsilon = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn conjugate_strictly_increasing(a in 1e-6f64..10.0, b in 1e-6f64..10.0, var in 0.01f64..4.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            for fam in [BU, PsiFamily::gaussian(var).unwrap()] {
                prop_assert!(fam.psi_star(lo).unwrap() < fam.psi_star(hi).unwrap());
                prop_assert!(fam.psi_star_inv(lo).unwrap() < fam.psi_star_inv(hi).unwrap());
            }
        }

        #[test]
        fn psi_nonneg_and_convex(l1 in 0.0f64..50.0, l2 in 0.0f64..50.0, w in 0.0f64..1.0) {
            let mid = w * l1 + (1.0 - w) * l2;
            let lhs = BU.psi(mid).unwrap();
            let rhs = w * BU.psi(l1).unwrap() + (1.0 - w) * BU.psi(l2).unwrap();
            prop_assert!(lhs >= 0.0);
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
