//! The feasible set: entries boxed in `[beta, alpha]` and nuclear norm at
//! most `alpha * sqrt(r * d1 * d2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for membership checks.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub d1: usize,
    pub d2: usize,
    /// Upper bound on every intensity.
    pub alpha: f64,
    /// Lower bound on every intensity; the minimum signal level.
    pub beta: f64,
    /// Rank budget.
    pub r: usize,
}

impl FeasibleRegion {
    pub fn new(d1: usize, d2: usize, alpha: f64, beta: f64, r: usize) -> Result<Self> {
        let region = Self {
            d1,
            d2,
            alpha,
            beta,
            r,
        };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::BadShape(format!(
                "dimensions must be positive, got {}x{}",
                self.d1, self.d2
            )));
        }
        // Written so that NaN fails every comparison.
        if !(self.beta > 0.0 && self.beta <= self.alpha && self.alpha.is_finite()) {
            return Err(Error::BadBounds {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        let max = self.d1.min(self.d2);
        if self.r < 1 || self.r > max {
            return Err(Error::BadRank { r: self.r, max });
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn cells(&self) -> usize {
        self.d1 * self.d2
    }

    /// Radius of the nuclear-norm ball, `alpha * sqrt(r * d1 * d2)`.
    pub fn nuclear_radius(&self) -> f64 {
        self.alpha * ((self.r * self.d1 * self.d2) as f64).sqrt()
    }

    /// Midpoint of the box, used to fill unobserved cells.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.alpha + self.beta)
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.beta, self.alpha)
    }
}

/// Free-function form of [`FeasibleRegion::validate`].
pub fn validate_region(region: &FeasibleRegion) -> Result<()> {
    region.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_beta_equals_alpha_is_accepted() {
        assert!(FeasibleRegion::new(2, 2, 1.0, 1.0, 1).is_ok());
    }

    #[test]
    fn inverted_bounds_rejected() {
        let err = FeasibleRegion::new(2, 2, 1.0, 2.0, 1).unwrap_err();
        assert!(matches!(err, Error::BadBounds { .. }));
    }

    #[test]
    fn rank_above_min_dimension_rejected() {
        let err = FeasibleRegion::new(48, 36, 9.0, 1.0, 37).unwrap_err();
        assert!(matches!(err, Error::BadRank { r: 37, max: 36 }));
        assert!(matches!(
            FeasibleRegion::new(4, 4, 9.0, 1.0, 0).unwrap_err(),
            Error::BadRank { .. }
        ));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            FeasibleRegion::new(0, 3, 1.0, 0.5, 1).unwrap_err(),
            Error::BadShape(_)
        ));
    }

    #[test]
    fn nan_bounds_rejected() {
        assert!(FeasibleRegion::new(2, 2, f64::NAN, 0.5, 1).is_err());
        assert!(FeasibleRegion::new(2, 2, 1.0, f64::NAN, 1).is_err());
        assert!(FeasibleRegion::new(2, 2, f64::INFINITY, 0.5, 1).is_err());
    }

    #[test]
    fn validation_matches_invariants_on_grid() {
        let dims = [0usize, 1, 2, 3];
        let bounds = [-1.0, 0.0, 0.5, 1.0, 2.0];
        for &d1 in &dims {
            for &d2 in &dims {
                for &alpha in &bounds {
                    for &beta in &bounds {
                        for r in 0..=4usize {
                            let expected = d1 >= 1
                                && d2 >= 1
                                && beta > 0.0
                                && beta <= alpha
                                && r >= 1
                                && r <= d1.min(d2);
                            let region = FeasibleRegion {
                                d1,
                                d2,
                                alpha,
                                beta,
                                r,
                            };
                            assert_eq!(
                                validate_region(&region).is_ok(),
                                expected,
                                "{region:?}"
                            );
                            if expected {
                                assert!(region.nuclear_radius() > 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
}
