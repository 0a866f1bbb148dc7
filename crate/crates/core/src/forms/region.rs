use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Product of closed intervals inside `[-1, 1]^n`.
///
/// Boxes with some side longer than 1 are accepted and reported through
/// [`BoxRegion::is_admissible`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct BoxRegion {
    intervals: Vec<(f64, f64)>,
}

// Relative slack when converting scaled endpoints to integers, so that
// 0.3 * 10 still includes 3.
const ENDPOINT_SLACK: f64 = 1e-9;

impl BoxRegion {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Malformed("a box needs at least one interval".into()));
        }
        for (i, &(a, b)) in intervals.iter().enumerate() {
            if !(a.is_finite() && b.is_finite()) || a < -1.0 || b > 1.0 || a > b {
                return Err(Error::InvalidParameter(format!(
                    "interval {i} = [{a}, {b}] is not a subinterval of [-1, 1]"
                )));
            }
        }
        Ok(BoxRegion { intervals })
    }

    /// `[-1, 1]^n`.
    pub fn symmetric(n: usize) -> Self {
        BoxRegion {
            intervals: vec![(-1.0, 1.0); n],
        }
    }

    /// `[0, 1]^n`.
    pub fn unit(n: usize) -> Self {
        BoxRegion {
            intervals: vec![(0.0, 1.0); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Every side has length at most 1.
    pub fn is_admissible(&self) -> bool {
        self.intervals.iter().all(|&(a, b)| b - a <= 1.0)
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).product()
    }

    pub fn restrict(&self, vars: &[usize]) -> BoxRegion {
        BoxRegion {
            intervals: vars.iter().map(|&v| self.intervals[v]).collect(),
        }
    }

    /// Integer ranges `{x : a <= x / scale <= b}` per coordinate, closed on both ends.
    pub fn integer_ranges(&self, scale: f64) -> Result<Vec<(i64, i64)>> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("scale {scale} must be finite and >= 0")));
        }
        self.intervals
            .iter()
            .map(|&(a, b)| {
                let lo = a * scale;
                let hi = b * scale;
                let lo = (lo - ENDPOINT_SLACK * lo.abs().max(1.0)).ceil();
                let hi = (hi + ENDPOINT_SLACK * hi.abs().max(1.0)).floor();
                if lo.abs() > 1e15 || hi.abs() > 1e15 {
                    return Err(Error::Overflow("scaling a box"));
                }
                Ok((lo as i64, hi as i64))
            })
            .collect()
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            Err(Error::DimensionMismatch {
                expected: n,
                found: self.dim(),
            })
        } else {
            Ok(())
        }
    }
}

impl TryFrom<Vec<[f64; 2]>> for BoxRegion {
    type Error = Error;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        BoxRegion::new(pairs.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<BoxRegion> for Vec<[f64; 2]> {
    fn from(b: BoxRegion) -> Self {
        b.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

/// Number of integers in each range, with the product as `f64`.
pub(crate) fn range_points(ranges: &[(i64, i64)]) -> f64 {
    ranges
        .iter()
        .map(|&(lo, hi)| if hi >= lo { (hi - lo + 1) as f64 } else { 0.0 })
        .product()
}
