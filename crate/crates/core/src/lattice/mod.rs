//! Exact counts of integer zeros of a system in a scaled box, and modulo prime powers.

mod mitm;
mod modular;
mod naive;

pub use mitm::{count_meet_in_middle, plan_split, SplitPlan};
pub use modular::{count_mod, count_mod_enumerate, witness_class_lifts, ModularCountRequest, ModularMethod};
pub use naive::count_naive;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{BoxRegion, FormSystem};

/// Default cap on enumerated points.
pub const DEFAULT_BUDGET: u64 = 2_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Naive,
    MeetInMiddle,
    Auto,
}

/// Zeros of `system` at integer `x` with `x / scale` in `region`.
#[derive(Clone, Debug)]
pub struct CountRequest<'a> {
    pub system: &'a FormSystem,
    pub region: &'a BoxRegion,
    pub scale: f64,
    pub method: CountMethod,
}

impl<'a> CountRequest<'a> {
    pub fn new(system: &'a FormSystem, region: &'a BoxRegion, scale: f64) -> Self {
        CountRequest {
            system,
            region,
            scale,
            method: CountMethod::Auto,
        }
    }

    pub fn with_method(mut self, method: CountMethod) -> Self {
        self.method = method;
        self
    }

    pub(crate) fn ranges(&self) -> Result<Vec<(i64, i64)>> {
        self.region.check_dim(self.system.vars())?;
        self.region.integer_ranges(self.scale)
    }
}

/// A count together with how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountRecord {
    pub scale: f64,
    pub count: u64,
    pub method: CountMethod,
    pub boundary: &'static str,
    pub admissible_box: bool,
    pub budget: u64,
}

pub const BOUNDARY_CONVENTION: &str = "closed";

/// Counts with the requested method; `Auto` uses meet-in-the-middle for quadratics.
pub fn count(req: &CountRequest<'_>, budget: u64) -> Result<CountRecord> {
    let (count, method) = match req.method {
        CountMethod::Naive => (count_naive(req, budget)?, CountMethod::Naive),
        CountMethod::MeetInMiddle => (count_meet_in_middle(req, budget)?, CountMethod::MeetInMiddle),
        CountMethod::Auto => {
            if req.system.degree() == 2 {
                (count_meet_in_middle(req, budget)?, CountMethod::MeetInMiddle)
            } else {
                (count_naive(req, budget)?, CountMethod::Naive)
            }
        }
    };
    Ok(CountRecord {
        scale: req.scale,
        count,
        method,
        boundary: BOUNDARY_CONVENTION,
        admissible_box: req.region.is_admissible(),
        budget,
    })
}

/// Monomials of one form as `(coefficient, [(variable, power)])`.
#[derive(Clone, Debug)]
pub(crate) struct CompiledForm {
    pub terms: Vec<(i128, Vec<(usize, u32)>)>,
}

impl CompiledForm {
    pub fn new(form: &crate::forms::IntegerForm) -> Self {
        let terms = form
            .terms()
            .iter()
            .map(|(e, &c)| {
                let factors = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(v, &p)| (v, p))
                    .collect();
                (c as i128, factors)
            })
            .collect();
        CompiledForm { terms }
    }
}

/// Powers `x^k` for `x` in a range and `k <= max_power`.
#[derive(Clone, Debug)]
pub(crate) struct PowerTable {
    lo: i64,
    stride: usize,
    data: Vec<i128>,
}

impl PowerTable {
    pub fn new(lo: i64, hi: i64, max_power: u32) -> Self {
        let stride = max_power as usize + 1;
        let mut data = Vec::with_capacity(((hi - lo + 1).max(0) as usize) * stride);
        for x in lo..=hi {
            let mut p: i128 = 1;
            for _ in 0..stride {
                data.push(p);
                p = p.saturating_mul(x as i128);
            }
        }
        PowerTable { lo, stride, data }
    }

    #[inline]
    pub fn get(&self, x: i64, k: u32) -> i128 {
        self.data[(x - self.lo) as usize * self.stride + k as usize]
    }
}

/// Per-form value bounds over the integer ranges; errors if they do not fit `i128`.
pub(crate) fn value_bounds(system: &FormSystem, ranges: &[(i64, i64)]) -> Result<Vec<i128>> {
    let max_abs: Vec<u64> = ranges
        .iter()
        .map(|&(lo, hi)| lo.unsigned_abs().max(hi.unsigned_abs()))
        .collect();
    system
        .forms()
        .iter()
        .map(|f| {
            f.abs_bound_exact(&max_abs)
                .filter(|b| *b < (1i128 << 100))
                .ok_or(Error::Overflow("bounding form values on the box"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;

    #[test]
    fn auto_picks_fast_path_for_quadratics() {
        let sys = parse_system(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#).unwrap();
        let region = BoxRegion::symmetric(3);
        let rec = count(&CountRequest::new(&sys, &region, 5.0), DEFAULT_BUDGET).unwrap();
        assert_eq!(rec.count, 57);
        assert_eq!(rec.method, CountMethod::MeetInMiddle);
        assert_eq!(rec.boundary, "closed");
        assert!(!rec.admissible_box);
        let cubic = parse_system(r#"{"forms": ["x1^3 + x2^3 - x3^3"]}"#).unwrap();
        let rec = count(&CountRequest::new(&cubic, &region, 4.0), DEFAULT_BUDGET).unwrap();
        assert_eq!(rec.method, CountMethod::Naive);
    }
}
