use rayon::prelude::*;

use super::{value_bounds, CompiledForm, CountRequest, PowerTable};
use crate::error::{check_budget, Result};
use crate::forms::region::range_points;

/// Plain enumeration of the scaled box. Shards over the first coordinate.
pub fn count_naive(req: &CountRequest<'_>, budget: u64) -> Result<u64> {
    let ranges = req.ranges()?;
    let points = range_points(&ranges);
    check_budget("naive enumeration", points, budget)?;
    if points == 0.0 {
        return Ok(0);
    }
    value_bounds(req.system, &ranges)?;
    let forms: Vec<CompiledForm> = req.system.forms().iter().map(CompiledForm::new).collect();
    let d = req.system.degree();
    let tables: Vec<PowerTable> = ranges
        .iter()
        .map(|&(lo, hi)| PowerTable::new(lo, hi, d))
        .collect();
    let (lo0, hi0) = ranges[0];
    let total = (lo0..=hi0)
        .into_par_iter()
        .map(|x0| count_slice(x0, &ranges, &forms, &tables))
        .sum();
    Ok(total)
}

fn count_slice(x0: i64, ranges: &[(i64, i64)], forms: &[CompiledForm], tables: &[PowerTable]) -> u64 {
    let n = ranges.len();
    let mut x: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    x[0] = x0;
    let mut hits = 0u64;
    loop {
        let zero = forms.iter().all(|f| {
            let mut acc: i128 = 0;
            for (c, factors) in &f.terms {
                let mut t = *c;
                for &(v, p) in factors {
                    t *= tables[v].get(x[v], p);
                }
                acc += t;
            }
            acc == 0
        });
        if zero {
            hits += 1;
        }
        // odometer over coordinates 1..n
        let mut k = n;
        loop {
            k -= 1;
            if k == 0 {
                return hits;
            }
            if x[k] < ranges[k].1 {
                x[k] += 1;
                break;
            }
            x[k] = ranges[k].0;
        }
    }
}
