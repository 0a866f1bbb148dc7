//! Meet-in-the-middle counting for quadratic systems.
//!
//! Fixing a set of conditioning variables turns the remaining system into a
//! sum of pieces in disjoint variable groups. The groups are split into a left
//! and a right side; per side a histogram of value vectors is built by
//! convolving group histograms, and the zeros of the full system are matched
//! pairs `left + right = 0`.
//!
//! Value vectors are packed into one `i128` with mixed-radix weights large
//! enough that packing is additive and injective on all partial sums.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{count_naive, value_bounds, CountRequest, PowerTable};
use crate::error::{check_budget, Error, Result};
use crate::forms::FormSystem;

/// Conditioning set and the left/right grouping of the remaining variables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitPlan {
    pub conditioned: Vec<usize>,
    pub left: Vec<Vec<usize>>,
    pub right: Vec<Vec<usize>>,
    /// Estimated work in evaluated points.
    pub cost: f64,
    pub naive_cost: f64,
}

// Full subset search over conditioning sets up to this many variables.
const EXHAUSTIVE_VARS: usize = 16;
const EXHAUSTIVE_GROUPS: usize = 14;

/// Chooses the conditioning set minimizing `W^|K| * (W^|L| + W^|R|)`.
pub fn plan_split(system: &FormSystem, ranges: &[(i64, i64)]) -> SplitPlan {
    let n = system.vars();
    let widths: Vec<f64> = ranges
        .iter()
        .map(|&(lo, hi)| ((hi - lo + 1).max(1)) as f64)
        .collect();
    let naive_cost: f64 = widths.iter().product();
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for f in system.forms() {
        for e in f.terms().keys() {
            let s: Vec<usize> = (0..n).filter(|&v| e[v] > 0).collect();
            if s.len() >= 2 && !supports.contains(&s) {
                supports.push(s);
            }
        }
    }
    let masks: Vec<u32> = if n <= EXHAUSTIVE_VARS {
        let mut m: Vec<u32> = (0..(1u32 << n)).collect();
        m.sort_by_key(|x| (x.count_ones(), *x));
        m
    } else {
        vec![0]
    };
    let mut best: Option<SplitPlan> = None;
    for mask in masks {
        let conditioned: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let free: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 0).collect();
        let groups = free_groups(&free, &supports, mask);
        let (left, right) = balance(&groups, &widths);
        let side_cost = |side: &[Vec<usize>]| -> f64 {
            if side.is_empty() {
                1.0
            } else {
                side.iter().flatten().map(|&v| widths[v]).product()
            }
        };
        let outer: f64 = conditioned.iter().map(|&v| widths[v]).product();
        let cost = outer * (side_cost(&left) + side_cost(&right));
        if best.as_ref().map_or(true, |b| cost < b.cost) {
            best = Some(SplitPlan {
                conditioned,
                left,
                right,
                cost,
                naive_cost,
            });
        }
    }
    best.expect("at least the empty conditioning set is tried")
}

fn free_groups(free: &[usize], supports: &[Vec<usize>], mask: u32) -> Vec<Vec<usize>> {
    let n = free.iter().max().map_or(0, |&m| m + 1);
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for s in supports {
        let rest: Vec<usize> = s.iter().copied().filter(|&v| mask >> v & 1 == 0).collect();
        for w in rest.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for &v in free {
        let r = find(&mut parent, v);
        match roots.iter().position(|&x| x == r) {
            Some(i) => groups[i].push(v),
            None => {
                roots.push(r);
                groups.push(vec![v]);
            }
        }
    }
    groups
}

/// Splits groups into two sides minimizing the sum of side sizes.
fn balance(groups: &[Vec<usize>], widths: &[f64]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let logs: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&v| widths[v].ln()).sum())
        .collect();
    let m = groups.len();
    if m <= 1 {
        return (groups.to_vec(), Vec::new());
    }
    let pick = if m <= EXHAUSTIVE_GROUPS {
        // group 0 stays on the left
        let mut best = (f64::INFINITY, 0u32);
        for sel in 0..(1u32 << (m - 1)) {
            let assign = sel << 1;
            let (mut l, mut r) = (0.0, 0.0);
            for (i, lg) in logs.iter().enumerate() {
                if assign >> i & 1 == 1 {
                    r += lg;
                } else {
                    l += lg;
                }
            }
            let c = l.exp() + if assign == 0 { 0.0 } else { r.exp() };
            if c < best.0 {
                best = (c, assign);
            }
        }
        best.1
    } else {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| logs[b].total_cmp(&logs[a]));
        let (mut l, mut r) = (0.0, 0.0);
        let mut assign = 0u32;
        for i in order {
            if l <= r {
                l += logs[i];
            } else {
                r += logs[i];
                assign |= 1 << i;
            }
        }
        assign
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if pick >> i & 1 == 1 {
            right.push(g.clone());
        } else {
            left.push(g.clone());
        }
    }
    (left, right)
}

/// Exact count via the split plan; falls back to naive enumeration when no split helps.
pub fn count_meet_in_middle(req: &CountRequest<'_>, budget: u64) -> Result<u64> {
    let system = req.system;
    if system.degree() != 2 {
        return Err(Error::DegreeMismatch {
            required: 2,
            found: system.degree(),
        });
    }
    let ranges = req.ranges()?;
    if ranges.iter().any(|&(lo, hi)| hi < lo) {
        return Ok(0);
    }
    let bounds = value_bounds(system, &ranges)?;
    let weights = packing_weights(&bounds)?;
    let plan = plan_split(system, &ranges);
    if plan.cost >= plan.naive_cost {
        log::warn!("no split beats plain enumeration for {system}; counting naively");
        return count_naive(req, budget);
    }
    check_budget("meet-in-the-middle", plan.cost, budget)?;

    let tables: Vec<PowerTable> = ranges
        .iter()
        .map(|&(lo, hi)| PowerTable::new(lo, hi, 2))
        .collect();
    let outer_sizes: Vec<u64> = plan
        .conditioned
        .iter()
        .map(|&v| (ranges[v].1 - ranges[v].0 + 1) as u64)
        .collect();
    let outer: u64 = outer_sizes.iter().product();
    let mut group_of = vec![usize::MAX; system.vars()];
    let groups: Vec<&Vec<usize>> = plan.left.iter().chain(plan.right.iter()).collect();
    for (gi, g) in groups.iter().enumerate() {
        for &v in g.iter() {
            group_of[v] = gi;
        }
    }
    let ctx = Context {
        system,
        ranges: &ranges,
        tables: &tables,
        weights: &weights,
        plan: &plan,
        group_of: &group_of,
    };
    let total: u64 = (0..outer)
        .into_par_iter()
        .map(|idx| {
            let mut fixed = vec![0i64; system.vars()];
            let mut rest = idx;
            for (k, &v) in plan.conditioned.iter().enumerate() {
                let size = outer_sizes[k];
                fixed[v] = ranges[v].0 + (rest % size) as i64;
                rest /= size;
            }
            ctx.count_fibre(&fixed)
        })
        .sum();
    Ok(total)
}

fn packing_weights(bounds: &[i128]) -> Result<Vec<i128>> {
    let mut weights = Vec::with_capacity(bounds.len());
    let mut w: i128 = 1;
    for &b in bounds {
        weights.push(w);
        let radix = b
            .checked_mul(4)
            .and_then(|x| x.checked_add(1))
            .ok_or(Error::Overflow("packing value vectors"))?;
        w = w
            .checked_mul(radix)
            .filter(|&x| x < (1i128 << 125))
            .ok_or(Error::Overflow("packing value vectors"))?;
    }
    Ok(weights)
}

struct Context<'a> {
    system: &'a FormSystem,
    ranges: &'a [(i64, i64)],
    tables: &'a [PowerTable],
    weights: &'a [i128],
    plan: &'a SplitPlan,
    group_of: &'a [usize],
}

type Histogram = HashMap<i128, u64>;

impl Context<'_> {
    fn count_fibre(&self, fixed: &[i64]) -> u64 {
        let n_groups = self.plan.left.len() + self.plan.right.len();
        let mut group_terms: Vec<Vec<(i128, Vec<(usize, u32)>)>> = vec![Vec::new(); n_groups];
        let mut constant: i128 = 0;
        for (i, f) in self.system.forms().iter().enumerate() {
            let w = self.weights[i];
            for (e, &c) in f.terms() {
                let mut coeff = c as i128 * w;
                let mut free = Vec::new();
                for (v, &p) in e.iter().enumerate() {
                    if p == 0 {
                        continue;
                    }
                    if self.group_of[v] == usize::MAX {
                        coeff *= self.tables[v].get(fixed[v], p);
                    } else {
                        free.push((v, p));
                    }
                }
                if coeff == 0 {
                    continue;
                }
                match free.first() {
                    None => constant += coeff,
                    Some(&(v, _)) => group_terms[self.group_of[v]].push((coeff, free)),
                }
            }
        }
        let n_left = self.plan.left.len();
        let mut left = side_histogram(
            self.plan.left.iter().zip(&group_terms[..n_left]),
            self.ranges,
            self.tables,
        );
        let right = side_histogram(
            self.plan.right.iter().zip(&group_terms[n_left..]),
            self.ranges,
            self.tables,
        );
        if constant != 0 {
            left = left.into_iter().map(|(k, c)| (k + constant, c)).collect();
        }
        let (small, large) = if left.len() <= right.len() {
            (&left, &right)
        } else {
            (&right, &left)
        };
        small
            .iter()
            .map(|(k, c)| c * large.get(&-k).copied().unwrap_or(0))
            .sum()
    }
}

fn side_histogram<'a>(
    groups: impl Iterator<Item = (&'a Vec<usize>, &'a Vec<(i128, Vec<(usize, u32)>)>)>,
    ranges: &[(i64, i64)],
    tables: &[PowerTable],
) -> Histogram {
    let mut acc: Histogram = HashMap::from([(0, 1)]);
    for (vars, terms) in groups {
        let h = group_histogram(vars, terms, ranges, tables);
        acc = convolve(&acc, &h);
    }
    acc
}

fn group_histogram(
    vars: &[usize],
    terms: &[(i128, Vec<(usize, u32)>)],
    ranges: &[(i64, i64)],
    tables: &[PowerTable],
) -> Histogram {
    let mut h: Histogram = HashMap::new();
    let mut x: Vec<i64> = vec![0; ranges.len()];
    for &v in vars {
        x[v] = ranges[v].0;
    }
    loop {
        let mut key: i128 = 0;
        for (c, factors) in terms {
            let mut t = *c;
            for &(v, p) in factors {
                t *= tables[v].get(x[v], p);
            }
            key += t;
        }
        *h.entry(key).or_insert(0) += 1;
        let mut k = vars.len();
        loop {
            if k == 0 {
                return h;
            }
            k -= 1;
            let v = vars[k];
            if x[v] < ranges[v].1 {
                x[v] += 1;
                break;
            }
            x[v] = ranges[v].0;
        }
    }
}

fn convolve(a: &Histogram, b: &Histogram) -> Histogram {
    if a.len() == 1 && a.contains_key(&0) {
        let c = a[&0];
        return b.iter().map(|(&k, &v)| (k, v * c)).collect();
    }
    let mut out: Histogram = HashMap::with_capacity(a.len().max(b.len()));
    for (&ka, &ca) in a {
        for (&kb, &cb) in b {
            *out.entry(ka + kb).or_insert(0) += ca * cb;
        }
    }
    out
}
