//! Exponential sums `S(alpha; P)`, local sums `S_{q,a}`, the oscillatory
//! integral `S_inf(gamma)`, major arcs, the finite-grid orthogonality count
//! and the repulsion diagnostic.
//!
//! Sums over a product box factor over the variable blocks of the system, so
//! each block is enumerated once into a histogram of value vectors and every
//! later evaluation runs over the histogram.

use std::collections::{BTreeSet, HashMap};

use num_complex::Complex64;
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::blocks::{split_blocks, Block};
use crate::error::{check_budget, Error, Result};
use crate::forms::region::range_points;
use crate::forms::{BoxRegion, FormSystem};
use crate::lattice::{CompiledForm, PowerTable};
use crate::numeric::{composite_nodes, frac_product, gauss_legendre, unit_phase, ComplexSum};

/// Value vectors of one block over its integer box, with multiplicities.
#[derive(Clone, Debug)]
struct BlockHistogram {
    entries: Vec<(Vec<i128>, u64)>,
}

fn block_histogram(block: &Block, ranges: &[(i64, i64)], degree: u32) -> BlockHistogram {
    let local: Vec<(i64, i64)> = block.vars.iter().map(|&v| ranges[v]).collect();
    let forms: Vec<CompiledForm> = block.forms.iter().map(CompiledForm::new).collect();
    let tables: Vec<PowerTable> = local.iter().map(|&(lo, hi)| PowerTable::new(lo, hi, degree)).collect();
    let mut hist: HashMap<Vec<i128>, u64> = HashMap::new();
    if local.iter().any(|&(lo, hi)| hi < lo) {
        return BlockHistogram { entries: Vec::new() };
    }
    let mut x: Vec<i64> = local.iter().map(|r| r.0).collect();
    loop {
        let values: Vec<i128> = forms
            .iter()
            .map(|f| {
                f.terms
                    .iter()
                    .map(|(c, factors)| factors.iter().fold(*c, |t, &(v, p)| t * tables[v].get(x[v], p)))
                    .sum()
            })
            .collect();
        *hist.entry(values).or_insert(0) += 1;
        let mut k = x.len();
        let mut done = true;
        while k > 0 {
            k -= 1;
            if x[k] < local[k].1 {
                x[k] += 1;
                done = false;
                break;
            }
            x[k] = local[k].0;
        }
        if done {
            break;
        }
    }
    let mut entries: Vec<(Vec<i128>, u64)> = hist.into_iter().collect();
    entries.sort_unstable();
    BlockHistogram { entries }
}

/// Precomputed block histograms of a system over a scaled box; evaluates `S(alpha; P)`.
#[derive(Clone, Debug)]
pub struct ExpSum {
    blocks: Vec<BlockHistogram>,
    constants: Vec<i128>,
    points: f64,
    r: usize,
}

impl ExpSum {
    pub fn new(system: &FormSystem, scale: f64, region: &BoxRegion, budget: u64) -> Result<Self> {
        region.check_dim(system.vars())?;
        let ranges = region.integer_ranges(scale)?;
        crate::lattice::value_bounds(system, &ranges)?;
        let (blocks, constants) = split_blocks(system);
        let work: f64 = blocks
            .iter()
            .map(|b| range_points(&b.vars.iter().map(|&v| ranges[v]).collect::<Vec<_>>()))
            .sum();
        check_budget("exponential sum enumeration", work, budget)?;
        let hists = blocks
            .par_iter()
            .map(|b| block_histogram(b, &ranges, system.degree()))
            .collect();
        Ok(ExpSum {
            blocks: hists,
            constants: constants.into_iter().map(i128::from).collect(),
            points: range_points(&ranges),
            r: system.len(),
        })
    }

    /// Number of lattice points in the scaled box.
    pub fn points(&self) -> f64 {
        self.points
    }

    pub fn eval(&self, alpha: &[f64]) -> Result<Complex64> {
        if alpha.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: alpha.len(),
            });
        }
        let phase = |v: &[i128]| -> f64 { alpha.iter().zip(v).map(|(&a, &k)| frac_product(a, k)).sum() };
        let mut total = unit_phase(phase(&self.constants));
        for b in &self.blocks {
            let mut acc = ComplexSum::new();
            for (v, m) in &b.entries {
                acc.add(unit_phase(phase(v)) * *m as f64);
            }
            total *= acc.value();
        }
        if self.points == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(total)
    }
}

/// `S(alpha; P) = sum over x / P in the box of e(alpha . f(x))`.
pub fn exp_sum(system: &FormSystem, alpha: &[f64], scale: f64, region: &BoxRegion, budget: u64) -> Result<Complex64> {
    ExpSum::new(system, scale, region, budget)?.eval(alpha)
}

fn roots_of_unity(q: u64) -> Vec<Complex64> {
    (0..q).map(|k| unit_phase(k as f64 / q as f64)).collect()
}

/// Residue histograms of a system modulo `q`; evaluates `S_{q,a}` for any `a`.
#[derive(Clone, Debug)]
pub struct LocalSums {
    q: u64,
    n: usize,
    r: usize,
    blocks: Vec<Vec<(Vec<u64>, u64)>>,
    constants: Vec<u64>,
    roots: Vec<Complex64>,
}

impl LocalSums {
    pub fn new(system: &FormSystem, q: u64, budget: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("modulus q must be positive".into()));
        }
        let (blocks, constants) = split_blocks(system);
        let work: f64 = blocks.iter().map(|b| (q as f64).powi(b.vars.len() as i32)).sum();
        check_budget("local sum enumeration", work, budget)?;
        let qi = q as i128;
        let hists = blocks
            .iter()
            .map(|b| {
                let forms: Vec<Vec<(i128, Vec<u32>)>> = b
                    .forms
                    .iter()
                    .map(|f| f.terms().iter().map(|(e, &c)| ((c as i128).rem_euclid(qi), e.clone())).collect())
                    .collect();
                let k = b.vars.len();
                let mut hist: HashMap<Vec<u64>, u64> = HashMap::new();
                let mut y = vec![0i128; k];
                loop {
                    let vals: Vec<u64> = forms
                        .iter()
                        .map(|terms| {
                            let mut acc = 0i128;
                            for (c, e) in terms {
                                let mut t = *c;
                                for (v, &p) in e.iter().enumerate() {
                                    for _ in 0..p {
                                        t = t * y[v] % qi;
                                    }
                                }
                                acc = (acc + t) % qi;
                            }
                            acc as u64
                        })
                        .collect();
                    *hist.entry(vals).or_insert(0) += 1;
                    let mut j = k;
                    let mut done = true;
                    while j > 0 {
                        j -= 1;
                        if y[j] + 1 < qi {
                            y[j] += 1;
                            done = false;
                            break;
                        }
                        y[j] = 0;
                    }
                    if done {
                        break;
                    }
                }
                let mut entries: Vec<(Vec<u64>, u64)> = hist.into_iter().collect();
                entries.sort_unstable();
                entries
            })
            .collect();
        Ok(LocalSums {
            q,
            n: system.vars(),
            r: system.len(),
            blocks: hists,
            constants: constants.iter().map(|&c| (c as i128).rem_euclid(qi) as u64).collect(),
            roots: roots_of_unity(q),
        })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// `q^{-n} sum_{y mod q} e(a . f(y) / q)`.
    pub fn sum(&self, a: &[i64]) -> Result<Complex64> {
        if a.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                found: a.len(),
            });
        }
        let q = self.q as i128;
        let a: Vec<i128> = a.iter().map(|&v| (v as i128).rem_euclid(q)).collect();
        let index = |vals: &[u64]| -> usize {
            (a.iter().zip(vals).map(|(x, &v)| x * v as i128).sum::<i128>() % q) as usize
        };
        let mut total = self.roots[index(&self.constants)];
        for b in &self.blocks {
            let mut acc = ComplexSum::new();
            for (vals, m) in b {
                acc.add(self.roots[index(vals)] * *m as f64);
            }
            total *= acc.value();
        }
        Ok(total / (self.q as f64).powi(self.n as i32))
    }
}

/// `S_{q,a} = q^{-n} sum_{y in {1..q}^n} e((a / q) . f(y))`.
pub fn local_sum(system: &FormSystem, q: u64, a: &[i64], budget: u64) -> Result<Complex64> {
    LocalSums::new(system, q, budget)?.sum(a)
}

/// Gauss–Legendre settings for `S_inf`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Nodes per panel.
    pub order: usize,
    /// Panels per unit of phase variation, before doubling.
    pub panels_per_cycle: f64,
    pub min_panels: usize,
    pub max_panels: usize,
    /// Absolute tolerance on the change between successive doublings.
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 16,
            panels_per_cycle: 1.0,
            min_panels: 2,
            max_panels: 4096,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuadratureEstimate {
    pub re: f64,
    pub im: f64,
    /// Change under the last panel doubling, propagated through the block product.
    pub error: f64,
    /// Panels per axis in the widest block.
    pub panels: usize,
}

impl QuadratureEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `int_box e(gamma . f^[d](t)) dt`, factored over variable blocks of the leading parts.
pub fn s_infinity(system: &FormSystem, gamma: &[f64], region: &BoxRegion, spec: &QuadratureSpec, budget: u64) -> Result<QuadratureEstimate> {
    region.check_dim(system.vars())?;
    if gamma.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            found: gamma.len(),
        });
    }
    let lead = system.leading_parts()?;
    let (blocks, _) = split_blocks(&lead);
    let rule = gauss_legendre(spec.order);
    let mut value = Complex64::new(1.0, 0.0);
    let mut parts = Vec::new();
    let mut widest = 0;
    let mut spent = 0.0;
    for block in &blocks {
        let sub = region.restrict(&block.vars);
        let forms: Vec<crate::forms::RealForm> = block.forms.iter().map(|f| f.to_real()).collect();
        // phase variation across the block: |gamma| times the largest value of the block forms
        let bound: f64 = forms
            .iter()
            .zip(gamma)
            .map(|(f, g)| g.abs() * f.terms().values().map(|c| c.abs()).sum::<f64>())
            .sum();
        let k = block.vars.len() as i32;
        let mut panels = ((bound * spec.panels_per_cycle).ceil() as usize).max(spec.min_panels);
        let eval = |panels: usize| -> Complex64 {
            let axes: Vec<Vec<(f64, f64)>> = sub
                .intervals()
                .iter()
                .map(|&(a, b)| composite_nodes(a, b, panels, &rule))
                .collect();
            tensor_integral(&axes, |t| {
                let phase: f64 = forms
                    .iter()
                    .zip(gamma)
                    .map(|(f, g)| g * f.evaluate(t).expect("dimension checked"))
                    .sum();
                unit_phase(phase)
            })
        };
        let cost = |p: usize| ((p * spec.order) as f64).powi(k);
        spent += cost(panels);
        check_budget("oscillatory quadrature", spent, budget)?;
        let mut coarse = eval(panels);
        let mut last_diff = f64::INFINITY;
        loop {
            let fine_panels = panels * 2;
            spent += cost(fine_panels);
            check_budget("oscillatory quadrature", spent, budget)?;
            let fine = eval(fine_panels);
            let diff = (fine - coarse).norm();
            panels = fine_panels;
            coarse = fine;
            if diff <= spec.tol {
                last_diff = diff;
                break;
            }
            if panels >= spec.max_panels {
                if diff >= last_diff {
                    return Err(Error::Numerical(format!(
                        "quadrature refinement does not converge: change {diff:.3e} after {panels} panels"
                    )));
                }
                last_diff = diff;
                break;
            }
            last_diff = diff;
        }
        widest = widest.max(panels);
        parts.push((coarse, last_diff));
        value *= coarse;
    }
    let mut error = 0.0;
    for (i, (_, e)) in parts.iter().enumerate() {
        let others: f64 = parts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (w, f))| w.norm() + f)
            .product();
        error += e * others;
    }
    Ok(QuadratureEstimate {
        re: value.re,
        im: value.im,
        error,
        panels: widest,
    })
}

fn tensor_integral(axes: &[Vec<(f64, f64)>], f: impl Fn(&[f64]) -> Complex64 + Sync) -> Complex64 {
    let k = axes.len();
    if k == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let partials: Vec<ComplexSum> = axes[0]
        .par_iter()
        .map(|&(x0, w0)| {
            let mut acc = ComplexSum::new();
            let mut idx = vec![0usize; k - 1];
            let mut t = vec![0.0; k];
            t[0] = x0;
            loop {
                let mut w = w0;
                for (j, &i) in idx.iter().enumerate() {
                    let (x, wx) = axes[j + 1][i];
                    t[j + 1] = x;
                    w *= wx;
                }
                acc.add(f(&t) * w);
                let mut j = k - 1;
                let mut done = true;
                while j > 0 {
                    j -= 1;
                    if idx[j] + 1 < axes[j + 1].len() {
                        idx[j] += 1;
                        done = false;
                        break;
                    }
                    idx[j] = 0;
                }
                if done {
                    break;
                }
            }
            acc
        })
        .collect();
    let mut total = ComplexSum::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}

/// A major-arc center `a / q` in lowest terms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ArcCenter {
    pub q: u64,
    pub a: Vec<u64>,
}

/// Centers `a / q` with `q <= P^Delta`, `0 <= a_i <= q`, `gcd(a, q) = 1`, and radius `P^{Delta - d}`.
#[derive(Clone, Debug, Serialize)]
pub struct ArcParameters {
    pub scale: f64,
    pub delta: f64,
    pub d: u32,
    #[serde(rename = "R")]
    pub r: usize,
    pub q_max: u64,
    pub radius: f64,
    pub centers: Vec<ArcCenter>,
}

pub fn major_arcs(scale: f64, delta: f64, d: u32, r: usize) -> Result<ArcParameters> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("Delta = {delta} must lie in (0, 1)")));
    }
    if !(scale >= 1.0) || r == 0 {
        return Err(Error::InvalidParameter("need P >= 1 and R >= 1".into()));
    }
    let q_max = scale.powf(delta).floor() as u64;
    let radius = scale.powf(delta - d as f64);
    let mut centers = BTreeSet::new();
    for q in 1..=q_max {
        let side = q + 1;
        let total = side.checked_pow(r as u32).ok_or(Error::Overflow("enumerating arc centers"))?;
        for mut idx in 0..total {
            let mut a = vec![0u64; r];
            for slot in a.iter_mut() {
                *slot = idx % side;
                idx /= side;
            }
            if a.iter().fold(q, |g, &x| g.gcd(&x)) == 1 {
                centers.insert(ArcCenter { q, a });
            }
        }
    }
    Ok(ArcParameters {
        scale,
        delta,
        d,
        r,
        q_max,
        radius,
        centers: centers.into_iter().collect(),
    })
}

impl ArcParameters {
    /// A center within the radius of `alpha` in sup norm, if any.
    pub fn covering_center(&self, alpha: &[f64]) -> Option<ArcCenter> {
        for q in 1..=self.q_max {
            let qf = q as f64;
            // candidate numerators per coordinate: floor and ceiling of alpha_i q
            let cands: Vec<Vec<u64>> = alpha
                .iter()
                .map(|&x| {
                    let lo = (x * qf).floor().clamp(0.0, qf) as u64;
                    let hi = (x * qf).ceil().clamp(0.0, qf) as u64;
                    if lo == hi {
                        vec![lo]
                    } else {
                        vec![lo, hi]
                    }
                })
                .collect();
            let mut idx = vec![0usize; alpha.len()];
            loop {
                let a: Vec<u64> = idx.iter().zip(&cands).map(|(&i, c)| c[i]).collect();
                let close = a.iter().zip(alpha).all(|(&ai, &x)| (x - ai as f64 / qf).abs() < self.radius);
                if close && a.iter().fold(q, |g, &x| g.gcd(&x)) == 1 {
                    return Some(ArcCenter { q, a });
                }
                let mut k = idx.len();
                let mut done = true;
                while k > 0 {
                    k -= 1;
                    if idx[k] + 1 < cands[k].len() {
                        idx[k] += 1;
                        done = false;
                        break;
                    }
                    idx[k] = 0;
                }
                if done {
                    break;
                }
            }
        }
        None
    }

    pub fn is_major(&self, alpha: &[f64]) -> bool {
        self.covering_center(alpha).is_some()
    }

    /// `sum_q q^R (2 P^{Delta - d})^R` over `q <= P^Delta`.
    pub fn measure_bound(&self) -> f64 {
        (1..=self.q_max)
            .map(|q| (q as f64).powi(self.r as i32) * (2.0 * self.radius).powi(self.r as i32))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthogonalityRoute {
    /// Sums `S(j / M)` evaluated one grid point at a time.
    Direct,
    /// Block histograms transformed with a multidimensional FFT.
    Fft,
    Auto,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityCount {
    pub count: u64,
    pub moduli: Vec<u64>,
    pub route: OrthogonalityRoute,
    /// Distance of the averaged sum from the nearest integer.
    pub residual: f64,
}

/// `N(P) = (prod M_i)^{-1} sum_j S(j_1 / M_1, ..., j_R / M_R; P)` with `M_i > 2 max |f_i|`.
pub fn count_via_orthogonality(
    system: &FormSystem,
    scale: f64,
    region: &BoxRegion,
    moduli: Option<&[u64]>,
    route: OrthogonalityRoute,
    budget: u64,
) -> Result<OrthogonalityCount> {
    if !system.is_independent() {
        return Err(Error::DependentSystem);
    }
    region.check_dim(system.vars())?;
    let ranges = region.integer_ranges(scale)?;
    let bounds = crate::lattice::value_bounds(system, &ranges)?;
    let minimal: Vec<u64> = bounds
        .iter()
        .map(|&b| u64::try_from(2 * b + 1).map_err(|_| Error::Overflow("grid size")))
        .collect::<Result<_>>()?;
    let moduli: Vec<u64> = match moduli {
        None => minimal.clone(),
        Some(m) => {
            if m.len() != system.len() {
                return Err(Error::DimensionMismatch {
                    expected: system.len(),
                    found: m.len(),
                });
            }
            for (i, (&mi, &need)) in m.iter().zip(&minimal).enumerate() {
                if mi < need {
                    return Err(Error::Precondition(format!(
                        "grid size M_{} = {mi} does not exceed 2 max|f_{}| = {}",
                        i + 1,
                        i + 1,
                        need - 1
                    )));
                }
            }
            m.to_vec()
        }
    };
    let sums = ExpSum::new(system, scale, region, budget)?;
    let grid: f64 = moduli.iter().map(|&m| m as f64).product();
    let support: f64 = sums.blocks.iter().map(|b| b.entries.len() as f64).sum();
    let direct_cost = grid * support.max(1.0);
    let fft_cost = grid * (sums.blocks.len() as f64 + 1.0) * grid.log2().max(1.0);
    let route = match route {
        OrthogonalityRoute::Auto if direct_cost <= fft_cost => OrthogonalityRoute::Direct,
        OrthogonalityRoute::Auto => OrthogonalityRoute::Fft,
        other => other,
    };
    let total = match route {
        OrthogonalityRoute::Direct => {
            check_budget("orthogonality grid", direct_cost, budget)?;
            orthogonality_direct(&sums, &moduli)
        }
        _ => {
            check_budget("orthogonality grid", fft_cost, budget)?;
            orthogonality_fft(&sums, &moduli)
        }
    };
    let rounded = total.round();
    let residual = (total - rounded).abs();
    if residual > 1e-6 {
        return Err(Error::Numerical(format!(
            "orthogonality average {total} is {residual:.2e} away from an integer"
        )));
    }
    Ok(OrthogonalityCount {
        count: rounded as u64,
        moduli,
        route,
        residual,
    })
}

fn residue(v: i128, m: u64) -> usize {
    v.rem_euclid(m as i128) as usize
}

fn orthogonality_direct(sums: &ExpSum, moduli: &[u64]) -> f64 {
    let roots: Vec<Vec<Complex64>> = moduli.iter().map(|&m| roots_of_unity(m)).collect();
    let r = moduli.len();
    let grid: u64 = moduli.iter().product();
    // S(j / M) with exact phases sum_i (j_i v_i mod M_i) / M_i
    let term = |j: &[u64], v: &[i128]| -> Complex64 {
        let mut z = Complex64::new(1.0, 0.0);
        for i in 0..r {
            let k = (j[i] as u128 * residue(v[i], moduli[i]) as u128 % moduli[i] as u128) as usize;
            z *= roots[i][k];
        }
        z
    };
    let partial: Vec<ComplexSum> = (0..grid)
        .into_par_iter()
        .map(|mut idx| {
            let mut j = vec![0u64; r];
            for (slot, &m) in j.iter_mut().zip(moduli) {
                *slot = idx % m;
                idx /= m;
            }
            let mut s = term(&j, &sums.constants);
            for b in &sums.blocks {
                let mut acc = ComplexSum::new();
                for (v, mult) in &b.entries {
                    acc.add(term(&j, v) * *mult as f64);
                }
                s *= acc.value();
            }
            let mut out = ComplexSum::new();
            out.add(s);
            out
        })
        .collect();
    let mut total = ComplexSum::new();
    for p in &partial {
        total.merge(p);
    }
    total.value().re / grid as f64
}

fn orthogonality_fft(sums: &ExpSum, moduli: &[u64]) -> f64 {
    let dims: Vec<usize> = moduli.iter().map(|&m| m as usize).collect();
    let size: usize = dims.iter().product();
    let index = |v: &[i128]| -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, &m) in moduli.iter().enumerate() {
            idx += residue(v[i], m) * stride;
            stride *= m as usize;
        }
        idx
    };
    let mut planner = FftPlanner::<f64>::new();
    let transform = |data: &mut Vec<Complex64>, planner: &mut FftPlanner<f64>| {
        let mut stride = 1;
        for &len in &dims {
            let fft = planner.plan_fft_inverse(len);
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            for base in 0..size {
                // first element of each line along this axis
                if (base / stride) % len != 0 {
                    continue;
                }
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process(&mut line);
                for (k, slot) in line.iter().enumerate() {
                    data[base + k * stride] = *slot;
                }
            }
            stride *= len;
        }
    };
    let mut product = vec![Complex64::new(0.0, 0.0); size];
    product[index(&sums.constants)] = Complex64::new(1.0, 0.0);
    transform(&mut product, &mut planner);
    for b in &sums.blocks {
        let mut h = vec![Complex64::new(0.0, 0.0); size];
        for (v, m) in &b.entries {
            h[index(v)] += *m as f64;
        }
        transform(&mut h, &mut planner);
        for (p, x) in product.iter_mut().zip(&h) {
            *p *= x;
        }
    }
    let total: ComplexSum = {
        let mut acc = ComplexSum::new();
        for z in &product {
            acc.add(*z);
        }
        acc
    };
    total.value().re / size as f64
}

/// One `(alpha, beta)` sample of the repulsion diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct RepulsionSample {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `min(|S(alpha)|, |S(alpha + beta)|) / P^{n + eps}`.
    pub value: f64,
    /// `max(P^{-d} |beta|^{-1}, |beta|^{1/(d-1)})^C`; infinite when `beta = 0`.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RepulsionReport {
    pub scale: f64,
    pub cancellation: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub random_samples: usize,
    /// Largest ratio over all samples: an empirical lower bound for the constant.
    pub worst_constant: f64,
    pub samples: Vec<RepulsionSample>,
}

pub fn repulsion_bound(scale: f64, d: u32, beta: &[f64], cancellation: f64) -> f64 {
    let norm = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    if norm == 0.0 {
        return f64::INFINITY;
    }
    let a = scale.powi(-(d as i32)) / norm;
    let b = norm.powf(1.0 / (d as f64 - 1.0));
    a.max(b).powf(cancellation)
}

/// Ratios `min(|S(alpha)|, |S(alpha + beta)|) / P^{n+eps}` over the repulsion bound,
/// on a structured set of samples plus `random_samples` seeded ones.
#[allow(clippy::too_many_arguments)]
pub fn repulsion_diagnostic(
    system: &FormSystem,
    scale: f64,
    region: &BoxRegion,
    cancellation: f64,
    epsilon: f64,
    random_samples: usize,
    seed: u64,
    budget: u64,
) -> Result<RepulsionReport> {
    if !(cancellation > 0.0) {
        return Err(Error::InvalidParameter("the cancellation exponent must be positive".into()));
    }
    if system.degree() < 2 {
        return Err(Error::DegreeMismatch {
            required: 2,
            found: system.degree(),
        });
    }
    let sums = ExpSum::new(system, scale, region, budget)?;
    let r = system.len();
    let d = system.degree();
    let n = system.vars() as f64;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    // structured samples: rationals with small denominators, offsets on a geometric ladder
    let ladder: Vec<f64> = (0..=2 * d)
        .map(|k| scale.powf(-(k as f64) / 2.0))
        .chain([0.0])
        .collect();
    for q in 1..=4u32 {
        for a in 0..q {
            let alpha = vec![a as f64 / q as f64; r];
            for &step in &ladder {
                for axis in 0..r {
                    let mut beta = vec![0.0; r];
                    beta[axis] = step;
                    pairs.push((alpha.clone(), beta));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_samples {
        let alpha: Vec<f64> = (0..r).map(|_| rng.random::<f64>()).collect();
        let exponent = rng.random::<f64>() * d as f64;
        let beta: Vec<f64> = (0..r)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale.powf(-exponent))
            .collect();
        pairs.push((alpha, beta));
    }
    let norm = scale.powf(n + epsilon);
    let samples: Vec<RepulsionSample> = pairs
        .into_par_iter()
        .map(|(alpha, beta)| {
            let shifted: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a + b).collect();
            let s1 = sums.eval(&alpha).expect("dimension checked").norm();
            let s2 = sums.eval(&shifted).expect("dimension checked").norm();
            let value = s1.min(s2) / norm;
            let bound = repulsion_bound(scale, d, &beta, cancellation);
            let ratio = if bound.is_infinite() { 0.0 } else { value / bound };
            RepulsionSample {
                alpha,
                beta,
                value,
                bound,
                ratio,
            }
        })
        .collect();
    let worst_constant = samples.iter().fold(0.0f64, |m, s| m.max(s.ratio));
    Ok(RepulsionReport {
        scale,
        cancellation,
        epsilon,
        seed,
        random_samples,
        worst_constant,
        samples,
    })
}

/// Both sides of `S(a/q + alpha) ~ P^n S_{q,a} S_inf(P^d alpha)` and their normalized gap.
#[derive(Clone, Debug, Serialize)]
pub struct ApproximationResidual {
    pub q: u64,
    pub a: Vec<i64>,
    pub alpha: Vec<f64>,
    pub scale: f64,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub residual: f64,
    /// `residual / (q P^{n-1} (1 + P^d |alpha|))`.
    pub normalized: f64,
    pub quadrature_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn major_arc_approximation_check(
    system: &FormSystem,
    q: u64,
    a: &[i64],
    alpha: &[f64],
    scale: f64,
    region: &BoxRegion,
    spec: &QuadratureSpec,
    budget: u64,
) -> Result<ApproximationResidual> {
    if q == 0 || q as f64 > scale {
        return Err(Error::Precondition(format!("need 1 <= q <= P, got q = {q}, P = {scale}")));
    }
    if a.len() != system.len() || alpha.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            found: a.len().min(alpha.len()),
        });
    }
    let n = system.vars() as i32;
    let d = system.degree() as i32;
    let point: Vec<f64> = a
        .iter()
        .zip(alpha)
        .map(|(&ai, &x)| ai.rem_euclid(q as i64) as f64 / q as f64 + x)
        .collect();
    let lhs = exp_sum(system, &point, scale, region, budget)?;
    let local = local_sum(system, q, a, budget)?;
    let gamma: Vec<f64> = alpha.iter().map(|x| x * scale.powi(d)).collect();
    let integral = s_infinity(system, &gamma, region, spec, budget)?;
    let rhs = local * integral.value() * scale.powi(n);
    let residual = (lhs - rhs).norm();
    let sup = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let normalized = residual / (q as f64 * scale.powi(n - 1) * (1.0 + scale.powi(d) * sup));
    Ok(ApproximationResidual {
        q,
        a: a.to_vec(),
        alpha: alpha.to_vec(),
        scale,
        lhs: [lhs.re, lhs.im],
        rhs: [rhs.re, rhs.im],
        residual,
        normalized,
        quadrature_error: integral.error * scale.powi(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use crate::lattice::{count_naive, CountRequest};
    use proptest::prelude::*;
    use rand::Rng;

    const BUDGET: u64 = 1 << 34;

    fn sys(text: &str) -> FormSystem {
        parse_system(text).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_frequency_counts_points() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        for p in [1.0, 2.5, 7.0] {
            let v = exp_sum(&s, &[0.0], p, &BoxRegion::unit(3), BUDGET).unwrap();
            let k = (p as f64).floor() + 1.0;
            assert_eq!(v, Complex64::new(k * k * k, 0.0));
        }
    }

    #[test]
    fn periodicity_and_conjugation() {
        let s = sys(r#"{"forms": ["x1^2 + 3*x1*x2 - x2^2 + x3", "x2^2 - x3^2"]}"#);
        let box3 = BoxRegion::symmetric(3);
        let e = ExpSum::new(&s, 6.0, &box3, BUDGET).unwrap();
        let alpha = [0.3141, -0.2718];
        let v = e.eval(&alpha).unwrap();
        let shifted = e.eval(&[alpha[0] + 3.0, alpha[1] - 2.0]).unwrap();
        assert!(close(v, shifted, 1e-9));
        let neg = e.eval(&[-alpha[0], -alpha[1]]).unwrap();
        assert!(close(neg, v.conj(), 1e-9));
        assert!(v.norm() <= e.points());
    }

    #[test]
    fn block_product_matches_plain_sum() {
        let s = sys(r#"{"forms": ["x1^2 + 2*x2^2 - x3*x4 + 5"]}"#);
        let region = BoxRegion::symmetric(4);
        let alpha = 0.123456;
        let fast = exp_sum(&s, &[alpha], 4.0, &region, BUDGET).unwrap();
        let mut slow = Complex64::new(0.0, 0.0);
        for a in -4..=4i64 {
            for b in -4..=4i64 {
                for c in -4..=4i64 {
                    for d in -4..=4i64 {
                        let v = a * a + 2 * b * b - c * d + 5;
                        slow += unit_phase(alpha * v as f64);
                    }
                }
            }
        }
        assert!(close(fast, slow, 1e-9));
    }

    #[test]
    fn local_sum_examples() {
        let sq = sys(r#"{"forms": ["x1^2"]}"#);
        assert!(local_sum(&sq, 2, &[1], BUDGET).unwrap().norm() < 1e-15);
        let lin = sys(r#"{"n": 2, "forms": ["x1"]}"#);
        for q in [3u64, 5, 8, 9] {
            assert!(local_sum(&lin, q, &[1], BUDGET).unwrap().norm() < 1e-12);
        }
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        assert!(close(local_sum(&cone, 1, &[0], BUDGET).unwrap(), Complex64::new(1.0, 0.0), 1e-15));
        // quadratic Gauss sum: sum_y e(y^2 / 5) = sqrt 5
        let g = local_sum(&sq, 5, &[1], BUDGET).unwrap();
        assert!(close(g, Complex64::new(5f64.sqrt() / 5.0, 0.0), 1e-12));
    }

    #[test]
    fn local_sum_bounded_by_one() {
        let s = sys(r#"{"forms": ["x1^2 + x1*x2 - 3*x2^2", "x2*x3 + x3^2"]}"#);
        for q in 1..=12u64 {
            let t = LocalSums::new(&s, q, BUDGET).unwrap();
            for a1 in 0..q as i64 {
                for a2 in 0..q as i64 {
                    assert!(t.sum(&[a1, a2]).unwrap().norm() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn s_infinity_examples() {
        let sq = sys(r#"{"forms": ["x1^2"]}"#);
        let spec = QuadratureSpec::default();
        let zero = s_infinity(&sq, &[0.0], &BoxRegion::unit(1), &spec, BUDGET).unwrap();
        assert!(close(zero.value(), Complex64::new(1.0, 0.0), 1e-14));
        // int_0^1 e(t^2) dt = (C(2) + i S(2)) / 2 with the normalized Fresnel integrals
        let fres = s_infinity(&sq, &[1.0], &BoxRegion::unit(1), &spec, BUDGET).unwrap();
        assert!(close(fres.value(), Complex64::new(0.24412670303767134, 0.17170783918184912), 1e-9));
        let two = sys(r#"{"forms": ["x1^2 - x2^2 + x1*x3"]}"#);
        let region = BoxRegion::symmetric(3);
        for g in [0.5, 3.0, 11.0] {
            let v = s_infinity(&two, &[g], &region, &spec, BUDGET).unwrap();
            assert!(v.value().norm() <= region.volume() + v.error);
        }
    }

    #[test]
    fn arcs_examples() {
        let arcs = major_arcs(100.0, 0.2, 2, 1).unwrap();
        assert_eq!(arcs.q_max, 2);
        assert!((arcs.radius - 100f64.powf(-1.8)).abs() < 1e-18);
        assert!(arcs.is_major(&[0.5 + 1e-5]));
        assert!(!arcs.is_major(&[0.5 + 1e-3]));
        let only_one = major_arcs(100.0, 0.1, 2, 2).unwrap();
        assert_eq!(only_one.q_max, 1);
        let expected: Vec<ArcCenter> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|a| ArcCenter { q: 1, a: a.to_vec() })
            .collect();
        assert_eq!(only_one.centers, expected);
        assert!(major_arcs(10.0, 1.0, 2, 1).is_err());
    }

    #[test]
    fn arc_measure_below_bound() {
        let arcs = major_arcs(30.0, 0.6, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 200_000;
        let hits = (0..trials).filter(|_| arcs.is_major(&[rng.random::<f64>()])).count();
        let measure = hits as f64 / trials as f64;
        assert!(measure <= arcs.measure_bound() * 1.05 + 1e-3);
        // membership agrees with a scan over the listed centers
        for _ in 0..2000 {
            let x = rng.random::<f64>();
            let scan = arcs
                .centers
                .iter()
                .any(|c| (x - c.a[0] as f64 / c.q as f64).abs() < arcs.radius);
            assert_eq!(scan, arcs.is_major(&[x]));
        }
    }

    #[test]
    fn orthogonality_on_cone() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let region = BoxRegion::symmetric(3);
        for route in [OrthogonalityRoute::Direct, OrthogonalityRoute::Fft] {
            let c = count_via_orthogonality(&s, 5.0, &region, None, route, BUDGET).unwrap();
            assert_eq!(c.moduli, vec![151]);
            assert_eq!(c.count, 57);
        }
        let small = count_via_orthogonality(&s, 5.0, &region, Some(&[150]), OrthogonalityRoute::Auto, BUDGET);
        assert!(matches!(small, Err(Error::Precondition(_))));
    }

    #[test]
    fn orthogonality_two_forms() {
        let s = sys(r#"{"forms": ["x1^2 - x2^2 + x3", "x1*x3 - x2"]}"#);
        let region = BoxRegion::symmetric(3);
        let naive = count_naive(&CountRequest::new(&s, &region, 4.0), BUDGET).unwrap();
        for route in [OrthogonalityRoute::Direct, OrthogonalityRoute::Fft] {
            let c = count_via_orthogonality(&s, 4.0, &region, None, route, BUDGET).unwrap();
            assert_eq!(c.count, naive);
        }
    }

    #[test]
    fn repulsion_conventions() {
        let b = repulsion_bound(10.0, 2, &[10f64.powi(-1)], 1.5);
        assert!((b - 10f64.powf(-1.5)).abs() < 1e-15);
        assert!(repulsion_bound(10.0, 2, &[0.0], 1.0).is_infinite());
        let s = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let rep = repulsion_diagnostic(&s, 8.0, &BoxRegion::symmetric(3), 0.75, 1e-3, 20, 1, BUDGET).unwrap();
        assert!(rep.worst_constant.is_finite());
        let zero = rep.samples.iter().find(|s| s.beta.iter().all(|&b| b == 0.0)).unwrap();
        assert_eq!(zero.ratio, 0.0);
    }

    #[test]
    fn approximation_identity_at_zero() {
        let sq = sys(r#"{"forms": ["x1^2 + x2^2"]}"#);
        let region = BoxRegion::unit(2);
        let r = major_arc_approximation_check(&sq, 1, &[0], &[0.0], 10.0, &region, &QuadratureSpec::default(), BUDGET).unwrap();
        assert!((r.residual - (121.0 - 100.0)).abs() < 1e-9);
        assert!(major_arc_approximation_check(&sq, 11, &[1], &[0.0], 10.0, &region, &QuadratureSpec::default(), BUDGET).is_err());
    }

    #[test]
    fn approximation_residual_stays_bounded() {
        let sq = sys(r#"{"forms": ["x1^2"]}"#);
        let region = BoxRegion::unit(1);
        let spec = QuadratureSpec::default();
        let res: Vec<f64> = [20.0, 40.0, 80.0]
            .iter()
            .map(|&p| {
                major_arc_approximation_check(&sq, 2, &[1], &[0.3 / (p * p)], p, &region, &spec, BUDGET)
                    .unwrap()
                    .normalized
            })
            .collect();
        assert!(res.iter().all(|&r| r < 2.0), "{res:?}");
    }

    fn quad_system() -> impl Strategy<Value = String> {
        let coeff = -3i64..=3;
        prop::collection::vec(coeff, 6).prop_map(|c| {
            format!(
                r#"{{"n": 3, "d": 2, "forms": ["{}*x1^2 + {}*x2^2 + {}*x3^2 + {}*x1*x2 + {}*x2*x3 + {}*x1"]}}"#,
                c[0], c[1], c[2], c[3], c[4], c[5]
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn orthogonality_equals_naive(text in quad_system(), p in 1u32..=5) {
            let Ok(s) = parse_system(&text) else { return Ok(()); };
            let region = BoxRegion::symmetric(3);
            let naive = count_naive(&CountRequest::new(&s, &region, p as f64), BUDGET).unwrap();
            let c = count_via_orthogonality(&s, p as f64, &region, None, OrthogonalityRoute::Auto, BUDGET).unwrap();
            prop_assert_eq!(c.count, naive);
        }

        #[test]
        fn conjugate_symmetry_random(a in -2.0f64..2.0) {
            let s = sys(r#"{"forms": ["x1^2 - 2*x2^2 + x1*x2"]}"#);
            let e = ExpSum::new(&s, 5.0, &BoxRegion::symmetric(2), BUDGET).unwrap();
            let v = e.eval(&[a]).unwrap();
            prop_assert!(close(e.eval(&[-a]).unwrap(), v.conj(), 1e-9));
            prop_assert!(close(e.eval(&[a + 1.0]).unwrap(), v, 1e-9));
            prop_assert!(v.norm() <= e.points() + 1e-9);
        }
    }
}
