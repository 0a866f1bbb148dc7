//! The auxiliary count `N^aux_f(B)`, the Weyl-differencing count
//! `N^weyl_f(B, delta)`, the eigenvalue bound for quadratic pencils and
//! exponent fits of the auxiliary count.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{FromPrimitive, Num};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_budget, Error, Result};
use crate::exp_sums::ExpSum;
use crate::forms::{BoxRegion, FormSystem, RealForm};
use crate::numeric::fit_line;
use crate::pencil::{gram_matrix, Cancellation, SigmaR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMethod {
    Enumerate,
    /// Quadratics only: candidates from a positive definite majorant, each checked exactly.
    Ellipsoid,
    Auto,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuxCountRecord {
    #[serde(rename = "B")]
    pub b: u64,
    pub count: u64,
    /// `|f^[d]|` in the threshold `|f^[d]| B^{d-2}`.
    pub f_norm: f64,
    pub threshold: f64,
    pub d: u32,
    pub n: usize,
    /// Zero leading part: the count is of tuples with `m = 0`.
    pub degenerate: bool,
    /// Integer coefficients, so every comparison was made in integers.
    pub exact_arithmetic: bool,
    pub method: AuxMethod,
    pub budget: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylCountRecord {
    #[serde(rename = "B")]
    pub b: u64,
    pub delta: f64,
    pub count: u64,
    pub d: u32,
    pub n: usize,
    pub budget: u64,
}

fn tuples(n: usize, d: u32, b: u64) -> f64 {
    ((2 * b + 1) as f64).powi((n * (d as usize).saturating_sub(1)) as i32)
}

fn check_form(f: &RealForm) -> Result<()> {
    if !(1..=3).contains(&f.degree()) {
        return Err(Error::InvalidParameter(format!(
            "auxiliary counts are implemented for degree 1 to 3, not {}",
            f.degree()
        )));
    }
    Ok(())
}

/// The derivative tensor in integers when every coefficient is an integer.
fn integer_tensor(f: &RealForm) -> Result<Option<Vec<i128>>> {
    let exact = f
        .terms()
        .values()
        .all(|&c| c.fract() == 0.0 && c.abs() < 2f64.powi(52));
    if !exact {
        return Ok(None);
    }
    let t = f.derivative_tensor()?;
    Ok(Some(t.data.iter().map(|&v| v as i128).collect()))
}

/// `d! |f^[d]|`, an integer for integer coefficients.
fn scaled_norm(f: &RealForm) -> i128 {
    let d = f.degree();
    f.terms()
        .iter()
        .filter(|(e, _)| e.iter().sum::<u32>() == d)
        .map(|(e, &c)| c.abs() as i128 * crate::forms::multi_factorial(e) as i128)
        .max()
        .unwrap_or(0)
}

/// Number of `(d-1)`-tuples in `[-B, B]^n` whose contraction `m` is accepted.
fn count_tuples<T>(tensor: &[T], n: usize, order: usize, b: i64, accept: &(impl Fn(&[T]) -> bool + Sync)) -> u64
where
    T: Num + Copy + Send + Sync + FromPrimitive,
{
    if order <= 1 {
        return accept(tensor) as u64;
    }
    let side = (2 * b + 1) as u64;
    let total = side.pow(n as u32);
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let x = decode(idx, n, b);
            let next = contract(tensor, n, &x);
            walk(&next, n, order - 1, b, accept)
        })
        .sum()
}

fn walk<T>(tensor: &[T], n: usize, order: usize, b: i64, accept: &impl Fn(&[T]) -> bool) -> u64
where
    T: Num + Copy + FromPrimitive,
{
    if order <= 1 {
        return accept(tensor) as u64;
    }
    let mut x = vec![-b; n];
    let mut count = 0;
    loop {
        count += walk(&contract(tensor, n, &x), n, order - 1, b, accept);
        if !step(&mut x, -b, b) {
            return count;
        }
    }
}

fn decode(mut idx: u64, n: usize, b: i64) -> Vec<i64> {
    let side = (2 * b + 1) as u64;
    (0..n)
        .map(|_| {
            let v = (idx % side) as i64 - b;
            idx /= side;
            v
        })
        .collect()
}

fn step(x: &mut [i64], lo: i64, hi: i64) -> bool {
    for v in x.iter_mut() {
        if *v < hi {
            *v += 1;
            return true;
        }
        *v = lo;
    }
    false
}

/// Contracts the first index of a symmetric tensor with `x`.
fn contract<T: Num + Copy + FromPrimitive>(tensor: &[T], n: usize, x: &[i64]) -> Vec<T> {
    let stride = tensor.len() / n;
    let mut out = vec![T::zero(); stride];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            continue;
        }
        let w = T::from_i64(xi).expect("small integer");
        for (o, &t) in out.iter_mut().zip(&tensor[i * stride..(i + 1) * stride]) {
            *o = *o + w * t;
        }
    }
    out
}

/// `#{(x^(1), .., x^(d-1)) in [-B, B]^{n(d-1)} : |m^(f)(x)| < |f^[d]| B^{d-2}}`.
pub fn aux_count(f: &RealForm, b: u64, budget: u64) -> Result<AuxCountRecord> {
    aux_count_with(f, b, AuxMethod::Auto, budget)
}

pub fn aux_count_with(f: &RealForm, b: u64, method: AuxMethod, budget: u64) -> Result<AuxCountRecord> {
    check_form(f)?;
    if b < 1 {
        return Err(Error::InvalidParameter("the box size B must be at least 1".into()));
    }
    let n = f.vars();
    let d = f.degree();
    let order = d as usize;
    let f_norm = f.sup_norm_leading();
    let threshold = f_norm * (b as f64).powi(d as i32 - 2);
    let degenerate = f_norm == 0.0;
    let method = match method {
        AuxMethod::Auto if d == 2 && !degenerate => AuxMethod::Ellipsoid,
        AuxMethod::Auto => AuxMethod::Enumerate,
        AuxMethod::Ellipsoid if d != 2 || degenerate => AuxMethod::Enumerate,
        m => m,
    };
    if method == AuxMethod::Enumerate {
        check_budget("auxiliary tuples", tuples(n, d, b), budget)?;
    }
    let bi = b as i64;
    let exact = integer_tensor(f)?;
    let exact_arithmetic = exact.is_some();
    let count = match (&exact, method) {
        (Some(t), AuxMethod::Ellipsoid) => {
            let bound = scaled_norm(f);
            let a = t.iter().map(|&v| v as f64).collect::<Vec<_>>();
            ellipsoid_candidates(&a, n, bi, threshold, budget, &|m: &[f64]| {
                // entries of m are exact integers here
                m.iter().all(|&v| 2 * (v.abs() as i128) < bound)
            })?
        }
        (None, AuxMethod::Ellipsoid) => {
            let a = f.derivative_tensor()?.data;
            ellipsoid_candidates(&a, n, bi, threshold, budget, &|m: &[f64]| {
                m.iter().all(|v| v.abs() < threshold)
            })?
        }
        (Some(t), _) => {
            // d! |m| < (d! |f|) B^{d-2}, all in integers
            let fact: i128 = (1..=d as i128).product();
            let rhs = if d >= 2 {
                scaled_norm(f) * (b as i128).pow(d - 2)
            } else {
                0
            };
            if degenerate {
                count_tuples(t, n, order, bi, &|m: &[i128]| m.iter().all(|&v| v == 0))
            } else if d >= 2 {
                count_tuples(t, n, order, bi, &|m: &[i128]| m.iter().all(|&v| fact * v.abs() < rhs))
            } else {
                let lhs_scale = b as i128;
                let norm = scaled_norm(f);
                count_tuples(t, n, order, bi, &|m: &[i128]| m.iter().all(|&v| lhs_scale * v.abs() < norm))
            }
        }
        (None, _) => {
            let t = f.derivative_tensor()?.data;
            if degenerate {
                count_tuples(&t, n, order, bi, &|m: &[f64]| m.iter().all(|&v| v == 0.0))
            } else {
                count_tuples(&t, n, order, bi, &|m: &[f64]| m.iter().all(|v| v.abs() < threshold))
            }
        }
    };
    Ok(AuxCountRecord {
        b,
        count,
        f_norm,
        threshold,
        d,
        n,
        degenerate,
        exact_arithmetic,
        method,
        budget,
    })
}

/// Points `x` in `[-B, B]^n` with `accept(A x)`, where `A` is the Hessian of a quadratic.
///
/// `|A x|_inf < c` implies `x^T (A^T A + mu I) x < n c^2 + mu n B^2` with
/// `mu = c^2 / B^2`; the right side is a positive definite ellipsoid whose
/// lattice points are enumerated coordinate by coordinate.
fn ellipsoid_candidates(
    a: &[f64],
    n: usize,
    b: i64,
    c: f64,
    budget: u64,
    accept: &(impl Fn(&[f64]) -> bool + Sync),
) -> Result<u64> {
    let am = DMatrix::from_row_slice(n, n, a);
    let mu = c * c / (b * b) as f64;
    let g = am.transpose() * &am + DMatrix::identity(n, n) * mu;
    let radius = 2.0 * n as f64 * c * c * (1.0 + 1e-9) + 1e-12;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numerical("ellipsoid majorant is not positive definite".into()))?;
    let r = chol.l().transpose();
    // x^T G x = sum_i r_ii^2 (x_i + sum_{j>i} r_ij / r_ii x_j)^2
    let mut x = vec![0i64; n];
    let mut visited = 0u64;
    let mut count = 0u64;
    let mut stack_partial = vec![0.0; n + 1];
    fn recurse(
        i: usize,
        r: &DMatrix<f64>,
        a: &DMatrix<f64>,
        b: i64,
        radius: f64,
        x: &mut Vec<i64>,
        partial: &mut Vec<f64>,
        visited: &mut u64,
        count: &mut u64,
        accept: &dyn Fn(&[f64]) -> bool,
    ) {
        let n = x.len();
        let rii = r[(i, i)];
        let shift: f64 = ((i + 1)..n).map(|j| r[(i, j)] / rii * x[j] as f64).sum();
        let room = radius - partial[i + 1];
        if room < 0.0 {
            return;
        }
        let half = room.sqrt() / rii.abs();
        let lo = ((-shift - half).ceil() as i64).max(-b);
        let hi = ((-shift + half).floor() as i64).min(b);
        for v in lo..=hi {
            x[i] = v;
            let t = rii * (v as f64 + shift);
            partial[i] = partial[i + 1] + t * t;
            *visited += 1;
            if i == 0 {
                let xs = DMatrix::from_iterator(n, 1, x.iter().map(|&u| u as f64));
                let m = a * xs;
                if accept(m.as_slice()) {
                    *count += 1;
                }
            } else {
                recurse(i - 1, r, a, b, radius, x, partial, visited, count, accept);
            }
        }
    }
    if n == 0 {
        return Ok(1);
    }
    recurse(
        n - 1,
        &r,
        &am,
        b,
        radius,
        &mut x,
        &mut stack_partial,
        &mut visited,
        &mut count,
        accept,
    );
    check_budget("ellipsoid candidates", visited as f64, budget)?;
    Ok(count)
}

/// `#{tuples : |v - m^(f)(x)|_inf < delta for some integer vector v}`.
pub fn weyl_count(f: &RealForm, b: u64, delta: f64, budget: u64) -> Result<WeylCountRecord> {
    check_form(f)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    if b < 1 {
        return Err(Error::InvalidParameter("the box size B must be at least 1".into()));
    }
    let n = f.vars();
    let d = f.degree();
    check_budget("Weyl tuples", tuples(n, d, b), budget)?;
    let count = if delta > 0.5 {
        tuples(n, d, b) as u64
    } else if integer_tensor(f)?.is_some() {
        // integer m: distance 0
        tuples(n, d, b) as u64
    } else {
        let t = f.derivative_tensor()?.data;
        count_tuples(&t, n, d as usize, b as i64, &|m: &[f64]| {
            m.iter().all(|v| (v - v.round()).abs() < delta)
        })
    };
    Ok(WeylCountRecord {
        b,
        delta,
        count,
        d,
        n,
        budget,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipsoidBound {
    #[serde(rename = "B")]
    pub b: u64,
    pub beta: Vec<f64>,
    /// Eigenvalues of `M(beta)`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `|beta . F|` in the sup norm of the leading part.
    pub form_norm: f64,
    /// `prod min(|beta . F| / |lambda| + 1, 2B + 1)`.
    pub value: f64,
}

/// Eigenvalue bound for `N^aux_{beta . F}(B)` of a quadratic system.
pub fn ellipsoid_bound(system: &FormSystem, beta: &[f64], b: u64) -> Result<EllipsoidBound> {
    if system.degree() != 2 {
        return Err(Error::DegreeMismatch {
            required: 2,
            found: system.degree(),
        });
    }
    if beta.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            found: beta.len(),
        });
    }
    if beta.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidParameter("beta must be nonzero".into()));
    }
    let n = system.vars();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (f, &w) in system.forms().iter().zip(beta) {
        let g = gram_matrix(f)?;
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w * g.entries[i][j] as f64 / 2.0;
            }
        }
    }
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let form_norm = system.combine(beta)?.sup_norm_leading();
    let cap = (2 * b + 1) as f64;
    let scale = eigenvalues.iter().fold(0.0f64, |s, l| s.max(l.abs()));
    let value = eigenvalues
        .iter()
        .map(|l| {
            if l.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                cap
            } else {
                (form_norm / l.abs() + 1.0).min(cap)
            }
        })
        .product();
    Ok(EllipsoidBound {
        b,
        beta: beta.to_vec(),
        eigenvalues,
        form_norm,
        value,
    })
}

/// Target exponents `(d-1) n - 2^d C` for both readings of `C`.
#[derive(Clone, Debug, Serialize)]
pub struct ExponentTargets {
    pub from_sigma: [f64; 2],
    pub alternative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentFit {
    pub schedule: Vec<u64>,
    pub counts: Vec<u64>,
    pub slope: f64,
    pub intercept: f64,
    /// `(d-1) n`, the exponent of the full tuple count.
    pub saturation: f64,
    pub sigma_r: Option<[usize; 2]>,
    pub targets: Option<ExponentTargets>,
}

/// Least-squares slope of `log N^aux(B)` against `log B`.
pub fn exponent_fit(records: &[AuxCountRecord], sigma: Option<(SigmaR, usize)>) -> Result<ExponentFit> {
    let mut schedule: Vec<u64> = records.iter().map(|r| r.b).collect();
    schedule.sort_unstable();
    schedule.dedup();
    if schedule.len() < 3 {
        return Err(Error::InvalidParameter("an exponent fit needs at least 3 distinct values of B".into()));
    }
    let first = records.first().expect("non-empty");
    let xs: Vec<f64> = records.iter().map(|r| (r.b as f64).ln()).collect();
    let ys: Vec<f64> = records.iter().map(|r| (r.count.max(1) as f64).ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::Numerical("degenerate exponent fit".into()))?;
    let saturation = ((first.d - 1) as usize * first.n) as f64;
    let targets = sigma.map(|(s, r)| {
        let c = Cancellation::new(first.n, r, s);
        let weight = 2f64.powi(first.d as i32);
        ExponentTargets {
            from_sigma: [saturation - weight * c.from_sigma[1], saturation - weight * c.from_sigma[0]],
            alternative: saturation - weight * c.alternative,
        }
    });
    Ok(ExponentFit {
        schedule,
        counts: records.iter().map(|r| r.count).collect(),
        slope: fit.slope,
        intercept: fit.intercept,
        saturation,
        sigma_r: sigma.map(|(s, _)| [s.lower, s.upper]),
        targets,
    })
}

/// Axis vectors followed by seeded directions on the unit sphere.
pub fn sample_betas(r: usize, total: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..r.min(total))
        .map(|i| {
            let mut e = vec![0.0; r];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < total {
        let v: Vec<f64> = (0..r).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            out.push(v.iter().map(|x| x / norm).collect());
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DominanceSample {
    pub beta: Vec<f64>,
    pub counts: Vec<AuxCountRecord>,
    pub bounds: Vec<f64>,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominanceReport {
    pub schedule: Vec<u64>,
    pub seed: u64,
    pub samples: Vec<DominanceSample>,
    /// Smallest `c` with `N^aux <= c * bound` over all samples.
    pub constant: f64,
    /// Sample with the largest count at the largest `B`.
    pub worst: usize,
    pub worst_fit: ExponentFit,
}

/// `N^aux_{beta . F}(B)` against the eigenvalue bound over sampled `beta`.
pub fn dominance_survey(
    system: &FormSystem,
    betas: &[Vec<f64>],
    schedule: &[u64],
    sigma: Option<(SigmaR, usize)>,
    seed: u64,
    budget: u64,
) -> Result<DominanceReport> {
    if betas.is_empty() || schedule.is_empty() {
        return Err(Error::InvalidParameter("need at least one beta and one B".into()));
    }
    let mut samples = Vec::with_capacity(betas.len());
    for beta in betas {
        let f = system.combine(beta)?;
        let mut counts = Vec::new();
        let mut bounds = Vec::new();
        let mut max_ratio = 0.0f64;
        for &b in schedule {
            let rec = aux_count(&f, b, budget)?;
            let bound = ellipsoid_bound(system, beta, b)?.value;
            max_ratio = max_ratio.max(rec.count as f64 / bound);
            counts.push(rec);
            bounds.push(bound);
        }
        samples.push(DominanceSample {
            beta: beta.clone(),
            counts,
            bounds,
            max_ratio,
        });
    }
    let constant = samples.iter().fold(0.0f64, |m, s| m.max(s.max_ratio));
    let worst = (0..samples.len())
        .max_by_key(|&i| (samples[i].counts.last().map(|r| r.count), std::cmp::Reverse(i)))
        .expect("non-empty");
    let worst_fit = exponent_fit(&samples[worst].counts, sigma)?;
    Ok(DominanceReport {
        schedule: schedule.to_vec(),
        seed,
        samples,
        constant,
        worst,
        worst_fit,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylInequalitySample {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub scale: f64,
    pub theta: f64,
    pub epsilon: f64,
    #[serde(rename = "B")]
    pub b: u64,
    pub delta: f64,
    /// `min(|S(alpha)|, |S(alpha + beta)|)^{2^d} / P^{2^d (n + eps)}`.
    pub lhs: f64,
    /// `N^weyl_{beta . F}(P^theta, P^{(d-1) theta - d}) / P^{(d-1) theta n}`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Both sides of the Weyl differencing inequality at one `(alpha, beta)`.
#[allow(clippy::too_many_arguments)]
pub fn weyl_inequality_check(
    system: &FormSystem,
    alpha: &[f64],
    beta: &[f64],
    scale: f64,
    theta: f64,
    epsilon: f64,
    region: &BoxRegion,
    budget: u64,
) -> Result<WeylInequalitySample> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must lie in (0, 1]")));
    }
    let reach = scale.powf(theta);
    if reach < 1.0 {
        return Err(Error::Precondition(format!("P^theta = {reach} is below 1")));
    }
    if alpha.len() != system.len() || beta.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            found: alpha.len().min(beta.len()),
        });
    }
    let n = system.vars() as f64;
    let d = system.degree();
    let sums = ExpSum::new(system, scale, region, budget)?;
    let shifted: Vec<f64> = alpha.iter().zip(beta).map(|(a, b)| a + b).collect();
    let small = sums.eval(alpha)?.norm().min(sums.eval(&shifted)?.norm());
    let power = 2f64.powi(d as i32);
    let lhs = (small / scale.powf(n + epsilon)).powf(power);
    let b = reach.floor() as u64;
    let delta = scale.powf((d as f64 - 1.0) * theta - d as f64);
    let f = system.combine(beta)?;
    let weyl = weyl_count(&f, b, delta, budget)?;
    let rhs = weyl.count as f64 / scale.powf((d as f64 - 1.0) * theta * n);
    Ok(WeylInequalitySample {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        scale,
        theta,
        epsilon,
        b,
        delta,
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use proptest::prelude::*;

    const BUDGET: u64 = 1 << 34;

    fn form(text: &str) -> RealForm {
        let s = parse_system(text).unwrap();
        s.forms()[0].to_real()
    }

    #[test]
    fn aux_examples() {
        let f = form(r#"{"forms": ["x1^2 + x2^2"]}"#);
        for b in [1, 3, 8] {
            assert_eq!(aux_count(&f, b, BUDGET).unwrap().count, 1);
        }
        let cube = form(r#"{"forms": ["x1^3"]}"#);
        let rec = aux_count(&cube, 6, BUDGET).unwrap();
        assert_eq!(rec.count, 25);
        assert!(rec.exact_arithmetic);
        let mixed = form(r#"{"forms": ["x1*x2*x3 - 2*x1^3 + x2^2*x3"]}"#);
        assert!(aux_count(&mixed, 1, BUDGET).unwrap().count >= 1);
    }

    #[test]
    fn threshold_is_strict() {
        // m = (2 x1 + x2, x1 + 2 x2), |f| = 1: integer m, need |m| < 1 so m = 0
        let f = form(r#"{"forms": ["x1^2 + x1*x2 + x2^2"]}"#);
        assert_eq!(aux_count(&f, 5, BUDGET).unwrap().count, 1);
        // x1 x2: |f| = 1/2, m = (x2, x1), need 2|m| < 1
        let g = form(r#"{"forms": ["x1*x2"]}"#);
        let rec = aux_count(&g, 4, BUDGET).unwrap();
        assert_eq!(rec.f_norm, 0.5);
        assert_eq!(rec.count, 1);
    }

    #[test]
    fn degenerate_leading_part() {
        let f = form(r#"{"n": 2, "d": 2, "forms": ["x1 + 3"]}"#);
        let rec = aux_count(&f, 2, BUDGET).unwrap();
        assert!(rec.degenerate);
        assert_eq!(rec.count, 25);
    }

    #[test]
    fn ellipsoid_agrees_with_enumeration() {
        for text in [
            r#"{"forms": ["x1^2 + x2^2 - 3*x3^2 + x1*x3"]}"#,
            r#"{"forms": ["x1*x2 - x3^2"]}"#,
            r#"{"n": 4, "forms": ["x1^2 + x2^2"]}"#,
            r#"{"forms": ["5*x1^2 - 4*x1*x2 + x2^2"]}"#,
        ] {
            let f = form(text);
            for b in [1, 3, 6] {
                let e = aux_count_with(&f, b, AuxMethod::Ellipsoid, BUDGET).unwrap();
                let p = aux_count_with(&f, b, AuxMethod::Enumerate, BUDGET).unwrap();
                assert_eq!(e.count, p.count, "{text} B = {b}");
            }
        }
        let real = RealForm::new(3, 2, vec![(vec![2, 0, 0], 0.7), (vec![0, 1, 1], -0.3), (vec![0, 0, 2], 0.05)]).unwrap();
        for b in [2, 5] {
            let e = aux_count_with(&real, b, AuxMethod::Ellipsoid, BUDGET).unwrap();
            let p = aux_count_with(&real, b, AuxMethod::Enumerate, BUDGET).unwrap();
            assert_eq!(e.count, p.count);
        }
    }

    #[test]
    fn weyl_examples() {
        let f = form(r#"{"forms": ["x1^2 + 2*x1*x2"]}"#);
        assert_eq!(weyl_count(&f, 3, 0.6, BUDGET).unwrap().count, 49);
        assert_eq!(weyl_count(&f, 3, 1e-9, BUDGET).unwrap().count, 49);
        let root2 = RealForm::new(1, 2, vec![(vec![2], 2f64.sqrt())]).unwrap();
        assert_eq!(weyl_count(&root2, 3, 0.1, BUDGET).unwrap().count, 1);
        assert!(weyl_count(&root2, 3, 0.0, BUDGET).is_err());
    }

    #[test]
    fn bridge_between_counts() {
        // scaled so every |m| < 1/2 on the box: distance to the integers is |m| itself
        let f = form(r#"{"forms": ["x1*x2 + x2*x3"]}"#);
        let a = aux_count(&f, 3, BUDGET).unwrap();
        assert_eq!(a.threshold, 0.5);
        let g = f.scale(&0.0625).unwrap();
        let scaled = aux_count(&g, 3, BUDGET).unwrap();
        let w = weyl_count(&g, 3, scaled.threshold, BUDGET).unwrap();
        assert_eq!(scaled.count, w.count);
        assert_eq!(scaled.count, a.count);
    }

    #[test]
    fn ellipsoid_examples() {
        let s = parse_system(r#"{"forms": ["x1^2 + x2^2"]}"#).unwrap();
        let e = ellipsoid_bound(&s, &[1.0], 4).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        assert_eq!(e.value, 4.0);
        assert!(ellipsoid_bound(&s, &[0.0], 4).is_err());
        let cube = parse_system(r#"{"forms": ["x1^3"]}"#).unwrap();
        assert!(ellipsoid_bound(&cube, &[1.0], 4).is_err());
        let pair = parse_system(r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#).unwrap();
        let axis = ellipsoid_bound(&pair, &[1.0, 0.0], 5).unwrap();
        assert_eq!(axis.value, 4.0 * 11.0 * 11.0);
    }

    #[test]
    fn exponent_fit_examples() {
        let f = form(r#"{"forms": ["x1^2 + x2^2"]}"#);
        let recs: Vec<AuxCountRecord> = [5, 10, 20].iter().map(|&b| aux_count(&f, b, BUDGET).unwrap()).collect();
        assert!(exponent_fit(&recs, None).unwrap().slope.abs() < 1e-12);
        assert!(exponent_fit(&recs[..2], None).is_err());
        let zero = RealForm::new(2, 2, vec![]).unwrap();
        let full: Vec<AuxCountRecord> = [5, 10, 20, 40].iter().map(|&b| aux_count(&zero, b, BUDGET).unwrap()).collect();
        let fit = exponent_fit(&full, None).unwrap();
        assert!((fit.slope - fit.saturation).abs() < 0.15, "{}", fit.slope);
    }

    #[test]
    fn weyl_inequality_examples() {
        let s = parse_system(r#"{"forms": ["x1^2 + 3*x2^2"]}"#).unwrap();
        let region = BoxRegion::symmetric(2);
        let zero = weyl_inequality_check(&s, &[0.1], &[0.0], 30.0, 1.0, 0.01, &region, BUDGET).unwrap();
        assert!(zero.ratio <= 1.0);
        let r1 = weyl_inequality_check(&s, &[0.137], &[0.01], 30.0, 1.0, 0.01, &region, BUDGET).unwrap();
        let r2 = weyl_inequality_check(&s, &[0.137], &[0.01], 30.0, 1.0, 0.01, &region, BUDGET).unwrap();
        assert!(r1.ratio.is_finite());
        assert_eq!(r1.ratio, r2.ratio);
        assert!(weyl_inequality_check(&s, &[0.1], &[0.1], 30.0, -0.5, 0.01, &region, BUDGET).is_err());
    }

    #[test]
    fn sampled_betas_start_with_axes() {
        let b = sample_betas(2, 5, 9);
        assert_eq!(b[0], vec![1.0, 0.0]);
        assert_eq!(b[1], vec![0.0, 1.0]);
        assert_eq!(b, sample_betas(2, 5, 9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn counts_monotone(c in prop::collection::vec(-3i64..=3, 3), b in 1u64..5) {
            let text = format!(r#"{{"n": 2, "d": 2, "forms": ["{}*x1^2 + {}*x1*x2 + {}*x2^2"]}}"#, c[0], c[1], c[2]);
            let Ok(s) = parse_system(&text) else { return Ok(()); };
            let f = s.forms()[0].to_real();
            prop_assert!(aux_count(&f, b, BUDGET).unwrap().count <= aux_count(&f, b + 1, BUDGET).unwrap().count);
            let g = f.scale(&0.37).unwrap();
            let w1 = weyl_count(&g, b, 0.05, BUDGET).unwrap().count;
            let w2 = weyl_count(&g, b, 0.2, BUDGET).unwrap().count;
            let w3 = weyl_count(&g, b + 1, 0.2, BUDGET).unwrap().count;
            prop_assert!(w1 <= w2 && w2 <= w3);
        }

        #[test]
        fn ellipsoid_scale_invariant(b1 in -3.0f64..3.0, b2 in -3.0f64..3.0, t in 0.1f64..10.0) {
            prop_assume!(b1.abs() + b2.abs() > 0.1);
            let s = parse_system(r#"{"forms": ["x1^2 + x2^2 - x3^2", "x1*x3 + 2*x2^2"]}"#).unwrap();
            let e1 = ellipsoid_bound(&s, &[b1, b2], 7).unwrap().value;
            let e2 = ellipsoid_bound(&s, &[t * b1, t * b2], 7).unwrap().value;
            prop_assert!((e1 - e2).abs() <= 1e-9 * e1);
        }

        #[test]
        fn aux_bounded_by_tuples(c in prop::collection::vec(-2i64..=2, 4), b in 1u64..3) {
            let text = format!(r#"{{"n": 2, "d": 3, "forms": ["{}*x1^3 + {}*x1^2*x2 + {}*x1*x2^2 + {}*x2^3"]}}"#, c[0], c[1], c[2], c[3]);
            let Ok(s) = parse_system(&text) else { return Ok(()); };
            let f = s.forms()[0].to_real();
            let rec = aux_count(&f, b, BUDGET).unwrap();
            prop_assert!(rec.count >= 1);
            prop_assert!(rec.count as f64 <= tuples(2, 3, b));
        }
    }
}
