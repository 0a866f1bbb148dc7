//! The singular integral `sigma_inf` by the scaled measure of the region
//! `|f_i^[d](t)| <= 1/2`, and by integrating the oscillatory integral
//! `S_inf(gamma)` over `gamma`.
//!
//! Substituting `t = P u`, the measure estimate at scale `P` is
//! `vol{u in box : |f_i^[d](u)| <= eps} / (2 eps)^R` with `eps = P^{-d} / 2`.
//! For each sample of the other coordinates, the set of admissible values of
//! one slice variable is a finite union of intervals whose endpoints are
//! roots of `f_i -+ eps`, so the slice length is computed exactly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::exp_sums::{s_infinity, QuadratureSpec};
use crate::forms::{BoxRegion, FormSystem};
use crate::numeric::{composite_nodes, fit_line, gauss_legendre, CompensatedSum, ComplexSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMethod {
    MeasureLimit,
    Oscillatory,
}

/// Deterministic midpoint grid over the non-slice coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct GridCheck {
    pub value: f64,
    pub resolution: usize,
    /// `|I(2m) - I(m)|`.
    pub richardson_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub method: IntegralMethod,
    pub error_bar: f64,
    pub seed: Option<u64>,
    /// Scale `P` of the measure estimate.
    pub scale: Option<f64>,
    pub samples: Option<u64>,
    pub strata: Option<usize>,
    pub slice_variable: Option<usize>,
    pub grid: Option<GridCheck>,
    /// Truncation radius `G` of the oscillatory estimate.
    pub radius: Option<f64>,
    pub panels: Option<usize>,
    pub imaginary: Option<f64>,
    pub decay_exponent: Option<f64>,
    pub tail_bound: Option<f64>,
}

impl IntegralEstimate {
    fn measure(value: f64, error_bar: f64) -> Self {
        IntegralEstimate {
            value,
            method: IntegralMethod::MeasureLimit,
            error_bar,
            seed: None,
            scale: None,
            samples: None,
            strata: None,
            slice_variable: None,
            grid: None,
            radius: None,
            panels: None,
            imaginary: None,
            decay_exponent: None,
            tail_bound: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSpec {
    pub scale: f64,
    pub samples: u64,
    pub strata: usize,
    pub seed: u64,
    /// Run the grid cross-check when at most this many coordinates are sampled.
    pub grid_max_dim: usize,
    pub grid_points: u64,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec {
            scale: 1000.0,
            samples: 1 << 20,
            strata: 64,
            seed: 0,
            grid_max_dim: 2,
            grid_points: 1 << 18,
        }
    }
}

/// Each leading form as a polynomial in the slice variable, with coefficients
/// that are monomials in the remaining ones.
struct SlicedSystem {
    slice: usize,
    /// `forms[i][k]` lists `(c, exps)` of the coefficient of `x_slice^k`.
    forms: Vec<Vec<Vec<(f64, Vec<u32>)>>>,
}

impl SlicedSystem {
    fn new(lead: &FormSystem) -> Self {
        let n = lead.vars();
        // the variable of highest degree, lowest index first
        let slice = (0..n)
            .max_by_key(|&v| {
                let deg = lead
                    .forms()
                    .iter()
                    .flat_map(|f| f.terms().keys().map(move |e| e[v]))
                    .max()
                    .unwrap_or(0);
                (deg, std::cmp::Reverse(v))
            })
            .unwrap_or(0);
        let degree = lead.degree() as usize;
        let forms = lead
            .forms()
            .iter()
            .map(|f| {
                let mut by_power = vec![Vec::new(); degree + 1];
                for (e, &c) in f.terms() {
                    let mut rest = e.clone();
                    let k = rest[slice] as usize;
                    rest[slice] = 0;
                    by_power[k].push((c as f64, rest));
                }
                by_power
            })
            .collect();
        SlicedSystem { slice, forms }
    }

    fn coefficients(&self, u: &[f64]) -> Vec<Vec<f64>> {
        self.forms
            .iter()
            .map(|by_power| {
                by_power
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .map(|(c, e)| e.iter().zip(u).fold(*c, |t, (&p, &x)| t * x.powi(p as i32)))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Length of `{x in [a, b] : |g_i(x)| <= eps for all i}`.
    fn slice_length(&self, u: &[f64], a: f64, b: f64, eps: f64) -> f64 {
        let polys = self.coefficients(u);
        let mut cuts = vec![a, b];
        for g in &polys {
            for shift in [-eps, eps] {
                let mut h = g.clone();
                h[0] -= shift;
                cuts.extend(real_roots_in(&h, a, b));
            }
        }
        cuts.sort_by(|x, y| x.total_cmp(y));
        let mut length = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            if polys.iter().all(|g| horner(g, mid).abs() <= eps) {
                length += hi - lo;
            }
        }
        length
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn trim(c: &[f64]) -> &[f64] {
    let mut end = c.len();
    while end > 0 && c[end - 1] == 0.0 {
        end -= 1;
    }
    &c[..end]
}

/// Real roots in the open interval `(a, b)`, ascending.
fn real_roots_in(c: &[f64], a: f64, b: f64) -> Vec<f64> {
    let c = trim(c);
    let inside = |x: f64| x > a && x < b;
    match c.len() {
        0 | 1 => Vec::new(),
        2 => {
            let x = -c[0] / c[1];
            if inside(x) {
                vec![x]
            } else {
                Vec::new()
            }
        }
        3 => {
            let (c0, c1, c2) = (c[0], c[1], c[2]);
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 {
                return Vec::new();
            }
            // q avoids cancellation between -c1 and the root of the discriminant
            let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
            let mut r = if q == 0.0 {
                vec![0.0]
            } else {
                vec![q / c2, c0 / q]
            };
            r.retain(|&x| inside(x));
            r.sort_by(|x, y| x.total_cmp(y));
            r.dedup();
            r
        }
        _ => {
            let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect();
            let mut knots = vec![a];
            knots.extend(real_roots_in(&deriv, a, b));
            knots.push(b);
            let mut out = Vec::new();
            for w in knots.windows(2) {
                if let Some(x) = bisect(c, w[0], w[1]) {
                    if inside(x) && out.last().is_none_or(|&l: &f64| l < x) {
                        out.push(x);
                    }
                }
            }
            out
        }
    }
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = horner(c, lo);
    let fhi = horner(c, hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = horner(c, mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn check_measure_domain(system: &FormSystem) -> Result<()> {
    let d = system.degree();
    if d < 2 {
        return Err(Error::DegreeMismatch { required: 2, found: d });
    }
    if d as usize * system.len() > system.vars() {
        return Err(Error::Precondition(format!(
            "dR = {} exceeds n = {}",
            d as usize * system.len(),
            system.vars()
        )));
    }
    Ok(())
}

/// `P^{-(n - dR)} vol{t : t / P in box, |f_i^[d](t)| <= 1/2}` by stratified Monte Carlo.
pub fn sigma_infty_measure(system: &FormSystem, region: &BoxRegion, spec: &MeasureSpec, budget: u64) -> Result<IntegralEstimate> {
    check_measure_domain(system)?;
    region.check_dim(system.vars())?;
    if spec.samples == 0 || spec.strata == 0 {
        return Err(Error::InvalidParameter("the sample budget must be positive".into()));
    }
    if !(spec.scale >= 1.0) {
        return Err(Error::InvalidParameter(format!("P = {} must be at least 1", spec.scale)));
    }
    check_budget("Monte Carlo samples", spec.samples as f64, budget)?;
    let lead = system.leading_parts()?;
    let sliced = SlicedSystem::new(&lead);
    let n = system.vars();
    let r = system.len() as i32;
    let eps = 0.5 * spec.scale.powi(-(system.degree() as i32));
    let norm = (2.0 * eps).powi(r);
    let iv = region.intervals();
    let (a, b) = iv[sliced.slice];
    let others: Vec<usize> = (0..n).filter(|&v| v != sliced.slice).collect();
    let other_volume: f64 = others.iter().map(|&v| iv[v].1 - iv[v].0).product();

    let (mean, se) = if others.is_empty() {
        (sliced.slice_length(&[0.0], a, b, eps), 0.0)
    } else {
        let strata = spec.strata;
        let per = (spec.samples as usize).div_ceil(strata).max(2);
        let strat_var = others[0];
        let (lo0, hi0) = iv[strat_var];
        let results: Vec<(f64, f64)> = (0..strata)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(s as u64);
                let width = (hi0 - lo0) / strata as f64;
                let mut u = vec![0.0; n];
                let mut sum = CompensatedSum::new();
                let mut sq = CompensatedSum::new();
                for _ in 0..per {
                    for &v in &others {
                        let (lo, hi) = iv[v];
                        u[v] = if v == strat_var {
                            lo0 + width * (s as f64 + rng.random::<f64>())
                        } else {
                            lo + (hi - lo) * rng.random::<f64>()
                        };
                    }
                    let len = sliced.slice_length(&u, a, b, eps) / norm;
                    sum.add(len);
                    sq.add(len * len);
                }
                let m = sum.value() / per as f64;
                let var = (sq.value() / per as f64 - m * m).max(0.0) * per as f64 / (per - 1) as f64;
                (m, var)
            })
            .collect();
        let w = 1.0 / strata as f64;
        let mut mean = CompensatedSum::new();
        let mut var = 0.0;
        for (m, v) in &results {
            mean.add(w * m);
            var += w * w * v / per as f64;
        }
        (mean.value(), var.sqrt())
    };
    let value = mean * other_volume;
    let mut est = IntegralEstimate::measure(value, 3.0 * se * other_volume);
    est.seed = Some(spec.seed);
    est.scale = Some(spec.scale);
    est.samples = Some(spec.samples);
    est.strata = Some(spec.strata);
    est.slice_variable = Some(sliced.slice);
    if !others.is_empty() && others.len() <= spec.grid_max_dim {
        est.grid = Some(grid_check(&sliced, region, &others, eps, norm, spec.grid_points, budget)?);
    }
    Ok(est)
}

fn grid_check(
    sliced: &SlicedSystem,
    region: &BoxRegion,
    others: &[usize],
    eps: f64,
    norm: f64,
    points: u64,
    budget: u64,
) -> Result<GridCheck> {
    let k = others.len() as f64;
    let m = ((points as f64).powf(1.0 / k) / 2.0).floor().max(2.0) as usize;
    check_budget("grid cross-check", 5.0 * (m as f64).powf(k), budget)?;
    let iv = region.intervals();
    let (a, b) = iv[sliced.slice];
    let n = iv.len();
    let integrate = |m: usize| -> f64 {
        let total = m.pow(others.len() as u32);
        let cell: f64 = others.iter().map(|&v| (iv[v].1 - iv[v].0) / m as f64).product();
        let parts: Vec<CompensatedSum> = (0..total)
            .into_par_iter()
            .fold(CompensatedSum::new, |mut acc, mut idx| {
                let mut u = vec![0.0; n];
                for &v in others {
                    let j = idx % m;
                    idx /= m;
                    let (lo, hi) = iv[v];
                    u[v] = lo + (hi - lo) * (j as f64 + 0.5) / m as f64;
                }
                acc.add(sliced.slice_length(&u, a, b, eps) / norm);
                acc
            })
            .collect();
        let mut s = CompensatedSum::new();
        for p in &parts {
            s.merge(p);
        }
        s.value() * cell
    };
    let coarse = integrate(m);
    let fine = integrate(2 * m);
    Ok(GridCheck {
        value: fine,
        resolution: 2 * m,
        richardson_delta: (fine - coarse).abs(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorySpec {
    /// Truncation radius `G` in the sup norm.
    pub radius: f64,
    /// Gauss–Legendre nodes per panel in `gamma`.
    pub order: usize,
    pub panels_per_unit: f64,
    pub inner: QuadratureSpec,
    /// Points on the outer shell `G/2 <= |gamma| <= G` used for the decay fit.
    pub shell_points: usize,
}

impl Default for OscillatorySpec {
    fn default() -> Self {
        OscillatorySpec {
            radius: 40.0,
            order: 16,
            panels_per_unit: 1.0,
            inner: QuadratureSpec::default(),
            shell_points: 48,
        }
    }
}

/// `int_{|gamma| <= G} S_inf(gamma) d gamma` without the tail.
#[derive(Clone, Debug, Serialize)]
pub struct TruncatedIntegral {
    pub re: f64,
    pub im: f64,
    /// Change under one doubling of the panels in `gamma`.
    pub error: f64,
    pub panels: usize,
}

const DECAY_MARGIN: f64 = 0.1;

pub fn oscillatory_truncated(
    system: &FormSystem,
    region: &BoxRegion,
    spec: &OscillatorySpec,
    budget: u64,
) -> Result<TruncatedIntegral> {
    let r = system.len();
    if r >= 3 {
        return Err(Error::budget(
            "tensor quadrature in gamma for R >= 3; use the measure method",
            f64::INFINITY,
            budget,
        ));
    }
    if !(spec.radius > 0.0) {
        return Err(Error::InvalidParameter("the radius G must be positive".into()));
    }
    region.check_dim(system.vars())?;
    let lead = system.leading_parts()?;
    let reach: f64 = lead
        .forms()
        .iter()
        .map(|f| f.terms().values().map(|&c| (c as f64).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let g = spec.radius;
    let rule = gauss_legendre(spec.order);
    let base = ((2.0 * g * (reach + 1.0) * spec.panels_per_unit).ceil() as usize).max(2);
    let integrate = |panels: usize| -> Result<num_complex::Complex64> {
        let axis = composite_nodes(-g, g, panels, &rule);
        let points = axis.len().pow(r as u32);
        check_budget("gamma quadrature nodes", points as f64, budget)?;
        let parts: Vec<Result<num_complex::Complex64>> = (0..points)
            .into_par_iter()
            .map(|mut idx| {
                let mut gamma = Vec::with_capacity(r);
                let mut w = 1.0;
                for _ in 0..r {
                    let (x, wx) = axis[idx % axis.len()];
                    idx /= axis.len();
                    gamma.push(x);
                    w *= wx;
                }
                Ok(s_infinity(system, &gamma, region, &spec.inner, budget)?.value() * w)
            })
            .collect();
        let mut acc = ComplexSum::new();
        for p in parts {
            acc.add(p?);
        }
        Ok(acc.value())
    };
    let coarse = integrate(base)?;
    let fine = integrate(2 * base)?;
    Ok(TruncatedIntegral {
        re: fine.re,
        im: fine.im,
        error: (fine - coarse).norm(),
        panels: 2 * base,
    })
}

/// `int S_inf(gamma) d gamma` over `|gamma| <= G`, with the tail bounded by a
/// power law fitted to `|S_inf|` on the outer shell.
pub fn sigma_infty_oscillatory(system: &FormSystem, region: &BoxRegion, spec: &OscillatorySpec, budget: u64) -> Result<IntegralEstimate> {
    let truncated = oscillatory_truncated(system, region, spec, budget)?;
    let r = system.len();
    let g = spec.radius;
    // shell samples along the diagonal directions of the sup-norm sphere
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..spec.shell_points {
        let radius = g * 0.5f64.powf(1.0 - i as f64 / (spec.shell_points.max(2) - 1) as f64);
        let directions: Vec<Vec<f64>> = match r {
            1 => vec![vec![1.0]],
            _ => vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, -1.0]],
        };
        for dir in directions {
            let gamma: Vec<f64> = dir.iter().map(|c| c * radius).collect();
            let v = s_infinity(system, &gamma, region, &spec.inner, budget)?.value().norm();
            xs.push(radius.ln());
            ys.push(v.max(f64::MIN_POSITIVE).ln());
        }
    }
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::Numerical("degenerate decay fit".into()))?;
    let kappa = -fit.slope;
    if !(kappa > r as f64 + DECAY_MARGIN) {
        return Err(Error::NoDecay(format!(
            "|S_inf(gamma)| decays like |gamma|^-{kappa:.3} on the shell, not faster than |gamma|^-{r}"
        )));
    }
    let c = fit.intercept.exp();
    let tail = c * r as f64 * 2f64.powi(r as i32) * g.powf(r as f64 - kappa) / (kappa - r as f64);
    if truncated.im.abs() > 1e-6 * truncated.re.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "imaginary part {:.3e} of the gamma integral does not vanish",
            truncated.im
        )));
    }
    Ok(IntegralEstimate {
        value: truncated.re,
        method: IntegralMethod::Oscillatory,
        error_bar: truncated.error + tail,
        seed: None,
        scale: None,
        samples: None,
        strata: None,
        slice_variable: None,
        grid: None,
        radius: Some(g),
        panels: Some(truncated.panels),
        imaginary: Some(truncated.im),
        decay_exponent: Some(kappa),
        tail_bound: Some(tail),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothPoint {
    pub point: Vec<f64>,
    pub residual: f64,
    /// Smallest singular value of the Jacobian of the leading forms at the point.
    pub min_singular_value: f64,
}

/// A real zero of the leading forms in the interior of the box with a full-rank
/// Jacobian, by damped Newton steps from seeded interior starts.
pub fn real_smooth_point(system: &FormSystem, region: &BoxRegion, seed: u64, starts: usize) -> Result<Option<SmoothPoint>> {
    region.check_dim(system.vars())?;
    let lead = system.leading_parts()?;
    let n = lead.vars();
    let r = lead.len();
    let real: Vec<_> = lead.forms().iter().map(|f| f.to_real()).collect();
    let iv = region.intervals();
    let eval = |x: &[f64]| -> Result<DVector<f64>> {
        Ok(DVector::from_vec(real.iter().map(|f| f.evaluate(x)).collect::<Result<Vec<_>>>()?))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..starts {
        let mut x: Vec<f64> = iv.iter().map(|&(a, b)| a + (b - a) * (0.1 + 0.8 * rng.random::<f64>())).collect();
        let mut fx = eval(&x)?;
        for _ in 0..100 {
            if fx.norm() < 1e-13 {
                break;
            }
            let jac = DMatrix::from_row_iterator(r, n, lead.jacobian_f64(&x)?.into_iter().flatten());
            let jjt = &jac * jac.transpose();
            let Some(sol) = jjt.lu().solve(&fx) else { break };
            let step = jac.transpose() * sol;
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-6 {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi - t * si).collect();
                let ft = eval(&trial)?;
                if ft.norm() < fx.norm() {
                    x = trial;
                    fx = ft;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let interior = x.iter().zip(iv).all(|(&xi, &(a, b))| xi > a && xi < b);
        // the origin is a singular zero of every form of degree >= 2
        let away = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) >= 1e-2;
        if fx.norm() < 1e-10 && interior && away {
            let jac = DMatrix::from_row_iterator(r, n, lead.jacobian_f64(&x)?.into_iter().flatten());
            let sv = jac.singular_values();
            let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let smax = sv.iter().copied().fold(0.0, f64::max);
            if smin > 1e-6 * smax.max(1.0) {
                return Ok(Some(SmoothPoint {
                    point: x,
                    residual: fx.norm(),
                    min_singular_value: smin,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use std::f64::consts::PI;

    const BUDGET: u64 = 1 << 34;

    fn sys(text: &str) -> FormSystem {
        parse_system(text).unwrap()
    }

    fn small(seed: u64, scale: f64) -> MeasureSpec {
        MeasureSpec {
            scale,
            samples: 1 << 16,
            seed,
            ..MeasureSpec::default()
        }
    }

    #[test]
    fn root_finding() {
        assert_eq!(real_roots_in(&[-1.0, 0.0, 1.0], -2.0, 2.0), vec![-1.0, 1.0]);
        assert!(real_roots_in(&[1.0, 0.0, 1.0], -2.0, 2.0).is_empty());
        let cubic = [-6.0, 11.0, -6.0, 1.0];
        let r = real_roots_in(&cubic, 0.0, 10.0);
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        let quartic = [0.25, 0.0, -1.25, 0.0, 1.0];
        assert_eq!(real_roots_in(&quartic, -2.0, 2.0).len(), 4);
    }

    #[test]
    fn degree_guards() {
        let lin = sys(r#"{"forms": ["x1"]}"#);
        assert!(sigma_infty_measure(&lin, &BoxRegion::symmetric(1), &small(0, 10.0), BUDGET).is_err());
        let tight = sys(r#"{"forms": ["x1^2 + x2^2", "x1*x2"]}"#);
        assert!(sigma_infty_measure(&tight, &BoxRegion::symmetric(2), &small(0, 10.0), BUDGET).is_err());
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let zero = MeasureSpec {
            samples: 0,
            ..MeasureSpec::default()
        };
        assert!(sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &zero, BUDGET).is_err());
        let triple = sys(r#"{"forms": ["x1^2 - x2^2", "x3^2 - x4^2", "x5^2 - x6^2 + x7^2"]}"#);
        let r = oscillatory_truncated(&triple, &BoxRegion::symmetric(7), &OscillatorySpec::default(), BUDGET);
        assert!(matches!(r, Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn cone_measure_near_two_pi() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let est = sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &small(3, 1000.0), BUDGET).unwrap();
        assert!((est.value - 2.0 * PI).abs() < est.error_bar + 0.02, "{est:?}");
        let grid = est.grid.unwrap();
        assert!((grid.value - 2.0 * PI).abs() < grid.richardson_delta + 0.05, "{grid:?}");
    }

    #[test]
    fn doubling_the_scale() {
        let cone = sys(r#"{"forms": ["x1^2 - 2*x2^2 + x1*x3 - x3^2"]}"#);
        let a = sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &small(5, 200.0), BUDGET).unwrap();
        let b = sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &small(5, 400.0), BUDGET).unwrap();
        assert!((a.value - b.value).abs() <= a.error_bar + b.error_bar, "{a:?} {b:?}");
        assert!(a.value > 0.0);
    }

    #[test]
    fn hyperbola_measure_positive() {
        let h = sys(r#"{"forms": ["x1^2 - x2^2"]}"#);
        let est = sigma_infty_measure(&h, &BoxRegion::symmetric(2), &small(1, 20.0), BUDGET).unwrap();
        assert!(est.value > est.error_bar);
    }

    #[test]
    fn deterministic_per_seed() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let a = sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &small(9, 100.0), BUDGET).unwrap();
        let b = sigma_infty_measure(&cone, &BoxRegion::symmetric(3), &small(9, 100.0), BUDGET).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn small_radius_limit() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let spec = OscillatorySpec {
            radius: 1e-4,
            ..OscillatorySpec::default()
        };
        let t = oscillatory_truncated(&cone, &BoxRegion::symmetric(3), &spec, BUDGET).unwrap();
        assert!((t.re - 8.0 * 2e-4).abs() < 1e-9);
    }

    #[test]
    fn cone_methods_agree() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let region = BoxRegion::symmetric(3);
        let osc = sigma_infty_oscillatory(&cone, &region, &OscillatorySpec::default(), BUDGET).unwrap();
        let mes = sigma_infty_measure(&cone, &region, &small(2, 1000.0), BUDGET).unwrap();
        assert!((osc.value - mes.value).abs() <= osc.error_bar + mes.error_bar, "{osc:?} {mes:?}");
        assert!(osc.decay_exponent.unwrap() > 1.1);
    }

    #[test]
    fn hyperbola_has_no_decay() {
        let h = sys(r#"{"forms": ["x1^2 - x2^2"]}"#);
        let r = sigma_infty_oscillatory(&h, &BoxRegion::symmetric(2), &OscillatorySpec::default(), BUDGET);
        assert!(matches!(r, Err(Error::NoDecay(_))), "{r:?}");
    }

    #[test]
    fn smooth_points() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let p = real_smooth_point(&cone, &BoxRegion::symmetric(3), 4, 20).unwrap().unwrap();
        assert!(p.residual < 1e-10);
        let definite = sys(r#"{"forms": ["x1^2 + x2^2 + x3^2"]}"#);
        assert!(real_smooth_point(&definite, &BoxRegion::symmetric(3), 4, 20).unwrap().is_none());
    }
}
