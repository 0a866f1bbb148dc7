//! Ranks of quadratic pencils `beta_1 F_1 + ... + beta_R F_R`, the invariants
//! `sigma_R` and `sigma_Z` derived from them, and hypothesis verdicts.
//!
//! For two forms the minimum rank over real `beta` is decided exactly. Along
//! the affine line `beta = (1, t)` the rank equals its generic value `rho`
//! except at the real roots of a nonzero `rho x rho` minor `m(t)`. Gaussian
//! elimination over `Q[t] / (h)`, with `h` the squarefree part of `m`, splits
//! `h` into factors on whose roots the rank is constant; a Sturm count tells
//! which factors have real roots. The point `beta = (0, 1)` is checked apart.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{check_budget, Error, Result};
use crate::exact::{self, Poly};
use crate::forms::{FormSystem, IntegerForm};

/// Symmetric integer matrix `A` with `f(x) = x^T A x / 2` for the quadratic part of `f`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoubledGramMatrix {
    pub entries: Vec<Vec<i64>>,
    /// The form's matrix is `entries / 2`.
    pub scale: &'static str,
}

impl DoubledGramMatrix {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn to_big(&self) -> Vec<Vec<BigInt>> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
            .collect()
    }

    pub fn rank(&self) -> usize {
        exact::rank(&self.to_big())
    }
}

/// Doubled Gram matrix of the degree-2 part of `f`.
pub fn gram_matrix(f: &IntegerForm) -> Result<DoubledGramMatrix> {
    if f.degree() != 2 {
        return Err(Error::DegreeMismatch {
            required: 2,
            found: f.degree(),
        });
    }
    let n = f.vars();
    let mut a = vec![vec![0i64; n]; n];
    for (e, &c) in f.terms() {
        if e.iter().sum::<u32>() != 2 {
            continue;
        }
        let vars: Vec<usize> = (0..n).filter(|&v| e[v] > 0).collect();
        match vars.as_slice() {
            [i] => a[*i][*i] = c.checked_mul(2).ok_or(Error::Overflow("doubling a diagonal entry"))?,
            [i, j] => {
                a[*i][*j] = c;
                a[*j][*i] = c;
            }
            _ => unreachable!("degree-2 monomial"),
        }
    }
    Ok(DoubledGramMatrix {
        entries: a,
        scale: "form(x) = x^T A x / 2",
    })
}

fn require_quadratic(system: &FormSystem) -> Result<Vec<Vec<Vec<BigInt>>>> {
    if system.degree() != 2 {
        return Err(Error::DegreeMismatch {
            required: 2,
            found: system.degree(),
        });
    }
    if !system.is_independent() {
        return Err(Error::DependentSystem);
    }
    system
        .forms()
        .iter()
        .map(|f| Ok(gram_matrix(f)?.to_big()))
        .collect()
}

fn combine_matrices(mats: &[Vec<Vec<BigInt>>], beta: &[BigInt]) -> Vec<Vec<BigInt>> {
    let n = mats[0].len();
    let mut out = vec![vec![BigInt::zero(); n]; n];
    for (m, b) in mats.iter().zip(beta) {
        if b.is_zero() {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j] += &m[i][j] * b;
            }
        }
    }
    out
}

/// Exact rank of the matrix of `beta . F` at a rational `beta`.
pub fn pencil_rank(system: &FormSystem, beta: &[BigRational]) -> Result<usize> {
    let mats = require_quadratic(system)?;
    if beta.len() != mats.len() {
        return Err(Error::DimensionMismatch {
            expected: mats.len(),
            found: beta.len(),
        });
    }
    Ok(exact::rank(&combine_matrices(&mats, &exact::clear_denominators(beta))))
}

fn serialize_rationals<S: Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|q| q.to_string()))
}

fn serialize_poly<S: Serializer>(p: &Poly, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(p.coeffs().iter().map(|q| q.to_string()))
}

/// A point of the pencil attaining a rank.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Rational {
        #[serde(serialize_with = "serialize_rationals")]
        beta: Vec<BigRational>,
        rank: usize,
    },
    /// `beta = (1, t)` with `t` the unique root of `poly` in `(lo, hi]`.
    Algebraic {
        #[serde(serialize_with = "serialize_poly")]
        poly: Poly,
        #[serde(serialize_with = "serialize_rationals")]
        interval: Vec<BigRational>,
        approx_t: f64,
        rank: usize,
    },
}

impl Witness {
    pub fn rank(&self) -> usize {
        match self {
            Witness::Rational { rank, .. } | Witness::Algebraic { rank, .. } => *rank,
        }
    }

    pub fn rational_beta(&self) -> Option<&[BigRational]> {
        match self {
            Witness::Rational { beta, .. } => Some(beta),
            Witness::Algebraic { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MinRankMethod {
    SingleForm,
    BinaryPencil,
    /// Integer search with eigenvalue probing; the lower bound is heuristic.
    Search,
}

/// Bounds on `min_{beta != 0} rank M(beta)`.
#[derive(Clone, Debug, Serialize)]
pub struct MinRank {
    pub lower: usize,
    pub upper: usize,
    pub certified: bool,
    pub method: MinRankMethod,
    pub witness: Witness,
    /// Integer points whose exact rank was computed.
    pub exact_points: usize,
    /// Real points whose numerical rank was computed.
    pub probes: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub seed: u64,
    pub max_height: i64,
    pub probes: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            seed: 0,
            max_height: 4,
            probes: 256,
        }
    }
}

/// Minimum rank over real `beta != 0` of the pencil of a quadratic system.
pub fn pencil_min_rank(system: &FormSystem, budget: u64) -> Result<MinRank> {
    pencil_min_rank_with(system, budget, &SearchOptions::default())
}

pub fn pencil_min_rank_with(system: &FormSystem, budget: u64, opts: &SearchOptions) -> Result<MinRank> {
    let mats = require_quadratic(system)?;
    match mats.len() {
        1 => {
            let rank = exact::rank(&mats[0]);
            Ok(MinRank {
                lower: rank,
                upper: rank,
                certified: true,
                method: MinRankMethod::SingleForm,
                witness: Witness::Rational {
                    beta: vec![BigRational::one()],
                    rank,
                },
                exact_points: 1,
                probes: 0,
            })
        }
        2 => binary_pencil(&mats, budget),
        _ => search_pencil(&mats, budget, opts),
    }
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

fn binary_pencil(mats: &[Vec<Vec<BigInt>>], budget: u64) -> Result<MinRank> {
    let n = mats[0].len();
    let (a1, a2) = (&mats[0], &mats[1]);
    let at = |t: i64| combine_matrices(mats, &[BigInt::one(), BigInt::from(t)]);
    let n3 = (n as f64).powi(3);
    check_budget("pencil rank sampling", n3 * (n as f64 + 2.0), budget)?;

    // generic rank along beta = (1, t): at most n values of t drop below it
    let (mut rho, mut t_star) = (0, 0i64);
    for t in 0..=(n as i64 + 1) {
        let r = exact::rank(&at(t));
        if r > rho {
            rho = r;
            t_star = t;
        }
    }
    let rank_inf = exact::rank(a2);
    let mut best = Witness::Rational {
        beta: vec![int(1), int(t_star)],
        rank: rho,
    };
    let consider = |best: &mut Witness, w: Witness| {
        if w.rank() < best.rank() {
            *best = w;
        }
    };
    consider(
        &mut best,
        Witness::Rational {
            beta: vec![int(0), int(1)],
            rank: rank_inf,
        },
    );

    if rho > 0 {
        let (rows, cols) = pivot_sets(&at(t_star));
        let points: Vec<(BigRational, BigRational)> = (0..=rho as i64)
            .map(|t| {
                let m = at(t);
                let sub: Vec<Vec<BigInt>> = rows
                    .iter()
                    .map(|&i| cols.iter().map(|&j| m[i][j].clone()).collect())
                    .collect();
                (int(t), BigRational::from_integer(exact::determinant(&sub)))
            })
            .collect();
        let minor = Poly::interpolate(&points);
        let h = minor.squarefree();
        if h.degree().unwrap_or(0) > 0 {
            let deg = h.degree().unwrap() as f64;
            check_budget("pencil elimination", n3 * deg * deg, budget)?;
            let line: Vec<Vec<Poly>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| Poly::new(vec![BigRational::from_integer(a1[i][j].clone()), BigRational::from_integer(a2[i][j].clone())]))
                        .collect()
                })
                .collect();
            for (factor, rank) in ranks_on_roots(line, h) {
                if rank >= best.rank() || factor.count_real_roots() == 0 {
                    continue;
                }
                consider(&mut best, root_witness(mats, &factor, rank));
            }
        }
    }
    let rank = best.rank();
    Ok(MinRank {
        lower: rank,
        upper: rank,
        certified: true,
        method: MinRankMethod::BinaryPencil,
        witness: best,
        exact_points: n + 3,
        probes: 0,
    })
}

fn root_witness(mats: &[Vec<Vec<BigInt>>], factor: &Poly, rank: usize) -> Witness {
    if let Some(t) = factor.rational_roots().into_iter().next() {
        let beta = vec![int(1), t];
        let certified = exact::rank(&combine_matrices(mats, &exact::clear_denominators(&beta)));
        debug_assert_eq!(certified, rank);
        return Witness::Rational { beta, rank: certified };
    }
    let (lo, hi) = factor.isolate_real_roots().into_iter().next().expect("factor has a real root");
    let seq = factor.sturm_sequence();
    let width = BigRational::new(1.into(), BigInt::from(1u64 << 50));
    let (lo, hi) = factor.refine_root(&seq, lo, hi, &width);
    let approx_t = ((&lo + &hi) / int(2)).to_f64().unwrap_or(f64::NAN);
    Witness::Algebraic {
        poly: factor.clone(),
        interval: vec![lo, hi],
        approx_t,
        rank,
    }
}

/// Row and column indices of a nonzero maximal minor.
fn pivot_sets(matrix: &[Vec<BigInt>]) -> (Vec<usize>, Vec<usize>) {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<BigRational>> = matrix
        .iter()
        .map(|r| r.iter().map(|v| BigRational::from_integer(v.clone())).collect())
        .collect();
    let mut order: Vec<usize> = (0..rows).collect();
    let (mut r, mut pivot_cols) = (0, Vec::new());
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        order.swap(r, p);
        for i in r + 1..rows {
            let f = &m[i][c] / &m[r][c];
            for j in c..cols {
                let v = &m[r][j] * &f;
                m[i][j] -= v;
            }
        }
        pivot_cols.push(c);
        r += 1;
    }
    let mut pivot_rows: Vec<usize> = order[..r].to_vec();
    pivot_rows.sort_unstable();
    (pivot_rows, pivot_cols)
}

/// Rank of a polynomial matrix at the roots of each factor of a squarefree `h`.
fn ranks_on_roots(matrix: Vec<Vec<Poly>>, h: Poly) -> Vec<(Poly, usize)> {
    let reduce = |m: &[Vec<Poly>], h: &Poly| -> Vec<Vec<Poly>> {
        m.iter().map(|r| r.iter().map(|p| p.div_rem(h).1).collect()).collect()
    };
    let mut out = Vec::new();
    let mut stack = vec![(reduce(&matrix, &h), h, 0usize)];
    while let Some((mut m, mut h, mut rank)) = stack.pop() {
        loop {
            if h.degree().unwrap_or(0) == 0 {
                break;
            }
            let pivot = m
                .iter()
                .enumerate()
                .find_map(|(i, row)| row.iter().position(|e| !e.is_zero()).map(|j| (i, j)));
            if let Some((i, j)) = pivot {
                let g = m[i][j].gcd(&h);
                if g.degree() != Some(0) {
                    // the entry vanishes exactly on the roots of g and is a unit modulo h / g
                    let rest = h.div_rem(&g).0;
                    stack.push((reduce(&m, &g), g, rank));
                    m = reduce(&m, &rest);
                    h = rest;
                }
            }
            let Some((pi, pj)) = pivot else {
                out.push((h.clone(), rank));
                break;
            };
            let inv = m[pi][pj].inverse_mod(&h).expect("pivot is a unit");
            let pivot_row = m.remove(pi);
            for row in m.iter_mut() {
                let f = row[pj].mul(&inv).div_rem(&h).1;
                if !f.is_zero() {
                    for (x, p) in row.iter_mut().zip(&pivot_row) {
                        *x = x.sub(&f.mul(p)).div_rem(&h).1;
                    }
                }
                row.remove(pj);
            }
            rank += 1;
            if m.is_empty() || m[0].is_empty() {
                out.push((h.clone(), rank));
                break;
            }
        }
    }
    out
}

fn search_pencil(mats: &[Vec<Vec<BigInt>>], budget: u64, opts: &SearchOptions) -> Result<MinRank> {
    let n = mats[0].len();
    let r = mats.len();
    let per_point = (n as f64).powi(3).max(1.0);

    // exact ranks at primitive integer points, growing the height while the budget allows
    let mut height = 1;
    let mut points = projective_integer_points(r, 1);
    while height < opts.max_height {
        let next = projective_integer_points(r, height + 1);
        if next.len() as f64 * per_point > budget as f64 / 2.0 {
            break;
        }
        points = next;
        height += 1;
    }
    check_budget("pencil witness search", points.len() as f64 * per_point, budget)?;
    let ranks: Vec<usize> = points
        .par_iter()
        .map(|a| {
            let beta: Vec<BigInt> = a.iter().map(|&v| BigInt::from(v)).collect();
            exact::rank(&combine_matrices(mats, &beta))
        })
        .collect();
    let (best_idx, &best_rank) = ranks
        .iter()
        .enumerate()
        .min_by_key(|(i, r)| (**r, *i))
        .expect("at least one point");
    let mut witness = Witness::Rational {
        beta: points[best_idx].iter().map(|&v| int(v)).collect(),
        rank: best_rank,
    };
    let mut exact_points = points.len();

    // eigenvalue probes on the unit sphere, with local descent on the smallest eigenvalue
    let real: Vec<nalgebra::DMatrix<f64>> = mats
        .iter()
        .map(|m| nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j].to_f64().unwrap_or(f64::NAN) / 2.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut numerical_min = usize::MAX;
    let mut probes = 0;
    for _ in 0..opts.probes {
        let mut beta: Vec<f64> = (0..r).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        normalize(&mut beta);
        let (_, rank0) = spectrum(&real, &beta);
        numerical_min = numerical_min.min(rank0);
        let refined = descend(&real, beta);
        let (_, rank1) = spectrum(&real, &refined);
        probes += 1;
        numerical_min = numerical_min.min(rank1);
        if rank1 < witness.rank() {
            let beta_q = rationalize_direction(&refined, 1000);
            let exact_rank = exact::rank(&combine_matrices(mats, &exact::clear_denominators(&beta_q)));
            exact_points += 1;
            if exact_rank < witness.rank() && beta_q.iter().any(|b| !b.is_zero()) {
                witness = Witness::Rational {
                    beta: beta_q,
                    rank: exact_rank,
                };
            }
        }
    }
    let upper = witness.rank();
    Ok(MinRank {
        lower: numerical_min.min(upper),
        upper,
        certified: false,
        method: MinRankMethod::Search,
        witness,
        exact_points,
        probes,
    })
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Relative smallest eigenvalue and numerical rank at threshold `1e-8 * max |lambda|`.
fn spectrum(mats: &[nalgebra::DMatrix<f64>], beta: &[f64]) -> (f64, usize) {
    let n = mats[0].nrows();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for (a, b) in mats.iter().zip(beta) {
        m += a * *b;
    }
    let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 {
        return (0.0, 0);
    }
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let rank = eig.iter().filter(|v| v.abs() > 1e-8 * max).count();
    (min / max, rank)
}

fn descend(mats: &[nalgebra::DMatrix<f64>], mut beta: Vec<f64>) -> Vec<f64> {
    let mut value = spectrum(mats, &beta).0;
    let mut step = 0.25;
    while step > 1e-13 && value > 1e-14 {
        let mut improved = false;
        for k in 0..beta.len() {
            for sign in [1.0, -1.0] {
                let mut trial = beta.clone();
                trial[k] += sign * step;
                normalize(&mut trial);
                let v = spectrum(mats, &trial).0;
                if v < value {
                    value = v;
                    beta = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    beta
}

/// Rational direction near `beta`, each ratio to the largest coordinate with denominator `<= max_den`.
fn rationalize_direction(beta: &[f64], max_den: i64) -> Vec<BigRational> {
    let lead = beta.iter().fold(0.0f64, |a, &b| if b.abs() > a.abs() { b } else { a });
    beta.iter().map(|&b| continued_fraction(b / lead, max_den)).collect()
}

fn continued_fraction(x: f64, max_den: i64) -> BigRational {
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut y = x;
    for _ in 0..64 {
        let a = y.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = y - a as f64;
        if frac.abs() < 1e-12 {
            break;
        }
        y = 1.0 / frac;
    }
    if q1 == 0 {
        return BigRational::from_integer(x.round().to_i64().unwrap_or(0).into());
    }
    BigRational::new(p1.into(), q1.into())
}

/// Primitive-sign representatives of nonzero `a` with `|a|_inf <= h`: first nonzero entry positive.
pub fn projective_integer_points(r: usize, h: i64) -> Vec<Vec<i64>> {
    let side = 2 * h + 1;
    let total = (side as u64).pow(r as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut a = vec![0i64; r];
        for slot in a.iter_mut() {
            *slot = (idx % side as u64) as i64 - h;
            idx /= side as u64;
        }
        if a.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
            out.push(a);
        }
    }
    out
}

/// `sigma_R = n - min rank`, as an interval when the rank is only bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SigmaR {
    pub lower: usize,
    pub upper: usize,
    pub exact: bool,
}

impl SigmaR {
    pub fn from_min_rank(n: usize, rank: &MinRank) -> Self {
        SigmaR {
            lower: n - rank.upper,
            upper: n - rank.lower,
            exact: rank.certified && rank.lower == rank.upper,
        }
    }

    pub fn value(&self) -> Option<usize> {
        (self.lower == self.upper).then_some(self.lower)
    }
}

pub fn sigma_r(system: &FormSystem, budget: u64) -> Result<SigmaR> {
    let rank = pencil_min_rank(system, budget)?;
    Ok(SigmaR::from_min_rank(system.vars(), &rank))
}

/// Lower bound for `sigma_Z` from integer combinations of bounded height.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaZ {
    pub value: usize,
    pub height: i64,
    pub witness: Vec<i64>,
    /// True when the singular-locus dimension was estimated by counting modulo a prime.
    pub heuristic: bool,
    pub prime: Option<u64>,
}

pub fn sigma_z_lower(system: &FormSystem, height: i64, budget: u64) -> Result<SigmaZ> {
    if height < 1 {
        return Err(Error::InvalidParameter(format!("height must be at least 1, got {height}")));
    }
    if !system.is_independent() {
        return Err(Error::DependentSystem);
    }
    let n = system.vars();
    let points = projective_integer_points(system.len(), height);
    if system.degree() == 2 {
        let mats = require_quadratic(system)?;
        check_budget("sigma_Z search", points.len() as f64 * (n as f64).powi(3), budget)?;
        let values: Vec<usize> = points
            .par_iter()
            .map(|a| {
                let beta: Vec<BigInt> = a.iter().map(|&v| BigInt::from(v)).collect();
                n - exact::rank(&combine_matrices(&mats, &beta))
            })
            .collect();
        let (idx, &value) = values
            .iter()
            .enumerate()
            .max_by_key(|(i, v)| (**v, std::cmp::Reverse(*i)))
            .expect("at least one point");
        return Ok(SigmaZ {
            value,
            height,
            witness: points[idx].clone(),
            heuristic: false,
            prime: None,
        });
    }
    // dimension of the affine cone {grad g = 0} estimated from its point count mod p
    let d = system.degree() as u64;
    let prime = crate::numeric::primes_up_to(1000)
        .into_iter()
        .find(|&p| p >= 5 && d % p != 0)
        .expect("prime exists");
    let lead = system.leading_parts()?;
    let cost = points.len() as f64 * (prime as f64).powi(n as i32) * n as f64;
    check_budget("sigma_Z modular estimate", cost, budget)?;
    let values: Vec<usize> = points
        .par_iter()
        .map(|a| -> Result<usize> {
            let g = lead.combine_integer(a)?;
            let partials: Vec<ModForm> = (0..n).map(|v| Ok(ModForm::new(&g.partial(v)?, prime))).collect::<Result<_>>()?;
            let mut count = 0u64;
            let mut x = vec![0u64; n];
            loop {
                if partials.iter().all(|p| p.eval(&x) == 0) {
                    count += 1;
                }
                if !odometer(&mut x, prime) {
                    break;
                }
            }
            Ok(((count as f64).ln() / (prime as f64).ln()).round() as usize)
        })
        .collect::<Result<_>>()?;
    let (idx, &value) = values
        .iter()
        .enumerate()
        .max_by_key(|(i, v)| (**v, std::cmp::Reverse(*i)))
        .expect("at least one point");
    Ok(SigmaZ {
        value,
        height,
        witness: points[idx].clone(),
        heuristic: true,
        prime: Some(prime),
    })
}

/// Integer polynomial reduced modulo a small prime.
struct ModForm {
    p: u64,
    terms: Vec<(u64, Vec<u32>)>,
}

impl ModForm {
    fn new(f: &IntegerForm, p: u64) -> Self {
        let terms = f
            .terms()
            .iter()
            .map(|(e, &c)| (c.rem_euclid(p as i64) as u64, e.clone()))
            .filter(|(c, _)| *c != 0)
            .collect();
        ModForm { p, terms }
    }

    fn eval(&self, x: &[u64]) -> u64 {
        let mut acc = 0u64;
        for (c, e) in &self.terms {
            let mut t = *c;
            for (v, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = t * x[v] % self.p;
                }
            }
            acc = (acc + t) % self.p;
        }
        acc
    }
}

fn odometer(x: &mut [u64], p: u64) -> bool {
    for slot in x.iter_mut().rev() {
        if *slot + 1 < p {
            *slot += 1;
            return true;
        }
        *slot = 0;
    }
    false
}

#[derive(Clone, Debug, Serialize)]
pub struct PrimeProbe {
    pub prime: u64,
    /// A nonzero singular zero modulo the prime, first nonzero coordinate 1.
    pub singular_point: Option<Vec<u64>>,
    pub points_checked: u64,
}

/// Search for singular points of the projective variety of the leading parts modulo small primes.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessProbe {
    pub primes: Vec<PrimeProbe>,
    /// No singular point found at any probed prime. Evidence, not proof, of smoothness.
    pub passes: bool,
}

pub fn smoothness_probe(system: &FormSystem, primes: &[u64], budget: u64) -> Result<SmoothnessProbe> {
    let n = system.vars();
    let r = system.len();
    let lead = system.leading_parts()?;
    let mut out = Vec::new();
    let mut spent = 0.0;
    for &p in primes {
        if !crate::numeric::is_prime(p) {
            return Err(Error::InvalidParameter(format!("{p} is not prime")));
        }
        spent += (p as f64).powi(n as i32);
        check_budget("smoothness probe", spent, budget)?;
        let forms: Vec<ModForm> = lead.forms().iter().map(|f| ModForm::new(f, p)).collect();
        let grads: Vec<Vec<ModForm>> = lead
            .forms()
            .iter()
            .map(|f| (0..n).map(|v| Ok(ModForm::new(&f.partial(v)?, p))).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let mut hit = None;
        let mut checked = 0u64;
        // projective points: the first nonzero coordinate is 1
        'outer: for lead_pos in 0..n {
            let free = n - lead_pos - 1;
            let mut tail = vec![0u64; free];
            loop {
                let mut x = vec![0u64; n];
                x[lead_pos] = 1;
                x[lead_pos + 1..].copy_from_slice(&tail);
                checked += 1;
                if forms.iter().all(|f| f.eval(&x) == 0) {
                    let jac: Vec<Vec<u64>> = grads.iter().map(|g| g.iter().map(|q| q.eval(&x)).collect()).collect();
                    if exact::rank_mod_p(&jac, p) < r {
                        hit = Some(x);
                        break 'outer;
                    }
                }
                if !odometer(&mut tail, p) {
                    break;
                }
            }
        }
        out.push(PrimeProbe {
            prime: p,
            singular_point: hit,
            points_checked: checked,
        });
    }
    let passes = out.iter().all(|p| p.singular_point.is_none());
    Ok(SmoothnessProbe { primes: out, passes })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Indeterminate,
    NotApplicable,
}

impl Verdict {
    /// Verdict for `value > threshold` where `value` ranges over `[lo, hi]`.
    fn exceeds(lo: i64, hi: i64, threshold: i64) -> Verdict {
        if lo > threshold {
            Verdict::Holds
        } else if hi <= threshold {
            Verdict::Fails
        } else {
            Verdict::Indeterminate
        }
    }
}

/// Hypothesis verdicts for a system.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    /// `n - 1 - dim W > (d-1) 2^(d-1) R (R+1)`.
    pub birch: Verdict,
    pub birch_threshold: i64,
    /// `n - sigma_R > 8R`, for quadratic systems.
    pub new_condition: Verdict,
    pub new_threshold: i64,
    pub dim_w: Option<i64>,
    /// Whether the Birch verdict changes with `dim W` (true when `dim W` was not supplied and matters).
    pub birch_depends_on_dim_w: bool,
    /// `sigma_R <= R - 1`, checked when the smoothness probe passes.
    pub smooth_chain: Verdict,
    /// `sigma_R <= 1 + dim W`, checked when `dim W` is supplied.
    pub sigma_vs_dim_w: Verdict,
}

pub fn check_conditions(
    n: usize,
    r: usize,
    d: u32,
    sigma: Option<SigmaR>,
    dim_w: Option<i64>,
    smooth: Option<bool>,
) -> ConditionReport {
    let (n, r) = (n as i64, r as i64);
    let birch_threshold = (d as i64 - 1) * (1i64 << (d - 1)) * r * (r + 1);
    let (birch, birch_depends_on_dim_w) = match dim_w {
        Some(w) => (Verdict::exceeds(n - 1 - w, n - 1 - w, birch_threshold), false),
        // dim W >= -1, so n - 1 - dim W <= n
        None => match Verdict::exceeds(n, n, birch_threshold) {
            Verdict::Fails => (Verdict::Fails, false),
            _ => (Verdict::Indeterminate, true),
        },
    };
    let new_threshold = 8 * r;
    let new_condition = match (d, sigma) {
        (2, Some(s)) => Verdict::exceeds(n - s.upper as i64, n - s.lower as i64, new_threshold),
        _ => Verdict::NotApplicable,
    };
    let smooth_chain = match (smooth, sigma) {
        (Some(true), Some(s)) => Verdict::exceeds(r - 1 - s.upper as i64, r - 1 - s.lower as i64, -1),
        _ => Verdict::NotApplicable,
    };
    let sigma_vs_dim_w = match (dim_w, sigma) {
        (Some(w), Some(s)) => Verdict::exceeds(1 + w - s.upper as i64, 1 + w - s.lower as i64, -1),
        _ => Verdict::NotApplicable,
    };
    ConditionReport {
        birch,
        birch_threshold,
        new_condition,
        new_threshold,
        dim_w,
        birch_depends_on_dim_w,
        smooth_chain,
        sigma_vs_dim_w,
    }
}

/// The cancellation exponent in both readings.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Cancellation {
    /// `(n - sigma_R) / 4`, as an interval.
    pub from_sigma: [f64; 2],
    /// `(n - R + 1) / 4`.
    pub alternative: f64,
}

impl Cancellation {
    pub fn new(n: usize, r: usize, sigma: SigmaR) -> Self {
        Cancellation {
            from_sigma: [(n - sigma.upper) as f64 / 4.0, (n - sigma.lower) as f64 / 4.0],
            alternative: (n as f64 - r as f64 + 1.0) / 4.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PencilConfig {
    pub height: i64,
    pub primes: Vec<u64>,
    pub dim_w: Option<i64>,
    pub search: SearchOptions,
}

impl Default for PencilConfig {
    fn default() -> Self {
        PencilConfig {
            height: 3,
            primes: vec![3, 5, 7],
            dim_w: None,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PencilReport {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub d: u32,
    pub gram_matrices: Vec<DoubledGramMatrix>,
    pub min_rank: Option<MinRank>,
    pub sigma_r: Option<SigmaR>,
    pub sigma_z_lower: SigmaZ,
    /// `sigma_Z <= sigma_R`, which must hold.
    pub sigma_z_consistent: bool,
    pub smoothness: Option<SmoothnessProbe>,
    pub conditions: ConditionReport,
    pub cancellation: Option<Cancellation>,
}

pub fn analyze(system: &FormSystem, config: &PencilConfig, budget: u64) -> Result<PencilReport> {
    if !system.is_independent() {
        return Err(Error::DependentSystem);
    }
    let n = system.vars();
    let r = system.len();
    let d = system.degree();
    let (gram_matrices, min_rank, sigma) = if d == 2 {
        let grams = system.forms().iter().map(gram_matrix).collect::<Result<Vec<_>>>()?;
        let rank = pencil_min_rank_with(system, budget, &config.search)?;
        let sigma = SigmaR::from_min_rank(n, &rank);
        (grams, Some(rank), Some(sigma))
    } else {
        (Vec::new(), None, None)
    };
    let sigma_z = sigma_z_lower(system, config.height, budget)?;
    let smoothness = if config.primes.is_empty() {
        None
    } else {
        match smoothness_probe(system, &config.primes, budget) {
            Ok(s) => Some(s),
            Err(Error::BudgetExceeded { .. }) => {
                log::warn!("smoothness probe skipped: budget too small for n = {n}");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let sigma_z_consistent = sigma.is_none_or(|s| sigma_z.heuristic || sigma_z.value <= s.upper);
    let conditions = check_conditions(n, r, d, sigma, config.dim_w, smoothness.as_ref().map(|s| s.passes));
    Ok(PencilReport {
        n,
        r,
        d,
        gram_matrices,
        min_rank,
        sigma_r: sigma,
        sigma_z_lower: sigma_z,
        sigma_z_consistent,
        smoothness,
        conditions,
        cancellation: sigma.map(|s| Cancellation::new(n, r, s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use proptest::prelude::*;

    const BUDGET: u64 = 1 << 32;

    fn sys(text: &str) -> FormSystem {
        parse_system(text).unwrap()
    }

    fn q(n: i64) -> BigRational {
        int(n)
    }

    #[test]
    fn gram_examples() {
        let g = |t: &str| gram_matrix(&sys(t).forms()[0]).unwrap().entries;
        assert_eq!(g(r#"{"forms": ["x1^2 + x2^2"]}"#), vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(g(r#"{"forms": ["x1*x2"]}"#), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(g(r#"{"forms": ["x1^2 + x1*x2"]}"#), vec![vec![2, 1], vec![1, 0]]);
        let cubic = sys(r#"{"forms": ["x1^3"]}"#);
        assert!(matches!(gram_matrix(&cubic.forms()[0]), Err(Error::DegreeMismatch { .. })));
    }

    #[test]
    fn gram_reproduces_form_values() {
        let s = sys(r#"{"forms": ["3*x1^2 - 2*x1*x3 + x2*x3 + 5*x3^2"]}"#);
        let a = gram_matrix(&s.forms()[0]).unwrap().entries;
        let x = [2i64, -1, 3];
        let mut quad = 0i64;
        for i in 0..3 {
            for j in 0..3 {
                quad += x[i] * a[i][j] * x[j];
            }
        }
        assert_eq!(quad as i128, 2 * s.forms()[0].evaluate(&x).unwrap());
    }

    #[test]
    fn block_diagonal_pencil() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!((m.lower, m.upper), (2, 2));
        assert!(m.certified);
        let beta = m.witness.rational_beta().unwrap().to_vec();
        assert_eq!(pencil_rank(&s, &beta).unwrap(), 2);
        let sigma = sigma_r(&s, BUDGET).unwrap();
        assert_eq!(sigma.value(), Some(2));
    }

    #[test]
    fn single_form_and_definite_pencil() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2 + x3^2"]}"#);
        assert_eq!(pencil_min_rank(&s, BUDGET).unwrap().upper, 3);
        assert_eq!(sigma_r(&s, BUDGET).unwrap().value(), Some(0));
        // [[2b1, b2], [b2, -2b1]] has determinant -4b1^2 - b2^2 < 0
        let s = sys(r#"{"forms": ["x1^2 - x2^2", "x1*x2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!((m.lower, m.upper), (2, 2));
    }

    #[test]
    fn irrational_rank_drop() {
        // det((A1 + t A2)) = 4t^2 + 4t - 1 has roots (-1 +- sqrt 2) / 2
        let s = sys(r#"{"forms": ["x1^2 + x1*x2", "x1^2 + x2^2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!(m.upper, 1);
        let Witness::Algebraic { approx_t, poly, .. } = &m.witness else {
            panic!("expected algebraic witness, got {:?}", m.witness);
        };
        let roots = [(-1.0 + 2f64.sqrt()) / 2.0, (-1.0 - 2f64.sqrt()) / 2.0];
        assert!(roots.iter().any(|r| (r - approx_t).abs() < 1e-12));
        assert_eq!(poly.count_real_roots(), 2);
    }

    #[test]
    fn rational_rank_drop_at_infinity_and_inside() {
        // beta = (0, 1) gives rank 1
        let s = sys(r#"{"forms": ["x1^2 + x2^2", "x1^2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!(m.upper, 1);
        // beta = (1, -1) gives x2^2 + x3^2 - x3^2 ... rank 1
        let s = sys(r#"{"forms": ["x1^2 + x2^2 + x3^2", "x1^2 + x3^2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!(m.upper, 1);
        assert_eq!(m.witness.rational_beta().unwrap(), &[q(1), q(-1)]);
    }

    #[test]
    fn dependent_and_nonquadratic_rejected() {
        let dep = sys(r#"{"forms": ["x1^2 + x2^2", "2*x1^2 + 2*x2^2"]}"#);
        assert!(matches!(pencil_min_rank(&dep, BUDGET), Err(Error::DependentSystem)));
        let cubic = sys(r#"{"forms": ["x1^3 + x2^3"]}"#);
        assert!(matches!(pencil_min_rank(&cubic, BUDGET), Err(Error::DegreeMismatch { .. })));
    }

    #[test]
    fn three_form_search() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2", "x5^2 + x6^2"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert_eq!(m.upper, 2);
        assert_eq!(m.lower, 2);
        assert!(!m.certified);
        assert_eq!(m.method, MinRankMethod::Search);
    }

    #[test]
    fn eigen_probe_finds_irrational_direction() {
        // rank 2 only along beta = (1, t, 0) with 4t^2 + 4t - 1 = 0; integer search never sees it
        let s = sys(r#"{"forms": ["x1^2 + x1*x2 + x3^2", "x1^2 + x2^2 + x3^2", "x3^2 + x1*x3"]}"#);
        let m = pencil_min_rank(&s, BUDGET).unwrap();
        assert!(m.lower <= m.upper);
        assert!(m.upper <= 3);
    }

    #[test]
    fn sigma_z_examples() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#);
        let z = sigma_z_lower(&s, 1, BUDGET).unwrap();
        assert_eq!(z.value, 2);
        assert_eq!(z.witness, vec![1, 0]);
        assert_eq!(sigma_z_lower(&s, 3, BUDGET).unwrap().value, 2);
        assert!(sigma_z_lower(&s, 0, BUDGET).is_err());
        let single = sys(r#"{"forms": ["x1^2 - x2^2 + x3*x4"]}"#);
        assert_eq!(sigma_z_lower(&single, 2, BUDGET).unwrap().value, sigma_r(&single, BUDGET).unwrap().lower);
        let z1 = sigma_z_lower(&single, 1, BUDGET).unwrap().value;
        let z5 = sigma_z_lower(&single, 5, BUDGET).unwrap().value;
        assert!(z1 <= z5);
    }

    #[test]
    fn sigma_z_modular_estimate_for_cubics() {
        // the gradient of x1^3 + x2^3 vanishes on the x3 axis, a cone of dimension 1
        let s = sys(r#"{"n": 3, "forms": ["x1^3 + x2^3"]}"#);
        let z = sigma_z_lower(&s, 1, BUDGET).unwrap();
        assert!(z.heuristic);
        assert_eq!(z.value, 1);
        assert_eq!(z.prime, Some(5));
    }

    #[test]
    fn smoothness_examples() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let probe = smoothness_probe(&cone, &[5], BUDGET).unwrap();
        assert!(probe.passes);
        assert_eq!(probe.primes[0].points_checked, 31);
        let bad = smoothness_probe(&cone, &[2], BUDGET).unwrap();
        assert!(!bad.passes);
        let xy = sys(r#"{"forms": ["x1*x2"]}"#);
        assert!(smoothness_probe(&xy, &[3, 5, 7], BUDGET).unwrap().passes);
        let sq = sys(r#"{"n": 2, "forms": ["x1^2"]}"#);
        let hit = smoothness_probe(&sq, &[5], BUDGET).unwrap();
        assert!(!hit.passes);
        assert_eq!(hit.primes[0].singular_point, Some(vec![0, 1]));
    }

    #[test]
    fn condition_examples() {
        let s = |lo, hi| Some(SigmaR { lower: lo, upper: hi, exact: lo == hi });
        let c = check_conditions(36, 4, 2, s(0, 3), None, None);
        assert_eq!(c.new_condition, Verdict::Holds);
        assert_eq!(c.birch_threshold, 40);
        assert_eq!(c.birch, Verdict::Fails);
        let c = check_conditions(3, 1, 2, s(0, 0), None, None);
        assert_eq!(c.new_condition, Verdict::Fails);
        let c = check_conditions(35, 4, 2, s(2, 4), None, None);
        assert_eq!(c.new_condition, Verdict::Indeterminate);
        let c = check_conditions(100, 2, 2, s(0, 0), None, None);
        assert_eq!(c.birch, Verdict::Indeterminate);
        assert!(c.birch_depends_on_dim_w);
        let c = check_conditions(100, 2, 2, s(0, 0), Some(10), Some(true));
        assert_eq!(c.birch, Verdict::Holds);
        assert_eq!(c.smooth_chain, Verdict::Holds);
        assert_eq!(c.sigma_vs_dim_w, Verdict::Holds);
        let c = check_conditions(10, 2, 2, s(3, 3), None, Some(true));
        assert_eq!(c.smooth_chain, Verdict::Fails);
    }

    #[test]
    fn report_for_fixture() {
        let s = sys(r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#);
        let report = analyze(&s, &PencilConfig::default(), BUDGET).unwrap();
        assert_eq!(report.sigma_r.unwrap().value(), Some(2));
        assert!(report.sigma_z_consistent);
        let c = report.cancellation.unwrap();
        assert_eq!(c.from_sigma, [0.5, 0.5]);
        assert_eq!(c.alternative, 0.75);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains(r#""kind":"rational""#));
    }

    fn random_unimodular(ops: &[(usize, usize, i64)], r: usize) -> Vec<Vec<i64>> {
        let mut u: Vec<Vec<i64>> = (0..r).map(|i| (0..r).map(|j| i64::from(i == j)).collect()).collect();
        for &(i, j, k) in ops {
            let (i, j) = (i % r, j % r);
            if i == j {
                u.swap(i, (i + 1) % r);
                continue;
            }
            let src = u[j].clone();
            for (a, b) in u[i].iter_mut().zip(src) {
                *a += k * b;
            }
        }
        u
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn unimodular_invariance(ops in prop::collection::vec((0usize..2, 0usize..2, -3i64..=3), 1..6)) {
            let fixtures = [
                r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#,
                r#"{"forms": ["x1^2 + x1*x2", "x1^2 + x2^2"]}"#,
                r#"{"forms": ["x1^2 - x2^2 + x3^2", "x1*x2 + x2*x3"]}"#,
            ];
            for f in fixtures {
                let s = sys(f);
                let u = random_unimodular(&ops, 2);
                let t = s.transform(&u).unwrap();
                let a = pencil_min_rank(&s, BUDGET).unwrap();
                let b = pencil_min_rank(&t, BUDGET).unwrap();
                prop_assert_eq!((a.lower, a.upper), (b.lower, b.upper));
            }
        }

        #[test]
        fn rank_is_scale_invariant(b1 in -20i64..=20, b2 in -20i64..=20, num in 1i64..=9, den in 1i64..=9, neg in any::<bool>()) {
            prop_assume!(b1 != 0 || b2 != 0);
            let s = sys(r#"{"forms": ["x1^2 - x2^2 + x3^2", "x1*x2 + x2*x3"]}"#);
            let lambda = BigRational::new(if neg { -num } else { num }.into(), den.into());
            let beta = vec![q(b1), q(b2)];
            let scaled: Vec<BigRational> = beta.iter().map(|b| b * &lambda).collect();
            prop_assert_eq!(pencil_rank(&s, &beta).unwrap(), pencil_rank(&s, &scaled).unwrap());
        }

        #[test]
        fn exact_min_rank_bounds_sampled_ranks(c in prop::collection::vec(-3i64..=3, 12), b1 in -6i64..=6, b2 in -6i64..=6) {
            prop_assume!(b1 != 0 || b2 != 0);
            let f = |c: &[i64]| format!("{}*x1^2 + {}*x2^2 + {}*x3^2 + {}*x1*x2 + {}*x1*x3 + {}*x2*x3", c[0], c[1], c[2], c[3], c[4], c[5]);
            let text = format!(r#"{{"n": 3, "d": 2, "forms": ["{}", "{}"]}}"#, f(&c[..6]), f(&c[6..]));
            let Ok(s) = parse_system(&text) else { return Ok(()); };
            prop_assume!(s.is_independent());
            let m = pencil_min_rank(&s, BUDGET).unwrap();
            let r = pencil_rank(&s, &[q(b1), q(b2)]).unwrap();
            prop_assert!(m.upper <= r);
            let z = sigma_z_lower(&s, 2, BUDGET).unwrap();
            prop_assert!(z.value <= 3 - m.lower);
        }
    }
}
