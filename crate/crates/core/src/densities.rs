//! The singular series two ways: the truncated sum of local sums over reduced
//! fractions, and the Euler product of p-adic densities `rho_p(k)`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact;
use crate::exp_sums::LocalSums;
use crate::forms::{FormSystem, IntegerForm};
use crate::lattice::{count_mod, witness_class_lifts, ModularCountRequest};
use crate::numeric::{is_prime, primes_up_to, ComplexSum};

fn as_string<S: Serializer>(v: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn all_as_strings<S: Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.to_string()))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, Serialize)]
pub struct Density {
    pub p: u64,
    pub k: u32,
    pub count: String,
    #[serde(serialize_with = "as_string")]
    pub exact: BigRational,
    pub value: f64,
}

/// `rho_p(k) = p^{-k(n-R)} #{b mod p^k : F(b) = 0 mod p^k}`.
pub fn density(system: &FormSystem, p: u64, k: u32, budget: u64) -> Result<Density> {
    let count = count_mod(&ModularCountRequest::new(system, p, k), budget)?;
    let exact = density_from_count(system, p, k, &count);
    Ok(Density {
        p,
        k,
        count: count.to_string(),
        value: to_f64(&exact),
        exact,
    })
}

fn density_from_count(system: &FormSystem, p: u64, k: u32, count: &BigUint) -> BigRational {
    let free = system.vars() as i64 - system.len() as i64;
    let num = BigInt::from(count.clone());
    let scale = BigInt::from(p).pow((k as i64 * free.unsigned_abs() as i64) as u32);
    if free >= 0 {
        BigRational::new(num, scale)
    } else {
        BigRational::from_integer(num * scale)
    }
}

/// A zero `b` modulo `p^{2 alpha + 1}` with an `R x R` Jacobian minor of valuation `alpha`.
#[derive(Clone, Debug, Serialize)]
pub struct HenselWitness {
    pub point: Vec<i64>,
    pub alpha: u32,
    pub level: u32,
    pub columns: Vec<usize>,
}

fn valuation(v: &BigInt, p: u64) -> Option<u32> {
    if v.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut v = v.clone();
    let mut k = 0;
    while (&v % &p).is_zero() {
        v /= &p;
        k += 1;
    }
    Some(k)
}

fn column_subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            go(j + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::new(), &mut out);
    out
}

/// Smallest `alpha <= max_alpha` with a witness, scanning residues in lexicographic order.
pub fn hensel_witness(system: &FormSystem, p: u64, max_alpha: u32, scan_limit: u64) -> Result<Option<HenselWitness>> {
    let n = system.vars();
    let r = system.len();
    let partials: Vec<Vec<IntegerForm>> = system
        .forms()
        .iter()
        .map(|f| (0..n).map(|j| f.partial(j)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let subsets = column_subsets(n, r);
    for alpha in 0..=max_alpha {
        let level = 2 * alpha + 1;
        let Some(modulus) = p.checked_pow(level).filter(|&m| m < 1 << 31) else {
            break;
        };
        let m = modulus as i128;
        let mut x = vec![0i64; n];
        let mut visited = 0u64;
        loop {
            visited += 1;
            if visited > scan_limit {
                break;
            }
            let zero = system
                .forms()
                .iter()
                .map(|f| f.evaluate(&x))
                .collect::<Result<Vec<_>>>()?
                .iter()
                .all(|v| v.rem_euclid(m) == 0);
            if zero {
                let jac: Vec<Vec<i128>> = partials
                    .iter()
                    .map(|row| row.iter().map(|g| g.evaluate(&x)).collect::<Result<_>>())
                    .collect::<Result<_>>()?;
                let best = subsets
                    .iter()
                    .filter_map(|cols| {
                        let minor: Vec<Vec<BigInt>> = jac
                            .iter()
                            .map(|row| cols.iter().map(|&c| BigInt::from(row[c])).collect())
                            .collect();
                        valuation(&exact::determinant(&minor), p).map(|v| (v, cols))
                    })
                    .min_by_key(|(v, _)| *v);
                if let Some((v, cols)) = best {
                    if v == alpha {
                        return Ok(Some(HenselWitness {
                            point: x,
                            alpha,
                            level,
                            columns: cols.clone(),
                        }));
                    }
                }
            }
            let mut i = n;
            let mut done = true;
            while i > 0 {
                i -= 1;
                if x[i] + 1 < modulus as i64 {
                    x[i] += 1;
                    done = false;
                    break;
                }
                x[i] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum KPolicy {
    Fixed { k: u32 },
    /// Stop once two consecutive relative steps are below `tol`, not before
    /// `k = 2 alpha + 1`; bad primes get `k_max + 2`.
    Adaptive { tol: f64, k_max: u32 },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Adaptive { tol: 1e-4, k_max: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Fixed,
    Tolerance,
    /// Reached the cap while still moving by more than the tolerance.
    KMax,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalDensityTable {
    pub p: u64,
    pub densities: Vec<f64>,
    #[serde(serialize_with = "all_as_strings")]
    pub exact: Vec<BigRational>,
    pub stabilized_at: Option<u32>,
    pub stop: StopReason,
    pub alpha: Option<u32>,
    pub witness: Option<HenselWitness>,
    /// `p` divides the degree, or no witness with `alpha = 0` was found.
    pub bad_prime: bool,
    pub k_max: u32,
    /// `p^{-k(n-R)}` times the lifts of the witness class, for `k >= 2 alpha + 1`.
    pub witness_class_densities: Vec<f64>,
    /// The witness-class densities above are all equal.
    pub witness_class_constant: Option<bool>,
}

impl LocalDensityTable {
    /// The density used in products: the last one computed.
    pub fn limit(&self) -> &BigRational {
        self.exact.last().expect("at least one density")
    }
}

const WITNESS_SCAN: u64 = 2_000_000;

pub fn local_density_table(system: &FormSystem, p: u64, policy: KPolicy, budget: u64) -> Result<LocalDensityTable> {
    if !is_prime(p) {
        return Err(Error::InvalidParameter(format!("{p} is not prime")));
    }
    let witness = hensel_witness(system, p, 2, WITNESS_SCAN)?;
    let alpha = witness.as_ref().map(|w| w.alpha);
    let bad_prime = system.degree() as u64 % p == 0 || alpha != Some(0);
    let (k_max, tol, floor) = match policy {
        KPolicy::Fixed { k } => (k.max(1), None, 1),
        KPolicy::Adaptive { tol, k_max } => {
            let cap = if bad_prime { k_max + 2 } else { k_max };
            (cap.max(1), Some(tol), 2 * alpha.unwrap_or(0) + 1)
        }
    };
    let mut exact = Vec::new();
    let mut stabilized_at = None;
    let mut small_steps = 0;
    let mut stop = if tol.is_some() { StopReason::KMax } else { StopReason::Fixed };
    for k in 1..=k_max {
        let count = count_mod(&ModularCountRequest::new(system, p, k), budget)?;
        let rho = density_from_count(system, p, k, &count);
        if let (Some(tol), Some(prev)) = (tol, exact.last()) {
            let step = to_f64(&(&rho - prev)).abs();
            let scale = to_f64(&rho).abs().max(f64::MIN_POSITIVE);
            if step < tol * scale {
                small_steps += 1;
            } else {
                small_steps = 0;
            }
        }
        exact.push(rho);
        if tol.is_some() && small_steps >= 2 && k >= floor {
            stabilized_at = Some(k);
            stop = StopReason::Tolerance;
            break;
        }
    }
    let last_k = exact.len() as u32;
    let mut witness_class_densities = Vec::new();
    if let Some(w) = &witness {
        for k in w.level..=last_k.max(w.level) {
            let lifts = witness_class_lifts(system, p, &w.point, w.level, k, budget)?;
            witness_class_densities.push(to_f64(&density_from_count(system, p, k, &lifts)));
        }
    }
    let witness_class_constant = witness
        .as_ref()
        .map(|_| witness_class_densities.windows(2).all(|w| w[0] == w[1]));
    Ok(LocalDensityTable {
        p,
        densities: exact.iter().map(to_f64).collect(),
        exact,
        stabilized_at,
        stop,
        alpha,
        witness,
        bad_prime,
        k_max,
        witness_class_densities,
        witness_class_constant,
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Truncation {
    QSum { q_max: u64 },
    EulerProduct { p_max: u64, policy: KPolicy },
}

#[derive(Clone, Debug, Serialize)]
pub struct DyadicBlock {
    /// Block `(lo, hi]`.
    pub lo: u64,
    pub hi: u64,
    /// `sum |S_{q,a}|` over the block.
    pub magnitude: f64,
    /// The block lies entirely below the truncation point.
    pub complete: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesEstimate {
    pub value: f64,
    pub truncation: Truncation,
    /// Q-sum: `s(Q)` of the last complete dyadic block; Euler product:
    /// `|prod_{p_max/2 < p <= p_max} rho_p - 1|`.
    pub tail_indicator: f64,
    pub imaginary: f64,
    pub blocks: Vec<DyadicBlock>,
    /// `A(q)` for the q-sum, indexed from `q = 1`.
    pub terms: Vec<f64>,
    pub tables: Vec<LocalDensityTable>,
    /// Primes whose table stopped at the cap while still moving.
    pub unsettled_primes: Vec<u64>,
}

/// `prod_{p <= p_max} rho_p(k_p)`.
pub fn euler_product(system: &FormSystem, p_max: u64, policy: KPolicy, budget: u64) -> Result<SeriesEstimate> {
    if !system.is_independent() {
        return Err(Error::DependentSystem);
    }
    let primes = primes_up_to(p_max);
    let tables: Vec<LocalDensityTable> = primes
        .par_iter()
        .map(|&p| local_density_table(system, p, policy, budget))
        .collect::<Result<_>>()?;
    let mut product = BigRational::one();
    let mut tail = BigRational::one();
    for t in &tables {
        product *= t.limit();
        if 2 * t.p > p_max {
            tail *= t.limit();
        }
    }
    let tail_indicator = if tables.is_empty() { 0.0 } else { (to_f64(&tail) - 1.0).abs() };
    Ok(SeriesEstimate {
        value: to_f64(&product),
        truncation: Truncation::EulerProduct { p_max, policy },
        tail_indicator,
        imaginary: 0.0,
        blocks: Vec::new(),
        terms: Vec::new(),
        unsettled_primes: tables.iter().filter(|t| t.stop == StopReason::KMax).map(|t| t.p).collect(),
        tables,
    })
}

/// Reduced residues `a mod q` in `[0, q)^R` with `gcd(a_1, .., a_R, q) = 1`.
fn reduced_residues(q: u64, r: usize) -> impl Iterator<Item = Vec<i64>> {
    let total = q.pow(r as u32);
    (0..total).filter_map(move |mut idx| {
        let a: Vec<i64> = (0..r)
            .map(|_| {
                let v = idx % q;
                idx /= q;
                v as i64
            })
            .collect();
        (a.iter().fold(q, |g, &x| g.gcd(&(x as u64))) == 1).then_some(a)
    })
}

/// `A(q) = sum_{a reduced mod q} S_{q,a}` and `sum |S_{q,a}|`.
fn q_term(system: &FormSystem, q: u64, budget: u64) -> Result<(num_complex::Complex64, f64)> {
    let sums = LocalSums::new(system, q, budget)?;
    let mut total = ComplexSum::new();
    let mut abs = 0.0;
    for a in reduced_residues(q, system.len()) {
        let s = sums.sum(&a)?;
        total.add(s);
        abs += s.norm();
    }
    Ok((total.value(), abs))
}

const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// `sum_{q <= Q_max} A(q)`, with dyadic blocks `s(Q)` recorded.
pub fn q_sum_series(system: &FormSystem, q_max: u64, budget: u64) -> Result<SeriesEstimate> {
    if q_max == 0 {
        return Err(Error::InvalidParameter("Q_max must be at least 1".into()));
    }
    let terms: Vec<(num_complex::Complex64, f64)> = (1..=q_max)
        .into_par_iter()
        .map(|q| q_term(system, q, budget))
        .collect::<Result<_>>()?;
    for (q, (t, _)) in terms.iter().enumerate() {
        if t.im.abs() > IMAGINARY_TOLERANCE {
            return Err(Error::Numerical(format!(
                "A({}) has imaginary part {:.3e}; conjugate terms should cancel",
                q + 1,
                t.im
            )));
        }
    }
    let mut value = ComplexSum::new();
    for (t, _) in &terms {
        value.add(*t);
    }
    let mut blocks = Vec::new();
    let mut lo = 1u64;
    while lo < q_max {
        let hi = 2 * lo;
        let magnitude = terms[lo as usize..hi.min(q_max) as usize].iter().map(|(_, m)| m).sum();
        blocks.push(DyadicBlock {
            lo,
            hi,
            magnitude,
            complete: hi <= q_max,
        });
        lo = hi;
    }
    let tail_indicator = blocks.iter().rev().find(|b| b.complete).map_or(0.0, |b| b.magnitude);
    let total = value.value();
    Ok(SeriesEstimate {
        value: total.re,
        truncation: Truncation::QSum { q_max },
        tail_indicator,
        imaginary: total.im,
        blocks,
        terms: terms.iter().map(|(t, _)| t.re).collect(),
        tables: Vec::new(),
        unsettled_primes: Vec::new(),
    })
}

/// `|A(q1 q2) - A(q1) A(q2)|` for coprime `q1, q2`.
pub fn multiplicativity_check(system: &FormSystem, q1: u64, q2: u64, budget: u64) -> Result<f64> {
    if q1 == 0 || q2 == 0 || q1.gcd(&q2) != 1 {
        return Err(Error::Precondition(format!("{q1} and {q2} must be coprime positive integers")));
    }
    let (a1, _) = q_term(system, q1, budget)?;
    let (a2, _) = q_term(system, q2, budget)?;
    let (a12, _) = q_term(system, q1 * q2, budget)?;
    Ok((a12 - a1 * a2).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use proptest::prelude::*;

    const BUDGET: u64 = 1 << 34;

    fn sys(text: &str) -> FormSystem {
        parse_system(text).unwrap()
    }

    fn quinary() -> FormSystem {
        sys(r#"{"forms": ["x1^2 + x2^2 + x3^2 + x4^2 - x5^2"]}"#)
    }

    #[test]
    fn density_examples() {
        let cone = sys(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#);
        let d = density(&cone, 2, 1, BUDGET).unwrap();
        assert_eq!(d.count, "4");
        assert_eq!(d.exact, BigRational::one());
        let lin = sys(r#"{"n": 3, "forms": ["x1"]}"#);
        for p in [2, 3, 7] {
            for k in 1..=3 {
                assert_eq!(density(&lin, p, k, BUDGET).unwrap().exact, BigRational::one());
            }
        }
    }

    #[test]
    fn obstructed_prime() {
        // x1^2 + x2^2 = 0 mod 3 forces x1 = x2 = 0 mod 3
        let s = sys(r#"{"forms": ["x1^2 + x2^2 - 3*x3^2"]}"#);
        let first = density(&s, 3, 1, BUDGET).unwrap().exact;
        assert_eq!(first, BigRational::new(1.into(), 3.into()));
        for k in 2..=4 {
            assert!(density(&s, 3, k, BUDGET).unwrap().exact <= first);
        }
    }

    #[test]
    fn quinary_tables() {
        let q = quinary();
        let two = local_density_table(&q, 2, KPolicy::Fixed { k: 8 }, BUDGET).unwrap();
        let expected = [1.0, 0.75, 0.75, 0.71875, 0.71875, 0.71484375, 0.71484375, 0.71435546875];
        assert_eq!(two.densities, expected);
        let five = local_density_table(&q, 5, KPolicy::default(), BUDGET).unwrap();
        assert_eq!(five.alpha, Some(0));
        assert!(!five.bad_prime);
        assert_eq!(five.stop, StopReason::Tolerance);
        assert_eq!(five.densities[1], 1.0064);
        assert_eq!(five.witness_class_constant, Some(true));
        let adaptive_two = local_density_table(&q, 2, KPolicy::default(), BUDGET).unwrap();
        assert!(adaptive_two.bad_prime);
        assert_eq!(adaptive_two.k_max, 8);
    }

    #[test]
    fn positivity_floor() {
        let s = sys(r#"{"forms": ["x1^2 - 7*x2^2 + 3*x1*x3", "x2*x3 - x1^2"]}"#);
        for p in [2u64, 3, 5] {
            for k in 1..=3u32 {
                let d = density(&s, p, k, BUDGET).unwrap();
                let floor = BigRational::new(BigInt::one(), BigInt::from(p).pow(k));
                assert!(d.exact >= floor);
            }
        }
    }

    #[test]
    fn series_examples() {
        let q = quinary();
        assert_eq!(q_sum_series(&q, 1, BUDGET).unwrap().value, 1.0);
        let sq = sys(r#"{"forms": ["x1^2"]}"#);
        assert!((q_sum_series(&sq, 2, BUDGET).unwrap().value - 1.0).abs() < 1e-15);
        let lin = sys(r#"{"n": 2, "forms": ["x1"]}"#);
        assert!((euler_product(&lin, 30, KPolicy::default(), BUDGET).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(euler_product(&q, 1, KPolicy::default(), BUDGET).unwrap().value, 1.0);
    }

    #[test]
    fn multiplicativity_examples() {
        let sq = sys(r#"{"forms": ["x1^2"]}"#);
        assert!(multiplicativity_check(&sq, 2, 3, BUDGET).unwrap() < 1e-9);
        assert!(multiplicativity_check(&sq, 1, 7, BUDGET).unwrap() < 1e-15);
        assert!(multiplicativity_check(&sq, 4, 6, BUDGET).is_err());
        let pair = sys(r#"{"forms": ["x1^2 - x2*x3", "x2^2 + x1*x3"]}"#);
        assert!(multiplicativity_check(&pair, 4, 5, BUDGET).unwrap() < 1e-9);
    }

    #[test]
    fn witness_search() {
        let q = quinary();
        let w = hensel_witness(&q, 3, 2, 1000).unwrap().unwrap();
        assert_eq!(w.alpha, 0);
        let vals = q.evaluate(&w.point).unwrap();
        assert_eq!(vals[0].rem_euclid(3), 0);
        // 2 divides every partial of a diagonal quadratic: no alpha = 0 witness at p = 2
        let two = hensel_witness(&q, 2, 2, 100_000).unwrap().unwrap();
        assert!(two.alpha >= 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn multiplicativity_random(c in prop::collection::vec(-4i64..=4, 3), q1 in 1u64..6, q2 in 1u64..6) {
            prop_assume!(q1.gcd(&q2) == 1);
            let text = format!(r#"{{"n": 3, "d": 2, "forms": ["{}*x1^2 + {}*x2*x3 + {}*x3^2 + x1*x2"]}}"#, c[0], c[1], c[2]);
            let s = parse_system(&text).unwrap();
            prop_assert!(multiplicativity_check(&s, q1, q2, BUDGET).unwrap() < 1e-9);
        }
    }
}
