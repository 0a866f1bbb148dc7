//! Counting zeros modulo prime powers.
//!
//! The recursive method walks residue classes modulo `p`. A class where the
//! active Jacobian has full rank lifts uniformly, so its contribution is a
//! power of `p`. Every other solution class `s` is expanded as `s + p*u`, the
//! `p`-content of each polynomial is divided out, and the count recurses on
//! `u` with a lower modulus. Counts are exact (`BigUint`).

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_budget, Error, Result};
use crate::exact::{rank_mod_p, solve_mod_p};
use crate::forms::FormSystem;
use crate::numeric::is_prime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModularMethod {
    /// Hensel-type recursion on singular classes.
    Recursive,
    /// Every residue vector modulo `p^k`.
    Enumerate,
}

#[derive(Clone, Debug)]
pub struct ModularCountRequest<'a> {
    pub system: &'a FormSystem,
    pub prime: u64,
    pub exponent: u32,
    pub method: ModularMethod,
}

impl<'a> ModularCountRequest<'a> {
    pub fn new(system: &'a FormSystem, prime: u64, exponent: u32) -> Self {
        ModularCountRequest {
            system,
            prime,
            exponent,
            method: ModularMethod::Recursive,
        }
    }

    fn validate(&self) -> Result<i128> {
        if !is_prime(self.prime) {
            return Err(Error::InvalidParameter(format!("{} is not prime", self.prime)));
        }
        if self.exponent == 0 {
            return Err(Error::InvalidParameter("exponent must be at least 1".into()));
        }
        let modulus = (self.prime as i128)
            .checked_pow(self.exponent)
            .filter(|&m| m < (1i128 << 62))
            .ok_or(Error::Overflow("forming the modulus p^k"))?;
        Ok(modulus)
    }
}

/// `#{b mod p^k : f_i(b) = 0 mod p^k for all i}`.
pub fn count_mod(req: &ModularCountRequest<'_>, budget: u64) -> Result<BigUint> {
    match req.method {
        ModularMethod::Enumerate => count_mod_enumerate(req, budget),
        ModularMethod::Recursive => {
            let modulus = req.validate()?;
            let polys = req
                .system
                .forms()
                .iter()
                .map(|f| Level {
                    poly: ModPoly::from_form(f.terms(), modulus),
                    level: req.exponent,
                })
                .collect();
            let mut walker = Walker::new(req.prime, req.system.vars(), budget);
            walker.count(polys, req.exponent)
        }
    }
}

/// Plain enumeration of `(Z / p^k)^n`.
pub fn count_mod_enumerate(req: &ModularCountRequest<'_>, budget: u64) -> Result<BigUint> {
    let modulus = req.validate()?;
    let n = req.system.vars();
    check_budget("modular enumeration", (modulus as f64).powi(n as i32), budget)?;
    let polys: Vec<ModPoly> = req
        .system
        .forms()
        .iter()
        .map(|f| ModPoly::from_form(f.terms(), modulus))
        .collect();
    let m = modulus as i64;
    let total: u64 = (0..m)
        .into_par_iter()
        .map(|first| {
            let mut x = vec![0i128; n];
            x[0] = first as i128;
            let mut hits = 0u64;
            loop {
                if polys.iter().all(|p| p.eval(&x, modulus) == 0) {
                    hits += 1;
                }
                let mut k = n;
                loop {
                    k -= 1;
                    if k == 0 {
                        return hits;
                    }
                    if x[k] + 1 < modulus {
                        x[k] += 1;
                        break;
                    }
                    x[k] = 0;
                }
            }
        })
        .sum();
    Ok(BigUint::from(total))
}

/// Number of `t mod p^k` with `t = class mod p^j` and all `f_i(t) = 0 mod p^k`,
/// where `j = class_level <= k`.
pub fn witness_class_lifts(
    system: &FormSystem,
    prime: u64,
    class: &[i64],
    class_level: u32,
    k: u32,
    budget: u64,
) -> Result<BigUint> {
    let req = ModularCountRequest::new(system, prime, k);
    let modulus = req.validate()?;
    if class.len() != system.vars() {
        return Err(Error::DimensionMismatch {
            expected: system.vars(),
            found: class.len(),
        });
    }
    if class_level > k {
        return Err(Error::InvalidParameter(format!(
            "class level {class_level} exceeds exponent {k}"
        )));
    }
    let shift = (prime as i128).pow(class_level);
    let point: Vec<i128> = class.iter().map(|&c| (c as i128).rem_euclid(modulus)).collect();
    let mut polys = Vec::new();
    for f in system.forms() {
        let poly = ModPoly::from_form(f.terms(), modulus);
        let sub = poly.substitute(&point, shift, modulus);
        match sub.content_split(prime, k) {
            Split::Vanishes => {}
            // the class is not a zero modulo p^j, so it has no lifts
            Split::Reduced(_, level) if level > k - class_level => return Ok(BigUint::zero()),
            Split::Reduced(poly, level) => polys.push(Level { poly, level }),
        }
    }
    let mut walker = Walker::new(prime, system.vars(), budget);
    walker.count(polys, k - class_level)
}

/// Sparse polynomial with coefficients reduced to `[0, modulus)`.
#[derive(Clone, Debug, PartialEq)]
struct ModPoly {
    terms: BTreeMap<Vec<u32>, i128>,
}

enum Split {
    Vanishes,
    Reduced(ModPoly, u32),
}

impl ModPoly {
    fn from_form(terms: &BTreeMap<Vec<u32>, i64>, modulus: i128) -> Self {
        let mut out = BTreeMap::new();
        for (e, &c) in terms {
            let r = (c as i128).rem_euclid(modulus);
            if r != 0 {
                out.insert(e.clone(), r);
            }
        }
        ModPoly { terms: out }
    }

    fn eval(&self, x: &[i128], modulus: i128) -> i128 {
        let mut acc = 0i128;
        for (e, &c) in &self.terms {
            let mut t = c;
            for (v, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    t = t * x[v] % modulus;
                }
            }
            acc = (acc + t) % modulus;
        }
        acc
    }

    fn eval_mod_p(&self, x: &[u64], p: u64) -> u64 {
        let p = p as i128;
        let mut acc = 0i128;
        for (e, &c) in &self.terms {
            let mut t = c % p;
            for (v, &pw) in e.iter().enumerate() {
                for _ in 0..pw {
                    t = t * x[v] as i128 % p;
                }
            }
            acc = (acc + t) % p;
        }
        acc as u64
    }

    fn max_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// `g(point + shift * u)` as a polynomial in `u`, reduced modulo `modulus`.
    fn substitute(&self, point: &[i128], shift: i128, modulus: i128) -> ModPoly {
        let mut out: BTreeMap<Vec<u32>, i128> = BTreeMap::new();
        for (e, &c) in &self.terms {
            // expand prod_v (point_v + shift u_v)^{e_v}
            let mut partial: Vec<(Vec<u32>, i128)> = vec![(vec![0; e.len()], c)];
            for (v, &pw) in e.iter().enumerate() {
                if pw == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (pw as usize + 1));
                for (mono, coeff) in &partial {
                    for j in 0..=pw {
                        let mut f = coeff * binomial(pw, j) % modulus;
                        for _ in 0..(pw - j) {
                            f = f * point[v] % modulus;
                        }
                        for _ in 0..j {
                            f = f * shift % modulus;
                        }
                        if f != 0 {
                            let mut m = mono.clone();
                            m[v] += j;
                            next.push((m, f));
                        }
                    }
                }
                partial = next;
            }
            for (mono, coeff) in partial {
                let slot = out.entry(mono).or_insert(0);
                *slot = (*slot + coeff) % modulus;
            }
        }
        out.retain(|_, c| *c != 0);
        ModPoly { terms: out }
    }

    /// Divides out the `p`-content of a polynomial known modulo `p^level`.
    fn content_split(&self, p: u64, level: u32) -> Split {
        let p = p as i128;
        let mut e = level;
        for &c in self.terms.values() {
            let mut v = 0;
            let mut x = c;
            while v < e && x % p == 0 {
                x /= p;
                v += 1;
            }
            e = e.min(v);
        }
        if e >= level {
            return Split::Vanishes;
        }
        let div = p.pow(e);
        let new_mod = p.pow(level - e);
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| (m.clone(), (c / div) % new_mod))
            .filter(|(_, c)| *c != 0)
            .collect();
        Split::Reduced(ModPoly { terms }, level - e)
    }

    /// Hessian rows and linear part modulo `p` for a polynomial of degree <= 2.
    fn affine_gradient(&self, n: usize, p: u64) -> (Vec<Vec<u64>>, Vec<u64>) {
        let pi = p as i128;
        let mut h = vec![vec![0u64; n]; n];
        let mut b = vec![0u64; n];
        for (e, &c) in &self.terms {
            let c = c.rem_euclid(pi);
            let vars: Vec<(usize, u32)> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(v, &k)| (v, k))
                .collect();
            match vars.as_slice() {
                [(v, 1)] => b[*v] = ((b[*v] as i128 + c) % pi) as u64,
                [(v, 2)] => h[*v][*v] = ((h[*v][*v] as i128 + 2 * c) % pi) as u64,
                [(v, 1), (w, 1)] => {
                    h[*v][*w] = ((h[*v][*w] as i128 + c) % pi) as u64;
                    h[*w][*v] = ((h[*w][*v] as i128 + c) % pi) as u64;
                }
                _ => {}
            }
        }
        (h, b)
    }

    fn gradient_mod_p(&self, x: &[u64], p: u64) -> Vec<u64> {
        let pi = p as i128;
        let n = x.len();
        let mut g = vec![0i128; n];
        for (e, &c) in &self.terms {
            for v in 0..n {
                if e[v] == 0 {
                    continue;
                }
                let mut t = c % pi * e[v] as i128 % pi;
                for (w, &pw) in e.iter().enumerate() {
                    let k = if w == v { pw - 1 } else { pw };
                    for _ in 0..k {
                        t = t * x[w] as i128 % pi;
                    }
                }
                g[v] = (g[v] + t) % pi;
            }
        }
        g.into_iter().map(|v| v as u64).collect()
    }
}

fn binomial(n: u32, k: u32) -> i128 {
    let mut r: i128 = 1;
    for i in 0..k {
        r = r * (n - i) as i128 / (i + 1) as i128;
    }
    r
}

#[derive(Clone, Debug)]
struct Level {
    poly: ModPoly,
    level: u32,
}

struct Walker {
    p: u64,
    n: usize,
    budget: u64,
    spent: u64,
}

impl Walker {
    fn new(p: u64, n: usize, budget: u64) -> Self {
        Walker {
            p,
            n,
            budget,
            spent: 0,
        }
    }

    fn spend(&mut self, what: &'static str, amount: f64) -> Result<()> {
        let total = self.spent as f64 + amount;
        check_budget(what, total, self.budget)?;
        self.spent = total as u64;
        Ok(())
    }

    /// Counts `t mod p^m` with each `poly_i(t) = 0 mod p^{level_i}`, levels `<= m`.
    fn count(&mut self, polys: Vec<Level>, m: u32) -> Result<BigUint> {
        let p = BigUint::from(self.p);
        let active: Vec<Level> = polys.into_iter().filter(|l| l.level > 0).collect();
        if active.is_empty() {
            return Ok(p.pow(self.n as u32 * m));
        }
        if m == 0 {
            return Ok(BigUint::one());
        }
        let (solutions, singular) = self.classify(&active)?;
        let r = active.len();
        let nonsingular = solutions - singular.len() as u64;
        let mut total = BigUint::zero();
        if nonsingular > 0 {
            let lost: u64 = active.iter().map(|l| (l.level - 1) as u64).sum();
            let free = (self.n as u64) * (m as u64 - 1);
            debug_assert!(r <= self.n && lost <= free);
            total += BigUint::from(nonsingular) * p.pow((free - lost) as u32);
        }
        for s in singular {
            let point: Vec<i128> = s.iter().map(|&v| v as i128).collect();
            let mut next = Vec::with_capacity(r);
            for l in &active {
                let modulus = (self.p as i128).pow(l.level);
                let sub = l.poly.substitute(&point, self.p as i128, modulus);
                match sub.content_split(self.p, l.level) {
                    Split::Vanishes => {}
                    Split::Reduced(poly, level) => next.push(Level { poly, level }),
                }
            }
            total += self.count(next, m - 1)?;
        }
        Ok(total)
    }

    /// Number of solutions modulo `p` and the explicit list of singular ones.
    fn classify(&mut self, active: &[Level]) -> Result<(u64, Vec<Vec<u64>>)> {
        let quadratic = active.iter().all(|l| l.poly.max_degree() <= 2);
        if quadratic {
            let total = self.solutions_mod_p(active)?;
            let singular = self.singular_quadratic(active)?;
            Ok((total, singular))
        } else {
            self.classify_enumerate(active)
        }
    }

    fn classify_enumerate(&mut self, active: &[Level]) -> Result<(u64, Vec<Vec<u64>>)> {
        let p = self.p;
        self.spend("enumerating residues mod p", (p as f64).powi(self.n as i32))?;
        let r = active.len();
        let mut x = vec![0u64; self.n];
        let mut total = 0u64;
        let mut singular = Vec::new();
        loop {
            if active.iter().all(|l| l.poly.eval_mod_p(&x, p) == 0) {
                total += 1;
                let jac: Vec<Vec<u64>> = active.iter().map(|l| l.poly.gradient_mod_p(&x, p)).collect();
                if rank_mod_p(&jac, p) < r {
                    singular.push(x.clone());
                }
            }
            let mut k = self.n;
            loop {
                if k == 0 {
                    return Ok((total, singular));
                }
                k -= 1;
                if x[k] + 1 < p {
                    x[k] += 1;
                    break;
                }
                x[k] = 0;
            }
        }
    }

    /// Solutions modulo `p` by convolving per-group residue histograms.
    fn solutions_mod_p(&mut self, active: &[Level]) -> Result<u64> {
        let p = self.p;
        let n = self.n;
        let r = active.len();
        let cells = (p as f64).powi(r as i32);
        // group variables that share a monomial in some active polynomial
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for l in active {
            for e in l.poly.terms.keys() {
                let vars: Vec<usize> = (0..n).filter(|&v| e[v] > 0).collect();
                for w in vars.windows(2) {
                    let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            let root = find(&mut parent, v);
            groups.entry(root).or_default().push(v);
        }
        let work: f64 = groups
            .values()
            .map(|g| (p as f64).powi(g.len() as i32) + cells * cells)
            .sum();
        self.spend("residue histograms mod p", work)?;
        let cells = cells as usize;

        let mut acc = vec![0u64; cells];
        let constant: Vec<u64> = active
            .iter()
            .map(|l| {
                l.poly
                    .terms
                    .get(&vec![0; n])
                    .map(|&c| (c.rem_euclid(p as i128)) as u64)
                    .unwrap_or(0)
            })
            .collect();
        acc[pack(&constant, p)] = 1;
        for vars in groups.values() {
            let local: Vec<ModPoly> = active
                .iter()
                .map(|l| ModPoly {
                    terms: l
                        .poly
                        .terms
                        .iter()
                        .filter(|(e, _)| vars.iter().any(|&v| e[v] > 0))
                        .map(|(e, &c)| (e.clone(), c))
                        .collect(),
                })
                .collect();
            let mut hist = vec![0u64; cells];
            let mut x = vec![0u64; n];
            loop {
                let values: Vec<u64> = local.iter().map(|q| q.eval_mod_p(&x, p)).collect();
                hist[pack(&values, p)] += 1;
                let mut k = vars.len();
                let mut done = true;
                while k > 0 {
                    k -= 1;
                    let v = vars[k];
                    if x[v] + 1 < p {
                        x[v] += 1;
                        done = false;
                        break;
                    }
                    x[v] = 0;
                }
                if done {
                    break;
                }
            }
            acc = convolve_mod_p(&acc, &hist, p, r);
        }
        Ok(acc[0])
    }

    /// Solutions modulo `p` where the Jacobian of quadratic polynomials drops rank.
    fn singular_quadratic(&mut self, active: &[Level]) -> Result<Vec<Vec<u64>>> {
        let p = self.p;
        let n = self.n;
        let r = active.len();
        let parts: Vec<(Vec<Vec<u64>>, Vec<u64>)> =
            active.iter().map(|l| l.poly.affine_gradient(n, p)).collect();
        let mut found: BTreeSet<Vec<u64>> = BTreeSet::new();
        for lambda in projective_points(r, p) {
            let mut m = vec![vec![0u64; n]; n];
            let mut rhs = vec![0u64; n];
            for (i, (h, b)) in parts.iter().enumerate() {
                let w = lambda[i];
                if w == 0 {
                    continue;
                }
                for a in 0..n {
                    for c in 0..n {
                        m[a][c] = (m[a][c] + w * h[a][c]) % p;
                    }
                    rhs[a] = (rhs[a] + p - w * b[a] % p) % p;
                }
            }
            let Some(sol) = solve_mod_p(&m, &rhs, p) else {
                continue;
            };
            let dim = sol.kernel.len();
            self.spend("singular locus mod p", (p as f64).powi(dim as i32))?;
            let mut coeffs = vec![0u64; dim];
            loop {
                let mut x = sol.particular.clone();
                for (c, basis) in coeffs.iter().zip(&sol.kernel) {
                    for (xi, bi) in x.iter_mut().zip(basis) {
                        *xi = (*xi + c * bi) % p;
                    }
                }
                if active.iter().all(|l| l.poly.eval_mod_p(&x, p) == 0) {
                    found.insert(x);
                }
                let mut k = dim;
                let mut done = true;
                while k > 0 {
                    k -= 1;
                    if coeffs[k] + 1 < p {
                        coeffs[k] += 1;
                        done = false;
                        break;
                    }
                    coeffs[k] = 0;
                }
                if done {
                    break;
                }
            }
        }
        Ok(found.into_iter().collect())
    }
}

fn pack(values: &[u64], p: u64) -> usize {
    values.iter().rev().fold(0usize, |acc, &v| acc * p as usize + v as usize)
}

fn unpack(mut idx: usize, p: u64, r: usize) -> Vec<u64> {
    let mut out = vec![0u64; r];
    for slot in out.iter_mut() {
        *slot = (idx % p as usize) as u64;
        idx /= p as usize;
    }
    out
}

fn convolve_mod_p(a: &[u64], b: &[u64], p: u64, r: usize) -> Vec<u64> {
    let mut out = vec![0u64; a.len()];
    let nz_b: Vec<(Vec<u64>, u64)> = b
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (unpack(i, p, r), c))
        .collect();
    for (i, &ca) in a.iter().enumerate() {
        if ca == 0 {
            continue;
        }
        let va = unpack(i, p, r);
        for (vb, cb) in &nz_b {
            let sum: Vec<u64> = va.iter().zip(vb).map(|(x, y)| (x + y) % p).collect();
            out[pack(&sum, p)] += ca * cb;
        }
    }
    out
}

/// Representatives of `P^{r-1}(F_p)`: first nonzero coordinate equal to 1.
fn projective_points(r: usize, p: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    for lead in 0..r {
        let tail = r - lead - 1;
        let count = (p as usize).pow(tail as u32);
        for idx in 0..count {
            let mut v = vec![0u64; r];
            v[lead] = 1;
            let digits = unpack(idx, p, tail);
            v[lead + 1..].copy_from_slice(&digits);
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_system;
    use proptest::prelude::*;

    fn both(text: &str, p: u64, k: u32) -> (BigUint, BigUint) {
        let sys = parse_system(text).unwrap();
        let mut req = ModularCountRequest::new(&sys, p, k);
        let rec = count_mod(&req, 1 << 40).unwrap();
        req.method = ModularMethod::Enumerate;
        let en = count_mod(&req, 1 << 40).unwrap();
        (rec, en)
    }

    #[test]
    fn cone_mod_two() {
        // t^2 = t mod 2, so the count is #{x1 + x2 + x3 = 0 mod 2} = 4
        let (a, b) = both(r#"{"forms": ["x1^2 + x2^2 - x3^2"]}"#, 2, 1);
        assert_eq!(a, BigUint::from(4u32));
        assert_eq!(b, a);
    }

    #[test]
    fn linear_form_has_free_variables() {
        for (p, k) in [(2u64, 3u32), (3, 2), (5, 2)] {
            let (a, b) = both(r#"{"n": 3, "forms": ["x1"]}"#, p, k);
            assert_eq!(a, BigUint::from(p).pow(2 * k));
            assert_eq!(b, a);
        }
    }

    #[test]
    fn zero_solution_always_counted() {
        let (a, _) = both(r#"{"forms": ["x1^2 + x2^2 + x3^2"]}"#, 7, 1);
        assert!(a >= BigUint::one());
    }

    #[test]
    fn recursion_matches_enumeration_on_fixtures() {
        let q = r#"{"forms": ["x1^2 + x2^2 + x3^2 + x4^2 - x5^2"]}"#;
        for (p, k) in [(2u64, 1u32), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3), (5, 2)] {
            let (a, b) = both(q, p, k);
            assert_eq!(a, b, "p={p} k={k}");
        }
        let pair = r#"{"forms": ["x1^2 + x2^2", "x3^2 + x4^2"]}"#;
        for (p, k) in [(2u64, 3u32), (3, 3), (5, 2)] {
            let (a, b) = both(pair, p, k);
            assert_eq!(a, b, "p={p} k={k}");
        }
        let cubic = r#"{"forms": ["x1^3 + 2*x2^3 + 4*x3^3"]}"#;
        for (p, k) in [(2u64, 4u32), (3, 3), (7, 2)] {
            let (a, b) = both(cubic, p, k);
            assert_eq!(a, b, "p={p} k={k}");
        }
    }

    #[test]
    fn frozen_density_counts() {
        // exact counts of the five-variable diagonal form, cross-checked by enumeration
        let sys = parse_system(r#"{"forms": ["x1^2 + x2^2 + x3^2 + x4^2 - x5^2"]}"#).unwrap();
        let c = |p, k| count_mod(&ModularCountRequest::new(&sys, p, k), 1 << 40).unwrap();
        assert_eq!(c(3, 2), BigUint::from(6723u32)); // 1.024691 * 3^8
        assert_eq!(c(2, 2), BigUint::from(192u32)); // 0.75 * 2^8
        assert_eq!(c(5, 4), BigUint::from(5u32).pow(16) * BigUint::from(1006451200u64) / BigUint::from(1_000_000_000u64));
    }

    #[test]
    fn witness_lifts_are_uniform_for_nonsingular_class() {
        let sys = parse_system(r#"{"forms": ["x1^2 + x2^2 + x3^2 + x4^2 - x5^2"]}"#).unwrap();
        // (1,0,0,0,1) is a nonsingular zero modulo every odd prime
        for p in [3u64, 5] {
            for k in 1..=3 {
                let lifts = witness_class_lifts(&sys, p, &[1, 0, 0, 0, 1], 1, k, 1 << 40).unwrap();
                assert_eq!(lifts, BigUint::from(p).pow(4 * (k - 1)));
            }
        }
        // brute force check of one case
        let mut brute = 0u64;
        let m = 9i64;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        for e in 0..m {
                            let t = [a, b, c, d, e];
                            let cls = [1, 0, 0, 0, 1];
                            if t.iter().zip(&cls).any(|(x, y)| (x - y).rem_euclid(3) != 0) {
                                continue;
                            }
                            if (a * a + b * b + c * c + d * d - e * e).rem_euclid(m) == 0 {
                                brute += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(BigUint::from(brute), BigUint::from(81u32));
    }

    #[test]
    fn rejects_bad_requests() {
        let sys = parse_system(r#"{"forms": ["x1^2 - x2^2"]}"#).unwrap();
        assert!(count_mod(&ModularCountRequest::new(&sys, 4, 1), 1000).is_err());
        assert!(count_mod(&ModularCountRequest::new(&sys, 3, 0), 1000).is_err());
        let mut req = ModularCountRequest::new(&sys, 101, 5);
        req.method = ModularMethod::Enumerate;
        assert!(matches!(count_mod(&req, 1000), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn projective_point_count() {
        assert_eq!(projective_points(1, 5).len(), 1);
        assert_eq!(projective_points(2, 5).len(), 6);
        assert_eq!(projective_points(3, 3).len(), 13);
    }

    fn small_system() -> impl Strategy<Value = String> {
        let form = prop::collection::vec(((0usize..3, 0usize..3), -4i64..=4, 0i64..=2), 1..5);
        prop::collection::vec(form, 1..=2).prop_map(|forms| {
            let rendered: Vec<String> = forms
                .into_iter()
                .map(|terms| {
                    let mut s = String::from("0");
                    for ((a, b), c, lin) in terms {
                        s.push_str(&format!(" + {c}*x{}*x{} + {lin}*x{}", a + 1, b + 1, b + 1));
                    }
                    format!("\"{}\"", s)
                })
                .collect();
            format!(r#"{{"n": 3, "d": 2, "forms": [{}]}}"#, rendered.join(","))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn recursion_agrees_with_enumeration(text in small_system(), pk in prop::sample::select(vec![(2u64, 1u32), (2, 3), (3, 2), (5, 1), (5, 2)])) {
            let Ok(sys) = parse_system(&text) else { return Ok(()); };
            let mut req = ModularCountRequest::new(&sys, pk.0, pk.1);
            let rec = count_mod(&req, 1 << 40).unwrap();
            req.method = ModularMethod::Enumerate;
            prop_assert_eq!(rec, count_mod(&req, 1 << 40).unwrap());
        }

        #[test]
        fn each_level_reduces_to_the_previous(text in small_system(), p in prop::sample::select(vec![2u64, 3, 5])) {
            let Ok(sys) = parse_system(&text) else { return Ok(()); };
            let c1 = count_mod(&ModularCountRequest::new(&sys, p, 1), 1 << 40).unwrap();
            let c2 = count_mod(&ModularCountRequest::new(&sys, p, 2), 1 << 40).unwrap();
            prop_assert!(c2 <= BigUint::from(p).pow(3) * c1);
        }
    }
}
