//! Exact linear algebra over the integers, rationals and prime fields, and
//! univariate rational polynomials with Sturm-sequence root counting.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Rank over the rationals of an integer matrix, by fraction-free elimination.
pub fn rank(matrix: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = matrix.to_vec();
    bareiss_rank(&mut m)
}

fn bareiss_rank(m: &mut [Vec<BigInt>]) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut prev = BigInt::one();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pivot) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pivot);
        for i in r + 1..rows {
            for j in c + 1..cols {
                let v = (&m[r][c] * &m[i][j] - &m[i][c] * &m[r][j]) / &prev;
                m[i][j] = v;
            }
            m[i][c] = BigInt::zero();
        }
        prev = m[r][c].clone();
        r += 1;
    }
    r
}

/// Determinant of a square integer matrix (Bareiss).
pub fn determinant(matrix: &[Vec<BigInt>]) -> BigInt {
    let n = matrix.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut m: Vec<Vec<BigInt>> = matrix.to_vec();
    let mut prev = BigInt::one();
    let mut sign = 1;
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            let Some(swap) = (k + 1..n).find(|&i| !m[i][k].is_zero()) else {
                return BigInt::zero();
            };
            m.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&m[k][k] * &m[i][j] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    let det = m[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

/// Rank over the rationals of a rational matrix.
pub fn rank_rational(matrix: &[Vec<BigRational>]) -> usize {
    let scaled: Vec<Vec<BigInt>> = matrix.iter().map(|row| clear_denominators(row)).collect();
    rank(&scaled)
}

/// Integer multiple of `row` with the same direction.
pub fn clear_denominators(row: &[BigRational]) -> Vec<BigInt> {
    let lcm = row
        .iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    row.iter()
        .map(|v| v.numer() * (&lcm / v.denom()))
        .collect()
}

pub fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = base as u128 % m;
    let mut acc: u128 = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

/// Inverse modulo a prime `p` of a nonzero residue.
pub fn inv_mod(a: u64, p: u64) -> u64 {
    mod_pow(a % p, p - 2, p)
}

/// Rank over `F_p` of a matrix of residues.
pub fn rank_mod_p(matrix: &[Vec<u64>], p: u64) -> usize {
    let mut m: Vec<Vec<u64>> = matrix
        .iter()
        .map(|row| row.iter().map(|v| v % p).collect())
        .collect();
    echelon_mod_p(&mut m, p).len()
}

/// Row-reduces in place to reduced echelon form and returns pivot columns.
fn echelon_mod_p(m: &mut [Vec<u64>], p: u64) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(piv) = (r..rows).find(|&i| m[i][c] != 0) else {
            continue;
        };
        m.swap(r, piv);
        let inv = inv_mod(m[r][c], p);
        for v in m[r].iter_mut() {
            *v = (*v as u128 * inv as u128 % p as u128) as u64;
        }
        for i in 0..rows {
            if i != r && m[i][c] != 0 {
                let factor = m[i][c];
                for j in 0..cols {
                    let sub = (factor as u128 * m[r][j] as u128 % p as u128) as u64;
                    m[i][j] = (m[i][j] + p - sub) % p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Solution set of `A x = b` over `F_p`: a particular solution and a kernel basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineSolution {
    pub particular: Vec<u64>,
    pub kernel: Vec<Vec<u64>>,
}

pub fn solve_mod_p(a: &[Vec<u64>], b: &[u64], p: u64) -> Option<AffineSolution> {
    let cols = a.first().map(|r| r.len()).unwrap_or(0);
    let mut aug: Vec<Vec<u64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r: Vec<u64> = row.iter().map(|v| v % p).collect();
            r.push(rhs % p);
            r
        })
        .collect();
    let pivots = echelon_mod_p(&mut aug, p);
    if pivots.contains(&cols) {
        return None;
    }
    let mut particular = vec![0u64; cols];
    for (r, &c) in pivots.iter().enumerate() {
        particular[c] = aug[r][cols];
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let kernel = free
        .iter()
        .map(|&f| {
            let mut v = vec![0u64; cols];
            v[f] = 1;
            for (r, &c) in pivots.iter().enumerate() {
                v[c] = (p - aug[r][f]) % p;
            }
            v
        })
        .collect();
    Some(AffineSolution { particular, kernel })
}

/// Dense univariate polynomial over the rationals, lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_integers(coeffs: &[i64]) -> Self {
        Poly::new(
            coeffs
                .iter()
                .map(|&c| BigRational::from_integer(c.into()))
                .collect(),
        )
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&BigRational> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        use num_traits::ToPrimitive;
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * BigRational::from_integer(k.into()))
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.coeffs.len().max(other.coeffs.len());
        let zero = BigRational::zero();
        Poly::new(
            (0..len)
                .map(|i| self.coeffs.get(i).unwrap_or(&zero) + other.coeffs.get(i).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = &out[i + j] + a * b;
            }
        }
        Poly::new(out)
    }

    /// Inverse modulo `modulus`, when the two are coprime.
    pub fn inverse_mod(&self, modulus: &Poly) -> Option<Poly> {
        let (mut r0, mut r1) = (modulus.clone(), self.div_rem(modulus).1);
        let (mut s0, mut s1) = (Poly::zero(), Poly::new(vec![BigRational::one()]));
        while !r1.is_zero() {
            let (q, r) = r0.div_rem(&r1);
            let s = s0.sub(&q.mul(&s1));
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s;
        }
        if r0.degree() != Some(0) {
            return None;
        }
        let c = r0.coeffs[0].clone();
        Some(Poly::new(s0.coeffs.iter().map(|x| x / &c).collect()).div_rem(modulus).1)
    }

    pub fn neg(&self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| -c).collect())
    }

    /// Quotient and remainder. Panics on division by zero.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead = divisor.coeffs[dd].clone();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![BigRational::zero(); self.coeffs.len().saturating_sub(dd)];
        while rem.len() > dd && !rem.is_empty() {
            let k = rem.len() - 1 - dd;
            let factor = rem.last().unwrap() / &lead;
            for (i, c) in divisor.coeffs.iter().enumerate() {
                rem[k + i] = &rem[k + i] - &factor * c;
            }
            quot[k] = factor;
            rem.pop();
            while rem.last().is_some_and(|c| c.is_zero()) {
                rem.pop();
            }
        }
        (Poly::new(quot), Poly::new(rem))
    }

    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some(l) => {
                let l = l.clone();
                Poly::new(self.coeffs.iter().map(|c| c / &l).collect())
            }
        }
    }

    /// Monic greatest common divisor; `gcd(0, 0) = 0`.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn squarefree(&self) -> Poly {
        if self.degree().unwrap_or(0) == 0 {
            return self.monic();
        }
        let g = self.gcd(&self.derivative());
        self.div_rem(&g).0.monic()
    }

    /// Integer polynomial with the same roots and coprime coefficients.
    pub fn primitive_integer(&self) -> Vec<BigInt> {
        let ints = clear_denominators(&self.coeffs);
        let g = ints.iter().fold(BigInt::zero(), |acc, c| acc.gcd(c));
        if g.is_zero() {
            return ints;
        }
        let mut out: Vec<BigInt> = ints.into_iter().map(|c| c / &g).collect();
        if out.last().is_some_and(|c| c.is_negative()) {
            out.iter_mut().for_each(|c| *c = -&*c);
        }
        out
    }

    /// Sturm sequence of the squarefree part.
    pub fn sturm_sequence(&self) -> Vec<Poly> {
        let p0 = self.squarefree();
        let mut seq = vec![p0.clone(), p0.derivative()];
        loop {
            let n = seq.len();
            if seq[n - 1].is_zero() {
                seq.pop();
                break;
            }
            let (_, r) = seq[n - 2].div_rem(&seq[n - 1]);
            if r.is_zero() {
                break;
            }
            seq.push(r.neg());
        }
        seq
    }

    /// Number of distinct real roots.
    pub fn count_real_roots(&self) -> usize {
        if self.degree().unwrap_or(0) == 0 {
            return 0;
        }
        let seq = self.sturm_sequence();
        let at_neg = variations(seq.iter().map(|p| sign_at_neg_infinity(p)));
        let at_pos = variations(seq.iter().map(|p| sign_at_pos_infinity(p)));
        at_neg - at_pos
    }

    /// Number of distinct roots in `(a, b]`.
    pub fn count_roots_in(&self, seq: &[Poly], a: &BigRational, b: &BigRational) -> usize {
        let va = variations(seq.iter().map(|p| sign(&p.eval(a))));
        let vb = variations(seq.iter().map(|p| sign(&p.eval(b))));
        va.saturating_sub(vb)
    }

    /// Disjoint intervals `(a, b]`, each holding exactly one real root.
    pub fn isolate_real_roots(&self) -> Vec<(BigRational, BigRational)> {
        if self.degree().unwrap_or(0) == 0 {
            return Vec::new();
        }
        let seq = self.sturm_sequence();
        let bound = self.cauchy_bound();
        let mut out = Vec::new();
        let mut stack = vec![(-bound.clone(), bound)];
        while let Some((a, b)) = stack.pop() {
            let k = self.count_roots_in(&seq, &a, &b);
            if k == 0 {
                continue;
            }
            if k == 1 {
                out.push((a, b));
                continue;
            }
            let mid = (&a + &b) / BigRational::from_integer(2.into());
            stack.push((mid.clone(), b));
            stack.push((a, mid));
        }
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out
    }

    /// Shrinks an isolating interval `(a, b]` until its width is below `width`.
    pub fn refine_root(
        &self,
        seq: &[Poly],
        mut a: BigRational,
        mut b: BigRational,
        width: &BigRational,
    ) -> (BigRational, BigRational) {
        let two = BigRational::from_integer(2.into());
        while &(&b - &a) >= width {
            let mid = (&a + &b) / &two;
            if self.count_roots_in(seq, &a, &mid) == 1 {
                b = mid;
            } else {
                a = mid;
            }
        }
        (a, b)
    }

    /// `1 + max |c_i / c_lead|`, a bound on the modulus of every root.
    pub fn cauchy_bound(&self) -> BigRational {
        let lead = self.leading().expect("bound of the zero polynomial").abs();
        let m = self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| c.abs() / &lead)
            .fold(BigRational::zero(), |a, b| if b > a { b } else { a });
        m + BigRational::one()
    }

    /// Rational roots of the polynomial, found among the isolated real roots.
    pub fn rational_roots(&self) -> Vec<BigRational> {
        let sf = self.squarefree();
        if sf.degree().unwrap_or(0) == 0 {
            return Vec::new();
        }
        let ints = Poly::new(
            sf.primitive_integer()
                .into_iter()
                .map(BigRational::from_integer)
                .collect(),
        );
        let lead = ints.leading().unwrap().abs();
        let seq = ints.sturm_sequence();
        let width = BigRational::one() / (&lead * BigRational::from_integer(2.into()));
        let mut roots = Vec::new();
        for (a, b) in ints.isolate_real_roots() {
            if ints.eval(&b).is_zero() {
                roots.push(b);
                continue;
            }
            let (a, b) = ints.refine_root(&seq, a, b, &width);
            // A rational root has denominator dividing the leading coefficient.
            let mid = (&a + &b) / BigRational::from_integer(2.into());
            let scaled = (&mid * &lead).round();
            let candidate = scaled / &lead;
            if ints.eval(&candidate).is_zero() {
                roots.push(candidate);
            }
        }
        roots
    }

    /// Newton interpolation through `(x_i, y_i)` with distinct nodes.
    pub fn interpolate(points: &[(BigRational, BigRational)]) -> Poly {
        let n = points.len();
        let xs: Vec<&BigRational> = points.iter().map(|p| &p.0).collect();
        let mut table: Vec<BigRational> = points.iter().map(|p| p.1.clone()).collect();
        for level in 1..n {
            for i in (level..n).rev() {
                table[i] = (&table[i] - &table[i - 1]) / (xs[i] - xs[i - level]);
            }
        }
        let mut result = Poly::zero();
        for i in (0..n).rev() {
            // result = result * (x - x_i) + table[i]
            let mut next = vec![BigRational::zero(); result.coeffs.len() + 1];
            for (k, c) in result.coeffs.iter().enumerate() {
                next[k + 1] = &next[k + 1] + c;
                next[k] = &next[k] - c * xs[i];
            }
            next[0] = &next[0] + &table[i];
            result = Poly::new(next);
        }
        result
    }
}

fn sign(v: &BigRational) -> i32 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

fn sign_at_pos_infinity(p: &Poly) -> i32 {
    p.leading().map(sign).unwrap_or(0)
}

fn sign_at_neg_infinity(p: &Poly) -> i32 {
    let s = sign_at_pos_infinity(p);
    if p.degree().unwrap_or(0) % 2 == 1 {
        -s
    } else {
        s
    }
}

fn variations(signs: impl Iterator<Item = i32>) -> usize {
    let mut last = 0;
    let mut count = 0;
    for s in signs {
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn big(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
            .collect()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn ranks_and_determinants() {
        assert_eq!(rank(&big(&[&[1, 2], &[2, 4]])), 1);
        assert_eq!(rank(&big(&[&[0, 0], &[0, 0]])), 0);
        assert_eq!(rank(&big(&[&[0, 1, 2], &[1, 0, 3], &[1, 1, 5]])), 2);
        assert_eq!(determinant(&big(&[&[2, 1], &[1, 0]])), BigInt::from(-1));
        assert_eq!(
            determinant(&big(&[&[0, 2, 1], &[1, 0, 0], &[3, 1, 1]])),
            BigInt::from(-1)
        );
        assert_eq!(determinant(&big(&[&[1, 2], &[2, 4]])), BigInt::zero());
    }

    #[test]
    fn modular_solve() {
        // x + y = 1, 2x + 2y = 2 over F_5: one-dimensional solution set.
        let sol = solve_mod_p(&[vec![1, 1], vec![2, 2]], &[1, 2], 5).unwrap();
        assert_eq!(sol.kernel.len(), 1);
        assert_eq!((sol.particular[0] + sol.particular[1]) % 5, 1);
        assert!(solve_mod_p(&[vec![1, 1], vec![1, 1]], &[0, 1], 5).is_none());
        assert_eq!(rank_mod_p(&[vec![2, 4], vec![1, 2]], 7), 1);
        assert_eq!(rank_mod_p(&[vec![2, 0], vec![0, 2]], 2), 0);
        assert_eq!(inv_mod(3, 7), 5);
    }

    #[test]
    fn polynomial_arithmetic() {
        let p = Poly::from_integers(&[-2, 0, 1]); // x^2 - 2
        let r = Poly::from_integers(&[-1, 1]); // x - 1
        let (quot, rem) = p.div_rem(&r);
        assert_eq!(quot, Poly::from_integers(&[1, 1]));
        assert_eq!(rem, Poly::from_integers(&[-1]));
        let prod = Poly::from_integers(&[2, -3, 1]); // (x-1)(x-2)
        assert_eq!(prod.gcd(&Poly::from_integers(&[-1, 1])), Poly::from_integers(&[-1, 1]));
        assert_eq!(p.count_real_roots(), 2);
        assert_eq!(Poly::from_integers(&[1, 0, 1]).count_real_roots(), 0);
        assert_eq!(Poly::from_integers(&[0, 0, 1]).count_real_roots(), 1);
        assert!(p.rational_roots().is_empty());
        assert_eq!(
            Poly::from_integers(&[-3, 2]).rational_roots(),
            vec![q(3, 2)]
        );
        let cubic = Poly::from_integers(&[6, -11, 6, 0]);
        assert_eq!(cubic.degree(), Some(2));
    }

    #[test]
    fn rational_roots_mixed_with_irrational() {
        // (3x - 1)(x^2 - 2)(2x + 5)
        let a = Poly::from_integers(&[-1, 3]);
        let b = Poly::from_integers(&[-2, 0, 1]);
        let c = Poly::from_integers(&[5, 2]);
        let prod = mul(&mul(&a, &b), &c);
        assert_eq!(prod.count_real_roots(), 4);
        assert_eq!(prod.rational_roots(), vec![q(-5, 2), q(1, 3)]);
    }

    fn mul(a: &Poly, b: &Poly) -> Poly {
        a.mul(b)
    }

    #[test]
    fn modular_inverse() {
        let h = Poly::from_integers(&[-2, 0, 1]);
        let a = Poly::from_integers(&[1, 1]);
        let inv = a.inverse_mod(&h).unwrap();
        assert_eq!(a.mul(&inv).div_rem(&h).1, Poly::from_integers(&[1]));
        assert!(Poly::from_integers(&[-1, 1]).inverse_mod(&Poly::from_integers(&[-1, 0, 1])).is_none());
        assert_eq!(a.add(&h).sub(&h), a);
    }

    #[test]
    fn interpolation_recovers_polynomial() {
        let p = Poly::new(vec![q(1, 2), q(-3, 1), q(0, 1), q(7, 5)]);
        let pts: Vec<_> = (0..4)
            .map(|k| {
                let x = BigRational::from_integer(k.into());
                let y = p.eval(&x);
                (x, y)
            })
            .collect();
        assert_eq!(Poly::interpolate(&pts), p);
    }

    proptest! {
        #[test]
        fn root_count_matches_constructed_roots(roots in prop::collection::btree_set(-20i64..=20, 1..5)) {
            let mut p = Poly::from_integers(&[1]);
            for &r in &roots {
                p = mul(&p, &Poly::from_integers(&[-r, 1]));
            }
            // doubled root and an irreducible quadratic factor
            p = mul(&p, &Poly::from_integers(&[-*roots.iter().next().unwrap(), 1]));
            p = mul(&p, &Poly::from_integers(&[1, 0, 1]));
            prop_assert_eq!(p.count_real_roots(), roots.len());
            let expect: Vec<BigRational> = roots.iter().map(|&r| BigRational::from_integer(r.into())).collect();
            prop_assert_eq!(p.rational_roots(), expect);
        }

        #[test]
        fn modular_rank_matches_rational_rank_for_large_prime(
            entries in prop::collection::vec(-3i64..=3, 12)
        ) {
            let m: Vec<Vec<i64>> = entries.chunks(4).map(|c| c.to_vec()).collect();
            let p = 1_000_003u64;
            let residues: Vec<Vec<u64>> = m
                .iter()
                .map(|r| r.iter().map(|&v| v.rem_euclid(p as i64) as u64).collect())
                .collect();
            let bigm: Vec<Vec<BigInt>> = m.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect();
            prop_assert_eq!(rank_mod_p(&residues, p), rank(&bigm));
        }
    }
}
