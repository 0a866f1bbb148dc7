//! Sparse polynomials in `n` variables with a declared degree, and systems of them.
//!
//! A [`Form`] stores its monomials as a sorted map from exponent vectors to
//! nonzero coefficients. The declared degree bounds the total degree of every
//! monomial; the form is homogeneous when every monomial attains it.

mod document;
mod expr;
pub(crate) mod region;

pub use document::{parse_system, SystemDocument, TermSpec};
pub use expr::parse_expression;
pub use region::BoxRegion;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::exact;

/// Coefficient ring for [`Form`].
pub trait Coefficient: Clone + PartialEq + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn checked_add(&self, other: &Self) -> Option<Self>;
    fn checked_mul(&self, factor: &Self) -> Option<Self>;
    fn to_f64(&self) -> f64;
}

impl Coefficient for i64 {
    fn zero() -> Self {
        0
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn checked_add(&self, other: &Self) -> Option<Self> {
        i64::checked_add(*self, *other)
    }
    fn checked_mul(&self, factor: &Self) -> Option<Self> {
        i64::checked_mul(*self, *factor)
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn checked_add(&self, other: &Self) -> Option<Self> {
        Some(self + other)
    }
    fn checked_mul(&self, factor: &Self) -> Option<Self> {
        Some(self * factor)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coefficient for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn checked_add(&self, other: &Self) -> Option<Self> {
        Some(self + other)
    }
    fn checked_mul(&self, factor: &Self) -> Option<Self> {
        Some(self * factor)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Scalars that forms can be evaluated in. `None` signals overflow.
pub trait Scalar: Copy + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(self, other: Self) -> Option<Self>;
    fn mul(self, other: Self) -> Option<Self>;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(self, other: Self) -> Option<Self> {
        Some(self + other)
    }
    fn mul(self, other: Self) -> Option<Self> {
        Some(self * other)
    }
}

impl Scalar for i128 {
    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn add(self, other: Self) -> Option<Self> {
        self.checked_add(other)
    }
    fn mul(self, other: Self) -> Option<Self> {
        self.checked_mul(other)
    }
}

/// A polynomial in `vars` variables whose monomials have total degree at most `degree`.
#[derive(Clone, PartialEq)]
pub struct Form<C> {
    vars: usize,
    degree: u32,
    terms: BTreeMap<Vec<u32>, C>,
}

pub type IntegerForm = Form<i64>;
pub type RealForm = Form<f64>;
pub type RationalForm = Form<BigRational>;

impl<C: Coefficient> Form<C> {
    /// Builds a form, merging repeated exponent vectors and dropping zero coefficients.
    pub fn new(
        vars: usize,
        degree: u32,
        terms: impl IntoIterator<Item = (Vec<u32>, C)>,
    ) -> Result<Self> {
        if vars == 0 {
            return Err(Error::Malformed("a form needs at least one variable".into()));
        }
        let mut map: BTreeMap<Vec<u32>, C> = BTreeMap::new();
        for (exps, coeff) in terms {
            if exps.len() != vars {
                return Err(Error::DimensionMismatch {
                    expected: vars,
                    found: exps.len(),
                });
            }
            let total: u32 = exps.iter().sum();
            if total > degree {
                return Err(Error::Malformed(format!(
                    "monomial {exps:?} has total degree {total} above declared degree {degree}"
                )));
            }
            match map.get_mut(&exps) {
                Some(existing) => {
                    *existing = existing
                        .checked_add(&coeff)
                        .ok_or(Error::Overflow("merging coefficients"))?
                }
                None => {
                    map.insert(exps, coeff);
                }
            }
        }
        map.retain(|_, c| !c.is_zero());
        Ok(Form {
            vars,
            degree,
            terms: map,
        })
    }

    pub fn zero(vars: usize, degree: u32) -> Self {
        Form {
            vars,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, C> {
        &self.terms
    }

    pub fn coefficient(&self, exps: &[u32]) -> Option<&C> {
        self.terms.get(exps)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every stored monomial has total degree equal to the declared degree.
    pub fn is_homogeneous(&self) -> bool {
        self.terms
            .keys()
            .all(|e| e.iter().sum::<u32>() == self.degree)
    }

    /// The degree-`d` part. Zero when the form has no top-degree monomial.
    pub fn leading_part(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e.iter().sum::<u32>() == self.degree)
            .map(|(e, c)| (e.clone(), c.clone()))
            .collect();
        Form {
            vars: self.vars,
            degree: self.degree,
            terms,
        }
    }

    pub fn map_coefficients<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Form<D> {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let v = f(c);
            if !v.is_zero() {
                terms.insert(e.clone(), v);
            }
        }
        Form {
            vars: self.vars,
            degree: self.degree,
            terms,
        }
    }

    pub fn to_real(&self) -> RealForm {
        self.map_coefficients(|c| c.to_f64())
    }

    /// Coefficientwise sum. Both forms must share `vars` and `degree`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            match terms.get_mut(e) {
                Some(existing) => {
                    *existing = existing
                        .checked_add(c)
                        .ok_or(Error::Overflow("adding forms"))?
                }
                None => {
                    terms.insert(e.clone(), c.clone());
                }
            }
        }
        terms.retain(|_, c| !c.is_zero());
        Ok(Form {
            vars: self.vars,
            degree: self.degree,
            terms,
        })
    }

    pub fn scale(&self, factor: &C) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let v = c
                .checked_mul(factor)
                .ok_or(Error::Overflow("scaling a form"))?;
            if !v.is_zero() {
                terms.insert(e.clone(), v);
            }
        }
        Ok(Form {
            vars: self.vars,
            degree: self.degree,
            terms,
        })
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.vars != other.vars {
            return Err(Error::DimensionMismatch {
                expected: self.vars,
                found: other.vars,
            });
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                required: self.degree,
                found: other.degree,
            });
        }
        Ok(())
    }

    /// `(1/d!) * max |∂^d f / ∂x_{j1}..∂x_{jd}|` over the top-degree part.
    ///
    /// For the monomial `c * x^e` every matching d-th partial derivative equals
    /// `c * prod(e_v!)`, so the maximum runs over monomials.
    pub fn sup_norm_leading(&self) -> f64 {
        let d = self.degree;
        let d_fact = factorial(d) as f64;
        self.terms
            .iter()
            .filter(|(e, _)| e.iter().sum::<u32>() == d)
            .map(|(e, c)| c.to_f64().abs() * multi_factorial(e) as f64 / d_fact)
            .fold(0.0, f64::max)
    }

    /// Evaluates in any [`Scalar`] given a coefficient conversion.
    pub fn evaluate_with<T: Scalar>(&self, x: &[T], coeff: impl Fn(&C) -> T) -> Result<T> {
        self.check_len(x.len())?;
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            let mut term = coeff(c);
            for (v, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    term = term.mul(x[v]).ok_or(Error::Overflow("evaluating a form"))?;
                }
            }
            acc = acc.add(term).ok_or(Error::Overflow("evaluating a form"))?;
        }
        Ok(acc)
    }

    pub fn evaluate_f64(&self, x: &[f64]) -> Result<f64> {
        self.evaluate_with(x, |c| c.to_f64())
    }

    /// Component `i` is the contraction of the d-th derivative tensor of the
    /// leading part with `vectors[0] ⊗ .. ⊗ vectors[d-2]` in all but the last slot.
    pub fn multilinear_gradient_with<T: Scalar>(
        &self,
        vectors: &[&[T]],
        coeff: impl Fn(&C, u64) -> Option<T>,
    ) -> Result<Vec<T>> {
        let d = self.degree as usize;
        if d == 0 || vectors.len() != d - 1 {
            return Err(Error::InvalidParameter(format!(
                "multilinear gradient of a degree {d} form takes {} vectors, got {}",
                d.saturating_sub(1),
                vectors.len()
            )));
        }
        for v in vectors {
            self.check_len(v.len())?;
        }
        let mut out = vec![T::zero(); self.vars];
        for (e, c) in &self.terms {
            if e.iter().sum::<u32>() as usize != d {
                continue;
            }
            let weight = coeff(c, multi_factorial(e)).ok_or(Error::Overflow("scaling a monomial"))?;
            for i in 0..self.vars {
                if e[i] == 0 {
                    continue;
                }
                let mut rest = e.clone();
                rest[i] -= 1;
                let s = arrangement_sum(&mut rest, vectors, 0)
                    .ok_or(Error::Overflow("contracting a derivative tensor"))?;
                let contrib = weight.mul(s).ok_or(Error::Overflow("contracting a derivative tensor"))?;
                out[i] = out[i].add(contrib).ok_or(Error::Overflow("contracting a derivative tensor"))?;
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.vars {
            Err(Error::DimensionMismatch {
                expected: self.vars,
                found: len,
            })
        } else {
            Ok(())
        }
    }
}

/// Sum over distinct assignments of the multiset `rest` to the slots
/// `slot..`, of the product of the chosen vector entries.
fn arrangement_sum<T: Scalar>(rest: &mut [u32], vectors: &[&[T]], slot: usize) -> Option<T> {
    if slot == vectors.len() {
        return Some(T::one());
    }
    let mut acc = T::zero();
    for v in 0..rest.len() {
        if rest[v] == 0 {
            continue;
        }
        let x = vectors[slot][v];
        rest[v] -= 1;
        let tail = arrangement_sum(rest, vectors, slot + 1);
        rest[v] += 1;
        acc = acc.add(x.mul(tail?)?)?;
    }
    Some(acc)
}

pub(crate) fn factorial(k: u32) -> u64 {
    (1..=k as u64).product()
}

pub(crate) fn multi_factorial(e: &[u32]) -> u64 {
    e.iter().map(|&k| factorial(k)).product()
}

impl IntegerForm {
    /// Exact value at an integer point; overflow of `i128` is an error.
    pub fn evaluate(&self, x: &[i64]) -> Result<i128> {
        self.check_len(x.len())?;
        let xs: Vec<i128> = x.iter().map(|&v| v as i128).collect();
        self.evaluate_with(&xs, |&c| c as i128)
    }

    pub fn evaluate_big(&self, x: &[BigInt]) -> Result<BigInt> {
        self.check_len(x.len())?;
        let mut acc = BigInt::zero();
        for (e, &c) in &self.terms {
            let mut term = BigInt::from(c);
            for (v, &p) in e.iter().enumerate() {
                term *= x[v].pow(p);
            }
            acc += term;
        }
        Ok(acc)
    }

    pub fn to_rational(&self) -> RationalForm {
        self.map_coefficients(|&c| BigRational::from_integer(BigInt::from(c)))
    }

    /// Exact multilinear gradient at integer vectors.
    pub fn multilinear_gradient_exact(&self, vectors: &[&[i64]]) -> Result<Vec<i128>> {
        let wide: Vec<Vec<i128>> = vectors
            .iter()
            .map(|v| v.iter().map(|&x| x as i128).collect())
            .collect();
        let refs: Vec<&[i128]> = wide.iter().map(|v| v.as_slice()).collect();
        self.multilinear_gradient_with(&refs, |&c, w| (c as i128).checked_mul(w as i128))
    }

    /// Partial derivative with respect to variable `var`, as a form of degree `d - 1`.
    pub fn partial(&self, var: usize) -> Result<IntegerForm> {
        if var >= self.vars {
            return Err(Error::DimensionMismatch {
                expected: self.vars,
                found: var + 1,
            });
        }
        let mut terms = Vec::new();
        for (e, &c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut de = e.clone();
            let k = de[var] as i64;
            de[var] -= 1;
            let coeff = c
                .checked_mul(k)
                .ok_or(Error::Overflow("differentiating a form"))?;
            terms.push((de, coeff));
        }
        Form::new(self.vars, self.degree.saturating_sub(1), terms)
    }

    /// Upper bound for `|f(x)|` over `|x_v| <= max_abs[v]`.
    pub fn abs_bound(&self, max_abs: &[u64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| {
                let mut t = (c as f64).abs();
                for (v, &p) in e.iter().enumerate() {
                    t *= (max_abs[v] as f64).powi(p as i32);
                }
                t
            })
            .sum()
    }

    /// Same bound in exact integer arithmetic, `None` when it exceeds `i128`.
    pub fn abs_bound_exact(&self, max_abs: &[u64]) -> Option<i128> {
        let mut acc: i128 = 0;
        for (e, &c) in &self.terms {
            let mut t = (c as i128).abs();
            for (v, &p) in e.iter().enumerate() {
                t = t.checked_mul((max_abs[v] as i128).checked_pow(p)?)?;
            }
            acc = acc.checked_add(t)?;
        }
        Some(acc)
    }
}

impl RealForm {
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.evaluate_f64(x)
    }

    pub fn multilinear_gradient(&self, vectors: &[&[f64]]) -> Result<Vec<f64>> {
        self.multilinear_gradient_with(vectors, |&c, w| Some(c * w as f64))
    }

    /// Dense d-th derivative tensor of the leading part for `d <= 3`,
    /// flattened row-major with the last index fastest.
    pub fn derivative_tensor(&self) -> Result<DerivativeTensor> {
        let d = self.degree as usize;
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "dense derivative tensors are built for degree 1 to 3, not {d}"
            )));
        }
        let n = self.vars;
        let mut data = vec![0.0; n.pow(d as u32)];
        for (e, &c) in &self.terms {
            if e.iter().sum::<u32>() as usize != d {
                continue;
            }
            let w = c * multi_factorial(e) as f64;
            let mut idx = Vec::with_capacity(d);
            fill_tensor(&mut data, n, e.clone().as_mut_slice(), &mut idx, w);
        }
        Ok(DerivativeTensor { n, order: d, data })
    }
}

fn fill_tensor(data: &mut [f64], n: usize, rest: &mut [u32], idx: &mut Vec<usize>, w: f64) {
    if rest.iter().all(|&k| k == 0) {
        let flat = idx.iter().fold(0, |acc, &i| acc * n + i);
        data[flat] = w;
        return;
    }
    for v in 0..rest.len() {
        if rest[v] == 0 {
            continue;
        }
        rest[v] -= 1;
        idx.push(v);
        fill_tensor(data, n, rest, idx, w);
        idx.pop();
        rest[v] += 1;
    }
}

/// Symmetric tensor of d-th partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeTensor {
    pub n: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl DerivativeTensor {
    pub fn entry(&self, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.n + i);
        self.data[flat]
    }

    /// For order 2, the matrix row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

impl<C: Coefficient> fmt::Debug for Form<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(n={}, d={}, {})", self.vars, self.degree, self)
    }
}

impl<C: Coefficient> fmt::Display for Form<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Highest total degree first, then reverse lexicographic, which prints x1^2 before x2^2.
        let mut keys: Vec<&Vec<u32>> = self.terms.keys().collect();
        keys.sort_by(|a, b| {
            let (sa, sb) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
            sb.cmp(&sa).then_with(|| b.cmp(a))
        });
        for (k, e) in keys.into_iter().enumerate() {
            let c = self.terms[e].to_f64();
            let neg = c < 0.0;
            let mag = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let constant = e.iter().all(|&p| p == 0);
            if mag != 1.0 || constant {
                write!(f, "{mag}")?;
            }
            let mut first = mag == 1.0 && !constant;
            for (v, &p) in e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                write!(f, "x{}", v + 1)?;
                if p > 1 {
                    write!(f, "^{p}")?;
                }
            }
        }
        Ok(())
    }
}

/// `R` integer polynomials sharing a variable count and a declared degree.
#[derive(Clone, Debug, PartialEq)]
pub struct FormSystem {
    forms: Vec<IntegerForm>,
    vars: usize,
    degree: u32,
    independent: bool,
}

impl FormSystem {
    pub fn new(forms: Vec<IntegerForm>) -> Result<Self> {
        let first = forms
            .first()
            .ok_or_else(|| Error::Malformed("a system needs at least one form".into()))?;
        let (vars, degree) = (first.vars(), first.degree());
        for (i, f) in forms.iter().enumerate() {
            if f.vars() != vars {
                return Err(Error::InconsistentVariables {
                    index: i,
                    expected: vars,
                    found: f.vars(),
                });
            }
            if f.degree() != degree {
                return Err(Error::InconsistentDegree {
                    index: i,
                    expected: degree,
                    found: f.degree(),
                });
            }
            if f.is_zero() {
                return Err(Error::ZeroForm(i));
            }
        }
        let independent = leading_rank(&forms) == forms.len();
        Ok(FormSystem {
            forms,
            vars,
            degree,
            independent,
        })
    }

    pub fn single(form: IntegerForm) -> Result<Self> {
        Self::new(vec![form])
    }

    pub fn forms(&self) -> &[IntegerForm] {
        &self.forms
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Number of forms.
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    /// Rank of the leading-part coefficient matrix over the rationals equals the form count.
    pub fn is_independent(&self) -> bool {
        self.independent
    }

    pub fn is_homogeneous(&self) -> bool {
        self.forms.iter().all(|f| f.is_homogeneous())
    }

    /// The system of degree-d parts. Fails when some leading part vanishes.
    pub fn leading_parts(&self) -> Result<FormSystem> {
        FormSystem::new(self.forms.iter().map(|f| f.leading_part()).collect())
    }

    pub fn evaluate(&self, x: &[i64]) -> Result<Vec<i128>> {
        self.forms.iter().map(|f| f.evaluate(x)).collect()
    }

    /// `R x n` matrix of first partials at an integer point.
    pub fn jacobian(&self, x: &[i64]) -> Result<Vec<Vec<i128>>> {
        if x.len() != self.vars {
            return Err(Error::DimensionMismatch {
                expected: self.vars,
                found: x.len(),
            });
        }
        self.forms
            .iter()
            .map(|f| (0..self.vars).map(|j| f.partial(j)?.evaluate(x)).collect())
            .collect()
    }

    pub fn jacobian_f64(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.vars {
            return Err(Error::DimensionMismatch {
                expected: self.vars,
                found: x.len(),
            });
        }
        self.forms
            .iter()
            .map(|f| (0..self.vars).map(|j| f.partial(j)?.evaluate_f64(x)).collect())
            .collect()
    }

    /// `sum beta_i f_i` with real weights.
    pub fn combine(&self, beta: &[f64]) -> Result<RealForm> {
        self.check_weights(beta.len())?;
        let mut acc = RealForm::zero(self.vars, self.degree);
        for (f, &b) in self.forms.iter().zip(beta) {
            acc = acc.add(&f.to_real().scale(&b)?)?;
        }
        Ok(acc)
    }

    /// `sum beta_i f_i` with exact rational weights.
    pub fn combine_rational(&self, beta: &[BigRational]) -> Result<RationalForm> {
        self.check_weights(beta.len())?;
        let mut acc = RationalForm::zero(self.vars, self.degree);
        for (f, b) in self.forms.iter().zip(beta) {
            acc = acc.add(&f.to_rational().scale(b)?)?;
        }
        Ok(acc)
    }

    /// `sum a_i f_i` with integer weights, failing on `i64` overflow.
    pub fn combine_integer(&self, weights: &[i64]) -> Result<IntegerForm> {
        self.check_weights(weights.len())?;
        let mut terms: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
        for (f, &a) in self.forms.iter().zip(weights) {
            for (e, &c) in f.terms() {
                let t = c.checked_mul(a).ok_or(Error::Overflow("combining forms"))?;
                let slot = terms.entry(e.clone()).or_insert(0);
                *slot = slot.checked_add(t).ok_or(Error::Overflow("combining forms"))?;
            }
        }
        Form::new(self.vars, self.degree, terms)
    }

    fn check_weights(&self, len: usize) -> Result<()> {
        if len != self.forms.len() {
            Err(Error::DimensionMismatch {
                expected: self.forms.len(),
                found: len,
            })
        } else {
            Ok(())
        }
    }

    /// Applies an `R x R` integer matrix: the new form `i` is `sum_j u[i][j] f_j`.
    pub fn transform(&self, u: &[Vec<i64>]) -> Result<FormSystem> {
        let forms = u
            .iter()
            .map(|row| self.combine_integer(row))
            .collect::<Result<Vec<_>>>()?;
        FormSystem::new(forms)
    }

    /// Bound on `|f_i(x)|` over `|x_v| <= max_abs[v]`, per form.
    pub fn abs_bounds(&self, max_abs: &[u64]) -> Vec<f64> {
        self.forms.iter().map(|f| f.abs_bound(max_abs)).collect()
    }
}

impl fmt::Display for FormSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, form) in self.forms.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{form}")?;
        }
        Ok(())
    }
}

fn leading_rank(forms: &[IntegerForm]) -> usize {
    let mut columns: BTreeMap<&Vec<u32>, usize> = BTreeMap::new();
    let leads: Vec<IntegerForm> = forms.iter().map(|f| f.leading_part()).collect();
    for f in &leads {
        for e in f.terms().keys() {
            let next = columns.len();
            columns.entry(e).or_insert(next);
        }
    }
    let matrix: Vec<Vec<BigInt>> = leads
        .iter()
        .map(|f| {
            let mut row = vec![BigInt::zero(); columns.len()];
            for (e, &c) in f.terms() {
                row[columns[e]] = BigInt::from(c);
            }
            row
        })
        .collect();
    exact::rank(&matrix)
}

/// Rational vector from integers.
pub fn rational_vector(values: &[i64]) -> Vec<BigRational> {
    values
        .iter()
        .map(|&v| BigRational::from_integer(BigInt::from(v)))
        .collect()
}

/// Sup norm of the leading part, exact.
pub fn sup_norm_leading_exact(form: &RationalForm) -> BigRational {
    let d = form.degree();
    let d_fact = BigInt::from(factorial(d));
    form.terms()
        .iter()
        .filter(|(e, _)| e.iter().sum::<u32>() == d)
        .map(|(e, c)| c.abs() * BigInt::from(multi_factorial(e)) / &d_fact)
        .fold(<BigRational as Zero>::zero(), |a, b| if b > a { b } else { a })
}

/// Unit exponent vector helper used by tests and builders.
pub fn monomial(vars: usize, powers: &[(usize, u32)]) -> Vec<u32> {
    let mut e = vec![0; vars];
    for &(v, p) in powers {
        e[v] += p;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn form(text: &str, n: usize) -> IntegerForm {
        parse_expression(text, Some(n), None).unwrap()
    }

    #[test]
    fn evaluates_exactly() {
        let cone = form("x1^2 + x2^2 - x3^2", 3);
        assert_eq!(cone.evaluate(&[3, 4, 5]).unwrap(), 0);
        assert_eq!(cone.evaluate(&[1, 1, 1]).unwrap(), 1);
        let prod = form("x1*x2", 2);
        for k in -5..=5 {
            assert_eq!(prod.evaluate(&[0, k]).unwrap(), 0);
        }
        assert!(matches!(
            cone.evaluate(&[1, 2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn large_inputs_stay_exact() {
        let f = form("x1^3 - x2^3", 2);
        let big = 2_000_000i64;
        assert_eq!(f.evaluate(&[big, 0]).unwrap(), (big as i128).pow(3));
        let g = form("x1^5", 1);
        assert!(matches!(
            g.evaluate(&[i64::MAX]),
            Err(Error::Overflow(_))
        ));
        let big_val = g
            .evaluate_big(&[BigInt::from(i64::MAX)])
            .unwrap();
        assert_eq!(big_val, BigInt::from(i64::MAX).pow(5));
    }

    #[test]
    fn leading_part_drops_lower_terms() {
        let f = form("x1^2 + 3*x1 + 7", 1);
        let lead = f.leading_part();
        assert_eq!(lead, form("x1^2", 1));
        assert!(lead.is_homogeneous());
        let homog = form("x1*x2 - x2^2", 2);
        assert_eq!(homog.leading_part(), homog);
        let linear = parse_expression("3*x1 + 7", Some(1), Some(2)).unwrap();
        assert!(linear.leading_part().is_zero());
    }

    #[test]
    fn combinations() {
        let sys = FormSystem::new(vec![form("x1^2", 2), form("x2^2", 2)]).unwrap();
        let first = sys.combine(&[1.0, 0.0]).unwrap();
        assert_eq!(first, form("x1^2", 2).to_real());
        assert!(sys.combine(&[0.0, 0.0]).unwrap().is_zero());
        assert_eq!(sys.combine(&[1.0, -1.0]).unwrap(), form("x1^2 - x2^2", 2).to_real());
        let exact = sys
            .combine_rational(&rational_vector(&[1, -1]))
            .unwrap();
        assert_eq!(exact, form("x1^2 - x2^2", 2).to_rational());
        assert!(matches!(
            sys.combine(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(form("x1*x2", 2).sup_norm_leading(), 0.5);
        assert_eq!(form("x1^2 + x2^2", 2).sup_norm_leading(), 1.0);
        assert_eq!(form("x1^3", 1).sup_norm_leading(), 1.0);
        assert_eq!(IntegerForm::zero(2, 2).sup_norm_leading(), 0.0);
        let exact = sup_norm_leading_exact(&form("3*x1*x2 - x1^2", 2).to_rational());
        assert_eq!(exact, BigRational::new(3.into(), 2.into()));
    }

    #[test]
    fn multilinear_gradient_examples() {
        let sq = form("x1^2 + x2^2", 2).to_real();
        assert_eq!(sq.multilinear_gradient(&[&[3.0, -2.0]]).unwrap(), vec![6.0, -4.0]);
        let cube = form("x1^3", 1).to_real();
        assert_eq!(cube.multilinear_gradient(&[&[2.0], &[5.0]]).unwrap(), vec![60.0]);
        let f = form("x1^2*x2 - 4*x1*x2*x3 + x3^3", 3);
        let zero = [0i64; 3];
        let other = [1i64, -2, 3];
        assert_eq!(
            f.multilinear_gradient_exact(&[&zero, &other]).unwrap(),
            vec![0, 0, 0]
        );
        assert!(sq.multilinear_gradient(&[]).is_err());
    }

    #[test]
    fn derivative_tensor_matches_contraction() {
        let f = form("x1^2*x2 - 4*x1*x2*x3 + 2*x3^3", 3).to_real();
        let t = f.derivative_tensor().unwrap();
        assert_eq!(t.entry(&[0, 0, 1]), 2.0);
        assert_eq!(t.entry(&[1, 2, 0]), -4.0);
        assert_eq!(t.entry(&[2, 2, 2]), 12.0);
        let (a, b) = ([1.0, 2.0, -1.0], [0.5, -3.0, 2.0]);
        let m = f.multilinear_gradient(&[&a, &b]).unwrap();
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                for k in 0..3 {
                    s += t.entry(&[j, k, i]) * a[j] * b[k];
                }
            }
            assert!((s - m[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_examples() {
        let cone = FormSystem::single(form("x1^2 + x2^2 - x3^2", 3)).unwrap();
        assert_eq!(cone.jacobian(&[3, 4, 5]).unwrap(), vec![vec![6, 8, -10]]);
        assert_eq!(cone.jacobian(&[0, 0, 0]).unwrap(), vec![vec![0, 0, 0]]);
        let pair = FormSystem::new(vec![form("x1*x2", 4), form("x3*x4", 4)]).unwrap();
        assert_eq!(
            pair.jacobian(&[1, 1, 1, 1]).unwrap(),
            vec![vec![1, 1, 0, 0], vec![0, 0, 1, 1]]
        );
    }

    #[test]
    fn independence_flag() {
        let f = form("x1^2 + x2*x3", 3);
        let dep = FormSystem::new(vec![f.clone(), f.scale(&2).unwrap()]).unwrap();
        assert!(!dep.is_independent());
        let ind = FormSystem::new(vec![f, form("x3^2", 3)]).unwrap();
        assert!(ind.is_independent());
        assert!(matches!(
            FormSystem::new(vec![IntegerForm::zero(2, 2)]),
            Err(Error::ZeroForm(0))
        ));
    }

    #[test]
    fn display_round_trips_through_parser() {
        let f = form("-3*x1^2 + x1*x2 - x3 + 7", 3);
        let shown = f.to_string();
        assert_eq!(parse_expression(&shown, Some(3), Some(2)).unwrap(), f);
    }

    fn small_form(n: usize, d: u32) -> impl Strategy<Value = IntegerForm> {
        prop::collection::vec((prop::collection::vec(0..n, d as usize), -6i64..=6), 1..6).prop_map(
            move |mons| {
                let terms = mons.into_iter().map(|(vars, c)| {
                    let mut e = vec![0u32; n];
                    for v in vars {
                        e[v] += 1;
                    }
                    (e, c)
                });
                Form::new(n, d, terms).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn euler_identity(f in small_form(3, 3), x in prop::collection::vec(-9i64..=9, 3)) {
            let value = f.evaluate(&x).unwrap();
            let mut s = 0i128;
            for j in 0..3 {
                s += x[j] as i128 * f.partial(j).unwrap().evaluate(&x).unwrap();
            }
            prop_assert_eq!(s, 3 * value);
        }

        #[test]
        fn gradient_symmetric_and_homogeneous(
            f in small_form(3, 3),
            a in prop::collection::vec(-7i64..=7, 3),
            b in prop::collection::vec(-7i64..=7, 3),
            lambda in -5i64..=5,
        ) {
            let ab = f.multilinear_gradient_exact(&[&a, &b]).unwrap();
            let ba = f.multilinear_gradient_exact(&[&b, &a]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let scaled: Vec<i64> = a.iter().map(|v| v * lambda).collect();
            let sb = f.multilinear_gradient_exact(&[&scaled, &b]).unwrap();
            let expect: Vec<i128> = ab.iter().map(|v| v * lambda as i128).collect();
            prop_assert_eq!(sb, expect);
        }

        #[test]
        fn gradient_with_equal_arguments_is_scaled_gradient(
            f in small_form(3, 3),
            x in prop::collection::vec(-7i64..=7, 3),
        ) {
            // m(x, x)_i = (d-1)! * df/dx_i
            let m = f.multilinear_gradient_exact(&[&x, &x]).unwrap();
            for i in 0..3 {
                prop_assert_eq!(m[i], 2 * f.partial(i).unwrap().evaluate(&x).unwrap());
            }
        }

        #[test]
        fn combine_is_linear(
            f in small_form(3, 2),
            g in small_form(3, 2),
            b1 in prop::collection::vec(-4i64..=4, 2),
            b2 in prop::collection::vec(-4i64..=4, 2),
        ) {
            prop_assume!(!f.is_zero() && !g.is_zero());
            let sys = FormSystem::new(vec![f, g]).unwrap();
            let sum: Vec<i64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
            let lhs = sys.combine_rational(&rational_vector(&sum)).unwrap();
            let rhs = sys
                .combine_rational(&rational_vector(&b1))
                .unwrap()
                .add(&sys.combine_rational(&rational_vector(&b2)).unwrap())
                .unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn leading_part_idempotent(f in small_form(3, 2), extra in -5i64..=5) {
            let with_lower = f.add(&Form::new(3, 2, vec![(vec![1, 0, 0], extra), (vec![0, 0, 0], 3)]).unwrap()).unwrap();
            let once = with_lower.leading_part();
            prop_assert_eq!(once.leading_part(), once.clone());
            prop_assert_eq!(once, f.leading_part());
        }
    }
}
