//! Multivariate polynomials with real and matrix coefficients.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{structural, Result};

/// Maximum number of variables a polynomial may use.
pub const MAX_VARS: usize = 6;

/// Exponent vector; entries past the variable count stay zero.
pub type Monomial = [u8; MAX_VARS];

const ONE: Monomial = [0; MAX_VARS];

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = [0u8; MAX_VARS];
    for i in 0..MAX_VARS {
        out[i] = a[i].checked_add(b[i]).expect("polynomial degree overflow");
    }
    out
}

fn mono_degree(m: &Monomial) -> u32 {
    m.iter().map(|&e| e as u32).sum()
}

fn mono_eval(m: &Monomial, x: &[f64]) -> f64 {
    let mut v = 1.0;
    for (i, &e) in m.iter().enumerate() {
        if e > 0 {
            v *= x[i].powi(e as i32);
        }
    }
    v
}

/// All monomials in `nvars` variables of total degree at most `degree`.
pub fn monomials_up_to(nvars: usize, degree: u32) -> Vec<Monomial> {
    let mut out = vec![ONE];
    for i in 0..nvars {
        let mut next = Vec::new();
        for m in &out {
            let used = mono_degree(m);
            for e in 0..=(degree - used) {
                let mut n = *m;
                n[i] = e as u8;
                next.push(n);
            }
        }
        out = next;
    }
    out.sort();
    out
}

/// Parses a monomial written as comma-separated exponents, e.g. `"1,0,2"`.
pub fn parse_monomial(key: &str, nvars: usize) -> Result<Monomial> {
    let mut m = ONE;
    let parts: Vec<&str> = if key.trim().is_empty() {
        Vec::new()
    } else {
        key.split(',').collect()
    };
    if parts.len() != nvars {
        return structural(format!("monomial '{key}' must list {nvars} exponents"));
    }
    for (i, p) in parts.iter().enumerate() {
        m[i] = p.trim().parse().map_err(|_| {
            crate::error::HolabError::Structural(format!("bad exponent in monomial '{key}'"))
        })?;
    }
    Ok(m)
}

pub fn format_monomial(m: &Monomial, nvars: usize) -> String {
    m[..nvars]
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A real polynomial in `nvars` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        assert!(nvars <= MAX_VARS, "at most {MAX_VARS} variables");
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(ONE, c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars);
        let mut m = ONE;
        m[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(m, 1.0);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, f64)>>(nvars: usize, terms: I) -> Self {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, f64> {
        &self.terms
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert!(m[self.nvars..].iter().all(|&e| e == 0));
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(mono_degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(*m, c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(m, &v)| (*m, v * c)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars.max(other.nvars));
        for (a, &x) in &self.terms {
            for (b, &y) in &other.terms {
                out.add_term(mono_mul(a, b), x * y);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, &c) in &self.terms {
            if m[i] > 0 {
                let mut n = *m;
                n[i] -= 1;
                out.add_term(n, c * m[i] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, &c)| c * mono_eval(m, x)).sum()
    }

    /// Substitutes `subs[i]` (polynomials in a common set of variables) for `x_i`.
    pub fn compose(&self, subs: &[Polynomial]) -> Polynomial {
        assert_eq!(subs.len(), self.nvars);
        let target = subs.first().map(|p| p.nvars).unwrap_or(0);
        let powers = PowerCache::new(subs);
        let mut out = Polynomial::zero(target);
        for (m, &c) in &self.terms {
            out = out.add(&powers.monomial(m, target).scale(c));
        }
        out
    }
}

/// Cached powers of substituted variables.
struct PowerCache<'a> {
    subs: &'a [Polynomial],
    powers: std::cell::RefCell<BTreeMap<(usize, u8), Polynomial>>,
}

impl<'a> PowerCache<'a> {
    fn new(subs: &'a [Polynomial]) -> Self {
        Self {
            subs,
            powers: Default::default(),
        }
    }

    fn power(&self, i: usize, e: u8) -> Polynomial {
        if let Some(p) = self.powers.borrow().get(&(i, e)) {
            return p.clone();
        }
        let p = if e == 0 {
            Polynomial::constant(self.subs[i].nvars, 1.0)
        } else {
            self.power(i, e - 1).mul(&self.subs[i])
        };
        self.powers.borrow_mut().insert((i, e), p.clone());
        p
    }

    fn monomial(&self, m: &Monomial, target: usize) -> Polynomial {
        let mut out = Polynomial::constant(target, 1.0);
        for (i, &e) in m.iter().enumerate().take(self.subs.len()) {
            if e > 0 {
                out = out.mul(&self.power(i, e));
            }
        }
        out
    }
}

/// A polynomial with `rows × cols` matrix coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MatPoly {
    nvars: usize,
    rows: usize,
    cols: usize,
    terms: BTreeMap<Monomial, DMatrix<f64>>,
}

impl MatPoly {
    pub fn zero(nvars: usize, rows: usize, cols: usize) -> Self {
        assert!(nvars <= MAX_VARS, "at most {MAX_VARS} variables");
        Self {
            nvars,
            rows,
            cols,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, m: DMatrix<f64>) -> Self {
        let mut p = Self::zero(nvars, m.nrows(), m.ncols());
        p.add_term(ONE, &m);
        p
    }

    /// `p(x)·M`.
    pub fn from_scalar(p: &Polynomial, m: &DMatrix<f64>) -> Self {
        let mut out = Self::zero(p.nvars, m.nrows(), m.ncols());
        for (mono, &c) in &p.terms {
            out.add_term(*mono, &(m * c));
        }
        out
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, DMatrix<f64>> {
        &self.terms
    }

    pub fn add_term(&mut self, m: Monomial, c: &DMatrix<f64>) {
        debug_assert_eq!(c.shape(), (self.rows, self.cols));
        if c.iter().all(|&x| x == 0.0) {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(e) => {
                *e += c;
                if e.iter().all(|&x| x == 0.0) {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c.clone());
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(mono_degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "matrix polynomial shape mismatch"
        );
        self.nvars = self.nvars.max(other.nvars);
        for (m, c) in &other.terms {
            self.add_term(*m, c);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.nvars, self.rows, self.cols);
        for (m, v) in &self.terms {
            out.add_term(*m, &(v * c));
        }
        out
    }

    /// Matrix product of polynomial matrices.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix polynomial shape mismatch");
        let mut out = Self::zero(self.nvars.max(other.nvars), self.rows, other.cols);
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                out.add_term(mono_mul(a, b), &(x * y));
            }
        }
        out
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        let mut out = Self::zero(self.nvars, m.nrows(), self.cols);
        for (mono, c) in &self.terms {
            out.add_term(*mono, &(m * c));
        }
        out
    }

    /// Right multiplication by a constant matrix.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Self {
        let mut out = Self::zero(self.nvars, self.rows, m.ncols());
        for (mono, c) in &self.terms {
            out.add_term(*mono, &(c * m));
        }
        out
    }

    pub fn scalar_mul(&self, p: &Polynomial) -> Self {
        let mut out = Self::zero(self.nvars.max(p.nvars), self.rows, self.cols);
        for (a, x) in &self.terms {
            for (b, &y) in &p.terms {
                out.add_term(mono_mul(a, b), &(x * y));
            }
        }
        out
    }

    pub fn deriv(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars, self.rows, self.cols);
        for (m, c) in &self.terms {
            if m[i] > 0 {
                let mut n = *m;
                n[i] -= 1;
                out.add_term(n, &(c * m[i] as f64));
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (m, c) in &self.terms {
            out += c * mono_eval(m, x);
        }
        out
    }

    /// Entry `(i, j)` as a scalar polynomial.
    pub fn entry(&self, i: usize, j: usize) -> Polynomial {
        Polynomial::from_terms(self.nvars, self.terms.iter().map(|(m, c)| (*m, c[(i, j)])))
    }

    /// Substitutes polynomials for the variables.
    pub fn compose(&self, subs: &[Polynomial]) -> MatPoly {
        assert_eq!(subs.len(), self.nvars);
        let target = subs.first().map(|p| p.nvars).unwrap_or(0);
        let powers = PowerCache::new(subs);
        let mut out = MatPoly::zero(target, self.rows, self.cols);
        for (m, c) in &self.terms {
            let p = powers.monomial(m, target);
            for (mono, &v) in &p.terms {
                out.add_term(*mono, &(c * v));
            }
        }
        out
    }

    /// Fixes variable `i` at `value`, leaving a polynomial in the same
    /// variables that no longer depends on `x_i`.
    pub fn fix_var(&self, i: usize, value: f64) -> MatPoly {
        let mut out = MatPoly::zero(self.nvars, self.rows, self.cols);
        for (m, c) in &self.terms {
            let mut n = *m;
            let e = n[i];
            n[i] = 0;
            out.add_term(n, &(c * value.powi(e as i32)));
        }
        out
    }

    /// Dense univariate form in variable `i`: coefficient of `x_i^k` at index
    /// `k`. All other variables must be absent.
    pub fn univariate(&self, i: usize) -> UnivariateMatPoly {
        let deg = self.terms.keys().map(|m| m[i] as usize).max().unwrap_or(0);
        let mut coeffs = vec![DMatrix::zeros(self.rows, self.cols); deg + 1];
        for (m, c) in &self.terms {
            debug_assert!(m.iter().enumerate().all(|(j, &e)| j == i || e == 0));
            coeffs[m[i] as usize] += c;
        }
        UnivariateMatPoly { coeffs }
    }
}

/// Dense univariate matrix polynomial, evaluated by Horner's rule.
#[derive(Debug, Clone)]
pub struct UnivariateMatPoly {
    coeffs: Vec<DMatrix<f64>>,
}

impl UnivariateMatPoly {
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut it = self.coeffs.iter().rev();
        let mut acc = it.next().expect("at least one coefficient").clone();
        for c in it {
            acc *= t;
            acc += c;
        }
        acc
    }

    /// Horner evaluation into a preallocated matrix.
    pub fn eval_into(&self, t: f64, out: &mut DMatrix<f64>) {
        let mut it = self.coeffs.iter().rev();
        out.copy_from(it.next().expect("at least one coefficient"));
        for c in it {
            *out *= t;
            *out += c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(exps: &[u8]) -> Monomial {
        let mut out = ONE;
        out[..exps.len()].copy_from_slice(exps);
        out
    }

    #[test]
    fn arithmetic_and_eval() {
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let p = x
            .mul(&y)
            .add(&x.scale(3.0))
            .add(&Polynomial::constant(2, -1.0));
        assert_eq!(p.eval(&[2.0, 5.0]), 2.0 * 5.0 + 6.0 - 1.0);
        assert_eq!(p.deriv(0).eval(&[2.0, 5.0]), 5.0 + 3.0);
        assert_eq!(p.degree(), 2);
        assert!(p.sub(&p).is_zero());
    }

    #[test]
    fn compose_substitutes() {
        let p = Polynomial::from_terms(2, [(m(&[2, 0]), 1.0), (m(&[0, 1]), 2.0)]);
        let t = Polynomial::var(1, 0);
        let subs = [t.scale(2.0), t.add(&Polynomial::constant(1, 1.0))];
        let q = p.compose(&subs);
        for tv in [0.0f64, 0.3, -1.7] {
            let expected = (2.0 * tv).powi(2) + 2.0 * (tv + 1.0);
            assert!((q.eval(&[tv]) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matpoly_product_matches_pointwise() {
        let a = MatPoly::from_scalar(
            &Polynomial::var(2, 0),
            &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
        )
        .add(&MatPoly::constant(2, DMatrix::identity(2, 2)));
        let b = MatPoly::from_scalar(
            &Polynomial::var(2, 1).pow(2),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        );
        let ab = a.mul(&b);
        let x = [0.4, -1.3];
        assert!((ab.eval(&x) - a.eval(&x) * b.eval(&x)).norm() < 1e-14);
        let fixed = ab.fix_var(1, x[1]).univariate(0);
        assert!((fixed.eval(x[0]) - ab.eval(&x)).norm() < 1e-14);
    }

    #[test]
    fn monomial_keys_round_trip() {
        let k = parse_monomial("1, 0,2", 3).unwrap();
        assert_eq!(format_monomial(&k, 3), "1,0,2");
        assert!(parse_monomial("1,0", 3).is_err());
        assert_eq!(parse_monomial("", 0).unwrap(), ONE);
    }
}
