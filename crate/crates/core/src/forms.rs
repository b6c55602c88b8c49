//! Polynomial differential forms on box charts with values in graded
//! endomorphisms.
//!
//! A form `Σ_I c_I dx_I ⊗ A_I` stores one matrix polynomial per strictly
//! increasing index tuple `I`. The product of `α⊗A` and `β⊗B` is
//! `(−1)^{|A|·|β|} (α∧β)⊗AB`, where `|A|` is the inner degree and `|β|` the
//! form degree, and `d` acts on the scalar part only. With these conventions
//! a superconnection `D = d + ω` is flat iff `dω + ω·ω = 0`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{structural, HolabError, Result};
use crate::graded::{CochainComplex, GradedLinearMap, GradedSpace};
use crate::poly::{MatPoly, Polynomial};

/// Largest chart dimension supported by the superconnection machinery.
pub const MAX_CHART_DIM: usize = 3;

/// An axis-aligned box `∏ [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Chart {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return structural("chart bounds must be nonempty and of equal length");
        }
        if lo.len() > MAX_CHART_DIM {
            return structural(format!(
                "chart dimension {} exceeds {MAX_CHART_DIM}",
                lo.len()
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return structural("chart bounds must satisfy lo < hi on every axis");
        }
        Ok(Self { lo, hi })
    }

    /// The box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim]).expect("unit box")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    /// Deterministic low-discrepancy points in the box (Halton sequence,
    /// skipping the origin).
    pub fn samples(&self, count: usize) -> Vec<Vec<f64>> {
        const BASES: [u32; MAX_CHART_DIM] = [2, 3, 5];
        (1..=count)
            .map(|i| {
                (0..self.dim())
                    .map(|a| {
                        self.lo[a] + (self.hi[a] - self.lo[a]) * radical_inverse(i as u32, BASES[a])
                    })
                    .collect()
            })
            .collect()
    }
}

fn radical_inverse(mut i: u32, base: u32) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// All strictly increasing `k`-tuples from `0..n`.
pub fn index_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Sign and sorted union of `dx_I ∧ dx_J`, or `None` if they overlap.
fn merge_indices(a: &[usize], b: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut inversions = 0;
    for &i in a {
        for &j in b {
            if i == j {
                return None;
            }
            if i > j {
                inversions += 1;
            }
        }
    }
    let mut idx: Vec<usize> = a.iter().chain(b).copied().collect();
    idx.sort_unstable();
    Some((if inversions % 2 == 0 { 1.0 } else { -1.0 }, idx))
}

fn determinant(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().determinant(),
    }
}

/// Determinant of a small matrix of polynomials by cofactor expansion.
fn poly_determinant(m: &[Vec<Polynomial>], nvars: usize) -> Polynomial {
    let k = m.len();
    if k == 0 {
        return Polynomial::constant(nvars, 1.0);
    }
    let mut out = Polynomial::zero(nvars);
    for c in 0..k {
        let minor: Vec<Vec<Polynomial>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != c)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        let term = m[0][c].mul(&poly_determinant(&minor, nvars));
        out = if c % 2 == 0 {
            out.add(&term)
        } else {
            out.sub(&term)
        };
    }
    out
}

/// A differential form with polynomial coefficients valued in graded
/// endomorphisms of a fixed inner degree.
#[derive(Debug, Clone, PartialEq)]
pub struct EndValuedForm {
    space: GradedSpace,
    nvars: usize,
    form_degree: usize,
    inner_degree: i32,
    components: BTreeMap<Vec<usize>, MatPoly>,
}

impl EndValuedForm {
    pub fn zero(space: &GradedSpace, nvars: usize, form_degree: usize, inner_degree: i32) -> Self {
        Self {
            space: space.clone(),
            nvars,
            form_degree,
            inner_degree,
            components: BTreeMap::new(),
        }
    }

    /// Builds a form from components, checking indices and block patterns.
    pub fn from_components(
        space: &GradedSpace,
        nvars: usize,
        form_degree: usize,
        inner_degree: i32,
        components: BTreeMap<Vec<usize>, MatPoly>,
    ) -> Result<Self> {
        let n = space.total_dim();
        let mut out = Self::zero(space, nvars, form_degree, inner_degree);
        for (idx, coeff) in components {
            if idx.len() != form_degree
                || idx.windows(2).any(|w| w[0] >= w[1])
                || idx.iter().any(|&i| i >= nvars)
            {
                return structural(format!(
                    "index tuple {idx:?} is not a strictly increasing {form_degree}-tuple below {nvars}"
                ));
            }
            if coeff.shape() != (n, n) {
                return structural(format!(
                    "coefficient of {idx:?} has shape {:?}, expected {n}x{n}",
                    coeff.shape()
                ));
            }
            for m in coeff.terms().values() {
                GradedLinearMap::from_dense(space, space, inner_degree, m.clone())?;
            }
            out.insert(idx, coeff);
        }
        Ok(out)
    }

    /// The 0-form with constant value `m`.
    pub fn constant_map(nvars: usize, m: &GradedLinearMap) -> Self {
        let mut out = Self::zero(m.source(), nvars, 0, m.degree());
        out.insert(Vec::new(), MatPoly::constant(nvars, m.matrix().clone()));
        out
    }

    /// The 0-form with polynomial value `p`.
    pub fn function(space: &GradedSpace, inner_degree: i32, p: MatPoly) -> Self {
        let nvars = p.nvars();
        let mut out = Self::zero(space, nvars, 0, inner_degree);
        out.insert(Vec::new(), p);
        out
    }

    fn insert(&mut self, idx: Vec<usize>, coeff: MatPoly) {
        if coeff.is_zero() {
            return;
        }
        match self.components.get_mut(&idx) {
            Some(c) => {
                c.add_assign(&coeff);
                if c.is_zero() {
                    self.components.remove(&idx);
                }
            }
            None => {
                self.components.insert(idx, coeff);
            }
        }
    }

    pub fn space(&self) -> &GradedSpace {
        &self.space
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn form_degree(&self) -> usize {
        self.form_degree
    }

    pub fn inner_degree(&self) -> i32 {
        self.inner_degree
    }

    pub fn components(&self) -> &BTreeMap<Vec<usize>, MatPoly> {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    /// Largest polynomial degree among the coefficients.
    pub fn poly_degree(&self) -> u32 {
        self.components
            .values()
            .map(MatPoly::degree)
            .max()
            .unwrap_or(0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.space != other.space || self.nvars != other.nvars {
            return structural("forms live on different spaces or charts");
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.form_degree != other.form_degree || self.inner_degree != other.inner_degree {
            return structural(format!(
                "cannot add a ({}, {}) form to a ({}, {}) form",
                self.form_degree, self.inner_degree, other.form_degree, other.inner_degree
            ));
        }
        let mut out = self.clone();
        for (idx, c) in &other.components {
            out.insert(idx.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).expect("form addition")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(&self.space, self.nvars, self.form_degree, self.inner_degree);
        for (idx, m) in &self.components {
            out.insert(idx.clone(), m.scale(c));
        }
        out
    }

    /// Coefficient of `dx_I` evaluated at `x`.
    pub fn component_at(&self, idx: &[usize], x: &[f64]) -> GradedLinearMap {
        let m = match self.components.get(idx) {
            Some(c) => c.eval(x),
            None => DMatrix::zeros(self.space.total_dim(), self.space.total_dim()),
        };
        GradedLinearMap::from_dense_unchecked(&self.space, &self.space, self.inner_degree, m)
    }

    /// Evaluates on `k` tangent vectors at `x`.
    pub fn eval(&self, x: &[f64], vectors: &[Vec<f64>]) -> Result<GradedLinearMap> {
        if vectors.len() != self.form_degree {
            return structural(format!(
                "a {}-form needs {} vectors, got {}",
                self.form_degree,
                self.form_degree,
                vectors.len()
            ));
        }
        if x.len() != self.nvars || vectors.iter().any(|v| v.len() != self.nvars) {
            return structural(format!(
                "points and vectors must have {} coordinates",
                self.nvars
            ));
        }
        let n = self.space.total_dim();
        let mut m = DMatrix::zeros(n, n);
        for (idx, c) in &self.components {
            let minor = DMatrix::from_fn(self.form_degree, self.form_degree, |r, col| {
                vectors[r][idx[col]]
            });
            let w = determinant(&minor);
            if w != 0.0 {
                m += c.eval(x) * w;
            }
        }
        Ok(GradedLinearMap::from_dense_unchecked(
            &self.space,
            &self.space,
            self.inner_degree,
            m,
        ))
    }

    /// Largest absolute polynomial coefficient.
    pub fn max_coefficient(&self) -> f64 {
        self.components
            .values()
            .flat_map(|c| c.terms().values().map(|m| m.amax()))
            .fold(0.0, f64::max)
    }

    /// Largest coefficient norm over the coordinate basis at `x`.
    pub fn max_component_norm(&self, x: &[f64]) -> f64 {
        self.components
            .values()
            .map(|c| c.eval(x).norm())
            .fold(0.0, f64::max)
    }

    pub fn exterior_d(&self) -> Self {
        let mut out = Self::zero(
            &self.space,
            self.nvars,
            self.form_degree + 1,
            self.inner_degree,
        );
        for (idx, c) in &self.components {
            for j in 0..self.nvars {
                if let Some((sign, merged)) = merge_indices(&[j], idx) {
                    let dc = c.deriv(j);
                    if !dc.is_zero() {
                        out.insert(merged, dc.scale(sign));
                    }
                }
            }
        }
        out
    }

    fn product(&self, other: &Self, koszul: bool) -> Self {
        self.check_compatible(other).expect("compatible forms");
        let mut out = Self::zero(
            &self.space,
            self.nvars,
            self.form_degree + other.form_degree,
            self.inner_degree + other.inner_degree,
        );
        let koszul_sign =
            if koszul && (self.inner_degree * other.form_degree as i32).rem_euclid(2) == 1 {
                -1.0
            } else {
                1.0
            };
        for (a, x) in &self.components {
            for (b, y) in &other.components {
                if let Some((sign, merged)) = merge_indices(a, b) {
                    out.insert(merged, x.mul(y).scale(sign * koszul_sign));
                }
            }
        }
        out
    }

    /// Product with the Koszul sign `(−1)^{inner(self)·form(other)}`.
    pub fn wedge(&self, other: &Self) -> Self {
        self.product(other, true)
    }

    /// Product `(α∧β)⊗AB` without the Koszul sign.
    pub fn wedge_plain(&self, other: &Self) -> Self {
        self.product(other, false)
    }

    /// Pulls back along a polynomial map `F` given by its components in the
    /// new variables.
    pub fn pullback(&self, map: &[Polynomial]) -> Result<Self> {
        if map.len() != self.nvars {
            return structural(format!("pullback map must have {} components", self.nvars));
        }
        let m = map.first().map(Polynomial::nvars).unwrap_or(0);
        let jac: Vec<Vec<Polynomial>> = map
            .iter()
            .map(|f| (0..m).map(|j| f.deriv(j)).collect())
            .collect();
        let mut out = Self::zero(&self.space, m, self.form_degree, self.inner_degree);
        let targets = index_tuples(m, self.form_degree);
        for (idx, c) in &self.components {
            let composed = c.compose(map);
            for t in &targets {
                let minor: Vec<Vec<Polynomial>> = idx
                    .iter()
                    .map(|&i| t.iter().map(|&j| jac[i][j].clone()).collect())
                    .collect();
                let det = poly_determinant(&minor, m);
                if !det.is_zero() {
                    out.insert(t.clone(), composed.scalar_mul(&det));
                }
            }
        }
        Ok(out)
    }
}

/// An inhomogeneous form of total degree 0 or 1: part `k` has form degree
/// `k` and inner degree `base − k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalForm {
    parts: Vec<EndValuedForm>,
}

impl TotalForm {
    pub fn new(parts: Vec<EndValuedForm>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return structural("total form needs at least one part");
        };
        let base = first.inner_degree();
        for (k, p) in parts.iter().enumerate() {
            first.check_compatible(p)?;
            if p.form_degree() != k || p.inner_degree() != base - k as i32 {
                return structural(format!("part {k} of a total form has the wrong bidegree"));
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[EndValuedForm] {
        &self.parts
    }

    pub fn part(&self, k: usize) -> Option<&EndValuedForm> {
        self.parts.get(k)
    }

    pub fn into_parts(self) -> Vec<EndValuedForm> {
        self.parts
    }

    fn base(&self) -> i32 {
        self.parts[0].inner_degree()
    }

    fn nvars(&self) -> usize {
        self.parts[0].nvars()
    }

    fn space(&self) -> &GradedSpace {
        self.parts[0].space()
    }

    fn max_degree(&self) -> usize {
        self.nvars()
    }

    fn zero_like(space: &GradedSpace, nvars: usize, base: i32) -> Self {
        let parts = (0..=nvars)
            .map(|k| EndValuedForm::zero(space, nvars, k, base - k as i32))
            .collect();
        Self { parts }
    }

    fn padded(&self) -> Vec<EndValuedForm> {
        let mut parts = self.parts.clone();
        for k in parts.len()..=self.max_degree() {
            parts.push(EndValuedForm::zero(
                self.space(),
                self.nvars(),
                k,
                self.base() - k as i32,
            ));
        }
        parts
    }

    fn trimmed(mut parts: Vec<EndValuedForm>) -> Self {
        while parts.len() > 1 && parts.last().map(EndValuedForm::is_zero).unwrap_or(false) {
            parts.pop();
        }
        Self { parts }
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (self.padded(), other.padded());
        Self::trimmed(a.iter().zip(&b).map(|(x, y)| x.add(y)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::trimmed(self.parts.iter().map(|p| p.scale(c)).collect())
    }

    /// Koszul product, truncated at the chart dimension.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero_like(self.space(), self.nvars(), self.base() + other.base()).parts;
        for p in &self.parts {
            for q in &other.parts {
                let k = p.form_degree() + q.form_degree();
                if k < out.len() && !p.is_zero() && !q.is_zero() {
                    out[k] = out[k].add(&p.wedge(q));
                }
            }
        }
        Self::trimmed(out)
    }

    pub fn exterior_d(&self) -> Self {
        let mut out = Self::zero_like(self.space(), self.nvars(), self.base() + 1).parts;
        for p in &self.parts {
            let k = p.form_degree() + 1;
            if k < out.len() {
                out[k] = p.exterior_d();
            }
        }
        Self::trimmed(out)
    }
}

/// A chain-map-valued degree-0 field `φ0` together with a polynomial inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibleField {
    forward: MatPoly,
    inverse: MatPoly,
}

impl InvertibleField {
    pub fn identity(nvars: usize, n: usize) -> Self {
        let id = MatPoly::constant(nvars, DMatrix::identity(n, n));
        Self {
            forward: id.clone(),
            inverse: id,
        }
    }

    /// `id + p·N` with `N² = 0`, whose inverse is `id − p·N`.
    pub fn unipotent(p: &Polynomial, nilpotent: &DMatrix<f64>) -> Result<Self> {
        let sq = (nilpotent * nilpotent).norm();
        if sq > 1e-12 * (1.0 + nilpotent.norm().powi(2)) {
            return Err(HolabError::Singular(format!(
                "factor is not square-zero (‖N²‖ = {sq:.3e})"
            )));
        }
        let n = nilpotent.nrows();
        let id = MatPoly::constant(p.nvars(), DMatrix::identity(n, n));
        let pn = MatPoly::from_scalar(p, nilpotent);
        Ok(Self {
            forward: id.add(&pn),
            inverse: id.sub(&pn),
        })
    }

    /// A constant invertible factor.
    pub fn constant(nvars: usize, m: &DMatrix<f64>) -> Result<Self> {
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| HolabError::Singular("constant gauge factor is singular".into()))?;
        Ok(Self {
            forward: MatPoly::constant(nvars, m.clone()),
            inverse: MatPoly::constant(nvars, inv),
        })
    }

    /// The field `x ↦ φ0(x)⁻¹`.
    pub fn inverted(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `self · other`.
    pub fn then(&self, other: &Self) -> Self {
        Self {
            forward: self.forward.mul(&other.forward),
            inverse: other.inverse.mul(&self.inverse),
        }
    }

    pub fn forward(&self) -> &MatPoly {
        &self.forward
    }

    pub fn inverse(&self) -> &MatPoly {
        &self.inverse
    }

    /// Largest coefficient of `φ0·φ0⁻¹ − id`.
    pub fn inverse_defect(&self) -> f64 {
        let (n, _) = self.forward.shape();
        let prod = self.forward.mul(&self.inverse).sub(&MatPoly::constant(
            self.forward.nvars(),
            DMatrix::identity(n, n),
        ));
        prod.terms().values().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

/// A superconnection `D = d + ∂ + ω¹ + ω² + ω³` on a chart.
#[derive(Debug, Clone)]
pub struct Superconnection {
    chart: Chart,
    complex: CochainComplex,
    omega1: EndValuedForm,
    omega2: EndValuedForm,
    omega3: Option<EndValuedForm>,
}

impl Superconnection {
    pub fn new(
        chart: Chart,
        complex: CochainComplex,
        omega1: EndValuedForm,
        omega2: EndValuedForm,
        omega3: Option<EndValuedForm>,
    ) -> Result<Self> {
        let expect = |f: &EndValuedForm, k: usize, d: i32| -> Result<()> {
            if f.form_degree() != k || f.inner_degree() != d {
                return structural(format!(
                    "component ω{k} must have form degree {k} and inner degree {d}, got ({}, {})",
                    f.form_degree(),
                    f.inner_degree()
                ));
            }
            if f.space() != complex.space() || f.nvars() != chart.dim() {
                return structural(format!("component ω{k} lives on the wrong space or chart"));
            }
            Ok(())
        };
        expect(&omega1, 1, 0)?;
        expect(&omega2, 2, -1)?;
        if let Some(o3) = &omega3 {
            expect(o3, 3, -2)?;
        }
        Ok(Self {
            chart,
            complex,
            omega1,
            omega2,
            omega3,
        })
    }

    /// The trivial superconnection `d + ∂`.
    pub fn trivial(chart: Chart, complex: CochainComplex) -> Self {
        let n = chart.dim();
        let space = complex.space().clone();
        Self {
            omega1: EndValuedForm::zero(&space, n, 1, 0),
            omega2: EndValuedForm::zero(&space, n, 2, -1),
            omega3: None,
            chart,
            complex,
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn complex(&self) -> &CochainComplex {
        &self.complex
    }

    pub fn omega1(&self) -> &EndValuedForm {
        &self.omega1
    }

    pub fn omega2(&self) -> &EndValuedForm {
        &self.omega2
    }

    pub fn omega3(&self) -> Option<&EndValuedForm> {
        self.omega3.as_ref()
    }

    fn differential_form(&self) -> EndValuedForm {
        EndValuedForm::constant_map(self.chart.dim(), self.complex.differential())
    }

    fn omega3_or_zero(&self) -> EndValuedForm {
        self.omega3
            .clone()
            .unwrap_or_else(|| EndValuedForm::zero(self.complex.space(), self.chart.dim(), 3, -2))
    }

    /// `ω` as a total form `∂ + ω¹ + ω² + ω³`, truncated at the chart dimension.
    pub fn total_form(&self) -> TotalForm {
        let mut parts = vec![
            self.differential_form(),
            self.omega1.clone(),
            self.omega2.clone(),
            self.omega3_or_zero(),
        ];
        parts.truncate(self.chart.dim() + 1);
        TotalForm { parts }
    }

    /// The components of `dω + ω·ω` in form degrees 1, 2, 3.
    pub fn curvature_forms(&self) -> [EndValuedForm; 3] {
        let d = self.differential_form();
        let (w1, w2, w3) = (&self.omega1, &self.omega2, self.omega3_or_zero());
        let r1 = d.wedge(w1).add(&w1.wedge(&d));
        let r2 = w1
            .exterior_d()
            .add(&w1.wedge(w1))
            .add(&d.wedge(w2))
            .add(&w2.wedge(&d));
        let r3 = w2
            .exterior_d()
            .add(&w1.wedge(w2))
            .add(&w2.wedge(w1))
            .add(&d.wedge(&w3))
            .add(&w3.wedge(&d));
        [r1, r2, r3]
    }

    /// Max over samples of the largest coordinate component of each
    /// curvature form, evaluated pointwise.
    pub fn flatness_residuals(&self, samples: &[Vec<f64>]) -> [f64; 3] {
        let d = PointForm::constant(self.complex.differential().matrix().clone());
        let w3 = self.omega3_or_zero();
        let mut out = [0.0; 3];
        for x in samples {
            let (w1, dw1) = PointForm::jet(&self.omega1, x);
            let (w2, dw2) = PointForm::jet(&self.omega2, x);
            let (w3, _) = PointForm::jet(&w3, x);
            let r1 = d.wedge(&w1).add(&w1.wedge(&d));
            let r2 = dw1
                .add(&w1.wedge(&w1))
                .add(&d.wedge(&w2))
                .add(&w2.wedge(&d));
            let r3 = dw2
                .add(&w1.wedge(&w2))
                .add(&w2.wedge(&w1))
                .add(&d.wedge(&w3))
                .add(&w3.wedge(&d));
            for (k, r) in [r1, r2, r3].iter().enumerate() {
                out[k] = f64::max(out[k], r.max_norm());
            }
        }
        out
    }

    /// `φ⁻¹ D φ` for `φ = φ0 + φ1`, where `φ0` is chain-map valued.
    pub fn gauge_transform(
        &self,
        phi0: &InvertibleField,
        phi1: Option<&EndValuedForm>,
    ) -> Result<Self> {
        let n = self.chart.dim();
        let space = self.complex.space().clone();
        let dim = space.total_dim();
        if phi0.forward().shape() != (dim, dim) || phi0.forward().nvars() > n {
            return structural("gauge field has the wrong shape or chart dimension");
        }
        let defect = phi0.inverse_defect();
        if defect > 1e-9 {
            return Err(HolabError::Singular(format!(
                "φ0·φ0⁻¹ differs from id by {defect:.3e}"
            )));
        }
        let d = self.complex.differential().matrix();
        let commutator = phi0.forward().left_mul(d).sub(&phi0.forward().right_mul(d));
        let chain_defect = commutator
            .terms()
            .values()
            .map(|m| m.amax())
            .fold(0.0, f64::max);
        if chain_defect > 1e-9 {
            return Err(HolabError::Singular(format!(
                "φ0 is not chain-map valued (coefficient defect {chain_defect:.3e})"
            )));
        }
        let f0 = EndValuedForm::function(&space, 0, lift(phi0.forward(), n));
        let f0_inv = EndValuedForm::function(&space, 0, lift(phi0.inverse(), n));
        let mut phi_parts = vec![f0];
        let mut inv0 = TotalForm {
            parts: vec![f0_inv],
        };
        if let Some(p1) = phi1 {
            if p1.form_degree() != 1
                || p1.inner_degree() != -1
                || p1.space() != &space
                || p1.nvars() != n
            {
                return structural("φ1 must be a 1-form of inner degree −1 on the same chart");
            }
            phi_parts.push(p1.clone());
        }
        let phi = TotalForm::new(phi_parts)?;
        // φ⁻¹ = Σ_k (−φ0⁻¹φ1)^k φ0⁻¹, a finite sum since φ1 raises form degree.
        let mut phi_inv = inv0.clone();
        if let Some(p1) = phi1 {
            let step = inv0
                .mul(&TotalForm {
                    parts: vec![EndValuedForm::zero(&space, n, 0, 0), p1.clone()],
                })
                .scale(-1.0);
            let mut term = inv0.clone();
            for _ in 0..n {
                term = step.mul(&term);
                phi_inv = phi_inv.add(&term);
            }
        }
        inv0 = phi_inv;
        let omega = inv0.mul(&self.total_form().mul(&phi).add(&phi.exterior_d()));
        let parts = omega.padded();
        let get = |k: usize, inner: i32| {
            parts
                .get(k)
                .cloned()
                .unwrap_or_else(|| EndValuedForm::zero(&space, n, k, inner))
        };
        let w0 = get(0, 1).sub(&EndValuedForm::constant_map(n, self.complex.differential()));
        if w0.max_coefficient() > 1e-9 {
            return Err(HolabError::Singular("φ0⁻¹∂φ0 differs from ∂".into()));
        }
        let w3 = get(3, -2);
        Self::new(
            self.chart.clone(),
            self.complex.clone(),
            get(1, 0),
            get(2, -1),
            if n >= 3 { Some(w3) } else { None },
        )
    }
}

/// A form with constant matrix coefficients: the value of an
/// [`EndValuedForm`] at a point.
#[derive(Debug, Clone)]
pub struct PointForm {
    form_degree: usize,
    inner_degree: i32,
    components: BTreeMap<Vec<usize>, DMatrix<f64>>,
}

impl PointForm {
    fn constant(m: DMatrix<f64>) -> Self {
        Self::function(m, 1)
    }

    /// A 0-form with value `m` of the given inner degree.
    pub fn function(m: DMatrix<f64>, inner_degree: i32) -> Self {
        Self {
            form_degree: 0,
            inner_degree,
            components: BTreeMap::from([(Vec::new(), m)]),
        }
    }

    pub fn form_degree(&self) -> usize {
        self.form_degree
    }

    pub fn components(&self) -> &BTreeMap<Vec<usize>, DMatrix<f64>> {
        &self.components
    }

    /// Coefficient of `dx^{idx}`, zero when absent.
    pub fn component(&self, idx: &[usize], n: usize) -> DMatrix<f64> {
        self.components
            .get(idx)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(n, n))
    }

    /// The same coefficients read with another inner degree, which changes
    /// the Koszul signs of later products.
    pub fn with_inner_degree(mut self, inner_degree: i32) -> Self {
        self.inner_degree = inner_degree;
        self
    }

    pub fn scale(mut self, c: f64) -> Self {
        for m in self.components.values_mut() {
            *m *= c;
        }
        self
    }

    /// Value and exterior derivative of `f` at `x`.
    pub fn jet(f: &EndValuedForm, x: &[f64]) -> (Self, Self) {
        let mut value = Self {
            form_degree: f.form_degree,
            inner_degree: f.inner_degree,
            components: BTreeMap::new(),
        };
        let mut dvalue = Self {
            form_degree: f.form_degree + 1,
            inner_degree: f.inner_degree,
            components: BTreeMap::new(),
        };
        for (idx, c) in &f.components {
            value.components.insert(idx.clone(), c.eval(x));
            for j in 0..f.nvars {
                if let Some((sign, merged)) = merge_indices(&[j], idx) {
                    let dc = c.deriv(j).eval(x) * sign;
                    dvalue.accumulate(merged, dc);
                }
            }
        }
        (value, dvalue)
    }

    fn accumulate(&mut self, idx: Vec<usize>, m: DMatrix<f64>) {
        match self.components.get_mut(&idx) {
            Some(c) => *c += m,
            None => {
                self.components.insert(idx, m);
            }
        }
    }

    pub fn add(mut self, other: &Self) -> Self {
        for (idx, m) in &other.components {
            self.accumulate(idx.clone(), m.clone());
        }
        self
    }

    pub fn wedge(&self, other: &Self) -> Self {
        let sign = if (self.inner_degree * other.form_degree as i32).rem_euclid(2) == 1 {
            -1.0
        } else {
            1.0
        };
        let mut out = Self {
            form_degree: self.form_degree + other.form_degree,
            inner_degree: self.inner_degree + other.inner_degree,
            components: BTreeMap::new(),
        };
        for (a, x) in &self.components {
            for (b, y) in &other.components {
                if let Some((s, merged)) = merge_indices(a, b) {
                    out.accumulate(merged, x * y * (s * sign));
                }
            }
        }
        out
    }

    pub fn max_norm(&self) -> f64 {
        self.components
            .values()
            .map(|m| m.norm())
            .fold(0.0, f64::max)
    }
}

/// Reinterprets a matrix polynomial in fewer variables as one in `nvars`.
fn lift(p: &MatPoly, nvars: usize) -> MatPoly {
    let (r, c) = p.shape();
    let mut out = MatPoly::zero(nvars, r, c);
    for (m, v) in p.terms() {
        out.add_term(*m, v);
    }
    out
}

/// The flat superconnection `φ⁻¹(d + ∂)φ`.
pub fn gauge_flat(
    chart: &Chart,
    complex: &CochainComplex,
    phi0: &InvertibleField,
    phi1: Option<&EndValuedForm>,
) -> Result<Superconnection> {
    Superconnection::trivial(chart.clone(), complex.clone()).gauge_transform(phi0, phi1)
}
