//! Finite-dimensional graded linear algebra.
//!
//! A [`GradedLinearMap`] is stored as one dense matrix on the total spaces
//! whose only nonzero entries sit in the blocks `V^k -> W^{k+d}`. Composition
//! is then a plain matrix product and the block pattern is preserved.
//!
//! [`CochainComplex`] carries the exactness solver used to compare degree -1
//! maps modulo `[∂, End^{-2}(V)]`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{structural, HolabError, Result};

/// Default relative tolerance for deciding exactness.
pub const DEFAULT_EXACTNESS_TOL: f64 = 1e-8;

/// A ℤ-graded vector space with finitely many nonzero degrees.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct GradedSpace {
    dims: BTreeMap<i32, usize>,
}

impl GradedSpace {
    pub fn new<I: IntoIterator<Item = (i32, usize)>>(dims: I) -> Self {
        let dims = dims.into_iter().filter(|&(_, n)| n > 0).collect();
        Self { dims }
    }

    /// Space concentrated in degrees `0, 1, ...` with the given dimensions.
    pub fn from_dims(dims: &[usize]) -> Self {
        Self::new(dims.iter().enumerate().map(|(k, &n)| (k as i32, n)))
    }

    pub fn dim(&self, k: i32) -> usize {
        self.dims.get(&k).copied().unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.dims.values().sum()
    }

    pub fn degrees(&self) -> impl Iterator<Item = i32> + '_ {
        self.dims.keys().copied()
    }

    pub fn dims(&self) -> &BTreeMap<i32, usize> {
        &self.dims
    }

    /// Offset of degree `k` inside the total space (degrees ascending).
    pub fn offset(&self, k: i32) -> usize {
        self.dims.range(..k).map(|(_, n)| n).sum()
    }

    /// Degree of the basis vector at total index `i`.
    pub fn degree_of_index(&self, i: usize) -> i32 {
        let mut acc = 0;
        for (&k, &n) in &self.dims {
            if i < acc + n {
                return k;
            }
            acc += n;
        }
        panic!("index {i} outside graded space of dimension {acc}")
    }
}

impl fmt::Debug for GradedSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradedSpace{:?}", self.dims)
    }
}

/// A degree-homogeneous linear map between graded spaces.
#[derive(Clone, PartialEq)]
pub struct GradedLinearMap {
    source: GradedSpace,
    target: GradedSpace,
    degree: i32,
    data: DMatrix<f64>,
}

impl fmt::Debug for GradedLinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradedLinearMap")
            .field("degree", &self.degree)
            .field("source", &self.source)
            .field("target", &self.target)
            .field("data", &self.data)
            .finish()
    }
}

impl GradedLinearMap {
    pub fn zero(source: &GradedSpace, target: &GradedSpace, degree: i32) -> Self {
        Self {
            source: source.clone(),
            target: target.clone(),
            degree,
            data: DMatrix::zeros(target.total_dim(), source.total_dim()),
        }
    }

    pub fn zero_endo(space: &GradedSpace, degree: i32) -> Self {
        Self::zero(space, space, degree)
    }

    pub fn identity(space: &GradedSpace) -> Self {
        let n = space.total_dim();
        Self {
            source: space.clone(),
            target: space.clone(),
            degree: 0,
            data: DMatrix::identity(n, n),
        }
    }

    /// Builds a map from blocks `k -> (V^k -> W^{k+degree})`. Absent blocks are zero.
    pub fn from_blocks(
        source: &GradedSpace,
        target: &GradedSpace,
        degree: i32,
        blocks: &BTreeMap<i32, DMatrix<f64>>,
    ) -> Result<Self> {
        let mut out = Self::zero(source, target, degree);
        for (&k, block) in blocks {
            out.set_block(k, block)?;
        }
        Ok(out)
    }

    /// Wraps a dense total-space matrix, checking that it respects the grading.
    pub fn from_dense(
        source: &GradedSpace,
        target: &GradedSpace,
        degree: i32,
        data: DMatrix<f64>,
    ) -> Result<Self> {
        if data.nrows() != target.total_dim() || data.ncols() != source.total_dim() {
            return structural(format!(
                "dense matrix is {}x{}, expected {}x{}",
                data.nrows(),
                data.ncols(),
                target.total_dim(),
                source.total_dim()
            ));
        }
        for j in 0..data.ncols() {
            let k = source.degree_of_index(j);
            for i in 0..data.nrows() {
                if data[(i, j)] != 0.0 && target.degree_of_index(i) != k + degree {
                    return structural(format!(
                        "entry ({i},{j}) lies outside the degree {degree} block pattern"
                    ));
                }
            }
        }
        Ok(Self {
            source: source.clone(),
            target: target.clone(),
            degree,
            data,
        })
    }

    /// Wraps a dense matrix, zeroing everything outside the block pattern.
    pub(crate) fn from_dense_projected(
        source: &GradedSpace,
        target: &GradedSpace,
        degree: i32,
        mut data: DMatrix<f64>,
    ) -> Self {
        for j in 0..data.ncols() {
            let k = source.degree_of_index(j);
            for i in 0..data.nrows() {
                if target.degree_of_index(i) != k + degree {
                    data[(i, j)] = 0.0;
                }
            }
        }
        Self {
            source: source.clone(),
            target: target.clone(),
            degree,
            data,
        }
    }

    /// Trusted constructor for matrices produced by graded arithmetic.
    pub(crate) fn from_dense_unchecked(
        source: &GradedSpace,
        target: &GradedSpace,
        degree: i32,
        data: DMatrix<f64>,
    ) -> Self {
        debug_assert_eq!(data.nrows(), target.total_dim());
        debug_assert_eq!(data.ncols(), source.total_dim());
        Self {
            source: source.clone(),
            target: target.clone(),
            degree,
            data,
        }
    }

    pub fn source(&self) -> &GradedSpace {
        &self.source
    }

    pub fn target(&self) -> &GradedSpace {
        &self.target
    }

    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// The block `V^k -> W^{k+degree}` (possibly empty).
    pub fn block(&self, k: i32) -> DMatrix<f64> {
        let (r0, nr) = (
            self.target.offset(k + self.degree),
            self.target.dim(k + self.degree),
        );
        let (c0, nc) = (self.source.offset(k), self.source.dim(k));
        self.data.view((r0, c0), (nr, nc)).into_owned()
    }

    pub fn set_block(&mut self, k: i32, block: &DMatrix<f64>) -> Result<()> {
        let nr = self.target.dim(k + self.degree);
        let nc = self.source.dim(k);
        if block.nrows() != nr || block.ncols() != nc {
            return structural(format!(
                "block {k} of a degree {} map must be {nr}x{nc}, got {}x{}",
                self.degree,
                block.nrows(),
                block.ncols()
            ));
        }
        if nr == 0 || nc == 0 {
            return Ok(());
        }
        let r0 = self.target.offset(k + self.degree);
        let c0 = self.source.offset(k);
        self.data.view_mut((r0, c0), (nr, nc)).copy_from(block);
        Ok(())
    }

    /// Nonzero-shaped blocks, keyed by source degree.
    pub fn blocks(&self) -> BTreeMap<i32, DMatrix<f64>> {
        self.source
            .degrees()
            .filter(|&k| self.target.dim(k + self.degree) > 0)
            .map(|k| (k, self.block(k)))
            .collect()
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_dense_unchecked(&self.source, &self.target, self.degree, &self.data * c)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.source != other.source || self.target != other.target || self.degree != other.degree
        {
            return structural(format!(
                "cannot add degree {} map {:?}->{:?} to degree {} map {:?}->{:?}",
                self.degree, self.source, self.target, other.degree, other.source, other.target
            ));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_dense_unchecked(
            &self.source,
            &self.target,
            self.degree,
            &self.data + &other.data,
        ))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_dense_unchecked(
            &self.source,
            &self.target,
            self.degree,
            &self.data - &other.data,
        ))
    }

    /// Blockwise inverse of a degree-0 endomorphism. Fails naming the first singular degree.
    pub fn inverse(&self) -> Result<Self> {
        if self.degree != 0 || self.source != self.target {
            return structural("only degree-0 endomorphisms can be inverted");
        }
        let mut out = Self::zero_endo(&self.source, 0);
        for k in self.source.degrees() {
            let b = self.block(k);
            let inv = b
                .clone()
                .try_inverse()
                .filter(|inv| inv.iter().all(|x| x.is_finite()))
                .ok_or(HolabError::NotInH {
                    degree: k,
                    condition: f64::INFINITY,
                })?;
            out.set_block(k, &inv)?;
        }
        Ok(out)
    }

    /// Largest 2-norm condition number over the blocks of a degree-0 endomorphism.
    pub fn block_condition_number(&self) -> f64 {
        self.source
            .degrees()
            .map(|k| {
                let sv = self.block(k).singular_values();
                let max = sv.max();
                let min = sv.min();
                if min == 0.0 {
                    f64::INFINITY
                } else {
                    max / min
                }
            })
            .fold(1.0, f64::max)
    }
}

/// `f ∘ g`: degrees add, blocks multiply.
pub fn compose(f: &GradedLinearMap, g: &GradedLinearMap) -> Result<GradedLinearMap> {
    if g.target != f.source {
        return structural(format!(
            "cannot compose: target {:?} of the right factor differs from source {:?} of the left",
            g.target, f.source
        ));
    }
    Ok(GradedLinearMap::from_dense_unchecked(
        &g.source,
        &f.target,
        f.degree + g.degree,
        &f.data * &g.data,
    ))
}

impl Add for &GradedLinearMap {
    type Output = GradedLinearMap;
    fn add(self, rhs: Self) -> GradedLinearMap {
        self.try_add(rhs).expect("graded addition")
    }
}

impl Sub for &GradedLinearMap {
    type Output = GradedLinearMap;
    fn sub(self, rhs: Self) -> GradedLinearMap {
        self.try_sub(rhs).expect("graded subtraction")
    }
}

impl Mul for &GradedLinearMap {
    type Output = GradedLinearMap;
    fn mul(self, rhs: Self) -> GradedLinearMap {
        compose(self, rhs).expect("graded composition")
    }
}

impl Mul<f64> for &GradedLinearMap {
    type Output = GradedLinearMap;
    fn mul(self, rhs: f64) -> GradedLinearMap {
        self.scale(rhs)
    }
}

impl Neg for &GradedLinearMap {
    type Output = GradedLinearMap;
    fn neg(self) -> GradedLinearMap {
        self.scale(-1.0)
    }
}

/// Outcome of solving `∂k − k∂ = X` over `k ∈ End^{-2}(V)`.
#[derive(Debug, Clone)]
pub struct ExactnessResult {
    pub witness: GradedLinearMap,
    pub residual: f64,
    pub is_exact: bool,
}

/// Total-space positions of the entries a degree-`d` endomorphism may occupy.
fn degree_positions(space: &GradedSpace, d: i32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in space.degrees() {
        let nr = space.dim(k + d);
        if nr == 0 {
            continue;
        }
        let (r0, c0) = (space.offset(k + d), space.offset(k));
        for c in 0..space.dim(k) {
            for r in 0..nr {
                out.push((r0 + r, c0 + c));
            }
        }
    }
    out
}

/// `∂X − (−1)^d X∂` for an arbitrary degree +1 endomorphism `∂`, which
/// need not square to zero.
pub fn graded_commutator(d: &GradedLinearMap, x: &GradedLinearMap) -> Result<GradedLinearMap> {
    if d.degree() != 1 || d.source() != d.target() {
        return structural("the differential must be a degree +1 endomorphism");
    }
    if x.source() != d.source() || x.target() != d.target() {
        return structural(format!(
            "map {:?}->{:?} is not an endomorphism of {:?}",
            x.source(),
            x.target(),
            d.source()
        ));
    }
    let sign = if x.degree().rem_euclid(2) == 0 {
        -1.0
    } else {
        1.0
    };
    let m = d.matrix() * x.matrix() + sign * (x.matrix() * d.matrix());
    Ok(GradedLinearMap::from_dense_unchecked(
        d.source(),
        d.source(),
        x.degree() + 1,
        m,
    ))
}

/// One-off least-squares solve of `∂k − k∂ = X` for any degree +1 map `∂`.
/// [`CochainComplex::solve_exactness`] caches the solver instead.
pub fn solve_commutator_equation(
    d: &GradedLinearMap,
    x: &GradedLinearMap,
    tol: f64,
) -> Result<ExactnessResult> {
    if d.degree() != 1 || d.source() != d.target() {
        return structural("the differential must be a degree +1 endomorphism");
    }
    let solver = ExactnessSolver::new(d.source(), d.matrix());
    solver.solve(d, x, tol)
}

/// A matrix `M` with `op·M·b` the least-squares fit of `b`, from a
/// column-pivoted QR that drops pivots at or below `tol`. Used instead of an
/// SVD pseudo-inverse, which nalgebra computes inaccurately for some
/// rank-deficient operators.
fn least_squares_operator(op: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = op.shape();
    let qr = op.clone().col_piv_qr();
    let r = qr.r();
    let rank = (0..m.min(n)).take_while(|&i| r[(i, i)].abs() > tol).count();
    let mut out = DMatrix::zeros(n, m);
    if rank > 0 {
        let r11 = r.view((0, 0), (rank, rank)).into_owned();
        let q1t = qr.q().columns(0, rank).transpose();
        let z = r11.solve_upper_triangular(&q1t).expect("nonzero pivots");
        out.rows_mut(0, rank).copy_from(&z);
    }
    qr.p().inv_permute_rows(&mut out);
    out
}

/// Least-squares solver for the exactness relation, built once per complex.
#[derive(Debug)]
struct ExactnessSolver {
    minus2: Vec<(usize, usize)>,
    minus1: Vec<(usize, usize)>,
    pinv: DMatrix<f64>,
}

impl ExactnessSolver {
    fn new(space: &GradedSpace, d: &DMatrix<f64>) -> Self {
        let minus2 = degree_positions(space, -2);
        let minus1 = degree_positions(space, -1);
        let n = space.total_dim();
        let mut op = DMatrix::zeros(minus1.len(), minus2.len());
        for (col, &(r, c)) in minus2.iter().enumerate() {
            let mut k = DMatrix::zeros(n, n);
            k[(r, c)] = 1.0;
            let image = d * &k - &k * d;
            for (row, &(i, j)) in minus1.iter().enumerate() {
                op[(row, col)] = image[(i, j)];
            }
        }
        let pinv = if op.is_empty() {
            DMatrix::zeros(minus2.len(), minus1.len())
        } else {
            least_squares_operator(&op, 1e-12 * op.norm().max(1.0))
        };
        Self {
            minus2,
            minus1,
            pinv,
        }
    }

    fn solve(&self, d: &GradedLinearMap, x: &GradedLinearMap, tol: f64) -> Result<ExactnessResult> {
        if x.degree() != -1 {
            return structural(format!(
                "exactness is decided for degree -1 maps, got degree {}",
                x.degree()
            ));
        }
        let rhs = DVector::from_iterator(
            self.minus1.len(),
            self.minus1.iter().map(|&(i, j)| x.matrix()[(i, j)]),
        );
        let coeffs = &self.pinv * rhs;
        let n = d.source().total_dim();
        let mut k = DMatrix::zeros(n, n);
        for (&(i, j), &c) in self.minus2.iter().zip(coeffs.iter()) {
            k[(i, j)] = c;
        }
        let witness = GradedLinearMap::from_dense_unchecked(d.source(), d.source(), -2, k);
        let image = graded_commutator(d, &witness)?;
        let residual = (x - &image).norm();
        let is_exact = residual <= tol * (1.0 + x.norm());
        Ok(ExactnessResult {
            witness,
            residual,
            is_exact,
        })
    }
}

/// A finite-dimensional cochain complex `(V, ∂)` with `∂∘∂ = 0`.
#[derive(Debug, Clone)]
pub struct CochainComplex {
    space: GradedSpace,
    differential: GradedLinearMap,
    solver: Arc<ExactnessSolver>,
}

impl PartialEq for CochainComplex {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.differential == other.differential
    }
}

impl CochainComplex {
    /// Builds the complex from blocks `k -> (V^k -> V^{k+1})`.
    pub fn new(space: GradedSpace, blocks: &BTreeMap<i32, DMatrix<f64>>) -> Result<Self> {
        let differential = GradedLinearMap::from_blocks(&space, &space, 1, blocks)?;
        Self::from_differential(differential)
    }

    pub fn from_differential(differential: GradedLinearMap) -> Result<Self> {
        if differential.degree() != 1 || differential.source() != differential.target() {
            return structural("the differential must be a degree +1 endomorphism");
        }
        let square = (&differential * &differential).norm();
        let scale = 1.0 + differential.norm().powi(2);
        if square > 1e-12 * scale {
            return structural(format!("∂∘∂ has norm {square:.3e}, expected 0"));
        }
        let space = differential.source().clone();
        let solver = Arc::new(ExactnessSolver::new(&space, differential.matrix()));
        Ok(Self {
            space,
            differential,
            solver,
        })
    }

    /// The complex with zero differential on the given space.
    pub fn zero_differential(space: GradedSpace) -> Self {
        let differential = GradedLinearMap::zero_endo(&space, 1);
        Self::from_differential(differential).expect("zero differential squares to zero")
    }

    pub fn space(&self) -> &GradedSpace {
        &self.space
    }

    pub fn differential(&self) -> &GradedLinearMap {
        &self.differential
    }

    pub fn total_dim(&self) -> usize {
        self.space.total_dim()
    }

    /// `∂X − (−1)^d X∂` for a degree-`d` endomorphism `X`.
    pub fn graded_commutator(&self, x: &GradedLinearMap) -> Result<GradedLinearMap> {
        graded_commutator(&self.differential, x)
    }

    pub(crate) fn check_endo(&self, x: &GradedLinearMap) -> Result<()> {
        if x.source() != &self.space || x.target() != &self.space {
            return structural(format!(
                "map {:?}->{:?} is not an endomorphism of {:?}",
                x.source(),
                x.target(),
                self.space
            ));
        }
        Ok(())
    }

    /// Least-squares solve of `∂k − k∂ = X`; `is_exact` iff the residual is
    /// at most `tol·(1 + ‖X‖)`.
    pub fn solve_exactness(&self, x: &GradedLinearMap, tol: f64) -> Result<ExactnessResult> {
        self.check_endo(x)?;
        if x.degree() != -1 {
            return structural(format!(
                "exactness is decided for degree -1 maps, got degree {}",
                x.degree()
            ));
        }
        self.solver.solve(&self.differential, x, tol)
    }

    /// Decides whether `a − b` is exact.
    pub fn equal_mod_exact(
        &self,
        a: &GradedLinearMap,
        b: &GradedLinearMap,
        tol: f64,
    ) -> Result<ExactnessResult> {
        self.solve_exactness(&a.try_sub(b)?, tol)
    }

    /// Chain-map defect `‖∂g − g∂‖` of a degree-0 endomorphism.
    pub fn chain_defect(&self, g: &GradedLinearMap) -> f64 {
        let d = self.differential.matrix();
        (d * g.matrix() - g.matrix() * d).norm()
    }

    pub fn identity(&self) -> GradedLinearMap {
        GradedLinearMap::identity(&self.space)
    }

    pub fn zero(&self, degree: i32) -> GradedLinearMap {
        GradedLinearMap::zero_endo(&self.space, degree)
    }

    /// Wraps a dense endomorphism matrix of the given degree, dropping
    /// entries outside the block pattern.
    pub fn endo(&self, degree: i32, data: DMatrix<f64>) -> GradedLinearMap {
        GradedLinearMap::from_dense_projected(&self.space, &self.space, degree, data)
    }
}
