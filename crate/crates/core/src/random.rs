//! Seeded generators for complexes and group elements, shared by tests,
//! benchmarks and scenario generation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::crossed::{CrossedModuleContext, GElement, HElement};
use crate::graded::{CochainComplex, GradedLinearMap, GradedSpace};

/// Matrix with entries uniform in `[-scale, scale]`.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale))
}

/// A complex in degrees `0..dims.len()` with random differential blocks.
/// Each block kills the image of the previous one and may drop one rank,
/// so cohomology is often nonzero. The differential is nonzero whenever two
/// adjacent degrees are nonzero.
pub fn random_complex<R: Rng>(rng: &mut R, dims: &[usize]) -> CochainComplex {
    let possible = dims.windows(2).any(|w| w[0] > 0 && w[1] > 0);
    loop {
        let c = random_complex_once(rng, dims);
        if !possible || !c.differential().is_zero() {
            return c;
        }
    }
}

fn random_complex_once<R: Rng>(rng: &mut R, dims: &[usize]) -> CochainComplex {
    let space = GradedSpace::from_dims(dims);
    let mut blocks = BTreeMap::new();
    let mut prev: Option<DMatrix<f64>> = None;
    for k in 0..dims.len().saturating_sub(1) {
        let (n, m) = (dims[k], dims[k + 1]);
        if n == 0 || m == 0 {
            prev = None;
            continue;
        }
        let mut projector = DMatrix::identity(n, n);
        if let Some(p) = &prev {
            // Pivoted QR rather than SVD: nalgebra's SVD loses accuracy on
            // some rank-deficient inputs.
            let qr = p.clone().col_piv_qr();
            let r = qr.r();
            let rank = (0..r.nrows().min(r.ncols()))
                .take_while(|&i| r[(i, i)].abs() > 1e-10)
                .count();
            if rank == n {
                projector.fill(0.0);
            } else {
                let basis = qr.q().columns(0, rank).into_owned();
                projector -= &basis * basis.transpose();
            }
        }
        let full = n.min(m);
        let rank = if full > 0 && rng.gen_bool(0.4) {
            full - 1
        } else {
            full
        };
        let r = &random_matrix(rng, m, rank, 1.0) * &random_matrix(rng, rank, n, 1.0);
        let block = &r * &projector;
        blocks.insert(k as i32, block.clone());
        prev = Some(block);
    }
    CochainComplex::new(space, &blocks).expect("generated differential squares to zero")
}

/// Random endomorphism of the given degree.
pub fn random_endo<R: Rng>(
    rng: &mut R,
    complex: &CochainComplex,
    degree: i32,
    scale: f64,
) -> GradedLinearMap {
    let n = complex.total_dim();
    complex.endo(degree, random_matrix(rng, n, n, scale))
}

/// Random element of `H`; retries until `τ(h)` is well conditioned.
pub fn random_h<R: Rng>(rng: &mut R, ctx: &CrossedModuleContext, scale: f64) -> HElement {
    let mut s = scale;
    loop {
        let rep = random_endo(rng, ctx.complex(), -1, s);
        if let Ok(h) = ctx.h_element(rep) {
            if ctx.tau(&h).map(|t| t.condition() < 1e3).unwrap_or(false) {
                return h;
            }
        }
        s *= 0.8;
    }
}

/// Random element of `G` of the form `c·τ(h1)·τ(h2)`.
pub fn random_g<R: Rng>(rng: &mut R, ctx: &CrossedModuleContext) -> GElement {
    let c = rng.gen_range(0.5..2.0);
    let h1 = random_h(rng, ctx, 0.4);
    let h2 = random_h(rng, ctx, 0.4);
    let t1 = ctx.tau(&h1).expect("checked in random_h");
    let t2 = ctx.tau(&h2).expect("checked in random_h");
    let map = (t1.map() * t2.map()).scale(c);
    ctx.g_element(map).expect("product of chain automorphisms")
}

/// Random graded dimensions with at most `max_total` in total and at most
/// three degrees.
pub fn random_dims<R: Rng>(rng: &mut R, max_total: usize) -> Vec<usize> {
    loop {
        let dims: Vec<usize> = (0..3).map(|_| rng.gen_range(0..=4)).collect();
        let total: usize = dims.iter().sum();
        if total >= 2 && total <= max_total {
            return dims;
        }
    }
}

/// Square-zero chain map `∂S + S∂` for a random rank-one `S: V^k → V^{k−1}`
/// with `wᵀ∂u = 0`. Returns `None` when the complex admits no such factor.
pub fn random_square_zero<R: Rng>(rng: &mut R, complex: &CochainComplex) -> Option<DMatrix<f64>> {
    let space = complex.space();
    let n = space.total_dim();
    let d = complex.differential().matrix();
    let degrees: Vec<i32> = space.degrees().filter(|&k| space.dim(k - 1) > 0).collect();
    for _ in 0..8 {
        if degrees.is_empty() {
            return None;
        }
        let k = degrees[rng.gen_range(0..degrees.len())];
        let mut u = nalgebra::DVector::zeros(n);
        let mut w = nalgebra::DVector::zeros(n);
        for i in 0..space.dim(k - 1) {
            u[space.offset(k - 1) + i] = rng.gen_range(-1.0..=1.0);
        }
        for i in 0..space.dim(k) {
            w[space.offset(k) + i] = rng.gen_range(-1.0..=1.0);
        }
        let v = d * &u;
        let vv = v.dot(&v);
        if vv > 1e-12 {
            w -= &v * (w.dot(&v) / vv);
        }
        let s = &u * w.transpose();
        let nmat = d * &s + &s * d;
        if nmat.norm() > 1e-3 {
            return Some(nmat);
        }
    }
    None
}

/// Random gauge `φ0 = E1·E2·C` built from two unipotent factors with
/// polynomial coefficients of the given degree and a constant `C = τ(h)`,
/// plus an optional random degree −1 one-form `φ1` with affine coefficients.
pub fn random_gauge<R: Rng>(
    rng: &mut R,
    ctx: &CrossedModuleContext,
    nvars: usize,
    degree: u32,
    with_phi1: bool,
) -> (
    crate::forms::InvertibleField,
    Option<crate::forms::EndValuedForm>,
) {
    use crate::forms::{EndValuedForm, InvertibleField};
    use crate::poly::{MatPoly, Polynomial};

    let complex = ctx.complex();
    let n = complex.total_dim();
    let random_poly = |rng: &mut R, deg: u32| {
        let mut p = Polynomial::zero(nvars);
        for e in crate::poly::monomials_up_to(nvars, deg) {
            p.add_term(e, rng.gen_range(-1.0..=1.0) * 0.6);
        }
        p
    };
    let h = random_h(rng, ctx, 0.3);
    let c = ctx.tau(&h).expect("checked in random_h");
    let mut field = InvertibleField::constant(nvars, c.map().matrix()).expect("τ(h) is invertible");
    for _ in 0..2 {
        if let Some(nil) = random_square_zero(rng, complex) {
            let p = random_poly(rng, degree);
            let e = InvertibleField::unipotent(&p, &nil).expect("square-zero factor");
            field = e.then(&field);
        }
    }
    let phi1 = with_phi1.then(|| {
        let mut comps = BTreeMap::new();
        for i in 0..nvars {
            let mut coeff = MatPoly::zero(nvars, n, n);
            for e in crate::poly::monomials_up_to(nvars, 1) {
                let m = complex
                    .endo(-1, random_matrix(rng, n, n, 0.5))
                    .into_matrix();
                coeff.add_term(e, &m);
            }
            comps.insert(vec![i], coeff);
        }
        EndValuedForm::from_components(complex.space(), nvars, 1, -1, comps)
            .expect("degree −1 coefficients")
    });
    (field, phi1)
}

/// A Γ-cocycle with constant data of coboundary shape:
/// `g_ij = τ(b_ij)·k_j·k_i⁻¹` and `a_ijk = b_ik ⋆ α(k_k k_j⁻¹, b_ij⁻¹) ⋆ b_jk⁻¹`
/// for random `k_i ∈ G` and `b_ij ∈ H`, on every ordered pair and triple of
/// distinct charts.
pub fn random_gamma_cocycle<R: Rng>(
    rng: &mut R,
    ctx: &CrossedModuleContext,
    cover: crate::bundle::Cover,
) -> crate::bundle::GammaCocycle {
    use crate::forms::InvertibleField;
    use crate::poly::MatPoly;

    let m = cover.len();
    let nvars = cover.dim();
    let k: Vec<GElement> = (0..m).map(|_| random_g(rng, ctx)).collect();
    let mut b = BTreeMap::new();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                b.insert((i, j), random_h(rng, ctx, 0.3));
            }
        }
    }
    let mut transitions = BTreeMap::new();
    for (&(i, j), bij) in &b {
        let g = ctx
            .tau(bij)
            .expect("checked in random_h")
            .mul(&k[j])
            .mul(&k[i].inverse());
        transitions.insert(
            (i, j),
            InvertibleField::constant(nvars, g.map().matrix()).expect("invertible"),
        );
    }
    let mut associators = BTreeMap::new();
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                if i == j || j == l || i == l {
                    continue;
                }
                let shift = k[l].mul(&k[j].inverse());
                let inv_ij = ctx.h_inv(&b[&(i, j)]).expect("invertible");
                let inv_jl = ctx.h_inv(&b[&(j, l)]).expect("invertible");
                let a = ctx.h_mul(
                    &ctx.h_mul(&b[&(i, l)], &ctx.alpha(&shift, &inv_ij)),
                    &inv_jl,
                );
                associators.insert(
                    (i, j, l),
                    MatPoly::constant(nvars, a.rep().matrix().clone()),
                );
            }
        }
    }
    crate::bundle::GammaCocycle::new(cover, ctx.clone(), transitions, associators)
        .expect("consistent shapes")
}
