//! Cocycle descriptions of principal 2-bundles built from superconnections.
//!
//! Transitions `g_ij` carry the `i`-frame to the `j`-frame, so the cocycle
//! condition reads `g_ik = τ(a_ijk)·g_jk·g_ij` and connection data transform
//! by `A_j + τ_*(φ_ij) = g A_i g⁻¹ − dg·g⁻¹`. All charts are boxes in one
//! ambient coordinate system and every field is a polynomial in it.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::crossed::CrossedModuleContext;
use crate::error::{HolabError, Result};
use crate::forms::{
    index_tuples, Chart, EndValuedForm, InvertibleField, PointForm, Superconnection,
};
use crate::graded::GradedLinearMap;
use crate::holonomy::transport_ode;
use crate::poly::MatPoly;
use crate::simplex::PLPath;

/// A finite cover by boxes.
#[derive(Debug, Clone)]
pub struct Cover {
    charts: Vec<Chart>,
}

impl Cover {
    pub fn new(charts: Vec<Chart>) -> Result<Self> {
        if charts.is_empty() {
            return Err(HolabError::Structural(
                "a cover needs at least one chart".into(),
            ));
        }
        let dim = charts[0].dim();
        if charts.iter().any(|c| c.dim() != dim) {
            return Err(HolabError::Structural(
                "charts of a cover must share the ambient dimension".into(),
            ));
        }
        Ok(Self { charts })
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.charts[0].dim()
    }

    /// The common box of the given charts, or `None` if it is empty.
    pub fn overlap(&self, idx: &[usize]) -> Option<Chart> {
        let dim = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; dim];
        let mut hi = vec![f64::INFINITY; dim];
        for &i in idx {
            let c = self.charts.get(i)?;
            for k in 0..dim {
                lo[k] = lo[k].max(c.lo()[k]);
                hi[k] = hi[k].min(c.hi()[k]);
            }
        }
        Chart::new(lo, hi).ok()
    }
}

fn eval_field(f: &InvertibleField, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    (f.forward().eval(x), f.inverse().eval(x))
}

/// A Γ-cocycle: chain-map-valued transitions and `H`-valued associators.
/// Reverse transitions are filled in by inversion; missing associators
/// are zero.
#[derive(Debug, Clone)]
pub struct GammaCocycle {
    cover: Cover,
    ctx: CrossedModuleContext,
    transitions: BTreeMap<(usize, usize), InvertibleField>,
    associators: BTreeMap<(usize, usize, usize), MatPoly>,
}

impl GammaCocycle {
    pub fn new(
        cover: Cover,
        ctx: CrossedModuleContext,
        mut transitions: BTreeMap<(usize, usize), InvertibleField>,
        associators: BTreeMap<(usize, usize, usize), MatPoly>,
    ) -> Result<Self> {
        let n = ctx.complex().total_dim();
        for (&(i, j), g) in &transitions {
            if i == j || i >= cover.len() || j >= cover.len() {
                return Err(HolabError::Structural(format!(
                    "invalid transition indices ({i}, {j})"
                )));
            }
            if g.forward().shape() != (n, n) || g.forward().nvars() != cover.dim() {
                return Err(HolabError::Structural(format!(
                    "transition ({i}, {j}) has the wrong shape"
                )));
            }
        }
        let reverse: Vec<_> = transitions
            .iter()
            .filter(|(&(i, j), _)| !transitions.contains_key(&(j, i)))
            .map(|(&(i, j), g)| ((j, i), g.inverted()))
            .collect();
        transitions.extend(reverse);
        for (&(i, j, k), a) in &associators {
            if [i, j, k].iter().any(|&m| m >= cover.len()) || a.shape() != (n, n) {
                return Err(HolabError::Structural(format!(
                    "invalid associator ({i}, {j}, {k})"
                )));
            }
        }
        Ok(Self {
            cover,
            ctx,
            transitions,
            associators,
        })
    }

    /// Identity transitions on every overlap and zero associators.
    pub fn trivial(cover: Cover, ctx: CrossedModuleContext) -> Self {
        let n = ctx.complex().total_dim();
        let mut transitions = BTreeMap::new();
        for i in 0..cover.len() {
            for j in 0..cover.len() {
                if i != j && cover.overlap(&[i, j]).is_some() {
                    transitions.insert((i, j), InvertibleField::identity(cover.dim(), n));
                }
            }
        }
        Self {
            cover,
            ctx,
            transitions,
            associators: BTreeMap::new(),
        }
    }

    pub fn cover(&self) -> &Cover {
        &self.cover
    }

    pub fn context(&self) -> &CrossedModuleContext {
        &self.ctx
    }

    pub fn transitions(&self) -> &BTreeMap<(usize, usize), InvertibleField> {
        &self.transitions
    }

    /// `(g_ij(x), g_ij(x)⁻¹)`; the identity when `i = j`.
    pub fn transition_at(
        &self,
        i: usize,
        j: usize,
        x: &[f64],
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        if i == j {
            let n = self.ctx.complex().total_dim();
            return Some((DMatrix::identity(n, n), DMatrix::identity(n, n)));
        }
        self.transitions.get(&(i, j)).map(|g| eval_field(g, x))
    }

    /// `∂g_ij/∂x_k` at `x`.
    pub fn transition_derivative(&self, i: usize, j: usize, k: usize, x: &[f64]) -> DMatrix<f64> {
        let n = self.ctx.complex().total_dim();
        match self.transitions.get(&(i, j)) {
            Some(g) if i != j => g.forward().deriv(k).eval(x),
            _ => DMatrix::zeros(n, n),
        }
    }

    pub fn associator(&self, i: usize, j: usize, k: usize) -> Option<&MatPoly> {
        self.associators.get(&(i, j, k))
    }

    /// `a_ijk(x)`, zero when not declared.
    pub fn associator_at(&self, i: usize, j: usize, k: usize, x: &[f64]) -> DMatrix<f64> {
        let n = self.ctx.complex().total_dim();
        self.associators
            .get(&(i, j, k))
            .map(|a| a.eval(x))
            .unwrap_or_else(|| DMatrix::zeros(n, n))
    }

    /// Ordered tuples of distinct indices with a nonempty common overlap and
    /// declared transitions between consecutive entries and first/last.
    fn tuples(&self, len: usize) -> Vec<Vec<usize>> {
        let m = self.cover.len();
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(len);
        fn rec(m: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == len {
                out.push(cur.clone());
                return;
            }
            for i in 0..m {
                if !cur.contains(&i) {
                    cur.push(i);
                    rec(m, len, cur, out);
                    cur.pop();
                }
            }
        }
        rec(m, len, &mut cur, &mut out);
        out.retain(|t| {
            self.cover.overlap(t).is_some()
                && t.iter().enumerate().all(|(a, &i)| {
                    t[a + 1..]
                        .iter()
                        .all(|&j| self.transitions.contains_key(&(i, j)))
                })
        });
        out
    }
}

/// Maximal residuals of the two cocycle identities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CocycleReport {
    /// `‖g_ik − τ(a_ijk)·g_jk·g_ij‖`.
    pub transition: f64,
    /// Exactness residual of `a_ijl ⋆ a_jkl − a_ikl ⋆ α(g_kl, a_ijk)`.
    pub associator: f64,
    pub triples: usize,
    pub quadruples: usize,
}

/// Samples both cocycle identities on every triple and quadruple overlap.
pub fn validate_cocycle(c: &GammaCocycle, samples: usize) -> Result<CocycleReport> {
    let ctx = &c.ctx;
    let complex = ctx.complex();
    let mut report = CocycleReport::default();
    for t in c.tuples(3) {
        let (i, j, k) = (t[0], t[1], t[2]);
        report.triples += 1;
        let chart = c.cover.overlap(&t).expect("filtered");
        for x in chart.samples(samples) {
            let g_ik = c.transition_at(i, k, &x).expect("filtered").0;
            let g_jk = c.transition_at(j, k, &x).expect("filtered").0;
            let g_ij = c.transition_at(i, j, &x).expect("filtered").0;
            let a = complex.endo(-1, c.associator_at(i, j, k, &x));
            let tau = ctx.tau_map(&a).into_matrix();
            report.transition = report.transition.max((g_ik - tau * g_jk * g_ij).norm());
        }
    }
    for t in c.tuples(4) {
        let (i, j, k, l) = (t[0], t[1], t[2], t[3]);
        report.quadruples += 1;
        let chart = c.cover.overlap(&t).expect("filtered");
        for x in chart.samples(samples) {
            let a = |p, q, r| complex.endo(-1, c.associator_at(p, q, r, &x));
            let (g_kl, g_kl_inv) = c.transition_at(k, l, &x).expect("filtered");
            let conj = complex.endo(-1, &g_kl * a(i, j, k).matrix() * g_kl_inv);
            let lhs = ctx.star(&a(i, j, l), &a(j, k, l));
            let rhs = ctx.star(&a(i, k, l), &conj);
            let r = complex.equal_mod_exact(&lhs, &rhs, ctx.tol())?;
            report.associator = report.associator.max(r.residual);
        }
    }
    Ok(report)
}

/// Infinitesimal operations of the crossed module on raw representatives.
#[derive(Debug, Clone)]
struct Lie {
    d: DMatrix<f64>,
}

impl Lie {
    fn new(ctx: &CrossedModuleContext) -> Self {
        Self {
            d: ctx.complex().differential().matrix().clone(),
        }
    }

    fn tau_star(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.d * x + x * &self.d
    }

    fn tau(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::identity(h.nrows(), h.nrows()) + self.tau_star(h)
    }

    fn star(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a + b + a * self.tau_star(b)
    }

    fn h_inv(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let t = self
            .tau(h)
            .try_inverse()
            .ok_or_else(|| HolabError::Singular("τ(h) is singular".into()))?;
        Ok(-h * t)
    }

    /// Lie bracket of `𝔥`, the linearised `⋆`-commutator.
    fn bracket(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.tau_star(y) - y * self.tau_star(x)
    }

    /// `α_*(X)(S) = XS − SX`.
    fn alpha_star(x: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
        x * s - s * x
    }

    /// Left Maurer–Cartan form of `H` at `h` on the tangent vector `η`.
    fn theta(&self, h_inv: &DMatrix<f64>, eta: &DMatrix<f64>) -> DMatrix<f64> {
        eta + h_inv * self.tau_star(eta)
    }

    /// `Ad_h⁻¹(X)`, the derivative of `h⁻¹ ⋆ εX ⋆ h`.
    fn ad_inv(&self, h: &DMatrix<f64>, h_inv: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let y = x * self.tau(h);
        &y + h_inv * self.tau_star(&y)
    }

    /// `(α̃_h)_*(Y)` for `α̃_h(g) = h⁻¹ ⋆ α(g, h)`.
    fn alpha_tilde(
        &self,
        h: &DMatrix<f64>,
        h_inv: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        self.theta(h_inv, &Self::alpha_star(y, h))
    }
}

/// A Γ-cocycle with connection data `(A_i, B_i)` and gauge forms `φ_ij`.
#[derive(Debug, Clone)]
pub struct DifferentialCocycle {
    base: GammaCocycle,
    a: Vec<EndValuedForm>,
    b: Vec<EndValuedForm>,
    phi: BTreeMap<(usize, usize), EndValuedForm>,
}

fn expect_form(f: &EndValuedForm, form: usize, inner: i32, nvars: usize, what: &str) -> Result<()> {
    if f.form_degree() != form || f.inner_degree() != inner || f.nvars() != nvars {
        return Err(HolabError::Structural(format!(
            "{what} must be a {form}-form of inner degree {inner} in {nvars} variables"
        )));
    }
    Ok(())
}

impl DifferentialCocycle {
    /// Missing `φ_ji` are filled in as `−g_ji φ_ij g_ij`, the value forced by
    /// the triple condition with `k = i`.
    pub fn new(
        base: GammaCocycle,
        a: Vec<EndValuedForm>,
        b: Vec<EndValuedForm>,
        mut phi: BTreeMap<(usize, usize), EndValuedForm>,
    ) -> Result<Self> {
        let m = base.cover.len();
        let nvars = base.cover.dim();
        if a.len() != m || b.len() != m {
            return Err(HolabError::Structural(format!(
                "expected {m} connection forms per kind"
            )));
        }
        for i in 0..m {
            expect_form(&a[i], 1, 0, nvars, "A")?;
            expect_form(&b[i], 2, -1, nvars, "B")?;
        }
        for (&(i, j), f) in &phi {
            expect_form(f, 1, -1, nvars, "φ")?;
            if !base.transitions.contains_key(&(i, j)) {
                return Err(HolabError::Structural(format!(
                    "φ given for ({i}, {j}) without a transition"
                )));
            }
        }
        let reverse: Vec<_> = phi
            .iter()
            .filter(|(&(i, j), _)| !phi.contains_key(&(j, i)))
            .map(|(&(i, j), f)| {
                let g_ji = base.transitions[&(j, i)].forward();
                let g_ij = base.transitions[&(i, j)].forward();
                let comps = f
                    .components()
                    .iter()
                    .map(|(idx, c)| (idx.clone(), g_ji.mul(c).mul(g_ij).scale(-1.0)))
                    .collect();
                EndValuedForm::from_components(f.space(), nvars, 1, -1, comps).map(|r| ((j, i), r))
            })
            .collect::<Result<_>>()?;
        phi.extend(reverse);
        Ok(Self { base, a, b, phi })
    }

    pub fn base(&self) -> &GammaCocycle {
        &self.base
    }

    pub fn connection(&self, i: usize) -> (&EndValuedForm, &EndValuedForm) {
        (&self.a[i], &self.b[i])
    }

    pub fn phi(&self, i: usize, j: usize) -> Option<&EndValuedForm> {
        self.phi.get(&(i, j))
    }

    fn phi_jet(&self, i: usize, j: usize, x: &[f64]) -> (PointForm, PointForm) {
        match self.phi.get(&(i, j)) {
            Some(f) => PointForm::jet(f, x),
            None => {
                let zero = EndValuedForm::zero(
                    self.base.ctx.complex().space(),
                    self.base.cover.dim(),
                    1,
                    -1,
                );
                PointForm::jet(&zero, x)
            }
        }
    }
}

/// Maximal residuals of the three differential cocycle conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DifferentialReport {
    /// `‖A_j + τ_*(φ_ij) − g A_i g⁻¹ + dg·g⁻¹‖`.
    pub connection: f64,
    /// Exactness residual of the transformation law of `B`.
    pub curving: f64,
    /// Exactness residual of the triple-overlap law of `φ`.
    pub gauge: f64,
    pub pairs: usize,
    pub triples: usize,
}

/// Samples the differential cocycle conditions on all overlaps.
pub fn validate_differential(
    dc: &DifferentialCocycle,
    samples: usize,
) -> Result<DifferentialReport> {
    let c = &dc.base;
    let complex = c.ctx.complex();
    let lie = Lie::new(&c.ctx);
    let n = complex.total_dim();
    let dim = c.cover.dim();
    let exact = |m: DMatrix<f64>| -> Result<f64> {
        Ok(complex
            .solve_exactness(&complex.endo(-1, m), c.ctx.tol())?
            .residual)
    };
    let mut report = DifferentialReport::default();
    for &(i, j) in c.transitions.keys() {
        let Some(chart) = c.cover.overlap(&[i, j]) else {
            continue;
        };
        report.pairs += 1;
        for x in chart.samples(samples) {
            let (g, g_inv) = c.transition_at(i, j, &x).expect("declared");
            let (ai, _) = PointForm::jet(&dc.a[i], &x);
            let (aj, _) = PointForm::jet(&dc.a[j], &x);
            let (bi, _) = PointForm::jet(&dc.b[i], &x);
            let (bj, _) = PointForm::jet(&dc.b[j], &x);
            let (phi, dphi) = dc.phi_jet(i, j, &x);
            for k in 0..dim {
                let dg = c.transition_derivative(i, j, k, &x);
                let lhs = aj.component(&[k], n) + lie.tau_star(&phi.component(&[k], n));
                let rhs = &g * ai.component(&[k], n) * &g_inv - dg * &g_inv;
                report.connection = report.connection.max((lhs - rhs).norm());
            }
            for idx in index_tuples(dim, 2) {
                let (k, l) = (idx[0], idx[1]);
                let (pk, pl) = (phi.component(&[k], n), phi.component(&[l], n));
                let (ak, al) = (aj.component(&[k], n), aj.component(&[l], n));
                let lhs = &g * bi.component(&idx, n) * &g_inv;
                let rhs = bj.component(&idx, n)
                    + dphi.component(&idx, n)
                    + lie.bracket(&pk, &pl)
                    + Lie::alpha_star(&ak, &pl)
                    - Lie::alpha_star(&al, &pk);
                report.curving = report.curving.max(exact(lhs - rhs)?);
            }
        }
    }
    for t in c.tuples(3) {
        let (i, j, k) = (t[0], t[1], t[2]);
        report.triples += 1;
        let chart = c.cover.overlap(&t).expect("filtered");
        let a_poly = c.associator(i, j, k);
        for x in chart.samples(samples) {
            let (g_jk, g_jk_inv) = c.transition_at(j, k, &x).expect("filtered");
            let a = c.associator_at(i, j, k, &x);
            let a_inv = lie.h_inv(&a)?;
            let (phi_jk, _) = dc.phi_jet(j, k, &x);
            let (phi_ij, _) = dc.phi_jet(i, j, &x);
            let (phi_ik, _) = dc.phi_jet(i, k, &x);
            let (ak, _) = PointForm::jet(&dc.a[k], &x);
            for m in 0..dim {
                let da = a_poly
                    .map(|p| p.deriv(m).eval(&x))
                    .unwrap_or_else(|| DMatrix::zeros(n, n));
                let lhs = phi_jk.component(&[m], n) + &g_jk * phi_ij.component(&[m], n) * &g_jk_inv
                    - lie.theta(&a_inv, &da);
                let rhs = lie.ad_inv(&a, &a_inv, &phi_ik.component(&[m], n))
                    + lie.alpha_tilde(&a, &a_inv, &ak.component(&[m], n));
                report.gauge = report.gauge.max(exact(lhs - rhs)?);
            }
        }
    }
    Ok(report)
}

/// Maximal sampled norms of the fake curvature `dA + A∧A − τ_*(B)` and the
/// exactness residual of the 3-curvature `dB + [A ∧ B]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CurvatureReport {
    pub fake: f64,
    pub three_form: f64,
}

pub fn curvatures(dc: &DifferentialCocycle, i: usize, samples: usize) -> Result<CurvatureReport> {
    let c = &dc.base;
    let chart = c
        .cover
        .charts()
        .get(i)
        .ok_or_else(|| HolabError::Structural(format!("no chart {i}")))?;
    let complex = c.ctx.complex();
    let d = PointForm::function(complex.differential().matrix().clone(), 1);
    let mut report = CurvatureReport::default();
    for x in chart.samples(samples) {
        let (a, da) = PointForm::jet(&dc.a[i], &x);
        let (b, db) = PointForm::jet(&dc.b[i], &x);
        let tau_b = d.wedge(&b).add(&b.wedge(&d));
        let fake = da.add(&a.wedge(&a)).add(&tau_b.scale(-1.0));
        report.fake = report.fake.max(fake.max_norm());
        // The action of A on B is a plain commutator, without Koszul signs.
        let plain = b.with_inner_degree(0);
        let three = db.add(&a.wedge(&plain)).add(&plain.wedge(&a).scale(-1.0));
        for m in three.components().values() {
            let r = complex.solve_exactness(&complex.endo(-1, m.clone()), c.ctx.tol())?;
            report.three_form = report.three_form.max(r.residual);
        }
    }
    Ok(report)
}

/// Largest gauge-relation defect `ω_j − (g ω_i g⁻¹ − dg·g⁻¹)` over an overlap,
/// taken over the degree-1, -2 and -3 parts.
fn gauge_relation_defect(
    si: &Superconnection,
    sj: &Superconnection,
    g: &InvertibleField,
    chart: &Chart,
    samples: usize,
) -> f64 {
    let n = si.complex().total_dim();
    let dim = chart.dim();
    let zero3 = |s: &Superconnection| {
        s.omega3()
            .cloned()
            .unwrap_or_else(|| EndValuedForm::zero(s.complex().space(), dim, 3, -2))
    };
    let (w3i, w3j) = (zero3(si), zero3(sj));
    let mut worst: f64 = 0.0;
    for x in chart.samples(samples) {
        let (gx, g_inv) = eval_field(g, &x);
        let pairs = [
            (si.omega1(), sj.omega1()),
            (si.omega2(), sj.omega2()),
            (&w3i, &w3j),
        ];
        for (fi, fj) in pairs {
            let (vi, _) = PointForm::jet(fi, &x);
            let (vj, _) = PointForm::jet(fj, &x);
            for idx in index_tuples(dim, fi.form_degree()) {
                let mut expected = &gx * vi.component(&idx, n) * &g_inv;
                if idx.len() == 1 {
                    expected -= g.forward().deriv(idx[0]).eval(&x) * &g_inv;
                }
                worst = worst.max((vj.component(&idx, n) - expected).norm());
            }
        }
    }
    worst
}

/// The differential cocycle of a family of flat local superconnections glued
/// by chain-map transitions: `A_i = ω¹_i`, `B_i = −ω²_i`, `φ = 0`, `a = 0`.
pub fn frame_cocycle(
    systems: &[Superconnection],
    transitions: BTreeMap<(usize, usize), InvertibleField>,
    samples: usize,
    tol: f64,
) -> Result<DifferentialCocycle> {
    let first = systems
        .first()
        .ok_or_else(|| HolabError::Structural("no charts".into()))?;
    let complex = first.complex().clone();
    if systems.iter().any(|s| s.complex() != &complex) {
        return Err(HolabError::Structural(
            "all charts must carry the same complex".into(),
        ));
    }
    for (i, s) in systems.iter().enumerate() {
        let r = s.flatness_residuals(&s.chart().samples(samples));
        if r.iter().any(|&v| v > tol) {
            return Err(HolabError::Precondition(format!(
                "flatness precondition failed on chart {i}: residuals {r:?}"
            )));
        }
    }
    let cover = Cover::new(systems.iter().map(|s| s.chart().clone()).collect())?;
    let ctx = CrossedModuleContext::new(complex.clone(), crate::crossed::ALGEBRAIC_TOL)?;
    let base = GammaCocycle::new(cover, ctx, transitions, BTreeMap::new())?;
    let mut failures = Vec::new();
    for (&(i, j), g) in &base.transitions {
        let chart = base
            .cover
            .overlap(&[i, j])
            .ok_or_else(|| HolabError::Structural(format!("charts {i} and {j} do not overlap")))?;
        let chain = chart
            .samples(samples)
            .iter()
            .map(|x| complex.chain_defect(&complex.endo(0, g.forward().eval(x))))
            .fold(0.0, f64::max);
        if chain > tol {
            failures.push(format!("({i}, {j}): chain-map defect {chain:.3e}"));
            continue;
        }
        let defect = gauge_relation_defect(&systems[i], &systems[j], g, &chart, samples);
        if defect > tol {
            failures.push(format!("({i}, {j}): gauge relation residual {defect:.3e}"));
        }
    }
    if !failures.is_empty() {
        return Err(HolabError::Precondition(format!(
            "transitions rejected: {}",
            failures.join("; ")
        )));
    }
    let report = validate_cocycle(&base, samples)?;
    if report.transition > tol {
        return Err(HolabError::Precondition(format!(
            "transitions violate the cocycle condition (residual {:.3e})",
            report.transition
        )));
    }
    let a = systems.iter().map(|s| s.omega1().clone()).collect();
    let b = systems.iter().map(|s| s.omega2().scale(-1.0)).collect();
    DifferentialCocycle::new(base, a, b, BTreeMap::new())
}

/// An object `(i, x, g)` of the local model.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupoidObject {
    pub chart: usize,
    pub x: Vec<f64>,
    pub g: DMatrix<f64>,
}

/// A morphism `(i, j, x, h, g)` of the local model, from `(j, x, g)` to
/// `(i, x, g_ij(x)⁻¹·τ(h)·g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupoidMorphism {
    pub i: usize,
    pub j: usize,
    pub x: Vec<f64>,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

const POINT_TOL: f64 = 1e-12;

impl GroupoidMorphism {
    pub fn identity(object: &GroupoidObject) -> Self {
        let n = object.g.nrows();
        Self {
            i: object.chart,
            j: object.chart,
            x: object.x.clone(),
            h: DMatrix::zeros(n, n),
            g: object.g.clone(),
        }
    }

    pub fn source(&self) -> GroupoidObject {
        GroupoidObject {
            chart: self.j,
            x: self.x.clone(),
            g: self.g.clone(),
        }
    }

    pub fn target(&self, c: &GammaCocycle) -> Result<GroupoidObject> {
        let (_, g_inv) = c.transition_at(self.i, self.j, &self.x).ok_or_else(|| {
            HolabError::Structural(format!("no transition ({}, {})", self.i, self.j))
        })?;
        Ok(GroupoidObject {
            chart: self.i,
            x: self.x.clone(),
            g: g_inv * Lie::new(&c.ctx).tau(&self.h) * &self.g,
        })
    }
}

/// `(i, j, x, h₂, g₂) ∘ (j, k, x, h₁, g₁) = (i, k, x, a_ijk ⋆ α(g_jk, h₂) ⋆ h₁, g₁)`.
pub fn groupoid_compose(
    m2: &GroupoidMorphism,
    m1: &GroupoidMorphism,
    c: &GammaCocycle,
) -> Result<GroupoidMorphism> {
    if m2.j != m1.i {
        return Err(HolabError::Structural(format!(
            "cannot compose: middle indices {} and {} differ",
            m2.j, m1.i
        )));
    }
    let gap =
        m2.x.iter()
            .zip(&m1.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    if m2.x.len() != m1.x.len() || gap > POINT_TOL {
        return Err(HolabError::Structural(
            "cannot compose morphisms over different points".into(),
        ));
    }
    let (i, j, k) = (m2.i, m2.j, m1.j);
    let x = &m1.x;
    if !c
        .cover
        .overlap(&[i, j, k])
        .is_some_and(|o| o.contains(x, POINT_TOL))
    {
        return Err(HolabError::Structural(format!(
            "point lies outside the overlap of {i}, {j}, {k}"
        )));
    }
    let target = m1.target(c)?;
    let mismatch = (&target.g - &m2.g).norm();
    if mismatch > 1e-8 * (1.0 + m2.g.norm()) {
        return Err(HolabError::Structural(format!(
            "source of the outer morphism differs from the target of the inner one by {mismatch:.3e}"
        )));
    }
    let lie = Lie::new(&c.ctx);
    let (g_jk, g_jk_inv) = c
        .transition_at(j, k, x)
        .ok_or_else(|| HolabError::Structural(format!("no transition ({j}, {k})")))?;
    let a = c.associator_at(i, j, k, x);
    let moved = &g_jk * &m2.h * g_jk_inv;
    Ok(GroupoidMorphism {
        i,
        j: k,
        x: x.clone(),
        h: lie.star(&lie.star(&a, &moved), &m1.h),
        g: m1.g.clone(),
    })
}

/// Difference of the two bracketings of `m3 ∘ m2 ∘ m1`: the `G` parts by
/// norm and the `H` parts modulo exact elements.
pub fn associativity_residual(
    m3: &GroupoidMorphism,
    m2: &GroupoidMorphism,
    m1: &GroupoidMorphism,
    c: &GammaCocycle,
) -> Result<f64> {
    let left = groupoid_compose(&groupoid_compose(m3, m2, c)?, m1, c)?;
    let right = groupoid_compose(m3, &groupoid_compose(m2, m1, c)?, c)?;
    let complex = c.ctx.complex();
    let h = complex.equal_mod_exact(
        &complex.endo(-1, left.h),
        &complex.endo(-1, right.h),
        c.ctx.tol(),
    )?;
    Ok(h.residual.max((left.g - right.g).norm()))
}

/// Pointwise evaluator of the connection forms `(Ω^a, Ω^b, Ω^c)` on the
/// local model. Tangent vectors to `G` and `H` are given as matrices.
pub struct ConnectionForms<'a> {
    dc: &'a DifferentialCocycle,
    lie: Lie,
}

impl<'a> ConnectionForms<'a> {
    pub fn new(dc: &'a DifferentialCocycle) -> Self {
        Self {
            lie: Lie::new(&dc.base.ctx),
            dc,
        }
    }

    fn eval(&self, f: &EndValuedForm, x: &[f64], vectors: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(f.eval(x, vectors)?.into_matrix())
    }

    fn inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        g.clone()
            .try_inverse()
            .ok_or_else(|| HolabError::NotInG("group element is singular".into()))
    }

    /// `Ω^a = g⁻¹ A_i(v) g + g⁻¹ ξ` at `(i, x, g)`.
    pub fn omega_a(
        &self,
        object: &GroupoidObject,
        v: &[f64],
        xi: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let g_inv = Self::inverse(&object.g)?;
        let a = self.eval(&self.dc.a[object.chart], &object.x, &[v.to_vec()])?;
        Ok(&g_inv * a * &object.g + g_inv * xi)
    }

    /// `Ω^c = −g⁻¹ B_i(v, w) g` at `(i, x, g)`.
    pub fn omega_c(&self, object: &GroupoidObject, v: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
        let g_inv = Self::inverse(&object.g)?;
        let b = self.eval(
            &self.dc.b[object.chart],
            &object.x,
            &[v.to_vec(), w.to_vec()],
        )?;
        Ok(-(g_inv * b * &object.g))
    }

    /// `Ω^b = g⁻¹(Ad_h⁻¹ φ_ij(v) + (α̃_h)_* A_j(v) + θ_H(η)) g` at `(i, j, x, h, g)`.
    pub fn omega_b(
        &self,
        m: &GroupoidMorphism,
        v: &[f64],
        eta: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let g_inv = Self::inverse(&m.g)?;
        let h_inv = self.lie.h_inv(&m.h)?;
        let n = m.h.nrows();
        let phi = match self.dc.phi(m.i, m.j) {
            Some(f) => self.eval(f, &m.x, &[v.to_vec()])?,
            None => DMatrix::zeros(n, n),
        };
        let a = self.eval(&self.dc.a[m.j], &m.x, &[v.to_vec()])?;
        let inner = self.lie.ad_inv(&m.h, &h_inv, &phi)
            + self.lie.alpha_tilde(&m.h, &h_inv, &a)
            + self.lie.theta(&h_inv, eta);
        Ok(g_inv * inner * &m.g)
    }
}

/// Residuals of the three right-action equations of a connection:
/// `R^*Ω^a = Ad_g⁻¹(p^*Ω^a) + g^*Θ`,
/// `R^*Ω^b = (α_{g⁻¹})_*(Ad_h⁻¹(p^*Ω^b) + (α̃_h)_*(p^*s^*Ω^a) + h^*Θ)` and
/// `R^*Ω^c = (α_{g⁻¹})_*(p^*Ω^c)`, evaluated at random points, group
/// elements and tangent vectors.
pub fn equivariance_residuals<R: rand::Rng>(
    dc: &DifferentialCocycle,
    rng: &mut R,
    samples: usize,
) -> Result<[f64; 3]> {
    use crate::random::{random_endo, random_g, random_h};
    let c = &dc.base;
    let ctx = &c.ctx;
    let complex = ctx.complex();
    let lie = Lie::new(ctx);
    let forms = ConnectionForms::new(dc);
    let dim = c.cover.dim();
    let tangent_g = |rng: &mut R| lie.tau_star(random_endo(rng, complex, -1, 0.5).matrix());
    let tangent_h = |rng: &mut R| random_endo(rng, complex, -1, 0.5).into_matrix();
    let vector = |rng: &mut R| {
        (0..dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let mut out = [0.0f64; 3];
    let pairs: Vec<(usize, usize)> = (0..c.cover.len())
        .map(|i| (i, i))
        .chain(c.transitions.keys().copied())
        .collect();
    for &(i, j) in &pairs {
        let chart = c
            .cover
            .overlap(&[i, j])
            .expect("declared transitions overlap");
        for x in chart.samples(samples) {
            let g0 = random_g(rng, ctx).map().matrix().clone();
            let gp = random_g(rng, ctx).map().matrix().clone();
            let gp_inv = gp.clone().try_inverse().expect("G element");
            let (v, w) = (vector(rng), vector(rng));
            let (xi0, xip) = (tangent_g(rng), tangent_g(rng));
            // Objects.
            let p = GroupoidObject {
                chart: j,
                x: x.clone(),
                g: g0.clone(),
            };
            let moved = GroupoidObject {
                chart: j,
                x: x.clone(),
                g: &g0 * &gp,
            };
            let lhs = forms.omega_a(&moved, &v, &(&xi0 * &gp + &g0 * &xip))?;
            let rhs = &gp_inv * forms.omega_a(&p, &v, &xi0)? * &gp + &gp_inv * &xip;
            out[0] = out[0].max((lhs - rhs).norm());
            let lhs = forms.omega_c(&moved, &v, &w)?;
            let rhs = &gp_inv * forms.omega_c(&p, &v, &w)? * &gp;
            out[2] = out[2].max((lhs - rhs).norm());
            // Morphisms: R((i, j, x, h, g), (h', g')) = (i, j, x, h ⋆ α(g, h'), g g').
            let h = random_h(rng, ctx, 0.3).into_rep().into_matrix();
            let hp = random_h(rng, ctx, 0.3).into_rep().into_matrix();
            let hp_inv = lie.h_inv(&hp)?;
            let (eta, etap) = (tangent_h(rng), tangent_h(rng));
            let g0_inv = g0.clone().try_inverse().expect("G element");
            let y = &g0 * &hp * &g0_inv;
            let dy = &xi0 * &hp * &g0_inv + &g0 * &etap * &g0_inv - &y * &xi0 * &g0_inv;
            let h_new = lie.star(&h, &y);
            let eta_new = &eta + &dy + &eta * lie.tau_star(&y) + &h * lie.tau_star(&dy);
            let m = GroupoidMorphism {
                i,
                j,
                x: x.clone(),
                h,
                g: g0.clone(),
            };
            let m_new = GroupoidMorphism {
                i,
                j,
                x: x.clone(),
                h: h_new,
                g: &g0 * &gp,
            };
            let lhs = forms.omega_b(&m_new, &v, &eta_new)?;
            let inner = lie.ad_inv(&hp, &hp_inv, &forms.omega_b(&m, &v, &eta)?)
                + lie.alpha_tilde(&hp, &hp_inv, &forms.omega_a(&m.source(), &v, &xi0)?)
                + lie.theta(&hp_inv, &etap);
            let rhs = &gp_inv * inner * &gp;
            let diff = complex.endo(-1, lhs - rhs);
            out[1] = out[1].max(complex.solve_exactness(&diff, ctx.tol())?.residual);
        }
    }
    Ok(out)
}

/// A stretch `[t0, t1]` of path parameter transported in one chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverPiece {
    pub chart: usize,
    pub t0: f64,
    pub t1: f64,
}

/// Which chart to pick when several contain a stretch of the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartPreference {
    Lowest,
    Highest,
}

/// Splits the path domain into `subdivisions` equal stretches, assigns each
/// to a chart containing it (keeping the current chart while possible) and
/// merges neighbours in the same chart.
pub fn cover_plan(
    systems: &[Superconnection],
    path: &PLPath,
    subdivisions: usize,
    preference: ChartPreference,
) -> Result<Vec<CoverPiece>> {
    let (a, b) = path.domain();
    let k = subdivisions.max(1);
    let h = (b - a) / k as f64;
    let mut plan: Vec<CoverPiece> = Vec::new();
    for step in 0..k {
        let (t0, t1) = (
            a + step as f64 * h,
            if step + 1 == k {
                b
            } else {
                a + (step + 1) as f64 * h
            },
        );
        let piece = path.subpath(t0, t1)?;
        let fits = |i: usize| piece.inside(systems[i].chart(), 1e-12);
        let current = plan.last().map(|p| p.chart).filter(|&i| fits(i));
        let chosen = current.or_else(|| match preference {
            ChartPreference::Lowest => (0..systems.len()).find(|&i| fits(i)),
            ChartPreference::Highest => (0..systems.len()).rev().find(|&i| fits(i)),
        });
        let chart = chosen.ok_or_else(|| {
            HolabError::Precondition(format!("no chart contains the path on [{t0:.4}, {t1:.4}]"))
        })?;
        match plan.last_mut() {
            Some(last) if last.chart == chart => last.t1 = t1,
            _ => plan.push(CoverPiece { chart, t0, t1 }),
        }
    }
    Ok(plan)
}

/// Transport along a path crossing several charts.
#[derive(Debug, Clone)]
pub struct CoverTransport {
    /// Maps the frame of `first_chart` at the start to the frame of
    /// `last_chart` at the end.
    pub value: GradedLinearMap,
    pub first_chart: usize,
    pub last_chart: usize,
}

/// `T = T_{i_m} · g_{i_{m−1} i_m}(x_m) ⋯ g_{i_0 i_1}(x_1) · T_{i_0}` over the
/// pieces of `plan`.
pub fn transport_cover(
    systems: &[Superconnection],
    cocycle: &GammaCocycle,
    path: &PLPath,
    plan: &[CoverPiece],
    steps: usize,
) -> Result<CoverTransport> {
    let first = plan
        .first()
        .ok_or_else(|| HolabError::Structural("empty cover plan".into()))?;
    let complex = cocycle.ctx.complex();
    let mut total = complex.identity().into_matrix();
    let mut prev = first.chart;
    for piece in plan {
        let system = systems
            .get(piece.chart)
            .ok_or_else(|| HolabError::Structural(format!("no chart {}", piece.chart)))?;
        if piece.chart != prev {
            let x = path.point(piece.t0);
            let (g, _) = cocycle
                .transition_at(prev, piece.chart, &x)
                .ok_or_else(|| {
                    HolabError::Structural(format!("no transition ({prev}, {})", piece.chart))
                })?;
            total = g * total;
        }
        let t = transport_ode(system, &path.subpath(piece.t0, piece.t1)?, steps)?;
        total = t.value.matrix() * total;
        prev = piece.chart;
    }
    Ok(CoverTransport {
        value: complex.endo(0, total),
        first_chart: first.chart,
        last_chart: prev,
    })
}

/// The superconnection `g D g⁻¹` on `chart`, which the transition `g`
/// relates to `source`.
pub fn induced_system(
    source: &Superconnection,
    chart: Chart,
    g: &InvertibleField,
) -> Result<Superconnection> {
    let moved = source.gauge_transform(&g.inverted(), None)?;
    Superconnection::new(
        chart,
        moved.complex().clone(),
        moved.omega1().clone(),
        moved.omega2().clone(),
        moved.omega3().cloned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::gauge_flat;
    use crate::graded::CochainComplex;
    use crate::random::{random_complex, random_endo, random_g, random_gauge, random_h};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, dims: &[usize]) -> (ChaCha8Rng, CochainComplex, CrossedModuleContext) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_complex(&mut rng, dims);
        let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
        (rng, c, ctx)
    }

    #[test]
    fn infinitesimal_operations_match_finite_differences() {
        let (mut rng, c, ctx) = setup(1, &[1, 2, 1]);
        let lie = Lie::new(&ctx);
        let h = random_h(&mut rng, &ctx, 0.3).into_rep().into_matrix();
        let h_inv = lie.h_inv(&h).unwrap();
        let x = random_endo(&mut rng, &c, -1, 1.0).into_matrix();
        let y = lie.tau_star(random_endo(&mut rng, &c, -1, 1.0).matrix());
        let eps = 1e-6;
        let central = |f: &dyn Fn(f64) -> DMatrix<f64>| (f(eps) - f(-eps)) / (2.0 * eps);
        let theta = central(&|e| lie.star(&h_inv, &(&h + &x * e)));
        assert!((theta - lie.theta(&h_inv, &x)).norm() < 1e-8);
        let ad = central(&|e| lie.star(&lie.star(&h_inv, &(&x * e)), &h));
        assert!((ad - lie.ad_inv(&h, &h_inv, &x)).norm() < 1e-8);
        let n = h.nrows();
        let tilde = central(&|e| {
            let g = DMatrix::identity(n, n) + &y * e;
            let g_inv = g.clone().try_inverse().unwrap();
            lie.star(&h_inv, &(&g * &h * g_inv))
        });
        assert!((tilde - lie.alpha_tilde(&h, &h_inv, &y)).norm() < 1e-8);
    }

    #[test]
    fn trivial_cocycle_has_zero_residuals() {
        let (_, _, ctx) = setup(2, &[2, 1]);
        let cover = Cover::new(vec![
            Chart::unit(2),
            Chart::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap(),
        ])
        .unwrap();
        let r = validate_cocycle(&GammaCocycle::trivial(cover, ctx), 10).unwrap();
        assert_eq!((r.transition, r.associator), (0.0, 0.0));
    }

    fn three_charts() -> Cover {
        Cover::new(vec![
            Chart::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            Chart::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap(),
            Chart::new(vec![0.25, 0.5], vec![1.25, 1.5]).unwrap(),
        ])
        .unwrap()
    }

    /// Flat systems on three charts glued by polynomial chain-map transitions.
    fn glued(
        seed: u64,
    ) -> (
        Vec<Superconnection>,
        BTreeMap<(usize, usize), InvertibleField>,
    ) {
        let (mut rng, c, ctx) = setup(seed, &[1, 2, 1]);
        let cover = three_charts();
        let (phi0, phi1) = random_gauge(&mut rng, &ctx, 2, 1, true);
        let s0 = gauge_flat(&cover.charts()[0], &c, &phi0, phi1.as_ref()).unwrap();
        let g01 = random_gauge(&mut rng, &ctx, 2, 1, false).0;
        let g02 = random_gauge(&mut rng, &ctx, 2, 1, false).0;
        let s1 = induced_system(&s0, cover.charts()[1].clone(), &g01).unwrap();
        let s2 = induced_system(&s0, cover.charts()[2].clone(), &g02).unwrap();
        let g12 = g02.then(&g01.inverted());
        assert!(
            !c.differential().is_zero() && !s1.omega1().is_zero(),
            "degenerate seed {seed}"
        );
        let transitions = BTreeMap::from([((0, 1), g01), ((0, 2), g02), ((1, 2), g12)]);
        (vec![s0, s1, s2], transitions)
    }

    #[test]
    fn frame_cocycle_of_glued_flat_systems_is_flat() {
        let (systems, transitions) = glued(3);
        let dc = frame_cocycle(&systems, transitions, 20, 1e-8).unwrap();
        let r = validate_cocycle(dc.base(), 20).unwrap();
        assert!(
            r.triples == 6 && r.transition < 1e-10 && r.associator < 1e-10,
            "{r:?}"
        );
        let d = validate_differential(&dc, 20).unwrap();
        assert!(
            d.connection < 1e-8 && d.curving < 1e-8 && d.gauge < 1e-8,
            "{d:?}"
        );
        for i in 0..3 {
            let k = curvatures(&dc, i, 20).unwrap();
            assert!(k.fake < 1e-8 && k.three_form < 1e-8, "{k:?}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = equivariance_residuals(&dc, &mut rng, 3).unwrap();
        assert!(e.iter().all(|&v| v < 1e-8), "{e:?}");
    }

    #[test]
    fn single_chart_frame_cocycle_is_vacuous_and_flat() {
        let (mut rng, c, ctx) = setup(5, &[2, 2, 2]);
        let chart = Chart::unit(3);
        let (phi0, phi1) = random_gauge(&mut rng, &ctx, 3, 1, true);
        let s = gauge_flat(&chart, &c, &phi0, phi1.as_ref()).unwrap();
        let dc = frame_cocycle(&[s], BTreeMap::new(), 10, 1e-8).unwrap();
        let d = validate_differential(&dc, 10).unwrap();
        assert_eq!((d.pairs, d.connection, d.curving), (0, 0.0, 0.0));
        let k = curvatures(&dc, 0, 20).unwrap();
        assert!(k.fake < 1e-8 && k.three_form < 1e-8, "{k:?}");
    }

    #[test]
    fn abelian_curving_has_no_curvature() {
        let space = crate::graded::GradedSpace::new([(0, 1), (1, 1)]);
        let complex = CochainComplex::zero_differential(space.clone());
        let e = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let mut comps = BTreeMap::new();
        comps.insert(vec![0, 1], MatPoly::constant(2, e * 0.7));
        let omega2 = EndValuedForm::from_components(&space, 2, 2, -1, comps).unwrap();
        let s = Superconnection::new(
            Chart::unit(2),
            complex,
            EndValuedForm::zero(&space, 2, 1, 0),
            omega2,
            None,
        )
        .unwrap();
        let dc = frame_cocycle(&[s], BTreeMap::new(), 5, 1e-8).unwrap();
        assert_eq!(curvatures(&dc, 0, 5).unwrap(), CurvatureReport::default());
    }

    #[test]
    fn perturbed_transition_breaks_the_cocycle() {
        let (systems, mut transitions) = glued(6);
        let cover = Cover::new(systems.iter().map(|s| s.chart().clone()).collect()).unwrap();
        let ctx = CrossedModuleContext::new(systems[0].complex().clone(), 1e-10).unwrap();
        // Rescaling g_12 keeps the gauge relation but breaks g_02 = g_12 g_01.
        let scaled =
            InvertibleField::constant(2, &(DMatrix::identity(4, 4) * (1.0 + 1e-3))).unwrap();
        let g12 = transitions[&(1, 2)].then(&scaled);
        transitions.insert((1, 2), g12);
        let base = GammaCocycle::new(cover, ctx, transitions.clone(), BTreeMap::new()).unwrap();
        let r = validate_cocycle(&base, 10).unwrap();
        assert!(r.transition > 1e-5, "{r:?}");
        assert!(matches!(
            frame_cocycle(&systems, transitions, 10, 1e-8),
            Err(HolabError::Precondition(_))
        ));
    }

    #[test]
    fn transition_violating_the_gauge_relation_is_rejected() {
        let (systems, mut transitions) = glued(11);
        let (mut rng, _, ctx) = setup(11, &[1, 2, 1]);
        let h = random_h(&mut rng, &ctx, 0.3);
        let twist = InvertibleField::constant(2, ctx.tau(&h).unwrap().map().matrix()).unwrap();
        let g01 = transitions[&(0, 1)].then(&twist);
        transitions.insert((0, 1), g01);
        let err = frame_cocycle(&systems, transitions, 10, 1e-8).unwrap_err();
        assert!(err.to_string().contains("(0, 1): gauge relation"), "{err}");
    }

    #[test]
    fn perturbed_phi_shows_up_through_tau() {
        let (systems, transitions) = glued(7);
        let dc = frame_cocycle(&systems, transitions, 10, 1e-8).unwrap();
        let (mut rng, c, _) = setup(7, &[1, 2, 1]);
        let _ = &mut rng;
        let delta = random_endo(&mut rng, &c, -1, 0.1).into_matrix();
        let mut comps = BTreeMap::new();
        comps.insert(vec![0], MatPoly::constant(2, delta.clone()));
        let phi = EndValuedForm::from_components(c.space(), 2, 1, -1, comps).unwrap();
        let DifferentialCocycle { base, a, b, .. } = dc;
        let base = GammaCocycle::new(
            base.cover.clone(),
            base.ctx.clone(),
            base.transitions.clone(),
            BTreeMap::new(),
        )
        .unwrap();
        let only = base
            .transitions
            .iter()
            .filter(|(&(i, j), _)| (i, j) == (0, 1))
            .count();
        assert_eq!(only, 1);
        let perturbed =
            DifferentialCocycle::new(base, a, b, BTreeMap::from([((0, 1), phi)])).unwrap();
        let d = validate_differential(&perturbed, 10).unwrap();
        let expected = (&c.differential().matrix().clone() * &delta
            + &delta * c.differential().matrix())
        .norm();
        assert!(
            (d.connection - expected).abs() < 1e-8,
            "{} vs {expected}",
            d.connection
        );
    }

    #[test]
    fn groupoid_identities_and_single_chart_composition() {
        let (mut rng, _, ctx) = setup(8, &[1, 2, 1]);
        let cover = Cover::new(vec![Chart::unit(2)]).unwrap();
        let c = GammaCocycle::trivial(cover, ctx.clone());
        let x = vec![0.3, 0.4];
        let g = random_g(&mut rng, &ctx).map().matrix().clone();
        let object = GroupoidObject {
            chart: 0,
            x: x.clone(),
            g: g.clone(),
        };
        let id = GroupoidMorphism::identity(&object);
        assert_eq!(groupoid_compose(&id, &id, &c).unwrap(), id);
        let h1 = random_h(&mut rng, &ctx, 0.3);
        let m1 = GroupoidMorphism {
            i: 0,
            j: 0,
            x: x.clone(),
            h: h1.rep().matrix().clone(),
            g: g.clone(),
        };
        let target = m1.target(&c).unwrap();
        let h2 = random_h(&mut rng, &ctx, 0.3);
        let m2 = GroupoidMorphism {
            i: 0,
            j: 0,
            x: x.clone(),
            h: h2.rep().matrix().clone(),
            g: target.g,
        };
        let composed = groupoid_compose(&m2, &m1, &c).unwrap();
        let expected = ctx.h_mul(&h2, &h1);
        assert!((&composed.h - expected.rep().matrix()).norm() < 1e-12);
        let wrong = GroupoidMorphism {
            g: g.clone() * 2.0,
            ..m2
        };
        assert!(groupoid_compose(&wrong, &m1, &c).is_err());
    }

    #[test]
    fn groupoid_composition_is_associative_mod_exact() {
        let (mut rng, _, ctx) = setup(9, &[2, 2, 1]);
        let cover = Cover::new(vec![Chart::unit(2); 4]).unwrap();
        let c = crate::random::random_gamma_cocycle(&mut rng, &ctx, cover);
        let r = validate_cocycle(&c, 3).unwrap();
        assert!(r.transition < 1e-10 && r.associator < 1e-10, "{r:?}");
        let x = vec![0.5, 0.5];
        let g1 = random_g(&mut rng, &ctx).map().matrix().clone();
        let h = |rng: &mut ChaCha8Rng| random_h(rng, &ctx, 0.3).into_rep().into_matrix();
        let m1 = GroupoidMorphism {
            i: 2,
            j: 3,
            x: x.clone(),
            h: h(&mut rng),
            g: g1,
        };
        let m2 = GroupoidMorphism {
            i: 1,
            j: 2,
            x: x.clone(),
            h: h(&mut rng),
            g: m1.target(&c).unwrap().g,
        };
        let m3 = GroupoidMorphism {
            i: 0,
            j: 1,
            x: x.clone(),
            h: h(&mut rng),
            g: m2.target(&c).unwrap().g,
        };
        let r = associativity_residual(&m3, &m2, &m1, &c).unwrap();
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn cover_transport_does_not_depend_on_the_split() {
        let (systems, transitions) = glued(10);
        let dc = frame_cocycle(&systems, transitions, 5, 1e-8).unwrap();
        let path = PLPath::polyline(&[vec![0.1, 0.2], vec![1.4, 0.3], vec![0.8, 1.4]]).unwrap();
        let mut values = Vec::new();
        for (k, pref) in [
            (4, ChartPreference::Lowest),
            (16, ChartPreference::Lowest),
            (9, ChartPreference::Highest),
        ] {
            let plan = cover_plan(&systems, &path, k, pref).unwrap();
            let t = transport_cover(&systems, dc.base(), &path, &plan, 1000).unwrap();
            assert_eq!((t.first_chart, t.last_chart), (0, 2));
            values.push(t.value);
        }
        for v in &values[1..] {
            assert!(
                (v - &values[0]).norm() < 1e-8,
                "{}",
                (v - &values[0]).norm()
            );
        }
    }
}
