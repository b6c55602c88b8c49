//! Path and surface holonomy of a superconnection.
//!
//! With `D = d + ∂ + ω¹ + ω² + …` the connection data are `A = ω¹` and
//! `B = −ω²`. Path transport solves `g' = −A(γ')·g`, `g(0) = id`. Surfaces
//! are handled through the bigon `Σ = σ∘Θ₂`, whose fibers `Σ_s` run from
//! `v₂` to `v₀`; `G_s` denotes the transport along the whole fiber.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossed::CrossedModuleContext;
use crate::error::{HolabError, Result};
use crate::forms::{EndValuedForm, Superconnection};
use crate::graded::{ExactnessResult, GradedLinearMap};
use crate::poly::{MatPoly, Polynomial, UnivariateMatPoly};
use crate::quadrature::{CompositeRule, IntegrationMatrix};
use crate::simplex::{Bigon, PLPath, PathSegment, Simplex2};

/// Numerical parameters shared by all holonomy methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HolonomyParams {
    /// RK4 steps per unit of path parameter.
    pub steps: usize,
    /// Gauss–Legendre points per smooth piece.
    pub quadrature_order: usize,
    /// RK4 steps in `s` for the surface ODE.
    pub s_steps: usize,
    /// Truncation order of the iterated-integral series.
    pub series_order: usize,
}

impl Default for HolonomyParams {
    fn default() -> Self {
        Self {
            steps: 2000,
            quadrature_order: 32,
            s_steps: 100,
            series_order: 40,
        }
    }
}

/// Series tail bounds above this trigger a warning.
pub const SERIES_TAIL_WARN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMethod {
    Ode,
    Series,
}

/// Transport `g_γ(1)` along a path.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub value: GradedLinearMap,
    pub method: TransportMethod,
    pub steps: usize,
    /// Step-halving estimate for the ODE, tail bound for the series.
    pub error_estimate: f64,
    pub warning: Option<String>,
}

/// `a(t)` with `γ^*A = a(t) dt` on one segment.
struct SegmentField {
    a: UnivariateMatPoly,
    t0: f64,
    t1: f64,
}

fn segment_field(s: &Superconnection, seg: &PathSegment) -> Result<SegmentField> {
    let pulled = s.omega1().pullback(&seg.map)?;
    let n = s.complex().total_dim();
    let coeff = pulled
        .components()
        .get(&vec![0])
        .cloned()
        .unwrap_or_else(|| MatPoly::zero(1, n, n));
    Ok(SegmentField {
        a: coeff.univariate(0),
        t0: seg.t0,
        t1: seg.t1,
    })
}

fn path_fields(s: &Superconnection, path: &PLPath) -> Result<Vec<SegmentField>> {
    if path.dim() != s.chart().dim() {
        return Err(HolabError::Structural(format!(
            "path has dimension {}, chart has {}",
            path.dim(),
            s.chart().dim()
        )));
    }
    if !path.inside(s.chart(), 1e-9) {
        return Err(HolabError::Precondition("path leaves the chart".into()));
    }
    path.segments()
        .iter()
        .map(|seg| segment_field(s, seg))
        .collect()
}

/// Right-hand sides of the linear matrix ODEs used here.
#[derive(Debug, Clone, Copy)]
enum Rhs {
    /// `y' = −a·y`
    NegLeft,
    /// `y' = y·a`
    Right,
}

/// Classical RK4 integrator for `y' = F(a(t), y)` with cached field values.
struct Rk4<'a> {
    a: &'a UnivariateMatPoly,
    rhs: Rhs,
    a_t: DMatrix<f64>,
    a_mid: DMatrix<f64>,
    a_end: DMatrix<f64>,
    tmp: DMatrix<f64>,
    k: [DMatrix<f64>; 4],
}

impl<'a> Rk4<'a> {
    fn new(a: &'a UnivariateMatPoly, rhs: Rhs, n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        Self {
            a,
            rhs,
            a_t: z.clone(),
            a_mid: z.clone(),
            a_end: z.clone(),
            tmp: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    fn apply(rhs: Rhs, a: &DMatrix<f64>, y: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        match rhs {
            Rhs::NegLeft => a.mul_to(y, out),
            Rhs::Right => y.mul_to(a, out),
        }
        if let Rhs::NegLeft = rhs {
            out.neg_mut();
        }
    }

    /// Advances `y` from `t0` to `t1` in `n` equal steps (`t1 < t0` allowed).
    fn advance(&mut self, y: &mut DMatrix<f64>, t0: f64, t1: f64, n: usize) {
        if t0 == t1 {
            return;
        }
        let h = (t1 - t0) / n as f64;
        self.a.eval_into(t0, &mut self.a_t);
        for i in 0..n {
            let t = t0 + i as f64 * h;
            self.a.eval_into(t + 0.5 * h, &mut self.a_mid);
            self.a
                .eval_into(if i + 1 == n { t1 } else { t + h }, &mut self.a_end);
            let [k1, k2, k3, k4] = &mut self.k;
            Self::apply(self.rhs, &self.a_t, y, k1);
            self.tmp.copy_from(y);
            axpy(&mut self.tmp, 0.5 * h, k1);
            Self::apply(self.rhs, &self.a_mid, &self.tmp, k2);
            self.tmp.copy_from(y);
            axpy(&mut self.tmp, 0.5 * h, k2);
            Self::apply(self.rhs, &self.a_mid, &self.tmp, k3);
            self.tmp.copy_from(y);
            axpy(&mut self.tmp, h, k3);
            Self::apply(self.rhs, &self.a_end, &self.tmp, k4);
            axpy(y, h / 6.0, k1);
            axpy(y, h / 3.0, k2);
            axpy(y, h / 3.0, k3);
            axpy(y, h / 6.0, k4);
            std::mem::swap(&mut self.a_t, &mut self.a_end);
        }
    }
}

fn step_count(steps_per_unit: usize, len: f64) -> usize {
    ((steps_per_unit as f64 * len.abs()).ceil() as usize).max(1)
}

fn transport_fields(fields: &[SegmentField], n: usize, steps: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(n, n);
    for f in fields {
        let mut rk = Rk4::new(&f.a, Rhs::NegLeft, n);
        rk.advance(&mut g, f.t0, f.t1, step_count(steps, f.t1 - f.t0));
    }
    g
}

/// RK4 solution of `g' = −A(γ')·g`, `g(0) = id`, concatenated over segments.
pub fn transport_ode(s: &Superconnection, path: &PLPath, steps: usize) -> Result<TransportResult> {
    let fields = path_fields(s, path)?;
    let n = s.complex().total_dim();
    let fine = transport_fields(&fields, n, steps);
    let coarse = transport_fields(&fields, n, (steps / 2).max(1));
    let value =
        GradedLinearMap::from_dense_unchecked(s.complex().space(), s.complex().space(), 0, fine);
    let error_estimate = (value.matrix() - coarse).norm() / 15.0;
    Ok(TransportResult {
        value,
        method: TransportMethod::Ode,
        steps,
        error_estimate,
        warning: None,
    })
}

/// Truncated iterated-integral series `Σ_n I_n(1)` with
/// `I_n(t) = ∫ ā(u) I_{n−1}(u) du`, `ā = −A(γ')`, on composite
/// Gauss–Legendre panels.
pub fn transport_series(
    s: &Superconnection,
    path: &PLPath,
    order: usize,
    quadrature_order: usize,
) -> Result<TransportResult> {
    let fields = path_fields(s, path)?;
    let n = s.complex().total_dim();
    let mut g = DMatrix::identity(n, n);
    let mut tail: f64 = 0.0;
    for f in &fields {
        let len = f.t1 - f.t0;
        let panels = (4.0 * len).ceil().max(1.0) as usize;
        let h = len / panels as f64;
        let mut seg_total = DMatrix::identity(n, n);
        let mut max_a: f64 = 0.0;
        // Values of I_n at the start of the current panel, for n = 0..=order.
        let mut starts: Vec<DMatrix<f64>> = (0..=order)
            .map(|k| {
                if k == 0 {
                    DMatrix::identity(n, n)
                } else {
                    DMatrix::zeros(n, n)
                }
            })
            .collect();
        for p in 0..panels {
            let lo = f.t0 + p as f64 * h;
            let im = IntegrationMatrix::new(lo, lo + h, quadrature_order);
            let abar: Vec<DMatrix<f64>> = im.nodes.iter().map(|&t| -f.a.eval(t)).collect();
            max_a = abar.iter().map(|m| m.norm()).fold(max_a, f64::max);
            let m = im.nodes.len();
            let mut prev: Vec<DMatrix<f64>> = vec![starts[0].clone(); m];
            let mut new_starts = vec![starts[0].clone()];
            for k in 1..=order {
                let f_vals: Vec<DMatrix<f64>> = (0..m).map(|j| &abar[j] * &prev[j]).collect();
                let cur: Vec<DMatrix<f64>> = (0..m)
                    .map(|i| {
                        let mut v = starts[k].clone();
                        for j in 0..m {
                            axpy(&mut v, im.cumulative[(i, j)], &f_vals[j]);
                        }
                        v
                    })
                    .collect();
                let mut end = starts[k].clone();
                for j in 0..m {
                    axpy(&mut end, im.weights[j], &f_vals[j]);
                }
                new_starts.push(end);
                prev = cur;
            }
            starts = new_starts;
        }
        seg_total.fill(0.0);
        for v in &starts {
            seg_total += v;
        }
        let x = max_a * len;
        let mut bound = 1.0;
        for k in 1..=order + 1 {
            bound *= x / k as f64;
        }
        tail = tail.max(bound);
        g = seg_total * g;
    }
    let warning = (tail > SERIES_TAIL_WARN)
        .then(|| format!("series tail bound {tail:.3e} exceeds {SERIES_TAIL_WARN:.0e}"));
    Ok(TransportResult {
        value: GradedLinearMap::from_dense_unchecked(
            s.complex().space(),
            s.complex().space(),
            0,
            g,
        ),
        method: TransportMethod::Series,
        steps: order,
        error_estimate: tail,
        warning,
    })
}

/// `f1(γ) = g_γ(1)⁻¹`.
pub fn f1(s: &Superconnection, path: &PLPath, steps: usize) -> Result<GradedLinearMap> {
    let g = transport_ode(s, path, steps)?.value;
    g.inverse()
        .map_err(|_| HolabError::Singular("path transport is not invertible".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMethod {
    Ode,
    ClosedForm,
    Chen,
}

/// A surface holonomy together with the boundary transports it relates:
/// `g_{γ₀}` along `v₀ → v₁ → v₂` and `g_{γ₁}` along `v₀ → v₂`.
#[derive(Debug, Clone)]
pub struct SurfaceResult {
    pub value: GradedLinearMap,
    pub method: SurfaceMethod,
    pub g_gamma0: GradedLinearMap,
    pub g_gamma1: GradedLinearMap,
}

/// One smooth piece of the bigon with `A(∂_tΣ)` and `B(∂_tΣ, ∂_sΣ)` as
/// polynomials in `(t, s)`.
struct PieceData {
    bounds: Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    a: MatPoly,
    b: Option<MatPoly>,
}

/// A fiber piece at fixed `s`.
struct FiberPiece {
    lo: f64,
    hi: f64,
    a: UnivariateMatPoly,
    b: Option<UnivariateMatPoly>,
}

/// Pulled-back connection data on `Σ = σ∘Θ₂`, shared by the surface methods.
pub struct SurfaceSetup {
    n: usize,
    pieces: Vec<PieceData>,
    params: FiberParams,
}

#[derive(Clone, Copy)]
struct FiberParams {
    steps: usize,
    order: usize,
}

fn component(f: &EndValuedForm, idx: &[usize], n: usize) -> MatPoly {
    f.components()
        .get(idx)
        .cloned()
        .unwrap_or_else(|| MatPoly::zero(f.nvars(), n, n))
}

impl SurfaceSetup {
    pub fn new(s: &Superconnection, sigma: &Simplex2, params: &HolonomyParams) -> Result<Self> {
        if sigma.dim() != s.chart().dim() {
            return Err(HolabError::Structural(format!(
                "simplex has dimension {}, chart has {}",
                sigma.dim(),
                s.chart().dim()
            )));
        }
        if !sigma.inside(s.chart(), 1e-9) {
            return Err(HolabError::Precondition("simplex leaves the chart".into()));
        }
        let n = s.complex().total_dim();
        let bigon: Bigon = sigma.bigon();
        let mut pieces = Vec::new();
        for p in bigon.pieces() {
            let map: Vec<Polynomial> = p.map().to_vec();
            let a = component(&s.omega1().pullback(&map)?, &[0], n);
            let b = component(&s.omega2().pullback(&map)?, &[0, 1], n).scale(-1.0);
            let piece = p.clone();
            pieces.push(PieceData {
                bounds: Box::new(move |s| piece.bounds(s)),
                a,
                b: (!b.is_zero()).then_some(b),
            });
        }
        Ok(Self {
            n,
            pieces,
            params: FiberParams {
                steps: params.steps,
                order: params.quadrature_order,
            },
        })
    }

    fn fiber(&self, s: f64) -> Vec<FiberPiece> {
        self.pieces
            .iter()
            .filter_map(|p| {
                let (lo, hi) = (p.bounds)(s);
                (hi > lo).then(|| FiberPiece {
                    lo,
                    hi,
                    a: p.a.fix_var(1, s).univariate(0),
                    b: p.b.as_ref().map(|b| b.fix_var(1, s).univariate(0)),
                })
            })
            .collect()
    }

    /// `(G_s, K(s))` with `K(s) = ∫ g⁻¹ B(∂_tΣ, ∂_sΣ) g dt`.
    fn transport_and_kernel(&self, s: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DMatrix::identity(n, n);
        let mut k = DMatrix::zeros(n, n);
        for piece in self.fiber(s) {
            let mut rk = Rk4::new(&piece.a, Rhs::NegLeft, n);
            let mut t = piece.lo;
            if let Some(b) = &piece.b {
                let rule = CompositeRule::new(piece.lo, piece.hi, self.params.order, 1);
                for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                    rk.advance(&mut g, t, x, step_count(self.params.steps, x - t));
                    t = x;
                    let ginv = g
                        .clone()
                        .try_inverse()
                        .expect("fiber transport is invertible");
                    k += (ginv * b.eval(x) * &g) * w;
                }
            }
            rk.advance(
                &mut g,
                t,
                piece.hi,
                step_count(self.params.steps, piece.hi - t),
            );
        }
        (g, k)
    }

    /// `∫ M b N dt` with `M' = M·a`, `M(0) = id` and `N' = −a·N`, `N(1) = id`,
    /// each integrated in its own direction.
    fn chen_inner(&self, s: f64) -> DMatrix<f64> {
        let n = self.n;
        let fiber = self.fiber(s);
        let rules: Vec<Option<CompositeRule>> = fiber
            .iter()
            .map(|p| {
                p.b.as_ref()
                    .map(|_| CompositeRule::new(p.lo, p.hi, self.params.order, 1))
            })
            .collect();
        // Forward sweep for M at the nodes.
        let mut m_nodes: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(fiber.len());
        let mut m = DMatrix::identity(n, n);
        for (piece, rule) in fiber.iter().zip(&rules) {
            let mut rk = Rk4::new(&piece.a, Rhs::Right, n);
            let mut t = piece.lo;
            let mut vals = Vec::new();
            if let Some(rule) = rule {
                for &x in &rule.nodes {
                    rk.advance(&mut m, t, x, step_count(self.params.steps, x - t));
                    t = x;
                    vals.push(m.clone());
                }
            }
            rk.advance(
                &mut m,
                t,
                piece.hi,
                step_count(self.params.steps, piece.hi - t),
            );
            m_nodes.push(vals);
        }
        // Backward sweep for N, accumulating the integral.
        let mut nm = DMatrix::identity(n, n);
        let mut acc = DMatrix::zeros(n, n);
        for (i, piece) in fiber.iter().enumerate().rev() {
            let mut rk = Rk4::new(&piece.a, Rhs::NegLeft, n);
            let mut t = piece.hi;
            if let (Some(rule), Some(b)) = (&rules[i], &piece.b) {
                for (j, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate().rev() {
                    rk.advance(&mut nm, t, x, step_count(self.params.steps, t - x));
                    t = x;
                    acc += (&m_nodes[i][j] * b.eval(x) * &nm) * w;
                }
            }
            rk.advance(
                &mut nm,
                t,
                piece.lo,
                step_count(self.params.steps, t - piece.lo),
            );
        }
        acc
    }

    /// Fiber transport `G_s`.
    pub fn fiber_transport(&self, s: f64) -> DMatrix<f64> {
        let n = self.n;
        let mut g = DMatrix::identity(n, n);
        for piece in self.fiber(s) {
            let mut rk = Rk4::new(&piece.a, Rhs::NegLeft, n);
            rk.advance(
                &mut g,
                piece.lo,
                piece.hi,
                step_count(self.params.steps, piece.hi - piece.lo),
            );
        }
        g
    }
}

fn wrap(s: &Superconnection, degree: i32, m: DMatrix<f64>) -> GradedLinearMap {
    s.complex().endo(degree, m)
}

/// Forward transports along `v₀ → v₁ → v₂` and `v₀ → v₂`.
fn boundary_transports(
    s: &Superconnection,
    sigma: &Simplex2,
    steps: usize,
) -> Result<(GradedLinearMap, GradedLinearMap)> {
    let composite = sigma.front().concat(&sigma.back())?;
    let g0 = transport_ode(s, &composite, steps)?.value;
    let g1 = transport_ode(s, &sigma.face(1)?, steps)?.value;
    Ok((g0, g1))
}

/// Representative-level RK4 in `s` of `h' = K(s) + h·τ_*(K(s))`, `h(0) = 0`.
pub fn surface_ode(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
) -> Result<SurfaceResult> {
    let setup = SurfaceSetup::new(s, sigma, params)?;
    let steps = params.s_steps.max(1);
    let ds = 1.0 / steps as f64;
    let kernels: Vec<DMatrix<f64>> = (0..=2 * steps)
        .into_par_iter()
        .map(|j| setup.transport_and_kernel(j as f64 * 0.5 * ds).1)
        .collect();
    let d = s.complex().differential().matrix();
    let tau_star = |k: &DMatrix<f64>| d * k + k * d;
    let rhs = |k: &DMatrix<f64>, h: &DMatrix<f64>| k + h * tau_star(k);
    let n = s.complex().total_dim();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..steps {
        let (k0, km, k1) = (&kernels[2 * i], &kernels[2 * i + 1], &kernels[2 * i + 2]);
        let r1 = rhs(k0, &h);
        let r2 = rhs(km, &(&h + &r1 * (0.5 * ds)));
        let r3 = rhs(km, &(&h + &r2 * (0.5 * ds)));
        let r4 = rhs(k1, &(&h + &r3 * ds));
        h += (r1 + r2 * 2.0 + r3 * 2.0 + r4) * (ds / 6.0);
    }
    let (g0, g1) = boundary_transports(s, sigma, params.steps)?;
    Ok(SurfaceResult {
        value: wrap(s, -1, h),
        method: SurfaceMethod::Ode,
        g_gamma0: g0,
        g_gamma1: g1,
    })
}

/// `h(1) = (∫∫ g⁻¹ B g G_s⁻¹ dt ds)·G₁` by tensor-product Gauss–Legendre.
pub fn surface_closed_form(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
) -> Result<SurfaceResult> {
    let setup = SurfaceSetup::new(s, sigma, params)?;
    let rule = CompositeRule::new(0.0, 1.0, params.quadrature_order, 2);
    let terms: Vec<DMatrix<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&sv, &w)| {
            let (g, k) = setup.transport_and_kernel(sv);
            let ginv = g.try_inverse().expect("fiber transport is invertible");
            (k * ginv) * w
        })
        .collect();
    let n = s.complex().total_dim();
    let integral = terms.iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t);
    let value = integral * setup.fiber_transport(1.0);
    let (g0, g1) = boundary_transports(s, sigma, params.steps)?;
    Ok(SurfaceResult {
        value: wrap(s, -1, value),
        method: SurfaceMethod::ClosedForm,
        g_gamma0: g0,
        g_gamma1: g1,
    })
}

/// The iterated-integral holonomy `hol(σ) = ∫∫ M b N dt ds` with two
/// independently integrated fiber transports.
pub fn surface_chen(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
) -> Result<SurfaceResult> {
    let setup = SurfaceSetup::new(s, sigma, params)?;
    let rule = CompositeRule::new(0.0, 1.0, params.quadrature_order, 2);
    let terms: Vec<DMatrix<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(&sv, &w)| setup.chen_inner(sv) * w)
        .collect();
    let n = s.complex().total_dim();
    let value = terms.iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t);
    let (g0, g1) = boundary_transports(s, sigma, params.steps)?;
    Ok(SurfaceResult {
        value: wrap(s, -1, value),
        method: SurfaceMethod::Chen,
        g_gamma0: g0,
        g_gamma1: g1,
    })
}

/// `f2(σ) = f1(d₁σ)·hol(σ)·f1(Q₁σ)·f1(P₁σ)`, a degree −1 map `E_{v₂} → E_{v₀}`.
pub fn f2(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
) -> Result<GradedLinearMap> {
    let hol = surface_chen(s, sigma, params)?;
    let long = f1(s, &sigma.face(1)?, params.steps)?;
    let short = &f1(s, &sigma.front(), params.steps)? * &f1(s, &sigma.back(), params.steps)?;
    Ok(&(&long * &hol.value) * &short)
}

/// Residual of `∂f2 + f2∂ = f1(Q₁σ)·f1(P₁σ) − f1(d₁σ)`.
pub fn structure_equation_check(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
) -> Result<f64> {
    let f2v = f2(s, sigma, params)?;
    let ctx = CrossedModuleContext::new(s.complex().clone(), crate::crossed::ALGEBRAIC_TOL)?;
    let lhs = ctx.tau_star(&f2v);
    let short = &f1(s, &sigma.front(), params.steps)? * &f1(s, &sigma.back(), params.steps)?;
    let long = f1(s, &sigma.face(1)?, params.steps)?;
    Ok((&lhs - &(&short - &long)).norm())
}

/// Largest distance between corresponding sampled boundary points.
pub fn boundary_mismatch(a: &Simplex2, b: &Simplex2) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let (fa, fb) = (a.face(i).expect("face"), b.face(i).expect("face"));
        for (p, q) in fa.sample(32).iter().zip(fb.sample(32)) {
            let d = p
                .iter()
                .zip(&q)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
        }
    }
    worst
}

/// Decides `f2(σ) ≡ f2(σ')` modulo exact elements for simplices with the
/// same boundary edges.
pub fn homotopy_invariance_check(
    s: &Superconnection,
    sigma: &Simplex2,
    sigma_prime: &Simplex2,
    params: &HolonomyParams,
    tol: f64,
) -> Result<ExactnessResult> {
    let mismatch = boundary_mismatch(sigma, sigma_prime);
    if mismatch > 1e-9 {
        return Err(HolabError::Precondition(format!(
            "simplices have different boundary edges (max distance {mismatch:.3e})"
        )));
    }
    let a = f2(s, sigma, params)?;
    let b = f2(s, sigma_prime, params)?;
    s.complex().equal_mod_exact(&a, &b, tol)
}

/// Agreement of the three surface methods.
#[derive(Debug, Clone)]
pub struct SurfaceComparison {
    pub ode: SurfaceResult,
    pub closed_form: SurfaceResult,
    pub chen: SurfaceResult,
    /// `hol(σ)·G₁`, the Chen value moved to the representative of `h(1)`.
    pub chen_composed: GradedLinearMap,
    pub ode_vs_closed_form: ExactnessResult,
    pub ode_vs_chen: ExactnessResult,
    pub closed_form_vs_chen: ExactnessResult,
    /// `‖τ(h(1))·g_{γ₀} − g_{γ₁}‖`.
    pub tau_relation: f64,
}

/// Runs all surface methods on a flat superconnection and compares them
/// modulo exact elements.
pub fn compare_surface_methods(
    s: &Superconnection,
    sigma: &Simplex2,
    params: &HolonomyParams,
    tol: f64,
) -> Result<SurfaceComparison> {
    let ode = surface_ode(s, sigma, params)?;
    let closed_form = surface_closed_form(s, sigma, params)?;
    let chen = surface_chen(s, sigma, params)?;
    let g1 = SurfaceSetup::new(s, sigma, params)?.fiber_transport(1.0);
    let chen_composed = wrap(s, -1, chen.value.matrix() * g1);
    let c = s.complex();
    let ctx = CrossedModuleContext::new(c.clone(), tol)?;
    let tau = ctx.tau_map(&ode.value);
    let tau_relation = (&(&tau * &ode.g_gamma0) - &ode.g_gamma1).norm();
    Ok(SurfaceComparison {
        ode_vs_closed_form: c.equal_mod_exact(&ode.value, &closed_form.value, tol)?,
        ode_vs_chen: c.equal_mod_exact(&ode.value, &chen_composed, tol)?,
        closed_form_vs_chen: c.equal_mod_exact(&closed_form.value, &chen_composed, tol)?,
        ode,
        closed_form,
        chen,
        chen_composed,
        tau_relation,
    })
}

/// `y += c·x` without allocating.
fn axpy(y: &mut DMatrix<f64>, c: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |a, b| *a += c * b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{gauge_flat, Chart};
    use crate::graded::{CochainComplex, GradedSpace};
    use crate::random::{random_complex, random_gauge, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    /// `exp(m)` by scaling and squaring of a Taylor polynomial.
    fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
        let norm = m.norm();
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let x = m / 2f64.powi(squarings as i32);
        let n = m.nrows();
        let (mut sum, mut term) = (DMatrix::identity(n, n), DMatrix::identity(n, n));
        for k in 1..30 {
            term = &term * &x / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    fn constant_connection(a: &DMatrix<f64>) -> Superconnection {
        let complex = CochainComplex::zero_differential(GradedSpace::new([(0, a.nrows())]));
        let chart = Chart::new(vec![-1.0], vec![2.0]).unwrap();
        let mut comps = BTreeMap::new();
        comps.insert(vec![0], MatPoly::constant(1, a.clone()));
        let omega1 = EndValuedForm::from_components(complex.space(), 1, 1, 0, comps).unwrap();
        let omega2 = EndValuedForm::zero(complex.space(), 1, 2, -1);
        Superconnection::new(chart, complex, omega1, omega2, None).unwrap()
    }

    #[test]
    fn constant_field_transport_is_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3, 3, 1.0);
        let s = constant_connection(&a);
        let path = PLPath::line(&[0.0], &[1.0]).unwrap();
        let expected = expm(&(-&a));
        let ode = transport_ode(&s, &path, 400).unwrap();
        assert!((ode.value.matrix() - &expected).norm() < 1e-8);
        let series = transport_series(&s, &path, 40, 16).unwrap();
        assert!(series.warning.is_none());
        assert!((series.value.matrix() - &expected).norm() < 1e-8);
    }

    #[test]
    fn series_matches_ode_on_flat_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_complex(&mut rng, &[1, 2, 1]);
        let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
        let chart = Chart::unit(2);
        let (phi0, phi1) = random_gauge(&mut rng, &ctx, 2, 1, true);
        let s = gauge_flat(&chart, &c, &phi0, phi1.as_ref()).unwrap();
        let path = PLPath::polyline(&[vec![0.1, 0.2], vec![0.9, 0.4], vec![0.3, 0.8]]).unwrap();
        let ode = transport_ode(&s, &path, 2000).unwrap();
        let series = transport_series(&s, &path, 40, 24).unwrap();
        assert!(
            series.error_estimate <= SERIES_TAIL_WARN,
            "tail {}",
            series.error_estimate
        );
        assert!((ode.value.matrix() - series.value.matrix()).norm() < 1e-6);
    }

    #[test]
    fn transport_of_reversed_path_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_complex(&mut rng, &[2, 1]);
        let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
        let chart = Chart::unit(2);
        let (phi0, _) = random_gauge(&mut rng, &ctx, 2, 2, false);
        let s = gauge_flat(&chart, &c, &phi0, None).unwrap();
        let path = PLPath::line(&[0.2, 0.1], &[0.7, 0.9]).unwrap();
        let g = transport_ode(&s, &path, 1000).unwrap().value;
        let back = transport_ode(&s, &path.reverse(), 1000).unwrap().value;
        assert!((&(&g * &back) - &c.identity()).norm() < 1e-9);
    }

    fn abelian(beta: f64) -> (Superconnection, GradedLinearMap) {
        let space = GradedSpace::new([(0, 1), (1, 1)]);
        let complex = CochainComplex::zero_differential(space.clone());
        let e = complex.endo(-1, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let chart = Chart::new(vec![-1.0, -1.0], vec![2.0, 2.0]).unwrap();
        let mut comps = BTreeMap::new();
        comps.insert(vec![0, 1], MatPoly::constant(2, e.matrix() * -beta));
        let omega2 = EndValuedForm::from_components(&space, 2, 2, -1, comps).unwrap();
        let omega1 = EndValuedForm::zero(&space, 2, 1, 0);
        (
            Superconnection::new(chart, complex, omega1, omega2, None).unwrap(),
            e,
        )
    }

    #[test]
    fn abelian_holonomy_is_signed_area() {
        let beta = 0.7;
        let (s, e) = abelian(beta);
        let params = HolonomyParams::default();
        let cases = [
            (
                Simplex2::affine(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]).unwrap(),
                0.5,
            ),
            (
                Simplex2::affine(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]).unwrap(),
                -0.5,
            ),
            (
                Simplex2::affine(&[-0.5, 0.2], &[1.5, 0.0], &[0.3, 1.8]).unwrap(),
                0.5 * (2.0 * 1.8 - 0.2 * 1.2),
            ),
        ];
        for (sigma, area) in cases {
            let expected = e.scale(beta * area);
            for method in [surface_ode, surface_closed_form, surface_chen] {
                let got = method(&s, &sigma, &params).unwrap();
                assert!(
                    (&got.value - &expected).norm() < 1e-8,
                    "{:?} {:?}",
                    got.method,
                    got.value
                );
            }
        }
    }

    #[test]
    fn trivial_connection_has_zero_surface_holonomy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_complex(&mut rng, &[1, 2, 1]);
        let s = Superconnection::trivial(Chart::unit(2), c);
        let sigma = Simplex2::affine(&[0.1, 0.1], &[0.9, 0.2], &[0.5, 0.9]).unwrap();
        let params = HolonomyParams::default();
        let r = compare_surface_methods(&s, &sigma, &params, 1e-8).unwrap();
        assert!(r.ode.value.is_zero() && r.chen.value.is_zero());
        assert!(r.tau_relation < 1e-12);
    }

    #[test]
    fn surface_methods_agree_on_flat_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = random_complex(&mut rng, &[2, 2, 2]);
        let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
        let chart = Chart::unit(2);
        let (phi0, phi1) = random_gauge(&mut rng, &ctx, 2, 1, true);
        let s = gauge_flat(&chart, &c, &phi0, phi1.as_ref()).unwrap();
        let sigma = Simplex2::affine(&[0.1, 0.1], &[0.9, 0.2], &[0.4, 0.95]).unwrap();
        let params = HolonomyParams::default();
        let r = compare_surface_methods(&s, &sigma, &params, 1e-5).unwrap();
        eprintln!(
            "{} {} {} tau {}",
            r.ode_vs_closed_form.residual,
            r.ode_vs_chen.residual,
            r.closed_form_vs_chen.residual,
            r.tau_relation
        );
        assert!(
            r.ode_vs_closed_form.is_exact
                && r.ode_vs_chen.is_exact
                && r.closed_form_vs_chen.is_exact
        );
        assert!(r.tau_relation < 1e-5);
        assert!(structure_equation_check(&s, &sigma, &params).unwrap() < 1e-5);
    }

    fn flat_field(seed: u64) -> Superconnection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_complex(&mut rng, &[1, 2, 1]);
        let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
        let (phi0, phi1) = random_gauge(&mut rng, &ctx, 2, 1, true);
        gauge_flat(&Chart::unit(2), &c, &phi0, phi1.as_ref()).unwrap()
    }

    #[test]
    fn reparametrized_simplex_has_equivalent_f2() {
        let s = flat_field(17);
        let sigma = Simplex2::affine(&[0.1, 0.2], &[0.8, 0.1], &[0.6, 0.9]).unwrap();
        let (t1, t2) = (Polynomial::var(2, 0), Polynomial::var(2, 1));
        let one = Polynomial::constant(2, 1.0);
        let bump = t2.mul(&one.sub(&t1)).mul(&t1.sub(&t2));
        let psi = [t1.add(&bump.scale(0.8)), t2.add(&bump.scale(-0.5))];
        let moved = sigma.reparametrize(&psi).unwrap();
        assert!(boundary_mismatch(&sigma, &moved) < 1e-12);
        let params = HolonomyParams::default();
        let r = homotopy_invariance_check(&s, &sigma, &moved, &params, 1e-6).unwrap();
        assert!(r.is_exact, "residual {}", r.residual);
    }

    #[test]
    fn homotopy_check_requires_common_boundary() {
        let s = flat_field(19);
        let a = Simplex2::affine(&[0.1, 0.2], &[0.8, 0.1], &[0.6, 0.9]).unwrap();
        let b = Simplex2::affine(&[0.1, 0.2], &[0.8, 0.2], &[0.6, 0.9]).unwrap();
        let err = homotopy_invariance_check(&s, &a, &b, &HolonomyParams::default(), 1e-6);
        assert!(matches!(err, Err(HolabError::Precondition(_))));
    }

    #[test]
    fn degenerate_simplex_has_exact_f2() {
        let s = flat_field(23);
        let sigma = Simplex2::affine(&[0.1, 0.1], &[0.5, 0.5], &[0.9, 0.9]).unwrap();
        let f = f2(&s, &sigma, &HolonomyParams::default()).unwrap();
        let r = s.complex().solve_exactness(&f, 1e-6).unwrap();
        assert!(r.is_exact, "residual {}", r.residual);
    }
}
