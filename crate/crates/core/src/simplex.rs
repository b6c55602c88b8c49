//! Parameter-domain geometry: polynomial paths, 2-simplices on
//! `Δ₂ = {1 ≥ t₁ ≥ t₂ ≥ 0}`, and the fold `Θ₂: I² → Δ₂` turning a simplex
//! into a fixed-ends bigon.

use crate::error::{structural, Result};
use crate::forms::Chart;
use crate::poly::Polynomial;

/// Junction tolerance for path continuity and fixed-ends checks.
pub const CONTINUITY_TOL: f64 = 1e-12;

fn eval_map(map: &[Polynomial], x: &[f64]) -> Vec<f64> {
    map.iter().map(|p| p.eval(x)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// One polynomial piece `t ↦ γ(t)` defined for `t ∈ [t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub map: Vec<Polynomial>,
    pub t0: f64,
    pub t1: f64,
}

impl PathSegment {
    pub fn new(map: Vec<Polynomial>, t0: f64, t1: f64) -> Result<Self> {
        if map.is_empty() || map.iter().any(|p| p.nvars() != 1) {
            return structural("path segments must be nonempty maps in one variable");
        }
        if !(t0 < t1) {
            return structural(format!("segment interval [{t0}, {t1}] is empty"));
        }
        Ok(Self { map, t0, t1 })
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        eval_map(&self.map, &[t])
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.map.iter().map(|p| p.deriv(0).eval(&[t])).collect()
    }

    pub fn start(&self) -> Vec<f64> {
        self.point(self.t0)
    }

    pub fn end(&self) -> Vec<f64> {
        self.point(self.t1)
    }
}

/// A continuous path made of polynomial segments.
#[derive(Debug, Clone, PartialEq)]
pub struct PLPath {
    segments: Vec<PathSegment>,
}

impl PLPath {
    pub fn new(segments: Vec<PathSegment>) -> Result<Self> {
        let Some(first) = segments.first() else {
            return structural("a path needs at least one segment");
        };
        let dim = first.map.len();
        for w in segments.windows(2) {
            if w[1].map.len() != dim {
                return structural("path segments have different dimensions");
            }
            let gap = dist(&w[0].end(), &w[1].start());
            if gap > CONTINUITY_TOL {
                return structural(format!(
                    "path is discontinuous at a junction (gap {gap:.3e})"
                ));
            }
        }
        Ok(Self { segments })
    }

    /// The straight segment from `a` to `b` on `[0, 1]`.
    pub fn line(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return structural("endpoints have different dimensions");
        }
        let t = Polynomial::var(1, 0);
        let map = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Polynomial::constant(1, x).add(&t.scale(y - x)))
            .collect();
        Self::new(vec![PathSegment::new(map, 0.0, 1.0)?])
    }

    /// The polygonal path through `points`, one unit of parameter per edge.
    pub fn polyline(points: &[Vec<f64>]) -> Result<Self> {
        if points.len() < 2 {
            return structural("a polyline needs at least two points");
        }
        let mut segs = Vec::new();
        for (i, w) in points.windows(2).enumerate() {
            let line = Self::line(&w[0], &w[1])?;
            segs.push(line.segments[0].reparametrized(i as f64, i as f64 + 1.0));
        }
        Self::new(segs)
    }

    pub fn constant(p: &[f64]) -> Result<Self> {
        Self::line(p, p)
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments[0].map.len()
    }

    pub fn start(&self) -> Vec<f64> {
        self.segments[0].start()
    }

    pub fn end(&self) -> Vec<f64> {
        self.segments.last().expect("nonempty").end()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &PLPath) -> Result<Self> {
        let mut segs = self.segments.clone();
        segs.extend(other.segments.iter().cloned());
        Self::new(segs)
    }

    /// The same path traversed backwards.
    pub fn reverse(&self) -> Self {
        let total = self.segments[0].t0 + self.segments.last().expect("nonempty").t1;
        let segs = self
            .segments
            .iter()
            .rev()
            .map(|s| s.reversed(total))
            .collect();
        Self { segments: segs }
    }

    /// Parameter interval of the whole path.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.segments[0].t0,
            self.segments.last().expect("nonempty").t1,
        )
    }

    /// The point at parameter `t`, clamped to the domain.
    pub fn point(&self, t: f64) -> Vec<f64> {
        let seg = self
            .segments
            .iter()
            .find(|s| t <= s.t1)
            .unwrap_or_else(|| self.segments.last().expect("nonempty"));
        seg.point(t.clamp(seg.t0, seg.t1))
    }

    /// The restriction to the parameter interval `[a, b]`.
    pub fn subpath(&self, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return structural(format!("empty parameter interval [{a}, {b}]"));
        }
        let segs: Vec<PathSegment> = self
            .segments
            .iter()
            .filter(|s| s.t1 > a && s.t0 < b)
            .map(|s| PathSegment {
                map: s.map.clone(),
                t0: s.t0.max(a),
                t1: s.t1.min(b),
            })
            .collect();
        Self::new(segs)
    }

    /// Splits the segment containing parameter `t` at `t`.
    pub fn split_at(&self, t: f64) -> Result<Self> {
        let mut segs = Vec::new();
        for s in &self.segments {
            if t > s.t0 && t < s.t1 {
                segs.push(PathSegment::new(s.map.clone(), s.t0, t)?);
                segs.push(PathSegment::new(s.map.clone(), t, s.t1)?);
            } else {
                segs.push(s.clone());
            }
        }
        Self::new(segs)
    }

    /// Sampled points along the path, `per_segment` per segment.
    pub fn sample(&self, per_segment: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for s in &self.segments {
            for i in 0..=per_segment {
                let t = s.t0 + (s.t1 - s.t0) * i as f64 / per_segment as f64;
                out.push(s.point(t));
            }
        }
        out
    }

    pub fn inside(&self, chart: &Chart, slack: f64) -> bool {
        self.sample(16).iter().all(|x| chart.contains(x, slack))
    }
}

impl PathSegment {
    /// The same geometric segment with parameter interval `[a, b]`.
    pub fn reparametrized(&self, a: f64, b: f64) -> Self {
        // t_old = t0 + (t − a)·(t1 − t0)/(b − a)
        let scale = (self.t1 - self.t0) / (b - a);
        let sub =
            Polynomial::constant(1, self.t0 - a * scale).add(&Polynomial::var(1, 0).scale(scale));
        let map = self
            .map
            .iter()
            .map(|p| p.compose(std::slice::from_ref(&sub)))
            .collect();
        Self { map, t0: a, t1: b }
    }

    /// Reversal under `t ↦ total − t`.
    fn reversed(&self, total: f64) -> Self {
        let sub = Polynomial::constant(1, total).sub(&Polynomial::var(1, 0));
        let map = self
            .map
            .iter()
            .map(|p| p.compose(std::slice::from_ref(&sub)))
            .collect();
        Self {
            map,
            t0: total - self.t1,
            t1: total - self.t0,
        }
    }
}

/// A polynomial map `σ: Δ₂ → chart` in the coordinates `(t₁, t₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex2 {
    map: Vec<Polynomial>,
}

impl Simplex2 {
    pub fn new(map: Vec<Polynomial>) -> Result<Self> {
        if map.is_empty() || map.iter().any(|p| p.nvars() != 2) {
            return structural("a 2-simplex is a nonempty map in two variables");
        }
        Ok(Self { map })
    }

    /// The affine simplex with the given vertices `v₀, v₁, v₂`.
    pub fn affine(v0: &[f64], v1: &[f64], v2: &[f64]) -> Result<Self> {
        // σ(t₁, t₂) = v₀ + t₁(v₁ − v₀) + t₂(v₂ − v₁), so σ(1,0) = v₁ and σ(1,1) = v₂.
        let (t1, t2) = (Polynomial::var(2, 0), Polynomial::var(2, 1));
        let map = (0..v0.len())
            .map(|i| {
                Polynomial::constant(2, v0[i])
                    .add(&t1.scale(v1[i] - v0[i]))
                    .add(&t2.scale(v2[i] - v1[i]))
            })
            .collect();
        Self::new(map)
    }

    pub fn map(&self) -> &[Polynomial] {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn point(&self, t1: f64, t2: f64) -> Vec<f64> {
        eval_map(&self.map, &[t1, t2])
    }

    /// `[v₀, v₁, v₂] = [σ(0,0), σ(1,0), σ(1,1)]`.
    pub fn vertices(&self) -> [Vec<f64>; 3] {
        [
            self.point(0.0, 0.0),
            self.point(1.0, 0.0),
            self.point(1.0, 1.0),
        ]
    }

    fn restrict(&self, sub: [Polynomial; 2]) -> PLPath {
        let map = self.map.iter().map(|p| p.compose(&sub)).collect();
        PLPath::new(vec![PathSegment::new(map, 0.0, 1.0).expect("unit interval")])
            .expect("single segment")
    }

    /// `d₀σ(t) = σ(1,t)`, `d₁σ(t) = σ(t,t)`, `d₂σ(t) = σ(t,0)`.
    pub fn face(&self, i: usize) -> Result<PLPath> {
        let t = Polynomial::var(1, 0);
        let (one, zero) = (Polynomial::constant(1, 1.0), Polynomial::zero(1));
        Ok(match i {
            0 => self.restrict([one, t]),
            1 => self.restrict([t.clone(), t]),
            2 => self.restrict([t, zero]),
            _ => return structural(format!("a 2-simplex has faces 0, 1, 2; got {i}")),
        })
    }

    /// Front face `Q₁σ = d₂σ` (edge `[v₀, v₁]`).
    pub fn front(&self) -> PLPath {
        self.face(2).expect("face 2")
    }

    /// Back face `P₁σ = d₀σ` (edge `[v₁, v₂]`).
    pub fn back(&self) -> PLPath {
        self.face(0).expect("face 0")
    }

    /// Sampled points of `Δ₂` mapped into the chart.
    pub fn inside(&self, chart: &Chart, slack: f64) -> bool {
        let n = 12;
        (0..=n).all(|i| {
            (0..=i).all(|j| {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                chart.contains(&self.point(a, b), slack)
            })
        })
    }

    /// Precomposes with a polynomial self-map `ψ` of `Δ₂`.
    pub fn reparametrize(&self, psi: &[Polynomial; 2]) -> Result<Self> {
        Self::new(self.map.iter().map(|p| p.compose(psi)).collect())
    }

    /// `σ∘Θ₂`.
    pub fn bigon(&self) -> Bigon {
        let (t, s) = (Polynomial::var(2, 0), Polynomial::var(2, 1));
        let one = Polynomial::constant(2, 1.0);
        let diag = one.sub(&t.scale(2.0));
        let pieces = THETA2_PIECES
            .iter()
            .zip([
                [diag.clone(), diag.clone()],
                [s.clone(), diag],
                [one.sub(&t).mul(&s).scale(2.0), Polynomial::zero(2)],
            ])
            .map(|(bounds, sub)| BigonPiece {
                lo: bounds.0,
                hi: bounds.1,
                map: self.map.iter().map(|p| p.compose(&sub)).collect(),
            })
            .collect();
        Bigon { pieces }
    }
}

/// Interval bounds `(a + b·s)` of the three smooth pieces of `Θ₂(·, s)`.
const THETA2_PIECES: [((f64, f64), (f64, f64)); 3] = [
    ((0.0, 0.0), (0.5, -0.5)),
    ((0.5, -0.5), (0.5, 0.0)),
    ((0.5, 0.0), (1.0, 0.0)),
];

/// `Θ₂(t, s) = q(λ(t, s))` with `q(a, b) = (max(a, b), b)` and `λ(·, s)`
/// running `(s,1) → (s,0) → (0,0)`, reaching `(s,0)` at `t = 1/2`.
pub fn theta2(t: f64, s: f64) -> (f64, f64) {
    let (a, b) = if t <= 0.5 {
        (s, 1.0 - 2.0 * t)
    } else {
        (2.0 * (1.0 - t) * s, 0.0)
    };
    (a.max(b), b)
}

/// One smooth piece of a bigon: `t ∈ [lo(s), hi(s)]` with affine bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BigonPiece {
    lo: (f64, f64),
    hi: (f64, f64),
    map: Vec<Polynomial>,
}

impl BigonPiece {
    pub fn bounds(&self, s: f64) -> (f64, f64) {
        (self.lo.0 + self.lo.1 * s, self.hi.0 + self.hi.1 * s)
    }

    /// The map in variables `(t, s)`.
    pub fn map(&self) -> &[Polynomial] {
        &self.map
    }
}

/// A piecewise polynomial map `Σ: I² → chart`; `Σ_s(t) = Σ(t, s)` runs from
/// `Σ(0, s)` to `Σ(1, s)` through the pieces in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bigon {
    pieces: Vec<BigonPiece>,
}

impl Bigon {
    pub fn pieces(&self) -> &[BigonPiece] {
        &self.pieces
    }

    pub fn point(&self, t: f64, s: f64) -> Vec<f64> {
        for p in &self.pieces {
            let (lo, hi) = p.bounds(s);
            if t >= lo && t <= hi && lo < hi {
                return eval_map(&p.map, &[t, s]);
            }
        }
        eval_map(&self.pieces.last().expect("nonempty").map, &[t, s])
    }

    /// The fiber `t ↦ Σ(t, s)` as a path, skipping empty pieces.
    pub fn fiber(&self, s: f64) -> PLPath {
        let segs = self
            .pieces
            .iter()
            .filter_map(|p| {
                let (lo, hi) = p.bounds(s);
                if hi - lo <= 0.0 {
                    return None;
                }
                let fix = [Polynomial::var(1, 0), Polynomial::constant(1, s)];
                let map = p.map.iter().map(|q| q.compose(&fix)).collect();
                Some(PathSegment {
                    map,
                    t0: lo,
                    t1: hi,
                })
            })
            .collect();
        PLPath { segments: segs }
    }

    /// Largest deviation of `Σ(0, s)` and `Σ(1, s)` from their values at
    /// `s = 0` over sampled `s`.
    pub fn fixed_ends_defect(&self) -> f64 {
        let (a, b) = (self.point(0.0, 0.0), self.point(1.0, 0.0));
        (0..=32)
            .map(|i| {
                let s = i as f64 / 32.0;
                dist(&self.point(0.0, s), &a).max(dist(&self.point(1.0, s), &b))
            })
            .fold(0.0, f64::max)
    }
}
