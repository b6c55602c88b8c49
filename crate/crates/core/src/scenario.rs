//! Scenario files: a complex, charts with their connections, transitions and
//! named geometric objects, resolved into library values.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crossed::CrossedModuleContext;
use crate::error::{HolabError, Result};
use crate::forms::{gauge_flat, Chart, EndValuedForm, InvertibleField, Superconnection};
use crate::graded::{CochainComplex, GradedSpace};
use crate::holonomy::HolonomyParams;
use crate::poly::{parse_monomial, MatPoly, Polynomial};
use crate::random::{random_complex, random_gauge};
use crate::simplex::{PLPath, Simplex2};

pub const SCHEMA_VERSION: u32 = 1;

/// Row-major matrix.
pub type MatrixSpec = Vec<Vec<f64>>;

/// Matrix polynomial as `{"i,j,…": matrix}`.
pub type MatPolySpec = BTreeMap<String, MatrixSpec>;

/// Form as `{"k" or "k,l" (coordinate indices): matrix polynomial}`.
pub type FormSpec = BTreeMap<String, MatPolySpec>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub complex: ComplexSpec,
    #[serde(default)]
    pub charts: Vec<ChartSpec>,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
    #[serde(default)]
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub simplices: Vec<SimplexSpec>,
    #[serde(default)]
    pub simplex_pairs: Vec<SimplexPairSpec>,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSpec {
    /// Dimensions of `V⁰, V¹, …`.
    pub dims: Vec<usize>,
    /// Blocks `V^k → V^{k+1}` keyed by `k`.
    #[serde(default)]
    pub differential: BTreeMap<String, MatrixSpec>,
    /// Draw a random differential from the scenario seed instead.
    #[serde(default)]
    pub random: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub id: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub connection: ConnectionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectionSpec {
    Explicit {
        #[serde(default)]
        omega1: FormSpec,
        #[serde(default)]
        omega2: FormSpec,
        #[serde(default)]
        omega3: Option<FormSpec>,
    },
    /// `φ⁻¹(d + ∂)φ` for a seeded random gauge field.
    GaugeFlat {
        seed: u64,
        degree: u32,
        #[serde(default = "yes")]
        with_phi1: bool,
    },
    /// `g D g⁻¹` for the connection of chart `from` and the transition
    /// `from → this chart`.
    Induced { from: String },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub from: String,
    pub to: String,
    /// Factors multiplied left to right.
    pub factors: Vec<FactorSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    Constant {
        matrix: MatrixSpec,
    },
    /// `id + p(x)·N` with `N² = 0`.
    Unipotent {
        poly: BTreeMap<String, f64>,
        nilpotent: MatrixSpec,
    },
    /// Seeded random chain-map field of the given polynomial degree.
    Random {
        seed: u64,
        degree: u32,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub id: String,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexSpec {
    pub id: String,
    pub vertices: [Vec<f64>; 3],
    /// Coefficients `(c₁, c₂)` of the boundary-fixing reparametrisation
    /// `t_k ↦ t_k + c_k·t₂(1 − t₁)(t₁ − t₂)`.
    #[serde(default)]
    pub bump: Option<[f64; 2]>,
    /// Marks a simplex whose image has no area.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexPairSpec {
    pub id: String,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub algebraic: f64,
    pub comparison: f64,
    pub flatness: f64,
    pub homotopy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            algebraic: 1e-10,
            comparison: 1e-5,
            flatness: 1e-8,
            homotopy: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub holonomy: HolonomyParams,
    pub tolerances: Tolerances,
    /// Sample points per chart or overlap for sampled checks.
    pub samples: usize,
    /// Random instances for the algebraic suite.
    pub instances: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            holonomy: HolonomyParams::default(),
            tolerances: Tolerances::default(),
            samples: 20,
            instances: 20,
        }
    }
}

/// Parses a scenario, reporting the JSON path and line of the first error.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        HolabError::Scenario(format!(
            "at `{path}` (line {}, column {}): {inner}",
            inner.line(),
            inner.column()
        ))
    })?;
    if scenario.schema_version != SCHEMA_VERSION {
        return Err(HolabError::Scenario(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            scenario.schema_version
        )));
    }
    Ok(scenario)
}

pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HolabError::Scenario(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// A scenario with every reference resolved.
#[derive(Debug, Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub complex: CochainComplex,
    pub ctx: CrossedModuleContext,
    pub chart_ids: Vec<String>,
    pub systems: Vec<Superconnection>,
    pub transitions: BTreeMap<(usize, usize), InvertibleField>,
    pub paths: BTreeMap<String, PLPath>,
    pub simplices: BTreeMap<String, Simplex2>,
}

fn bad(msg: impl Into<String>) -> HolabError {
    HolabError::Scenario(msg.into())
}

fn matrix(spec: &MatrixSpec, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if spec.len() != rows || spec.iter().any(|r| r.len() != cols) {
        return Err(bad(format!("{what}: expected a {rows}×{cols} matrix")));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| spec[i][j]))
}

fn indices(key: &str, what: &str) -> Result<Vec<usize>> {
    key.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("{what}: bad index list `{key}`")))
        })
        .collect()
}

fn mat_poly(spec: &MatPolySpec, nvars: usize, n: usize, what: &str) -> Result<MatPoly> {
    let mut p = MatPoly::zero(nvars, n, n);
    for (key, m) in spec {
        let mono = parse_monomial(key, nvars).map_err(|e| bad(format!("{what}: {e}")))?;
        p.add_term(mono, &matrix(m, n, n, &format!("{what}[{key}]"))?);
    }
    Ok(p)
}

fn form(
    spec: &FormSpec,
    space: &GradedSpace,
    nvars: usize,
    degree: usize,
    what: &str,
) -> Result<EndValuedForm> {
    let n = space.total_dim();
    let inner = 1 - degree as i32;
    let mut comps = BTreeMap::new();
    for (key, poly) in spec {
        let idx = indices(key, what)?;
        if idx.len() != degree
            || idx.windows(2).any(|w| w[0] >= w[1])
            || idx.iter().any(|&i| i >= nvars)
        {
            return Err(bad(format!("{what}: component `{key}` must be {degree} increasing coordinate indices below {nvars}")));
        }
        comps.insert(idx, mat_poly(poly, nvars, n, &format!("{what}[{key}]"))?);
    }
    EndValuedForm::from_components(space, nvars, degree, inner, comps)
        .map_err(|e| bad(format!("{what}: {e}")))
}

fn complex(spec: &ComplexSpec, seed: u64) -> Result<CochainComplex> {
    if spec.random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(random_complex(&mut rng, &spec.dims));
    }
    let space = GradedSpace::from_dims(&spec.dims);
    let mut blocks = BTreeMap::new();
    for (key, m) in &spec.differential {
        let k: i32 = key
            .trim()
            .parse()
            .map_err(|_| bad(format!("complex.differential: bad degree `{key}`")))?;
        let (src, dst) = (space.dim(k), space.dim(k + 1));
        blocks.insert(
            k,
            matrix(m, dst, src, &format!("complex.differential[{key}]"))?,
        );
    }
    CochainComplex::new(space, &blocks).map_err(|e| bad(format!("complex: {e}")))
}

fn factor(
    spec: &FactorSpec,
    ctx: &CrossedModuleContext,
    nvars: usize,
    what: &str,
) -> Result<InvertibleField> {
    let n = ctx.complex().total_dim();
    let field = match spec {
        FactorSpec::Constant { matrix: m } => {
            InvertibleField::constant(nvars, &matrix(m, n, n, what)?)?
        }
        FactorSpec::Unipotent { poly, nilpotent } => {
            let mut p = Polynomial::zero(nvars);
            for (key, &c) in poly {
                p.add_term(
                    parse_monomial(key, nvars).map_err(|e| bad(format!("{what}: {e}")))?,
                    c,
                );
            }
            InvertibleField::unipotent(&p, &matrix(nilpotent, n, n, what)?)?
        }
        FactorSpec::Random { seed, degree } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            random_gauge(&mut rng, ctx, nvars, *degree, false).0
        }
    };
    Ok(field)
}

impl Model {
    pub fn from_scenario(scenario: Scenario) -> Result<Self> {
        let complex = complex(&scenario.complex, scenario.seed)?;
        let ctx = CrossedModuleContext::new(complex.clone(), scenario.params.tolerances.algebraic)?;
        if scenario.charts.is_empty() {
            return Err(bad("no charts"));
        }
        let chart_ids: Vec<String> = scenario.charts.iter().map(|c| c.id.clone()).collect();
        let lookup = |id: &str, what: &str| -> Result<usize> {
            chart_ids
                .iter()
                .position(|c| c == id)
                .ok_or_else(|| bad(format!("{what}: unknown chart `{id}`")))
        };
        for (i, id) in chart_ids.iter().enumerate() {
            if chart_ids[..i].contains(id) {
                return Err(bad(format!("duplicate chart id `{id}`")));
            }
        }
        let dim = scenario.charts[0].lo.len();
        let boxes: Vec<Chart> = scenario
            .charts
            .iter()
            .map(|c| {
                if c.lo.len() != dim {
                    return Err(bad(format!(
                        "chart `{}`: all charts must have dimension {dim}",
                        c.id
                    )));
                }
                Chart::new(c.lo.clone(), c.hi.clone())
                    .map_err(|e| bad(format!("chart `{}`: {e}", c.id)))
            })
            .collect::<Result<_>>()?;
        let mut transitions = BTreeMap::new();
        for (t_idx, t) in scenario.transitions.iter().enumerate() {
            let what = format!("transitions[{t_idx}]");
            let (i, j) = (lookup(&t.from, &what)?, lookup(&t.to, &what)?);
            if i == j || transitions.contains_key(&(i, j)) {
                return Err(bad(format!(
                    "{what}: repeated or self transition `{}` → `{}`",
                    t.from, t.to
                )));
            }
            let mut g = InvertibleField::identity(dim, complex.total_dim());
            for (f_idx, f) in t.factors.iter().enumerate() {
                g = g.then(&factor(f, &ctx, dim, &format!("{what}.factors[{f_idx}]"))?);
            }
            transitions.insert((i, j), g);
        }
        let mut systems: Vec<Option<Superconnection>> = vec![None; boxes.len()];
        // Induced charts may refer to charts defined later, so resolve in passes.
        let mut remaining: Vec<usize> = (0..boxes.len()).collect();
        while !remaining.is_empty() {
            let before = remaining.len();
            let mut next = Vec::new();
            for i in remaining {
                let spec = &scenario.charts[i];
                let what = format!("chart `{}`", spec.id);
                let built = match &spec.connection {
                    ConnectionSpec::Explicit {
                        omega1,
                        omega2,
                        omega3,
                    } => {
                        let space = complex.space();
                        let w1 = form(omega1, space, dim, 1, &format!("{what}.omega1"))?;
                        let w2 = form(omega2, space, dim, 2, &format!("{what}.omega2"))?;
                        let w3 = omega3
                            .as_ref()
                            .map(|f| form(f, space, dim, 3, &format!("{what}.omega3")))
                            .transpose()?;
                        Some(Superconnection::new(
                            boxes[i].clone(),
                            complex.clone(),
                            w1,
                            w2,
                            w3,
                        )?)
                    }
                    ConnectionSpec::GaugeFlat {
                        seed,
                        degree,
                        with_phi1,
                    } => {
                        if *degree > 3 {
                            return Err(bad(format!("{what}: gauge degree is capped at 3")));
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        let (phi0, phi1) = random_gauge(&mut rng, &ctx, dim, *degree, *with_phi1);
                        Some(gauge_flat(&boxes[i], &complex, &phi0, phi1.as_ref())?)
                    }
                    ConnectionSpec::Induced { from } => {
                        let src = lookup(from, &what)?;
                        let g = transitions
                            .get(&(src, i))
                            .ok_or_else(|| bad(format!("{what}: no transition from `{from}`")))?;
                        match &systems[src] {
                            Some(s) => Some(crate::bundle::induced_system(s, boxes[i].clone(), g)?),
                            None => None,
                        }
                    }
                };
                match built {
                    Some(s) => systems[i] = Some(s),
                    None => next.push(i),
                }
            }
            if next.len() == before {
                return Err(bad("induced charts form a cycle"));
            }
            remaining = next;
        }
        let systems: Vec<Superconnection> =
            systems.into_iter().map(|s| s.expect("resolved")).collect();
        let mut paths = BTreeMap::new();
        for p in &scenario.paths {
            if p.points.iter().any(|x| x.len() != dim) {
                return Err(bad(format!(
                    "path `{}`: points must have dimension {dim}",
                    p.id
                )));
            }
            let path =
                PLPath::polyline(&p.points).map_err(|e| bad(format!("path `{}`: {e}", p.id)))?;
            if paths.insert(p.id.clone(), path).is_some() {
                return Err(bad(format!("duplicate path id `{}`", p.id)));
            }
        }
        let mut simplices = BTreeMap::new();
        for s in &scenario.simplices {
            let what = format!("simplex `{}`", s.id);
            if s.vertices.iter().any(|v| v.len() != dim) {
                return Err(bad(format!("{what}: vertices must have dimension {dim}")));
            }
            let [v0, v1, v2] = &s.vertices;
            let mut sigma =
                Simplex2::affine(v0, v1, v2).map_err(|e| bad(format!("{what}: {e}")))?;
            if let Some([c1, c2]) = s.bump {
                let (t1, t2) = (Polynomial::var(2, 0), Polynomial::var(2, 1));
                let bump = t2
                    .mul(&Polynomial::constant(2, 1.0).sub(&t1))
                    .mul(&t1.sub(&t2));
                sigma = sigma.reparametrize(&[t1.add(&bump.scale(c1)), t2.add(&bump.scale(c2))])?;
            }
            if simplices.insert(s.id.clone(), sigma).is_some() {
                return Err(bad(format!("duplicate simplex id `{}`", s.id)));
            }
        }
        for p in &scenario.simplex_pairs {
            for id in [&p.first, &p.second] {
                if !simplices.contains_key(id) {
                    return Err(bad(format!(
                        "simplex pair `{}`: unknown simplex `{id}`",
                        p.id
                    )));
                }
            }
        }
        Ok(Self {
            scenario,
            complex,
            ctx,
            chart_ids,
            systems,
            transitions,
            paths,
            simplices,
        })
    }

    /// Index of the first chart containing every sampled point of `inside`.
    pub fn chart_for(&self, inside: impl Fn(&Chart) -> bool, what: &str) -> Result<usize> {
        self.systems
            .iter()
            .position(|s| inside(s.chart()))
            .ok_or_else(|| bad(format!("{what} does not lie in a single chart")))
    }

    pub fn params(&self) -> &Params {
        &self.scenario.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = r#"{
        "schema_version": 1,
        "seed": 4,
        "complex": { "dims": [1, 2, 1], "random": true },
        "charts": [
            { "id": "a", "lo": [0, 0], "hi": [1, 1],
              "connection": { "kind": "gauge_flat", "seed": 1, "degree": 1 } },
            { "id": "b", "lo": [0.5, 0], "hi": [1.5, 1],
              "connection": { "kind": "induced", "from": "a" } }
        ],
        "transitions": [
            { "from": "a", "to": "b", "factors": [{ "kind": "random", "seed": 2, "degree": 1 }] }
        ],
        "paths": [{ "id": "p", "points": [[0.1, 0.1], [0.9, 0.9]] }],
        "simplices": [{ "id": "s", "vertices": [[0.1, 0.1], [0.9, 0.1], [0.5, 0.8]], "bump": [0.1, 0.2] }]
    }"#;

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(FLAT).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn error(text: &str) -> String {
        match parse_scenario(text).and_then(Model::from_scenario) {
            Ok(_) => panic!("expected an error"),
            Err(e) => e.to_string(),
        }
    }

    #[test]
    fn resolves_induced_charts_and_objects() {
        let m = Model::from_scenario(parse_scenario(FLAT).unwrap()).unwrap();
        assert_eq!(m.chart_ids, ["a", "b"]);
        assert!(m.transitions.contains_key(&(0, 1)));
        assert_eq!(m.paths.len(), 1);
        assert_eq!(m.params(), &Params::default());
        let r = m.systems[1].flatness_residuals(&m.systems[1].chart().samples(5));
        assert!(r.iter().all(|&v| v < 1e-10), "{r:?}");
        let s = &m.simplices["s"];
        assert_eq!(s.vertices()[1], vec![0.9, 0.1]);
    }

    #[test]
    fn same_text_gives_same_model() {
        let a = Model::from_scenario(parse_scenario(FLAT).unwrap()).unwrap();
        let b = Model::from_scenario(parse_scenario(FLAT).unwrap()).unwrap();
        assert_eq!(
            a.complex.differential().matrix(),
            b.complex.differential().matrix()
        );
    }

    #[test]
    fn reference_errors_name_the_culprit() {
        let cases = [
            (edit(|v| v["charts"] = serde_json::json!([])), "no charts"),
            (
                edit(|v| v["charts"][1]["connection"]["from"] = "z".into()),
                "unknown chart `z`",
            ),
            (
                edit(|v| v["transitions"][0]["to"] = "a".into()),
                "self transition",
            ),
            (
                edit(|v| v["charts"][1]["id"] = "a".into()),
                "duplicate chart id",
            ),
            (
                edit(|v| v["charts"][0]["connection"]["degree"] = 4.into()),
                "capped at 3",
            ),
            (edit(|v| v["schema_version"] = 2.into()), "schema_version"),
            (
                edit(|v| {
                    v["simplex_pairs"] =
                        serde_json::json!([{"id": "q", "first": "s", "second": "t"}])
                }),
                "unknown simplex `t`",
            ),
            (
                edit(|v| v["paths"][0]["points"][1] = serde_json::json!([0.2])),
                "dimension 2",
            ),
            (
                edit(|v| {
                    v["charts"][0]["connection"] =
                        serde_json::json!({"kind": "induced", "from": "b"});
                    v["transitions"] = serde_json::json!([
                        {"from": "a", "to": "b", "factors": []},
                        {"from": "b", "to": "a", "factors": []}
                    ]);
                }),
                "cycle",
            ),
        ];
        for (text, needle) in cases {
            let e = error(&text);
            assert!(e.contains(needle), "{needle}: {e}");
        }
    }

    #[test]
    fn explicit_forms_check_shapes() {
        let bad_matrix = edit(|v| {
            v["charts"].as_array_mut().unwrap().truncate(1);
            v["transitions"] = serde_json::json!([]);
            v["charts"][0]["connection"] = serde_json::json!({
                "kind": "explicit", "omega1": {"0": {"0,0": [[1.0]]}}
            });
        });
        assert!(error(&bad_matrix).contains("expected a 4×4 matrix"));
        let bad_key = edit(|v| {
            v["charts"].as_array_mut().unwrap().truncate(1);
            v["transitions"] = serde_json::json!([]);
            v["charts"][0]["connection"] =
                serde_json::json!({"kind": "explicit", "omega2": {"1,0": {}}});
        });
        assert!(error(&bad_key).contains("increasing coordinate indices"));
    }

    #[test]
    fn unknown_fields_are_rejected_with_a_path() {
        let e = error(&edit(|v| v["charts"][0]["colour"] = "red".into()));
        assert!(e.contains("charts[0]") && e.contains("colour"), "{e}");
    }
}
