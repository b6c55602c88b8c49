//! The four CLI commands, each producing a [`Report`].

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundle::{
    associativity_residual, curvatures, validate_cocycle, validate_differential, Cover,
    DifferentialCocycle, GammaCocycle, GroupoidMorphism,
};
use crate::crossed::{CrossedModuleContext, HElement};
use crate::error::{HolabError, Result};
use crate::holonomy::{
    compare_surface_methods, f2, homotopy_invariance_check, structure_equation_check, surface_chen,
    surface_closed_form, surface_ode, transport_ode, transport_series,
};
use crate::random::{
    random_complex, random_dims, random_endo, random_g, random_gamma_cocycle, random_h,
};
use crate::report::{blocks_json, Check, Report};
use crate::scenario::Model;

/// Collects stage timings when enabled.
struct Clock {
    enabled: bool,
    start: Instant,
    stages: BTreeMap<String, f64>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let ms = (now - self.start).as_secs_f64() * 1e3;
        self.stages.insert(stage.to_string(), ms);
        self.start = now;
    }

    fn finish(self, report: &mut Report) {
        if self.enabled {
            report.timings = Some(self.stages);
        }
    }
}

fn new_report(command: &str, model: &Model) -> Report {
    Report::new(command, model.scenario.seed, *model.params())
}

/// Flatness of every chart, then the cocycle, differential cocycle and
/// curvature residuals of the frame data `A = ω¹`, `B = −ω²`, `φ = 0`.
pub fn cmd_validate(model: &Model, timings: bool) -> Result<Report> {
    let mut report = new_report("validate", model);
    let mut clock = Clock::new(timings);
    let p = model.params();
    let tol = p.tolerances.flatness;
    for (id, s) in model.chart_ids.iter().zip(&model.systems) {
        let r = s.flatness_residuals(&s.chart().samples(p.samples));
        for (k, v) in r.iter().enumerate() {
            report.push(Check::new(
                format!("flatness.degree{}/{id}", k + 1),
                *v,
                tol,
            ));
        }
    }
    clock.lap("flatness");
    let cover = Cover::new(model.systems.iter().map(|s| s.chart().clone()).collect())?;
    let base = GammaCocycle::new(
        cover,
        model.ctx.clone(),
        model.transitions.clone(),
        BTreeMap::new(),
    )?;
    let cocycle = validate_cocycle(&base, p.samples)?;
    report.push(Check::new("cocycle.transition", cocycle.transition, tol));
    report.push(Check::new("cocycle.associator", cocycle.associator, tol));
    let a = model.systems.iter().map(|s| s.omega1().clone()).collect();
    let b = model
        .systems
        .iter()
        .map(|s| s.omega2().scale(-1.0))
        .collect();
    let dc = DifferentialCocycle::new(base, a, b, BTreeMap::new())?;
    let diff = validate_differential(&dc, p.samples)?;
    report.push(Check::new("differential.connection", diff.connection, tol));
    report.push(Check::new("differential.curving", diff.curving, tol));
    report.push(Check::new("differential.gauge", diff.gauge, tol));
    clock.lap("cocycle");
    for (i, id) in model.chart_ids.iter().enumerate() {
        let c = curvatures(&dc, i, p.samples)?;
        report.push(Check::new(format!("curvature.fake/{id}"), c.fake, tol));
        report.push(Check::new(
            format!("curvature.three_form/{id}"),
            c.three_form,
            tol,
        ));
    }
    clock.lap("curvatures");
    report.insert(
        "overlaps",
        serde_json::json!({ "pairs": diff.pairs, "triples": cocycle.triples }),
    );
    clock.finish(&mut report);
    Ok(report)
}

fn unknown(what: &str, id: &str) -> HolabError {
    HolabError::Scenario(format!("unknown {what} `{id}`"))
}

/// Transport along a path (`ode`, `series`) or surface holonomy of a simplex
/// (`soe`, `closedform`, `chen`).
pub fn cmd_holonomy(
    model: &Model,
    object: &str,
    method: Option<&str>,
    timings: bool,
) -> Result<Report> {
    let mut report = new_report("holonomy", model);
    let mut clock = Clock::new(timings);
    let p = model.params();
    let hp = &p.holonomy;
    report.insert("object", object);
    if let Some(path) = model.paths.get(object) {
        let chart = model.chart_for(|c| path.inside(c, 1e-9), &format!("path `{object}`"))?;
        let s = &model.systems[chart];
        let method = method.unwrap_or("ode");
        let t = match method {
            "ode" => transport_ode(s, path, hp.steps)?,
            "series" => transport_series(s, path, hp.series_order, hp.quadrature_order)?,
            other => {
                return Err(HolabError::Scenario(format!(
                    "unknown path method `{other}` (ode|series)"
                )))
            }
        };
        report.insert("chart", &model.chart_ids[chart]);
        report.insert("method", method);
        report.insert("value", blocks_json(&t.value));
        report.insert("error_estimate", t.error_estimate);
        if method == "ode" {
            report.push(
                Check::new("step_halving", t.error_estimate, p.tolerances.comparison)
                    .with_method("ode"),
            );
        }
        if let Some(w) = t.warning {
            report.warnings.push(w);
        }
    } else if let Some(sigma) = model.simplices.get(object) {
        let chart = model.chart_for(|c| sigma.inside(c, 1e-9), &format!("simplex `{object}`"))?;
        let s = &model.systems[chart];
        let method = method.unwrap_or("chen");
        let r = match method {
            "soe" => surface_ode(s, sigma, hp)?,
            "closedform" => surface_closed_form(s, sigma, hp)?,
            "chen" => surface_chen(s, sigma, hp)?,
            other => {
                return Err(HolabError::Scenario(format!(
                    "unknown simplex method `{other}` (soe|closedform|chen)"
                )))
            }
        };
        report.insert("chart", &model.chart_ids[chart]);
        report.insert("method", method);
        report.insert("value", blocks_json(&r.value));
        report.insert("g_gamma0", blocks_json(&r.g_gamma0));
        report.insert("g_gamma1", blocks_json(&r.g_gamma1));
    } else {
        return Err(unknown("object", object));
    }
    clock.lap("holonomy");
    clock.finish(&mut report);
    Ok(report)
}

/// Runs the three surface methods on one simplex (or all) of a flat chart.
pub fn cmd_compare(model: &Model, object: Option<&str>, timings: bool) -> Result<Report> {
    let mut report = new_report("compare", model);
    let mut clock = Clock::new(timings);
    let p = model.params();
    let tol = p.tolerances.comparison;
    let ids: Vec<&String> = match object {
        Some(id) => vec![
            model
                .simplices
                .get_key_value(id)
                .ok_or_else(|| unknown("simplex", id))?
                .0,
        ],
        None => model.simplices.keys().collect(),
    };
    if ids.is_empty() {
        return Err(HolabError::Scenario("no simplices to compare".into()));
    }
    let mut jobs = Vec::with_capacity(ids.len());
    for id in ids {
        let sigma = &model.simplices[id];
        let chart = model.chart_for(|c| sigma.inside(c, 1e-9), &format!("simplex `{id}`"))?;
        let s = &model.systems[chart];
        let flat = s.flatness_residuals(&s.chart().samples(p.samples));
        if flat.iter().any(|&v| v > p.tolerances.flatness) {
            return Err(HolabError::Precondition(format!(
                "flatness precondition failed on chart `{}`: residuals {flat:?}",
                model.chart_ids[chart]
            )));
        }
        jobs.push((id, s, sigma));
    }
    clock.lap("flatness");
    let results = jobs
        .par_iter()
        .map(|&(_, s, sigma)| {
            let r = compare_surface_methods(s, sigma, &p.holonomy, tol)?;
            Ok((r, structure_equation_check(s, sigma, &p.holonomy)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for ((id, _, _), (r, structure)) in jobs.iter().zip(results) {
        for (name, residual) in [
            ("soe_vs_closedform", r.ode_vs_closed_form.residual),
            ("soe_vs_chen", r.ode_vs_chen.residual),
            ("closedform_vs_chen", r.closed_form_vs_chen.residual),
            ("tau_relation", r.tau_relation),
            ("structure_equation", structure),
        ] {
            report.push(Check::new(format!("{name}/{id}"), residual, tol));
        }
        report.insert(format!("{id}.chen"), blocks_json(&r.chen.value));
    }
    clock.lap("surfaces");
    clock.finish(&mut report);
    Ok(report)
}

/// Residuals of the crossed-module laws on one random instance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CrossedResiduals {
    pub tau_homomorphism: f64,
    pub alpha_equivariance: f64,
    pub peiffer: f64,
    pub well_definedness: f64,
    pub h_mul_associativity: f64,
}

impl CrossedResiduals {
    pub fn max(self, other: Self) -> Self {
        Self {
            tau_homomorphism: self.tau_homomorphism.max(other.tau_homomorphism),
            alpha_equivariance: self.alpha_equivariance.max(other.alpha_equivariance),
            peiffer: self.peiffer.max(other.peiffer),
            well_definedness: self.well_definedness.max(other.well_definedness),
            h_mul_associativity: self.h_mul_associativity.max(other.h_mul_associativity),
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("tau_homomorphism", self.tau_homomorphism),
            ("alpha_equivariance", self.alpha_equivariance),
            ("peiffer", self.peiffer),
            ("well_definedness", self.well_definedness),
            ("h_mul_associativity", self.h_mul_associativity),
        ]
    }
}

/// Draws random `h1, h2, h3 ∈ H`, `g ∈ G` and an exact perturbation, then
/// measures every crossed-module law.
pub fn crossed_residuals<R: rand::Rng>(
    rng: &mut R,
    ctx: &CrossedModuleContext,
) -> Result<CrossedResiduals> {
    let [h1, h2, h3] = [0; 3].map(|_| random_h(rng, ctx, 0.4));
    let g = random_g(rng, ctx);
    let t = |h: &HElement| ctx.tau(h);
    let h12 = ctx.h_mul(&h1, &h2);
    let tau_homomorphism = (t(&h12)?.map() - &(t(&h1)?.map() * t(&h2)?.map())).norm();

    let alpha = ctx.alpha(&g, &h1);
    let conj = &(g.map() * t(&h1)?.map()) * g.inverse().map();
    let alpha_equivariance = (t(&alpha)?.map() - &conj).norm();

    let peiffer_lhs = ctx.alpha(&t(&h1)?, &h2);
    let peiffer_rhs = ctx.h_mul(&h12, &ctx.h_inv(&h1)?);
    let peiffer = ctx
        .equal_mod_exact(peiffer_lhs.rep(), peiffer_rhs.rep())?
        .residual;

    let complex = ctx.complex();
    let k = random_endo(rng, complex, -2, 0.5);
    let d = complex.differential();
    let exact = &(d * &k) - &(&k * d);
    let h1e = ctx.h_element(h1.rep() + &exact)?;
    let mut well_definedness = (t(&h1e)?.map() - t(&h1)?.map()).norm();
    for (a, b) in [
        (ctx.h_mul(&h1e, &h2), h12.clone()),
        (ctx.h_mul(&h2, &h1e), ctx.h_mul(&h2, &h1)),
        (ctx.alpha(&g, &h1e), alpha.clone()),
    ] {
        well_definedness = well_definedness.max(ctx.equal_mod_exact(a.rep(), b.rep())?.residual);
    }

    let left = ctx.h_mul(&h12, &h3);
    let right = ctx.h_mul(&h1, &ctx.h_mul(&h2, &h3));
    let h_mul_associativity = (left.rep() - right.rep()).norm();
    Ok(CrossedResiduals {
        tau_homomorphism,
        alpha_equivariance,
        peiffer,
        well_definedness,
        h_mul_associativity,
    })
}

/// The algebraic invariant suite: crossed-module laws on seeded random
/// complexes, groupoid associativity, homotopy invariance on simplex pairs
/// and exactness of `f2` on degenerate simplices.
pub fn cmd_check(model: &Model, timings: bool) -> Result<Report> {
    let mut report = new_report("check", model);
    let mut clock = Clock::new(timings);
    let p = model.params();
    let tol = p.tolerances.algebraic;
    let mut rng = ChaCha8Rng::seed_from_u64(model.scenario.seed);

    let mut worst = crossed_residuals(&mut rng, &model.ctx)?;
    // Each instance draws from its own stream, so the verdicts do not depend
    // on the thread count.
    let seed = model.scenario.seed;
    let instances: Vec<CrossedResiduals> = (1..p.instances.max(1) as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let dims = random_dims(&mut rng, 12);
            let ctx = CrossedModuleContext::new(random_complex(&mut rng, &dims), tol)?;
            crossed_residuals(&mut rng, &ctx)
        })
        .collect::<Result<_>>()?;
    worst = instances.into_iter().fold(worst, CrossedResiduals::max);
    for (name, r) in worst.named() {
        report.push(Check::new(format!("crossed.{name}"), r, tol));
    }
    if model.complex.differential().is_zero() {
        let h1 = random_h(&mut rng, &model.ctx, 0.4);
        let h2 = random_h(&mut rng, &model.ctx, 0.4);
        let id = model.complex.identity();
        let trivial = (model.ctx.tau(&h1)?.map() - &id).norm();
        let additive = (model.ctx.h_mul(&h1, &h2).rep() - &(h1.rep() + h2.rep())).norm();
        report.push(Check::new("abelian.tau_trivial", trivial, tol));
        report.push(Check::new("abelian.h_mul_additive", additive, tol));
    }
    clock.lap("crossed");

    let chart = model.systems[0].chart().clone();
    let cover = Cover::new(vec![chart.clone(); 4])?;
    let cocycle = random_gamma_cocycle(&mut rng, &model.ctx, cover);
    let mut assoc: f64 = 0.0;
    for x in chart.samples(p.samples.clamp(1, 10)) {
        let h = |rng: &mut ChaCha8Rng| random_h(rng, &model.ctx, 0.3).into_rep().into_matrix();
        let g = random_g(&mut rng, &model.ctx).map().matrix().clone();
        let m1 = GroupoidMorphism {
            i: 2,
            j: 3,
            x: x.clone(),
            h: h(&mut rng),
            g,
        };
        let m2 = GroupoidMorphism {
            i: 1,
            j: 2,
            x: x.clone(),
            h: h(&mut rng),
            g: m1.target(&cocycle)?.g,
        };
        let m3 = GroupoidMorphism {
            i: 0,
            j: 1,
            x,
            h: h(&mut rng),
            g: m2.target(&cocycle)?.g,
        };
        assoc = assoc.max(associativity_residual(&m3, &m2, &m1, &cocycle)?);
    }
    report.push(Check::new("groupoid.associativity", assoc, tol));
    clock.lap("groupoid");

    let htol = p.tolerances.homotopy;
    let pairs = model
        .scenario
        .simplex_pairs
        .par_iter()
        .map(|pair| {
            let (a, b) = (simplex(model, &pair.first)?, simplex(model, &pair.second)?);
            let chart = model.chart_for(
                |c| a.inside(c, 1e-9) && b.inside(c, 1e-9),
                &format!("pair `{}`", pair.id),
            )?;
            let r = homotopy_invariance_check(&model.systems[chart], a, b, &p.holonomy, htol)?;
            Ok(Check::new(
                format!("homotopy/{}", pair.id),
                r.residual,
                htol,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate: Vec<_> = model
        .scenario
        .simplices
        .iter()
        .filter(|s| s.degenerate)
        .collect();
    let degenerate = degenerate
        .par_iter()
        .map(|spec| {
            let sigma = simplex(model, &spec.id)?;
            let chart =
                model.chart_for(|c| sigma.inside(c, 1e-9), &format!("simplex `{}`", spec.id))?;
            let value = f2(&model.systems[chart], sigma, &p.holonomy)?;
            let r = model.complex.solve_exactness(&value, htol)?;
            Ok(Check::new(
                format!("degenerate/{}", spec.id),
                r.residual,
                htol,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    for check in pairs.into_iter().chain(degenerate) {
        report.push(check);
    }
    clock.lap("homotopy");
    clock.finish(&mut report);
    Ok(report)
}

fn simplex<'a>(model: &'a Model, id: &str) -> Result<&'a crate::simplex::Simplex2> {
    model
        .simplices
        .get(id)
        .ok_or_else(|| unknown("simplex", id))
}
