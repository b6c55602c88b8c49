use holab::crossed::CrossedModuleContext;
use holab::forms::{gauge_flat, Chart, Superconnection};
use holab::graded::CochainComplex;
use holab::holonomy::transport_ode;
use holab::random::{random_complex, random_endo, random_g, random_gauge, random_h};
use holab::simplex::PLPath;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..=3, 2..=3)
        .prop_filter("nonzero total", |d| d.iter().sum::<usize>() >= 2)
}

fn setup(seed: u64, dims: &[usize]) -> (ChaCha8Rng, CochainComplex, CrossedModuleContext) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_complex(&mut rng, dims);
    let ctx = CrossedModuleContext::new(c.clone(), 1e-10).unwrap();
    (rng, c, ctx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn differential_squares_to_zero(seed in any::<u64>(), dims in dims()) {
        let (_, c, _) = setup(seed, &dims);
        let d = c.differential();
        prop_assert!((d * d).norm() < 1e-12);
    }

    #[test]
    fn tau_star_kills_exact_elements(seed in any::<u64>(), dims in dims()) {
        let (mut rng, c, ctx) = setup(seed, &dims);
        let k = random_endo(&mut rng, &c, -2, 1.0);
        let d = c.differential();
        let exact = &(d * &k) - &(&k * d);
        prop_assert!(ctx.tau_star(&exact).norm() < 1e-12);
        prop_assert!(c.solve_exactness(&exact, 1e-10).unwrap().is_exact);
    }

    #[test]
    fn h_inverse_is_inverse_mod_exact(seed in any::<u64>(), dims in dims()) {
        let (mut rng, c, ctx) = setup(seed, &dims);
        let h = random_h(&mut rng, &ctx, 0.4);
        let inv = ctx.h_inv(&h).unwrap();
        for product in [ctx.h_mul(&h, &inv), ctx.h_mul(&inv, &h)] {
            let zero = c.zero(-1);
            prop_assert!(c.equal_mod_exact(product.rep(), &zero, 1e-10).unwrap().is_exact);
        }
        let tau = ctx.tau(&h).unwrap().map() * ctx.tau(&inv).unwrap().map();
        prop_assert!((&tau - &c.identity()).norm() < 1e-9);
    }

    #[test]
    fn alpha_is_an_action_by_automorphisms(seed in any::<u64>(), dims in dims()) {
        let (mut rng, _, ctx) = setup(seed, &dims);
        let (g1, g2) = (random_g(&mut rng, &ctx), random_g(&mut rng, &ctx));
        let (h1, h2) = (random_h(&mut rng, &ctx, 0.4), random_h(&mut rng, &ctx, 0.4));
        let composed = ctx.alpha(&g1.mul(&g2), &h1);
        let nested = ctx.alpha(&g1, &ctx.alpha(&g2, &h1));
        prop_assert!((composed.rep() - nested.rep()).norm() < 1e-9 * (1.0 + composed.rep().norm()));
        let lhs = ctx.alpha(&g1, &ctx.h_mul(&h1, &h2));
        let rhs = ctx.h_mul(&ctx.alpha(&g1, &h1), &ctx.alpha(&g1, &h2));
        prop_assert!((lhs.rep() - rhs.rep()).norm() < 1e-9 * (1.0 + lhs.rep().norm()));
    }

    #[test]
    fn h_identity_is_neutral(seed in any::<u64>(), dims in dims()) {
        let (mut rng, _, ctx) = setup(seed, &dims);
        let h = random_h(&mut rng, &ctx, 0.4);
        let e = ctx.h_identity();
        prop_assert!((ctx.h_mul(&h, &e).rep() - h.rep()).norm() == 0.0);
        prop_assert!((ctx.h_mul(&e, &h).rep() - h.rep()).norm() == 0.0);
    }
}

fn flat_system(seed: u64, degree: u32) -> Superconnection {
    let (mut rng, c, ctx) = setup(seed, &[1, 2, 1]);
    let (phi0, phi1) = random_gauge(&mut rng, &ctx, 2, degree, true);
    gauge_flat(&Chart::unit(2), &c, &phi0, phi1.as_ref()).unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.95, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gauge_flat_systems_are_flat(seed in any::<u64>(), degree in 1u32..=3) {
        let s = flat_system(seed, degree);
        let r = s.flatness_residuals(&s.chart().samples(10));
        prop_assert!(r.iter().all(|&v| v < 1e-9), "{r:?}");
    }

    #[test]
    fn transport_is_multiplicative_and_reverses(seed in any::<u64>(), a in point(), b in point(), c in point()) {
        let s = flat_system(seed, 1);
        let first = PLPath::line(&a, &b).unwrap();
        let second = PLPath::line(&b, &c).unwrap();
        let t1 = transport_ode(&s, &first, 400).unwrap().value;
        let t2 = transport_ode(&s, &second, 400).unwrap().value;
        let whole = transport_ode(&s, &first.concat(&second).unwrap(), 400).unwrap().value;
        prop_assert!((&whole - &(&t2 * &t1)).norm() < 1e-8);
        let back = transport_ode(&s, &first.reverse(), 400).unwrap().value;
        let n = s.complex().total_dim();
        prop_assert!(((&back * &t1).matrix() - nalgebra::DMatrix::identity(n, n)).norm() < 1e-8);
    }

    #[test]
    fn flat_transport_is_a_chain_map(seed in any::<u64>(), a in point(), b in point(), c in point()) {
        let s = flat_system(seed, 2);
        let path = PLPath::polyline(&[a, b, c]).unwrap();
        let t = transport_ode(&s, &path, 800).unwrap().value;
        prop_assert!(s.complex().chain_defect(&t) < 1e-8);
    }
}
