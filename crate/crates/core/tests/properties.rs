use std::sync::OnceLock;

use proptest::prelude::*;

use flowlip_core::extension::{mcshane_extend, SampledFunction};
use flowlip_core::fields::{continuity_modulus, CatalogField, FieldSpec, SpaceTimePoint};
use flowlip_core::flow::{build_flowtube, covering_multiflow, fig1_concatenation, validate_fb_curve, MultiFlow};
use flowlip_core::grid::{Domain, Lattice};
use flowlip_core::metric::{distance_lambda, multi_source_distances, GraphConfig, LipMetric, MetricGraph};
use flowlip_core::sobolev::{maximal_function, radii_ladder, uniqueness_certificate, CertifyOptions, GridScalarField};
use flowlip_core::transport::{compare_solutions, eulerian_solve, DensityField};

const H: f64 = 1.0 / 16.0;

struct Setup {
    mf: MultiFlow,
    g: MetricGraph,
}

fn cubic() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let spec = FieldSpec::catalog(CatalogField::Cubic, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        let mf = covering_multiflow(&spec, H, H, true).unwrap();
        let g = MetricGraph::from_multiflow(&spec, &mf, &GraphConfig::new(H, H), 1.0).unwrap();
        Setup { mf, g }
    })
}

fn catalog() -> impl Strategy<Value = CatalogField> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(|c| CatalogField::Constant { c: vec![c] }),
        Just(CatalogField::Shear),
        Just(CatalogField::Cubic),
        Just(CatalogField::Fig1),
        (0.55..0.95f64).prop_map(|alpha| CatalogField::Holder { alpha, p: 2.0 }),
    ]
}

fn point() -> impl Strategy<Value = SpaceTimePoint> {
    (0.0..=1.0f64, -1.0..=1.0f64).prop_map(|(t, x)| SpaceTimePoint::planar(t, x))
}

fn node() -> impl Strategy<Value = usize> {
    any::<prop::sample::Index>().prop_map(|i| i.index(cubic().g.node_count()))
}

fn lambda() -> impl Strategy<Value = f64> {
    (0..6i32).prop_map(|k| 0.5f64.powi(k))
}

fn dist(l: f64, x: &SpaceTimePoint, y: &SpaceTimePoint) -> f64 {
    distance_lambda(&cubic().g.with_lambda(l).unwrap(), x, y).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn time_component_is_one(f in catalog(), p in point()) {
        let spec = FieldSpec::catalog(f, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        prop_assert_eq!(spec.eval(&p).unwrap()[0], 1.0);
    }

    #[test]
    fn cubic_curves_solve_the_ode(a in -1.0..0.0f64, s in 0.05..0.95f64) {
        let e = 1e-4;
        let z = |s: f64| CatalogField::Cubic.analytic_curve(&[a], s).unwrap()[0];
        let fd = (z(s + e) - z(s - e)) / (2.0 * e);
        let mut v = [0.0];
        CatalogField::Cubic.velocity(&[z(s)], &mut v);
        prop_assert!((fd - v[0]).abs() <= 1e-6 * (1.0 + v[0].abs()), "{} {}", fd, v[0]);
    }

    #[test]
    fn continuity_modulus_is_monotone(r1 in 0.15..2.0f64, r2 in 0.15..2.0f64) {
        let spec = FieldSpec::catalog(CatalogField::Shear, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(continuity_modulus(&spec, lo, 16).unwrap() <= continuity_modulus(&spec, hi, 16).unwrap());
    }

    #[test]
    fn multiflow_time_is_exact(c in any::<prop::sample::Index>(), i in 0..17usize) {
        let mf = &cubic().mf;
        if let Some(p) = mf.point(c.index(mf.len()), i) {
            prop_assert_eq!(p.x0, cubic().g.times[i]);
        }
    }

    #[test]
    fn fb_validation_ignores_reversal(k in 4..8i32) {
        let spec = FieldSpec::catalog(CatalogField::Fig1, Domain::interval(2.0, -1.0, 1.0)).unwrap();
        let c = fig1_concatenation(0.5f64.powi(k));
        let a = validate_fb_curve(&spec, &c, 1e-2).unwrap();
        let b = validate_fb_curve(&spec, &c.reversed(), 1e-2).unwrap();
        prop_assert_eq!(a.pass, b.pass);
        prop_assert!((a.max_residual - b.max_residual).abs() <= 1e-12);
    }

    #[test]
    fn distance_grows_as_lambda_shrinks(x in point(), y in point(), k in 0..5i32) {
        let l = 0.5f64.powi(k);
        prop_assert!(dist(l / 2.0, &x, &y) >= dist(l, &x, &y));
    }

    #[test]
    fn node_distances_bound_time_and_are_symmetric(i in node(), j in node(), l in lambda()) {
        let g = &cubic().g;
        let (x, y) = (g.node_point(i), g.node_point(j));
        let d = dist(l, &x, &y);
        prop_assert!(d >= (y.x0 - x.x0).abs());
        prop_assert!((d - dist(l, &y, &x)).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn triangle_inequality_on_nodes(i in node(), j in node(), k in node(), l in lambda()) {
        let g = &cubic().g;
        let (x, y, z) = (g.node_point(i), g.node_point(j), g.node_point(k));
        prop_assert!(dist(l, &x, &z) <= dist(l, &x, &y) + dist(l, &y, &z) + 1e-12);
    }

    #[test]
    fn mcshane_ordering_and_edge_bound(l in lambda(), lext in 1.0..4.0f64, i in node()) {
        let s = cubic();
        let g = s.g.with_lambda(l).unwrap();
        let a0 = s.mf.find_param(&[0.0]).unwrap();
        let a1 = s.mf.find_param(&[-1.0]).unwrap();
        let tube = build_flowtube(&s.mf, &[a0, a1]).unwrap();
        let phi = SampledFunction::on_tube(&tube, |c, p| if c == a1 { 1.0 + p.x0 } else { 0.0 }).unwrap();
        let ext = mcshane_extend(&g, &phi, lext).unwrap();
        for (k, y) in phi.nodes(&g).unwrap().into_iter().enumerate().step_by(3) {
            let d = multi_source_distances(&g, &[(y, 0.0)], LipMetric::Lambda);
            prop_assert!(ext.values[i] <= phi.values[k] + lext * d[i] + 1e-12);
        }
        for (w, base, kind) in g.edges(i) {
            let cost = if kind == 0 { base / l } else { base };
            prop_assert!((ext.values[i] - ext.values[w]).abs() <= lext * cost + 1e-12);
        }
    }

    #[test]
    fn maximal_function_is_monotone_homogeneous_and_dominates_averages(
        vals in prop::collection::vec(0.0..5.0f64, 33),
        bump in 0.0..1.0f64,
        scale in 0.1..10.0f64,
    ) {
        let lat = Lattice::covering(&[0.0], &[1.0], 1.0 / 32.0).unwrap();
        let f = GridScalarField::new(lat.clone(), vals.clone(), None).unwrap();
        let g = GridScalarField::new(lat.clone(), vals.iter().map(|v| v + bump).collect(), None).unwrap();
        let s = GridScalarField::new(lat.clone(), vals.iter().map(|v| v * scale).collect(), None).unwrap();
        let radii = radii_ladder(1.0 / 32.0, 1.0);
        let (mf, mg, ms) = (
            maximal_function(&f, &radii).unwrap(),
            maximal_function(&g, &radii).unwrap(),
            maximal_function(&s, &radii).unwrap(),
        );
        for &r in &radii {
            let avg = maximal_function(&f, &[r]).unwrap();
            for i in 0..lat.len() {
                prop_assert!(mf.values[i] >= avg.values[i]);
            }
        }
        for i in 0..lat.len() {
            prop_assert!(mf.values[i] <= mg.values[i]);
            prop_assert!((ms.values[i] - scale * mf.values[i]).abs() <= 1e-9 * (1.0 + ms.values[i]));
        }
    }

    #[test]
    fn eulerian_mass_balance(vals in prop::collection::vec(0.0..2.0f64, 33), c in -1.0..1.0f64) {
        let spec = FieldSpec::catalog(CatalogField::Constant { c: vec![c] }, Domain::interval(1.0, -1.0, 1.0)).unwrap();
        let lat = Lattice::covering(&[-1.0], &[1.0], 1.0 / 16.0).unwrap();
        let u0 = GridScalarField::new(lat, vals, None).unwrap();
        let e = eulerian_solve(&spec, &u0, &[0.0, 0.25, 0.5, 1.0], 1.0 / 64.0).unwrap();
        for k in 1..e.times.len() {
            let bal = e.mass[k] - e.mass[k - 1] + e.boundary_flux[k];
            prop_assert!(bal.abs() <= 1e-12 * (1.0 + e.mass[k - 1]), "{}", bal);
        }
    }

    #[test]
    fn compare_solutions_is_a_pseudometric(
        a in prop::collection::vec(-1.0..1.0f64, 18),
        b in prop::collection::vec(-1.0..1.0f64, 18),
        c in prop::collection::vec(-1.0..1.0f64, 18),
    ) {
        let lat = Lattice::covering(&[0.0], &[1.0], 0.125).unwrap();
        let field = |v: &[f64]| DensityField::from_fn(lat.clone(), &[0.0, 1.0], |t, x| {
            let i = lat.nearest(x) + if t > 0.5 { 9 } else { 0 };
            v[i]
        });
        let (fa, fb, fc) = (field(&a), field(&b), field(&c));
        let ab = compare_solutions(&fa, &fb).unwrap();
        prop_assert_eq!(&ab, &compare_solutions(&fb, &fa).unwrap());
        let (ac, bc) = (compare_solutions(&fa, &fc).unwrap(), compare_solutions(&fb, &fc).unwrap());
        for k in 0..2 {
            prop_assert!(ac[k] <= ab[k] + bc[k] + 1e-15);
        }
    }
}

#[test]
fn finite_fraction_shrinks_with_the_cap() {
    let spec = FieldSpec::catalog(CatalogField::Holder { alpha: 2.0 / 3.0, p: 2.0 }, Domain::interval(1.0, -1.0, 3.0)).unwrap();
    let starts: Vec<Vec<f64>> = (0..200).map(|k| vec![-1.0 + 0.01 * k as f64 + 0.005]).collect();
    let c = uniqueness_certificate(&spec, &starts, &CertifyOptions::new(1, 2.0, 1.0 / 64.0, 1.0 / 64.0)).unwrap();
    let caps: Vec<f64> = (0..20).map(|k| c.cap * 4.0 * 0.7f64.powi(k)).collect();
    let fr: Vec<f64> = caps.iter().map(|&k| c.fraction_below(k)).collect();
    assert!(fr.windows(2).all(|w| w[1] <= w[0]), "{fr:?}");
}
