use agebranch::quadrature::integrate_with_breaks;
use agebranch::rate::ExpTerm;
use agebranch::regime::smooth_class_membership;
use agebranch::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Piece {
    width: f64,
    level: f64,
    bump: Option<(f64, f64)>,
}

fn piece() -> impl Strategy<Value = Piece> {
    (0.3..2.0f64, 0.2..1.8f64, proptest::option::of((0.0..0.6f64, 0.5..3.0f64)))
        .prop_map(|(width, level, bump)| Piece { width, level, bump })
}

fn build(pieces: &[Piece], shift: f64) -> RateFunction {
    let mut start = 0.0;
    let segments = pieces
        .iter()
        .map(|p| {
            let s = Segment {
                start,
                poly: vec![p.level + shift],
                exp: p.bump.map(|(amplitude, decay)| ExpTerm { amplitude, decay }),
            };
            start += p.width;
            s
        })
        .collect();
    RateFunction::piecewise(segments).unwrap()
}

fn law() -> impl Strategy<Value = OffspringLaw> {
    prop_oneof![
        Just(OffspringLaw::binary()),
        Just(OffspringLaw::deterministic(3).unwrap()),
        Just(OffspringLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap()),
    ]
}

fn integral(md: &MalthusData, f: impl Fn(f64) -> f64) -> f64 {
    let end = 2.0 * md.rate().x_max();
    integrate_with_breaks(f, 0.0, end, md.rate().breakpoints(), 1e-13, 1e-12).value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn densities_and_limit_measures_are_normalized(pieces in prop::collection::vec(piece(), 1..4), law in law()) {
        let b = build(&pieces, 0.0);
        let md = solve_malthus(&b, &law).unwrap();
        let f_b = integral(&md, |x| b.eval(x) * b.survival(x));
        let f_h = integral(&md, |x| md.biased_density(x));
        let mu = integral(&md, |x| md.invariant_density(x));
        let boundary = md.limit_measure_boundary(&TestFunction::One).unwrap();
        let interior = md.limit_measure_interior(&TestFunction::One).unwrap();
        for (name, v) in [("f_B", f_b), ("f_H", f_h), ("mu", mu), ("boundary", boundary), ("interior", interior)] {
            prop_assert!((v - 1.0).abs() < 1e-8, "{} = {}", name, v);
        }
    }

    #[test]
    fn malthus_residual_and_invariant_constant(pieces in prop::collection::vec(piece(), 1..4), law in law()) {
        let md = solve_malthus(&build(&pieces, 0.0), &law).unwrap();
        prop_assert!(md.residual.abs() <= 1e-10);
        let m = md.offspring_mean;
        let target = md.lambda * md.kappa_interior * m;
        prop_assert!((md.c_b - target).abs() <= 1e-8 * target, "{} vs {}", md.c_b, target);
        let sup = md.rate().upper_bound();
        prop_assert!(md.lambda > 0.0 && md.lambda <= (m - 1.0) * sup + 1e-12);
    }

    #[test]
    fn lambda_is_monotone_in_the_rate(pieces in prop::collection::vec(piece(), 1..4), shift in 0.0..0.8f64, law in law()) {
        let low = solve_malthus(&build(&pieces, 0.0), &law).unwrap();
        let high = solve_malthus(&build(&pieces, shift), &law).unwrap();
        prop_assert!(low.lambda <= high.lambda + 1e-12, "{} > {}", low.lambda, high.lambda);
    }

    #[test]
    fn constant_rates_match_closed_forms(b in 0.05..3.0f64, k in 2u32..5) {
        let law = OffspringLaw::deterministic(k).unwrap();
        let m = f64::from(k);
        let md = solve_malthus(&RateFunction::constant(b).unwrap(), &law).unwrap();
        prop_assert!((md.lambda - (m - 1.0) * b).abs() < 1e-9);
        prop_assert!((md.rho - m * b).abs() < 1e-9);
        for x in [0.0, 0.3, 1.0, 2.5] {
            let f = m * b * (-m * b * x).exp();
            prop_assert!((md.biased_rate(x).unwrap() - m * b).abs() < 1e-9);
            prop_assert!((md.biased_density(x) - f).abs() < 1e-9);
            prop_assert!((md.invariant_density(x) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn smooth_members_keep_biased_rate_above_lambda(b in 0.2..1.5f64, frac in 0.0..1.0f64, decay in 0.2..3.0f64) {
        let rate = RateFunction::piecewise(vec![Segment {
            start: 0.0,
            poly: vec![b],
            exp: Some(ExpTerm { amplitude: frac * b, decay }),
        }])
        .unwrap();
        prop_assert_eq!(smooth_class_membership(&rate, 2.0), Membership::Member);
        let md = solve_malthus(&rate, &OffspringLaw::binary()).unwrap();
        for i in 0..=400 {
            let x = i as f64 * 0.025;
            let h = md.biased_rate(x).unwrap();
            prop_assert!(h - md.lambda >= -1e-9, "x={}: H={} lambda={}", x, h, md.lambda);
        }
    }
}
