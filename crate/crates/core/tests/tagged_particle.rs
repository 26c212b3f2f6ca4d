use std::sync::Arc;

use agebranch::manytoone::{verify_mto_boundary, verify_mto_interior, verify_mto_pairs, Identity, MtoConfig};
use agebranch::particle::{coupling_tv, semigroup_mc, semigroup_mc_stationary, terminal_ages, Start};
use agebranch::rng::stream;
use agebranch::stats::{ks_critical, ks_critical_two_sample, ks_statistic, ks_two_sample, McEstimate};
use agebranch::*;
use rayon::prelude::*;

#[test]
fn constant_rate_jumps_are_poisson() {
    let h = RateFunction::constant(1.3).unwrap();
    let t = 2.0;
    let jumps: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|i| simulate_chain(&h, 0.0, t, &mut stream(42, i)).jumps as f64)
        .collect();
    let e = McEstimate::from_samples(&jumps);
    assert!((e.mean - 1.3 * t).abs() < 3.0 * e.se, "{} ± {}", e.mean, e.se);
    let c = simulate_chain(&h, 0.4, 0.0, &mut stream(42, 0));
    assert_eq!((c.age, c.jumps), (0.4, 0));
}

#[test]
fn terminal_age_converges_to_the_invariant_law() {
    let b = RateFunction::trial();
    let md = solve_malthus(&b, &OffspringLaw::binary()).unwrap();
    let t = 30.0 / md.rho;
    let ages = terminal_ages(md.biased(), Start::At(0.0), t, 20_000, 42);
    let d = ks_statistic(&ages, |x| md.invariant().cdf(x));
    assert!(d < ks_critical(ages.len(), 0.01), "KS {d}");
}

#[test]
fn semigroup_conservation_and_stationarity() {
    let b = RateFunction::trial();
    let md = solve_malthus(&b, &OffspringLaw::binary()).unwrap();
    let one = semigroup_mc(md.biased(), |_| 1.0, 0.3, 4.0, 2000, 42);
    assert_eq!((one.mean, one.se), (1.0, 0.0));
    let g = |x: f64| if x <= 1.0 { 1.0 } else { 0.0 };
    let e = semigroup_mc_stationary(md.biased(), md.invariant(), g, 5.0, 100_000, 43);
    let target = md.invariant().cdf(1.0);
    assert!((e.mean - target).abs() < 3.0 * e.se, "{} ± {} vs {target}", e.mean, e.se);
}

#[test]
fn invariant_law_is_preserved() {
    let b = RateFunction::trial();
    let md = solve_malthus(&b, &OffspringLaw::binary()).unwrap();
    let mu = md.invariant();
    let a = terminal_ages(md.biased(), Start::Invariant(mu), 1.0, 20_000, 44);
    let c = terminal_ages(md.biased(), Start::Invariant(mu), 6.0, 20_000, 45);
    let d = ks_two_sample(&a, &c);
    assert!(d < ks_critical_two_sample(a.len(), c.len(), 0.01), "KS {d}");
}

#[test]
fn constant_rate_age_tail_closed_form() {
    // With jumps at rate c, the age at t exceeds a < t iff no jump in (t − a, t].
    let c = 0.9;
    let h = RateFunction::constant(c).unwrap();
    let (t, x0) = (3.0, 0.5);
    for a in [0.5, 1.7, 3.2, 4.0] {
        let exact = if a < t {
            (-c * a).exp()
        } else if x0 + t > a {
            (-c * t).exp()
        } else {
            0.0
        };
        let e = semigroup_mc(&h, move |x| if x > a { 1.0 } else { 0.0 }, x0, t, 100_000, 46);
        let tol = 3.0 * e.se.max(1e-12);
        assert!((e.mean - exact).abs() <= tol, "a={a}: {} ± {} vs {exact}", e.mean, e.se);
    }
}

#[test]
fn coupling_for_constant_rate_is_exponential() {
    let c = 0.7;
    let h = RateFunction::constant(c).unwrap();
    let mu = InvariantLaw::new(Arc::new(h.clone()));
    let grid: Vec<f64> = (0..10).map(|k| k as f64 * 0.5).collect();
    let pts = coupling_tv(&h, &mu, 0.0, &grid, 100_000, 42);
    assert_eq!(pts[0].frequency, 1.0);
    for p in &pts[1..] {
        let exact = (-c * p.t).exp();
        assert!((p.frequency - exact).abs() <= 3.0 * p.se, "t={}: {} vs {exact}", p.t, p.frequency);
    }
    for w in pts.windows(2) {
        assert!(w[1].frequency <= w[0].frequency);
    }
}

#[test]
fn boundary_identity_constant_rate() {
    let b = RateFunction::constant(0.4).unwrap();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let cfg = MtoConfig::new(6.0 / md.lambda, 2000, 20_000, 42);
    let r = verify_mto_boundary(&md, &law, &TestFunction::One, &cfg).unwrap();
    assert!((r.rhs - 6f64.exp()).abs() < 1e-9 * r.rhs);
    assert!(r.passes(3.0), "{r:?}");
}

#[test]
fn boundary_identity_trial_rate_indicator() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let cfg = MtoConfig::new(8.0, 2000, 200_000, 42);
    let r = verify_mto_boundary(&md, &law, &TestFunction::IndicatorLe(1.0), &cfg).unwrap();
    assert!(r.passes(3.0), "{r:?}");
}

#[test]
fn interior_identity_constant_closed_form() {
    let b = RateFunction::constant(0.5).unwrap();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let t = 7.0;
    let cfg = MtoConfig::new(t, 2000, 2000, 42);
    let r = verify_mto_interior(&md, &law, &TestFunction::One, &cfg).unwrap();
    // H ≡ 2b and λ = b: (1/2)∫_0^T e^{bs} 2b ds = e^{bT} − 1.
    let exact = (0.5 * t).exp() - 1.0;
    assert!((r.rhs - exact).abs() < 1e-4 * exact, "{} vs {exact}", r.rhs);
    assert!(r.passes(3.0), "{r:?}");
}

#[test]
fn short_horizon_sides_vanish() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let cfg = MtoConfig::new(1e-3, 200, 2000, 42);
    let r = verify_mto_interior(&md, &law, &TestFunction::One, &cfg).unwrap();
    assert!(r.lhs == 0.0 && r.rhs < 1e-3);
    for r in verify_mto_pairs(&md, &law, &TestFunction::One, &cfg).unwrap() {
        if r.identity != Identity::AliveForks {
            assert!(r.lhs == 0.0 && r.rhs < 1e-5, "{r:?}");
        }
    }
}

#[test]
fn pair_identities_binary_constant() {
    let b = RateFunction::constant(1.0).unwrap();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    assert_eq!(law.pair_constant(), 2.0);
    let cfg = MtoConfig::new(4.0, 2000, 20_000, 42);
    for r in verify_mto_pairs(&md, &law, &TestFunction::One, &cfg).unwrap() {
        assert!(r.passes(3.0), "{r:?}");
    }
}

#[test]
fn pair_identities_random_offspring() {
    let b = RateFunction::trial();
    let law = OffspringLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
    let md = solve_malthus(&b, &law).unwrap();
    let cfg = MtoConfig::new(5.0, 2000, 20_000, 42);
    for r in verify_mto_pairs(&md, &law, &TestFunction::IndicatorLe(1.0), &cfg).unwrap() {
        assert!(r.passes(3.0), "{r:?}");
    }
}
