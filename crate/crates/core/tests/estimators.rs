use agebranch::estimate::{
    bandwidth_rule_of_thumb, empirical_measure, estimate_b_naive, estimate_fb_boundary, relative_error,
};
use agebranch::quadrature::integrate;
use agebranch::rng::{stream, stream_id};
use agebranch::stats::{mean, ols, sample_std, McEstimate};
use agebranch::tree::ObservedSample;
use agebranch::*;

fn trees(b: &RateFunction, law: &OffspringLaw, t: f64, n: u32, arm: u32) -> Vec<ObservedSample> {
    (0..n)
        .map(|r| extract_sample(&simulate_tree(b, law, t, &mut stream(42, stream_id(arm, r))).unwrap()))
        .collect()
}

/// Ratio of sums with a delta-method standard error.
fn pooled(num: &[f64], den: &[f64]) -> McEstimate {
    let r = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let resid: Vec<f64> = num.iter().zip(den).map(|(a, c)| a - r * c).collect();
    McEstimate {
        mean: r,
        se: sample_std(&resid) / (resid.len() as f64).sqrt() / mean(den),
    }
}

#[test]
fn empirical_measure_of_interior_ages_targets_the_interior_limit() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let s = trees(&b, &law, 13.0, 150, 1);
    let num: Vec<f64> = s
        .iter()
        .map(|x| empirical_measure(&x.interior_lifetimes, |a| a).unwrap() * x.interior_len() as f64)
        .collect();
    let den: Vec<f64> = s.iter().map(|x| x.interior_len() as f64).collect();
    let e = pooled(&num, &den);
    let target = md.limit_measure_interior(&TestFunction::Identity).unwrap();
    assert!((e.mean - target).abs() < 3.0 * e.se, "{} ± {} vs {target}", e.mean, e.se);
}

#[test]
fn offspring_mean_estimates() {
    let b = RateFunction::trial();
    for s in trees(&b, &OffspringLaw::binary(), 10.0, 20, 2) {
        assert_eq!(estimate_m(&s), 2.0);
    }
    let law = OffspringLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap();
    let s = trees(&b, &law, 9.0, 100, 3);
    let num: Vec<f64> = s.iter().map(|x| x.interior_offspring.iter().map(|&k| f64::from(k)).sum()).collect();
    let den: Vec<f64> = s.iter().map(|x| x.interior_len() as f64).collect();
    let e = pooled(&num, &den);
    assert!((e.mean - 2.5).abs() < 3.0 * e.se, "{} ± {}", e.mean, e.se);
}

#[test]
fn lambda_representation_from_limit_measures() {
    let b = RateFunction::constant(0.4).unwrap();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let interior = md.limit_measure_interior(&TestFunction::Identity).unwrap();
    let boundary = md.limit_measure_boundary(&TestFunction::Identity).unwrap();
    assert!((interior - 1.25).abs() < 1e-9 && (boundary - 1.25).abs() < 1e-9);
    assert!((1.0 / (interior / 1.0 + boundary) - 0.4).abs() < 1e-9);
}

#[test]
fn lambda_hat_is_close_at_15() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let l: Vec<f64> = trees(&b, &law, 15.0, 50, 4)
        .iter()
        .map(|s| estimate_lambda(s, estimate_m(s)).unwrap().lambda)
        .collect();
    let m = mean(&l);
    assert!((m - 0.5173).abs() < 0.05 * 0.5173, "{m}");
}

#[test]
fn rule_of_thumb_arithmetic() {
    let n = 100_000;
    let a = ((n as f64 - 1.0) / n as f64).sqrt();
    let ages: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 5.0 + a } else { 5.0 - a }).collect();
    let h = bandwidth_rule_of_thumb(&ages).unwrap();
    assert!((h - 0.106).abs() < 1e-9, "{h}");
}

/// A deterministic sample whose empirical measure is the biased law:
/// the `(i − 1/2)/n` quantiles of `f_{H_B}`.
fn quantile_sample(md: &MalthusData, n: usize, horizon: f64) -> ObservedSample {
    let h = md.biased();
    let lifetimes: Vec<f64> = (0..n)
        .map(|i| h.inverse_cumulative(-(1.0 - (i as f64 + 0.5) / n as f64).ln()))
        .collect();
    ObservedSample {
        horizon,
        interior_offspring: vec![2; n],
        interior_lifetimes: lifetimes,
        boundary_ages: vec![1.0],
    }
}

#[test]
fn exact_limit_plug_in_reconstructs_the_rate() {
    let b = RateFunction::trial();
    let md = solve_malthus(&b, &OffspringLaw::binary()).unwrap();
    let sample = quantile_sample(&md, 2_000_000, 1e3);
    let h = 1e-3;
    let grid = AgeGrid::new(0.25, 2.5, 0.05).unwrap();
    let est = estimate_b(&sample, 2.0, md.lambda, Kernel::Gaussian, h, &grid).unwrap();
    let sup_slope = (0..=3000)
        .map(|i| b.derivative(i as f64 * 1e-3).unwrap().abs())
        .fold(0.0, f64::max);
    for (x, v) in est.grid.iter().zip(&est.b_hat) {
        assert!((v - b.eval(*x)).abs() <= sup_slope * h, "x={x}: {v} vs {}", b.eval(*x));
    }
}

#[test]
fn boundary_density_targets_shifted_rate_density() {
    let (bv, t, h, x) = (0.4, 15.0, 0.2, 1.0);
    let b = RateFunction::constant(bv).unwrap();
    let law = OffspringLaw::binary();
    let grid = AgeGrid::new(x, x, 0.1).unwrap();
    let vals: Vec<f64> = trees(&b, &law, t, 300, 5)
        .iter()
        .map(|s| {
            let m = estimate_m(s);
            let l = estimate_lambda(s, m).unwrap().lambda;
            estimate_fb_boundary(s, m, l, Kernel::Gaussian, h, &grid).unwrap()[0]
        })
        .collect();
    let e = McEstimate::from_samples(&vals);
    let rate = 2.0 * bv;
    let target = |y: f64| if y < 0.0 { 0.0 } else { rate * (-rate * y).exp() };
    let smoothed = integrate(|y| Kernel::Gaussian.scaled(h, x - y) * target(y), x - 8.0 * h, x + 8.0 * h, 1e-12, 1e-12).value;
    let bias = (smoothed - target(x)).abs();
    assert!((e.mean - target(x)).abs() < 3.0 * e.se + bias, "{} ± {} vs {} (bias {bias})", e.mean, e.se, target(x));
}

#[test]
fn boundary_estimator_variance_grows_faster_in_one_over_h() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let md = solve_malthus(&b, &law).unwrap();
    let samples = trees(&b, &law, 13.0, 200, 6);
    let hs = [0.05, 0.1, 0.2];
    let x = 1.0;
    let grid = AgeGrid::new(x, x, 0.1).unwrap();
    let mut var_b = Vec::new();
    let mut var_f = Vec::new();
    for &h in &hs {
        let bv: Vec<f64> = samples
            .iter()
            .map(|s| estimate_b(s, 2.0, md.lambda, Kernel::Gaussian, h, &grid).unwrap().b_hat[0])
            .collect();
        let fv: Vec<f64> = samples
            .iter()
            .map(|s| estimate_fb_boundary(s, 2.0, md.lambda, Kernel::Gaussian, h, &grid).unwrap()[0])
            .collect();
        var_b.push(sample_std(&bv).powi(2).ln());
        var_f.push(sample_std(&fv).powi(2).ln());
    }
    let lh: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let (sb, _) = ols(&lh, &var_b);
    let (sf, _) = ols(&lh, &var_f);
    assert!((sb + 1.0).abs() <= 0.3, "interior slope {sb}");
    assert!((sf + 3.0).abs() <= 0.9, "boundary slope {sf}");
}

#[test]
fn debiasing_is_necessary() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let grid = AgeGrid::default();
    let pts = grid.points();
    for (k, t) in [11.0, 13.0, 15.0].into_iter().enumerate() {
        let s = trees(&b, &law, t, 20, 10 + k as u32);
        let naive: Vec<f64> = s
            .iter()
            .map(|x| {
                let h = bandwidth_rule_of_thumb(&x.interior_lifetimes).unwrap();
                relative_error(&estimate_b_naive(x, Kernel::Gaussian, h, &grid).unwrap().b_hat, |y| b.eval(y), &pts)
            })
            .collect();
        let fixed: Vec<f64> = s
            .iter()
            .map(|x| relative_error(&estimate_all(x, Kernel::Gaussian, Bandwidth::RuleOfThumb, &grid).unwrap().b_hat, |y| b.eval(y), &pts))
            .collect();
        assert!(mean(&naive) > 0.1, "T={t}: naive error {}", mean(&naive));
        assert!(mean(&naive) > mean(&fixed), "T={t}");
    }
}

#[test]
fn denominator_stays_away_from_zero() {
    let b = RateFunction::trial();
    let law = OffspringLaw::binary();
    let grid = AgeGrid::default();
    let s = trees(&b, &law, 13.0, 100, 20);
    let ok = s
        .iter()
        .filter(|x| {
            let e = estimate_all(x, Kernel::Gaussian, Bandwidth::RuleOfThumb, &grid).unwrap();
            e.denominator.iter().all(|&d| d > 0.05)
        })
        .count();
    assert!(ok >= 99, "{ok} of 100");
}
