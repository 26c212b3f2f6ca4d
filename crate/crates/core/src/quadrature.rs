//! Numerical integration: fixed Gauss-Legendre panels and adaptive
//! Gauss-Kronrod (7, 15).

/// Five-point Gauss-Legendre nodes on [-1, 1].
const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Gauss-Legendre 5-point rule on `[a, b]`. Exact for polynomials of degree 9.
#[inline]
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Abscissae of the 5-point rule mapped onto `[a, b]`, with weights.
#[inline]
pub fn gauss_legendre5_points(a: f64, b: f64) -> [(f64, f64); 5] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out = [(0.0, 0.0); 5];
    for i in 0..5 {
        out[i] = (mid + half * GL5_NODES[i], half * GL5_WEIGHTS[i]);
    }
    out
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Subintervals are bisected (largest error first) until the summed error
/// estimate drops below `max(abs_tol, rel_tol * |value|)` or the interval
/// budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut pieces: Vec<(f64, f64, f64, f64)> = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if pieces.len() >= MAX_INTERVALS {
            return Integral {
                value: total,
                error: err,
                converged: false,
            };
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, pv, pe) = pieces.swap_remove(idx);
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            // interval is at machine resolution
            pieces.push((lo, hi, pv, 0.0));
            err -= pe;
            continue;
        }
        let (v1, e1) = gk15(&f, lo, m);
        let (v2, e2) = gk15(&f, m, hi);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        pieces.push((lo, m, v1, e1));
        pieces.push((m, hi, v2, e2));
    }
    // re-sum to shed accumulated rounding from the running updates
    let value = pieces.iter().map(|p| p.2).sum();
    Integral {
        value,
        error: err.max(0.0),
        converged: true,
    }
}

/// Adaptive integration over `[a, b]` split at the given interior breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Integral {
    let mut edges = vec![a];
    edges.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    for w in edges.windows(2) {
        let part = integrate(&f, w[0], w[1], abs_tol, rel_tol);
        out.value += part.value;
        out.error += part.error;
        out.converged &= part.converged;
    }
    out
}

/// Trapezoid rule over samples `ys` on a uniform grid of spacing `step`.
pub fn trapezoid(ys: &[f64], step: f64) -> f64 {
    match ys.len() {
        0 | 1 => 0.0,
        n => step * (0.5 * (ys[0] + ys[n - 1]) + ys[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_on_degree_nine() {
        let v = gauss_legendre5(|x| x.powi(9) + 3.0 * x.powi(4), 0.0, 2.0);
        let exact = 2f64.powi(10) / 10.0 + 3.0 * 2f64.powi(5) / 5.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn adaptive_handles_kinks_and_peaks() {
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-13, 1e-13);
        assert!(r.converged);
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-12);

        let r = integrate(|x: f64| (-x * x / 2e-4).exp(), -1.0, 1.0, 1e-14, 1e-12);
        let exact = (2e-4 * std::f64::consts::PI).sqrt();
        assert!((r.value - exact).abs() < 1e-12 * exact.max(1.0));
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let ys: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&ys, 0.1) - 2.0).abs() < 1e-14);
    }
}
