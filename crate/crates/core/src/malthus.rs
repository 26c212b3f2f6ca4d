//! Malthus parameter, the biased division rate and the limiting measures.

use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use crate::quadrature::{gauss_legendre5, gauss_legendre5_points, integrate_with_breaks};
use crate::rate::{invert_tabulated, CumulativeTable, Hazard, RateFunction};
use crate::testfn::TestFunction;

/// Residual tolerance of the Malthus root.
pub const MALTHUS_TOLERANCE: f64 = 1e-10;

const QUAD_ABS: f64 = 1e-14;
const QUAD_REL: f64 = 1e-12;

fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut left = a;
    for &bp in breaks {
        if bp > left && bp < b {
            acc += gauss_legendre5(&f, left, bp);
            left = bp;
        }
    }
    acc + gauss_legendre5(&f, left, b)
}

/// `m ∫ B(x) e^{−λx − ∫_0^x B} dx`, evaluated on a frozen set of quadrature
/// points so the root search is cheap.
struct MalthusIntegrand {
    points: Vec<(f64, f64)>,
    tail_x: f64,
    tail_density: f64,
    tail_rate: f64,
    m: f64,
}

impl MalthusIntegrand {
    fn new(rate: &RateFunction, m: f64) -> Self {
        let step = rate.table_step();
        let end = rate.x_max();
        let n = (end / step).round() as usize;
        let mut points = Vec::with_capacity(5 * n + 16);
        for i in 0..n {
            let a = i as f64 * step;
            let b = a + step;
            let mut left = a;
            let mut push = |lo: f64, hi: f64| {
                for (x, w) in gauss_legendre5_points(lo, hi) {
                    points.push((x, w * rate.density(x)));
                }
            };
            for &bp in rate.breakpoints() {
                if bp > left && bp < b {
                    push(left, bp);
                    left = bp;
                }
            }
            push(left, b);
        }
        Self {
            points,
            tail_x: end,
            tail_density: rate.density(end),
            tail_rate: rate.eval(end),
            m,
        }
    }

    /// Residual `m ∫ B e^{−λx−∫B} − 1` and its λ-derivative.
    fn residual(&self, lambda: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &(x, wf) in &self.points {
            let t = wf * (-lambda * x).exp();
            v += t;
            d -= x * t;
        }
        let tail = (-lambda * self.tail_x).exp() * self.tail_density / (lambda + self.tail_rate);
        v += tail;
        d -= self.tail_x * tail;
        (self.m * v - 1.0, self.m * d)
    }
}

/// The biased division rate `H_B(x) = m e^{−λx} f_B(x) / (1 − m ∫_0^x e^{−λy} f_B(y) dy)`.
///
/// Both the forward cumulative `F` and the tail `G = 1 − F` of the biased
/// density are tabulated; the denominator uses whichever is numerically
/// stable (`1 − F` while `F < 1/2`, `G` afterwards).
#[derive(Debug, Clone)]
pub struct BiasedRate {
    rate: Arc<RateFunction>,
    m: f64,
    lambda: f64,
    forward: Vec<f64>,
    tail: Vec<f64>,
    table: CumulativeTable,
    inf: f64,
    sup: f64,
    fast: OnceLock<RateTable>,
}

const FAST_STEP: f64 = 1e-4;
const FAST_END: f64 = 64.0;

/// Linear interpolation of the rate on a fine grid. Cells that contain a
/// breakpoint of `B` are flagged and evaluated exactly.
#[derive(Debug, Clone)]
struct RateTable {
    values: Vec<f64>,
    exact: Vec<bool>,
}

impl BiasedRate {
    fn new(rate: Arc<RateFunction>, m: f64, lambda: f64) -> Self {
        let step = rate.table_step();
        let end = rate.x_max();
        let n = (end / step).round() as usize;
        let breaks = rate.breakpoints().to_vec();
        let fh = |y: f64| m * (-lambda * y).exp() * rate.density(y);
        let cells: Vec<f64> = (0..n)
            .map(|i| {
                let a = i as f64 * step;
                integrate_split(&fh, a, a + step, &breaks)
            })
            .collect();
        let mut forward = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        forward.push(0.0);
        for c in &cells {
            acc += c;
            forward.push(acc);
        }
        let mut tail = vec![0.0; n + 1];
        tail[n] = fh(end) / (lambda + rate.eval(end));
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + cells[i];
        }
        let nodes = forward
            .iter()
            .zip(&tail)
            .map(|(&f, &g)| if f < 0.5 { -(1.0 - f).ln() } else { -g.ln() })
            .collect();
        let mut h = Self {
            rate,
            m,
            lambda,
            forward,
            tail,
            table: CumulativeTable { step, nodes },
            inf: 0.0,
            sup: 0.0,
            fast: OnceLock::new(),
        };
        let (inf, sup) = h.scan_extremes();
        h.inf = inf;
        h.sup = sup;
        h
    }

    /// Infimum and supremum over a grid of spacing `1e−3 / b` on the table
    /// range, combined with the analytic tail limit `B(∞) + λ`.
    fn scan_extremes(&self) -> (f64, f64) {
        let dx = 1e-3 / self.rate.lower_bound();
        let end = self.table.end();
        let n = (end / dx).ceil() as usize;
        let tail = self.limit_at_infinity();
        let mut lo = tail;
        let mut hi = tail;
        for i in 0..=n {
            let v = self.rate((i as f64 * dx).min(end));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for &bp in self.rate.breakpoints() {
            let v = self.rate(bp);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// `lim_{x→∞} H_B(x) = B(∞) + λ_B` for rates with a constant tail.
    pub fn limit_at_infinity(&self) -> f64 {
        self.rate.tail_limit() + self.lambda
    }

    /// Biased density `f_{H_B}(x) = m e^{−λx} f_B(x)`.
    #[inline]
    pub fn biased_density(&self, x: f64) -> f64 {
        self.m * (-self.lambda * x).exp() * self.rate.density(x)
    }

    /// `1 − ∫_0^x f_{H_B}` together with which representation produced it.
    fn denominator(&self, x: f64) -> (f64, bool) {
        let (i, left) = self.table.locate(x).expect("inside table");
        let fwd = self.forward[i];
        if fwd < 0.5 {
            let partial = integrate_split(|y| self.biased_density(y), left, x, self.rate.breakpoints());
            let f = fwd + partial;
            if f < 0.5 {
                return (1.0 - f, false);
            }
        }
        let right = left + self.table.step;
        let partial = integrate_split(|y| self.biased_density(y), x, right, self.rate.breakpoints());
        (self.tail[i + 1] + partial, true)
    }

    /// Cumulative distribution function of `f_{H_B}`.
    pub fn biased_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        1.0 - self.survival(x)
    }

    /// True when the evaluation at `x` used the tail representation.
    pub fn uses_tail_form(&self, x: f64) -> bool {
        match self.table.locate(x) {
            Some(_) => self.denominator(x).1,
            None => true,
        }
    }

    fn fast_table(&self) -> &RateTable {
        self.fast.get_or_init(|| {
            let end = self.table.end().min(FAST_END);
            let n = (end / FAST_STEP).floor() as usize;
            let values = (0..=n).map(|i| self.rate(i as f64 * FAST_STEP)).collect();
            let mut exact = vec![false; n];
            for &bp in self.rate.breakpoints() {
                let c = (bp / FAST_STEP).floor() as usize;
                for k in [c.wrapping_sub(1), c] {
                    if let Some(e) = exact.get_mut(k) {
                        *e = true;
                    }
                }
            }
            RateTable { values, exact }
        })
    }

    pub fn underlying(&self) -> &RateFunction {
        &self.rate
    }
}

impl Hazard for BiasedRate {
    fn rate(&self, age: f64) -> f64 {
        match self.table.locate(age) {
            Some(_) => self.biased_density(age) / self.denominator(age).0,
            None => self.rate.eval(age) + self.lambda,
        }
    }

    fn rate_fast(&self, age: f64) -> f64 {
        let t = self.fast_table();
        let u = age / FAST_STEP;
        let i = u.floor();
        if !(i >= 0.0) || i as usize >= t.exact.len() || t.exact[i as usize] {
            return self.rate(age);
        }
        let i = i as usize;
        let w = u - i as f64;
        t.values[i] + w * (t.values[i + 1] - t.values[i])
    }

    fn cumulative(&self, age: f64) -> f64 {
        match self.table.locate(age) {
            Some(_) => -self.denominator(age).0.ln(),
            None => {
                let end = self.table.end();
                self.table.nodes[self.table.nodes.len() - 1]
                    + self.rate.integrate(end, age)
                    + self.lambda * (age - end)
            }
        }
    }

    fn inverse_cumulative(&self, level: f64) -> f64 {
        invert_tabulated(self, &self.table, level)
    }

    fn sup_rate(&self) -> f64 {
        self.sup
    }

    fn inf_rate(&self) -> f64 {
        self.inf
    }

    fn horizon(&self) -> f64 {
        self.table.end()
    }

    fn table_step(&self) -> f64 {
        self.table.step
    }

    fn breakpoints(&self) -> &[f64] {
        self.rate.breakpoints()
    }
}

/// Invariant law `c e^{−∫_0^x H}` of the age process driven by a hazard `H`.
#[derive(Clone)]
pub struct InvariantLaw {
    hazard: Arc<dyn Hazard>,
    step: f64,
    nodes: Vec<f64>,
    total: f64,
}

impl std::fmt::Debug for InvariantLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InvariantLaw").field("normalizer", &self.normalizer()).finish()
    }
}

impl InvariantLaw {
    pub fn new(hazard: Arc<dyn Hazard>) -> Self {
        let step = hazard.table_step();
        let end = hazard.horizon();
        let n = (end / step).round() as usize;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        nodes.push(0.0);
        let breaks = hazard.breakpoints();
        for i in 0..n {
            let a = i as f64 * step;
            let b = a + step;
            let mut lo = a;
            for &x in breaks.iter().filter(|&&x| x > a && x < b) {
                acc += gauss_legendre5(|y| hazard.survival(y), lo, x);
                lo = x;
            }
            acc += gauss_legendre5(|y| hazard.survival(y), lo, b);
            nodes.push(acc);
        }
        let x_end = n as f64 * step;
        let total = acc + hazard.survival(x_end) / hazard.rate(x_end);
        Self {
            hazard,
            step,
            nodes,
            total,
        }
    }

    /// `c = (∫_0^∞ e^{−∫_0^x H})^{−1}`.
    pub fn normalizer(&self) -> f64 {
        1.0 / self.total
    }

    /// `∫_0^∞ e^{−∫_0^x H}`, the mean holding time.
    pub fn survival_integral(&self) -> f64 {
        self.total
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.hazard.survival(x) / self.total
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let i = (x / self.step) as usize;
        if i + 1 >= self.nodes.len() {
            return 1.0;
        }
        let left = i as f64 * self.step;
        let v = self.nodes[i] + gauss_legendre5(|y| self.hazard.survival(y), left, x);
        (v / self.total).min(1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.total;
        let last = self.nodes.len() - 1;
        if target >= self.nodes[last] {
            // beyond the table: the remaining mass is below the tail epsilon
            let x_end = last as f64 * self.step;
            let rate = self.hazard.rate(x_end);
            return x_end - (1.0 - rng.random::<f64>()).ln() / rate;
        }
        let i = self.nodes.partition_point(|&c| c <= target).saturating_sub(1);
        let mut lo = i as f64 * self.step;
        let mut hi = lo + self.step;
        let (clo, chi) = (self.nodes[i], self.nodes[i + 1]);
        let mut x = lo + (target - clo) / (chi - clo) * self.step;
        for _ in 0..60 {
            let left = i as f64 * self.step;
            let f = clo + gauss_legendre5(|y| self.hazard.survival(y), left, x) - target;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - f / self.hazard.survival(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-14 * x.max(1.0) {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Everything determined analytically by `(B, m)`.
#[derive(Debug, Clone)]
pub struct MalthusData {
    /// `λ_B`
    pub lambda: f64,
    /// `m`
    pub offspring_mean: f64,
    /// `ρ_B = inf_x H_B(x)`
    pub rho: f64,
    /// `κ_B`, the constant in `E|∂T_T| ~ κ_B e^{λ_B T}`
    pub kappa_boundary: f64,
    /// `κ'_B`, the constant in `E|T̊_T| ~ κ'_B e^{λ_B T}`
    pub kappa_interior: f64,
    /// normalizer of the invariant law `μ_B`
    pub c_b: f64,
    /// Malthus residual at the returned `λ_B`
    pub residual: f64,
    rate: Arc<RateFunction>,
    biased: Arc<BiasedRate>,
    invariant: InvariantLaw,
}

/// Solve `m ∫_0^∞ B(x) e^{−λx − ∫_0^x B} dx = 1` for `λ_B` and derive the
/// biased rate, `ρ_B`, `κ_B`, `κ'_B` and `c_B`.
///
/// The residual is strictly decreasing in `λ` from `m − 1 > 0`, so bisection
/// on `(0, (m−1) sup B]` always brackets the root; Newton steps polish it.
pub fn solve_malthus(rate: &RateFunction, law: &OffspringLaw) -> Result<MalthusData> {
    solve_with_mean(rate, law.mean())
}

pub fn solve_with_mean(rate: &RateFunction, m: f64) -> Result<MalthusData> {
    if !(m >= 2.0) || !m.is_finite() {
        return Err(Error::InvalidOffspring(format!("mean offspring {m} must be at least 2")));
    }
    let rate = Arc::new(rate.clone());
    let integrand = MalthusIntegrand::new(&rate, m);
    let mut lo = 0.0;
    let mut hi = (m - 1.0) * rate.upper_bound() * (1.0 + 1e-9) + 1e-12;
    let (r_lo, _) = integrand.residual(lo);
    let (r_hi, _) = integrand.residual(hi);
    if !(r_lo > 0.0 && r_hi <= 0.0) {
        return Err(Error::MalthusBracket {
            lo,
            hi,
            residual_lo: r_lo,
            residual_hi: r_hi,
        });
    }
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if integrand.residual(mid).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    let mut residual = integrand.residual(lambda).0;
    for _ in 0..50 {
        let (r, dr) = integrand.residual(lambda);
        residual = r;
        if r.abs() <= 1e-15 {
            break;
        }
        if r > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let mut next = lambda - r / dr;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= 1e-16 * lambda {
            lambda = next;
            residual = integrand.residual(lambda).0;
            break;
        }
        lambda = next;
    }
    if residual.abs() > MALTHUS_TOLERANCE {
        return Err(Error::MalthusBracket {
            lo,
            hi,
            residual_lo: integrand.residual(lo).0,
            residual_hi: integrand.residual(hi).0,
        });
    }

    let biased = Arc::new(BiasedRate::new(rate.clone(), m, lambda));
    let invariant = InvariantLaw::new(biased.clone());
    let survival_integral = invariant.survival_integral();
    // renewal route: c_B is the inverse mean of f_{H_B}
    let mean_biased = integrate_with_breaks(
        |x| x * biased.biased_density(x),
        0.0,
        rate.x_max(),
        rate.breakpoints(),
        QUAD_ABS,
        QUAD_REL,
    )
    .value;
    Ok(MalthusData {
        lambda,
        offspring_mean: m,
        rho: biased.inf_rate(),
        kappa_boundary: 1.0 / (lambda * m / (m - 1.0) * survival_integral),
        kappa_interior: 1.0 / (lambda * m * survival_integral),
        c_b: 1.0 / mean_biased,
        residual,
        rate,
        biased,
        invariant,
    })
}

impl MalthusData {
    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn rate_arc(&self) -> Arc<RateFunction> {
        self.rate.clone()
    }

    pub fn biased(&self) -> &BiasedRate {
        &self.biased
    }

    pub fn biased_arc(&self) -> Arc<BiasedRate> {
        self.biased.clone()
    }

    /// Invariant law `μ_B` of the biased age process.
    pub fn invariant(&self) -> &InvariantLaw {
        &self.invariant
    }

    /// `H_B(x)`.
    pub fn biased_rate(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeAge(x));
        }
        Ok(self.biased.rate(x))
    }

    /// `f_{H_B}(x)`.
    pub fn biased_density(&self, x: f64) -> f64 {
        self.biased.biased_density(x)
    }

    /// `μ_B(x) = c_B e^{−∫_0^x H_B}`.
    pub fn invariant_density(&self, x: f64) -> f64 {
        self.c_b * self.biased.survival(x)
    }

    fn check_integrable(&self, g: &TestFunction) -> Result<()> {
        let x = self.rate.x_max();
        let decay = (-(self.lambda + self.rate.lower_bound()) * x).exp();
        let probe = [0.0, 0.5 * x, x].map(|y| g.eval(y));
        if probe.iter().any(|v| !v.is_finite()) || (g.eval(x).abs() * decay) > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "test function {g:?} is not integrable against the limit measure"
            )));
        }
        Ok(())
    }

    fn breaks_with(&self, g: &TestFunction) -> Vec<f64> {
        let mut b = self.rate.breakpoints().to_vec();
        b.extend(g.breakpoints());
        b.sort_by(f64::total_cmp);
        b
    }

    /// `∂E_B(g) = λ m/(m−1) ∫ g(x) e^{−λx} e^{−∫_0^x B} dx`.
    pub fn limit_measure_boundary(&self, g: &TestFunction) -> Result<f64> {
        self.check_integrable(g)?;
        let m = self.offspring_mean;
        let lambda = self.lambda;
        let v = integrate_with_breaks(
            |x| g.eval(x) * (-lambda * x).exp() * self.rate.survival(x),
            0.0,
            self.rate.x_max(),
            &self.breaks_with(g),
            QUAD_ABS,
            QUAD_REL,
        );
        Ok(lambda * m / (m - 1.0) * v.value)
    }

    /// `E̊_B(g) = m ∫ g(x) e^{−λx} f_B(x) dx = ∫ g f_{H_B}`.
    pub fn limit_measure_interior(&self, g: &TestFunction) -> Result<f64> {
        self.check_integrable(g)?;
        let v = integrate_with_breaks(
            |x| g.eval(x) * self.biased.biased_density(x),
            0.0,
            self.rate.x_max(),
            &self.breaks_with(g),
            QUAD_ABS,
            QUAD_REL,
        );
        Ok(v.value)
    }

    /// `∫_0^∞ e^{−∫_0^x H_B}`.
    pub fn biased_survival_integral(&self) -> f64 {
        self.invariant.survival_integral()
    }

    /// Expected `|∂T_T|` from the renewal asymptotics.
    pub fn expected_boundary_size(&self, horizon: f64) -> f64 {
        self.kappa_boundary * (self.lambda * horizon).exp()
    }

    /// Expected `|T̊_T|` from the renewal asymptotics.
    pub fn expected_interior_size(&self, horizon: f64) -> f64 {
        self.kappa_interior * (self.lambda * horizon).exp()
    }
}
