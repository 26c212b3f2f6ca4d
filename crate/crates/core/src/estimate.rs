//! Nonparametric estimation of the division rate from one observed
//! genealogy: offspring mean, Malthus parameter, bandwidths, the
//! de-biased kernel estimator and the boundary density estimator.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::stats::{mean, sample_std};
use crate::tree::ObservedSample;

/// Denominators below this are clipped and flagged.
pub const DENOMINATOR_FLOOR: f64 = 1e-3;

/// `m̂ − 1` must exceed this.
pub const OFFSPRING_GUARD: f64 = 1e-9;

/// Lifetimes in the de-biasing weight are capped at this multiple of the horizon.
pub const WEIGHT_CAP_FACTOR: f64 = 2.0;

/// A regular evaluation grid `start, start + step, …, end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for AgeGrid {
    fn default() -> Self {
        Self {
            start: 0.25,
            end: 2.5,
            step: 0.01,
        }
    }
}

impl AgeGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start <= end && step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad grid [{start}, {end}] step {step}"
            )));
        }
        Ok(Self { start, end, step })
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

/// Mean of `g` over `ages`.
pub fn empirical_measure(ages: &[f64], g: impl Fn(f64) -> f64) -> Result<f64> {
    if ages.is_empty() {
        return Err(Error::EmptySample("empirical measure over no ages"));
    }
    Ok(ages.iter().map(|&a| g(a)).sum::<f64>() / ages.len() as f64)
}

/// Mean interior offspring count, 2 when nobody divided.
pub fn estimate_m(sample: &ObservedSample) -> f64 {
    if sample.interior_offspring.is_empty() {
        return 2.0;
    }
    sample.interior_offspring.iter().map(|&k| f64::from(k)).sum::<f64>()
        / sample.interior_offspring.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    /// The interior was empty and its mean was taken as 0.
    pub empty_interior: bool,
}

/// `λ̂ = (mean interior lifetime / (m̂ − 1) + mean boundary age)^{-1}`.
pub fn estimate_lambda(sample: &ObservedSample, m_hat: f64) -> Result<LambdaEstimate> {
    if !(m_hat - 1.0 > OFFSPRING_GUARD) {
        return Err(Error::DegenerateOffspring(m_hat));
    }
    let boundary = empirical_measure(&sample.boundary_ages, |a| a)?;
    let empty_interior = sample.interior_lifetimes.is_empty();
    let interior = if empty_interior {
        0.0
    } else {
        mean(&sample.interior_lifetimes)
    };
    Ok(LambdaEstimate {
        lambda: 1.0 / (interior / (m_hat - 1.0) + boundary),
        empty_interior,
    })
}

/// `h = exp(−λ̂ T / (2β + 1))`.
pub fn bandwidth_theoretical(lambda_hat: f64, beta: f64, horizon: f64) -> f64 {
    (-lambda_hat * horizon / (2.0 * beta + 1.0)).exp()
}

/// `1.06 σ̂ n^{-1/5}` with `σ̂` the sample standard deviation.
pub fn bandwidth_rule_of_thumb(ages: &[f64]) -> Result<f64> {
    if ages.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "rule-of-thumb bandwidth needs two ages, got {}",
            ages.len()
        )));
    }
    let sd = sample_std(ages);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample(
            "all interior lifetimes are equal".to_string(),
        ));
    }
    Ok(1.06 * sd * (ages.len() as f64).powf(-0.2))
}

/// Bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Bandwidth {
    RuleOfThumb,
    Theoretical { beta: f64 },
    Fixed { h: f64 },
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::RuleOfThumb
    }
}

impl Bandwidth {
    pub fn select(&self, sample: &ObservedSample, lambda_hat: f64) -> Result<f64> {
        match *self {
            Bandwidth::RuleOfThumb => bandwidth_rule_of_thumb(&sample.interior_lifetimes),
            Bandwidth::Theoretical { beta } => Ok(bandwidth_theoretical(lambda_hat, beta, sample.horizon)),
            Bandwidth::Fixed { h } if h > 0.0 => Ok(h),
            Bandwidth::Fixed { h } => Err(Error::InvalidArgument(format!("bandwidth {h} must be positive"))),
        }
    }
}

/// What happened to the denominator at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    None,
    /// Denominator exactly zero: the estimate is set to 0.
    Zero,
    /// Denominator below [`DENOMINATOR_FLOOR`]: clipped.
    Clipped,
}

impl Guard {
    pub fn code(self) -> u8 {
        match self {
            Guard::None => 0,
            Guard::Zero => 1,
            Guard::Clipped => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub m_hat: f64,
    pub lambda_hat: f64,
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub horizon: f64,
    /// Interior lifetimes whose weight exponent was capped.
    pub capped_weights: usize,
    pub seed: Option<u64>,
    pub grid: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub denominator: Vec<f64>,
    pub guard: Vec<Guard>,
}

#[derive(Serialize)]
struct EstimateRow {
    x: f64,
    #[serde(rename = "B_hat")]
    b_hat: f64,
    guard_flag: u8,
}

#[derive(Serialize)]
struct EstimateMeta<'a> {
    m_hat: f64,
    lambda_hat: f64,
    h: f64,
    kernel: &'a str,
    n_interior: usize,
    n_boundary: usize,
    horizon: f64,
    capped_weights: usize,
    guarded_points: usize,
    seed: Option<u64>,
}

impl EstimationResult {
    pub fn guarded_points(&self) -> usize {
        self.guard.iter().filter(|g| **g != Guard::None).count()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Rows `x, B_hat, guard_flag`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for ((&x, &b), g) in self.grid.iter().zip(&self.b_hat).zip(&self.guard) {
            w.serialize(EstimateRow {
                x,
                b_hat: b,
                guard_flag: g.code(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Scalar metadata as JSON.
    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EstimateMeta {
            m_hat: self.m_hat,
            lambda_hat: self.lambda_hat,
            h: self.bandwidth,
            kernel: self.kernel.name(),
            n_interior: self.n_interior,
            n_boundary: self.n_boundary,
            horizon: self.horizon,
            capped_weights: self.capped_weights,
            guarded_points: self.guarded_points(),
            seed: self.seed,
        })?)
    }
}

/// Interior lifetimes sorted with prefix sums of their weights.
struct WeightedAges {
    ages: Vec<f64>,
    weights: Vec<f64>,
    prefix: Vec<f64>,
    capped: usize,
}

impl WeightedAges {
    fn new(lifetimes: &[f64], m_hat: f64, lambda_hat: f64, cap: f64) -> Self {
        let mut ages = lifetimes.to_vec();
        ages.sort_by(f64::total_cmp);
        let mut capped = 0;
        let weights: Vec<f64> = ages
            .iter()
            .map(|&z| {
                if z > cap {
                    capped += 1;
                }
                (lambda_hat * z.min(cap)).exp() / m_hat
            })
            .collect();
        let mut prefix = Vec::with_capacity(ages.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            prefix.push(acc);
        }
        Self {
            ages,
            weights,
            prefix,
            capped,
        }
    }

    fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.ages.partition_point(|&z| z < lo);
        let b = self.ages.partition_point(|&z| z <= hi);
        a..b
    }
}

/// The de-biased kernel estimator of `B` on `grid`.
pub fn estimate_b(
    sample: &ObservedSample,
    m_hat: f64,
    lambda_hat: f64,
    kernel: Kernel,
    h: f64,
    grid: &AgeGrid,
) -> Result<EstimationResult> {
    kernel_ratio(sample, m_hat, lambda_hat, kernel, h, grid)
}

/// The same ratio without de-biasing (`m̂ = 1`, `λ̂ = 0`): its target is
/// the biased rate, not `B`.
pub fn estimate_b_naive(sample: &ObservedSample, kernel: Kernel, h: f64, grid: &AgeGrid) -> Result<EstimationResult> {
    kernel_ratio(sample, 1.0, 0.0, kernel, h, grid)
}

fn kernel_ratio(
    sample: &ObservedSample,
    m_hat: f64,
    lambda_hat: f64,
    kernel: Kernel,
    h: f64,
    grid: &AgeGrid,
) -> Result<EstimationResult> {
    if sample.interior_lifetimes.is_empty() {
        return Err(Error::EmptySample("no interior lifetimes to estimate from"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let wa = WeightedAges::new(&sample.interior_lifetimes, m_hat, lambda_hat, WEIGHT_CAP_FACTOR * sample.horizon);
    let n = wa.ages.len() as f64;
    let reach = kernel.radius() * h;
    let xs = grid.points();
    let mut b_hat = Vec::with_capacity(xs.len());
    let mut denominator = Vec::with_capacity(xs.len());
    let mut guard = Vec::with_capacity(xs.len());
    for &x in &xs {
        let num: f64 = wa
            .window(x - reach, x + reach)
            .map(|i| wa.weights[i] * kernel.scaled(h, x - wa.ages[i]))
            .sum::<f64>()
            / n;
        let below = wa.ages.partition_point(|&z| z <= x);
        let den = 1.0 - wa.prefix[below] / n;
        let (value, flag) = if den == 0.0 {
            (0.0, Guard::Zero)
        } else if den < DENOMINATOR_FLOOR {
            (num / DENOMINATOR_FLOOR, Guard::Clipped)
        } else {
            (num / den, Guard::None)
        };
        b_hat.push(value.max(0.0));
        denominator.push(den);
        guard.push(flag);
    }
    Ok(EstimationResult {
        m_hat,
        lambda_hat,
        bandwidth: h,
        kernel,
        n_interior: sample.interior_len(),
        n_boundary: sample.boundary_len(),
        horizon: sample.horizon,
        capped_weights: wa.capped,
        seed: None,
        grid: xs,
        b_hat,
        denominator,
        guard,
    })
}

/// Estimate `m`, `λ`, the bandwidth and `B` in one go.
pub fn estimate_all(sample: &ObservedSample, kernel: Kernel, bandwidth: Bandwidth, grid: &AgeGrid) -> Result<EstimationResult> {
    let m_hat = estimate_m(sample);
    let lambda_hat = estimate_lambda(sample, m_hat)?.lambda;
    let h = bandwidth.select(sample, lambda_hat)?;
    estimate_b(sample, m_hat, lambda_hat, kernel, h, grid)
}

/// Density estimate from the alive individuals only:
/// `f̂(x) = −mean_∂ ((m̂ − 1)/(λ̂ m̂) K_h'(x − a))`, which targets
/// `K_h ⋆ f_{B+λ}`.
pub fn estimate_fb_boundary(
    sample: &ObservedSample,
    m_hat: f64,
    lambda_hat: f64,
    kernel: Kernel,
    h: f64,
    grid: &AgeGrid,
) -> Result<Vec<f64>> {
    if sample.boundary_ages.is_empty() {
        return Err(Error::EmptySample("no boundary ages to estimate from"));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let c = (m_hat - 1.0) / (lambda_hat * m_hat);
    let mut ages = sample.boundary_ages.clone();
    ages.sort_by(f64::total_cmp);
    let n = ages.len() as f64;
    let reach = kernel.radius() * h;
    Ok(grid
        .points()
        .into_iter()
        .map(|x| {
            let a = ages.partition_point(|&z| z < x - reach);
            let b = ages.partition_point(|&z| z <= x + reach);
            -c * ages[a..b]
                .iter()
                .map(|&z| kernel.scaled_derivative(h, x - z))
                .sum::<f64>()
                / n
        })
        .collect())
}

/// `‖B̂ − B‖ / ‖B‖` in the discrete L2 norm on the grid.
pub fn relative_error(b_hat: &[f64], truth: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&v, &x) in b_hat.iter().zip(grid) {
        let t = truth(x);
        num += (v - t).powi(2);
        den += t * t;
    }
    (num / den).sqrt()
}
