//! Division rates and the cumulative-hazard machinery shared by every sampler.
//!
//! A [`RateFunction`] is either a piecewise-analytic description (polynomial
//! plus an optional decaying exponential on each segment) or an arbitrary
//! closure. Construction tabulates the cumulative hazard on a uniform grid so
//! that evaluating and inverting it costs a binary search plus a handful of
//! Newton steps.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre5;

/// Relative size of the neglected survival tail when choosing table extents.
pub const TAIL_EPSILON: f64 = 1e-14;

const DEFAULT_STEP: f64 = 0.01;
const MAX_TABLE_NODES: usize = 1 << 20;
const FD_STEP: f64 = 1e-5;

/// A hazard on ages `[0, ∞)`: rate, cumulative rate and its inverse.
///
/// Implementations must have a strictly positive rate so that the
/// cumulative hazard is a bijection of `[0, ∞)`.
pub trait Hazard: Send + Sync {
    fn rate(&self, age: f64) -> f64;

    /// The rate, possibly from an interpolation table (relative error
    /// below 1e-8). Used in Monte-Carlo inner loops.
    fn rate_fast(&self, age: f64) -> f64 {
        self.rate(age)
    }

    fn cumulative(&self, age: f64) -> f64;

    /// The age `x` with `cumulative(x) == level`.
    fn inverse_cumulative(&self, level: f64) -> f64;

    /// An upper bound on the rate over all ages.
    fn sup_rate(&self) -> f64;

    /// A lower bound on the rate over all ages.
    fn inf_rate(&self) -> f64;

    /// Ages beyond this carry survival below [`TAIL_EPSILON`].
    fn horizon(&self) -> f64;

    /// Grid spacing of the internal cumulative table.
    fn table_step(&self) -> f64;

    /// Ages where the rate may jump.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }

    fn survival(&self, age: f64) -> f64 {
        (-self.cumulative(age)).exp()
    }

    fn density(&self, age: f64) -> f64 {
        self.rate(age) * self.survival(age)
    }
}

/// Cumulative hazard sampled at `i * step`, `i = 0..len`.
#[derive(Debug, Clone)]
pub(crate) struct CumulativeTable {
    pub step: f64,
    pub nodes: Vec<f64>,
}

impl CumulativeTable {
    pub fn build(step: f64, n_cells: usize, cell_integral: impl Fn(f64, f64) -> f64) -> Self {
        let mut nodes = Vec::with_capacity(n_cells + 1);
        let mut acc = 0.0;
        nodes.push(0.0);
        for i in 0..n_cells {
            let a = i as f64 * step;
            acc += cell_integral(a, a + step);
            nodes.push(acc);
        }
        Self { step, nodes }
    }

    pub fn end(&self) -> f64 {
        (self.nodes.len() - 1) as f64 * self.step
    }

    /// Cell index and left edge containing `x`, or `None` past the end.
    #[inline]
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let i = (x / self.step) as usize;
        if i + 1 < self.nodes.len() {
            Some((i, i as f64 * self.step))
        } else {
            None
        }
    }
}

/// Safeguarded Newton inversion of a tabulated cumulative hazard.
pub(crate) fn invert_tabulated<H: Hazard + ?Sized>(h: &H, table: &CumulativeTable, level: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let nodes = &table.nodes;
    let step = table.step;
    let last = nodes.len() - 1;
    let (mut lo, mut hi, clo, chi);
    if level < nodes[last] {
        let i = nodes.partition_point(|&c| c <= level).saturating_sub(1);
        lo = i as f64 * step;
        hi = lo + step;
        clo = nodes[i];
        chi = nodes[i + 1];
    } else {
        let mut a = last as f64 * step;
        let mut ca = nodes[last];
        // march past the table in unit chunks, then refine
        let mut width = step.max(1.0 / h.inf_rate().max(1e-300));
        loop {
            let b = a + width;
            let cb = h.cumulative(b);
            if cb > level {
                lo = a;
                hi = b;
                clo = ca;
                chi = cb;
                break;
            }
            a = b;
            ca = cb;
            width *= 2.0;
        }
    }
    let mut x = if chi > clo {
        lo + (level - clo) / (chi - clo) * (hi - lo)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..100 {
        let f = h.cumulative(x) - level;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let r = h.rate(x);
        let mut next = x - f / r;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1.0) || hi - lo <= 1e-15 * x.max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// `amplitude * exp(-decay * (x - segment_start))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub amplitude: f64,
    pub decay: f64,
}

/// One analytic piece of a division rate, active on `[start, next start)`.
///
/// The value is `Σ poly[k] x^k` (in absolute age `x`) plus the optional
/// exponential term measured from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub exp: Option<ExpTerm>,
}

impl Segment {
    pub fn constant(start: f64, value: f64) -> Self {
        Self {
            start,
            poly: vec![value],
            exp: None,
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let mut v = self.poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        if let Some(e) = self.exp {
            v += e.amplitude * (-e.decay * (x - self.start)).exp();
        }
        v
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for (k, c) in self.poly.iter().enumerate().skip(1).rev() {
            v = v * x + k as f64 * c;
        }
        if let Some(e) = self.exp {
            v -= e.decay * e.amplitude * (-e.decay * (x - self.start)).exp();
        }
        v
    }

    fn limit(&self) -> f64 {
        let c0 = self.poly.first().copied().unwrap_or(0.0);
        match self.exp {
            Some(e) if e.decay == 0.0 => c0 + e.amplitude,
            _ => c0,
        }
    }
}

/// Where the derivative used by the regime check comes from.
#[derive(Clone)]
pub enum Derivative {
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    FiniteDifference,
    Unavailable,
}

#[derive(Clone)]
enum Shape {
    Piecewise(Vec<Segment>),
    Custom {
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        derivative: Derivative,
    },
}

/// A division rate `B(x)` with its envelope `b ≤ B ≤ upper` and a cached
/// cumulative-hazard table.
#[derive(Clone)]
pub struct RateFunction {
    label: String,
    shape: Shape,
    breakpoints: Vec<f64>,
    lower: f64,
    upper: f64,
    tail_limit: f64,
    table: CumulativeTable,
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateFunction")
            .field("label", &self.label)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("tail_limit", &self.tail_limit)
            .field("x_max", &self.table.end())
            .finish()
    }
}

impl RateFunction {
    /// `B ≡ b`.
    pub fn constant(b: f64) -> Result<Self> {
        Self::piecewise(vec![Segment::constant(0.0, b)]).map(|r| r.with_label(format!("constant b={b}")))
    }

    /// The cubic-then-exponential trial rate used in the numerical study:
    /// `x³/3 − 7x²/8 + 5x/8 + 2/5` on `[0, 3/2]`, then
    /// `119/160 − exp(−(x − 3/2))/4`.
    pub fn trial() -> Self {
        Self::piecewise(vec![
            Segment {
                start: 0.0,
                poly: vec![0.4, 5.0 / 8.0, -7.0 / 8.0, 1.0 / 3.0],
                exp: None,
            },
            Segment {
                start: 1.5,
                poly: vec![119.0 / 160.0],
                exp: Some(ExpTerm {
                    amplitude: -0.25,
                    decay: 1.0,
                }),
            },
        ])
        .expect("trial rate is valid")
        .with_label("paper-trial")
    }

    /// Build from analytic segments. The first segment must start at 0 and
    /// the last must have a bounded limit (constant polynomial, nonnegative
    /// decay) so the rate stays inside a `[b, bC]` envelope.
    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidRate("no segments".into()));
        }
        if segments[0].start != 0.0 {
            return Err(Error::InvalidRate("first segment must start at age 0".into()));
        }
        for w in segments.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(Error::InvalidRate("segment starts must be strictly increasing".into()));
            }
        }
        for s in &segments {
            let finite = s.start.is_finite()
                && s.poly.iter().all(|c| c.is_finite())
                && s.exp.map_or(true, |e| e.amplitude.is_finite() && e.decay.is_finite());
            if !finite {
                return Err(Error::InvalidRate("non-finite coefficient".into()));
            }
            if s.exp.is_some_and(|e| e.decay < 0.0) {
                return Err(Error::InvalidRate("exponential terms must decay".into()));
            }
        }
        let last = segments.last().expect("non-empty");
        if last.poly.iter().skip(1).any(|&c| c != 0.0) {
            return Err(Error::InvalidRate(
                "last segment must have a constant polynomial part (bounded rate)".into(),
            ));
        }
        let breakpoints: Vec<f64> = segments.iter().skip(1).map(|s| s.start).collect();
        let tail_limit = last.limit();
        let scan_end = last.start
            + last
                .exp
                .filter(|e| e.decay > 0.0)
                .map_or(1.0, |e| 40.0 / e.decay)
                .max(1.0);
        let eval = {
            let segs = segments.clone();
            move |x: f64| eval_segments(&segs, x)
        };
        let (lower, upper) = envelope(&eval, scan_end, &breakpoints, tail_limit);
        Self::assemble(
            "piecewise".into(),
            Shape::Piecewise(segments),
            breakpoints,
            lower,
            upper,
            tail_limit,
        )
    }

    /// Wrap an arbitrary closure. The caller states the envelope; the tail
    /// limit is taken as the value at the end of the table.
    pub fn custom(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
        derivative: Derivative,
    ) -> Result<Self> {
        let eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(eval);
        let x_max = table_extent(lower, upper, 0.0);
        let tail_limit = eval(x_max);
        Self::assemble(
            "custom".into(),
            Shape::Custom { eval, derivative },
            Vec::new(),
            lower,
            upper,
            tail_limit,
        )
    }

    fn assemble(
        label: String,
        shape: Shape,
        breakpoints: Vec<f64>,
        lower: f64,
        upper: f64,
        tail_limit: f64,
    ) -> Result<Self> {
        if !(lower > 0.0) || !lower.is_finite() {
            return Err(Error::InvalidRate(format!(
                "lower bound b must be positive, found {lower}"
            )));
        }
        if !(upper >= lower) || !upper.is_finite() {
            return Err(Error::InvalidRate(format!(
                "upper bound {upper} below lower bound {lower}"
            )));
        }
        let last_break = breakpoints.last().copied().unwrap_or(0.0);
        let x_max = table_extent(lower, upper, last_break);
        let mut step = DEFAULT_STEP;
        while x_max / step > MAX_TABLE_NODES as f64 {
            step *= 2.0;
        }
        let n_cells = (x_max / step).ceil() as usize;
        let mut rate = Self {
            label,
            shape,
            breakpoints,
            lower,
            upper,
            tail_limit,
            table: CumulativeTable {
                step,
                nodes: vec![0.0],
            },
        };
        let table = CumulativeTable::build(step, n_cells, |a, b| rate.integrate(a, b));
        rate.table = table;
        Ok(rate)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `B(x)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Piecewise(segs) => eval_segments(segs, x),
            Shape::Custom { eval, .. } => eval(x),
        }
    }

    /// `B'(x)` when a derivative source is available.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match &self.shape {
            Shape::Piecewise(segs) => Some(segment_at(segs, x).derivative(x)),
            Shape::Custom { eval, derivative } => match derivative {
                Derivative::Analytic(d) => Some(d(x)),
                Derivative::FiniteDifference => {
                    let h = FD_STEP;
                    if x >= h {
                        Some((eval(x + h) - eval(x - h)) / (2.0 * h))
                    } else {
                        Some((eval(x + h) - eval(x)) / h)
                    }
                }
                Derivative::Unavailable => None,
            },
        }
    }

    pub fn segments(&self) -> Option<&[Segment]> {
        match &self.shape {
            Shape::Piecewise(segs) => Some(segs),
            Shape::Custom { .. } => None,
        }
    }

    /// `b`.
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// `lim_{x→∞} B(x)`.
    pub fn tail_limit(&self) -> f64 {
        self.tail_limit
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `∫_a^b B` by Gauss-Legendre panels split at the breakpoints.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut left = a;
        for &bp in &self.breakpoints {
            if bp <= left {
                continue;
            }
            if bp >= b {
                break;
            }
            acc += self.integrate_smooth(left, bp);
            left = bp;
        }
        acc + self.integrate_smooth(left, b)
    }

    fn integrate_smooth(&self, a: f64, b: f64) -> f64 {
        let width = b - a;
        if width <= 1.0 {
            return gauss_legendre5(|y| self.eval(y), a, b);
        }
        let n = width.ceil() as usize;
        let h = width / n as f64;
        (0..n)
            .map(|i| {
                let lo = a + i as f64 * h;
                gauss_legendre5(|y| self.eval(y), lo, lo + h)
            })
            .sum()
    }

    /// `∫_0^x B(y) dy`; rejects negative ages.
    pub fn cumulative_hazard(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeAge(x));
        }
        Ok(self.cumulative(x))
    }

    /// `f_B(x) = B(x) exp(−∫_0^x B)`.
    pub fn lifetime_density(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeAge(x));
        }
        Ok(self.density(x))
    }

    /// End of the tabulated range.
    pub fn x_max(&self) -> f64 {
        self.table.end()
    }
}

impl Hazard for RateFunction {
    #[inline]
    fn rate(&self, age: f64) -> f64 {
        self.eval(age)
    }

    #[inline]
    fn cumulative(&self, age: f64) -> f64 {
        match self.table.locate(age) {
            Some((i, left)) => self.table.nodes[i] + self.integrate(left, age),
            None => {
                let end = self.table.end();
                self.table.nodes[self.table.nodes.len() - 1] + self.integrate(end, age)
            }
        }
    }

    fn inverse_cumulative(&self, level: f64) -> f64 {
        invert_tabulated(self, &self.table, level)
    }

    fn sup_rate(&self) -> f64 {
        self.upper
    }

    fn inf_rate(&self) -> f64 {
        self.lower
    }

    fn horizon(&self) -> f64 {
        self.table.end()
    }

    fn table_step(&self) -> f64 {
        self.table.step
    }

    fn breakpoints(&self) -> &[f64] {
        RateFunction::breakpoints(self)
    }
}

#[inline]
fn segment_at(segs: &[Segment], x: f64) -> &Segment {
    let idx = segs.partition_point(|s| s.start <= x).saturating_sub(1);
    &segs[idx]
}

#[inline]
fn eval_segments(segs: &[Segment], x: f64) -> f64 {
    segment_at(segs, x).eval(x)
}

/// Age beyond which `∫_x^∞ upper·e^{−b y} dy` drops below [`TAIL_EPSILON`].
fn table_extent(lower: f64, upper: f64, last_break: f64) -> f64 {
    let x = ((upper / lower).max(1.0) / TAIL_EPSILON).ln() / lower;
    x.max(last_break + 1.0)
}

/// Numerical `(inf, sup)` over `[0, scan_end]` and the tail limit, with
/// golden-section refinement around the grid extremes.
fn envelope(eval: &impl Fn(f64) -> f64, scan_end: f64, breaks: &[f64], tail: f64) -> (f64, f64) {
    let n = ((scan_end / 1e-3).ceil() as usize).max(16);
    let h = scan_end / n as f64;
    let mut lo = (f64::INFINITY, 0.0);
    let mut hi = (f64::NEG_INFINITY, 0.0);
    let probe = |x: f64, lo: &mut (f64, f64), hi: &mut (f64, f64)| {
        let v = eval(x);
        if v < lo.0 {
            *lo = (v, x);
        }
        if v > hi.0 {
            *hi = (v, x);
        }
    };
    for i in 0..=n {
        probe(i as f64 * h, &mut lo, &mut hi);
    }
    for &b in breaks {
        probe(b, &mut lo, &mut hi);
        probe((b - 1e-12).max(0.0), &mut lo, &mut hi);
    }
    let refine = |center: f64, sign: f64| -> f64 {
        let (mut a, mut b) = ((center - h).max(0.0), center + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if sign * eval(c) < sign * eval(d) {
                b = d;
            } else {
                a = c;
            }
        }
        eval(0.5 * (a + b))
    };
    let lower = lo.0.min(refine(lo.1, 1.0)).min(tail);
    let upper = hi.0.max(refine(hi.1, -1.0)).max(tail);
    (lower, upper)
}
