//! The tagged age process: a particle ages at unit speed and is reset to
//! age 0 at rate `H(age)`.

use rand::Rng;
use rand_distr::{Exp1, StandardUniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::malthus::InvariantLaw;
use crate::rate::Hazard;
use crate::rng::stream;
use crate::stats::{Accumulator, McEstimate};

/// Terminal state of one simulated chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgeChain {
    pub age: f64,
    pub time: f64,
    pub jumps: u64,
}

/// Age at which the next reset happens, starting from `age`.
#[inline]
fn next_reset_age<H: Hazard + ?Sized, R: Rng + ?Sized>(h: &H, age: f64, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    h.inverse_cumulative(h.cumulative(age) + e).max(age)
}

/// Run the chain from age `x0` for `t_end` units of time.
pub fn simulate_chain<H: Hazard + ?Sized, R: Rng + ?Sized>(
    h: &H,
    x0: f64,
    t_end: f64,
    rng: &mut R,
) -> AgeChain {
    let mut age = x0;
    let mut left = t_end;
    let mut jumps = 0;
    loop {
        let hold = next_reset_age(h, age, rng) - age;
        if hold >= left {
            return AgeChain {
                age: age + left,
                time: t_end,
                jumps,
            };
        }
        left -= hold;
        age = 0.0;
        jumps += 1;
    }
}

/// Run the chain from `x0` and report its age at `k·step`, `k = 0..=n_cells`.
pub fn sample_path_on_grid<H: Hazard + ?Sized, R: Rng + ?Sized>(
    h: &H,
    x0: f64,
    step: f64,
    n_cells: usize,
    rng: &mut R,
    mut visit: impl FnMut(usize, f64),
) {
    let mut age = x0;
    let mut now = 0.0;
    let mut k = 0;
    while k <= n_cells {
        let reset_at = now + (next_reset_age(h, age, rng) - age);
        while k <= n_cells && (k as f64) * step < reset_at {
            visit(k, age + (k as f64) * step - now);
            k += 1;
        }
        now = reset_at;
        age = 0.0;
    }
}

/// Monte-Carlo estimate of `P^t g(x0)`, one random stream per path.
pub fn semigroup_mc<H, G>(h: &H, g: G, x0: f64, t: f64, n_paths: usize, seed: u64) -> McEstimate
where
    H: Hazard + ?Sized,
    G: Fn(f64) -> f64 + Sync,
{
    semigroup_mc_from(h, g, |_| x0, t, n_paths, seed)
}

/// [`semigroup_mc`] with the starting age drawn from the invariant law.
pub fn semigroup_mc_stationary<H, G>(
    h: &H,
    mu: &InvariantLaw,
    g: G,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> McEstimate
where
    H: Hazard + ?Sized,
    G: Fn(f64) -> f64 + Sync,
{
    semigroup_mc_from(h, g, |rng| mu.sample(rng), t, n_paths, seed)
}

fn semigroup_mc_from<H, G, S>(h: &H, g: G, start: S, t: f64, n_paths: usize, seed: u64) -> McEstimate
where
    H: Hazard + ?Sized,
    G: Fn(f64) -> f64 + Sync,
    S: Fn(&mut crate::rng::SimRng) -> f64 + Sync,
{
    let values: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let x0 = start(&mut rng);
            g(simulate_chain(h, x0, t, &mut rng).age)
        })
        .collect();
    let mut acc = Accumulator::default();
    values.iter().for_each(|&v| acc.push(v));
    acc.estimate()
}

/// Terminal ages of `n_paths` chains, started at `x0` or from `mu`.
pub fn terminal_ages<H: Hazard + ?Sized>(
    h: &H,
    start: Start<'_>,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Vec<f64> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let x0 = start.draw(&mut rng);
            simulate_chain(h, x0, t, &mut rng).age
        })
        .collect()
}

/// Starting law of a chain.
#[derive(Clone, Copy)]
pub enum Start<'a> {
    At(f64),
    Invariant(&'a InvariantLaw),
}

impl Start<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Start::At(x) => *x,
            Start::Invariant(mu) => mu.sample(rng),
        }
    }
}

/// Mis-coupling frequency at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingPoint {
    pub t: f64,
    pub frequency: f64,
    pub se: f64,
    /// `exp(−ρ t)` with `ρ = inf H`.
    pub bound: f64,
}

/// Couple a chain started at `x0` with one started from `mu`, both driven
/// by the same Poisson random measure on time × `[0, sup H]`, and report
/// `P(Y_t ≠ Z_t)` at each time of `t_grid` (sorted ascending).
pub fn coupling_tv<H: Hazard + ?Sized>(
    h: &H,
    mu: &InvariantLaw,
    x0: f64,
    t_grid: &[f64],
    n_pairs: usize,
    seed: u64,
) -> Vec<CouplingPoint> {
    let level = h.sup_rate();
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let coupled_at: Vec<f64> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut z_age = mu.sample(&mut rng);
            let mut y_age = x0;
            let mut now = 0.0;
            loop {
                let gap = rng.sample::<f64, _>(Exp1) / level;
                now += gap;
                if now > t_max {
                    return f64::INFINITY;
                }
                y_age += gap;
                z_age += gap;
                let u: f64 = rng.sample(StandardUniform);
                let mark = u * level;
                let y_jumps = mark <= h.rate_fast(y_age);
                let z_jumps = mark <= h.rate_fast(z_age);
                if y_jumps && z_jumps {
                    return now;
                }
                if y_jumps {
                    y_age = 0.0;
                }
                if z_jumps {
                    z_age = 0.0;
                }
            }
        })
        .collect();
    let rho = h.inf_rate();
    let n = n_pairs as f64;
    t_grid
        .iter()
        .map(|&t| {
            let apart = coupled_at.iter().filter(|&&c| c > t).count() as f64;
            let p = apart / n;
            CouplingPoint {
                t,
                frequency: p,
                se: (p * (1.0 - p) / n).sqrt(),
                bound: (-rho * t).exp(),
            }
        })
        .collect()
}

/// Batch-wise averages of observables along chain paths on a uniform grid.
#[derive(Debug, Clone)]
pub struct GridMeans {
    pub step: f64,
    pub n_cells: usize,
    pub n_paths: usize,
    /// `overall[j][k]`: mean of observable `j` at grid time `k·step`.
    pub overall: Vec<Vec<f64>>,
    /// The same per batch.
    pub batches: Vec<Vec<Vec<f64>>>,
}

impl GridMeans {
    /// Record `observables` along `n_paths` paths started at `x0`,
    /// split into `n_batches` independent batches.
    pub fn sample<H: Hazard + ?Sized>(
        h: &H,
        x0: f64,
        horizon: f64,
        n_cells: usize,
        observables: &[&(dyn Fn(f64) -> f64 + Sync)],
        n_paths: usize,
        n_batches: usize,
        seed: u64,
    ) -> Self {
        let step = horizon / n_cells as f64;
        let n_batches = n_batches.clamp(1, n_paths.max(1));
        let per = n_paths / n_batches;
        let batches: Vec<(usize, Vec<Vec<f64>>)> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let lo = b * per;
                let hi = if b + 1 == n_batches { n_paths } else { lo + per };
                let mut sums = vec![vec![0.0; n_cells + 1]; observables.len()];
                for i in lo..hi {
                    let mut rng = stream(seed, i as u64);
                    sample_path_on_grid(h, x0, step, n_cells, &mut rng, |k, age| {
                        for (j, f) in observables.iter().enumerate() {
                            sums[j][k] += f(age);
                        }
                    });
                }
                (hi - lo, sums)
            })
            .collect();
        let mut overall = vec![vec![0.0; n_cells + 1]; observables.len()];
        let mut per_batch = Vec::with_capacity(batches.len());
        for (n, sums) in batches {
            for (o, s) in overall.iter_mut().zip(&sums) {
                for (a, b) in o.iter_mut().zip(s) {
                    *a += b;
                }
            }
            per_batch.push(
                sums.into_iter()
                    .map(|v| v.into_iter().map(|x| x / n as f64).collect())
                    .collect(),
            );
        }
        for o in overall.iter_mut() {
            for a in o.iter_mut() {
                *a /= n_paths as f64;
            }
        }
        Self {
            step,
            n_cells,
            n_paths,
            overall,
            batches: per_batch,
        }
    }

    /// Apply a functional of the mean curves: value from all paths, standard
    /// error from the spread across batches.
    pub fn functional(&self, f: impl Fn(&[Vec<f64>], f64) -> f64) -> McEstimate {
        let mean = f(&self.overall, self.step);
        let vals: Vec<f64> = self.batches.iter().map(|b| f(b, self.step)).collect();
        let nb = vals.len() as f64;
        let se = if vals.len() > 1 {
            crate::stats::sample_std(&vals) / nb.sqrt()
        } else {
            0.0
        };
        McEstimate { mean, se }
    }

    /// The same functional on every other grid node.
    pub fn coarse(&self) -> Self {
        let thin = |v: &Vec<f64>| v.iter().step_by(2).copied().collect::<Vec<_>>();
        Self {
            step: self.step * 2.0,
            n_cells: self.n_cells / 2,
            n_paths: self.n_paths,
            overall: self.overall.iter().map(thin).collect(),
            batches: self
                .batches
                .iter()
                .map(|b| b.iter().map(thin).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFunction;

    #[test]
    fn zero_time_keeps_start() {
        let h = RateFunction::constant(1.0).unwrap();
        let c = simulate_chain(&h, 0.7, 0.0, &mut stream(0, 0));
        assert_eq!((c.age, c.jumps), (0.7, 0));
    }

    #[test]
    fn conservation_is_exact() {
        let h = RateFunction::trial();
        let e = semigroup_mc(&h, |_| 1.0, 0.0, 3.0, 500, 1);
        assert_eq!((e.mean, e.se), (1.0, 0.0));
    }

    #[test]
    fn grid_path_agrees_with_terminal_chain() {
        let h = RateFunction::trial();
        let mut last = 0.0;
        sample_path_on_grid(&h, 0.3, 0.25, 20, &mut stream(4, 9), |k, a| {
            if k == 20 {
                last = a;
            }
        });
        let c = simulate_chain(&h, 0.3, 5.0, &mut stream(4, 9));
        assert!((last - c.age).abs() < 1e-9);
    }

    #[test]
    fn grid_path_is_sawtooth() {
        let h = RateFunction::constant(0.8).unwrap();
        let mut ages = Vec::new();
        sample_path_on_grid(&h, 0.0, 0.1, 100, &mut stream(2, 1), |_, a| ages.push(a));
        assert_eq!(ages.len(), 101);
        for w in ages.windows(2) {
            assert!(w[1] <= w[0] + 0.1 + 1e-12 && w[1] >= 0.0);
        }
    }

    #[test]
    fn coupling_starts_apart() {
        let h = RateFunction::constant(1.0).unwrap();
        let mu = InvariantLaw::new(std::sync::Arc::new(h.clone()));
        let pts = coupling_tv(&h, &mu, 0.0, &[0.0, 1.0], 200, 3);
        assert_eq!(pts[0].frequency, 1.0);
        assert!(pts[1].frequency < 1.0);
    }
}
