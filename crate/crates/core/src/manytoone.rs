//! Monte-Carlo cross-checks of the many-to-one identities: sums over the
//! simulated genealogy against expectations along the tagged age process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::malthus::MalthusData;
use crate::offspring::OffspringLaw;
use crate::particle::{simulate_chain, GridMeans};
use crate::rate::Hazard;
use crate::rng::{stream, stream_id};
use crate::stats::{Accumulator, McEstimate};
use crate::testfn::TestFunction;
use crate::tree::{pair_sums, simulate_tree_capped, PairSums, PopulationTree, DEFAULT_NODE_CAP};

/// Which identity a report checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Boundary,
    Interior,
    Forks,
    Lineage,
    AliveForks,
}

impl Identity {
    pub const ALL: [Identity; 5] = [
        Identity::Boundary,
        Identity::Interior,
        Identity::Forks,
        Identity::Lineage,
        Identity::AliveForks,
    ];
}

/// Monte-Carlo sizes of a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MtoSizes {
    pub n_trees: usize,
    pub n_paths: usize,
    pub grid_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MtoReport {
    pub identity: Identity,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sizes: MtoSizes,
    /// Tree-side mean.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Particle-side value.
    pub rhs: f64,
    /// Monte-Carlo error of the particle side with the quadrature error
    /// estimate folded in.
    pub rhs_se: f64,
    pub quadrature_error: f64,
    pub z: f64,
}

impl MtoReport {
    fn new(identity: Identity, horizon: f64, sizes: MtoSizes, lhs: McEstimate, rhs: McEstimate, quad: f64) -> Self {
        let rhs_se = rhs.se.hypot(quad);
        let denom = lhs.se.hypot(rhs_se);
        let diff = lhs.mean - rhs.mean;
        let z = if denom > 0.0 {
            diff / denom
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            identity,
            horizon,
            sizes,
            lhs: lhs.mean,
            lhs_se: lhs.se,
            rhs: rhs.mean,
            rhs_se,
            quadrature_error: quad,
            z,
        }
    }

    pub fn passes(&self, z_max: f64) -> bool {
        self.z.abs() <= z_max
    }
}

/// Settings shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtoConfig {
    pub horizon: f64,
    pub n_trees: usize,
    pub n_paths: usize,
    /// Cells of the time grid for the integrated identities.
    pub grid_cells: usize,
    pub batches: usize,
    pub node_cap: usize,
    pub seed: u64,
}

impl MtoConfig {
    pub fn new(horizon: f64, n_trees: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            horizon,
            n_trees,
            n_paths,
            grid_cells: 256,
            batches: 40,
            node_cap: DEFAULT_NODE_CAP,
            seed,
        }
    }

    fn sizes(&self) -> MtoSizes {
        MtoSizes {
            n_trees: self.n_trees,
            n_paths: self.n_paths,
            grid_cells: self.grid_cells,
        }
    }
}

const TREE_ARM: u32 = 0;
const PATH_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Tree-side statistic averaged over independent genealogies.
fn tree_mean<F>(md: &MalthusData, law: &OffspringLaw, cfg: &MtoConfig, stat: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&PopulationTree) -> Vec<f64> + Sync,
{
    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, stream_id(TREE_ARM, r as u32));
            simulate_tree_capped(md.rate(), law, cfg.horizon, cfg.node_cap, &mut rng).map(|t| stat(&t))
        })
        .collect::<Result<_>>()?;
    let k = per_tree.first().map_or(0, Vec::len);
    Ok((0..k)
        .map(|j| {
            let mut acc = Accumulator::default();
            per_tree.iter().for_each(|v| acc.push(v[j]));
            acc.estimate()
        })
        .collect())
}

fn path_seed(cfg: &MtoConfig) -> u64 {
    cfg.seed ^ PATH_SEED_SALT
}

/// Sum of `g` over individuals alive at the horizon.
pub fn verify_mto_boundary(md: &MalthusData, law: &OffspringLaw, g: &TestFunction, cfg: &MtoConfig) -> Result<MtoReport> {
    let t = cfg.horizon;
    let lhs = tree_mean(md, law, cfg, |tree| {
        let s = (0..tree.len())
            .filter(|&i| tree.is_censored(i))
            .map(|i| g.eval(t - tree.birth(i)))
            .sum();
        vec![s]
    })?[0];
    let h = md.biased();
    let b = md.rate();
    let seed = path_seed(cfg);
    let vals: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let a = simulate_chain(h, 0.0, t, &mut stream(seed, i as u64)).age;
            let ga = g.eval(a);
            if ga == 0.0 {
                0.0
            } else {
                ga * h.rate_fast(a) / b.eval(a)
            }
        })
        .collect();
    let mut acc = Accumulator::default();
    vals.iter().for_each(|&v| acc.push(v));
    let rhs = acc.estimate().scale((md.lambda * t).exp() / md.offspring_mean);
    Ok(MtoReport::new(Identity::Boundary, t, cfg.sizes(), lhs, rhs, 0.0))
}

/// Trapezoid weights on `n + 1` nodes.
fn trap_weight(k: usize, n: usize, step: f64) -> f64 {
    if k == 0 || k == n {
        0.5 * step
    } else {
        step
    }
}

/// Cumulative trapezoid integral of `y` on a uniform grid.
fn cumulative_trapezoid(y: &[f64], step: f64) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for k in 1..y.len() {
        out[k] = out[k - 1] + 0.5 * step * (y[k - 1] + y[k]);
    }
    out
}

/// Apply `f` on the grid and on its half, folding the Richardson estimate
/// `|I_h − I_2h| / 3` into the reported error.
fn richardson(grid: &GridMeans, f: impl Fn(&[Vec<f64>], f64) -> f64 + Copy) -> (McEstimate, f64) {
    let fine = grid.functional(f);
    let coarse = f(&grid.coarse().overall, grid.step * 2.0);
    (fine, (fine.mean - coarse).abs() / 3.0)
}

/// Sum of `g(ζ_u)` over individuals that divided before the horizon.
pub fn verify_mto_interior(md: &MalthusData, law: &OffspringLaw, g: &TestFunction, cfg: &MtoConfig) -> Result<MtoReport> {
    let t = cfg.horizon;
    let lhs = tree_mean(md, law, cfg, |tree| {
        let s = (0..tree.len())
            .filter(|&i| tree.is_interior(i))
            .map(|i| g.eval(tree.lifetime(i)))
            .sum();
        vec![s]
    })?[0];
    let h = md.biased();
    let gh = |a: f64| g.eval(a) * h.rate_fast(a);
    let grid = GridMeans::sample(h, 0.0, t, cfg.grid_cells, &[&gh], cfg.n_paths, cfg.batches, path_seed(cfg));
    let lambda = md.lambda;
    let m = md.offspring_mean;
    let (rhs, quad) = richardson(&grid, move |means, step| {
        let y = &means[0];
        let n = y.len() - 1;
        (0..=n)
            .map(|k| trap_weight(k, n, step) * (lambda * k as f64 * step).exp() * y[k])
            .sum::<f64>()
            / m
    });
    Ok(MtoReport::new(Identity::Interior, t, cfg.sizes(), lhs, rhs, quad))
}

/// Pair identities: forks and lineages among interior individuals, and
/// distinct pairs alive at the horizon.
pub fn verify_mto_pairs(md: &MalthusData, law: &OffspringLaw, g: &TestFunction, cfg: &MtoConfig) -> Result<Vec<MtoReport>> {
    let t = cfg.horizon;
    let lhs = tree_mean(md, law, cfg, |tree| {
        let PairSums { forks, lineage, alive } = pair_sums(tree, |x| g.eval(x));
        vec![forks, lineage, alive]
    })?;
    let h = md.biased();
    let b = md.rate();
    let gh = |a: f64| g.eval(a) * h.rate_fast(a);
    let hh = |a: f64| h.rate_fast(a);
    let ghb = |a: f64| {
        let v = g.eval(a);
        if v == 0.0 {
            0.0
        } else {
            v * h.rate_fast(a) / b.eval(a)
        }
    };
    let grid = GridMeans::sample(
        h,
        0.0,
        t,
        cfg.grid_cells,
        &[&gh, &hh, &ghb],
        cfg.n_paths,
        cfg.batches,
        path_seed(cfg),
    );
    let lambda = md.lambda;
    let m = md.offspring_mean;
    let mbar = law.pair_constant();
    let disc = move |k: usize, step: f64| (lambda * k as f64 * step).exp();

    // F(r) = ∫_0^r e^{λs} P^s(gH)(0) ds on the grid.
    let cum_f = move |means: &[Vec<f64>], step: f64| {
        let y: Vec<f64> = means[0].iter().enumerate().map(|(k, v)| disc(k, step) * v).collect();
        cumulative_trapezoid(&y, step)
    };
    let forks = move |means: &[Vec<f64>], step: f64| {
        let f = cum_f(means, step);
        let n = f.len() - 1;
        (0..=n)
            .map(|k| trap_weight(k, n, step) * disc(k, step) * f[n - k].powi(2) * means[1][k])
            .sum::<f64>()
            * mbar
            / m.powi(3)
    };
    let lineage = move |means: &[Vec<f64>], step: f64| {
        let f = cum_f(means, step);
        let n = f.len() - 1;
        (0..=n)
            .map(|k| trap_weight(k, n, step) * disc(k, step) * means[0][k] * f[n - k])
            .sum::<f64>()
            / m
    };
    let alive = move |means: &[Vec<f64>], step: f64| {
        let n = means[2].len() - 1;
        (0..=n)
            .map(|k| {
                let inner = disc(n - k, step) * means[2][n - k];
                trap_weight(k, n, step) * disc(k, step) * inner * inner * means[1][k]
            })
            .sum::<f64>()
            * mbar
            / m.powi(3)
    };
    let mut out = Vec::with_capacity(3);
    for (j, (id, f)) in [
        (Identity::Forks, &forks as &dyn Fn(&[Vec<f64>], f64) -> f64),
        (Identity::Lineage, &lineage),
        (Identity::AliveForks, &alive),
    ]
    .into_iter()
    .enumerate()
    {
        let (rhs, quad) = richardson(&grid, |m, s| f(m, s));
        out.push(MtoReport::new(id, t, cfg.sizes(), lhs[j], rhs, quad));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::malthus::solve_malthus;
    use crate::rate::RateFunction;

    #[test]
    fn zero_test_function_gives_zero_on_both_sides() {
        let b = RateFunction::trial();
        let law = OffspringLaw::binary();
        let md = solve_malthus(&b, &law).unwrap();
        let cfg = MtoConfig::new(3.0, 20, 200, 1);
        let r = verify_mto_boundary(&md, &law, &TestFunction::Zero, &cfg).unwrap();
        assert_eq!((r.lhs, r.rhs, r.z), (0.0, 0.0, 0.0));
        let r = verify_mto_interior(&md, &law, &TestFunction::Zero, &cfg).unwrap();
        assert_eq!((r.lhs, r.rhs, r.z), (0.0, 0.0, 0.0));
        for r in verify_mto_pairs(&md, &law, &TestFunction::Zero, &cfg).unwrap() {
            assert_eq!((r.lhs, r.rhs, r.z), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn report_serializes_with_expected_fields() {
        let b = RateFunction::constant(0.5).unwrap();
        let law = OffspringLaw::binary();
        let md = solve_malthus(&b, &law).unwrap();
        let r = verify_mto_boundary(&md, &law, &TestFunction::One, &MtoConfig::new(2.0, 50, 500, 2)).unwrap();
        let v = serde_json::to_value(r).unwrap();
        for key in ["identity", "T", "sizes", "lhs", "lhs_se", "rhs", "rhs_se", "z"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["identity"], "boundary");
    }

    #[test]
    fn cumulative_trapezoid_of_constant() {
        let c = cumulative_trapezoid(&[2.0; 5], 0.5);
        assert_eq!(c, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
