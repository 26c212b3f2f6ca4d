//! Bellman-Harris genealogies up to a horizon, stored as a flat arena.
//!
//! Nodes are appended in breadth-first order, so parents always precede
//! their children and siblings occupy contiguous slots.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use crate::malthus::solve_malthus;
use crate::rate::{Hazard, RateFunction};

/// Default hard cap on the number of materialized nodes.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// Parent index of the root.
pub const NO_PARENT: u32 = u32::MAX;

/// A simulated genealogy. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTree {
    horizon: f64,
    seed: Option<u64>,
    parent: Vec<u32>,
    birth: Vec<f64>,
    lifetime: Vec<f64>,
    offspring: Vec<u32>,
}

/// One row of the tree dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: u32,
    pub parent_id: i64,
    pub birth: f64,
    pub lifetime: f64,
    pub death: f64,
    pub nu: u32,
    pub censored: bool,
}

/// What an observer of the population up to the horizon sees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    pub horizon: f64,
    /// Lifetimes of individuals that divided before the horizon.
    pub interior_lifetimes: Vec<f64>,
    /// Offspring counts of those individuals.
    pub interior_offspring: Vec<u32>,
    /// Ages at the horizon of individuals still alive.
    pub boundary_ages: Vec<f64>,
}

impl ObservedSample {
    pub fn interior_len(&self) -> usize {
        self.interior_lifetimes.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary_ages.len()
    }
}

/// Draw a lifetime with hazard `h` by inverting the cumulative hazard.
pub fn sample_lifetime<H: Hazard + ?Sized, R: Rng + ?Sized>(h: &H, rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    h.inverse_cumulative(e)
}

pub fn sample_offspring<R: Rng + ?Sized>(law: &OffspringLaw, rng: &mut R) -> u32 {
    law.sample(rng)
}

/// Simulate the genealogy started from one newborn up to `horizon`.
pub fn simulate_tree<R: Rng + ?Sized>(
    rate: &RateFunction,
    law: &OffspringLaw,
    horizon: f64,
    rng: &mut R,
) -> Result<PopulationTree> {
    simulate_tree_capped(rate, law, horizon, DEFAULT_NODE_CAP, rng)
}

/// [`simulate_tree`] with an explicit node cap.
pub fn simulate_tree_capped<R: Rng + ?Sized>(
    rate: &RateFunction,
    law: &OffspringLaw,
    horizon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<PopulationTree> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let cap = cap.min(NO_PARENT as usize);
    let mut tree = PopulationTree {
        horizon,
        seed: None,
        parent: vec![NO_PARENT],
        birth: vec![0.0],
        lifetime: vec![sample_lifetime(rate, rng)],
        offspring: vec![0],
    };
    let mut i = 0;
    while i < tree.parent.len() {
        let death = tree.birth[i] + tree.lifetime[i];
        if death <= horizon {
            let nu = law.sample(rng);
            tree.offspring[i] = nu;
            if tree.parent.len() + nu as usize > cap {
                return Err(Error::PopulationCap {
                    horizon,
                    nodes: cap,
                    lambda: lambda_hint(law, rate),
                });
            }
            for _ in 0..nu {
                tree.parent.push(i as u32);
                tree.birth.push(death);
                tree.lifetime.push(sample_lifetime(rate, rng));
                tree.offspring.push(0);
            }
        }
        i += 1;
    }
    Ok(tree)
}

fn lambda_hint(law: &OffspringLaw, rate: &RateFunction) -> String {
    match solve_malthus(rate, law) {
        Ok(md) => format!("{:.6}", md.lambda),
        Err(_) => "unavailable".to_string(),
    }
}

impl PopulationTree {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        let p = self.parent[i];
        (p != NO_PARENT).then_some(p as usize)
    }

    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    pub fn birth(&self, i: usize) -> f64 {
        self.birth[i]
    }

    pub fn lifetime(&self, i: usize) -> f64 {
        self.lifetime[i]
    }

    pub fn death(&self, i: usize) -> f64 {
        self.birth[i] + self.lifetime[i]
    }

    pub fn offspring(&self, i: usize) -> u32 {
        self.offspring[i]
    }

    /// Died (and divided) no later than the horizon.
    pub fn is_interior(&self, i: usize) -> bool {
        self.death(i) <= self.horizon
    }

    /// Alive at the horizon.
    pub fn is_censored(&self, i: usize) -> bool {
        !self.is_interior(i)
    }

    /// Age at the horizon for alive nodes, lifetime for interior ones.
    pub fn observed_age(&self, i: usize) -> f64 {
        if self.is_interior(i) {
            self.lifetime[i]
        } else {
            self.horizon - self.birth[i]
        }
    }

    pub fn interior_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_interior(i)).count()
    }

    pub fn boundary_count(&self) -> usize {
        self.len() - self.interior_count()
    }

    /// Index range of the children of `i`.
    pub fn children(&self, i: usize) -> std::ops::Range<usize> {
        let first = self.parent.partition_point(|&p| p == NO_PARENT || (p as usize) < i);
        let first = first.max(1);
        first..first + self.offspring[i] as usize
    }

    /// Ulam-Harris label, e.g. `∅` for the root and `0.1.0` below it.
    pub fn ulam_harris_label(&self, i: usize) -> String {
        let mut digits = Vec::new();
        let mut u = i;
        while let Some(p) = self.parent(u) {
            digits.push(u - self.children(p).start);
            u = p;
        }
        if digits.is_empty() {
            return "∅".to_string();
        }
        digits
            .iter()
            .rev()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }

    pub fn record(&self, i: usize) -> NodeRecord {
        NodeRecord {
            node_id: i as u32,
            parent_id: self.parent(i).map_or(-1, |p| p as i64),
            birth: self.birth[i],
            lifetime: self.lifetime[i],
            death: self.death(i),
            nu: self.offspring[i],
            censored: self.is_censored(i),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = NodeRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuild a tree from its dump. Rows must be in breadth-first order.
    pub fn read_csv<R: Read>(reader: R, horizon: f64) -> Result<Self> {
        let mut tree = PopulationTree {
            horizon,
            seed: None,
            parent: Vec::new(),
            birth: Vec::new(),
            lifetime: Vec::new(),
            offspring: Vec::new(),
        };
        for (k, row) in csv::Reader::from_reader(reader).deserialize().enumerate() {
            let r: NodeRecord = row?;
            if r.node_id as usize != k {
                return Err(Error::InvalidArgument(format!(
                    "tree dump row {k} has node_id {}",
                    r.node_id
                )));
            }
            let parent = if r.parent_id < 0 {
                NO_PARENT
            } else if (r.parent_id as usize) < k {
                r.parent_id as u32
            } else {
                return Err(Error::InvalidArgument(format!(
                    "node {k} lists parent {} which does not precede it",
                    r.parent_id
                )));
            };
            tree.parent.push(parent);
            tree.birth.push(r.birth);
            tree.lifetime.push(r.lifetime);
            tree.offspring.push(r.nu);
        }
        if tree.is_empty() {
            return Err(Error::EmptySample("tree dump"));
        }
        Ok(tree)
    }
}

/// Split the nodes into the interior and boundary samples.
pub fn extract_sample(tree: &PopulationTree) -> ObservedSample {
    let mut s = ObservedSample {
        horizon: tree.horizon,
        ..Default::default()
    };
    for i in 0..tree.len() {
        if tree.is_interior(i) {
            s.interior_lifetimes.push(tree.lifetime[i]);
            s.interior_offspring.push(tree.offspring[i]);
        } else {
            s.boundary_ages.push(tree.horizon - tree.birth[i]);
        }
    }
    s
}

/// Pair statistics of a test function over one tree.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairSums {
    /// Sum of `g(ζ_u)g(ζ_v)` over ordered pairs of interior nodes whose
    /// most recent common ancestor is neither of them.
    pub forks: f64,
    /// Sum of `g(ζ_u)g(ζ_v)` over interior `u` strictly above interior `v`.
    pub lineage: f64,
    /// Sum of `g(age_u)g(age_v)` over ordered pairs of distinct alive nodes.
    pub alive: f64,
}

/// Pair sums in one backward pass over the arena.
pub fn pair_sums(tree: &PopulationTree, g: impl Fn(f64) -> f64) -> PairSums {
    let n = tree.len();
    let mut own = vec![0.0; n];
    let mut subtree = vec![0.0; n];
    let mut child_sum = vec![0.0; n];
    let mut child_sq = vec![0.0; n];
    let (mut bsum, mut bsq) = (0.0, 0.0);
    for i in 0..n {
        if tree.is_interior(i) {
            own[i] = g(tree.lifetime[i]);
            subtree[i] = own[i];
        } else {
            let v = g(tree.horizon - tree.birth[i]);
            bsum += v;
            bsq += v * v;
        }
    }
    for i in (1..n).rev() {
        let p = tree.parent[i] as usize;
        let s = subtree[i];
        subtree[p] += s;
        child_sum[p] += s;
        child_sq[p] += s * s;
    }
    let mut out = PairSums {
        alive: bsum * bsum - bsq,
        ..Default::default()
    };
    for i in 0..n {
        out.forks += child_sum[i] * child_sum[i] - child_sq[i];
        out.lineage += own[i] * (subtree[i] - own[i]);
    }
    out
}
