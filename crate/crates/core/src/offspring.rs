use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offspring distribution with finite support on `k ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OffspringSpec", into = "OffspringSpec")]
pub struct OffspringLaw {
    counts: Vec<u32>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

/// Serialized form: parallel arrays of counts and probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffspringSpec {
    pub counts: Vec<u32>,
    pub probs: Vec<f64>,
}

impl TryFrom<OffspringSpec> for OffspringLaw {
    type Error = Error;
    fn try_from(spec: OffspringSpec) -> Result<Self> {
        Self::new(spec.counts.into_iter().zip(spec.probs).collect())
    }
}

impl From<OffspringLaw> for OffspringSpec {
    fn from(law: OffspringLaw) -> Self {
        Self {
            counts: law.counts,
            probs: law.probs,
        }
    }
}

impl OffspringLaw {
    /// Build from `(k, p_k)` pairs. Requires `k ≥ 2` and `Σ p_k = 1`.
    pub fn new(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidOffspring("empty support".into()));
        }
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidOffspring(format!("duplicate count {}", w[0].0)));
            }
        }
        for &(k, p) in &pairs {
            if k < 2 {
                return Err(Error::InvalidOffspring(format!(
                    "counts must be at least 2 (p_0 = p_1 = 0), found {k}"
                )));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidOffspring(format!("invalid probability {p}")));
            }
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidOffspring(format!("probabilities sum to {total}")));
        }
        let (counts, probs): (Vec<u32>, Vec<f64>) = pairs.into_iter().filter(|p| p.1 > 0.0).unzip();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().expect("non-empty") = 1.0;
        Ok(Self { counts, probs, cdf })
    }

    /// Every particle splits into exactly `k` children.
    pub fn deterministic(k: u32) -> Result<Self> {
        Self::new(vec![(k, 1.0)])
    }

    pub fn binary() -> Self {
        Self::deterministic(2).expect("binary law is valid")
    }

    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.counts.iter().copied().zip(self.probs.iter().copied())
    }

    /// `m = Σ k p_k`.
    pub fn mean(&self) -> f64 {
        self.support().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.support().map(|(k, p)| (k as f64).powi(2) * p).sum()
    }

    /// `m̄ = Σ_{i≠j} Σ_{k ≥ i∨j} p_k`, which collapses to `E[ν(ν−1)]`.
    pub fn pair_constant(&self) -> f64 {
        self.support().map(|(k, p)| k as f64 * (k as f64 - 1.0) * p).sum()
    }

    pub fn is_binary(&self) -> bool {
        self.counts == [2]
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.counts.len() == 1 {
            return self.counts[0];
        }
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.counts.len() - 1);
        self.counts[idx]
    }
}
