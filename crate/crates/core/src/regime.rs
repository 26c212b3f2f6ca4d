//! Regime classification: the ordering of `λ_B` against `ρ_B`, membership in
//! the smooth class `𝔹_{b,m}`, and the theoretical rates `v_T`, `w_T`.

use serde::Serialize;

use crate::error::Result;
use crate::malthus::{solve_malthus, MalthusData};
use crate::offspring::OffspringLaw;
use crate::rate::RateFunction;

const ORDER_TOL: f64 = 1e-9;
const CLASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `λ_B < ρ_B`: fast mixing of the tagged particle.
    #[serde(rename = "B+")]
    Plus,
    /// `ρ_B < λ_B`: slow mixing, deteriorated rates.
    #[serde(rename = "B-")]
    Minus,
    /// `λ_B = ρ_B`, on both sides.
    #[serde(rename = "both")]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Member,
    NotMember,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateDiagnostics {
    pub lambda: f64,
    pub rho: f64,
    pub regime: Regime,
    /// `ϖ_B = min{max{1, λ_B/ρ_B}, 2}`
    pub varpi: f64,
    /// membership in `𝔹_{b,m}`
    pub smooth_class: Membership,
    /// `λ_B = 2ρ_B`, where the rates pick up polynomial factors
    pub critical: bool,
}

impl RateDiagnostics {
    pub fn from_malthus(md: &MalthusData) -> Self {
        let (lambda, rho) = (md.lambda, md.rho);
        let regime = if (lambda - rho).abs() <= ORDER_TOL * rho {
            Regime::Both
        } else if lambda < rho {
            Regime::Plus
        } else {
            Regime::Minus
        };
        Self {
            lambda,
            rho,
            regime,
            varpi: (lambda / rho).max(1.0).min(2.0),
            smooth_class: smooth_class_membership(md.rate(), md.offspring_mean),
            critical: (lambda - 2.0 * rho).abs() <= ORDER_TOL * rho,
        }
    }

    /// `v_T(B)`, the rate of the biased empirical measures.
    pub fn v_t(&self, horizon: f64) -> f64 {
        if self.critical {
            horizon.sqrt() * (-self.lambda * horizon / 2.0).exp()
        } else {
            (-self.rho.min(self.lambda / 2.0) * horizon).exp()
        }
    }

    /// `w_T(B)` for smoothness `β`, the rate of the kernel estimator.
    pub fn w_t(&self, horizon: f64, beta: f64) -> f64 {
        let penalty = (self.lambda / self.rho - 1.0).max(0.0) / 2.0;
        let exponent = self.lambda.min(2.0 * self.rho) * (beta - penalty) / (2.0 * beta + 1.0) * horizon;
        let prefactor = if self.critical { horizon } else { 1.0 };
        prefactor * (-exponent).exp()
    }
}

/// Solve the Malthus problem and classify.
pub fn classify_regime(rate: &RateFunction, law: &OffspringLaw) -> Result<RateDiagnostics> {
    let md = solve_malthus(rate, law)?;
    Ok(RateDiagnostics::from_malthus(&md))
}

/// Checks `b ≤ B ≤ m b/(m−1)` and `B' − B² ≤ 0` on a grid of spacing `1e−3/b`.
pub fn smooth_class_membership(rate: &RateFunction, m: f64) -> Membership {
    let b = rate.lower_bound();
    let ceiling = m * b / (m - 1.0);
    let end = rate.x_max();
    let dx = 1e-3 / b;
    let n = (end / dx).ceil() as usize;
    let mut ages: Vec<f64> = (0..=n).map(|i| (i as f64 * dx).min(end)).collect();
    ages.extend_from_slice(rate.breakpoints());
    let mut member = true;
    for x in ages {
        let v = rate.eval(x);
        if v < b - CLASS_TOL || v > ceiling + CLASS_TOL {
            member = false;
        }
        match rate.derivative(x) {
            Some(d) if d.is_finite() => {
                if d - v * v > CLASS_TOL {
                    member = false;
                }
            }
            _ => return Membership::Unknown,
        }
    }
    if member {
        Membership::Member
    } else {
        Membership::NotMember
    }
}
