//! Smoothing kernels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Registered kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Standard normal density, truncated at `|u| = 8`.
    #[default]
    Gaussian,
    /// `(315/512)(3 − 11u²)(1 − u²)³` on `[−1, 1]`: twice differentiable,
    /// moments one to three vanish.
    Triweight4,
}

const GAUSS_RADIUS: f64 = 8.0;

impl Kernel {
    pub const ALL: [Kernel; 2] = [Kernel::Gaussian, Kernel::Triweight4];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Triweight4 => "triweight4",
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => {
                if u.abs() > GAUSS_RADIUS {
                    0.0
                } else {
                    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
                }
            }
            Kernel::Triweight4 => {
                let u2 = u * u;
                if u2 >= 1.0 {
                    0.0
                } else {
                    315.0 / 512.0 * (3.0 - 11.0 * u2) * (1.0 - u2).powi(3)
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => -u * self.eval(u),
            Kernel::Triweight4 => {
                let u2 = u * u;
                if u2 >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - u2;
                    315.0 / 512.0 * (-22.0 * u * s.powi(3) - 6.0 * u * (3.0 - 11.0 * u2) * s * s)
                }
            }
        }
    }

    /// `K(u) = 0` for `|u| > radius`.
    pub fn radius(self) -> f64 {
        match self {
            Kernel::Gaussian => GAUSS_RADIUS,
            Kernel::Triweight4 => 1.0,
        }
    }

    /// Number of leading vanishing moments.
    pub fn order(self) -> u32 {
        match self {
            Kernel::Gaussian => 1,
            Kernel::Triweight4 => 3,
        }
    }

    /// `K_h(y) = K(y/h)/h`.
    #[inline]
    pub fn scaled(self, h: f64, y: f64) -> f64 {
        self.eval(y / h) / h
    }

    /// `K_h'(y) = K'(y/h)/h²`.
    #[inline]
    pub fn scaled_derivative(self, h: f64, y: f64) -> f64 {
        self.derivative(y / h) / (h * h)
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel {s:?}"))
    }
}
