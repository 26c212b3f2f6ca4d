use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A bounded test function `g` on ages, as used by the empirical and limit
/// measures and the many-to-one checks.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "at")]
pub enum TestFunction {
    One,
    Zero,
    Identity,
    /// `1{age ≤ a}`
    IndicatorLe(f64),
    /// `1{age > a}`
    IndicatorGt(f64),
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::One => write!(f, "one"),
            Self::Zero => write!(f, "zero"),
            Self::Identity => write!(f, "identity"),
            Self::IndicatorLe(a) => write!(f, "1{{x<={a}}}"),
            Self::IndicatorGt(a) => write!(f, "1{{x>{a}}}"),
            Self::Custom(_) => write!(f, "custom"),
        }
    }
}

impl TestFunction {
    pub fn custom(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(g))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Zero => 0.0,
            Self::Identity => x,
            Self::IndicatorLe(a) => f64::from(u8::from(x <= *a)),
            Self::IndicatorGt(a) => f64::from(u8::from(x > *a)),
            Self::Custom(g) => g(x),
        }
    }

    /// Discontinuities, so quadrature can split there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::IndicatorLe(a) | Self::IndicatorGt(a) => vec![*a],
            _ => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}
