//! Declarative model descriptions with named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::OffspringLaw;
use crate::rate::{RateFunction, Segment};

/// Named model presets.
pub const MODEL_PRESETS: [&str; 2] = ["paper-trial", "constant b=0.4 m=2"];

/// How a division rate is described in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateSpec {
    /// The cubic-then-exponential trial rate.
    Trial,
    Constant { b: f64 },
    Piecewise { segments: Vec<Segment> },
}

impl RateSpec {
    pub fn build(&self) -> Result<RateFunction> {
        match self {
            RateSpec::Trial => Ok(RateFunction::trial()),
            RateSpec::Constant { b } => RateFunction::constant(*b),
            RateSpec::Piecewise { segments } => RateFunction::piecewise(segments.clone()),
        }
    }
}

/// A division rate together with an offspring law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub rate: RateSpec,
    #[serde(default = "OffspringLaw::binary")]
    pub offspring: OffspringLaw,
}

impl ModelSpec {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-trial" => Ok(Self {
                rate: RateSpec::Trial,
                offspring: OffspringLaw::binary(),
            }),
            "constant b=0.4 m=2" => Ok(Self {
                rate: RateSpec::Constant { b: 0.4 },
                offspring: OffspringLaw::binary(),
            }),
            other => Err(Error::Config(format!(
                "unknown model preset {other:?}; known: {}",
                MODEL_PRESETS.join(", ")
            ))),
        }
    }

    pub fn build(&self) -> Result<(RateFunction, OffspringLaw)> {
        Ok((self.rate.build()?, self.offspring.clone()))
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::preset("paper-trial").expect("known preset")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        for name in MODEL_PRESETS {
            let (b, law) = ModelSpec::preset(name).unwrap().build().unwrap();
            assert!(b.lower_bound() > 0.0);
            assert_eq!(law.mean(), 2.0);
        }
        assert!(ModelSpec::preset("nope").is_err());
    }

    #[test]
    fn toml_like_json_round_trip() {
        let spec = ModelSpec {
            rate: RateSpec::Piecewise {
                segments: vec![Segment::constant(0.0, 0.3), Segment::constant(1.0, 0.6)],
            },
            offspring: OffspringLaw::new(vec![(2, 0.5), (3, 0.5)]).unwrap(),
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let b = back.rate.build().unwrap();
        assert_eq!(b.eval(1.5), 0.6);
    }
}
