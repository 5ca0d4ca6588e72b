use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::check_multiplier;

/// How predictions are formed: one deterministic pass, or Monte Carlo
/// samples combined with the power mean of exponent `alpha ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    Det,
    Power(f64),
}

impl Alpha {
    pub fn validate(self) -> Result<Self> {
        if let Alpha::Power(a) = self {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::domain(format!(
                    "alpha must lie in [0, 1] (the lower bound fails for alpha > 1), got {a}"
                )));
            }
        }
        Ok(self)
    }

    pub fn is_det(self) -> bool {
        matches!(self, Alpha::Det)
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Det => f.write_str("det"),
            Alpha::Power(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("det") {
            return Ok(Alpha::Det);
        }
        s.trim()
            .parse::<f64>()
            .map(Alpha::Power)
            .map_err(|_| Error::config(format!("alpha must be \"det\" or a number, got {s:?}")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Text(String),
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Det => AlphaRepr::Text("det".into()).serialize(s),
            Alpha::Power(a) => AlphaRepr::Number(*a).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match AlphaRepr::deserialize(d)? {
            AlphaRepr::Number(a) => Ok(Alpha::Power(a)),
            AlphaRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A member of the extended dropout family plus its Monte Carlo budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    pub alpha: Alpha,
    pub lambda: f64,
    pub temperature: f64,
    pub samples: usize,
}

impl FamilyParams {
    pub fn new(alpha: Alpha, lambda: f64, temperature: f64, samples: usize) -> Result<Self> {
        FamilyParams {
            alpha,
            lambda,
            temperature,
            samples,
        }
        .validate()
    }

    pub fn deterministic(temperature: f64) -> Result<Self> {
        FamilyParams::new(Alpha::Det, 0.0, temperature, 1)
    }

    pub fn power(alpha: f64, lambda: f64, temperature: f64, samples: usize) -> Result<Self> {
        FamilyParams::new(Alpha::Power(alpha), lambda, temperature, samples)
    }

    pub fn validate(self) -> Result<Self> {
        self.alpha.validate()?;
        check_multiplier(self.lambda)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::domain(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if self.samples == 0 {
            return Err(Error::domain("the number of samples S must be at least 1"));
        }
        Ok(self)
    }

    pub fn with_temperature(self, temperature: f64) -> Result<Self> {
        FamilyParams {
            temperature,
            ..self
        }
        .validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_checks() {
        assert!(FamilyParams::power(1.5, 1.0, 1.0, 10).is_err());
        assert!(FamilyParams::power(-0.1, 1.0, 1.0, 10).is_err());
        assert!(FamilyParams::power(0.5, 1.1, 1.0, 10).is_err());
        assert!(FamilyParams::power(0.5, 1.0, 0.0, 10).is_err());
        assert!(FamilyParams::power(0.5, 1.0, 1.0, 0).is_err());
        assert!(FamilyParams::power(0.0, 0.0, 1.0, 1).is_ok());
        let msg = FamilyParams::power(1.5, 1.0, 1.0, 1).unwrap_err().to_string();
        assert!(msg.contains("[0, 1]"), "{msg}");
    }

    #[test]
    fn alpha_text_forms() {
        assert_eq!("det".parse::<Alpha>().unwrap(), Alpha::Det);
        assert_eq!("0.25".parse::<Alpha>().unwrap(), Alpha::Power(0.25));
        assert!("x".parse::<Alpha>().is_err());
        let fp = FamilyParams::power(0.5, 0.2, 1.0, 3).unwrap();
        let json = serde_json::to_string(&fp).unwrap();
        assert_eq!(serde_json::from_str::<FamilyParams>(&json).unwrap(), fp);
        let det: Alpha = serde_json::from_str("\"det\"").unwrap();
        assert_eq!(det, Alpha::Det);
        assert_eq!(Alpha::Power(1.0).to_string(), "1");
    }
}
