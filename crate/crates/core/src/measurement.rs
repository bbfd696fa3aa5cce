use serde::{Deserialize, Serialize};

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub sigma: f64,
}

impl Measurement {
    pub fn new(value: f64, sigma: f64) -> Self {
        Measurement { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Measurement { value, sigma: 0.0 }
    }

    pub fn relative(&self) -> f64 {
        self.sigma / self.value.abs()
    }

    /// Whether `other` lies within `k` sigma.
    pub fn agrees_with(&self, other: f64, k: f64) -> bool {
        (self.value - other).abs() <= k * self.sigma
    }
}

impl std::fmt::Display for Measurement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.*} ± {:.*}", p, self.value, p, self.sigma),
            None => write!(f, "{} ± {}", self.value, self.sigma),
        }
    }
}
