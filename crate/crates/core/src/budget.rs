//! Multiplicative efficiency chain from first-lens brightness to fibered
//! brightness, and its inversion for the pillar-to-fiber coupling.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::Measurement;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("missing budget factor `{0}`")]
    MissingFactor(&'static str),
    #[error("factor `{0}` is zero, cannot divide")]
    DivisionByZero(&'static str),
    #[error("factor `{name}` = {value} ± {sigma} outside [0, 1] or negative sigma")]
    OutOfRange { name: &'static str, value: f64, sigma: f64 },
    #[error("budget file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub const FACTOR_NAMES: [&str; 5] =
    ["first_lens_brightness", "pillar_to_fiber", "splice_transmission", "filter_transmission", "fibered_brightness"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBudget {
    pub first_lens_brightness: Option<Measurement>,
    pub pillar_to_fiber: Option<Measurement>,
    pub splice_transmission: Option<Measurement>,
    pub filter_transmission: Option<Measurement>,
    pub fibered_brightness: Option<Measurement>,
}

impl EfficiencyBudget {
    /// Measured reference chain without the coupling, for inference.
    pub fn reference_inputs() -> Self {
        EfficiencyBudget {
            first_lens_brightness: Some(Measurement::new(0.468, 0.025)),
            pillar_to_fiber: None,
            splice_transmission: Some(Measurement::new(0.90, 0.02)),
            filter_transmission: Some(Measurement::new(0.66, 0.02)),
            fibered_brightness: Some(Measurement::new(0.208, 0.008)),
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut Option<Measurement>> {
        Some(match name {
            "first_lens_brightness" => &mut self.first_lens_brightness,
            "pillar_to_fiber" => &mut self.pillar_to_fiber,
            "splice_transmission" => &mut self.splice_transmission,
            "filter_transmission" => &mut self.filter_transmission,
            "fibered_brightness" => &mut self.fibered_brightness,
            _ => return None,
        })
    }

    pub fn factors(&self) -> [(&'static str, Option<Measurement>); 5] {
        [
            (FACTOR_NAMES[0], self.first_lens_brightness),
            (FACTOR_NAMES[1], self.pillar_to_fiber),
            (FACTOR_NAMES[2], self.splice_transmission),
            (FACTOR_NAMES[3], self.filter_transmission),
            (FACTOR_NAMES[4], self.fibered_brightness),
        ]
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        for (name, m) in self.factors() {
            if let Some(m) = m {
                if !(0.0..=1.0).contains(&m.value) || !(m.sigma >= 0.0) || !m.sigma.is_finite() {
                    return Err(BudgetError::OutOfRange { name, value: m.value, sigma: m.sigma });
                }
            }
        }
        Ok(())
    }

    /// Parse `factor = value ± sigma` lines (`+-` is accepted for `±`).
    /// Blank lines and `#` comments are ignored; an optional `version = 1`
    /// line is checked.
    pub fn read<R: BufRead>(r: R) -> Result<Self, crate::Error> {
        let mut b = EfficiencyBudget::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let err = |msg: String| BudgetError::Parse { line: i + 1, msg };
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| err("expected `factor = value ± sigma`".into()))?;
            let key = key.trim();
            if key == "version" {
                if value.trim() != "1" {
                    return Err(err(format!("unsupported version {}", value.trim())).into());
                }
                continue;
            }
            let (v, s) = value
                .split_once('±')
                .or_else(|| value.split_once("+-"))
                .map_or((value, None), |(v, s)| (v, Some(s)));
            let num = |t: &str| t.trim().parse::<f64>().map_err(|e| err(format!("`{}`: {e}", t.trim())));
            let m = Measurement::new(num(v)?, s.map(num).transpose()?.unwrap_or(0.0));
            let slot = b.slot(key).ok_or_else(|| err(format!("unknown factor `{key}`")))?;
            if slot.replace(m).is_some() {
                return Err(err(format!("duplicate factor `{key}`")).into());
            }
        }
        b.validate()?;
        Ok(b)
    }

    /// Inverse of [`EfficiencyBudget::read`]; absent factors are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::from("version = 1\n");
        for (name, m) in self.factors() {
            if let Some(m) = m {
                writeln!(out, "{name} = {} ± {}", m.value, m.sigma).expect("write to string");
            }
        }
        out
    }
}

/// A propagated value, clamped to [0, 1] with a flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Measurement,
    pub out_of_range: bool,
}

impl Estimate {
    fn clamped(value: f64, sigma: f64) -> Self {
        let v = value.clamp(0.0, 1.0);
        Estimate { value: Measurement::new(v, sigma), out_of_range: v != value }
    }
}

fn need(m: Option<Measurement>, name: &'static str) -> Result<Measurement, BudgetError> {
    m.ok_or(BudgetError::MissingFactor(name))
}

/// Product of first-lens brightness, coupling, splice and filter
/// transmissions, with relative errors added in quadrature.
pub fn predict_brightness(b: &EfficiencyBudget) -> Result<Estimate, BudgetError> {
    b.validate()?;
    let f = [
        need(b.first_lens_brightness, FACTOR_NAMES[0])?,
        need(b.pillar_to_fiber, FACTOR_NAMES[1])?,
        need(b.splice_transmission, FACTOR_NAMES[2])?,
        need(b.filter_transmission, FACTOR_NAMES[3])?,
    ];
    let value: f64 = f.iter().map(|m| m.value).product();
    // Absolute form of the quadrature sum, which stays finite when a factor is 0.
    let var: f64 = (0..f.len())
        .map(|i| {
            let others: f64 = f.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| m.value).product();
            (others * f[i].sigma).powi(2)
        })
        .sum();
    Ok(Estimate::clamped(value, var.sqrt()))
}

/// `fibered / (first lens · splice · filter)`, relative errors in quadrature.
pub fn infer_coupling(b: &EfficiencyBudget) -> Result<Estimate, BudgetError> {
    b.validate()?;
    let fibered = need(b.fibered_brightness, FACTOR_NAMES[4])?;
    let den = [
        (need(b.first_lens_brightness, FACTOR_NAMES[0])?, FACTOR_NAMES[0]),
        (need(b.splice_transmission, FACTOR_NAMES[2])?, FACTOR_NAMES[2]),
        (need(b.filter_transmission, FACTOR_NAMES[3])?, FACTOR_NAMES[3]),
    ];
    for (m, name) in den {
        if m.value == 0.0 {
            return Err(BudgetError::DivisionByZero(name));
        }
    }
    let den_product: f64 = den.iter().map(|(m, _)| m.value).product();
    let value = fibered.value / den_product;
    let rel2: f64 = den.iter().map(|(m, _)| (m.sigma / m.value).powi(2)).sum();
    // Absolute form of the quadrature sum, which stays finite at zero brightness.
    let sigma = (fibered.sigma.powi(2) / den_product.powi(2) + value * value * rel2).sqrt();
    Ok(Estimate::clamped(value, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

/// Candidate sources of a coupling discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Explanation {
    PillarDiameterError,
    ChainLossOverestimated,
}

/// |z| up to this is reported as consistent.
pub const CONSISTENT_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub inferred: Measurement,
    pub simulated: f64,
    pub difference: f64,
    /// Difference in units of the inferred sigma.
    pub z: f64,
    pub verdict: Verdict,
    pub candidates: Vec<Explanation>,
}

pub fn compare_to_simulation(inferred: Measurement, simulated: f64) -> Comparison {
    let difference = inferred.value - simulated;
    let z = if difference == 0.0 { 0.0 } else { difference / inferred.sigma };
    let verdict = if z.abs() <= CONSISTENT_SIGMA { Verdict::Consistent } else { Verdict::Inconsistent };
    let candidates = if difference > 0.0 {
        vec![Explanation::PillarDiameterError, Explanation::ChainLossOverestimated]
    } else if difference < 0.0 {
        vec![Explanation::PillarDiameterError]
    } else {
        Vec::new()
    };
    Comparison { inferred, simulated, difference, z, verdict, candidates }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub inputs: EfficiencyBudget,
    pub coupling: Estimate,
    pub comparison: Option<Comparison>,
    /// The first-lens brightness is taken as unchanged by pigtailing.
    pub assumes_first_lens_unchanged: bool,
    pub propagation: &'static str,
}

pub fn budget_report(b: &EfficiencyBudget, simulated_coupling: Option<f64>) -> Result<BudgetReport, BudgetError> {
    let coupling = infer_coupling(b)?;
    Ok(BudgetReport {
        inputs: *b,
        coupling,
        comparison: simulated_coupling.map(|s| compare_to_simulation(coupling.value, s)),
        assumes_first_lens_unchanged: true,
        propagation: "first-order quadrature",
    })
}

impl BudgetReport {
    /// `key = value` text, one item per line.
    pub fn render(&self) -> String {
        let mut out = String::from("# pigtail budget report v1\n");
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        for (name, m) in self.inputs.factors() {
            if let Some(m) = m {
                line(&format!("input.{name}"), format!("{:.4} ± {:.4}", m.value, m.sigma));
            }
        }
        line("pillar_to_fiber", format!("{:.4} ± {:.4}", self.coupling.value.value, self.coupling.value.sigma));
        line("pillar_to_fiber.percent", format!("{:.1} ± {:.1}", 100.0 * self.coupling.value.value, 100.0 * self.coupling.value.sigma));
        line("pillar_to_fiber.out_of_range", self.coupling.out_of_range.to_string());
        line("uncertainty", self.propagation.to_string());
        line("assumption.first_lens_unchanged", self.assumes_first_lens_unchanged.to_string());
        if let Some(c) = &self.comparison {
            line("simulated", format!("{:.4}", c.simulated));
            line("difference", format!("{:+.4}", c.difference));
            line("z", format!("{:+.2}", c.z));
            line("verdict", serde_json::to_value(c.verdict).expect("enum").as_str().unwrap_or_default().to_string());
            let names: Vec<String> = c
                .candidates
                .iter()
                .map(|e| serde_json::to_value(e).expect("enum").as_str().unwrap_or_default().to_string())
                .collect();
            line("candidates", names.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let b = EfficiencyBudget::reference_inputs();
        assert_eq!(EfficiencyBudget::read(b.to_text().as_bytes()).unwrap(), b);
    }

    #[test]
    fn plus_minus_ascii_and_comments() {
        let b = EfficiencyBudget::read("# chain\nsplice_transmission = 0.9 +- 0.02 # measured\n".as_bytes()).unwrap();
        assert_eq!(b.splice_transmission, Some(Measurement::new(0.9, 0.02)));
    }

    #[test]
    fn bad_lines_rejected() {
        for text in ["splice = 0.9", "splice_transmission 0.9", "splice_transmission = x", "version = 2", "filter_transmission = 1.5"] {
            assert!(EfficiencyBudget::read(text.as_bytes()).is_err(), "{text}");
        }
    }

    #[test]
    fn missing_factor_reported() {
        assert_eq!(
            predict_brightness(&EfficiencyBudget::reference_inputs()),
            Err(BudgetError::MissingFactor("pillar_to_fiber"))
        );
    }
}
