use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Ordinal risk level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    No,
    Low,
    Moderate,
    Severe,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 4] = [RiskLabel::No, RiskLabel::Low, RiskLabel::Moderate, RiskLabel::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Most frequent label; ties go to the higher risk.
    pub fn consensus(labels: &[RiskLabel]) -> Option<RiskLabel> {
        let mut counts = [0usize; 4];
        for l in labels {
            counts[l.index()] += 1;
        }
        let top = *counts.iter().max()?;
        if top == 0 {
            return None;
        }
        (0..4).rev().find(|&i| counts[i] == top).and_then(Self::from_index)
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLabel::No => "no",
            RiskLabel::Low => "low",
            RiskLabel::Moderate => "moderate",
            RiskLabel::Severe => "severe",
        })
    }
}

impl FromStr for RiskLabel {
    type Err = String;

    /// Accepts names (`no`, `low`, `moderate`/`mod`, `severe`/`sev`, any
    /// case), single letters `a`..`d`, or ordinals `0`..`3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no" | "none" | "a" | "0" => Ok(RiskLabel::No),
            "low" | "b" | "1" => Ok(RiskLabel::Low),
            "moderate" | "mod" | "c" | "2" => Ok(RiskLabel::Moderate),
            "severe" | "sev" | "d" | "3" => Ok(RiskLabel::Severe),
            other => Err(format!("unknown risk label `{other}`")),
        }
    }
}

/// Numeric encoding of risk labels into `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// `0, 1/3, 2/3, 1`.
    #[default]
    Linear,
    /// `0, 0, 0, 1`.
    Binary,
    /// `0, 1/7, 3/7, 1`.
    Exponential,
}

impl Encoding {
    pub fn encode(self, label: RiskLabel) -> f64 {
        let i = label.index() as f64;
        match self {
            Encoding::Linear => i / 3.0,
            Encoding::Binary => f64::from(u8::from(label == RiskLabel::Severe)),
            Encoding::Exponential => (2f64.powf(i) - 1.0) / 7.0,
        }
    }
}

pub fn encode_risk(label: RiskLabel, scheme: Encoding) -> f64 {
    scheme.encode(label)
}
