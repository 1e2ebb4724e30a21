//! Screening outcomes, confusion counts and seed-level summaries.
//!
//! Positives are individuals whose ground truth is severe. Population-level
//! counts cover everyone with known truth, treating individuals outside the
//! predicted-positive set as negatives; cohort-level counts cover only the
//! approach's cohort.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::pipeline::{Money, PipelineResult};
use crate::population::Population;
use crate::Result;

/// What a screening approach produced for one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub approach: String,
    /// Flagged as at risk, per individual.
    pub predicted: Vec<bool>,
    /// Membership of the cohort the approach reports on, per individual.
    pub cohort: Vec<bool>,
    /// Individuals evaluated at least once.
    pub evaluated: usize,
    pub evaluations: u64,
    pub spend: Money,
}

/// Which final-cohort members count as flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Every member of the final cohort.
    #[serde(rename = "MAB")]
    Mab,
    /// Final-cohort members that some expert rated severe.
    #[serde(rename = "MAB*")]
    MabStar,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mab => "MAB",
            Mode::MabStar => "MAB*",
        }
    }
}

impl PipelineResult {
    /// Outcome under `mode`; the cohort is everyone the pipeline evaluated.
    pub fn outcome(&self, mode: Mode) -> Outcome {
        let n = self.u_hat.len();
        let mut predicted = vec![false; n];
        for &i in self.final_cohort() {
            predicted[i] = match mode {
                Mode::Mab => true,
                Mode::MabStar => self.expert_severe[i],
            };
        }
        Outcome {
            approach: mode.name().to_string(),
            predicted,
            cohort: self.evaluated.clone(),
            evaluated: self.evaluated.iter().filter(|&&e| e).count(),
            evaluations: self.pulls(),
            spend: self.spend(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// Metrics of one outcome. Undefined ratios (zero denominators) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub population: Confusion,
    pub cohort: Confusion,
    pub pop_sensitivity: Option<f64>,
    pub cohort_sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub evaluated: usize,
    pub spend: Money,
}

pub fn evaluate(outcome: &Outcome, pop: &Population) -> Metrics {
    let mut population = Confusion::default();
    let mut cohort = Confusion::default();
    for (i, ind) in pop.individuals.iter().enumerate() {
        let Some(truth) = ind.truth else { continue };
        let positive = truth == crate::RiskLabel::Severe;
        population.add(positive, outcome.predicted[i]);
        if outcome.cohort[i] {
            cohort.add(positive, outcome.predicted[i]);
        }
    }
    Metrics {
        population,
        cohort,
        pop_sensitivity: population.sensitivity(),
        cohort_sensitivity: cohort.sensitivity(),
        precision: cohort.precision(),
        specificity: cohort.specificity(),
        evaluated: outcome.evaluated,
        spend: outcome.spend,
    }
}

pub fn metrics(result: &PipelineResult, pop: &Population, mode: Mode) -> Metrics {
    evaluate(&result.outcome(mode), pop)
}

/// Mean and sample standard deviation of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Spread {
    pub fn of<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<Spread> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Spread {
            mean,
            sd,
            count: v.len(),
        })
    }

    /// `mean±2sd`, or the bare mean when there is no spread.
    pub fn cell(spread: Option<Spread>, decimals: usize) -> String {
        match spread {
            None => "undefined".into(),
            Some(s) if s.sd == 0.0 => format!("{:.*}", decimals, s.mean),
            Some(s) => format!("{:.*}±{:.*}", decimals, s.mean, decimals, 2.0 * s.sd),
        }
    }
}

/// One approach's metrics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub approach: String,
    pub budget: Option<Money>,
    pub seeds: usize,
    pub evaluated: Option<Spread>,
    pub pop_sensitivity: Option<Spread>,
    pub cohort_sensitivity: Option<Spread>,
    pub precision: Option<Spread>,
    pub specificity: Option<Spread>,
    pub tp: Option<Spread>,
    pub fp: Option<Spread>,
    pub fn_: Option<Spread>,
    pub tn: Option<Spread>,
}

pub fn summarize(approach: &str, budget: Option<Money>, runs: &[Metrics]) -> Summary {
    let count = |f: fn(&Confusion) -> usize| Spread::of(runs.iter().map(|m| Some(f(&m.cohort) as f64)));
    Summary {
        approach: approach.to_string(),
        budget,
        seeds: runs.len(),
        evaluated: Spread::of(runs.iter().map(|m| Some(m.evaluated as f64))),
        pop_sensitivity: Spread::of(runs.iter().map(|m| m.pop_sensitivity)),
        cohort_sensitivity: Spread::of(runs.iter().map(|m| m.cohort_sensitivity)),
        precision: Spread::of(runs.iter().map(|m| m.precision)),
        specificity: Spread::of(runs.iter().map(|m| m.specificity)),
        tp: count(|c| c.tp),
        fp: count(|c| c.fp),
        fn_: count(|c| c.fn_),
        tn: count(|c| c.tn),
    }
}

pub const RESULTS_HEADER: &str = "approach,budget,evaluated,pop_sensitivity,cohort_sensitivity,precision,specificity,tp,fp,fn,tn";

pub fn write_results_csv<W: Write>(mut out: W, rows: &[Summary]) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        let budget = r.budget.map_or_else(|| "-".to_string(), |b| b.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.approach,
            budget,
            Spread::cell(r.evaluated, 1),
            Spread::cell(r.pop_sensitivity, 3),
            Spread::cell(r.cohort_sensitivity, 3),
            Spread::cell(r.precision, 3),
            Spread::cell(r.specificity, 3),
            Spread::cell(r.tp, 1),
            Spread::cell(r.fp, 1),
            Spread::cell(r.fn_, 1),
            Spread::cell(r.tn, 1),
        )?;
    }
    Ok(())
}
