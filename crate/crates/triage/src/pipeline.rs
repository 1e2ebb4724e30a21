//! The three-stage screening loop.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use sbcb_core::divergence::PsiFamily;
use sbcb_core::rng::stream;
use sbcb_core::strategies::{sb_ucb_select, PullStats};

use crate::label::{Encoding, RiskLabel};
use crate::population::{Population, Stage};
use crate::{Error, Result};

/// An amount in milli-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub fn from_dollars(dollars: f64) -> Self {
        Money((dollars * 1000.0).round() as u64)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn milli(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (whole, frac) = (self.0 / 1000, self.0 % 1000);
        if frac % 10 == 0 {
            write!(f, "${whole}.{:02}", frac / 10)
        } else {
            write!(f, "${whole}.{frac:03}")
        }
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Mul<u64> for Money {
    type Output = Money;
    fn mul(self, rhs: u64) -> Money {
        Money(self.0 * rhs)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

/// Cost per evaluation at each stage: $0.001, $0.09, $5.35.
pub const STAGE_COSTS: [Money; 3] = [Money(1), Money(90), Money(5350)];
/// Evidence weight of one evaluation at each stage.
pub const STAGE_GAINS: [f64; 3] = [1.0, 10.0, 100.0];
/// Cohort sizes passed on by each stage.
pub const DEFAULT_KEEP: [usize; 3] = [200, 100, 50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage: Stage,
    pub cost: Money,
    pub gain: f64,
    pub budget: Money,
    /// Survivors passed to the next stage (`k_i`).
    pub keep: usize,
}

/// How a total budget is divided between the non-expert and expert stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationScheme {
    #[default]
    More3,
    More2,
    Equal,
}

/// `(T_2, T_3)` for the tabulated totals of $553, $1,300 and $2,200.
///
/// At $553 there is no freedom: $18 covers one non-expert pass over 200
/// people and $535 one expert pass over 100, whatever the scheme.
pub fn budget_split(total: Money, scheme: AllocationScheme) -> Result<(Money, Money)> {
    use AllocationScheme::*;
    let d = |x: u64| Money(x * 1000);
    let split = match (total.0, scheme) {
        (553_000, _) => (d(18), d(535)),
        (1_300_000, More3) => (d(200), d(1100)),
        (1_300_000, More2) => (d(765), d(535)),
        (1_300_000, Equal) => (d(620), d(680)),
        (2_200_000, More3) => (d(300), d(1900)),
        (2_200_000, More2) => (d(1500), d(700)),
        (2_200_000, Equal) => (d(1100), d(1100)),
        _ => {
            return Err(Error::Config(format!(
                "no budget split tabulated for {total}; give stage budgets explicitly"
            )))
        }
    };
    Ok(split)
}

/// Stage specs with the default costs and gains. The classifier stage gets
/// exactly one evaluation per individual (`T_1 = n j_1`) on top of `T_2 + T_3`.
pub fn default_stages(n: usize, t2: Money, t3: Money, keep: [usize; 3]) -> [StageSpec; 3] {
    let budgets = [STAGE_COSTS[0] * n as u64, t2, t3];
    std::array::from_fn(|i| StageSpec {
        stage: Stage::ALL[i],
        cost: STAGE_COSTS[i],
        gain: STAGE_GAINS[i],
        budget: budgets[i],
        keep: keep[i],
    })
}

/// Within-stage choice of whom to evaluate next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Cycle through the survivors in id order.
    #[default]
    RoundRobin,
    /// SB-UCB index over the survivors (single state), encoded labels as rewards.
    Ucb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stages: [StageSpec; 3],
    pub policy: Policy,
    pub ucb_alpha: f64,
    pub encoding: Encoding,
}

impl PipelineConfig {
    pub fn new(stages: [StageSpec; 3]) -> Self {
        Self {
            stages,
            policy: Policy::RoundRobin,
            ucb_alpha: 3.0,
            encoding: Encoding::Linear,
        }
    }

    /// Cohort sizes must satisfy `n >= k_1 >= k_2 >= k_3 >= 1`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut prev = n;
        for s in &self.stages {
            if s.keep == 0 || s.keep > prev {
                return Err(Error::Config(format!(
                    "stage {} keeps {} but {} enter it; cohort sizes must shrink and stay positive",
                    s.stage.number(),
                    s.keep,
                    prev
                )));
            }
            if s.cost.0 == 0 {
                return Err(Error::Config(format!("stage {} has zero cost", s.stage.number())));
            }
            if !(s.gain > 0.0 && s.gain.is_finite()) {
                return Err(Error::Config(format!("stage {} gain must be positive", s.stage.number())));
            }
            prev = s.keep;
        }
        if self.policy == Policy::Ucb && (self.ucb_alpha.is_nan() || self.ucb_alpha <= 2.0) {
            return Err(Error::Config(format!("ucb_alpha must exceed 2, got {}", self.ucb_alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub entered: usize,
    pub pulls: u64,
    pub spend: Money,
    /// `(id, u_hat)` of every individual entering the stage, at stage end.
    pub estimates: Vec<(u64, f64)>,
    /// Population indices kept, best first.
    pub cohort: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub stages: Vec<StageReport>,
    /// Final `u_hat` per individual (0 if never observed).
    pub u_hat: Vec<f64>,
    /// Whether any expert evaluation of the individual reported severe risk.
    pub expert_severe: Vec<bool>,
    /// Individuals with at least one evaluation.
    pub evaluated: Vec<bool>,
    pub warnings: Vec<String>,
}

impl PipelineResult {
    pub fn final_cohort(&self) -> &[usize] {
        self.stages.last().map_or(&[], |s| s.cohort.as_slice())
    }

    pub fn spend(&self) -> Money {
        self.stages.iter().map(|s| s.spend).sum()
    }

    pub fn pulls(&self) -> u64 {
        self.stages.iter().map(|s| s.pulls).sum()
    }
}

struct Estimates {
    weighted: Vec<f64>,
    weight: Vec<f64>,
}

impl Estimates {
    fn u_hat(&self, i: usize) -> f64 {
        if self.weight[i] > 0.0 {
            self.weighted[i] / self.weight[i]
        } else {
            0.0
        }
    }
}

/// Runs the three stages on `pop`.
///
/// Each stage spends at most its budget in whole evaluations, updates
/// `u_hat` as the gain-weighted mean of encoded observations, and keeps the
/// top `k_i` by `u_hat` (ties to the lowest id).
pub fn run_pipeline(pop: &Population, config: &PipelineConfig, seed: u64) -> Result<PipelineResult> {
    let n = pop.len();
    config.validate(n)?;
    let mut rng = stream(seed, 0, 0, "triage-pipeline");
    let mut est = Estimates {
        weighted: vec![0.0; n],
        weight: vec![0.0; n],
    };
    let mut expert_severe = vec![false; n];
    let mut evaluated = vec![false; n];
    let mut pulls_of = vec![[0usize; 3]; n];
    let mut warnings = Vec::new();
    let mut survivors: Vec<usize> = (0..n).collect();
    survivors.sort_by_key(|&i| pop.individuals[i].id);
    let mut reports = Vec::with_capacity(3);

    for spec in &config.stages {
        let si = spec.stage as usize;
        let max_pulls = spec.budget.0 / spec.cost.0;
        if max_pulls == 0 {
            warnings.push(format!("stage {}: budget {} buys no evaluation; stage skipped", spec.stage.number(), spec.budget));
        } else if (max_pulls as usize) < survivors.len() {
            warnings.push(format!(
                "stage {}: budget covers {max_pulls} of {} survivors",
                spec.stage.number(),
                survivors.len()
            ));
        }

        let mut pull = |idx: usize, rng: &mut sbcb_core::rng::SimRng| -> Option<f64> {
            let ind = &pop.individuals[idx];
            let label = ind.observe(spec.stage, pulls_of[idx][si], rng);
            pulls_of[idx][si] += 1;
            evaluated[idx] = true;
            let label = label?;
            let value = config.encoding.encode(label);
            est.weighted[idx] += spec.gain * value;
            est.weight[idx] += spec.gain;
            if spec.stage == Stage::Expert && label == RiskLabel::Severe {
                expert_severe[idx] = true;
            }
            Some(value)
        };

        match config.policy {
            Policy::RoundRobin => {
                for c in 0..max_pulls as usize {
                    pull(survivors[c % survivors.len()], &mut rng);
                }
            }
            Policy::Ucb => {
                let mut stats = PullStats::new(survivors.len(), 1);
                for t in 1..=max_pulls {
                    let a = sb_ucb_select(&stats, 0, t, config.ucb_alpha, &PsiFamily::BoundedUnit)?;
                    let value = pull(survivors[a], &mut rng).unwrap_or(0.0);
                    stats.record(a, 0, value);
                }
            }
        }

        let mut ranked = survivors.clone();
        ranked.sort_by(|&a, &b| {
            est.u_hat(b)
                .total_cmp(&est.u_hat(a))
                .then(pop.individuals[a].id.cmp(&pop.individuals[b].id))
        });
        ranked.truncate(spec.keep);
        reports.push(StageReport {
            stage: spec.stage,
            entered: survivors.len(),
            pulls: max_pulls,
            spend: spec.cost * max_pulls,
            estimates: survivors.iter().map(|&i| (pop.individuals[i].id, est.u_hat(i))).collect(),
            cohort: ranked.clone(),
        });
        survivors = ranked;
        survivors.sort_by_key(|&i| pop.individuals[i].id);
    }

    for w in &warnings {
        log::debug!("{w}");
    }
    Ok(PipelineResult {
        stages: reports,
        u_hat: (0..n).map(|i| est.u_hat(i)).collect(),
        expert_severe,
        evaluated,
        warnings,
    })
}
