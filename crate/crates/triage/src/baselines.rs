//! Reference screening procedures without bandit allocation.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use sbcb_core::rng::stream;

use crate::label::RiskLabel;
use crate::metrics::Outcome;
use crate::pipeline::{Money, STAGE_COSTS};
use crate::population::{Population, Stage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    /// Four expert evaluations of everyone, consensus label.
    FourExperts,
    /// One randomly chosen expert per individual.
    OneExpert,
    /// Four experts on a random cohort.
    FourExpertsSub,
    /// One random expert per member of a random cohort.
    OneExpertSub,
    /// Classifier prediction for everyone.
    NlpFull,
    /// Classifier prediction for a random cohort.
    NlpSub,
    /// The `k` individuals with the highest predicted probability of severe risk.
    NlpTopK,
    /// `NlpTopK`, then one random expert per member.
    NlpTopKOneExpertSub,
}

impl Baseline {
    pub const ALL: [Baseline; 8] = [
        Baseline::FourExperts,
        Baseline::OneExpert,
        Baseline::FourExpertsSub,
        Baseline::OneExpertSub,
        Baseline::NlpFull,
        Baseline::NlpSub,
        Baseline::NlpTopK,
        Baseline::NlpTopKOneExpertSub,
    ];

    fn base_name(self) -> &'static str {
        match self {
            Baseline::FourExperts => "4Experts",
            Baseline::OneExpert => "1Expert",
            Baseline::FourExpertsSub => "4Experts-Sub",
            Baseline::OneExpertSub => "1Expert-Sub",
            Baseline::NlpFull => "NLP-Full",
            Baseline::NlpSub => "NLP-Sub",
            Baseline::NlpTopK => "NLP-Top-k",
            Baseline::NlpTopKOneExpertSub => "NLP-Top-k+1Expert-Sub",
        }
    }

    /// Display name with `k` filled in, e.g. `NLP-Top-100`.
    pub fn label(self, params: &BaselineParams) -> String {
        self.base_name().replace("-k", &format!("-{}", params.top_k))
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base_name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
        Baseline::ALL
            .into_iter()
            .find(|b| b.base_name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::UnknownBaseline(s.to_string()))
    }
}

impl Serialize for BaselineName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0.base_name())
    }
}

impl<'de> Deserialize<'de> for BaselineName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(BaselineName).map_err(serde::de::Error::custom)
    }
}

/// A [`Baseline`] that (de)serializes by its display name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineName(pub Baseline);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Size of the random cohort for the `-Sub` baselines.
    pub sub_size: usize,
    pub top_k: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { sub_size: 100, top_k: 100 }
    }
}

fn expert_label<R: Rng + ?Sized>(pop: &Population, i: usize, rng: &mut R) -> Option<RiskLabel> {
    let ind = &pop.individuals[i];
    let pick = match ind.recorded(Stage::Expert) {
        Some(0) => return None,
        Some(len) => rng.random_range(0..len),
        None => 0,
    };
    ind.observe(Stage::Expert, pick, rng)
}

fn four_expert_label<R: Rng + ?Sized>(pop: &Population, i: usize, rng: &mut R) -> Option<RiskLabel> {
    let labels: Vec<RiskLabel> = (0..4).filter_map(|p| pop.individuals[i].observe(Stage::Expert, p, rng)).collect();
    RiskLabel::consensus(&labels)
}

/// Runs a baseline. Random cohorts are drawn without replacement.
pub fn run_baseline(baseline: Baseline, pop: &Population, params: &BaselineParams, seed: u64) -> Result<Outcome> {
    let n = pop.len();
    if params.sub_size > n || params.top_k > n {
        return Err(Error::Config(format!(
            "cohort sizes (sub {}, top-k {}) exceed the population {n}",
            params.sub_size, params.top_k
        )));
    }
    let mut rng = stream(seed, 0, 0, "triage-baseline");
    let everyone: Vec<usize> = (0..n).collect();
    let random_cohort = |rng: &mut sbcb_core::rng::SimRng| {
        let mut c = sample(rng, n, params.sub_size).into_vec();
        c.sort_unstable();
        c
    };
    let top_k = || {
        let mut order = everyone.clone();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&pop.individuals[a], &pop.individuals[b]);
            pb.machine[3].total_cmp(&pa.machine[3]).then(pa.id.cmp(&pb.id))
        });
        order.truncate(params.top_k);
        order
    };

    let (cohort, evaluated, per_eval, evals_each): (Vec<usize>, usize, Money, u64) = match baseline {
        Baseline::FourExperts => (everyone.clone(), n, STAGE_COSTS[2], 4),
        Baseline::OneExpert => (everyone.clone(), n, STAGE_COSTS[2], 1),
        Baseline::FourExpertsSub => (random_cohort(&mut rng), params.sub_size, STAGE_COSTS[2], 4),
        Baseline::OneExpertSub => (random_cohort(&mut rng), params.sub_size, STAGE_COSTS[2], 1),
        Baseline::NlpFull => (everyone.clone(), n, STAGE_COSTS[0], 1),
        Baseline::NlpSub => (random_cohort(&mut rng), params.sub_size, STAGE_COSTS[0], 1),
        Baseline::NlpTopK => (top_k(), n, STAGE_COSTS[0], 0),
        Baseline::NlpTopKOneExpertSub => (top_k(), n, STAGE_COSTS[2], 1),
    };

    let mut predicted = vec![false; n];
    for &i in &cohort {
        predicted[i] = match baseline {
            Baseline::FourExperts | Baseline::FourExpertsSub => four_expert_label(pop, i, &mut rng) == Some(RiskLabel::Severe),
            Baseline::OneExpert | Baseline::OneExpertSub | Baseline::NlpTopKOneExpertSub => {
                expert_label(pop, i, &mut rng) == Some(RiskLabel::Severe)
            }
            Baseline::NlpFull | Baseline::NlpSub => pop.individuals[i].machine_label() == RiskLabel::Severe,
            Baseline::NlpTopK => true,
        };
    }

    let mut evaluations = evals_each * cohort.len() as u64;
    let mut spend = per_eval * evaluations;
    if matches!(baseline, Baseline::NlpTopK | Baseline::NlpTopKOneExpertSub) {
        evaluations += n as u64;
        spend = spend + STAGE_COSTS[0] * n as u64;
    }
    let mut in_cohort = vec![false; n];
    for &i in &cohort {
        in_cohort[i] = true;
    }
    Ok(Outcome {
        approach: baseline.label(params),
        predicted,
        cohort: in_cohort,
        evaluated,
        evaluations,
        spend,
    })
}
