//! Replicated comparisons of the pipeline against baselines.
//!
//! Replicate `r` synthesizes its own population and runs every approach on
//! it with a seed derived from `(master_seed, r)`, so approaches are compared
//! on the same individuals and results do not depend on the thread count.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sbcb_core::rng::stream;

use crate::baselines::{run_baseline, Baseline, BaselineName, BaselineParams};
use crate::metrics::{evaluate, summarize, Metrics, Mode, Summary};
use crate::pipeline::{budget_split, default_stages, run_pipeline, AllocationScheme, Money, PipelineConfig, Policy, DEFAULT_KEEP};
use crate::population::{synth_population, PopulationSpec};
use crate::{Encoding, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub population: PopulationSpec,
    /// Total human-stage budget in dollars (`T_2 + T_3`).
    pub budget: f64,
    pub scheme: AllocationScheme,
    /// Explicit `(T_2, T_3)` in dollars; overrides `budget` and `scheme`.
    pub stage_budgets: Option<[f64; 2]>,
    pub keep: [usize; 3],
    pub policy: Policy,
    pub ucb_alpha: f64,
    pub encoding: Encoding,
    pub modes: Vec<Mode>,
    pub baselines: Vec<BaselineName>,
    pub baseline_params: BaselineParams,
    pub seeds: usize,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            population: PopulationSpec::default(),
            budget: 553.0,
            scheme: AllocationScheme::More3,
            stage_budgets: None,
            keep: DEFAULT_KEEP,
            policy: Policy::RoundRobin,
            ucb_alpha: 3.0,
            encoding: Encoding::Linear,
            modes: vec![Mode::Mab, Mode::MabStar],
            baselines: Baseline::ALL.into_iter().map(BaselineName).collect(),
            baseline_params: BaselineParams::default(),
            seeds: 100,
            master_seed: 0,
        }
    }
}

impl StudyConfig {
    /// `(T_2, T_3)` in effect.
    pub fn split(&self) -> Result<(Money, Money)> {
        match self.stage_budgets {
            Some([t2, t3]) => {
                if !(t2 >= 0.0 && t3 >= 0.0 && t2.is_finite() && t3.is_finite()) {
                    return Err(Error::Config(format!("stage budgets must be non-negative, got {t2}, {t3}")));
                }
                Ok((Money::from_dollars(t2), Money::from_dollars(t3)))
            }
            None => budget_split(Money::from_dollars(self.budget), self.scheme),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let (t2, t3) = self.split()?;
        let mut config = PipelineConfig::new(default_stages(self.population.n, t2, t3, self.keep));
        config.policy = self.policy;
        config.ucb_alpha = self.ucb_alpha;
        config.encoding = self.encoding;
        config.validate(self.population.n)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.pipeline()?;
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be positive".into()));
        }
        let n = self.population.n;
        let p = &self.baseline_params;
        if !self.baselines.is_empty() && (p.sub_size > n || p.top_k > n) {
            return Err(Error::Config(format!("baseline cohort sizes exceed the population {n}")));
        }
        Ok(())
    }
}

/// Metrics of every approach for one replicate, in `approaches` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub metrics: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub approaches: Vec<String>,
    pub pipeline_budget: Money,
    pub replicates: Vec<Replicate>,
    pub summaries: Vec<Summary>,
    /// Configuration warnings from the first replicate.
    pub warnings: Vec<String>,
}

fn replicate_seed(master: u64, index: usize) -> u64 {
    stream(master, index as u64, 0, "triage-replicate").next_u64()
}

pub fn run_study(config: &StudyConfig) -> Result<Study> {
    config.validate()?;
    let pipeline = config.pipeline()?;
    let pipeline_budget: Money = pipeline.stages.iter().skip(1).map(|s| s.budget).sum();
    let params = config.baseline_params;
    let mut approaches: Vec<String> = config.modes.iter().map(|m| m.name().to_string()).collect();
    approaches.extend(config.baselines.iter().map(|b| b.0.label(&params)));

    let runs: Vec<(Replicate, Vec<String>)> = (0..config.seeds)
        .into_par_iter()
        .map(|index| {
            let seed = replicate_seed(config.master_seed, index);
            let pop = synth_population(&config.population, seed)?;
            let result = run_pipeline(&pop, &pipeline, seed)?;
            let mut metrics: Vec<Metrics> = config.modes.iter().map(|&m| evaluate(&result.outcome(m), &pop)).collect();
            for b in &config.baselines {
                metrics.push(evaluate(&run_baseline(b.0, &pop, &params, seed)?, &pop));
            }
            Ok((Replicate { index, metrics }, result.warnings))
        })
        .collect::<Result<_>>()?;

    let warnings = runs.first().map(|r| r.1.clone()).unwrap_or_default();
    let replicates: Vec<Replicate> = runs.into_iter().map(|r| r.0).collect();
    let summaries = approaches
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let per_seed: Vec<Metrics> = replicates.iter().map(|r| r.metrics[a].clone()).collect();
            let budget = (a < config.modes.len()).then_some(pipeline_budget);
            summarize(name, budget.or(Some(per_seed[0].spend)), &per_seed)
        })
        .collect();
    Ok(Study {
        approaches,
        pipeline_budget,
        replicates,
        summaries,
        warnings,
    })
}

/// Mean population sensitivity of approach `a` over the replicates.
pub fn mean_pop_sensitivity(study: &Study, approach: &str) -> Option<f64> {
    let a = study.approaches.iter().position(|n| n == approach)?;
    summarize(approach, None, &study.replicates.iter().map(|r| r.metrics[a].clone()).collect::<Vec<_>>())
        .pop_sensitivity
        .map(|s| s.mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = StudyConfig::default();
        c.validate().unwrap();
        assert_eq!(c.split().unwrap(), (Money(18_000), Money(535_000)));
    }

    #[test]
    fn study_is_reproducible_and_labelled() {
        let config = StudyConfig {
            seeds: 4,
            ..StudyConfig::default()
        };
        let a = run_study(&config).unwrap();
        let b = run_study(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.approaches[0], "MAB");
        assert!(a.approaches.contains(&"NLP-Top-100".to_string()));
        assert_eq!(a.summaries.len(), a.approaches.len());
        assert_eq!(a.pipeline_budget, Money(553_000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<StudyConfig>(r#"{"budgett": 1}"#);
        assert!(err.is_err());
        let ok: StudyConfig = serde_json::from_str(r#"{"baselines": ["1Expert-Sub"], "modes": ["MAB*"]}"#).unwrap();
        assert_eq!(ok.baselines, vec![BaselineName(Baseline::OneExpertSub)]);
        assert_eq!(ok.modes, vec![Mode::MabStar]);
    }
}
