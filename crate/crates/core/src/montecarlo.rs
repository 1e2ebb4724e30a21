//! Monte Carlo experiment harness: randomized environments, per-environment
//! error and regret estimates, the bound-tightness sweep, the schedule
//! comparison and pseudo-regret curves.
//!
//! Environments are processed in parallel on the ambient rayon pool. Each
//! (environment, run) pair draws from its own stream (see [`crate::rng`]) and
//! results are collected in index order, so output does not depend on the
//! number of workers.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::bounds::{thm1_bound, thm2_bounds, thm3_bounds, thm4_bounds, ArmOrdering, BoundOptions, BoundReport};
use crate::divergence::PsiFamily;
use crate::env::{gaps, instantiate, state_visits, Environment, EnvironmentSpec, GapReport, RewardFamily, StateOrder};
use crate::rng::{derive_seed, purpose, stream};
use crate::strategies::{eba_recommend, simulate, sr_schedule, successive_rejects, SbUcb, ScheduleKind, SrSchedule, UniformAllocation};
use crate::{Error, Result};

/// Generator and run settings shared by the sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub num_envs: usize,
    pub runs_per_env: usize,
    /// Fixed horizon; `None` means `horizon_factor * K * S`.
    pub horizon: Option<usize>,
    pub horizon_factor: usize,
    /// Inclusive range of arm counts.
    pub arms: [usize; 2],
    /// Inclusive range of state counts.
    pub states: [usize; 2],
    /// Open lower end, exclusive upper end: `sigma2` in `(lo, hi)`.
    pub sigma2: [f64; 2],
    pub state_order: StateOrder,
    pub master_seed: u64,
    /// Schedules evaluated by the successive-rejects comparison.
    pub schedules: Vec<ScheduleKind>,
    pub bound_options: BoundOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            num_envs: 200,
            runs_per_env: 100,
            horizon: None,
            horizon_factor: 50,
            arms: [3, 10],
            states: [1, 10],
            sigma2: [0.0, 0.3],
            state_order: StateOrder::Iid,
            master_seed: 0,
            schedules: vec![ScheduleKind::Uniform, ScheduleKind::Reference],
            bound_options: BoundOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidSpec { field, reason });
        if self.runs_per_env == 0 {
            return bad("runs_per_env", "need at least one run".into());
        }
        if self.arms[0] < 2 || self.arms[0] > self.arms[1] {
            return bad("arms", format!("need 2 <= lo <= hi, got {:?}", self.arms));
        }
        if self.states[0] < 1 || self.states[0] > self.states[1] {
            return bad("states", format!("need 1 <= lo <= hi, got {:?}", self.states));
        }
        let [lo, hi] = self.sigma2;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return bad("sigma2", format!("need 0 <= lo < hi, got {:?}", self.sigma2));
        }
        if self.horizon == Some(0) || (self.horizon.is_none() && self.horizon_factor == 0) {
            return bad("horizon", "horizon must be positive".into());
        }
        if self.schedules.is_empty() {
            return bad("schedules", "need at least one schedule".into());
        }
        Ok(())
    }

    pub fn horizon_for(&self, arms: usize, states: usize) -> usize {
        self.horizon.unwrap_or(self.horizon_factor * arms * states)
    }
}

/// Draws environment `env_index` of a sweep: `K`, `S` uniform on their
/// ranges, `sigma2` uniform on `(lo, hi)`, `mu_i ~ Uniform[0, 1]`, Bernoulli pulls.
pub fn random_env(config: &SweepConfig, env_index: u64) -> EnvironmentSpec {
    let mut rng = stream(config.master_seed, env_index, 0, purpose::ENV_SPEC);
    let arms = rng.random_range(config.arms[0]..=config.arms[1]);
    let states = rng.random_range(config.states[0]..=config.states[1]);
    let [lo, hi] = config.sigma2;
    let sigma2 = loop {
        let v = rng.random_range(lo..hi);
        if v > 0.0 {
            break v;
        }
    };
    let mu = (0..arms).map(|_| rng.random::<f64>()).collect();
    let n = config.horizon_for(arms, states);
    let mut seq_rng = stream(config.master_seed, env_index, 0, purpose::STATES);
    EnvironmentSpec {
        arms,
        states,
        mu,
        sigma2,
        reward_family: RewardFamily::Bernoulli,
        state_sequence: config.state_order.generate(states, n, &mut seq_rng),
        seed: derive_seed(config.master_seed, env_index, 0, purpose::INSTANTIATE),
    }
}

/// Which best-arm identification procedure a run executes.
#[derive(Debug, Clone, PartialEq)]
pub enum BaiStrategy {
    UniformEba,
    SuccessiveRejects(SrSchedule),
}

/// Monte Carlo estimates of `e_n`, `e_hat_n`, `r_n`, `r_hat_n` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaiEstimate {
    pub runs: usize,
    pub e_hat: f64,
    pub e_hat_se: f64,
    pub e: f64,
    pub e_se: f64,
    pub r: f64,
    pub r_se: f64,
    pub r_hat: f64,
    pub r_hat_se: f64,
}

/// Binomial standard error `sqrt(p (1 - p) / runs)`.
pub fn proportion_se(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).sqrt()
}

/// Mean and standard error (sample sd over `sqrt(runs)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `strategy` `runs` times and scores each recommendation against the
/// global best `j*` and the empiric best `j_hat*`.
///
/// Per run, `r = mu_{j*} - mu_J` and `r_hat = m_hat* - mean_s m_{J,s}` for the
/// recommended arm `J`, computed from true means.
pub fn estimate_bai(env: &Environment, strategy: &BaiStrategy, runs: usize, master_seed: u64, env_index: u64) -> Result<BaiEstimate> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let g = gaps(env);
    let tag = match strategy {
        BaiStrategy::UniformEba => purpose::BAI_RUN,
        BaiStrategy::SuccessiveRejects(_) => purpose::SR_RUN,
    };
    let mut wrong_global = 0usize;
    let mut wrong_empiric = 0usize;
    let mut r = Vec::with_capacity(runs);
    let mut r_hat = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = stream(master_seed, env_index, run as u64, tag);
        let pick = match strategy {
            BaiStrategy::UniformEba => {
                let mut alloc = UniformAllocation::new(env.arms(), env.states());
                let stats = simulate(env, &mut alloc, env.horizon(), &mut rng, |_| {})?;
                eba_recommend(&stats)?
            }
            BaiStrategy::SuccessiveRejects(schedule) => successive_rejects(env, schedule, &mut rng, false)?.recommended,
        };
        wrong_global += usize::from(pick != g.j_star);
        wrong_empiric += usize::from(pick != g.j_hat_star);
        r.push(env.spec.mu[g.j_star] - env.spec.mu[pick]);
        r_hat.push(g.m_hat_star() - g.state_average[pick]);
    }
    let e = wrong_global as f64 / runs as f64;
    let e_hat = wrong_empiric as f64 / runs as f64;
    let (r_mean, r_se) = mean_se(&r);
    let (r_hat_mean, r_hat_se) = mean_se(&r_hat);
    Ok(BaiEstimate {
        runs,
        e_hat,
        e_hat_se: proportion_se(e_hat, runs),
        e,
        e_se: proportion_se(e, runs),
        r: r_mean,
        r_se,
        r_hat: r_hat_mean,
        r_hat_se,
    })
}

/// `est <= clamped + 3 se`, with a little slack for rounding.
pub fn within_bound(estimate: f64, se: f64, bound: &BoundReport) -> bool {
    estimate <= bound.clamped + 3.0 * se + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub env_index: u64,
    pub arms: usize,
    pub states: usize,
    pub n: usize,
    pub min_state_visits: usize,
    pub delta_sigma_min: f64,
    pub estimate: Option<BaiEstimate>,
    /// Statements 2.1, 2.2, 3.1, 3.2 in that order.
    pub bounds: Vec<BoundReport>,
    pub error: Option<String>,
}

impl SweepRecord {
    /// Whether each of 2.1, 2.2, 3.1, 3.2 holds within three standard errors.
    pub fn checks(&self) -> Option<[bool; 4]> {
        let est = self.estimate.as_ref()?;
        let b = &self.bounds;
        Some([
            within_bound(est.e, est.e_se, &b[0]),
            within_bound(est.e_hat, est.e_hat_se, &b[1]),
            within_bound(est.r, est.r_se, &b[2]),
            within_bound(est.r_hat, est.r_hat_se, &b[3]),
        ])
    }
}

fn min_visits(env: &Environment) -> usize {
    state_visits(&env.spec.state_sequence, env.states(), env.horizon())
        .into_iter()
        .min()
        .unwrap_or(0)
}

fn tightness_row(config: &SweepConfig, env_index: u64) -> SweepRecord {
    let spec = random_env(config, env_index);
    let mut record = SweepRecord {
        env_index,
        arms: spec.arms,
        states: spec.states,
        n: spec.horizon(),
        min_state_visits: state_visits(&spec.state_sequence, spec.states, spec.horizon())
            .into_iter()
            .min()
            .unwrap_or(0),
        delta_sigma_min: f64::NAN,
        estimate: None,
        bounds: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<(GapReport, BaiEstimate, Vec<BoundReport>)> {
        let env = instantiate(&spec)?;
        let g = gaps(&env);
        let n = env.horizon();
        let (b21, b22) = thm2_bounds(&env, n, &PsiFamily::BoundedUnit, config.bound_options)?;
        let (b31, b32) = thm3_bounds(&env, n, config.bound_options)?;
        let est = estimate_bai(&env, &BaiStrategy::UniformEba, config.runs_per_env, config.master_seed, env_index)?;
        Ok((g, est, vec![b21, b22, b31, b32]))
    })();
    match result {
        Ok((g, est, bounds)) => {
            record.delta_sigma_min = g.delta_sigma_min();
            record.estimate = Some(est);
            record.bounds = bounds;
        }
        Err(e) => {
            log::warn!("environment {env_index}: {e}");
            record.error = Some(e.to_string());
        }
    }
    record
}

/// Uniform allocation + EBA on `num_envs` random environments, with the
/// closed-form bounds of statements 2.1, 2.2, 3.1 and 3.2 for each.
pub fn tightness_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    Ok((0..config.num_envs as u64)
        .into_par_iter()
        .map(|i| tightness_row(config, i))
        .collect())
}

pub const TIGHTNESS_HEADER: &str =
    "env_index,K,S,n,min_state_visits,delta_sigma_min,e_hat,e_hat_se,e,e_se,r,r_se,r_hat,r_hat_se,b21,b22,b31,b32";

pub fn write_tightness_csv<W: Write>(mut out: W, records: &[SweepRecord]) -> Result<()> {
    writeln!(out, "{TIGHTNESS_HEADER}")?;
    for rec in records {
        write!(
            out,
            "{},{},{},{},{},{}",
            rec.env_index, rec.arms, rec.states, rec.n, rec.min_state_visits, rec.delta_sigma_min
        )?;
        match &rec.estimate {
            Some(e) => write!(
                out,
                ",{},{},{},{},{},{},{},{}",
                e.e_hat, e.e_hat_se, e.e, e.e_se, e.r, e.r_se, e.r_hat, e.r_hat_se
            )?,
            None => write!(out, "{}", ",NaN".repeat(8))?,
        }
        if rec.bounds.len() == 4 {
            for b in &rec.bounds {
                write!(out, ",{}", b.raw)?;
            }
        } else {
            write!(out, "{}", ",NaN".repeat(4))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Fraction of environments satisfying a statement, per statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityRate {
    pub statement: String,
    pub satisfied: usize,
    pub evaluated: usize,
    pub rate: f64,
}

impl ValidityRate {
    fn new(statement: &str, satisfied: usize, evaluated: usize) -> Self {
        Self {
            statement: statement.to_string(),
            satisfied,
            evaluated,
            rate: if evaluated == 0 { f64::NAN } else { satisfied as f64 / evaluated as f64 },
        }
    }
}

pub fn tightness_validity(records: &[SweepRecord]) -> Vec<ValidityRate> {
    let checks: Vec<[bool; 4]> = records.iter().filter_map(SweepRecord::checks).collect();
    ["thm2.1", "thm2.2", "thm3.1", "thm3.2"]
        .iter()
        .enumerate()
        .map(|(j, name)| ValidityRate::new(name, checks.iter().filter(|c| c[j]).count(), checks.len()))
        .collect()
}

/// Successive-rejects results for one schedule on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub kind: ScheduleKind,
    pub ends: Vec<usize>,
    pub estimate: BaiEstimate,
    pub b41: BoundReport,
    pub b42: BoundReport,
}

impl ScheduleResult {
    /// Whether statements 4.1 and 4.2 hold within three standard errors.
    pub fn checks(&self) -> [bool; 2] {
        [
            within_bound(self.estimate.e_hat, self.estimate.e_hat_se, &self.b41),
            within_bound(self.estimate.e, self.estimate.e_se, &self.b42),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrCompareRow {
    pub env_index: u64,
    pub arms: usize,
    pub states: usize,
    pub n: usize,
    pub min_state_visits: usize,
    pub results: Vec<ScheduleResult>,
    pub error: Option<String>,
}

impl SrCompareRow {
    pub fn result(&self, kind: ScheduleKind) -> Option<&ScheduleResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

/// Aggregate paired comparison of the uniform and reference schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSummary {
    pub envs: usize,
    pub mean_e_hat_uniform: f64,
    pub mean_e_hat_reference: f64,
    /// Mean of `e_hat(reference) - e_hat(uniform)`.
    pub mean_difference: f64,
    /// Pairs with the reference schedule strictly worse.
    pub reference_worse: usize,
    pub uniform_worse: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for "reference errs more often".
    pub sign_test_p: f64,
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrComparison {
    pub rows: Vec<SrCompareRow>,
    pub summary: SrSummary,
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_upper(k: usize, n: usize) -> f64 {
    if n == 0 || k == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("p = 0.5 is valid");
    b.sf(k as u64 - 1)
}

fn sr_row(config: &SweepConfig, env_index: u64) -> SrCompareRow {
    let spec = random_env(config, env_index);
    let mut row = SrCompareRow {
        env_index,
        arms: spec.arms,
        states: spec.states,
        n: spec.horizon(),
        min_state_visits: 0,
        results: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<Vec<ScheduleResult>> {
        let env = instantiate(&spec)?;
        row.min_state_visits = min_visits(&env);
        let ordering = ArmOrdering::from_gaps(&gaps(&env));
        config
            .schedules
            .iter()
            .map(|&kind| {
                let schedule = sr_schedule(kind, env.arms(), env.horizon())?;
                let (b42, b41) = thm4_bounds(&env, &schedule, &ordering)?;
                let strategy = BaiStrategy::SuccessiveRejects(schedule.clone());
                let estimate = estimate_bai(&env, &strategy, config.runs_per_env, config.master_seed, env_index)?;
                Ok(ScheduleResult {
                    kind,
                    ends: schedule.ends,
                    estimate,
                    b41,
                    b42,
                })
            })
            .collect()
    })();
    match result {
        Ok(results) => row.results = results,
        Err(e) => {
            log::warn!("environment {env_index}: {e}");
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Successive rejects under each configured schedule on `num_envs` random
/// environments. Both schedules replay the same per-run random stream.
pub fn sr_compare(config: &SweepConfig) -> Result<SrComparison> {
    config.validate()?;
    let rows: Vec<SrCompareRow> = (0..config.num_envs as u64)
        .into_par_iter()
        .map(|i| sr_row(config, i))
        .collect();
    let summary = summarize_sr(&rows);
    Ok(SrComparison { rows, summary })
}

pub fn summarize_sr(rows: &[SrCompareRow]) -> SrSummary {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let u = r.result(ScheduleKind::Uniform)?;
            let f = r.result(ScheduleKind::Reference)?;
            Some((u.estimate.e_hat, f.estimate.e_hat))
        })
        .collect();
    let envs = pairs.len();
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| {
        if envs == 0 {
            0.0
        } else {
            pairs.iter().map(f).sum::<f64>() / envs as f64
        }
    };
    let mean_u = mean(&|p| p.0);
    let mean_r = mean(&|p| p.1);
    let mean_d = mean(&|p| p.1 - p.0);
    let reference_worse = pairs.iter().filter(|p| p.1 > p.0).count();
    let uniform_worse = pairs.iter().filter(|p| p.1 < p.0).count();
    SrSummary {
        envs,
        mean_e_hat_uniform: mean_u,
        mean_e_hat_reference: mean_r,
        mean_difference: mean_d,
        reference_worse,
        uniform_worse,
        ties: envs - reference_worse - uniform_worse,
        sign_test_p: sign_test_upper(reference_worse, reference_worse + uniform_worse),
        direction: if mean_u <= mean_r {
            "uniform_leq_reference".into()
        } else {
            "uniform_gt_reference".into()
        },
    }
}

pub const SR_COMPARE_HEADER: &str = "env_index,K,S,n,e_hat_uniform,e_hat_reference,b41_uniform,b41_reference";

pub fn write_sr_compare_csv<W: Write>(mut out: W, rows: &[SrCompareRow]) -> Result<()> {
    writeln!(out, "{SR_COMPARE_HEADER}")?;
    for r in rows {
        write!(out, "{},{},{},{}", r.env_index, r.arms, r.states, r.n)?;
        let pick = |kind| r.result(kind);
        let (u, f) = (pick(ScheduleKind::Uniform), pick(ScheduleKind::Reference));
        let cell = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        writeln!(
            out,
            ",{},{},{},{}",
            cell(u.map(|x| x.estimate.e_hat)),
            cell(f.map(|x| x.estimate.e_hat)),
            cell(u.map(|x| x.b41.raw)),
            cell(f.map(|x| x.b41.raw)),
        )?;
    }
    Ok(())
}

pub fn sr_validity(rows: &[SrCompareRow]) -> Vec<ValidityRate> {
    let mut out = Vec::new();
    for kind in [ScheduleKind::Uniform, ScheduleKind::Reference] {
        let checks: Vec<[bool; 2]> = rows.iter().filter_map(|r| r.result(kind)).map(ScheduleResult::checks).collect();
        for (j, name) in ["thm4.1", "thm4.2"].iter().enumerate() {
            out.push(ValidityRate::new(
                &format!("{name}/{}", kind.name()),
                checks.iter().filter(|c| c[j]).count(),
                checks.len(),
            ));
        }
    }
    out
}

/// Mean pseudo-regret of SB-UCB at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub bound: BoundReport,
}

impl RegretPoint {
    pub fn within_bound(&self) -> bool {
        within_bound(self.mean, self.se, &self.bound)
    }
}

/// SB-UCB pseudo-regret `sum_t Delta^m_{I_t, s_t}` at each checkpoint,
/// averaged over `runs`, alongside the SB-UCB regret bound.
pub fn estimate_pseudoregret(
    env: &Environment,
    alpha: f64,
    family: &PsiFamily,
    checkpoints: &[usize],
    runs: usize,
    master_seed: u64,
    env_index: u64,
) -> Result<Vec<RegretPoint>> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let mut marks = checkpoints.to_vec();
    marks.sort_unstable();
    marks.dedup();
    let last = match marks.last() {
        Some(&l) => l,
        None => return Ok(Vec::new()),
    };
    if marks[0] == 0 || last > env.horizon() {
        return Err(Error::OutOfRange {
            what: "checkpoint",
            value: if marks[0] == 0 { 0 } else { last },
            limit: env.horizon() + 1,
        });
    }
    let g = gaps(env);
    let per_run: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|run| -> Result<Vec<f64>> {
            let mut rng = stream(master_seed, env_index, run, purpose::REGRET_RUN);
            let mut alloc = SbUcb::new(alpha, *family)?;
            let mut regret = 0.0;
            let mut at = Vec::with_capacity(marks.len());
            let mut next = 0;
            simulate(env, &mut alloc, last, &mut rng, |step| {
                regret += g.delta_m[(step.arm, step.state)];
                if next < marks.len() && step.t == marks[next] {
                    at.push(regret);
                    next += 1;
                }
            })?;
            Ok(at)
        })
        .collect::<Result<_>>()?;
    marks
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let column: Vec<f64> = per_run.iter().map(|r| r[j]).collect();
            let (mean, se) = mean_se(&column);
            Ok(RegretPoint {
                n,
                mean,
                se,
                bound: thm1_bound(env, alpha, n, family)?,
            })
        })
        .collect()
}

pub const REGRET_HEADER: &str = "n,regret,regret_se,bound_raw,bound_clamped";

pub fn write_regret_csv<W: Write>(mut out: W, points: &[RegretPoint]) -> Result<()> {
    writeln!(out, "{REGRET_HEADER}")?;
    for p in points {
        writeln!(out, "{},{},{},{},{}", p.n, p.mean, p.se, p.bound.raw, p.bound.clamped)?;
    }
    Ok(())
}
