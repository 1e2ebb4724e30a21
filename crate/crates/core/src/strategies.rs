//! Allocation and recommendation strategies.
//!
//! A run is a single loop over `t = 1..=n`: the [`Allocation`] picks an arm
//! for the current state, the environment samples a reward, and
//! [`PullStats`] absorbs it. Recommendation ([`eba_recommend`]) reads the
//! final statistics; successive rejects carries its own recommendation.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::PsiFamily;
use crate::env::{sigma_count, Environment};
use crate::grid::Grid;
use crate::{Error, Result};

/// Per-(arm, state) pull counts `N_i^s(t)` and reward sums.
#[derive(Debug, Clone, PartialEq)]
pub struct PullStats {
    counts: Grid<u64>,
    sums: Grid<f64>,
    t: u64,
}

impl PullStats {
    pub fn new(arms: usize, states: usize) -> Self {
        Self {
            counts: Grid::filled(arms, states, 0),
            sums: Grid::filled(arms, states, 0.0),
            t: 0,
        }
    }

    /// Builds statistics from counts and sample means; means of empty cells are ignored.
    pub fn from_cells(counts: Grid<u64>, means: &Grid<f64>) -> Result<Self> {
        if counts.arms() != means.arms() || counts.states() != means.states() {
            return Err(Error::Config("count and mean tables differ in shape".into()));
        }
        let mut sums = Grid::filled(counts.arms(), counts.states(), 0.0);
        let mut t = 0;
        for i in 0..counts.arms() {
            for s in 0..counts.states() {
                let c = counts[(i, s)];
                t += c;
                if c > 0 {
                    sums[(i, s)] = means[(i, s)] * c as f64;
                }
            }
        }
        Ok(Self { counts, sums, t })
    }

    pub fn arms(&self) -> usize {
        self.counts.arms()
    }

    pub fn states(&self) -> usize {
        self.counts.states()
    }

    /// Number of recorded pulls.
    pub fn t(&self) -> u64 {
        self.t
    }

    #[inline]
    pub fn count(&self, arm: usize, state: usize) -> u64 {
        self.counts[(arm, state)]
    }

    /// Sample mean of the cell, `None` until it has been pulled.
    #[inline]
    pub fn mean(&self, arm: usize, state: usize) -> Option<f64> {
        let c = self.counts[(arm, state)];
        (c > 0).then(|| self.sums[(arm, state)] / c as f64)
    }

    pub fn counts(&self) -> &Grid<u64> {
        &self.counts
    }

    #[inline]
    pub fn record(&mut self, arm: usize, state: usize, reward: f64) {
        self.counts[(arm, state)] += 1;
        self.sums[(arm, state)] += reward;
        self.t += 1;
    }
}

/// SB-UCB arm choice at round `t` in `state`.
///
/// Arms never pulled in `state` have an infinite bonus and are taken first,
/// lowest index first. Otherwise the arm maximizing
/// `m_hat + (psi*)^-1(alpha ln t / N)` wins, ties to the lowest index.
pub fn sb_ucb_select(stats: &PullStats, state: usize, t: u64, alpha: f64, family: &PsiFamily) -> Result<usize> {
    check_alpha(alpha)?;
    if t == 0 {
        return Err(Error::OutOfRange {
            what: "time",
            value: 0,
            limit: usize::MAX,
        });
    }
    let numerator = alpha * (t as f64).ln();
    let mut best = None;
    let mut best_index = f64::NEG_INFINITY;
    for arm in 0..stats.arms() {
        let n = stats.count(arm, state);
        if n == 0 {
            return Ok(arm);
        }
        let mean = stats.sums[(arm, state)] / n as f64;
        let index = mean + family.psi_star_inv(numerator / n as f64)?;
        if best.is_none() || index > best_index {
            best = Some(arm);
            best_index = index;
        }
    }
    Ok(best.unwrap_or(0))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 2.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("SB-UCB needs alpha > 2, got {alpha}")))
    }
}

/// Uniform allocation: `Sigma_{s_t}(t) mod K`, counting the visit at `t` itself.
pub fn uniform_select(sequence: &[usize], t: usize, arms: usize) -> usize {
    sigma_count(sequence, sequence[t - 1], t) % arms
}

/// Empiric best arm: argmax over arms of the average sample mean across the
/// states in which the arm has been pulled. Ties go to the lowest index.
pub fn eba_recommend(stats: &PullStats) -> Result<usize> {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for arm in 0..stats.arms() {
        let (sum, pulled) = (0..stats.states())
            .filter_map(|s| stats.mean(arm, s))
            .fold((0.0, 0usize), |(acc, n), m| (acc + m, n + 1));
        if pulled == 0 {
            return Err(Error::InsufficientData { arm });
        }
        let value = sum / pulled as f64;
        if value > best_value {
            best = arm;
            best_value = value;
        }
    }
    Ok(best)
}

/// A strategy that picks the arm to pull each round.
pub trait Allocation {
    /// Arm to pull at 1-based round `t`, with `stats` holding rounds `1..t`.
    fn select(&mut self, t: usize, state: usize, stats: &PullStats) -> Result<usize>;

    /// Called after the reward of round `t` has been recorded.
    fn update(&mut self, _t: usize, _state: usize, _arm: usize, _stats: &PullStats) -> Result<()> {
        Ok(())
    }

    /// 1-based phase of the round just played, or 0 for unphased strategies.
    fn phase(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone)]
pub struct UniformAllocation {
    arms: usize,
    visits: Vec<u64>,
}

impl UniformAllocation {
    pub fn new(arms: usize, states: usize) -> Self {
        Self {
            arms,
            visits: vec![0; states],
        }
    }
}

impl Allocation for UniformAllocation {
    #[inline]
    fn select(&mut self, _t: usize, state: usize, _stats: &PullStats) -> Result<usize> {
        self.visits[state] += 1;
        Ok((self.visits[state] % self.arms as u64) as usize)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SbUcb {
    alpha: f64,
    family: PsiFamily,
}

impl SbUcb {
    pub fn new(alpha: f64, family: PsiFamily) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, family })
    }
}

impl Allocation for SbUcb {
    fn select(&mut self, t: usize, state: usize, stats: &PullStats) -> Result<usize> {
        sb_ucb_select(stats, state, t as u64, self.alpha, &self.family)
    }
}

/// One row of a run trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub state: usize,
    pub arm: usize,
    pub reward: f64,
    /// 1-based phase for successive rejects, 0 otherwise.
    pub phase: usize,
}

pub const TRACE_HEADER: &str = "t,state,arm,reward,phase";

pub fn write_trace_csv<W: Write>(mut out: W, steps: &[TraceStep]) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for s in steps {
        writeln!(out, "{},{},{},{},{}", s.t, s.state, s.arm, s.reward, s.phase)?;
    }
    Ok(())
}

/// Plays rounds `1..=horizon`, calling `observe` after each.
pub fn simulate<A, R, F>(env: &Environment, alloc: &mut A, horizon: usize, rng: &mut R, mut observe: F) -> Result<PullStats>
where
    A: Allocation + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&TraceStep),
{
    if horizon > env.horizon() {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            limit: env.horizon() + 1,
        });
    }
    let mut stats = PullStats::new(env.arms(), env.states());
    for t in 1..=horizon {
        let state = env.state_at(t);
        let arm = alloc.select(t, state, &stats)?;
        if arm >= env.arms() {
            return Err(Error::OutOfRange {
                what: "arm",
                value: arm,
                limit: env.arms(),
            });
        }
        let reward = env.sample(arm, state, rng);
        stats.record(arm, state, reward);
        alloc.update(t, state, arm, &stats)?;
        observe(&TraceStep {
            t,
            state,
            arm,
            reward,
            phase: alloc.phase(),
        });
    }
    Ok(stats)
}

/// Uniform allocation over the whole horizon followed by EBA.
pub fn run_uniform_eba<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> Result<usize> {
    let mut alloc = UniformAllocation::new(env.arms(), env.states());
    let stats = simulate(env, &mut alloc, env.horizon(), rng, |_| {})?;
    eba_recommend(&stats)
}

/// How successive rejects places its phase boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `t_k = ceil(k n / (K - 1))`.
    Uniform,
    /// By the end of phase `k` every surviving arm has been pulled
    /// `n_k = ceil((n - K) / (logbar(K) (K + 1 - k)))` times, with
    /// `logbar(K) = 1/2 + sum_{i=2}^K 1/i`, so phase `k` lasts
    /// `(K + 1 - k)(n_k - n_{k-1})` rounds. The last phase ends at `n`.
    Reference,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Reference => "reference",
        }
    }
}

/// Phase ends `t_1 < ... < t_{K-1} = n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrSchedule {
    pub kind: ScheduleKind,
    pub ends: Vec<usize>,
}

impl SrSchedule {
    pub fn new(kind: ScheduleKind, ends: Vec<usize>) -> Result<Self> {
        if ends.is_empty() {
            return Err(Error::Schedule("need at least one phase".into()));
        }
        let mut prev = 0;
        for (k, &e) in ends.iter().enumerate() {
            if e <= prev {
                return Err(Error::Schedule(format!(
                    "phase {} has length 0 (ends at {e} after {prev})",
                    k + 1
                )));
            }
            prev = e;
        }
        Ok(Self { kind, ends })
    }

    pub fn horizon(&self) -> usize {
        *self.ends.last().expect("validated non-empty")
    }

    pub fn phases(&self) -> usize {
        self.ends.len()
    }

    /// Start (exclusive) and end (inclusive) of phase `k` (1-based).
    pub fn bounds(&self, k: usize) -> (usize, usize) {
        let start = if k == 1 { 0 } else { self.ends[k - 2] };
        (start, self.ends[k - 1])
    }
}

/// `1/2 + sum_{i=2}^K 1/i`.
pub fn log_bar(arms: usize) -> f64 {
    0.5 + (2..=arms).map(|i| 1.0 / i as f64).sum::<f64>()
}

pub fn sr_schedule(kind: ScheduleKind, arms: usize, horizon: usize) -> Result<SrSchedule> {
    if arms < 2 {
        return Err(Error::Schedule(format!("successive rejects needs K >= 2, got {arms}")));
    }
    let phases = arms - 1;
    let ends = match kind {
        ScheduleKind::Uniform => (1..=phases).map(|k| (k * horizon).div_ceil(phases)).collect(),
        ScheduleKind::Reference => {
            let lb = log_bar(arms);
            let budget = horizon.saturating_sub(arms) as f64;
            let per_arm = |k: usize| (budget / (lb * (arms + 1 - k) as f64)).ceil() as usize;
            let mut ends = Vec::with_capacity(phases);
            let (mut t, mut prev) = (0usize, 0usize);
            for k in 1..=phases {
                let now = per_arm(k);
                t += (arms + 1 - k) * now.saturating_sub(prev);
                prev = now;
                ends.push(t.min(horizon));
            }
            ends[phases - 1] = horizon;
            ends
        }
    };
    SrSchedule::new(kind, ends)
}

/// Successive rejects as an allocation state machine.
///
/// Within phase `k`, the `c`-th visit to state `s` pulls the active arm of
/// rank `c mod |A_k|`. At each phase end, the active arm with the smallest
/// `sum_s m_hat_{i,s}` (never-pulled cells count as 0) is rejected, ties to
/// the lowest index.
#[derive(Debug, Clone)]
pub struct SuccessiveRejects {
    schedule: SrSchedule,
    active: Vec<usize>,
    phase: usize,
    last_phase: usize,
    phase_visits: Vec<u64>,
    trace: SrTrace,
}

/// Phase-level record of a successive-rejects run.
#[derive(Debug, Clone, PartialEq)]
pub struct SrTrace {
    /// Arm rejected at the end of each phase.
    pub rejected: Vec<usize>,
    /// Active set during each phase.
    pub active_per_phase: Vec<Vec<usize>>,
    /// Pulls per (arm, state) within each phase.
    pub phase_pulls: Vec<Grid<u64>>,
    /// Per-round rows, if requested.
    pub steps: Vec<TraceStep>,
}

impl SrTrace {
    /// `n_{s,k}`: pulls in state `s` that every arm active in phase `k` has
    /// received by `t_k`, i.e. the per-phase minimum over active arms,
    /// accumulated. Indexed `[state][phase - 1]`.
    pub fn min_counts(&self) -> Vec<Vec<u64>> {
        let phases = self.phase_pulls.len();
        let states = self.phase_pulls.first().map_or(0, Grid::states);
        let mut table = vec![vec![0; phases]; states];
        for s in 0..states {
            let mut acc = 0;
            for k in 0..phases {
                acc += self.active_per_phase[k]
                    .iter()
                    .map(|&i| self.phase_pulls[k][(i, s)])
                    .min()
                    .unwrap_or(0);
                table[s][k] = acc;
            }
        }
        table
    }

    /// Total pulls in each phase.
    pub fn pulls_per_phase(&self) -> Vec<u64> {
        self.phase_pulls.iter().map(|g| g.cells().iter().sum()).collect()
    }
}

impl SuccessiveRejects {
    pub fn new(arms: usize, states: usize, schedule: SrSchedule) -> Result<Self> {
        if schedule.phases() + 1 != arms {
            return Err(Error::Schedule(format!(
                "schedule has {} phases but K = {arms} needs {}",
                schedule.phases(),
                arms.saturating_sub(1)
            )));
        }
        Ok(Self {
            active: (0..arms).collect(),
            phase: 0,
            last_phase: 0,
            phase_visits: vec![0; states],
            trace: SrTrace {
                rejected: Vec::with_capacity(arms - 1),
                active_per_phase: vec![(0..arms).collect()],
                phase_pulls: vec![Grid::filled(arms, states, 0)],
                steps: Vec::new(),
            },
            schedule,
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// The survivor once every phase has finished.
    pub fn recommendation(&self) -> Result<usize> {
        match self.active.as_slice() {
            [only] => Ok(*only),
            _ => Err(Error::Schedule(format!("{} arms still active; run incomplete", self.active.len()))),
        }
    }

    pub fn into_trace(self) -> SrTrace {
        self.trace
    }

    fn reject(&mut self, stats: &PullStats) {
        let score = |i: usize| (0..stats.states()).map(|s| stats.mean(i, s).unwrap_or(0.0)).sum::<f64>();
        let mut worst = 0;
        let mut worst_score = f64::INFINITY;
        for (rank, &i) in self.active.iter().enumerate() {
            let sc = score(i);
            if sc < worst_score {
                worst = rank;
                worst_score = sc;
            }
        }
        let arm = self.active.remove(worst);
        self.trace.rejected.push(arm);
    }
}

impl Allocation for SuccessiveRejects {
    #[inline]
    fn select(&mut self, t: usize, state: usize, _stats: &PullStats) -> Result<usize> {
        if self.phase >= self.schedule.phases() || t > self.schedule.horizon() {
            return Err(Error::Schedule(format!("round {t} is past the last phase")));
        }
        self.phase_visits[state] += 1;
        let rank = (self.phase_visits[state] % self.active.len() as u64) as usize;
        Ok(self.active[rank])
    }

    fn update(&mut self, t: usize, state: usize, arm: usize, stats: &PullStats) -> Result<()> {
        self.last_phase = self.phase + 1;
        self.trace.phase_pulls[self.phase][(arm, state)] += 1;
        if t == self.schedule.ends[self.phase] {
            self.reject(stats);
            self.phase += 1;
            self.phase_visits.iter_mut().for_each(|v| *v = 0);
            if self.phase < self.schedule.phases() {
                let (arms, states) = (stats.arms(), stats.states());
                self.trace.active_per_phase.push(self.active.clone());
                self.trace.phase_pulls.push(Grid::filled(arms, states, 0));
            }
        }
        Ok(())
    }

    fn phase(&self) -> usize {
        self.last_phase
    }
}

/// Result of one successive-rejects run.
#[derive(Debug, Clone)]
pub struct SrOutcome {
    pub recommended: usize,
    pub trace: SrTrace,
    pub stats: PullStats,
}

/// Runs successive rejects over the environment's full horizon.
pub fn successive_rejects<R: Rng + ?Sized>(
    env: &Environment,
    schedule: &SrSchedule,
    rng: &mut R,
    record_steps: bool,
) -> Result<SrOutcome> {
    if schedule.horizon() != env.horizon() {
        return Err(Error::Schedule(format!(
            "schedule ends at {} but the horizon is {}",
            schedule.horizon(),
            env.horizon()
        )));
    }
    let mut sr = SuccessiveRejects::new(env.arms(), env.states(), schedule.clone())?;
    let mut steps = Vec::new();
    let stats = simulate(env, &mut sr, env.horizon(), rng, |step| {
        if record_steps {
            steps.push(*step);
        }
    })?;
    let recommended = sr.recommendation()?;
    let mut trace = sr.into_trace();
    trace.steps = steps;
    Ok(SrOutcome {
        recommended,
        trace,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{instantiate, EnvironmentSpec, RewardFamily};
    use crate::{oracle, rng};
    use proptest::prelude::*;

    fn fixed_env(rows: Vec<Vec<f64>>, seq: Vec<usize>, family: RewardFamily) -> Environment {
        let spec = EnvironmentSpec {
            arms: rows.len(),
            states: rows[0].len(),
            mu: vec![0.5; rows.len()],
            sigma2: 0.01,
            reward_family: family,
            state_sequence: seq,
            seed: 0,
        };
        Environment::with_means(spec, Grid::from_rows(rows).unwrap()).unwrap()
    }

    fn iid_seq(states: usize, len: usize, seed: u64) -> Vec<usize> {
        crate::env::StateOrder::Iid.generate(states, len, &mut rng::stream(seed, 0, 0, "seq"))
    }

    fn stats_with(counts: Vec<Vec<u64>>, means: Vec<Vec<f64>>) -> PullStats {
        PullStats::from_cells(Grid::from_rows(counts).unwrap(), &Grid::from_rows(means).unwrap()).unwrap()
    }

    #[test]
    fn sb_ucb_explores_unpulled_first() {
        let stats = PullStats::new(3, 2);
        assert_eq!(sb_ucb_select(&stats, 0, 1, 3.0, &PsiFamily::BoundedUnit).unwrap(), 0);
        let stats = stats_with(vec![vec![5, 0], vec![0, 0], vec![1, 0]], vec![vec![0.9, 0.0], vec![0.0; 2], vec![0.1, 0.0]]);
        assert_eq!(sb_ucb_select(&stats, 0, 7, 3.0, &PsiFamily::BoundedUnit).unwrap(), 1);
    }

    #[test]
    fn sb_ucb_index_example() {
        let stats = stats_with(vec![vec![4], vec![1]], vec![vec![0.5], vec![0.4]]);
        assert_eq!(sb_ucb_select(&stats, 0, 10, 3.0, &PsiFamily::BoundedUnit).unwrap(), 1);
        let bonus = |n: f64| (3.0 * 10f64.ln() / (2.0 * n)).sqrt();
        assert!((0.5 + bonus(4.0) - 1.4292).abs() < 1e-4);
        assert!((0.4 + bonus(1.0) - 2.2585).abs() < 1e-4);
    }

    #[test]
    fn sb_ucb_rejects_small_alpha() {
        let stats = PullStats::new(2, 1);
        assert!(sb_ucb_select(&stats, 0, 1, 2.0, &PsiFamily::BoundedUnit).is_err());
        assert!(SbUcb::new(1.5, PsiFamily::BoundedUnit).is_err());
    }

    #[test]
    fn uniform_select_examples() {
        let seq = vec![0; 4];
        let arms: Vec<usize> = (1..=4).map(|t| uniform_select(&seq, t, 2)).collect();
        assert_eq!(arms, vec![1, 0, 1, 0]);
        assert_eq!(uniform_select(&[0, 1, 0, 1], 3, 3), 2);
    }

    #[test]
    fn eba_examples() {
        let all = vec![vec![3, 3], vec![3, 3]];
        assert_eq!(eba_recommend(&stats_with(all.clone(), vec![vec![0.9, 0.5], vec![0.6, 0.7]])).unwrap(), 0);
        assert_eq!(eba_recommend(&stats_with(all.clone(), vec![vec![0.4, 0.4], vec![0.4, 0.4]])).unwrap(), 0);
        assert_eq!(eba_recommend(&stats_with(all, vec![vec![0.6, 0.6], vec![0.61, 0.61]])).unwrap(), 1);
    }

    #[test]
    fn eba_needs_every_arm_pulled() {
        let stats = stats_with(vec![vec![2], vec![0]], vec![vec![0.5], vec![0.0]]);
        assert!(matches!(eba_recommend(&stats), Err(Error::InsufficientData { arm: 1 })));
    }

    #[test]
    fn eba_ignores_unpulled_states() {
        let stats = stats_with(vec![vec![2, 0], vec![2, 2]], vec![vec![0.7, 0.0], vec![0.8, 0.5]]);
        assert_eq!(eba_recommend(&stats).unwrap(), 0);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(sr_schedule(ScheduleKind::Uniform, 4, 12).unwrap().ends, vec![4, 8, 12]);
        assert_eq!(sr_schedule(ScheduleKind::Uniform, 2, 10).unwrap().ends, vec![10]);
        assert!((log_bar(3) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(sr_schedule(ScheduleKind::Reference, 3, 100).unwrap().ends, vec![75, 100]);
        // n_k = (38, 50, 75) pulls per arm: phases of 4*38, 3*12 and 2*25 rounds.
        assert_eq!(sr_schedule(ScheduleKind::Reference, 4, 240).unwrap().ends, vec![152, 188, 240]);
        assert_eq!(sr_schedule(ScheduleKind::Reference, 2, 10).unwrap().ends, vec![10]);
        assert!(sr_schedule(ScheduleKind::Uniform, 1, 10).is_err());
        assert!(SrSchedule::new(ScheduleKind::Uniform, vec![3, 3]).is_err());
    }

    #[test]
    fn two_arm_sr_matches_uniform_allocation() {
        let env = fixed_env(vec![vec![0.4, 0.6], vec![0.5, 0.5]], vec![0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0], RewardFamily::Bernoulli);
        let schedule = sr_schedule(ScheduleKind::Uniform, 2, env.horizon()).unwrap();
        let out = successive_rejects(&env, &schedule, &mut rng::stream(1, 0, 0, "t"), true).unwrap();
        let mut uniform = Vec::new();
        let stats = simulate(&env, &mut UniformAllocation::new(2, 2), env.horizon(), &mut rng::stream(1, 0, 0, "t"), |s| uniform.push(*s)).unwrap();
        let arms = |v: &[TraceStep]| v.iter().map(|s| (s.arm, s.reward)).collect::<Vec<_>>();
        assert_eq!(arms(&out.trace.steps), arms(&uniform));
        assert_eq!(out.recommended, eba_recommend(&stats).unwrap());
        assert_eq!(out.trace.rejected.len(), 1);
    }

    #[test]
    fn noiseless_rejection_order() {
        let noiseless = RewardFamily::TruncatedGaussian { variance: 0.0 };
        let env = fixed_env(vec![vec![0.9], vec![0.5], vec![0.1]], vec![0; 30], noiseless);
        for kind in [ScheduleKind::Uniform, ScheduleKind::Reference] {
            let schedule = sr_schedule(kind, 3, 30).unwrap();
            let out = successive_rejects(&env, &schedule, &mut rng::stream(0, 0, 0, "t"), false).unwrap();
            assert_eq!(out.trace.rejected, vec![2, 1]);
            assert_eq!(out.recommended, 0);
        }
    }

    #[test]
    fn sr_matches_independent_resimulation() {
        let spec = EnvironmentSpec {
            arms: 3,
            states: 2,
            mu: vec![0.3, 0.5, 0.6],
            sigma2: 0.05,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: iid_seq(2, 60, 11),
            seed: 5,
        };
        let env = instantiate(&spec).unwrap();
        let schedule = sr_schedule(ScheduleKind::Uniform, 3, 60).unwrap();
        let out = successive_rejects(&env, &schedule, &mut rng::stream(9, 1, 2, "sr"), true).unwrap();
        let (rows, survivor) = oracle::resimulate_successive_rejects(&env, &schedule.ends, &mut rng::stream(9, 1, 2, "sr"));
        let live: Vec<oracle::SrRow> = out.trace.steps.iter().map(|s| (s.t, s.state, s.arm, s.reward, s.phase)).collect();
        assert_eq!(live, rows);
        assert_eq!(out.recommended, survivor);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let env = fixed_env(vec![vec![0.2], vec![0.8]], vec![0; 4], RewardFamily::Bernoulli);
        let schedule = sr_schedule(ScheduleKind::Uniform, 2, 4).unwrap();
        let out = successive_rejects(&env, &schedule, &mut rng::stream(0, 0, 0, "t"), true).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace.steps).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,0,1,"));
        assert!(lines[1].ends_with(",1"));
    }

    proptest! {
        #[test]
        fn uniform_counts_stay_balanced(seq in proptest::collection::vec(0usize..3, 1..200), arms in 2usize..6) {
            let mut counts = vec![vec![0u64; 3]; arms];
            for t in 1..=seq.len() {
                counts[uniform_select(&seq, t, arms)][seq[t - 1]] += 1;
                for s in 0..3 {
                    let col: Vec<u64> = (0..arms).map(|i| counts[i][s]).collect();
                    prop_assert!(col.iter().max().unwrap() - col.iter().min().unwrap() <= 1);
                }
            }
        }

        #[test]
        fn sr_trace_invariants(
            arms in 2usize..6,
            states in 1usize..4,
            extra in 0usize..80,
            seed in 0u64..1000,
            reference in any::<bool>(),
        ) {
            let n = arms * (arms - 1) / 2 + arms + extra;
            let seq = iid_seq(states, n, seed);
            let rows: Vec<Vec<f64>> = (0..arms).map(|i| (0..states).map(|s| ((i * 7 + s * 3) % 10) as f64 / 10.0).collect()).collect();
            let env = fixed_env(rows, seq, RewardFamily::Bernoulli);
            let kind = if reference { ScheduleKind::Reference } else { ScheduleKind::Uniform };
            let schedule = match sr_schedule(kind, arms, n) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let out = successive_rejects(&env, &schedule, &mut rng::stream(seed, 0, 0, "p"), false).unwrap();
            prop_assert_eq!(out.trace.pulls_per_phase().iter().sum::<u64>(), n as u64);
            for (k, active) in out.trace.active_per_phase.iter().enumerate() {
                prop_assert_eq!(active.len(), arms - k);
            }
            prop_assert_eq!(out.trace.rejected.len(), arms - 1);
            let counts = crate::bounds::sr_counts(&env.spec.state_sequence, states, &schedule, arms);
            prop_assert_eq!(out.trace.min_counts(), counts);
        }

        #[test]
        fn eba_is_shift_invariant(cells in proptest::collection::vec(0.0f64..0.5, 6), c in 0.0f64..0.5) {
            let counts = vec![vec![2u64; 2]; 3];
            let rows: Vec<Vec<f64>> = cells.chunks(2).map(<[f64]>::to_vec).collect();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
            let a = eba_recommend(&stats_with(counts.clone(), rows)).unwrap();
            let b = eba_recommend(&stats_with(counts, shifted)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
