//! Property suites behind `sbcb verify`. Each suite is deterministic given
//! its scale and seed; the acceptance tests run several of them at full scale.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use sbcb_core::bounds::thm1_bound;
use sbcb_core::divergence::PsiFamily;
use sbcb_core::env::{gaps, state_visits, Environment, EnvironmentSpec, RewardFamily, StateOrder};
use sbcb_core::grid::Grid;
use sbcb_core::montecarlo::{
    estimate_bai, estimate_pseudoregret, proportion_se, sr_compare, sr_validity, tightness_sweep, tightness_validity,
    write_tightness_csv, BaiStrategy, SweepConfig,
};
use sbcb_core::oracle;
use sbcb_core::rng::stream;
use sbcb_core::strategies::{sb_ucb_select, sr_schedule, successive_rejects, PullStats, ScheduleKind};
use sbcb_triage::baselines::{run_baseline, Baseline, BaselineParams};
use sbcb_triage::pipeline::{budget_split, default_stages, run_pipeline, AllocationScheme, Money, PipelineConfig, DEFAULT_KEEP};
use sbcb_triage::population::{synth_population, PopulationSpec};

use crate::config::{RegretConfig, VerifyConfig};
use crate::regret_env;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: String,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
}

impl SuiteResult {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            checks: 0,
            failures: 0,
            detail: String::new(),
        }
    }

    fn check(&mut self, ok: bool) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
    }

    /// Records an error as a failed check.
    fn fail(&mut self, what: impl std::fmt::Display) {
        self.checks += 1;
        self.failures += 1;
        if self.detail.is_empty() {
            self.detail = what.to_string();
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }

    pub fn pass_rate(&self) -> f64 {
        if self.checks == 0 {
            0.0
        } else {
            (self.checks - self.failures) as f64 / self.checks as f64
        }
    }
}

pub fn run_suites(cfg: &VerifyConfig) -> Vec<SuiteResult> {
    vec![
        transforms(100),
        ucb_reduction(cfg.trials, 500, cfg.master_seed),
        enumeration(cfg.trials, 2000, cfg.master_seed, 1.0),
        bound_validity(cfg.envs, cfg.runs, cfg.master_seed),
        sr_transcripts(cfg.trials, cfg.master_seed),
        regret(cfg.runs, cfg.master_seed),
        triage(cfg.trials.min(10), cfg.master_seed),
        determinism(cfg.master_seed),
    ]
}

pub fn render_table(results: &[SuiteResult]) -> String {
    let mut out = format!("{:<16} {:>7} {:>7}  {:<6} {}\n", "suite", "checks", "failed", "status", "detail");
    for r in results {
        let status = if r.passed() { "pass" } else { "FAIL" };
        let _ = writeln!(out, "{:<16} {:>7} {:>7}  {:<6} {}", r.suite, r.checks, r.failures, status, r.detail);
    }
    out
}

const FAMILIES: [PsiFamily; 3] = [
    PsiFamily::BoundedUnit,
    PsiFamily::Gaussian { variance: 0.25 },
    PsiFamily::Gaussian { variance: 2.0 },
];

/// Closed-form `psi*` and its inverse against numeric sup/inversion, to 1e-6.
pub fn transforms(points: usize) -> SuiteResult {
    let mut r = SuiteResult::new("transforms");
    let mut worst = 0.0f64;
    for fam in &FAMILIES {
        for j in 0..points {
            let eps = 2.0 * (j + 1) as f64 / points as f64;
            let x = 4.0 * (j + 1) as f64 / points as f64;
            match (fam.psi_star(eps), fam.psi_star_inv(x)) {
                (Ok(closed), Ok(inv)) => {
                    let e1 = (closed - oracle::numeric_conjugate(fam, eps)).abs();
                    let e2 = (inv - oracle::numeric_conjugate_inverse(fam, x)).abs();
                    worst = worst.max(e1).max(e2);
                    r.check(e1 <= 1e-6);
                    r.check(e2 <= 1e-6);
                }
                (Err(e), _) | (_, Err(e)) => r.fail(e),
            }
        }
    }
    if r.detail.is_empty() {
        r.detail = format!("max abs error {worst:.2e}");
    }
    r
}

fn bernoulli_streams(means: &[f64], len: usize, seed: u64, trial: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, trial, 0, "verify-streams");
    means
        .iter()
        .map(|&m| (0..len).map(|_| f64::from(u8::from(rng.random::<f64>() < m))).collect())
        .collect()
}

/// With one state, SB-UCB must make exactly the choices of textbook UCB on
/// the same per-arm reward streams, and its bound must be the textbook one.
pub fn ucb_reduction(trials: usize, n: usize, seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("ucb-reduction");
    let mut worst = 0.0f64;
    for trial in 0..trials as u64 {
        let mut rng = stream(seed, trial, 0, "verify-ucb-env");
        let k = rng.random_range(2..=5);
        let means: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let fam = FAMILIES[trial as usize % FAMILIES.len()];
        let alpha = 2.5 + trial as f64 % 3.0;
        let rewards = bernoulli_streams(&means, n, seed, trial);

        let mut stats = PullStats::new(k, 1);
        let mut drawn = vec![0; k];
        let mut ours = Vec::with_capacity(n);
        for t in 1..=n as u64 {
            match sb_ucb_select(&stats, 0, t, alpha, &fam) {
                Ok(arm) => {
                    stats.record(arm, 0, rewards[arm][drawn[arm]]);
                    drawn[arm] += 1;
                    ours.push(arm);
                }
                Err(e) => {
                    r.fail(e);
                    break;
                }
            }
        }
        r.check(ours == oracle::classical_ucb(&rewards, n, alpha, &fam));

        let spec = EnvironmentSpec {
            arms: k,
            states: 1,
            mu: means.clone(),
            sigma2: 0.01,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: vec![0; n],
            seed: trial,
        };
        let env = Grid::from_rows(means.iter().map(|&m| vec![m]).collect())
            .map_err(|e| e.to_string())
            .and_then(|g| Environment::with_means(spec, g).map_err(|e| e.to_string()));
        match env.and_then(|env| thm1_bound(&env, alpha, n, &fam).map_err(|e| e.to_string())) {
            Ok(bound) => {
                let top = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let deltas: Vec<f64> = means.iter().map(|m| top - m).collect();
                let classical = oracle::classical_ucb_bound(&deltas, alpha, n, &fam);
                let err = (bound.raw - classical).abs() / classical.abs().max(1.0);
                worst = worst.max(err);
                r.check(err <= 1e-12);
            }
            Err(e) => r.fail(e),
        }
    }
    if r.detail.is_empty() {
        r.detail = format!("{trials} trials of n={n}; bound max relative difference {worst:.1e}");
    }
    r
}

/// Random small Bernoulli environment for exhaustive enumeration: `K <= 3`,
/// `S <= 2`, `n <= 12`, every state visited at least `K` times.
pub fn small_env(seed: u64, trial: u64) -> Environment {
    for attempt in 0.. {
        let mut rng = stream(seed, trial, attempt, "verify-small-env");
        let arms = rng.random_range(2..=3);
        let states = rng.random_range(1..=2);
        let n = rng.random_range(arms * states..=12);
        let sequence = StateOrder::Iid.generate(states, n, &mut rng);
        if state_visits(&sequence, states, n).into_iter().any(|v| v < arms) {
            continue;
        }
        let rows: Vec<Vec<f64>> = (0..arms).map(|_| (0..states).map(|_| rng.random::<f64>()).collect()).collect();
        let mu = rows.iter().map(|row| row.iter().sum::<f64>() / states as f64).collect();
        let spec = EnvironmentSpec {
            arms,
            states,
            mu,
            sigma2: 0.05,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: sequence,
            seed: trial,
        };
        return Environment::with_means(spec, Grid::from_rows(rows).expect("rectangular")).expect("valid");
    }
    unreachable!()
}

/// Monte Carlo `e_hat_n` of uniform allocation + EBA against exact
/// enumeration, within 4 standard errors (computed from the exact value).
/// Passes when at least `min_rate` of the cases agree.
pub fn enumeration(trials: usize, runs: usize, seed: u64, min_rate: f64) -> SuiteResult {
    let mut r = SuiteResult::new("enumeration");
    for trial in 0..trials as u64 {
        let env = small_env(seed, trial);
        let exact = oracle::exact_uniform_eba_error(&env, env.horizon(), gaps(&env).j_hat_star);
        match estimate_bai(&env, &BaiStrategy::UniformEba, runs, seed, trial) {
            Ok(est) => r.check((est.e_hat - exact).abs() <= 4.0 * proportion_se(exact, runs) + 1e-12),
            Err(e) => r.fail(e),
        }
    }
    let rate = r.pass_rate();
    r.detail = format!("{} of {} cases within 4 SE ({runs} runs)", r.checks - r.failures, r.checks);
    if rate >= min_rate {
        r.failures = 0;
    }
    r
}

/// Bound statements on a small random sweep, per statement, at the 99% level.
pub fn bound_validity(envs: usize, runs: usize, seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("bound-validity");
    let cfg = SweepConfig {
        num_envs: envs,
        runs_per_env: runs,
        master_seed: seed,
        ..SweepConfig::default()
    };
    let rates = tightness_sweep(&cfg)
        .map(|rec| tightness_validity(&rec))
        .and_then(|mut rates| {
            rates.extend(sr_validity(&sr_compare(&cfg)?.rows));
            Ok(rates)
        });
    match rates {
        Ok(rates) => {
            let mut lowest = 1.0f64;
            for v in &rates {
                lowest = lowest.min(v.rate);
                r.check(v.evaluated > 0 && v.rate >= 0.99);
            }
            r.detail = format!("{} statements, lowest rate {lowest:.3} over {envs} envs", rates.len());
        }
        Err(e) => r.fail(e),
    }
    r
}

/// Successive rejects against a step-by-step re-simulation.
pub fn sr_transcripts(trials: usize, seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("sr-transcripts");
    for trial in 0..trials as u64 {
        let mut rng = stream(seed, trial, 0, "verify-sr-env");
        let arms = rng.random_range(2..=6);
        let states = rng.random_range(1..=3);
        let n = rng.random_range(arms * 10..=150);
        let rows: Vec<Vec<f64>> = (0..arms).map(|_| (0..states).map(|_| rng.random::<f64>()).collect()).collect();
        let spec = EnvironmentSpec {
            arms,
            states,
            mu: rows.iter().map(|row| row.iter().sum::<f64>() / states as f64).collect(),
            sigma2: 0.05,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: StateOrder::Iid.generate(states, n, &mut rng),
            seed: trial,
        };
        let env = match Grid::from_rows(rows).and_then(|g| Environment::with_means(spec, g)) {
            Ok(env) => env,
            Err(e) => {
                r.fail(e);
                continue;
            }
        };
        for kind in [ScheduleKind::Uniform, ScheduleKind::Reference] {
            let result = sr_schedule(kind, arms, n).and_then(|sched| {
                let live = successive_rejects(&env, &sched, &mut stream(seed, trial, 1, "verify-sr-run"), true)?;
                Ok((sched, live))
            });
            match result {
                Ok((sched, live)) => {
                    let (rows, survivor) =
                        oracle::resimulate_successive_rejects(&env, &sched.ends, &mut stream(seed, trial, 1, "verify-sr-run"));
                    let ours: Vec<oracle::SrRow> = live.trace.steps.iter().map(|s| (s.t, s.state, s.arm, s.reward, s.phase)).collect();
                    let same = ours == rows && live.recommended == survivor;
                    if !same && r.detail.is_empty() {
                        r.detail = format!("trial {trial} ({kind:?}, K={arms}, S={states}, n={n}) diverges");
                    }
                    r.check(same);
                }
                Err(e) => r.fail(e),
            }
        }
    }
    if r.detail.is_empty() {
        r.detail = format!("{trials} environments, both schedules");
    }
    r
}

/// Default regret environment at n = 100 and 1,000 against its bound.
pub fn regret(runs: usize, seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("regret");
    let cfg = RegretConfig {
        checkpoints: vec![100, 1000],
        runs,
        master_seed: seed,
        ..RegretConfig::default()
    };
    match regret_env(&cfg).and_then(|env| {
        estimate_pseudoregret(&env, cfg.alpha, &cfg.family, &cfg.checkpoints, cfg.runs, seed, 0).map_err(|e| crate::CliError::Runtime(e.to_string()))
    }) {
        Ok(points) => {
            for p in &points {
                r.check(p.within_bound());
            }
            r.detail = points
                .iter()
                .map(|p| format!("n={}: {:.2} <= {:.2}", p.n, p.mean, p.bound.clamped))
                .collect::<Vec<_>>()
                .join(", ");
        }
        Err(e) => r.fail(e),
    }
    r
}

/// Budget table, cost accounting and cohort narrowing.
pub fn triage(seeds: usize, seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("triage");
    let d = |x: u64| Money(x * 1000);
    let table = [
        (553, AllocationScheme::More3, (18, 535)),
        (553, AllocationScheme::Equal, (18, 535)),
        (1300, AllocationScheme::More3, (200, 1100)),
        (1300, AllocationScheme::More2, (765, 535)),
        (1300, AllocationScheme::Equal, (620, 680)),
        (2200, AllocationScheme::More3, (300, 1900)),
        (2200, AllocationScheme::More2, (1500, 700)),
        (2200, AllocationScheme::Equal, (1100, 1100)),
    ];
    for (total, scheme, (t2, t3)) in table {
        r.check(budget_split(d(total), scheme).ok() == Some((d(t2), d(t3))));
    }
    let spec = PopulationSpec::default();
    for s in 0..seeds as u64 {
        let outcome = synth_population(&spec, seed.wrapping_add(s)).and_then(|pop| {
            let four = run_baseline(Baseline::FourExperts, &pop, &BaselineParams::default(), s)?;
            let mut config = PipelineConfig::new(default_stages(pop.len(), d(18), d(535), DEFAULT_KEEP));
            let a = run_pipeline(&pop, &config, s)?;
            config.stages = default_stages(pop.len(), d(200), d(1100), DEFAULT_KEEP);
            let b = run_pipeline(&pop, &config, s)?;
            Ok((pop, four, a, b))
        });
        match outcome {
            Ok((pop, four, a, b)) => {
                r.check(pop.severe_count() == spec.n_severe);
                r.check(four.evaluations == 968 && four.spend == Money(5_178_800));
                for (result, budgets) in [(&a, [d(18), d(535)]), (&b, [d(200), d(1100)])] {
                    for (stage, report) in result.stages.iter().enumerate() {
                        let cost = sbcb_triage::pipeline::STAGE_COSTS[stage];
                        r.check(report.spend == cost * report.pulls);
                        r.check(stage == 0 || report.spend <= budgets[stage - 1]);
                        r.check(report.cohort.len() == DEFAULT_KEEP[stage]);
                    }
                }
            }
            Err(e) => r.fail(e),
        }
    }
    r.detail = format!("budget table, 4Experts = $5178.80, {seeds} populations");
    r
}

/// A small sweep rendered on one and on two worker threads.
pub fn determinism(seed: u64) -> SuiteResult {
    let mut r = SuiteResult::new("determinism");
    let cfg = SweepConfig {
        num_envs: 8,
        runs_per_env: 20,
        master_seed: seed,
        ..SweepConfig::default()
    };
    let render = |threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let records = pool.install(|| tightness_sweep(&cfg)).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_tightness_csv(&mut buf, &records).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    match (render(1), render(2)) {
        (Ok(a), Ok(b)) => r.check(a == b),
        (Err(e), _) | (_, Err(e)) => r.fail(e),
    }
    r.detail = "tightness output on 1 and 2 workers".into();
    r
}
