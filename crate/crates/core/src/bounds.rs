//! Closed-form evaluators for the pseudo-regret, error-probability and
//! simple-regret bounds.
//!
//! Every bound is returned as a [`BoundReport`] carrying the raw value (which
//! may be vacuous, i.e. exceed 1 for probabilities) and a clamped value that
//! comparisons should use.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::divergence::PsiFamily;
use crate::env::{gaps, state_visits, Environment, GapReport};
use crate::strategies::{check_alpha, SrSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    /// SB-UCB pseudo-regret.
    #[serde(rename = "thm1")]
    Thm1,
    /// Uniform + EBA, global-best error probability `e_n`.
    #[serde(rename = "thm2.1")]
    Thm2_1,
    /// Uniform + EBA, empiric-best error probability.
    #[serde(rename = "thm2.2")]
    Thm2_2,
    /// Uniform + EBA, expected global simple regret.
    #[serde(rename = "thm3.1")]
    Thm3_1,
    /// Uniform + EBA, expected empiric simple regret.
    #[serde(rename = "thm3.2")]
    Thm3_2,
    /// Successive rejects, empiric-best error probability.
    #[serde(rename = "thm4.1")]
    Thm4_1,
    /// Successive rejects, global-best error probability.
    #[serde(rename = "thm4.2")]
    Thm4_2,
}

impl Statement {
    pub fn name(self) -> &'static str {
        match self {
            Statement::Thm1 => "thm1",
            Statement::Thm2_1 => "thm2.1",
            Statement::Thm2_2 => "thm2.2",
            Statement::Thm3_1 => "thm3.1",
            Statement::Thm3_2 => "thm3.2",
            Statement::Thm4_1 => "thm4.1",
            Statement::Thm4_2 => "thm4.2",
        }
    }

    pub fn is_probability(self) -> bool {
        matches!(self, Statement::Thm2_1 | Statement::Thm2_2 | Statement::Thm4_1 | Statement::Thm4_2)
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: Statement,
    pub raw: f64,
    /// `min(raw, 1)` for probabilities and simple regrets; for pseudo-regret,
    /// `min(raw, n * max Delta^m)`, the trivial ceiling.
    pub clamped: f64,
    pub inputs_digest: String,
}

impl BoundReport {
    fn new(name: Statement, raw: f64, ceiling: f64, digest: String) -> Self {
        Self {
            name,
            raw,
            clamped: raw.min(ceiling),
            inputs_digest: digest,
        }
    }
}

/// Whether the optimal arm's min-gap term enters the uniform-allocation sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub include_optimal: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { include_optimal: true }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn digest(env: &Environment, n: usize, extra: &str) -> String {
    let mut h = Sha256::new();
    for m in env.means.cells() {
        h.update(m.to_bits().to_le_bytes());
    }
    for m in &env.spec.mu {
        h.update(m.to_bits().to_le_bytes());
    }
    h.update(env.spec.sigma2.to_bits().to_le_bytes());
    for &s in &env.spec.state_sequence[..n.min(env.horizon())] {
        h.update((s as u64).to_le_bytes());
    }
    h.update((n as u64).to_le_bytes());
    h.update(extra.as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn family_tag(family: &PsiFamily) -> String {
    match family {
        PsiFamily::BoundedUnit => "bounded_unit".into(),
        PsiFamily::Gaussian { variance } => format!("gaussian:{:016x}", variance.to_bits()),
    }
}

fn check_horizon(env: &Environment, n: usize) -> Result<()> {
    if n == 0 || n > env.horizon() {
        return Err(Error::OutOfRange {
            what: "n",
            value: n,
            limit: env.horizon() + 1,
        });
    }
    Ok(())
}

/// `floor(Sigma_s(n) / K)` for every state.
pub fn uniform_cell_pulls(env: &Environment, n: usize) -> Vec<u64> {
    state_visits(&env.spec.state_sequence, env.states(), n)
        .into_iter()
        .map(|v| (v / env.arms()) as u64)
        .collect()
}

/// SB-UCB pseudo-regret bound
/// `sum_{(i,s): Delta^m > 0} Delta^m (alpha ln n / psi*(Delta^m / 2) + alpha / (alpha - 2))`.
pub fn thm1_bound(env: &Environment, alpha: f64, n: usize, family: &PsiFamily) -> Result<BoundReport> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::OutOfRange {
            what: "n",
            value: 0,
            limit: usize::MAX,
        });
    }
    let g = gaps(env);
    let ln_n = (n as f64).ln();
    let mut raw = 0.0;
    let mut max_gap: f64 = 0.0;
    for &d in g.delta_m.cells() {
        if d > 0.0 {
            raw += d * (alpha * ln_n / family.psi_star(d / 2.0)? + alpha / (alpha - 2.0));
            max_gap = max_gap.max(d);
        }
    }
    let tag = format!("thm1;alpha={:016x};{}", alpha.to_bits(), family_tag(family));
    Ok(BoundReport::new(
        Statement::Thm1,
        raw,
        n as f64 * max_gap,
        digest(env, 0, &tag),
    ))
}

/// Uniform allocation + EBA error probabilities `(e_n, e_hat_n)`:
///
/// - `e_hat_n <= sum_{i,s} 2 exp(-N_s psi*(Delta^Sigma_i / 2))`
/// - `e_n <= sum_{i,s} 2 exp(-N_s psi*(Delta^Sigma_i / 4)) + sum_i 2 S Phi(-Delta^mu_i / (4 sigma2))`
///
/// with `N_s = floor(Sigma_s(n) / K)`.
pub fn thm2_bounds(env: &Environment, n: usize, family: &PsiFamily, opts: BoundOptions) -> Result<(BoundReport, BoundReport)> {
    check_horizon(env, n)?;
    let g = gaps(env);
    let pulls = uniform_cell_pulls(env, n);
    let s_count = env.states() as f64;
    let sigma2 = env.spec.sigma2;

    let mut e_hat = 0.0;
    let mut e = 0.0;
    for i in 0..env.arms() {
        if opts.include_optimal || i != g.j_hat_star {
            let d = g.delta_sigma[i];
            let (rate_half, rate_quarter) = (family.psi_star(d / 2.0)?, family.psi_star(d / 4.0)?);
            for &np in &pulls {
                e_hat += 2.0 * (-(np as f64) * rate_half).exp();
                e += 2.0 * (-(np as f64) * rate_quarter).exp();
            }
        }
        if opts.include_optimal || i != g.j_star {
            e += 2.0 * s_count * normal_cdf(-g.delta_mu[i] / (4.0 * sigma2));
        }
    }
    let tag = format!("thm2;{};opt={}", family_tag(family), opts.include_optimal);
    let dg = digest(env, n, &tag);
    Ok((
        BoundReport::new(Statement::Thm2_1, e, 1.0, dg.clone()),
        BoundReport::new(Statement::Thm2_2, e_hat, 1.0, dg),
    ))
}

/// Uniform allocation + EBA expected simple regrets `(r_n, r_hat_n)`:
///
/// - `E r_hat_n <= sum_{i,s} Delta^Sigma_i exp(-N_s (m_{j_hat*,s} - m_{i,s})^2)`
/// - `E r_n <= sum_{i,s} Delta^mu_i exp(-N_s (m_{j*,s} - m_{i,s})^2)`
pub fn thm3_bounds(env: &Environment, n: usize, opts: BoundOptions) -> Result<(BoundReport, BoundReport)> {
    check_horizon(env, n)?;
    let g = gaps(env);
    let pulls = uniform_cell_pulls(env, n);
    let m = &env.means;
    let term = |best: usize, gap: &[f64]| {
        let mut acc = 0.0;
        for i in 0..env.arms() {
            if !opts.include_optimal && i == best {
                continue;
            }
            for (s, &np) in pulls.iter().enumerate() {
                let diff = m[(best, s)] - m[(i, s)];
                acc += gap[i] * (-(np as f64) * diff * diff).exp();
            }
        }
        acc
    };
    let r = term(g.j_star, &g.delta_mu);
    let r_hat = term(g.j_hat_star, &g.delta_sigma);
    let dg = digest(env, n, &format!("thm3;opt={}", opts.include_optimal));
    Ok((
        BoundReport::new(Statement::Thm3_1, r, 1.0, dg.clone()),
        BoundReport::new(Statement::Thm3_2, r_hat, 1.0, dg),
    ))
}

/// Guaranteed per-arm pulls `n_{s,k}` under successive rejects:
/// `sum_{kappa <= k} floor((Sigma_s(t_kappa) - Sigma_s(t_{kappa-1})) / (K + 1 - kappa))`.
///
/// Indexed `[state][phase - 1]`.
pub fn sr_counts(sequence: &[usize], states: usize, schedule: &SrSchedule, arms: usize) -> Vec<Vec<u64>> {
    let phases = schedule.phases();
    let mut table = vec![vec![0u64; phases]; states];
    let mut prev = vec![0usize; states];
    for k in 1..=phases {
        let now = state_visits(sequence, states, schedule.ends[k - 1]);
        let active = (arms + 1 - k) as u64;
        for s in 0..states {
            let visits = (now[s] - prev[s]) as u64;
            let before = if k == 1 { 0 } else { table[s][k - 2] };
            table[s][k - 1] = before + visits / active;
        }
        prev = now;
    }
    table
}

/// Arm rankings `(1), (2), ..., (K)` used by the successive-rejects bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmOrdering {
    /// Empiric best first, then ascending `Delta^Sigma`.
    pub by_sigma: Vec<usize>,
    /// Global best first, then ascending `Delta^mu`.
    pub by_mu: Vec<usize>,
}

impl ArmOrdering {
    pub fn from_gaps(g: &GapReport) -> Self {
        let rank = |best: usize, gap: &[f64]| {
            let mut rest: Vec<usize> = (0..gap.len()).filter(|&i| i != best).collect();
            rest.sort_by(|&a, &b| gap[a].total_cmp(&gap[b]).then(a.cmp(&b)));
            std::iter::once(best).chain(rest).collect::<Vec<_>>()
        };
        Self {
            by_sigma: rank(g.j_hat_star, &g.delta_sigma),
            by_mu: rank(g.j_star, &g.delta_mu),
        }
    }
}

/// `sum_{k=1}^{K-1} sum_s k exp(-n_{s,k} (m_{best,s} - m_{(K+1-k),s})^2)`.
pub fn sr_bound_from_counts(env: &Environment, counts: &[Vec<u64>], best: usize, ordering: &[usize]) -> f64 {
    let k_arms = env.arms();
    let m = &env.means;
    let mut acc = 0.0;
    for k in 1..k_arms {
        let other = ordering[k_arms - k];
        for (s, row) in counts.iter().enumerate() {
            let diff = m[(best, s)] - m[(other, s)];
            acc += k as f64 * (-(row[k - 1] as f64) * diff * diff).exp();
        }
    }
    acc
}

/// Successive-rejects error probabilities `(e_n, e_hat_n)` (statements 4.2 and 4.1).
pub fn thm4_bounds(env: &Environment, schedule: &SrSchedule, ordering: &ArmOrdering) -> Result<(BoundReport, BoundReport)> {
    let k = env.arms();
    if schedule.phases() + 1 != k {
        return Err(Error::Schedule(format!(
            "schedule has {} phases, K = {k} needs {}",
            schedule.phases(),
            k - 1
        )));
    }
    check_horizon(env, schedule.horizon())?;
    for order in [&ordering.by_sigma, &ordering.by_mu] {
        let mut seen = order.clone();
        seen.sort_unstable();
        if seen != (0..k).collect::<Vec<_>>() {
            return Err(Error::Config(format!("arm ordering {order:?} is not a permutation of 0..{k}")));
        }
    }
    let counts = sr_counts(&env.spec.state_sequence, env.states(), schedule, k);
    let e_hat = sr_bound_from_counts(env, &counts, ordering.by_sigma[0], &ordering.by_sigma);
    let e = sr_bound_from_counts(env, &counts, ordering.by_mu[0], &ordering.by_mu);
    let tag = format!("thm4;{:?};{:?};{:?}", schedule.ends, ordering.by_sigma, ordering.by_mu);
    let dg = digest(env, schedule.horizon(), &tag);
    Ok((
        BoundReport::new(Statement::Thm4_2, e, 1.0, dg.clone()),
        BoundReport::new(Statement::Thm4_1, e_hat, 1.0, dg),
    ))
}

pub const BOUND_HEADER: &str = "name,raw,clamped,n,K,S,min_state_visits";

/// A [`BoundReport`] with the context columns of the bound CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub report: BoundReport,
    pub n: usize,
    pub arms: usize,
    pub states: usize,
    pub min_state_visits: usize,
}

impl BoundRow {
    pub fn new(report: BoundReport, env: &Environment, n: usize) -> Self {
        let visits = state_visits(&env.spec.state_sequence, env.states(), n.min(env.horizon()));
        Self {
            report,
            n,
            arms: env.arms(),
            states: env.states(),
            min_state_visits: visits.into_iter().min().unwrap_or(0),
        }
    }
}

pub fn write_bound_rows<W: Write>(mut out: W, rows: &[BoundRow]) -> Result<()> {
    writeln!(out, "{BOUND_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.report.name, r.report.raw, r.report.clamped, r.n, r.arms, r.states, r.min_state_visits
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentSpec, RewardFamily};
    use crate::grid::Grid;
    use crate::oracle;
    use crate::strategies::{sr_schedule, successive_rejects, ScheduleKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn env_from(rows: Vec<Vec<f64>>, mu: Vec<f64>, seq: Vec<usize>) -> Environment {
        let spec = EnvironmentSpec {
            arms: rows.len(),
            states: rows[0].len(),
            mu,
            sigma2: 0.1,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: seq,
            seed: 0,
        };
        Environment::with_means(spec, Grid::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_abs_diff_eq!(normal_cdf(-1.0), 0.1586552539, epsilon = 1e-10);
        for i in 0..=160 {
            let x = -8.0 + 0.1 * i as f64;
            assert_abs_diff_eq!(normal_cdf(x), oracle::normal_cdf_integrated(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn thm1_examples() {
        let fam = PsiFamily::BoundedUnit;
        let flat = env_from(vec![vec![0.4, 0.4], vec![0.4, 0.4]], vec![0.5, 0.5], vec![0, 1]);
        assert_eq!(thm1_bound(&flat, 3.0, 100, &fam).unwrap().raw, 0.0);

        let env = env_from(vec![vec![0.5], vec![0.3]], vec![0.5, 0.3], vec![0; 4]);
        let b = thm1_bound(&env, 3.0, 100, &fam).unwrap();
        assert_abs_diff_eq!(b.raw, 0.2 * (3.0 * 100f64.ln() / 0.02 + 3.0), epsilon = 1e-9);
        assert_abs_diff_eq!(b.raw, 138.755, epsilon = 1e-3);

        let b2 = thm1_bound(&env, 3.0, 200, &fam).unwrap();
        assert_abs_diff_eq!(b2.raw - b.raw, 0.2 * 3.0 * 2f64.ln() / 0.02, epsilon = 1e-9);
        assert!(thm1_bound(&env, 2.0, 100, &fam).is_err());
    }

    #[test]
    fn thm1_single_state_is_classical() {
        let fam = PsiFamily::BoundedUnit;
        let env = env_from(vec![vec![0.7], vec![0.45], vec![0.2], vec![0.7]], vec![0.5; 4], vec![0; 3]);
        for n in [10, 100, 12345] {
            let ours = thm1_bound(&env, 2.5, n, &fam).unwrap().raw;
            let classical = oracle::classical_ucb_bound(&[0.0, 0.25, 0.5, 0.0], 2.5, n, &fam);
            assert!((ours - classical).abs() <= 1e-12 * classical.max(1.0));
        }
    }

    #[test]
    fn thm2_example() {
        let env = env_from(vec![vec![0.6], vec![0.4]], vec![0.6, 0.4], vec![0; 100]);
        let (_, e_hat) = thm2_bounds(&env, 100, &PsiFamily::BoundedUnit, BoundOptions::default()).unwrap();
        assert_abs_diff_eq!(e_hat.raw, 4.0 * (-1f64).exp(), epsilon = 1e-12);
        assert_eq!(e_hat.clamped, 1.0);
        assert_eq!(e_hat.name, Statement::Thm2_2);
    }

    #[test]
    fn thm2_prior_term() {
        let env = env_from(vec![vec![0.6], vec![0.4]], vec![0.6, 0.4], vec![0; 100]);
        let (e, e_hat) = thm2_bounds(&env, 100, &PsiFamily::BoundedUnit, BoundOptions::default()).unwrap();
        let sample = 4.0 * (-50.0 * 2.0 * 0.05f64.powi(2)).exp();
        let prior = 2.0 * 2.0 * normal_cdf(-0.2 / 0.4);
        assert_abs_diff_eq!(e.raw, sample + prior, epsilon = 1e-12);
        assert!(e.raw > e_hat.raw);

        let wide = env_from(vec![vec![1.0], vec![0.0]], vec![1.0, 0.0], vec![0; 100]);
        let mut tight = wide.clone();
        tight.spec.sigma2 = 1e-6;
        let (e_tight, _) = thm2_bounds(&tight, 100, &PsiFamily::BoundedUnit, BoundOptions::default()).unwrap();
        assert_abs_diff_eq!(e_tight.raw, 4.0 * (-6.25f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn thm2_zero_gap_is_vacuous() {
        let env = env_from(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.5, 0.5], vec![0, 1, 0, 1]);
        let (_, e_hat) = thm2_bounds(&env, 4, &PsiFamily::BoundedUnit, BoundOptions::default()).unwrap();
        assert!(e_hat.raw >= 2.0 * 2.0);
        assert_eq!(e_hat.clamped, 1.0);
    }

    #[test]
    fn excluding_the_optimal_arm_drops_its_terms() {
        let env = env_from(vec![vec![0.6], vec![0.4]], vec![0.6, 0.4], vec![0; 100]);
        let with = thm2_bounds(&env, 100, &PsiFamily::BoundedUnit, BoundOptions::default()).unwrap().1;
        let without = thm2_bounds(&env, 100, &PsiFamily::BoundedUnit, BoundOptions { include_optimal: false }).unwrap().1;
        assert_abs_diff_eq!(with.raw, 2.0 * without.raw, epsilon = 1e-12);
        assert_ne!(with.inputs_digest, without.inputs_digest);
    }

    #[test]
    fn thm3_example() {
        let env = env_from(vec![vec![0.6], vec![0.4]], vec![0.6, 0.4], vec![0; 100]);
        let (r, r_hat) = thm3_bounds(&env, 50, BoundOptions::default()).unwrap();
        assert_abs_diff_eq!(r_hat.raw, 0.2 * (1.0 + (-1f64).exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(r_hat.raw, 0.2736, epsilon = 1e-4);
        assert_abs_diff_eq!(r.raw, r_hat.raw, epsilon = 1e-12);
    }

    #[test]
    fn thm3_self_term() {
        let env = env_from(vec![vec![0.7, 0.3], vec![0.2, 0.4]], vec![0.9, 0.1], vec![0, 1, 0, 1]);
        let g = gaps(&env);
        let (_, r_hat) = thm3_bounds(&env, 4, BoundOptions::default()).unwrap();
        let (_, without) = thm3_bounds(&env, 4, BoundOptions { include_optimal: false }).unwrap();
        assert_abs_diff_eq!(r_hat.raw - without.raw, g.delta_sigma[g.j_hat_star] * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn horizon_is_checked() {
        let env = env_from(vec![vec![0.6], vec![0.4]], vec![0.6, 0.4], vec![0; 10]);
        assert!(thm2_bounds(&env, 11, &PsiFamily::BoundedUnit, BoundOptions::default()).is_err());
        assert!(thm3_bounds(&env, 0, BoundOptions::default()).is_err());
    }

    #[test]
    fn sr_counts_examples() {
        let uniform = sr_schedule(ScheduleKind::Uniform, 2, 10).unwrap();
        assert_eq!(sr_counts(&[0; 10], 2, &uniform, 2), vec![vec![5], vec![0]]);

        let seq = vec![0, 1, 1, 0, 0, 0, 1, 0];
        let schedule = SrSchedule::new(ScheduleKind::Uniform, vec![4, 8]).unwrap();
        let table = sr_counts(&seq, 2, &schedule, 3);
        assert_eq!(table, vec![vec![0, 1], vec![0, 0]]);
        let env = env_from(vec![vec![0.5, 0.5], vec![0.4, 0.6], vec![0.3, 0.2]], vec![0.5; 3], seq);
        let out = successive_rejects(&env, &schedule, &mut crate::rng::stream(3, 0, 0, "t"), false).unwrap();
        assert_eq!(out.trace.min_counts(), table);
    }

    #[test]
    fn thm4_examples() {
        let env = env_from(vec![vec![0.8], vec![0.5], vec![0.2]], vec![0.8, 0.5, 0.2], vec![0; 90]);
        let g = gaps(&env);
        let ord = ArmOrdering::from_gaps(&g);
        assert_eq!(ord.by_sigma, vec![0, 1, 2]);

        let hand = sr_bound_from_counts(&env, &[vec![30, 45]], 0, &ord.by_sigma);
        assert_abs_diff_eq!(hand, (-10.8f64).exp() + 2.0 * (-4.05f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(hand, 0.0349, epsilon = 1e-4);

        let schedule = sr_schedule(ScheduleKind::Uniform, 3, 90).unwrap();
        assert_eq!(sr_counts(&env.spec.state_sequence, 1, &schedule, 3), vec![vec![15, 37]]);
        let (e, e_hat) = thm4_bounds(&env, &schedule, &ord).unwrap();
        assert_abs_diff_eq!(e_hat.raw, (-15.0 * 0.36f64).exp() + 2.0 * (-37.0 * 0.09f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.raw, e_hat.raw, epsilon = 1e-15);
    }

    #[test]
    fn thm4_degenerate_cases() {
        let two = env_from(vec![vec![0.7, 0.2], vec![0.4, 0.5]], vec![0.6, 0.4], vec![0, 1, 1, 0, 0, 1]);
        let schedule = sr_schedule(ScheduleKind::Uniform, 2, 6).unwrap();
        let (_, e_hat) = thm4_bounds(&two, &schedule, &ArmOrdering::from_gaps(&gaps(&two))).unwrap();
        let expect = 2.0 * (-0.09f64).exp();
        assert_abs_diff_eq!(e_hat.raw, expect, epsilon = 1e-12);

        let flat = env_from(vec![vec![0.5, 0.5]; 4], vec![0.5; 4], vec![0, 1].repeat(20));
        let schedule = sr_schedule(ScheduleKind::Uniform, 4, 40).unwrap();
        let (_, e_hat) = thm4_bounds(&flat, &schedule, &ArmOrdering::from_gaps(&gaps(&flat))).unwrap();
        assert_abs_diff_eq!(e_hat.raw, (1.0 + 2.0 + 3.0) * 2.0, epsilon = 1e-12);
        assert_eq!(e_hat.clamped, 1.0);

        let bad = ArmOrdering {
            by_sigma: vec![0, 0, 1, 2],
            by_mu: vec![0, 1, 2, 3],
        };
        assert!(thm4_bounds(&flat, &schedule, &bad).is_err());
    }

    #[test]
    fn bound_rows_csv() {
        let env = env_from(vec![vec![0.6, 0.1], vec![0.4, 0.3]], vec![0.6, 0.4], vec![0, 1, 0, 0]);
        let b = thm1_bound(&env, 3.0, 4, &PsiFamily::BoundedUnit).unwrap();
        let mut buf = Vec::new();
        write_bound_rows(&mut buf, &[BoundRow::new(b.clone(), &env, 4)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(BOUND_HEADER));
        assert_eq!(lines.next().unwrap(), format!("thm1,{},{},4,2,2,1", b.raw, b.clamped));
    }

    proptest! {
        #[test]
        fn probability_bounds_shrink_with_n(
            cells in proptest::collection::vec(0.0f64..=1.0, 6),
            mu in proptest::collection::vec(0.0f64..=1.0, 3),
            seq in proptest::collection::vec(0usize..2, 30..120),
        ) {
            let rows: Vec<Vec<f64>> = cells.chunks(2).map(<[f64]>::to_vec).collect();
            let n_max = seq.len();
            let env = env_from(rows, mu, seq);
            let fam = PsiFamily::BoundedUnit;
            let opts = BoundOptions::default();
            let mut prev: Option<(f64, f64, f64, f64)> = None;
            for n in (6..=n_max).step_by(3) {
                let (e, e_hat) = thm2_bounds(&env, n, &fam, opts).unwrap();
                let (r, r_hat) = thm3_bounds(&env, n, opts).unwrap();
                prop_assert!(e.clamped <= e.raw && e.clamped <= 1.0);
                if let Some(p) = prev {
                    prop_assert!(e.raw <= p.0 + 1e-12 && e_hat.raw <= p.1 + 1e-12);
                    prop_assert!(r.raw <= p.2 + 1e-12 && r_hat.raw <= p.3 + 1e-12);
                }
                prev = Some((e.raw, e_hat.raw, r.raw, r_hat.raw));
            }
        }
    }
}
