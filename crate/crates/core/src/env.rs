//! Environments: arms with global utilities, per-state local means, an
//! exogenous state sequence, and reward sampling.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::rng::{self, purpose};
use crate::{Error, Result};

/// Reward distribution `eta_{i,s}` around the local mean `m_{i,s}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFamily {
    #[default]
    Bernoulli,
    /// `Normal(m, variance)` clamped to `[0, 1]`. A zero variance gives noiseless rewards.
    TruncatedGaussian { variance: f64 },
}


/// How generated state sequences visit the states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOrder {
    /// Each step draws a state uniformly at random.
    #[default]
    Iid,
    /// `0, 1, ..., S-1, 0, 1, ...`
    RoundRobin,
    /// `S` contiguous blocks of (nearly) equal length.
    Blocks,
}

impl StateOrder {
    pub fn generate<R: Rng + ?Sized>(self, states: usize, len: usize, rng: &mut R) -> Vec<usize> {
        assert!(states > 0, "state count must be positive");
        match self {
            StateOrder::Iid => (0..len).map(|_| rng.random_range(0..states)).collect(),
            StateOrder::RoundRobin => (0..len).map(|t| t % states).collect(),
            StateOrder::Blocks => (0..len).map(|t| t * states / len.max(1)).collect(),
        }
    }
}

/// `Sigma_s(t)`: visits to state `s` among the first `t` steps.
pub fn sigma_count(sequence: &[usize], state: usize, t: usize) -> usize {
    sequence[..t.min(sequence.len())]
        .iter()
        .filter(|&&x| x == state)
        .count()
}

/// Visit counts of every state among the first `t` steps.
pub fn state_visits(sequence: &[usize], states: usize, t: usize) -> Vec<usize> {
    let mut counts = vec![0; states];
    for &s in &sequence[..t.min(sequence.len())] {
        counts[s] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub arms: usize,
    pub states: usize,
    /// Global utilities `mu_i`, one per arm.
    pub mu: Vec<f64>,
    /// Variance of the prior `nu_i = Normal(mu_i, sigma2)` that instantiates local means.
    pub sigma2: f64,
    #[serde(default)]
    pub reward_family: RewardFamily,
    /// `s_1, ..., s_n` as zero-based state indices; its length is the horizon.
    pub state_sequence: Vec<usize>,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn horizon(&self) -> usize {
        self.state_sequence.len()
    }

    /// Checks hard invariants; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |field, reason: String| Err(Error::InvalidSpec { field, reason });
        if self.arms < 2 {
            return bad("arms", format!("need at least 2 arms, got {}", self.arms));
        }
        if self.states < 1 {
            return bad("states", "need at least 1 state".into());
        }
        if self.mu.len() != self.arms {
            return bad("mu", format!("expected {} utilities, got {}", self.arms, self.mu.len()));
        }
        if let Some((i, m)) = self.mu.iter().enumerate().find(|(_, m)| !(0.0..=1.0).contains(*m)) {
            return bad("mu", format!("mu[{i}] = {m} is outside [0, 1]"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad("sigma2", format!("must be positive and finite, got {}", self.sigma2));
        }
        if let RewardFamily::TruncatedGaussian { variance } = self.reward_family {
            if !(variance.is_finite() && variance >= 0.0) {
                return bad("reward_family", format!("variance must be >= 0, got {variance}"));
            }
        }
        if self.state_sequence.is_empty() {
            return bad("state_sequence", "horizon must be at least 1".into());
        }
        if let Some(&s) = self.state_sequence.iter().find(|&&s| s >= self.states) {
            return bad("state_sequence", format!("state {s} is not below S = {}", self.states));
        }

        let mut warnings = Vec::new();
        let n = self.horizon();
        if n < self.arms * self.states {
            warnings.push(format!(
                "horizon {n} < K*S = {}: some (arm, state) cells cannot all be visited",
                self.arms * self.states
            ));
        }
        let visits = state_visits(&self.state_sequence, self.states, n);
        let thin: Vec<usize> = (0..self.states).filter(|&s| visits[s] < self.arms).collect();
        if !thin.is_empty() {
            warnings.push(format!(
                "states {thin:?} are visited fewer than K = {} times; uniform allocation leaves cells empty",
                self.arms
            ));
        }
        Ok(warnings)
    }
}

/// An instantiated environment: the spec plus the local means `m_{i,s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub spec: EnvironmentSpec,
    /// `m_{i,s}`, rows are arms.
    pub means: Grid<f64>,
}

/// Draws `m_{i,s} ~ Normal(mu_i, sigma2)`, clamped to `[0, 1]`, from the spec's seed.
///
/// Draw order is arm-major, so the underlying normal draws do not depend on `mu`.
pub fn instantiate(spec: &EnvironmentSpec) -> Result<Environment> {
    for w in spec.validate()? {
        log::warn!("{w}");
    }
    let mut rng = rng::stream(spec.seed, 0, 0, purpose::INSTANTIATE);
    let sd = spec.sigma2.sqrt();
    let mut means = Grid::filled(spec.arms, spec.states, 0.0);
    for i in 0..spec.arms {
        for s in 0..spec.states {
            let z: f64 = rng.sample(StandardNormal);
            means[(i, s)] = (spec.mu[i] + sd * z).clamp(0.0, 1.0);
        }
    }
    Ok(Environment {
        spec: spec.clone(),
        means,
    })
}

impl Environment {
    /// Builds an environment with explicitly chosen local means.
    pub fn with_means(spec: EnvironmentSpec, means: Grid<f64>) -> Result<Self> {
        spec.validate()?;
        if means.arms() != spec.arms || means.states() != spec.states {
            return Err(Error::InvalidSpec {
                field: "means",
                reason: format!(
                    "table is {}x{}, spec is {}x{}",
                    means.arms(),
                    means.states(),
                    spec.arms,
                    spec.states
                ),
            });
        }
        if let Some(m) = means.cells().iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidSpec {
                field: "means",
                reason: format!("local mean {m} is outside [0, 1]"),
            });
        }
        Ok(Self { spec, means })
    }

    pub fn arms(&self) -> usize {
        self.spec.arms
    }

    pub fn states(&self) -> usize {
        self.spec.states
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    /// State at the 1-based time `t`.
    #[inline]
    pub fn state_at(&self, t: usize) -> usize {
        self.spec.state_sequence[t - 1]
    }

    /// Samples the reward of `arm` at 1-based time `t`.
    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, t: usize, rng: &mut R) -> Result<f64> {
        if arm >= self.arms() {
            return Err(Error::OutOfRange {
                what: "arm",
                value: arm,
                limit: self.arms(),
            });
        }
        if t == 0 || t > self.horizon() {
            return Err(Error::OutOfRange {
                what: "time",
                value: t,
                limit: self.horizon() + 1,
            });
        }
        Ok(self.sample(arm, self.state_at(t), rng))
    }

    /// Samples a reward for `(arm, state)` without bounds checks beyond indexing.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, arm: usize, state: usize, rng: &mut R) -> f64 {
        let m = self.means[(arm, state)];
        match self.spec.reward_family {
            RewardFamily::Bernoulli => {
                if rng.random::<f64>() < m {
                    1.0
                } else {
                    0.0
                }
            }
            RewardFamily::TruncatedGaussian { variance } => {
                let z: f64 = rng.sample(StandardNormal);
                (m + variance.sqrt() * z).clamp(0.0, 1.0)
            }
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let env: Environment = serde_json::from_str(&fs::read_to_string(path)?)?;
        Environment::with_means(env.spec, env.means)
    }
}

/// Hardness quantities of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `Delta^m_{i,s} = m*_s - m_{i,s}`.
    pub delta_m: Grid<f64>,
    /// `Delta^Sigma_i`, gap of the state-averaged mean to the empiric best;
    /// the empiric best itself gets the smallest gap among the others.
    pub delta_sigma: Vec<f64>,
    /// `Delta^mu_i`, same convention against the global best.
    pub delta_mu: Vec<f64>,
    /// Global best arm `j*` (highest `mu`).
    pub j_star: usize,
    /// Empiric best arm (highest state-averaged local mean).
    pub j_hat_star: usize,
    /// `m*_s` per state.
    pub m_star_per_state: Vec<f64>,
    /// Per-state argmax arm `i*_s`.
    pub i_star_per_state: Vec<usize>,
    /// State-averaged local mean per arm.
    pub state_average: Vec<f64>,
}

/// Index of the maximum, ties to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn gaps_against(values: &[f64], best: usize) -> Vec<f64> {
    let top = values[best];
    let mut gaps: Vec<f64> = values.iter().map(|v| top - v).collect();
    gaps[best] = gaps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &g)| g)
        .fold(f64::INFINITY, f64::min);
    gaps
}

pub fn gaps(env: &Environment) -> GapReport {
    let (k, s_count) = (env.arms(), env.states());
    let m = &env.means;

    let mut delta_m = Grid::filled(k, s_count, 0.0);
    let mut m_star = Vec::with_capacity(s_count);
    let mut i_star = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let column: Vec<f64> = (0..k).map(|i| m[(i, s)]).collect();
        let best = argmax(&column);
        i_star.push(best);
        m_star.push(column[best]);
        for i in 0..k {
            delta_m[(i, s)] = column[best] - column[i];
        }
    }

    let state_average: Vec<f64> = m.rows().map(|r| r.iter().sum::<f64>() / s_count as f64).collect();
    let j_hat_star = argmax(&state_average);
    let j_star = argmax(&env.spec.mu);

    GapReport {
        delta_m,
        delta_sigma: gaps_against(&state_average, j_hat_star),
        delta_mu: gaps_against(&env.spec.mu, j_star),
        j_star,
        j_hat_star,
        m_star_per_state: m_star,
        i_star_per_state: i_star,
        state_average,
    }
}

impl GapReport {
    /// Smallest `Delta^Sigma` over non-optimal arms.
    pub fn delta_sigma_min(&self) -> f64 {
        self.delta_sigma[self.j_hat_star]
    }

    /// `m^` : the best state-averaged local mean.
    pub fn m_hat_star(&self) -> f64 {
        self.state_average[self.j_hat_star]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn spec(mu: Vec<f64>, states: usize, sigma2: f64, seq: Vec<usize>, seed: u64) -> EnvironmentSpec {
        EnvironmentSpec {
            arms: mu.len(),
            states,
            mu,
            sigma2,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: seq,
            seed,
        }
    }

    fn env_with(rows: Vec<Vec<f64>>, mu: Vec<f64>) -> Environment {
        let s = rows[0].len();
        let seq = (0..10 * s).map(|t| t % s).collect();
        Environment::with_means(spec(mu, s, 0.01, seq, 0), Grid::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_prior_reproduces_mu() {
        let sp = spec(vec![0.1, 0.5, 0.93], 4, 1e-12, vec![0, 1, 2, 3], 3);
        let env = instantiate(&sp).unwrap();
        for i in 0..3 {
            for s in 0..4 {
                assert_abs_diff_eq!(env.means[(i, s)], sp.mu[i], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn instantiation_is_deterministic() {
        let sp = spec(vec![0.3, 0.6], 3, 0.1, vec![0, 1, 2, 0, 1, 2], 7);
        let a = instantiate(&sp).unwrap();
        let b = instantiate(&sp).unwrap();
        assert_eq!(a.means.cells().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   b.means.cells().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn global_and_empiric_best_can_disagree() {
        // Search seeds until the state-averaged means invert the order of mu.
        let seed = (0u64..10_000)
            .find(|&seed| {
                let env = instantiate(&spec(vec![0.55, 0.65], 2, 0.05, vec![0, 1, 0, 1], seed)).unwrap();
                let avg = |i| (env.means[(i, 0)] + env.means[(i, 1)]) / 2.0;
                avg(0) > avg(1)
            })
            .expect("an inverting seed exists");
        let env = instantiate(&spec(vec![0.55, 0.65], 2, 0.05, vec![0, 1, 0, 1], seed)).unwrap();
        let g = gaps(&env);
        assert_eq!(g.j_star, 1);
        assert_eq!(g.j_hat_star, 0);
    }

    #[test]
    fn validation_errors_name_the_field() {
        let mut sp = spec(vec![0.3, 0.6], 2, 0.1, vec![0, 1], 1);
        sp.mu[1] = 1.5;
        assert!(matches!(sp.validate(), Err(Error::InvalidSpec { field: "mu", .. })));
        let sp = spec(vec![0.3], 1, 0.1, vec![0], 1);
        assert!(matches!(sp.validate(), Err(Error::InvalidSpec { field: "arms", .. })));
        let sp = spec(vec![0.3, 0.4], 2, 0.0, vec![0], 1);
        assert!(matches!(sp.validate(), Err(Error::InvalidSpec { field: "sigma2", .. })));
        let sp = spec(vec![0.3, 0.4], 2, 0.1, vec![0, 2], 1);
        assert!(matches!(sp.validate(), Err(Error::InvalidSpec { field: "state_sequence", .. })));
    }

    #[test]
    fn short_horizon_is_a_warning() {
        let sp = spec(vec![0.3, 0.6, 0.9], 2, 0.1, vec![0, 1], 1);
        let w = sp.validate().unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn bernoulli_extremes() {
        let env = env_with(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]);
        let mut rng = rng::stream(1, 0, 0, "t");
        for t in 1..=20 {
            let r0 = env.pull(0, t, &mut rng).unwrap();
            assert_eq!(r0, if env.state_at(t) == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn bernoulli_mean_converges() {
        let env = env_with(vec![vec![0.3], vec![0.5]], vec![0.3, 0.5]);
        let mut rng = rng::stream(2, 0, 0, "t");
        let n = 100_000;
        let mean = (0..n).map(|_| env.sample(0, 0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.3).abs() <= 3.0 * (0.21f64 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn pull_rejects_out_of_range() {
        let env = env_with(vec![vec![0.3], vec![0.5]], vec![0.3, 0.5]);
        let mut rng = rng::stream(2, 0, 0, "t");
        assert!(matches!(env.pull(2, 1, &mut rng), Err(Error::OutOfRange { what: "arm", .. })));
        assert!(matches!(env.pull(0, 0, &mut rng), Err(Error::OutOfRange { what: "time", .. })));
        assert!(env.pull(0, 11, &mut rng).is_err());
    }

    #[test]
    fn sigma_count_examples() {
        let seq = [0, 1, 0];
        assert_eq!(sigma_count(&seq, 0, 3), 2);
        assert_eq!(sigma_count(&seq, 1, 1), 0);
        assert_eq!(sigma_count(&seq, 0, 0), 0);
        assert_eq!(state_visits(&seq, 2, 3).iter().sum::<usize>(), 3);
    }

    #[test]
    fn gap_examples() {
        let env = env_with(vec![vec![0.9, 0.5], vec![0.6, 0.7]], vec![0.5, 0.5]);
        let g = gaps(&env);
        assert_eq!(g.j_hat_star, 0);
        assert_abs_diff_eq!(g.delta_sigma[1], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_sigma[0], 0.05, epsilon = 1e-12);
        assert_eq!(g.m_star_per_state, vec![0.9, 0.7]);
        assert_abs_diff_eq!(g.delta_m[(0, 0)], 0.0);
        assert_abs_diff_eq!(g.delta_m[(0, 1)], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_m[(1, 0)], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_m[(1, 1)], 0.0);

        let flat = env_with(vec![vec![0.4, 0.4], vec![0.4, 0.4]], vec![0.4, 0.4]);
        let g = gaps(&flat);
        assert_eq!((g.j_star, g.j_hat_star), (0, 0));
        assert!(g.delta_m.cells().iter().chain(&g.delta_sigma).chain(&g.delta_mu).all(|&d| d == 0.0));

        let two = env_with(vec![vec![0.2], vec![0.8]], vec![0.2, 0.8]);
        let g = gaps(&two);
        assert_eq!(g.j_star, 1);
        assert_abs_diff_eq!(g.delta_mu[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta_mu[1], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn environment_file_round_trip() {
        let sp = spec(vec![0.3, 0.6], 2, 0.1, vec![0, 1, 1], 11);
        let env = instantiate(&sp).unwrap();
        let dir = std::env::temp_dir().join(format!("sbcb-env-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("env.json");
        env.save_json(&path).unwrap();
        let back = Environment::load_json(&path).unwrap();
        assert_eq!(back, env);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn generated_orders() {
        let mut rng = rng::stream(0, 0, 0, "t");
        assert_eq!(StateOrder::RoundRobin.generate(3, 5, &mut rng), vec![0, 1, 2, 0, 1]);
        assert_eq!(StateOrder::Blocks.generate(2, 5, &mut rng), vec![0, 0, 0, 1, 1]);
        let iid = StateOrder::Iid.generate(4, 1000, &mut rng);
        assert!(iid.iter().all(|&s| s < 4));
    }

    proptest! {
        #[test]
        fn one_zero_gap_per_state(cells in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let rows: Vec<Vec<f64>> = cells.chunks(3).map(<[f64]>::to_vec).collect();
            let env = env_with(rows, vec![0.5; 4]);
            let g = gaps(&env);
            for s in 0..3 {
                let i_star = g.i_star_per_state[s];
                prop_assert_eq!(g.delta_m[(i_star, s)], 0.0);
                for i in 0..4 {
                    prop_assert!(g.delta_m[(i, s)] >= 0.0);
                    if g.delta_m[(i, s)] == 0.0 { prop_assert!(i >= i_star); }
                }
            }
            let others_min = (0..4).filter(|&i| i != g.j_hat_star).map(|i| g.delta_sigma[i]).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(g.delta_sigma[g.j_hat_star], others_min);
        }

        #[test]
        fn clamp_is_monotone_in_mu(mu in proptest::collection::vec(0.0f64..0.9, 3), bump in 0.0f64..0.1, sigma2 in 0.001f64..0.3, seed in 0u64..1000) {
            let lo = instantiate(&spec(mu.clone(), 4, sigma2, vec![0, 1, 2, 3], seed)).unwrap();
            let hi_mu: Vec<f64> = mu.iter().map(|m| m + bump).collect();
            let hi = instantiate(&spec(hi_mu, 4, sigma2, vec![0, 1, 2, 3], seed)).unwrap();
            for (a, b) in lo.means.cells().iter().zip(hi.means.cells()) {
                prop_assert!(b >= a);
            }
        }
    }
}
