//! Slow, independent reference computations used to check the fast paths.
//!
//! Nothing in the simulation or bound code calls into this module; it exists
//! for the test suites and the `verify` command.

use rand::Rng;

use crate::divergence::PsiFamily;
use crate::env::{Environment, RewardFamily};

/// `sup_{lambda >= 0} (lambda x - psi(lambda))` by bracketing and golden-section search.
pub fn numeric_conjugate(fam: &PsiFamily, x: f64) -> f64 {
    let f = |l: f64| l * x - fam.psi(l).unwrap_or(f64::INFINITY);
    if x <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(2.0 * hi) > f(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..400 {
        if (b - a).abs() <= 1e-15 * b.abs().max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).max(0.0)
}

/// Inverse of [`numeric_conjugate`] on `[0, inf)` by bisection.
pub fn numeric_conjugate_inverse(fam: &PsiFamily, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while numeric_conjugate(fam, hi) < y {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if numeric_conjugate(fam, mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Standard normal CDF by adaptive Simpson integration of the density.
pub fn normal_cdf_integrated(x: f64) -> f64 {
    let pdf = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = (0.0, x.abs());
    if b == 0.0 {
        return 0.5;
    }
    let (fa, fm, fb) = (pdf(a), pdf(0.5 * b), pdf(b));
    let whole = b / 6.0 * (fa + 4.0 * fm + fb);
    let half = simpson(&pdf, a, b, fa, fm, fb, whole, 1e-14, 60);
    if x > 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Textbook single-context (alpha, psi)-UCB on per-arm reward streams.
///
/// `rewards[i][k]` is the reward returned by the `k`-th pull of arm `i`.
pub fn classical_ucb(rewards: &[Vec<f64>], n: usize, alpha: f64, fam: &PsiFamily) -> Vec<usize> {
    let k = rewards.len();
    let mut pulls = vec![0usize; k];
    let mut totals = vec![0.0f64; k];
    let mut choices = Vec::with_capacity(n);
    for t in 1..=n {
        let arm = match pulls.iter().position(|&p| p == 0) {
            Some(first) => first,
            None => {
                let ucb: Vec<f64> = (0..k)
                    .map(|i| {
                        let bonus = fam.psi_star_inv(alpha * (t as f64).ln() / pulls[i] as f64).unwrap();
                        totals[i] / pulls[i] as f64 + bonus
                    })
                    .collect();
                let top = ucb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ucb.iter().position(|&u| u == top).unwrap()
            }
        };
        totals[arm] += rewards[arm][pulls[arm]];
        pulls[arm] += 1;
        choices.push(arm);
    }
    choices
}

/// Classical single-context pseudo-regret bound
/// `sum_{Delta_i > 0} (alpha Delta_i / psi*(Delta_i / 2) ln n + alpha Delta_i / (alpha - 2))`.
pub fn classical_ucb_bound(deltas: &[f64], alpha: f64, n: usize, fam: &PsiFamily) -> f64 {
    deltas
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| alpha * d / fam.psi_star(d / 2.0).unwrap() * (n as f64).ln() + alpha * d / (alpha - 2.0))
        .sum()
}

/// Exact probability that uniform allocation + EBA over the first `n` rounds
/// does not recommend `target`, by enumerating every Bernoulli outcome string.
///
/// Panics unless the environment is Bernoulli and `n <= 20`.
pub fn exact_uniform_eba_error(env: &Environment, n: usize, target: usize) -> f64 {
    assert!(matches!(env.spec.reward_family, RewardFamily::Bernoulli));
    assert!(n <= 20, "enumeration over 2^{n} strings is too large");
    let k = env.arms();
    let s_count = env.states();
    let mut seen = vec![0usize; s_count];
    let mut plan = Vec::with_capacity(n);
    for t in 0..n {
        let s = env.spec.state_sequence[t];
        seen[s] += 1;
        plan.push((seen[s] % k, s));
    }
    let mut error = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut prob = 1.0;
        let mut ones = vec![vec![0.0f64; s_count]; k];
        let mut count = vec![vec![0u32; s_count]; k];
        for (t, &(arm, s)) in plan.iter().enumerate() {
            let m = env.means[(arm, s)];
            let hit = mask >> t & 1 == 1;
            prob *= if hit { m } else { 1.0 - m };
            ones[arm][s] += f64::from(u8::from(hit));
            count[arm][s] += 1;
        }
        if prob == 0.0 {
            continue;
        }
        let mut pick = None;
        let mut pick_val = f64::NEG_INFINITY;
        for arm in 0..k {
            let means: Vec<f64> = (0..s_count)
                .filter(|&s| count[arm][s] > 0)
                .map(|s| ones[arm][s] / f64::from(count[arm][s]))
                .collect();
            if means.is_empty() {
                continue;
            }
            let v = means.iter().sum::<f64>() / means.len() as f64;
            if v > pick_val {
                pick_val = v;
                pick = Some(arm);
            }
        }
        if pick != Some(target) {
            error += prob;
        }
    }
    error
}

/// One row of a re-simulated successive-rejects run: `(t, state, arm, reward, phase)`.
pub type SrRow = (usize, usize, usize, f64, usize);

/// Successive rejects re-derived step by step from its description, for
/// transcript comparison. Bernoulli rewards are drawn as `u < m` with one
/// uniform per round. Returns the rows and the surviving arm.
pub fn resimulate_successive_rejects<R: Rng + ?Sized>(env: &Environment, ends: &[usize], rng: &mut R) -> (Vec<SrRow>, usize) {
    assert!(matches!(env.spec.reward_family, RewardFamily::Bernoulli));
    let (k, s_count) = (env.arms(), env.states());
    let mut alive: Vec<usize> = (0..k).collect();
    let mut total = vec![vec![0.0f64; s_count]; k];
    let mut pulls = vec![vec![0u64; s_count]; k];
    let mut rows = Vec::new();
    let mut phase = 0;
    let mut within = vec![0usize; s_count];
    for t in 1..=*ends.last().unwrap() {
        let s = env.spec.state_sequence[t - 1];
        within[s] += 1;
        let arm = alive[within[s] % alive.len()];
        let u: f64 = rng.random();
        let reward = if u < env.means[(arm, s)] { 1.0 } else { 0.0 };
        total[arm][s] += reward;
        pulls[arm][s] += 1;
        rows.push((t, s, arm, reward, phase + 1));
        if t == ends[phase] {
            let stat = |i: usize| -> f64 {
                (0..s_count)
                    .map(|s| if pulls[i][s] == 0 { 0.0 } else { total[i][s] / pulls[i][s] as f64 })
                    .sum()
            };
            let scores: Vec<f64> = alive.iter().map(|&i| stat(i)).collect();
            let low = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let at = scores.iter().position(|&v| v == low).unwrap();
            alive.remove(at);
            phase += 1;
            within = vec![0; s_count];
        }
    }
    (rows, alive[0])
}
