use rand::Rng;
use sbcb_core::divergence::PsiFamily;
use sbcb_core::env::{instantiate, EnvironmentSpec, RewardFamily, StateOrder};
use sbcb_core::oracle;
use sbcb_core::rng::stream;
use sbcb_core::strategies::{sb_ucb_select, sr_schedule, successive_rejects, PullStats, ScheduleKind};

fn reward_streams(means: &[f64], len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0, 0, "streams");
    means
        .iter()
        .map(|&m| (0..len).map(|_| f64::from(u8::from(rng.random::<f64>() < m))).collect())
        .collect()
}

#[test]
fn single_state_sb_ucb_is_classical_ucb() {
    let means = [0.45, 0.6, 0.5, 0.2];
    for (seed, fam) in [(1, PsiFamily::BoundedUnit), (2, PsiFamily::Gaussian { variance: 0.25 })] {
        let rewards = reward_streams(&means, 400, seed);
        let mut stats = PullStats::new(means.len(), 1);
        let mut ours = Vec::new();
        let mut drawn = vec![0; means.len()];
        for t in 1..=400u64 {
            let arm = sb_ucb_select(&stats, 0, t, 3.0, &fam).unwrap();
            stats.record(arm, 0, rewards[arm][drawn[arm]]);
            drawn[arm] += 1;
            ours.push(arm);
        }
        assert_eq!(ours, oracle::classical_ucb(&rewards, 400, 3.0, &fam));
    }
}

#[test]
fn successive_rejects_transcripts_agree() {
    for seed in 0..20 {
        let spec = EnvironmentSpec {
            arms: 3 + (seed as usize % 3),
            states: 2,
            mu: vec![0.2, 0.5, 0.55, 0.7, 0.4][..3 + (seed as usize % 3)].to_vec(),
            sigma2: 0.05,
            reward_family: RewardFamily::Bernoulli,
            state_sequence: StateOrder::Iid.generate(2, 60, &mut stream(seed, 0, 0, "seq")),
            seed,
        };
        let env = instantiate(&spec).unwrap();
        for kind in [ScheduleKind::Uniform, ScheduleKind::Reference] {
            let schedule = sr_schedule(kind, env.arms(), 60).unwrap();
            let live = successive_rejects(&env, &schedule, &mut stream(seed, 1, 0, "run"), true).unwrap();
            let (rows, survivor) = oracle::resimulate_successive_rejects(&env, &schedule.ends, &mut stream(seed, 1, 0, "run"));
            let live_rows: Vec<oracle::SrRow> = live.trace.steps.iter().map(|s| (s.t, s.state, s.arm, s.reward, s.phase)).collect();
            assert_eq!(live_rows, rows);
            assert_eq!(live.recommended, survivor);
        }
    }
}
