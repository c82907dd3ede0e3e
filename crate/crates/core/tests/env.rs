use esgym::env::{
    compute_reward, decode_action, encode_action, kpm, reward_from_info, switching_penalty, ActionBits,
    EnergySavingEnv, RewardInputs, RewardWeights,
};
use esgym::scenario::{build_default_scenario, hex_layout};
use esgym::{Error, ScenarioConfig};
use proptest::prelude::*;

fn scenario_with(n_gnbs: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = build_default_scenario(seed);
    cfg.n_gnbs = n_gnbs;
    cfg.gnb_positions = hex_layout(cfg.inter_site_distance_m, n_gnbs - 1);
    cfg.reward = RewardWeights::for_network(n_gnbs, &cfg.energy);
    cfg.n_ues = 20;
    cfg.episode_steps = 3;
    cfg
}

#[test]
fn observation_length_for_every_small_network() {
    for n in 1..=10 {
        let mut env = EnergySavingEnv::new(scenario_with(n, 3)).unwrap();
        let (obs, _) = env.reset().unwrap();
        assert_eq!(obs.len(), 12 * n + 1, "reset, N={n}");
        let step = env.step(&ActionBits::all_on(n)).unwrap();
        assert_eq!(step.observation.len(), 12 * n + 1, "step, N={n}");
        assert_eq!(step.observation.n_cells(), n);
    }
}

#[test]
fn encode_decode_bijection_up_to_ten_cells() {
    for n in 1..=10usize {
        let mut seen = vec![false; 1 << n];
        for k in 0..(1u64 << n) {
            let bits = decode_action(k, n).unwrap();
            assert_eq!(bits.len(), n);
            let back = encode_action(&bits);
            assert_eq!(back, k);
            assert!(!seen[back as usize]);
            seen[back as usize] = true;
        }
        assert!(decode_action(1 << n, n).is_err());
    }
}

#[test]
fn episode_terminates_exactly_at_the_bound() {
    let mut cfg = build_default_scenario(42);
    cfg.episode_steps = 600;
    let mut env = EnergySavingEnv::new(cfg).unwrap();
    env.reset().unwrap();
    for k in 1..=600 {
        let step = env.step(&ActionBits::all_on(7)).unwrap();
        assert_eq!(step.terminated, k == 600, "step {k}");
    }
    assert!(matches!(env.step(&ActionBits::all_on(7)), Err(Error::Lifecycle(_))));
    env.reset().unwrap();
    assert!(env.step(&ActionBits::all_on(7)).is_ok());
}

#[test]
fn fresh_episode_reports_every_cell_active() {
    let mut env = EnergySavingEnv::new(build_default_scenario(42)).unwrap();
    env.reset().unwrap();
    let step = env.step(&ActionBits::all_on(7)).unwrap();
    for c in 0..7 {
        assert_eq!(step.observation.cell_block(c)[kpm::IS_ACTIVE], 1.0);
    }
}

#[test]
fn same_seed_and_actions_give_same_rewards() {
    let actions: Vec<ActionBits> = (0..40u64).map(|k| decode_action((k * 37) % 128, 7).unwrap()).collect();
    let rewards = || {
        let mut env = EnergySavingEnv::new(build_default_scenario(42)).unwrap();
        env.reset().unwrap();
        actions.iter().map(|a| env.step(a).unwrap().reward).collect::<Vec<_>>()
    };
    assert_eq!(rewards(), rewards());
}

#[test]
fn switching_off_an_idle_cell_saves_energy() {
    // four UEs leave most gNBs idle
    let mut cfg = build_default_scenario(42);
    cfg.n_ues = 4;
    cfg.episode_steps = 100;
    let mut env = EnergySavingEnv::new(cfg.clone()).unwrap();
    env.reset().unwrap();
    let idle = (0..7)
        .find(|&c| env.simulation().unwrap().cells()[c].attached_ues.is_empty())
        .expect("an idle gNB at four UEs");
    let energy = |action: &ActionBits| {
        let mut env = EnergySavingEnv::new(cfg.clone()).unwrap();
        env.reset().unwrap();
        (0..cfg.episode_steps).map(|_| env.step(action).unwrap().info["power_w"]).sum::<f64>()
    };
    let mut one_off = ActionBits::all_on(7);
    one_off.set(idle, false);
    assert!(energy(&one_off) < energy(&ActionBits::all_on(7)));
}

#[test]
fn reward_recomputes_from_info() {
    let cfg = build_default_scenario(9);
    let weights = cfg.reward;
    let mut env = EnergySavingEnv::new(cfg).unwrap();
    env.reset().unwrap();
    for k in 0..60u64 {
        let step = env.step(&decode_action((k * 53 + 11) % 128, 7).unwrap()).unwrap();
        assert_eq!(reward_from_info(&weights, &step.info), Some(step.reward), "step {k}");
    }
}

fn weights() -> RewardWeights {
    build_default_scenario(0).reward
}

proptest! {
    #[test]
    fn reward_non_increasing_in_switching(
        t in 0.0..1000.0f64,
        p in 0.0..2000.0f64,
        n_on in 0usize..7,
        n_changed in 0usize..7,
        dt in 0.0..60.0f64,
    ) {
        let w = weights();
        let base = RewardInputs { throughput_mbps: t, power_w: p, n_on, n_changed, t_since_last_change_s: dt };
        let r = compute_reward(&w, &base);
        let more_changes = RewardInputs { n_changed: n_changed + 1, ..base };
        let more_on = RewardInputs { n_on: n_on + 1, ..base };
        prop_assert!(compute_reward(&w, &more_changes) <= r);
        prop_assert!(compute_reward(&w, &more_on) <= r);
    }

    #[test]
    fn quicker_changes_cost_more(
        dt1 in 0.0..10.0f64,
        gap in 1e-3..10.0f64,
        n_changed in 1usize..=7,
        n_on in 0usize..=7,
    ) {
        let w = weights();
        let n_on = n_on.min(n_changed);
        let dt2 = dt1 + gap;
        prop_assert!(switching_penalty(&w, n_on, n_changed, dt1) > switching_penalty(&w, n_on, n_changed, dt2));
    }

    #[test]
    fn unchanged_action_has_no_switching_cost(t in 0.0..1000.0f64, p in 0.0..2000.0f64, dt in 0.0..60.0f64) {
        let w = weights();
        let r = compute_reward(&w, &RewardInputs {
            throughput_mbps: t, power_w: p, n_on: 0, n_changed: 0, t_since_last_change_s: dt,
        });
        let expected = w.w_throughput * t / w.t_max_mbps - w.w_energy * p / w.p_max_w;
        prop_assert!((r - expected).abs() <= 1e-12);
    }
}
