use esgym::engine::{CellId, Simulation};
use esgym::env::{decode_action, ActionBits};
use esgym::scenario::build_default_scenario;
use proptest::prelude::*;

fn check_invariants(sim: &Simulation) {
    let cfg = sim.config();
    let anchor = sim.anchor();
    for cell in sim.cells() {
        assert!((0.0..=1.0).contains(&cell.load), "cell {} load {}", cell.id, cell.load);
        if !cell.active {
            assert!(cell.attached_ues.is_empty(), "sleeping cell {} serves UEs", cell.id);
            assert_eq!(cell.power_w, cfg.energy.p_sleep_w);
        }
    }
    assert!(sim.cells()[anchor.index()].active);
    for ue in sim.ues() {
        let serving = &sim.cells()[ue.serving_cell.index()];
        assert!(serving.active, "{} on sleeping cell {}", ue.imsi, ue.serving_cell);
        assert!(serving.attached_ues.contains(&ue.imsi));
        assert!(ue.served_mbps <= ue.demand_mbps);
        assert!(ue.backlog_mbits >= 0.0);
        assert!(cfg.area_bounds.contains(&ue.position));
    }
    let attached: usize = sim.cells().iter().map(|c| c.attached_ues.len()).sum();
    assert_eq!(attached, sim.ues().len());
}

#[test]
fn invariants_hold_along_a_switching_episode() {
    let mut sim = Simulation::reset(build_default_scenario(5)).unwrap();
    check_invariants(&sim);
    for k in 0..200u64 {
        sim.apply_action(&decode_action((k * 29 + 3) % 128, 7).unwrap()).unwrap();
        check_invariants(&sim);
        sim.tick();
        check_invariants(&sim);
    }
}

#[test]
fn every_ue_row_has_a_unique_imsi_per_tick() {
    let mut sim = Simulation::reset(build_default_scenario(1)).unwrap();
    for _ in 0..5 {
        let out = sim.tick();
        let mut imsis: Vec<_> = out.ue_rows.iter().map(|r| r.imsi).collect();
        imsis.dedup();
        assert_eq!(imsis.len(), 63);
        assert_eq!(out.cell_rows.len(), 8);
        assert!(out.ue_rows.iter().all(|r| r.timestamp_ms == out.cell_rows[0].timestamp_ms));
    }
}

#[test]
fn anchor_takes_everyone_when_all_gnbs_sleep() {
    let mut sim = Simulation::reset(build_default_scenario(2)).unwrap();
    sim.apply_action(&ActionBits::all_off(7)).unwrap();
    sim.tick();
    let anchor = sim.anchor();
    assert_eq!(anchor, CellId(7));
    assert!(sim.ues().iter().all(|u| u.serving_cell == anchor));
    check_invariants(&sim);
}

#[test]
fn cloned_simulations_evolve_identically() {
    let mut a = Simulation::reset(build_default_scenario(8)).unwrap();
    for _ in 0..10 {
        a.tick();
    }
    let mut b = a.clone();
    for _ in 0..30 {
        let ra = a.tick();
        let rb = b.tick();
        assert_eq!(ra.ue_rows, rb.ue_rows);
        assert_eq!(ra.cell_rows, rb.cell_rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn served_throughput_is_conserved(seed in any::<u64>(), actions in prop::collection::vec(0u64..128, 1..20)) {
        let mut sim = Simulation::reset(build_default_scenario(seed)).unwrap();
        for a in actions {
            sim.apply_action(&decode_action(a, 7).unwrap()).unwrap();
            let out = sim.tick();
            let cells: f64 = out.cell_rows.iter().map(|r| r.dl_throughput_mbps).sum();
            let ues: f64 = out.ue_rows.iter().map(|r| r.dl_throughput_mbps).sum();
            prop_assert_eq!(cells, ues);
            let mut reversed: Vec<f64> = out.ue_rows.iter().map(|r| r.dl_throughput_mbps).collect();
            reversed.reverse();
            prop_assert_eq!(reversed.iter().sum::<f64>(), ues);
        }
    }
}
