use std::path::Path;

use proptest::prelude::*;

use pvjtcs::io::ScenarioConfig;
use pvjtcs::model::{GameParams, PriceCurve};
use pvjtcs::simulator::{run, Mode, RunOptions, RunSummary, Scenario};
use pvjtcs::synth::{generate, SyntheticSpec, HOURLY_PRICES};

fn bundled() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/manhattan-mini/scenario.toml");
    let cfg = ScenarioConfig::load(&path).unwrap();
    cfg.build_scenario(cfg.seed).unwrap()
}

fn small(seed: u64, fleet: usize, requests: usize, slots: usize, energy: (f64, f64)) -> Scenario {
    let spec = SyntheticSpec {
        seed,
        columns: 3,
        rows: 6,
        regions: 3,
        requests,
        fleet_size: fleet,
        slots,
        ..SyntheticSpec::default()
    };
    let s = generate(&spec).unwrap();
    let params = GameParams {
        fleet_size: fleet,
        ..GameParams::default()
    };
    let prices = PriceCurve::new((0..slots).map(|t| HOURLY_PRICES[(3 + t) % 24]).collect()).unwrap();
    Scenario::new(
        s.graph,
        s.stations,
        s.regions,
        s.requests,
        prices,
        params,
        seed,
        spec.day_start + 3 * 3600,
        slots,
        energy,
    )
    .unwrap()
}

fn check_invariants(s: &RunSummary, c: f64) {
    let a = &s.audit;
    assert_eq!(a.energy_out_of_bounds, 0);
    assert_eq!(a.full_pv_charged, 0);
    assert_eq!(a.transported_and_charged, 0);
    assert_eq!(a.strategy_violations, 0);
    assert_eq!(a.dry_run_hash_mismatches, 0);
    assert!(a.ledger_max_gap <= 1e-9, "ledger gap {}", a.ledger_max_gap);
    assert!(a.fleet_sum_max_gap <= 1e-9);
    assert!(a.min_energy_kwh >= 0.0 && a.max_energy_kwh <= c);
    let l = &s.ledger;
    assert!(l.remaining.iter().chain(&l.consumed).chain(&l.charged).chain(&l.payment).all(|&v| v >= 0.0));
    let charged: f64 = s.slots.iter().map(|m| m.charged_kwh).sum();
    assert!((charged - s.total_charged_kwh).abs() <= 1e-9);
    let paid: f64 = s.slots.iter().map(|m| m.price * m.charged_kwh).sum();
    assert!((paid - s.total_payment_cents).abs() <= 1e-9);
    if let Some(p) = s.average_price {
        assert!((p - paid / charged).abs() <= 1e-12);
    }
    assert_eq!(s.served + s.waiting, s.requests);
    assert_eq!(s.served, s.slots.iter().map(|m| m.served).sum::<usize>());
}

#[test]
fn bundled_day_keeps_every_invariant() {
    let sc = bundled();
    assert_eq!((sc.params.fleet_size, sc.regions.count(), sc.requests.len(), sc.slots), (20, 5, 200, 24));
    for mode in [Mode::Jtcs, Mode::Tgc] {
        let out = run(&sc, mode, RunOptions::default()).unwrap();
        check_invariants(&out.summary, sc.params.c);
    }
}

#[test]
fn jtcs_follows_the_slot_game() {
    let sc = bundled();
    let out = run(&sc, Mode::Jtcs, RunOptions { keep_vi_traces: true }).unwrap();
    let s = &out.summary;
    let (_, plan) = out.day_ahead.as_ref().unwrap();
    for m in &s.slots {
        let planned = m.planned_kwh.unwrap();
        let granted = m.granted_kwh.unwrap();
        assert_eq!(planned, plan.e_plus[m.slot]);
        assert!(granted <= planned + 1e-9);
        // psi = m - ceil(m x) <= m (1 - x), so charging never exceeds the grant.
        assert!(m.charged_kwh <= granted + 1e-6, "slot {}: {} > {granted}", m.slot, m.charged_kwh);
        if let Some(k) = m.kkt_residual {
            assert!(k <= 1e-3, "slot {} kkt {k}", m.slot);
        }
    }
    assert!(out.vi_traces.iter().all(|(_, t)| t.final_residual().is_none_or(|r| r < sc.params.epsilon)));
}

#[test]
fn rollover_charges_at_least_as_much() {
    let mut sc = bundled();
    let base = run(&sc, Mode::Jtcs, RunOptions::default()).unwrap().summary;
    sc.rollover_shortfall = true;
    let carried = run(&sc, Mode::Jtcs, RunOptions::default()).unwrap().summary;
    check_invariants(&carried, sc.params.c);
    assert!(carried.total_charged_kwh >= base.total_charged_kwh - 1e-9);
}

#[test]
fn seeds_change_the_fleet_not_the_requests() {
    let a = small(5, 6, 30, 6, (32.0, 41.0));
    let mut b = small(5, 6, 30, 6, (32.0, 41.0));
    assert_eq!(a.initial_energy, b.initial_energy);
    b = Scenario::new(
        b.graph,
        b.stations,
        b.regions,
        b.requests,
        b.prices,
        b.params,
        6,
        b.start_time,
        b.slots,
        (32.0, 41.0),
    )
    .unwrap();
    assert_ne!(a.initial_energy, b.initial_energy);
    assert_eq!(a.requests, b.requests);
    assert!(a.initial_energy.iter().all(|&e| (32.0..=41.0).contains(&e)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_days_keep_every_invariant(
        seed in 0u64..10_000,
        fleet in 2usize..8,
        requests in 0usize..40,
        slots in 1usize..8,
        low in 12.0f64..40.0,
    ) {
        let sc = small(seed, fleet, requests, slots, (low, 45.0));
        for mode in [Mode::Jtcs, Mode::Tgc] {
            let a = run(&sc, mode, RunOptions::default());
            let a = match a {
                Ok(a) => a.summary,
                // A day the plan cannot cover is reported, not simulated.
                Err(pvjtcs::Error::Infeasible(_)) if mode == Mode::Jtcs => continue,
                Err(e) => panic!("{e}"),
            };
            check_invariants(&a, sc.params.c);
            let b = run(&sc, mode, RunOptions::default()).unwrap().summary;
            prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        }
    }
}
