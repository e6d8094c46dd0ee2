use opfscreen_core::case::{Branch, Bus, Case, GenCost, Generator};
use opfscreen_core::pipeline::Threshold;
use opfscreen_core::scenario::{perturb_demand, CorrelationMode, ScenarioConfig};
use proptest::prelude::*;

fn case_with_demand(pd: &[f64], qd: &[f64]) -> Case {
    let n = pd.len();
    let buses = (0..n)
        .map(|i| Bus {
            id: 10 * (i + 1),
            pd: pd[i],
            qd: qd[i],
            gs: 0.0,
            bs: 0.0,
            vmin: 0.9,
            vmax: 1.1,
            is_ref: i == 0,
        })
        .collect();
    let branches = (1..n)
        .map(|i| Branch {
            from: 10 * i,
            to: 10 * (i + 1),
            r: 0.01,
            x: 0.1,
            b_chg: 0.0,
            tap: 1.0,
            shift: 0.0,
            rate_a: 0.0,
            in_service: true,
        })
        .collect();
    let gens = vec![Generator {
        bus: 10,
        pmin: 0.0,
        pmax: 10.0,
        qmin: -10.0,
        qmax: 10.0,
        in_service: true,
    }];
    Case::new(100.0, buses, branches, gens, vec![GenCost { a: 0.0, b: 1.0, c: 0.0 }]).unwrap()
}

fn within(x: f64, base: f64, lo: f64, hi: f64) -> bool {
    let (a, b) = (base * lo, base * hi);
    let tol = 1e-12 * base.abs().max(1.0);
    x >= a.min(b) - tol && x <= a.max(b) + tol
}

proptest! {
    #[test]
    fn perturbed_demand_stays_in_range(
        demand in prop::collection::vec((-1.0f64..3.0, -1.0f64..1.0), 2..8),
        lo in 0.1f64..1.0,
        width in 0.0f64..1.0,
        seed in any::<u64>(),
        k in 0usize..1000,
        systemwide in any::<bool>(),
    ) {
        let pd: Vec<f64> = demand.iter().map(|d| d.0).collect();
        let qd: Vec<f64> = demand.iter().map(|d| d.1).collect();
        let case = case_with_demand(&pd, &qd);
        let cfg = ScenarioConfig {
            range_lo: lo,
            range_hi: lo + width,
            count: 1,
            seed,
            stream: 1,
            correlation_mode: if systemwide { CorrelationMode::Systemwide } else { CorrelationMode::IndependentPerBus },
        };
        let d = perturb_demand(&case, &cfg, k);
        let b = case.buses();
        for (j, &i) in case.demand_buses().iter().enumerate() {
            prop_assert!(within(d.pd[j], b[i].pd, cfg.range_lo, cfg.range_hi));
            prop_assert!(within(d.qd[j], b[i].qd, cfg.range_lo, cfg.range_hi));
        }
        prop_assert_eq!(perturb_demand(&case, &cfg, k), d);
    }

    #[test]
    fn lowering_threshold_never_drops_a_label(
        scores in prop::collection::vec(0.0f64..=1.0, 1..50),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
        strict in any::<bool>(),
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let t_lo = Threshold { value: lo, strict };
        let t_hi = Threshold { value: hi, strict };
        for s in scores {
            prop_assert!(!t_hi.active(s) || t_lo.active(s));
        }
    }
}

#[test]
fn threshold_extremes() {
    let zero = Threshold { value: 0.0, strict: false };
    let one = Threshold { value: 1.0, strict: true };
    for s in [0.0, 1e-9, 0.5, 1.0] {
        assert!(zero.active(s));
        assert!(!one.active(s));
    }
}

#[test]
fn systemwide_mode_scales_all_buses_together() {
    let case = case_with_demand(&[0.0, 1.0, 2.0, 0.5], &[0.0, 0.2, 0.4, 0.1]);
    let cfg = ScenarioConfig {
        range_lo: 0.7,
        range_hi: 1.3,
        count: 1,
        seed: 3,
        stream: 1,
        correlation_mode: CorrelationMode::Systemwide,
    };
    let d = perturb_demand(&case, &cfg, 0);
    let b = case.buses();
    let ratios: Vec<f64> = case.demand_buses().iter().enumerate().map(|(j, &i)| d.pd[j] / b[i].pd).collect();
    for r in &ratios {
        assert!((r - ratios[0]).abs() < 1e-12);
    }
}
