//! Acceptance suite. Prints one PASS/FAIL line per criterion. With
//! `ACCEPTANCE_STRICT=1` set, any failed criterion makes the exit status
//! non-zero.

mod support;

#[path = "../../core/tests/common/fd.rs"]
mod fd;

use std::process::ExitCode;
use std::time::Instant;

use opfscreen::config::RunConfig;
use opfscreen::eval::{compare, run_eval, EvalOptions, EvalRun};
use opfscreen::runner::{build_dataset, pool, train_all};
use opfscreen_core::case::Case;
use opfscreen_core::learner::Task;
use opfscreen_core::metrics::{compute_metrics, ConfusionCounts, MetricSet, Ratio};
use opfscreen_core::opf::{kkt_residuals, label_activity, solve_opf, ConstraintSet, KktResiduals, SolverOptions};
use opfscreen_core::pipeline::{FeatureMode, FixedScreen, TrainedModels};
use opfscreen_core::scenario::{perturb_demand, CorrelationMode, Dataset, DemandVector, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use support::{brute_force, case_path, load};

type Check = Result<(bool, String), String>;

const CASE39_REFERENCE: f64 = 41864.17779243044;
const KKT_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-4;

fn kkt_ok(k: &KktResiduals) -> bool {
    k.feasibility <= KKT_TOL && k.stationarity <= KKT_TOL && k.complementarity <= KKT_TOL
}

fn worst(k: &KktResiduals, acc: f64) -> f64 {
    acc.max(k.feasibility).max(k.stationarity).max(k.complementarity)
}

fn pct(r: Option<Ratio>) -> f64 {
    r.map_or(f64::NAN, |r| r.percent())
}

struct Experiment {
    case: Case,
    config: RunConfig,
    test: Dataset,
    drawn: [usize; 3],
    kept: [usize; 3],
    net_injection: TrainedModels,
    demand_only: TrainedModels,
    run: EvalRun,
    adversarial: EvalRun,
}

impl Experiment {
    fn build() -> Result<Self, String> {
        let s = |e: opfscreen::Error| e.to_string();
        let config = RunConfig {
            case: Some(case_path("case39.m")),
            seed: 42,
            dataset1_count: 400,
            dataset2_count: 400,
            test_count: 200,
            hidden_layers: vec![1],
            hidden_width: 256,
            timing_scenarios: 50,
            timing_repeats: 5,
            ..RunConfig::default()
        };
        let case = load("case39.m");
        let pool = pool(None).map_err(s)?;
        let mut sets = Vec::new();
        for which in 1..=3 {
            let sc = config.dataset_config(which);
            sets.push(build_dataset(&pool, &case, &sc, &config.solver, config.eps_active).map_err(s)?);
        }
        let drawn = [config.dataset1_count, config.dataset2_count, config.test_count];
        let kept = [sets[0].len(), sets[1].len(), sets[2].len()];
        let test = sets.pop().unwrap();
        let (ds1, ds2) = (&sets[0], &sets[1]);
        let configs = config.model_configs(1);
        let net_injection = train_all(&pool, &case, ds1, ds2, &configs, FeatureMode::NetInjection)
            .map_err(s)?
            .models;
        let demand_only = train_all(&pool, &case, ds1, ds2, &configs, FeatureMode::DemandOnly)
            .map_err(s)?
            .models;
        let opts = EvalOptions {
            settings: config.eval_settings(),
            solver: config.solver.clone(),
            timing_scenarios: config.timing_scenarios,
            timing_repeats: config.timing_repeats,
        };
        let run = run_eval(&pool, &case, &net_injection, &test, &opts).map_err(s)?;
        let adversarial_opts = EvalOptions {
            timing_scenarios: 0,
            ..opts
        };
        let adversarial =
            run_eval(&pool, &case, &FixedScreen::all(&case, false), &test, &adversarial_opts).map_err(s)?;
        Ok(Self {
            case,
            config,
            test,
            drawn,
            kept,
            net_injection,
            demand_only,
            run,
            adversarial,
        })
    }
}

fn screening_quality(x: &Experiment) -> Check {
    let s = &x.run.summary;
    let (va, ba) = (pct(s.voltage.metrics.accuracy), pct(s.branch.metrics.accuracy));
    let (vfn, bfn) = (s.voltage.fn_share.percent(), s.branch.fn_share.percent());
    let (vfnr, bfnr) = (pct(s.voltage.metrics.fnr), pct(s.branch.metrics.fnr));
    let pass = ba >= 97.0 && va >= 90.0 && bfn <= 0.5 && vfn <= 1.5;
    Ok((
        pass,
        format!(
            "voltage accuracy {va:.3}% (>= 90), branch accuracy {ba:.3}% (>= 97), \
             voltage FN {vfn:.4}% of labels (<= 1.5), branch FN {bfn:.4}% of labels (<= 0.5); \
             FN/(TP+FN): voltage {vfnr:.2}%, branch {bfnr:.2}%; scenarios kept {:?} of {:?}",
            x.kept, x.drawn
        ),
    ))
}

fn prevalence(x: &Experiment) -> Check {
    let p = &x.run.summary.prevalence;
    let pass = p.mean_active_voltage <= 10.0 && p.mean_active_flow <= 5.0 && p.inactive_fraction >= 0.85;
    Ok((
        pass,
        format!(
            "mean active voltage labels {:.2} of {} (<= 10), flow labels {:.2} of {} (<= 5), inactive {:.2}% (>= 85)",
            p.mean_active_voltage,
            p.voltage_labels,
            p.mean_active_flow,
            p.flow_labels,
            100.0 * p.inactive_fraction
        ),
    ))
}

fn optimality_gap(x: &Experiment) -> Check {
    let s = &x.run.summary;
    let clean: Vec<f64> = x.run.records.iter().filter(|r| r.clean()).filter_map(|r| r.gap).collect();
    let clean_mean = (!clean.is_empty()).then(|| clean.iter().sum::<f64>() / clean.len() as f64);
    let infeasible = x.run.records.iter().filter(|r| r.final_violations > 0 || r.gap.is_none()).count();
    let all: Vec<f64> = x.run.records.iter().filter_map(|r| r.gap).collect();
    let all_mean = all.iter().sum::<f64>() / all.len().max(1) as f64;
    let pass = clean_mean.is_some_and(|g| g <= GAP_TOL)
        && infeasible == 0
        && s.flagged == 0
        && all.len() == x.run.records.len()
        && all_mean <= GAP_TOL;
    Ok((
        pass,
        format!(
            "mean gap without violations {} over {} scenarios, mean gap over all {all_mean:.3e}% over {}; \
             infeasible or unsolved {infeasible}, flagged {}, mean rounds {:.3}",
            clean_mean.map_or("n/a".into(), |g| format!("{g:.3e}%")),
            clean.len(),
            all.len(),
            s.flagged,
            s.mean_rounds
        ),
    ))
}

fn timing(x: &Experiment) -> Check {
    let t = x.run.summary.timing.as_ref().ok_or("no timing report")?;
    let pass = t.mean_time_truncated < t.mean_time_original && t.mean_fevals_truncated < t.mean_fevals_original;
    Ok((
        pass,
        format!(
            "{} scenarios x {} repeats: wall time {:.4}s -> {:.4}s ({:.1}% saving), \
             fevals {:.1} -> {:.1} ({:.1}% saving), iterations {:.1} -> {:.1}",
            t.scenarios,
            x.config.timing_repeats,
            t.mean_time_original,
            t.mean_time_truncated,
            t.time_saving_percent,
            t.mean_fevals_original,
            t.mean_fevals_truncated,
            t.feval_saving_percent,
            t.mean_iterations_original,
            t.mean_iterations_truncated
        ),
    ))
}

fn ablation(x: &Experiment) -> Check {
    let th = x.config.eval_settings().threshold;
    let ni = compare("net_injection", &x.case, &x.net_injection, &x.test, th).map_err(|e| e.to_string())?;
    let dm = compare("demand_only", &x.case, &x.demand_only, &x.test, th).map_err(|e| e.to_string())?;
    let (a, b) = (ni.voltage.counts.fn_, dm.voltage.counts.fn_);
    Ok((
        a <= b,
        format!(
            "voltage FN: net injection {a}, demand only {b}; branch FN: net injection {}, demand only {}",
            ni.branch.counts.fn_, dm.branch.counts.fn_
        ),
    ))
}

fn toy_points() -> Vec<DemandVector> {
    let base = load("toy3.m");
    let cfg = ScenarioConfig {
        range_lo: 0.7,
        range_hi: 1.3,
        count: 20,
        seed: 2024,
        stream: 1,
        correlation_mode: CorrelationMode::IndependentPerBus,
    };
    (0..cfg.count).map(|k| perturb_demand(&base, &cfg, k)).collect()
}

/// Complementarity tight enough that weakly priced bounds reach their limit.
fn tight() -> SolverOptions {
    SolverOptions {
        comptol: 1e-10,
        ..SolverOptions::default()
    }
}

fn solver_correctness(x: &Experiment) -> Check {
    let s = |e: opfscreen_core::Error| e.to_string();
    let opts = SolverOptions::default();
    let full = ConstraintSet::full(&x.case);
    let base = solve_opf(&x.case, &full, None, &opts).map_err(s)?;
    let base_kkt = kkt_residuals(&x.case, &full, &base, &opts).map_err(s)?;
    let rel = ((base.objective - CASE39_REFERENCE) / CASE39_REFERENCE).abs();

    let test_kkt: Vec<Option<KktResiduals>> = (0..x.test.len())
        .into_par_iter()
        .map(|k| {
            let case = DemandVector::from_stacked(&x.test.demand[k]).ok()?.apply(&x.case).ok()?;
            let cs = ConstraintSet::full(&case);
            let sol = solve_opf(&case, &cs, None, &opts).ok()?;
            if !sol.converged() {
                return None;
            }
            kkt_residuals(&case, &cs, &sol, &opts).ok()
        })
        .collect();
    let converged = test_kkt.iter().flatten().count();
    let case39_bad = test_kkt.iter().flatten().filter(|k| !kkt_ok(k)).count();
    let case39_worst = test_kkt.iter().flatten().fold(worst(&base_kkt, 0.0), |a, k| worst(k, a));

    let toy = load("toy3.m");
    let mut toy_bad = 0;
    let mut toy_worst: f64 = 0.0;
    let mut toy_converged = 0;
    for d in toy_points() {
        let case = d.apply(&toy).map_err(s)?;
        let cs = ConstraintSet::full(&case);
        for o in [SolverOptions::default(), tight()] {
            let sol = solve_opf(&case, &cs, None, &o).map_err(s)?;
            if sol.converged() {
                toy_converged += 1;
                let k = kkt_residuals(&case, &cs, &sol, &o).map_err(s)?;
                toy_bad += usize::from(!kkt_ok(&k));
                toy_worst = worst(&k, toy_worst);
            }
        }
    }
    let pass = base.converged() && kkt_ok(&base_kkt) && rel <= 1e-5 && case39_bad == 0 && toy_bad == 0;
    Ok((
        pass,
        format!(
            "case39 base objective {:.6} vs reference {CASE39_REFERENCE:.6} (rel {rel:.2e}, <= 1e-5); \
             KKT failures: case39 {case39_bad} of {} (worst {case39_worst:.1e}), toy {toy_bad} of {toy_converged} \
             (worst {toy_worst:.1e})",
            base.objective,
            converged + 1
        ),
    ))
}

fn derivatives() -> Check {
    let results = [
        ("network Jacobians", fd::check_network_jacobians(7, 100, 1e-6)),
        ("regression backprop", fd::check_backprop(Task::Regression, 11, 100, 1e-5)),
        ("classification backprop", fd::check_backprop(Task::Classification, 12, 100, 1e-5)),
    ];
    let failures: Vec<String> = results
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    Ok((
        failures.is_empty(),
        if failures.is_empty() {
            "100 evaluations each: network Jacobians within 1e-6, backprop within 1e-5 relative".into()
        } else {
            failures.join("; ")
        },
    ))
}

fn oracle_equivalence() -> Check {
    let s = |e: opfscreen_core::Error| e.to_string();
    let base = load("toy3.m");
    let mut mismatches = Vec::new();
    let mut flow_active = 0;
    for (k, d) in toy_points().iter().enumerate() {
        let case = d.apply(&base).map_err(s)?;
        let cs = ConstraintSet::full(&case);
        let sol = solve_opf(&case, &cs, None, &tight()).map_err(s)?;
        if !sol.converged() {
            mismatches.push(format!("point {k} did not converge"));
            continue;
        }
        let labels = label_activity(&sol, &case, 1e-5).map_err(s)?;
        let grid = brute_force(&case, true).ok_or(format!("point {k}: no feasible grid point"))?;
        if labels.v_active != grid.voltage_binding(&case, 1e-3) || labels.l_active != grid.flow_binding(&case, 1e-3) {
            mismatches.push(format!("point {k}"));
        }
        flow_active += usize::from(labels.l_active.iter().any(|&a| a));
    }
    Ok((
        mismatches.is_empty(),
        format!(
            "20 demand points, {} mismatches{}; flow limit binding at {flow_active} points",
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(" ({})", mismatches.join(", ")) }
        ),
    ))
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut broken = 0;
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..1_000_000),
            tn: rng.random_range(0..1_000_000),
            fp: rng.random_range(0..1_000_000),
            fn_: rng.random_range(1..1_000_000),
        };
        let m = compute_metrics(&c).map_err(|e| e.to_string())?;
        broken += m
            .pairs()
            .iter()
            .filter(|(a, b)| !matches!((a, b), (Some(a), Some(b)) if a.complements(b)))
            .count();
    }
    // true negatives are the remainder of the label population
    let matrix = |population: u64, fp: u64, tp: u64, fn_: u64| -> Result<MetricSet, String> {
        compute_metrics(&ConfusionCounts {
            tp,
            tn: population - tp - fp - fn_,
            fp,
            fn_,
        })
        .map_err(|e| e.to_string())
    };
    let a = matrix(2708 * 1200, 29886, 27714, 257)?;
    let b = matrix(3982 * 1200, 5486, 17314, 0)?;
    let got = [a.ppv, a.tpr, a.accuracy, b.ppv, b.tpr, b.accuracy].map(|r| round1(pct(r)));
    let want = [48.1, 99.1, 99.1, 75.9, 100.0, round1(99.88)];
    Ok((
        broken == 0 && got == want,
        format!(
            "1000 random counts, {broken} broken pair identities; \
             matrix a PPV/TPR/accuracy {:.1}/{:.1}/{:.1}%, matrix b {:.1}/{:.1}/{:.2}%",
            got[0],
            got[1],
            got[2],
            got[3],
            got[4],
            pct(b.accuracy)
        ),
    ))
}

fn soundness(x: &Experiment) -> Check {
    let r = &x.adversarial;
    let unflagged_infeasible = r
        .records
        .iter()
        .filter(|r| !r.flagged && (r.final_violations > 0 || r.gap.is_none()))
        .count();
    let cap = x.config.round_cap;
    let pass = unflagged_infeasible == 0 && r.summary.flagged == 0 && r.summary.max_rounds <= cap;
    Ok((
        pass,
        format!(
            "all-inactive screen on {} scenarios: unflagged infeasible {unflagged_infeasible}, flagged {}, \
             max rounds {} (cap {cap}), mean rounds {:.2}, mean gap {:.3e}%",
            r.records.len(),
            r.summary.flagged,
            r.summary.max_rounds,
            r.summary.mean_rounds,
            r.summary.gaps.mean_gap
        ),
    ))
}

fn report(id: usize, title: &str, check: Check, failed: &mut usize) {
    let (pass, detail) = match check {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    *failed += usize::from(!pass);
    println!("{} [{id:>2}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failed = 0;
    report(7, "derivative correctness", derivatives(), &mut failed);
    report(8, "oracle equivalence on the 3-bus toy", oracle_equivalence(), &mut failed);
    report(9, "metric identities", metric_identities(), &mut failed);

    match Experiment::build() {
        Ok(x) => {
            report(1, "case39 screening quality", screening_quality(&x), &mut failed);
            report(2, "inactive-constraint prevalence", prevalence(&x), &mut failed);
            report(3, "optimality gap", optimality_gap(&x), &mut failed);
            report(4, "timing direction", timing(&x), &mut failed);
            report(5, "feature-mode ablation", ablation(&x), &mut failed);
            report(6, "solver correctness", solver_correctness(&x), &mut failed);
            report(10, "soundness under an all-inactive screen", soundness(&x), &mut failed);
        }
        Err(e) => {
            for (id, title) in [
                (1, "case39 screening quality"),
                (2, "inactive-constraint prevalence"),
                (3, "optimality gap"),
                (4, "timing direction"),
                (5, "feature-mode ablation"),
                (6, "solver correctness"),
                (10, "soundness under an all-inactive screen"),
            ] {
                report(id, title, Err(format!("experiment setup failed: {e}")), &mut failed);
            }
        }
    }
    println!("{failed} of 10 criteria failed ({:.0}s)", start.elapsed().as_secs_f64());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
