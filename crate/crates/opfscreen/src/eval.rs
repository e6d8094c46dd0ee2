//! Evaluation of a screen on a test dataset, and the run directory.

use std::path::Path;

use opfscreen_core::case::Case;
use opfscreen_core::clock::{Clock, MonotonicClock};
use opfscreen_core::metrics::{
    accumulate_confusion, compute_metrics, timing_compare, ConfusionCounts, GapReport, MetricSet, Ratio, SolveTiming,
    TimingReport,
};
use opfscreen_core::opf::{solve_opf_with_clock, ConstraintSet, SolverOptions};
use opfscreen_core::pipeline::{build_truncated, evaluate_scenario, EvalSettings, Screen, Threshold};
use opfscreen_core::scenario::{Dataset, DemandVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{bool_rows, flow_label_header, voltage_label_header};
use crate::error::{Error, Result};
use crate::files::{copy_dir_files, create_dir, float, write_csv, write_json, write_text, TOOL_VERSION};
use crate::report::render_report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub settings: EvalSettings,
    pub solver: SolverOptions,
    pub timing_scenarios: usize,
    pub timing_repeats: usize,
}

/// Confusion statistics of one classifier over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    /// Share of all labels that are false negatives.
    pub fn_share: Ratio,
    pub mean_active_actual: f64,
    pub mean_active_predicted: f64,
}

impl ClassifierSummary {
    pub fn new(predicted: &[Vec<bool>], actual: &[Vec<bool>]) -> Result<Self> {
        let counts = accumulate_confusion(predicted, actual)?;
        let metrics = compute_metrics(&counts)?;
        let rows = actual.len().max(1) as f64;
        let active = |m: &[Vec<bool>]| m.iter().map(|r| r.iter().filter(|&&a| a).count()).sum::<usize>() as f64 / rows;
        Ok(Self {
            fn_share: Ratio {
                num: counts.fn_,
                den: counts.total(),
            },
            counts,
            metrics,
            mean_active_actual: active(actual),
            mean_active_predicted: active(predicted),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: usize,
    pub objective_full: f64,
    pub objective: f64,
    /// Percent; absent when the returned solution did not converge.
    pub gap: Option<f64>,
    pub first_converged: bool,
    pub initial_violations: usize,
    pub final_violations: usize,
    pub rounds: usize,
    pub flagged: bool,
    pub truncated_inequalities: usize,
    pub full_inequalities: usize,
}

impl ScenarioRecord {
    /// The first truncated solve was already feasible for the full problem.
    pub fn clean(&self) -> bool {
        self.first_converged && self.initial_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prevalence {
    pub mean_active_voltage: f64,
    pub mean_active_flow: f64,
    pub voltage_labels: usize,
    pub flow_labels: usize,
    /// Inactive share over all labels of all test scenarios.
    pub inactive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: usize,
    pub original: SolveTiming,
    pub truncated: SolveTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub voltage: ClassifierSummary,
    pub branch: ClassifierSummary,
}

/// Everything except the per-scenario matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenarios: usize,
    pub settings: EvalSettings,
    pub voltage: ClassifierSummary,
    pub branch: ClassifierSummary,
    pub prevalence: Prevalence,
    pub gaps: GapReport,
    /// Scenarios whose returned solution did not converge.
    pub unsolved: usize,
    pub flagged: usize,
    pub max_rounds: usize,
    pub mean_rounds: f64,
    pub mean_truncated_inequalities: f64,
    pub full_inequalities: usize,
    pub timing: Option<TimingReport>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub summary: RunSummary,
    pub records: Vec<ScenarioRecord>,
    pub predicted_v: Vec<Vec<bool>>,
    pub predicted_l: Vec<Vec<bool>>,
    pub timing_rows: Vec<TimingRow>,
}

fn demand_of(test: &Dataset, k: usize) -> Result<DemandVector> {
    Ok(DemandVector::from_stacked(&test.demand[k])?)
}

/// Labels predicted for every test row, without solving.
pub fn classify(
    case: &Case,
    screen: &(dyn Screen + Sync),
    test: &Dataset,
    threshold: Threshold,
) -> Result<(Vec<Vec<bool>>, Vec<Vec<bool>>)> {
    let preds = (0..test.len())
        .into_par_iter()
        .map(|k| Ok(screen.predict(case, &demand_of(test, k)?, threshold)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(preds.into_iter().map(|p| (p.v_active_pred, p.l_active_pred)).unzip())
}

pub fn compare(
    name: &str,
    case: &Case,
    screen: &(dyn Screen + Sync),
    test: &Dataset,
    threshold: Threshold,
) -> Result<Comparison> {
    let (v, l) = classify(case, screen, test, threshold)?;
    Ok(Comparison {
        name: name.to_string(),
        voltage: ClassifierSummary::new(&v, &test.v_labels)?,
        branch: ClassifierSummary::new(&l, &test.l_labels)?,
    })
}

fn median_time(repeats: usize, mut run: impl FnMut() -> Result<(usize, f64, u64)>) -> Result<SolveTiming> {
    let mut wall_times = Vec::with_capacity(repeats);
    let mut last = (0, 0);
    for _ in 0..repeats {
        let (it, t, fe) = run()?;
        wall_times.push(t);
        last = (it, fe);
    }
    Ok(SolveTiming {
        iterations: last.0,
        wall_times,
        feval_count: last.1,
    })
}

/// Repeated full and truncated solves on the first test rows, one at a time.
pub fn time_solves(
    case: &Case,
    screen: &dyn Screen,
    test: &Dataset,
    opts: &EvalOptions,
) -> Result<Vec<TimingRow>> {
    let clock = MonotonicClock::default();
    let n = opts.timing_scenarios.min(test.len());
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let d = demand_of(test, k)?;
        let loaded = d.apply(case)?;
        let full = ConstraintSet::full(&loaded);
        let cs = build_truncated(&loaded, &screen.predict(case, &d, opts.settings.threshold)?);
        let solve = |set: &ConstraintSet| -> Result<(usize, f64, u64)> {
            let s = solve_opf_with_clock(&loaded, set, None, &opts.solver, &clock as &dyn Clock)?;
            Ok((s.iterations, s.wall_time, s.feval_count))
        };
        let original = median_time(opts.timing_repeats, || solve(&full))?;
        let truncated = median_time(opts.timing_repeats, || solve(&cs))?;
        rows.push(TimingRow {
            scenario: test.kept[k],
            original,
            truncated,
        });
    }
    Ok(rows)
}

/// Screens, truncates and solves every test row on the pool, then times
/// the first rows sequentially.
pub fn run_eval(
    pool: &rayon::ThreadPool,
    case: &Case,
    screen: &(dyn Screen + Sync),
    test: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    if test.is_empty() {
        return Err(Error::Usage("test dataset is empty".into()));
    }
    let evals = pool.install(|| {
        (0..test.len())
            .into_par_iter()
            .map(|k| {
                let d = demand_of(test, k)?;
                let e = evaluate_scenario(
                    screen,
                    case,
                    &d,
                    test.objectives[k],
                    &opts.settings,
                    &opts.solver,
                    &MonotonicClock::default(),
                )?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records = Vec::with_capacity(evals.len());
    let mut predicted_v = Vec::with_capacity(evals.len());
    let mut predicted_l = Vec::with_capacity(evals.len());
    for (k, e) in evals.into_iter().enumerate() {
        records.push(ScenarioRecord {
            scenario: test.kept[k],
            objective_full: test.objectives[k],
            objective: e.objective,
            gap: e.gap,
            first_converged: e.fallback.first_solve.converged(),
            initial_violations: e.fallback.initial_violations.len(),
            final_violations: e.fallback.final_violations.len(),
            rounds: e.fallback.rounds,
            flagged: e.fallback.flagged,
            truncated_inequalities: e.truncated_inequalities,
            full_inequalities: e.full_inequalities,
        });
        predicted_v.push(e.prediction.v_active_pred);
        predicted_l.push(e.prediction.l_active_pred);
    }

    let timing_rows = if opts.timing_scenarios > 0 {
        time_solves(case, screen, test, opts)?
    } else {
        Vec::new()
    };
    let timing = if timing_rows.is_empty() {
        None
    } else {
        let pairs: Vec<_> = timing_rows
            .iter()
            .map(|r| (r.original.clone(), r.truncated.clone()))
            .collect();
        Some(timing_compare(&pairs)?)
    };

    let solved: Vec<&ScenarioRecord> = records.iter().filter(|r| r.gap.is_some()).collect();
    let gaps = if solved.is_empty() {
        GapReport {
            gaps: Vec::new(),
            fallback: Vec::new(),
            mean_gap: f64::NAN,
            mean_gap_no_fallback: None,
        }
    } else {
        GapReport::new(
            solved.iter().map(|r| r.gap.unwrap_or(f64::NAN)).collect(),
            solved.iter().map(|r| !r.clean()).collect(),
        )?
    };

    let voltage = ClassifierSummary::new(&predicted_v, &test.v_labels)?;
    let branch = ClassifierSummary::new(&predicted_l, &test.l_labels)?;
    let nv = case.n_bus();
    let nl = case.n_branch();
    let n = test.len() as f64;
    let prevalence = Prevalence {
        mean_active_voltage: voltage.mean_active_actual,
        mean_active_flow: branch.mean_active_actual,
        voltage_labels: nv,
        flow_labels: nl,
        inactive_fraction: 1.0 - (voltage.mean_active_actual + branch.mean_active_actual) / (nv + nl) as f64,
    };
    let summary = RunSummary {
        scenarios: test.len(),
        settings: opts.settings,
        voltage,
        branch,
        prevalence,
        gaps,
        unsolved: records.iter().filter(|r| r.gap.is_none()).count(),
        flagged: records.iter().filter(|r| r.flagged).count(),
        max_rounds: records.iter().map(|r| r.rounds).max().unwrap_or(0),
        mean_rounds: records.iter().map(|r| r.rounds as f64).sum::<f64>() / n,
        mean_truncated_inequalities: records.iter().map(|r| r.truncated_inequalities as f64).sum::<f64>() / n,
        full_inequalities: records.first().map_or(0, |r| r.full_inequalities),
        timing,
        comparisons: Vec::new(),
    };
    Ok(EvalRun {
        summary,
        records,
        predicted_v,
        predicted_l,
        timing_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub case_fingerprint: String,
    pub models_hash: Option<String>,
    pub test_dataset_hash: String,
    pub config: serde_json::Value,
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(String::new, float)
}

pub fn write_run(dir: &Path, case: &Case, run: &EvalRun, models_dir: Option<&Path>, manifest: &RunManifest) -> Result<()> {
    create_dir(dir)?;
    if let Some(m) = models_dir {
        copy_dir_files(m, &dir.join("models"))?;
    }
    let mut header = vec!["scenario".to_string()];
    header.extend(voltage_label_header(case));
    header.extend(flow_label_header(case));
    let rows = run
        .records
        .iter()
        .zip(bool_rows(&run.predicted_v).zip(bool_rows(&run.predicted_l)))
        .map(|(r, (v, l))| {
            let mut row = vec![r.scenario.to_string()];
            row.extend(v);
            row.extend(l);
            row
        });
    write_csv(&dir.join("predictions.csv"), &header, rows)?;

    let gap_header = [
        "scenario",
        "objective_full",
        "objective",
        "gap_percent",
        "first_converged",
        "initial_violations",
        "final_violations",
        "rounds",
        "flagged",
        "truncated_inequalities",
        "full_inequalities",
    ]
    .map(String::from);
    let b = |x: bool| if x { "1".to_string() } else { "0".to_string() };
    write_csv(
        &dir.join("gaps.csv"),
        &gap_header,
        run.records.iter().map(|r| {
            vec![
                r.scenario.to_string(),
                float(r.objective_full),
                float(r.objective),
                opt_float(r.gap),
                b(r.first_converged),
                r.initial_violations.to_string(),
                r.final_violations.to_string(),
                r.rounds.to_string(),
                b(r.flagged),
                r.truncated_inequalities.to_string(),
                r.full_inequalities.to_string(),
            ]
        }),
    )?;

    let timing_header = [
        "scenario",
        "iterations_original",
        "iterations_truncated",
        "median_time_original",
        "median_time_truncated",
        "fevals_original",
        "fevals_truncated",
    ]
    .map(String::from);
    let med = |t: &SolveTiming| opt_float(opfscreen_core::metrics::median(&t.wall_times));
    write_csv(
        &dir.join("timing.csv"),
        &timing_header,
        run.timing_rows.iter().map(|r| {
            vec![
                r.scenario.to_string(),
                r.original.iterations.to_string(),
                r.truncated.iterations.to_string(),
                med(&r.original),
                med(&r.truncated),
                r.original.feval_count.to_string(),
                r.truncated.feval_count.to_string(),
            ]
        }),
    )?;

    let s = &run.summary;
    let confusion = serde_json::json!({
        "voltage": { "counts": s.voltage.counts, "metrics": s.voltage.metrics },
        "branch": { "counts": s.branch.counts, "metrics": s.branch.metrics },
    });
    write_json(&dir.join("confusion.json"), &confusion)?;
    write_json(&dir.join("summary.json"), s)?;
    write_json(&dir.join("manifest.json"), manifest)?;
    write_text(&dir.join("report.txt"), &render_report(s))
}

pub fn run_manifest(
    seed: u64,
    case: &Case,
    models_hash: Option<String>,
    test_dataset_hash: String,
    config: &impl Serialize,
) -> RunManifest {
    RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        seed,
        case_fingerprint: case.fingerprint(),
        models_hash,
        test_dataset_hash,
        config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
    }
}
