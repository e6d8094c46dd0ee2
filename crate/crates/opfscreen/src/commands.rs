//! The work behind each subcommand.

use std::path::{Path, PathBuf};

use log::{info, warn};
use opfscreen_core::case::Case;
use opfscreen_core::clock::MonotonicClock;
use opfscreen_core::learner::split_point;
use opfscreen_core::opf::{check_violations, label_activity, solve_opf_with_clock, ConstraintSet};
use opfscreen_core::pipeline::{build_truncated, solve_with_fallback, FeatureMode, Screen, TrainedModels};
use opfscreen_core::scenario::{Dataset, DemandVector};
use serde::{Deserialize, Serialize};

use crate::case_io::load_case;
use crate::config::RunConfig;
use crate::dataset_io::{dataset_hash, read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::eval::{compare, run_eval, run_manifest, write_run, EvalOptions, RunSummary};
use crate::files::{float, read_json, write_csv, write_json, write_text};
use crate::model_io::{models_hash, read_models, write_models, ModelArtifacts};
use crate::report::{render_report, table};
use crate::runner::{build_dataset, pool, train_all};
use crate::solution_io::SolutionFile;

pub const DATASET_DIRS: [&str; 3] = ["dataset1", "dataset2", "test"];

/// Writes `dataset1`, `dataset2` and `test` under the output directory.
pub fn gen_data(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    let case = load_case(cfg.case_path()?)?;
    let out = cfg.out_path()?;
    let pool = pool(cfg.workers)?;
    let mut sets = Vec::with_capacity(3);
    for (which, name) in (1u8..=3).zip(DATASET_DIRS) {
        let sc = cfg.dataset_config(which);
        info!("{name}: solving {} scenarios", sc.count);
        let ds = build_dataset(&pool, &case, &sc, &cfg.solver, cfg.eps_active)?;
        if !ds.dropped.is_empty() {
            warn!("{name}: dropped {} of {} scenarios", ds.dropped.len(), sc.count);
        }
        write_dataset(&out.join(name), &case, &ds, cfg.eps_active)?;
        sets.push(ds);
    }
    write_json(&out.join("config.json"), cfg)?;
    Ok(sets)
}

/// A dataset directory, or a parent holding one under `name`.
pub fn dataset_dir(path: &Path, name: &str) -> PathBuf {
    if path.join("manifest.json").exists() {
        path.to_path_buf()
    } else {
        path.join(name)
    }
}

/// Root-mean-square error of the regressor on the validation tail of
/// dataset 1, p.u.
pub fn regressor_validation_rmse(models: &TrainedModels, ds1: &Dataset, validation_split: f64) -> Result<f64> {
    let start = split_point(ds1.len(), validation_split);
    let preds = models.regressor.predict_batch(&ds1.demand[start..])?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in preds.iter().zip(&ds1.generation[start..]) {
        for (a, b) in p.iter().zip(g) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    Ok((sum / n.max(1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub hidden_layers: usize,
    pub regressor_val_rmse: f64,
    pub classifier_v_val_loss: f64,
    pub classifier_l_val_loss: f64,
}

/// Trains one model set per entry of `hidden_layers`. A single entry writes
/// straight into the output directory; several write `depth_<n>` folders
/// and a sweep table.
pub fn train(cfg: &RunConfig, data: &Path) -> Result<Vec<SweepRow>> {
    let case = load_case(cfg.case_path()?)?;
    let out = cfg.out_path()?;
    let d1 = dataset_dir(data, "dataset1");
    let d2 = data.join("dataset2");
    let ds1 = read_dataset(&d1, &case)?;
    let ds2 = read_dataset(&d2, &case)?;
    let pool = pool(cfg.workers)?;
    let sweep = cfg.hidden_layers.len() > 1;
    let mut rows = Vec::new();
    for &depth in &cfg.hidden_layers {
        info!("training with {depth} hidden layer(s)");
        let t = train_all(&pool, &case, &ds1, &ds2, &cfg.model_configs(depth), cfg.feature_mode)?;
        for w in &t.warnings {
            warn!("{w}");
        }
        let dir = if sweep { out.join(format!("depth_{depth}")) } else { out.to_path_buf() };
        write_models(
            &dir,
            &ModelArtifacts {
                models: &t.models,
                reports: &t.reports,
                dataset1_hash: dataset_hash(&d1)?,
                dataset2_hash: dataset_hash(&d2)?,
                warnings: t.warnings.clone(),
            },
        )?;
        write_json(&dir.join("config.json"), cfg)?;
        rows.push(SweepRow {
            hidden_layers: depth,
            regressor_val_rmse: regressor_validation_rmse(&t.models, &ds1, cfg.validation_split)?,
            classifier_v_val_loss: t.reports.classifier_v.final_val_loss,
            classifier_l_val_loss: t.reports.classifier_l.final_val_loss,
        });
    }
    if sweep {
        let header = ["hidden_layers", "regressor_val_rmse", "classifier_v_val_loss", "classifier_l_val_loss"]
            .map(String::from);
        write_csv(
            &out.join("sweep.csv"),
            &header,
            rows.iter().map(|r| {
                vec![
                    r.hidden_layers.to_string(),
                    float(r.regressor_val_rmse),
                    float(r.classifier_v_val_loss),
                    float(r.classifier_l_val_loss),
                ]
            }),
        )?;
        write_text(&out.join("sweep.txt"), &sweep_table(&rows))?;
    }
    Ok(rows)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.hidden_layers.to_string(),
                format!("{:.6}", r.regressor_val_rmse),
                format!("{:.6}", r.classifier_v_val_loss),
                format!("{:.6}", r.classifier_l_val_loss),
            ]
        })
        .collect();
    table(&["Hidden layers", "Regressor RMSE [p.u.]", "Voltage BCE", "Branch BCE"], &cells)
}

fn load_models(dir: &Path, case: &Case) -> Result<TrainedModels> {
    let m = read_models(dir)?;
    m.check_case(case)?;
    Ok(m)
}

fn mode_name(m: FeatureMode) -> &'static str {
    match m {
        FeatureMode::NetInjection => "net_injection",
        FeatureMode::DemandOnly => "demand_only",
    }
}

/// Evaluates the models on the test set and writes a run directory.
/// Each entry of `others` adds a comparison row.
pub fn eval(cfg: &RunConfig, models_dir: &Path, data: &Path, others: &[PathBuf]) -> Result<RunSummary> {
    let case = load_case(cfg.case_path()?)?;
    let out = cfg.out_path()?;
    let models = load_models(models_dir, &case)?;
    let test_dir = dataset_dir(data, "test");
    let test = read_dataset(&test_dir, &case)?;
    if test.is_empty() {
        return Err(Error::Usage("test dataset is empty".into()));
    }
    let pool = pool(cfg.workers)?;
    let opts = EvalOptions {
        settings: cfg.eval_settings(),
        solver: cfg.solver.clone(),
        timing_scenarios: cfg.timing_scenarios,
        timing_repeats: cfg.timing_repeats,
    };
    info!("evaluating {} test scenarios", test.len());
    let mut run = run_eval(&pool, &case, &models, &test, &opts)?;
    let threshold = opts.settings.threshold;
    let mut comparisons = vec![pool.install(|| compare(mode_name(models.feature_mode), &case, &models, &test, threshold))?];
    for dir in others {
        let m = load_models(dir, &case)?;
        let name = format!("{} ({})", mode_name(m.feature_mode), dir.display());
        comparisons.push(pool.install(|| compare(&name, &case, &m, &test, threshold))?);
    }
    if !others.is_empty() {
        run.summary.comparisons = comparisons;
    }
    let manifest = run_manifest(
        cfg.seed,
        &case,
        Some(models_hash(models_dir)?),
        dataset_hash(&test_dir)?,
        cfg,
    );
    write_run(out, &case, &run, Some(models_dir), &manifest)?;
    Ok(run.summary)
}

/// Demand over the demand buses in ascending bus id, MW and MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandFile {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

pub fn read_demand(path: &Path, case: &Case) -> Result<DemandVector> {
    let f: DemandFile = read_json(path)?;
    let nd = case.demand_buses().len();
    if f.pd.len() != nd || f.qd.len() != nd {
        return Err(Error::invalid(
            path,
            format!("expected {nd} pd and qd entries, got {} and {}", f.pd.len(), f.qd.len()),
        ));
    }
    let base = case.base_mva();
    Ok(DemandVector {
        pd: f.pd.iter().map(|p| p / base).collect(),
        qd: f.qd.iter().map(|q| q / base).collect(),
    })
}

/// Full solve, or screened solve when `models` is given. The solution is
/// written even when the solver fails; the error follows.
pub fn solve(cfg: &RunConfig, demand: Option<&Path>, models: Option<&Path>) -> Result<SolutionFile> {
    let case = load_case(cfg.case_path()?)?;
    let d = match demand {
        Some(p) => read_demand(p, &case)?,
        None => DemandVector::base(&case),
    };
    let loaded = d.apply(&case)?;
    let full = ConstraintSet::full(&loaded);
    let clock = MonotonicClock::default();
    let (sol, fallback) = match models {
        None => (solve_opf_with_clock(&loaded, &full, None, &cfg.solver, &clock)?, None),
        Some(dir) => {
            let m = load_models(dir, &case)?;
            let pred = m.predict(&case, &d, cfg.eval_settings().threshold)?;
            let cs = build_truncated(&loaded, &pred);
            let f = solve_with_fallback(&loaded, cs, cfg.fallback, cfg.round_cap, &cfg.solver, &clock)?;
            (f.solution.clone(), Some(f))
        }
    };
    let labels = if sol.converged() {
        Some(label_activity(&sol, &loaded, cfg.eps_active)?)
    } else {
        None
    };
    let violations = check_violations(&loaded, &sol.vars, &full, cfg.solver.feastol)?;
    let file = SolutionFile::new(&loaded, &sol, labels, violations, fallback.as_ref());
    if let Some(out) = &cfg.out {
        file.write(out)?;
    }
    if !sol.converged() {
        return Err(opfscreen_core::Error::NotConverged(format!(
            "{:?} after {} iterations",
            sol.status, sol.iterations
        ))
        .into());
    }
    Ok(file)
}

/// Re-renders the text report of a run directory.
pub fn report(run: &Path) -> Result<String> {
    let s: RunSummary = read_json(&run.join("summary.json"))?;
    Ok(render_report(&s))
}
