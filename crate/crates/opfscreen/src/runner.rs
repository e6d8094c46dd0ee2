//! Worker-pool versions of the dataset build and model training.

use opfscreen_core::case::Case;
use opfscreen_core::clock::MonotonicClock;
use opfscreen_core::opf::SolverOptions;
use opfscreen_core::pipeline::{
    assemble_models, check_training_data, classifier_features, train_classifier, train_regressor, FeatureMode,
    ModelConfigs, TrainOutcome, TrainingReports,
};
use opfscreen_core::scenario::{solve_scenario, Dataset, ScenarioConfig};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Pool with `workers` threads, or one per core.
pub fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// Solves all scenarios on the pool. Rows come back in scenario order, so
/// the result does not depend on the worker count.
pub fn build_dataset(
    pool: &rayon::ThreadPool,
    case: &Case,
    cfg: &ScenarioConfig,
    opts: &SolverOptions,
    eps_active: f64,
) -> Result<Dataset> {
    cfg.validate()?;
    let outcomes = pool.install(|| {
        (0..cfg.count)
            .into_par_iter()
            .map(|k| solve_scenario(case, cfg, k, opts, eps_active))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Dataset::assemble(case, cfg.clone(), outcomes)?)
}

/// Regressor first, then both classifiers side by side.
pub fn train_all(
    pool: &rayon::ThreadPool,
    case: &Case,
    ds1: &Dataset,
    ds2: &Dataset,
    configs: &ModelConfigs,
    mode: FeatureMode,
) -> Result<TrainOutcome> {
    let warnings = check_training_data(case, ds1, ds2)?;
    let clock = MonotonicClock::default();
    let (regressor, reg_report) = train_regressor(ds1, &configs.regressor, &clock)?;
    let features = classifier_features(case, &regressor, &ds2.demand, mode)?;
    let (v, l) = pool.install(|| {
        rayon::join(
            || train_classifier(&features, &ds2.v_labels, &configs.classifier_v, &MonotonicClock::default()),
            || train_classifier(&features, &ds2.l_labels, &configs.classifier_l, &MonotonicClock::default()),
        )
    });
    let ((classifier_v, v_report), (classifier_l, l_report)) = (v?, l?);
    Ok(TrainOutcome {
        models: assemble_models(case, ds1, ds2, configs, mode, regressor, classifier_v, classifier_l),
        reports: TrainingReports {
            regressor: reg_report,
            classifier_v: v_report,
            classifier_l: l_report,
        },
        warnings,
    })
}
