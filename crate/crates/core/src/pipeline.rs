//! Training of the screening models, prediction of active constraints and
//! the truncated solve with feasibility fallback.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::clock::Clock;
use crate::learner::{train, Task, TrainConfig, TrainReport, TrainedNet};
use crate::metrics::optimality_gap;
use crate::opf::{
    check_violations, solve_opf_with_clock, ConstraintSet, OpfSolution, OpfVariables, SolverOptions, Violation,
};
use crate::scenario::{net_injection_for_case, Dataset, DemandVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Classifiers see predicted net injection.
    NetInjection,
    /// Classifiers see the demand vector directly.
    DemandOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    IterativeInclusion,
    WarmStartFull,
    None,
}

/// Score cut-off for predicting a label active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Use `score > value` instead of `score >= value`.
    pub strict: bool,
}

impl Default for Threshold {
    fn default() -> Self {
        Self {
            value: 0.5,
            strict: false,
        }
    }
}

impl Threshold {
    pub fn active(&self, score: f64) -> bool {
        if self.strict {
            score > self.value
        } else {
            score >= self.value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfigs {
    pub regressor: TrainConfig,
    pub classifier_v: TrainConfig,
    pub classifier_l: TrainConfig,
}

impl ModelConfigs {
    /// One hidden layer of 256 units everywhere, distinct model streams.
    pub fn standard(seed: u64) -> Self {
        let mk = |task, id| TrainConfig {
            seed,
            model_id: id,
            ..TrainConfig::new(task)
        };
        Self {
            regressor: mk(Task::Regression, 0),
            classifier_v: mk(Task::Classification, 1),
            classifier_l: mk(Task::Classification, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub dataset1_rows: usize,
    pub dataset2_rows: usize,
    pub dataset1_seed: u64,
    pub dataset1_stream: u64,
    pub dataset2_seed: u64,
    pub dataset2_stream: u64,
    pub configs: ModelConfigs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub regressor: TrainedNet,
    pub classifier_v: TrainedNet,
    pub classifier_l: TrainedNet,
    pub case_fingerprint: String,
    pub feature_mode: FeatureMode,
    pub manifest: TrainingManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReports {
    pub regressor: TrainReport,
    pub classifier_v: TrainReport,
    pub classifier_l: TrainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub models: TrainedModels,
    pub reports: TrainingReports,
    pub warnings: Vec<String>,
}

fn labels_as_targets(labels: &[Vec<bool>]) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|r| r.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Checks both datasets against `case`; returns warnings.
pub fn check_training_data(case: &Case, ds1: &Dataset, ds2: &Dataset) -> Result<Vec<String>> {
    let fp = case.fingerprint();
    for ds in [ds1, ds2] {
        if ds.case_fingerprint != fp {
            return Err(Error::CaseMismatch {
                expected: fp.clone(),
                got: ds.case_fingerprint.clone(),
            });
        }
    }
    let mut warnings = Vec::new();
    let same_stream = ds1.config.seed == ds2.config.seed && ds1.config.stream == ds2.config.stream;
    if same_stream || ds1.demand == ds2.demand {
        warnings.push(String::from(
            "dataset 1 and dataset 2 coincide: classifier accuracy may be overstated by leakage",
        ));
    }
    Ok(warnings)
}

/// Regressor on dataset 1 (demand to generation).
pub fn train_regressor(ds1: &Dataset, cfg: &TrainConfig, clock: &dyn Clock) -> Result<(TrainedNet, TrainReport)> {
    train(&ds1.demand, &ds1.generation, cfg, clock)
}

/// Classifier inputs for `demand` rows: predicted net injection or the
/// demand itself.
pub fn classifier_features(
    case: &Case,
    regressor: &TrainedNet,
    demand: &[Vec<f64>],
    mode: FeatureMode,
) -> Result<Vec<Vec<f64>>> {
    match mode {
        FeatureMode::DemandOnly => Ok(demand.to_vec()),
        FeatureMode::NetInjection => {
            let g = regressor.predict_batch(demand)?;
            demand
                .iter()
                .zip(&g)
                .map(|(d, g)| net_injection_for_case(case, &DemandVector::from_stacked(d)?, g))
                .collect()
        }
    }
}

pub fn train_classifier(
    features: &[Vec<f64>],
    labels: &[Vec<bool>],
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(TrainedNet, TrainReport)> {
    train(features, &labels_as_targets(labels), cfg, clock)
}

/// Regressor on dataset 1, then both classifiers on dataset 2 features.
pub fn train_all(
    case: &Case,
    ds1: &Dataset,
    ds2: &Dataset,
    configs: &ModelConfigs,
    mode: FeatureMode,
    clock: &dyn Clock,
) -> Result<TrainOutcome> {
    let warnings = check_training_data(case, ds1, ds2)?;
    let (regressor, reg_report) = train_regressor(ds1, &configs.regressor, clock)?;
    let features = classifier_features(case, &regressor, &ds2.demand, mode)?;
    let (classifier_v, v_report) = train_classifier(&features, &ds2.v_labels, &configs.classifier_v, clock)?;
    let (classifier_l, l_report) = train_classifier(&features, &ds2.l_labels, &configs.classifier_l, clock)?;
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

#[allow(clippy::too_many_arguments)]
pub fn assemble_models(
    case: &Case,
    ds1: &Dataset,
    ds2: &Dataset,
    configs: &ModelConfigs,
    mode: FeatureMode,
    regressor: TrainedNet,
    classifier_v: TrainedNet,
    classifier_l: TrainedNet,
) -> TrainedModels {
    TrainedModels {
        regressor,
        classifier_v,
        classifier_l,
        case_fingerprint: case.fingerprint(),
        feature_mode: mode,
        manifest: TrainingManifest {
            dataset1_rows: ds1.len(),
            dataset2_rows: ds2.len(),
            dataset1_seed: ds1.config.seed,
            dataset1_stream: ds1.config.stream,
            dataset2_seed: ds2.config.seed,
            dataset2_stream: ds2.config.stream,
            configs: configs.clone(),
        },
    }
}

impl TrainedModels {
    pub fn check_case(&self, case: &Case) -> Result<()> {
        let fp = case.fingerprint();
        if fp != self.case_fingerprint {
            return Err(Error::CaseMismatch {
                expected: self.case_fingerprint.clone(),
                got: fp,
            });
        }
        let widths = [
            (self.regressor.params.output_width(), 2 * case.n_gen()),
            (self.classifier_v.params.output_width(), case.n_bus()),
            (self.classifier_l.params.output_width(), case.n_branch()),
        ];
        for (got, expected) in widths {
            if got != expected {
                return Err(Error::Dimension {
                    what: "model output width",
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Predicted `[pg; qg]`, p.u. Empty for predictors without a regressor.
    pub g_tilde: Vec<f64>,
    /// Net injection from `g_tilde`. Empty when `g_tilde` is.
    pub ni_tilde: Vec<f64>,
    pub v_scores: Vec<f64>,
    pub l_scores: Vec<f64>,
    pub v_active_pred: Vec<bool>,
    pub l_active_pred: Vec<bool>,
}

/// Anything that predicts active labels from demand.
pub trait Screen {
    fn predict(&self, case: &Case, d: &DemandVector, threshold: Threshold) -> Result<Prediction>;
}

pub fn predict_active(models: &TrainedModels, case: &Case, d: &DemandVector, threshold: Threshold) -> Result<Prediction> {
    models.check_case(case)?;
    let stacked = d.stacked();
    let g_tilde = models.regressor.predict(&stacked)?;
    let ni_tilde = net_injection_for_case(case, d, &g_tilde)?;
    let features = match models.feature_mode {
        FeatureMode::NetInjection => &ni_tilde,
        FeatureMode::DemandOnly => &stacked,
    };
    let v_scores = models.classifier_v.predict(features)?;
    let l_scores = models.classifier_l.predict(features)?;
    Ok(Prediction {
        v_active_pred: v_scores.iter().map(|&s| threshold.active(s)).collect(),
        l_active_pred: l_scores.iter().map(|&s| threshold.active(s)).collect(),
        g_tilde,
        ni_tilde,
        v_scores,
        l_scores,
    })
}

impl Screen for TrainedModels {
    fn predict(&self, case: &Case, d: &DemandVector, threshold: Threshold) -> Result<Prediction> {
        predict_active(self, case, d, threshold)
    }
}

/// Predicts the same labels for every demand.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedScreen {
    pub v_active: Vec<bool>,
    pub l_active: Vec<bool>,
}

impl FixedScreen {
    pub fn all(case: &Case, active: bool) -> Self {
        Self {
            v_active: alloc::vec![active; case.n_bus()],
            l_active: alloc::vec![active; case.n_branch()],
        }
    }
}

impl Screen for FixedScreen {
    fn predict(&self, _case: &Case, _d: &DemandVector, _threshold: Threshold) -> Result<Prediction> {
        let score = |a: &bool| if *a { 1.0 } else { 0.0 };
        Ok(Prediction {
            g_tilde: Vec::new(),
            ni_tilde: Vec::new(),
            v_scores: self.v_active.iter().map(score).collect(),
            l_scores: self.l_active.iter().map(score).collect(),
            v_active_pred: self.v_active.clone(),
            l_active_pred: self.l_active.clone(),
        })
    }
}

/// Voltage bounds of predicted-active buses and flow limits of
/// predicted-active limited branches.
pub fn build_truncated(case: &Case, pred: &Prediction) -> ConstraintSet {
    ConstraintSet {
        voltage_buses: pred
            .v_active_pred
            .iter()
            .enumerate()
            .filter(|(i, &a)| a && *i < case.n_bus())
            .map(|(i, _)| i)
            .collect(),
        flow_branches: pred
            .l_active_pred
            .iter()
            .enumerate()
            .filter(|(l, &a)| a && *l < case.n_branch() && case.branches()[*l].is_limited())
            .map(|(l, _)| l)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackOutcome {
    pub solution: OpfSolution,
    /// The first solve, on the predicted set.
    pub first_solve: OpfSolution,
    /// Violations of the full problem after the first solve.
    pub initial_violations: Vec<Violation>,
    /// Violations of the full problem at the returned solution.
    pub final_violations: Vec<Violation>,
    pub rounds: usize,
    /// Set when the returned solution is not known to be feasible for the
    /// full problem.
    pub flagged: bool,
    pub enforced: ConstraintSet,
}

/// Constraint set grown by the labels of `violations`.
fn include(mut cs: ConstraintSet, violations: &[Violation]) -> ConstraintSet {
    for v in violations {
        if let Some(i) = v.constraint.bus() {
            cs.voltage_buses.insert(i);
        }
        if let Some(l) = v.constraint.branch() {
            cs.flow_branches.insert(l);
        }
    }
    cs
}

/// A diverged solve can leave a point the solver cannot start from.
fn usable_start(v: &OpfVariables) -> bool {
    let finite = |x: &[f64]| x.iter().all(|a| a.is_finite());
    finite(&v.theta) && finite(&v.pg) && finite(&v.qg) && v.vm.iter().all(|&m| m.is_finite() && m > 0.0)
}

/// Solves on `cs` and restores feasibility for the full problem per `mode`.
/// Every solve starts from the flat start, except the full solve of
/// `WarmStartFull`, which starts from the first solution when it is usable.
pub fn solve_with_fallback(
    case: &Case,
    cs: ConstraintSet,
    mode: FallbackMode,
    round_cap: usize,
    opts: &SolverOptions,
    clock: &dyn Clock,
) -> Result<FallbackOutcome> {
    let full = ConstraintSet::full(case);
    let cs = cs.restricted_to(case);
    let first = solve_opf_with_clock(case, &cs, None, opts, clock)?;
    let initial_violations = check_violations(case, &first.vars, &full, opts.feastol)?;
    let mut out = FallbackOutcome {
        solution: first.clone(),
        first_solve: first,
        final_violations: initial_violations.clone(),
        initial_violations,
        rounds: 0,
        flagged: false,
        enforced: cs,
    };
    match mode {
        FallbackMode::None => {}
        FallbackMode::WarmStartFull => {
            if !(out.solution.converged() && out.final_violations.is_empty()) {
                let start = usable_start(&out.solution.vars).then(|| out.solution.vars.clone());
                out.solution = solve_opf_with_clock(case, &full, start.as_ref(), opts, clock)?;
                out.rounds = 1;
                out.enforced = full.clone();
                out.final_violations = check_violations(case, &out.solution.vars, &full, opts.feastol)?;
            }
        }
        FallbackMode::IterativeInclusion => loop {
            let ok = out.solution.converged() && out.final_violations.is_empty();
            if ok {
                break;
            }
            if out.rounds == round_cap {
                break;
            }
            let grown = if out.final_violations.is_empty() {
                full.clone()
            } else {
                include(out.enforced.clone(), &out.final_violations)
            };
            let grown = if grown == out.enforced { full.clone() } else { grown };
            if grown == out.enforced {
                // already the full problem; another solve would repeat this one
                break;
            }
            out.rounds += 1;
            out.solution = solve_opf_with_clock(case, &grown, None, opts, clock)?;
            out.enforced = grown;
            out.final_violations = check_violations(case, &out.solution.vars, &full, opts.feastol)?;
        },
    }
    out.flagged = !(out.solution.converged() && out.final_violations.is_empty());
    Ok(out)
}

/// Result of screening and solving one test scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvaluation {
    pub prediction: Prediction,
    pub truncated_inequalities: usize,
    pub full_inequalities: usize,
    pub fallback: FallbackOutcome,
    pub objective: f64,
    /// Percent; `None` when the returned solution did not converge.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub threshold: Threshold,
    pub fallback: FallbackMode,
    pub round_cap: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            threshold: Threshold::default(),
            fallback: FallbackMode::IterativeInclusion,
            round_cap: 5,
        }
    }
}

/// Predicts, truncates and solves the scenario with demand `d`, comparing
/// against the full-problem objective `f_full`.
pub fn evaluate_scenario(
    screen: &dyn Screen,
    case: &Case,
    d: &DemandVector,
    f_full: f64,
    settings: &EvalSettings,
    opts: &SolverOptions,
    clock: &dyn Clock,
) -> Result<ScenarioEvaluation> {
    let prediction = screen.predict(case, d, settings.threshold)?;
    let loaded = d.apply(case)?;
    let cs = build_truncated(&loaded, &prediction);
    let truncated_inequalities = cs.inequality_count();
    let full_inequalities = ConstraintSet::full(&loaded).inequality_count();
    let fallback = solve_with_fallback(&loaded, cs, settings.fallback, settings.round_cap, opts, clock)?;
    let objective = fallback.solution.objective;
    let gap = if fallback.solution.converged() {
        Some(optimality_gap(objective, f_full)?)
    } else {
        None
    };
    Ok(ScenarioEvaluation {
        prediction,
        truncated_inequalities,
        full_inequalities,
        fallback,
        objective,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;
    use crate::clock::NullClock;
    use alloc::vec;

    #[test]
    fn threshold_extremes() {
        let zero = Threshold {
            value: 0.0,
            strict: false,
        };
        let one = Threshold {
            value: 1.0,
            strict: true,
        };
        for s in [0.0, 1e-9, 0.5, 1.0] {
            assert!(zero.active(s));
            assert!(!one.active(s));
        }
    }

    #[test]
    fn truncation_from_fixed_predictions() {
        let case = two_bus();
        let d = DemandVector::base(&case);
        let none = FixedScreen::all(&case, false).predict(&case, &d, Threshold::default()).unwrap();
        assert_eq!(build_truncated(&case, &none), ConstraintSet::chi_only());
        let all = FixedScreen::all(&case, true).predict(&case, &d, Threshold::default()).unwrap();
        assert_eq!(build_truncated(&case, &all), ConstraintSet::full(&case));
    }

    #[test]
    fn full_prediction_needs_no_fallback() {
        let case = two_bus();
        let opts = SolverOptions::default();
        let out = solve_with_fallback(
            &case,
            ConstraintSet::full(&case),
            FallbackMode::IterativeInclusion,
            5,
            &opts,
            &NullClock,
        )
        .unwrap();
        assert_eq!(out.rounds, 0);
        assert!(!out.flagged);
        assert!(out.initial_violations.is_empty());
    }

    #[test]
    fn fixed_screen_scores() {
        let case = two_bus();
        let p = FixedScreen {
            v_active: vec![true, false],
            l_active: vec![false],
        }
        .predict(&case, &DemandVector::base(&case), Threshold::default())
        .unwrap();
        assert_eq!(p.v_scores, vec![1.0, 0.0]);
    }
}
