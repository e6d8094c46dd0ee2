//! Run configuration: defaults, overlaid by a JSON file, overlaid by
//! command-line flags.

use std::path::{Path, PathBuf};

use opfscreen_core::learner::{AdamConfig, Task, TrainConfig};
use opfscreen_core::opf::SolverOptions;
use opfscreen_core::pipeline::{EvalSettings, FallbackMode, FeatureMode, ModelConfigs, Threshold};
use opfscreen_core::rng::{STREAM_DATASET1, STREAM_DATASET2, STREAM_TEST};
use opfscreen_core::scenario::{CorrelationMode, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::read_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,

    pub range_lo: f64,
    pub range_hi: f64,
    pub correlation_mode: CorrelationMode,
    pub dataset1_count: usize,
    pub dataset2_count: usize,
    pub test_count: usize,

    pub solver: SolverOptions,
    pub eps_active: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub validation_split: f64,
    /// Hidden-layer counts; more than one entry trains a depth sweep.
    pub hidden_layers: Vec<usize>,
    pub hidden_width: usize,
    pub adam: AdamConfig,

    pub feature_mode: FeatureMode,
    pub threshold: f64,
    pub threshold_strict: bool,
    pub fallback: FallbackMode,
    pub round_cap: usize,

    /// Test scenarios timed (from the start of the test set).
    pub timing_scenarios: usize,
    /// Repeated solves per timed scenario.
    pub timing_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: None,
            seed: 42,
            out: None,
            workers: None,
            range_lo: 0.7,
            range_hi: 1.3,
            correlation_mode: CorrelationMode::IndependentPerBus,
            dataset1_count: 2000,
            dataset2_count: 2000,
            test_count: 882,
            solver: SolverOptions::default(),
            eps_active: 1e-5,
            epochs: 1000,
            batch_size: 100,
            validation_split: 0.2,
            hidden_layers: vec![1],
            hidden_width: 256,
            adam: AdamConfig::default(),
            feature_mode: FeatureMode::NetInjection,
            threshold: 0.5,
            threshold_strict: false,
            fallback: FallbackMode::IterativeInclusion,
            round_cap: 5,
            timing_scenarios: 50,
            timing_repeats: 5,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub case: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub threshold: Option<f64>,
    pub feature_mode: Option<FeatureMode>,
    pub fallback: Option<FallbackMode>,
    pub hidden_layers: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::json(path, e))
    }

    /// Defaults, then `file` if given, then `o`.
    pub fn resolve(file: Option<&Path>, o: Overrides) -> Result<Self> {
        let mut c = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if o.case.is_some() {
            c.case = o.case;
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if o.out.is_some() {
            c.out = o.out;
        }
        if o.workers.is_some() {
            c.workers = o.workers;
        }
        if let Some(t) = o.threshold {
            c.threshold = t;
        }
        if let Some(m) = o.feature_mode {
            c.feature_mode = m;
        }
        if let Some(f) = o.fallback {
            c.fallback = f;
        }
        if let Some(h) = o.hidden_layers {
            c.hidden_layers = h;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(m.to_string()));
        if let Some(p) = &self.case {
            if !p.exists() {
                return Err(Error::Usage(format!("case file {} does not exist", p.display())));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.hidden_layers.is_empty() {
            return bad("hidden_layers needs at least one entry");
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats must be positive");
        }
        for c in [self.dataset_config(1), self.dataset_config(2), self.dataset_config(3)] {
            c.validate().map_err(|e| Error::Usage(e.to_string()))?;
        }
        self.train_config(Task::Regression, 0, self.hidden_layers[0])
            .validate()
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn case_path(&self) -> Result<&Path> {
        self.case
            .as_deref()
            .ok_or_else(|| Error::Usage("no case given (--case or \"case\" in the config file)".into()))
    }

    pub fn out_path(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Usage("no output path given (--out or \"out\" in the config file)".into()))
    }

    /// 1 = regressor data, 2 = classifier data, 3 = test data.
    pub fn dataset_config(&self, which: u8) -> ScenarioConfig {
        let (count, stream) = match which {
            1 => (self.dataset1_count, STREAM_DATASET1),
            2 => (self.dataset2_count, STREAM_DATASET2),
            _ => (self.test_count, STREAM_TEST),
        };
        ScenarioConfig {
            range_lo: self.range_lo,
            range_hi: self.range_hi,
            count,
            seed: self.seed,
            stream,
            correlation_mode: self.correlation_mode,
        }
    }

    pub fn train_config(&self, task: Task, model_id: u64, hidden_layers: usize) -> TrainConfig {
        TrainConfig {
            task,
            epochs: self.epochs,
            batch_size: self.batch_size,
            validation_split: self.validation_split,
            hidden_layers,
            hidden_width: self.hidden_width,
            adam: self.adam.clone(),
            seed: self.seed,
            model_id,
        }
    }

    pub fn model_configs(&self, hidden_layers: usize) -> ModelConfigs {
        ModelConfigs {
            regressor: self.train_config(Task::Regression, 0, hidden_layers),
            classifier_v: self.train_config(Task::Classification, 1, hidden_layers),
            classifier_l: self.train_config(Task::Classification, 2, hidden_layers),
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            threshold: Threshold {
                value: self.threshold,
                strict: self.threshold_strict,
            },
            fallback: self.fallback,
            round_cap: self.round_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{ "seed": 7, "threshold": 0.3, "epochs": 12 }"#).unwrap();
        let c = RunConfig::resolve(
            Some(&path),
            Overrides {
                threshold: Some(0.2),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.epochs, 12);
        assert_eq!(c.threshold, 0.2);
        assert_eq!(c.batch_size, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{ "sead": 7 }"#).unwrap();
        assert!(RunConfig::resolve(Some(&path), Overrides::default()).is_err());
    }

    #[test]
    fn dataset_streams_are_disjoint() {
        let c = RunConfig::default();
        let s: Vec<u64> = (1..=3).map(|k| c.dataset_config(k).stream).collect();
        assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
    }
}
