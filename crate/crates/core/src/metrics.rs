//! Confusion statistics, optimality gap and timing summaries.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts over (scenario, label) pairs. "Positive" means active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

pub fn accumulate_confusion(predicted: &[Vec<bool>], actual: &[Vec<bool>]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension {
            what: "confusion rows",
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (p, a) in predicted.iter().zip(actual) {
        if p.len() != a.len() {
            return Err(Error::Dimension {
                what: "confusion columns",
                expected: a.len(),
                got: p.len(),
            });
        }
        for (&pi, &ai) in p.iter().zip(a) {
            c.record(pi, ai);
        }
    }
    Ok(c)
}

/// Exact ratio of counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    fn of(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.value()
    }

    /// `self + other == 1` in exact arithmetic.
    pub fn complements(&self, other: &Self) -> bool {
        self.den == other.den && self.num + other.num == self.den
    }
}

/// The ten confusion indices; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<Ratio>,
    pub misclassification: Option<Ratio>,
    pub tpr: Option<Ratio>,
    pub fnr: Option<Ratio>,
    pub tnr: Option<Ratio>,
    pub fpr: Option<Ratio>,
    pub ppv: Option<Ratio>,
    pub fdr: Option<Ratio>,
    pub npv: Option<Ratio>,
    #[serde(rename = "for")]
    pub for_: Option<Ratio>,
}

impl MetricSet {
    /// The five complementary pairs, in the order
    /// accuracy/misclassification, tpr/fnr, tnr/fpr, ppv/fdr, npv/for.
    pub fn pairs(&self) -> [(Option<Ratio>, Option<Ratio>); 5] {
        [
            (self.accuracy, self.misclassification),
            (self.tpr, self.fnr),
            (self.tnr, self.fpr),
            (self.ppv, self.fdr),
            (self.npv, self.for_),
        ]
    }
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricSet> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Undefined("all confusion counts are zero"));
    }
    let (tp, tn, fp, fn_) = (c.tp, c.tn, c.fp, c.fn_);
    Ok(MetricSet {
        accuracy: Ratio::of(tp + tn, total),
        misclassification: Ratio::of(fp + fn_, total),
        tpr: Ratio::of(tp, tp + fn_),
        fnr: Ratio::of(fn_, tp + fn_),
        tnr: Ratio::of(tn, tn + fp),
        fpr: Ratio::of(fp, tn + fp),
        ppv: Ratio::of(tp, tp + fp),
        fdr: Ratio::of(fp, tp + fp),
        npv: Ratio::of(tn, tn + fn_),
        for_: Ratio::of(fn_, tn + fn_),
    })
}

/// `|f_t - f_o| / f_o * 100`.
pub fn optimality_gap(f_truncated: f64, f_original: f64) -> Result<f64> {
    if !(f_original > 0.0) {
        return Err(Error::Undefined("optimality gap needs a positive original objective"));
    }
    Ok((f_truncated - f_original).abs() / f_original * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Percent, per scenario.
    pub gaps: Vec<f64>,
    /// Whether the scenario needed at least one fallback round.
    pub fallback: Vec<bool>,
    pub mean_gap: f64,
    /// Mean over scenarios without fallback; `None` if there are none.
    pub mean_gap_no_fallback: Option<f64>,
}

impl GapReport {
    pub fn new(gaps: Vec<f64>, fallback: Vec<bool>) -> Result<Self> {
        if gaps.is_empty() || gaps.len() != fallback.len() {
            return Err(Error::Undefined("gap report needs one flag per non-empty gap list"));
        }
        let mean_gap = mean(&gaps);
        let clean: Vec<f64> = gaps
            .iter()
            .zip(&fallback)
            .filter(|(_, &f)| !f)
            .map(|(&g, _)| g)
            .collect();
        Ok(Self {
            mean_gap,
            mean_gap_no_fallback: (!clean.is_empty()).then(|| mean(&clean)),
            gaps,
            fallback,
        })
    }
}

/// Diagnostics of one solve, possibly repeated for timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTiming {
    pub iterations: usize,
    /// Seconds, one entry per repeat.
    pub wall_times: Vec<f64>,
    pub feval_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub scenarios: usize,
    pub mean_iterations_original: f64,
    pub mean_iterations_truncated: f64,
    pub mean_time_original: f64,
    pub mean_time_truncated: f64,
    pub mean_fevals_original: f64,
    pub mean_fevals_truncated: f64,
    /// `(1 - truncated / original) * 100` on mean wall time.
    pub time_saving_percent: f64,
    pub feval_saving_percent: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Median wall time per scenario, then means across scenarios.
pub fn timing_compare(runs: &[(SolveTiming, SolveTiming)]) -> Result<TimingReport> {
    if runs.is_empty() {
        return Err(Error::Undefined("timing comparison needs at least one scenario"));
    }
    let med = |t: &SolveTiming| median(&t.wall_times).ok_or(Error::Undefined("solve without timing samples"));
    let mut to = Vec::with_capacity(runs.len());
    let mut tt = Vec::with_capacity(runs.len());
    for (o, t) in runs {
        to.push(med(o)?);
        tt.push(med(t)?);
    }
    let it_o: Vec<f64> = runs.iter().map(|(o, _)| o.iterations as f64).collect();
    let it_t: Vec<f64> = runs.iter().map(|(_, t)| t.iterations as f64).collect();
    let fe_o: Vec<f64> = runs.iter().map(|(o, _)| o.feval_count as f64).collect();
    let fe_t: Vec<f64> = runs.iter().map(|(_, t)| t.feval_count as f64).collect();
    let (mo, mt) = (mean(&to), mean(&tt));
    let (fo, ft) = (mean(&fe_o), mean(&fe_t));
    let saving = |orig: f64, trunc: f64| if orig > 0.0 { (1.0 - trunc / orig) * 100.0 } else { 0.0 };
    Ok(TimingReport {
        scenarios: runs.len(),
        mean_iterations_original: mean(&it_o),
        mean_iterations_truncated: mean(&it_t),
        mean_time_original: mo,
        mean_time_truncated: mt,
        mean_fevals_original: fo,
        mean_fevals_truncated: ft,
        time_saving_percent: saving(mo, mt),
        feval_saving_percent: saving(fo, ft),
    })
}
