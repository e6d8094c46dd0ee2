//! Demand scenarios and training datasets.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::case::Case;
use crate::opf::{label_activity, solve_opf, ConstraintSet, SolveStatus, SolverOptions};
use crate::rng::substream;
use crate::{Error, Result};

/// Demand on the demand buses (ascending bus id), p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandVector {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
}

impl DemandVector {
    pub fn base(case: &Case) -> Self {
        let b = case.buses();
        Self {
            pd: case.demand_buses().iter().map(|&i| b[i].pd).collect(),
            qd: case.demand_buses().iter().map(|&i| b[i].qd).collect(),
        }
    }

    /// `[pd; qd]`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.pd.clone();
        v.extend_from_slice(&self.qd);
        v
    }

    pub fn from_stacked(d: &[f64]) -> Result<Self> {
        if d.len() % 2 != 0 {
            return Err(Error::Dimension {
                what: "stacked demand vector",
                expected: d.len() + 1,
                got: d.len(),
            });
        }
        let n = d.len() / 2;
        Ok(Self {
            pd: d[..n].to_vec(),
            qd: d[n..].to_vec(),
        })
    }

    /// Copy of `case` carrying this demand.
    pub fn apply(&self, case: &Case) -> Result<Case> {
        let nd = case.demand_buses().len();
        if self.pd.len() != nd || self.qd.len() != nd {
            return Err(Error::Dimension {
                what: "demand vector",
                expected: 2 * nd,
                got: self.pd.len() + self.qd.len(),
            });
        }
        let mut pd: Vec<f64> = case.buses().iter().map(|b| b.pd).collect();
        let mut qd: Vec<f64> = case.buses().iter().map(|b| b.qd).collect();
        for (j, &i) in case.demand_buses().iter().enumerate() {
            pd[i] = self.pd[j];
            qd[i] = self.qd[j];
        }
        case.with_demand(&pd, &qd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// One draw per bus and scenario.
    IndependentPerBus,
    /// One real and one reactive draw per scenario, shared by all buses.
    Systemwide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub range_lo: f64,
    pub range_hi: f64,
    pub count: usize,
    pub seed: u64,
    /// Selects an independent random stream for this dataset.
    pub stream: u64,
    pub correlation_mode: CorrelationMode,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_lo > 0.0 && self.range_lo <= self.range_hi && self.range_hi.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "demand range must satisfy 0 < lo <= hi, got {}..{}",
                self.range_lo,
                self.range_hi
            )));
        }
        if self.count == 0 {
            return Err(Error::Config("scenario count must be positive".into()));
        }
        Ok(())
    }
}

/// Demand at fractions `eta_p`, `eta_q` of each bus's range.
pub fn demand_at(case: &Case, lo: f64, hi: f64, eta_p: &[f64], eta_q: &[f64]) -> DemandVector {
    let base = DemandVector::base(case);
    let scale = |b: f64, eta: f64| b * (lo + eta * (hi - lo));
    DemandVector {
        pd: base.pd.iter().zip(eta_p).map(|(&b, &e)| scale(b, e)).collect(),
        qd: base.qd.iter().zip(eta_q).map(|(&b, &e)| scale(b, e)).collect(),
    }
}

/// Scenario `k` of the configured stream. `cfg` must be valid.
pub fn perturb_demand(case: &Case, cfg: &ScenarioConfig, k: usize) -> DemandVector {
    let n = case.demand_buses().len();
    let mut rng = substream(cfg.seed, cfg.stream, k as u64);
    let (eta_p, eta_q): (Vec<f64>, Vec<f64>) = match cfg.correlation_mode {
        CorrelationMode::IndependentPerBus => {
            let p = (0..n).map(|_| rng.random::<f64>()).collect();
            let q = (0..n).map(|_| rng.random::<f64>()).collect();
            (p, q)
        }
        CorrelationMode::Systemwide => {
            let (p, q) = (rng.random::<f64>(), rng.random::<f64>());
            (alloc::vec![p; n], alloc::vec![q; n])
        }
    };
    demand_at(case, cfg.range_lo, cfg.range_hi, &eta_p, &eta_q)
}

/// One solved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub index: usize,
    pub demand: Vec<f64>,
    /// `[pg; qg]`, p.u.
    pub generation: Vec<f64>,
    pub v_active: Vec<bool>,
    pub l_active: Vec<bool>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioOutcome {
    Kept(ScenarioRow),
    Dropped { index: usize, status: SolveStatus },
}

impl ScenarioOutcome {
    pub fn index(&self) -> usize {
        match self {
            Self::Kept(r) => r.index,
            Self::Dropped { index, .. } => *index,
        }
    }
}

/// Perturbs, solves and labels scenario `k`.
pub fn solve_scenario(
    case: &Case,
    cfg: &ScenarioConfig,
    k: usize,
    opts: &SolverOptions,
    eps_active: f64,
) -> Result<ScenarioOutcome> {
    let d = perturb_demand(case, cfg, k);
    let loaded = d.apply(case)?;
    let sol = solve_opf(&loaded, &ConstraintSet::full(&loaded), None, opts)?;
    if !sol.converged() {
        return Ok(ScenarioOutcome::Dropped {
            index: k,
            status: sol.status,
        });
    }
    let labels = label_activity(&sol, &loaded, eps_active)?;
    let mut generation = sol.vars.pg.clone();
    generation.extend_from_slice(&sol.vars.qg);
    Ok(ScenarioOutcome::Kept(ScenarioRow {
        index: k,
        demand: d.stacked(),
        generation,
        v_active: labels.v_active,
        l_active: labels.l_active,
        objective: sol.objective,
    }))
}

/// Rows of kept scenarios, in scenario order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub case_fingerprint: String,
    pub demand: Vec<Vec<f64>>,
    pub generation: Vec<Vec<f64>>,
    /// Net injection from the solved (not predicted) generation.
    pub net_injection: Vec<Vec<f64>>,
    pub v_labels: Vec<Vec<bool>>,
    pub l_labels: Vec<Vec<bool>>,
    pub objectives: Vec<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<(usize, SolveStatus)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Sorts outcomes by scenario index and stacks the kept rows.
    pub fn assemble(case: &Case, config: ScenarioConfig, mut outcomes: Vec<ScenarioOutcome>) -> Result<Self> {
        outcomes.sort_by_key(ScenarioOutcome::index);
        let mut ds = Self {
            config,
            case_fingerprint: case.fingerprint(),
            demand: Vec::new(),
            generation: Vec::new(),
            net_injection: Vec::new(),
            v_labels: Vec::new(),
            l_labels: Vec::new(),
            objectives: Vec::new(),
            kept: Vec::new(),
            dropped: Vec::new(),
        };
        for o in outcomes {
            match o {
                ScenarioOutcome::Kept(r) => {
                    let d = DemandVector::from_stacked(&r.demand)?;
                    ds.net_injection.push(net_injection_for_case(case, &d, &r.generation)?);
                    ds.kept.push(r.index);
                    ds.demand.push(r.demand);
                    ds.generation.push(r.generation);
                    ds.v_labels.push(r.v_active);
                    ds.l_labels.push(r.l_active);
                    ds.objectives.push(r.objective);
                }
                ScenarioOutcome::Dropped { index, status } => ds.dropped.push((index, status)),
            }
        }
        if ds.kept.is_empty() {
            return Err(Error::AllInfeasible {
                attempted: ds.dropped.len(),
            });
        }
        Ok(ds)
    }
}

/// Solves every scenario in turn. The std companion crate runs the same
/// steps on a worker pool.
pub fn build_dataset(case: &Case, cfg: &ScenarioConfig, opts: &SolverOptions, eps_active: f64) -> Result<Dataset> {
    cfg.validate()?;
    let outcomes = (0..cfg.count)
        .map(|k| solve_scenario(case, cfg, k, opts, eps_active))
        .collect::<Result<Vec<_>>>()?;
    Dataset::assemble(case, cfg.clone(), outcomes)
}

/// `[pg - pd; qg - qd]` over vectors already laid out on the injection
/// buses.
pub fn net_injection(pg: &[f64], qg: &[f64], pd: &[f64], qd: &[f64]) -> Result<Vec<f64>> {
    let n = pd.len();
    for (what, v) in [("pg", pg), ("qg", qg), ("qd", qd)] {
        if v.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                got: v.len(),
            });
        }
    }
    let mut ni: Vec<f64> = pg.iter().zip(pd).map(|(g, d)| g - d).collect();
    ni.extend(qg.iter().zip(qd).map(|(g, d)| g - d));
    Ok(ni)
}

/// Net injection over the case's injection buses from a demand vector and a
/// stacked `[pg; qg]` generation vector.
pub fn net_injection_for_case(case: &Case, d: &DemandVector, generation: &[f64]) -> Result<Vec<f64>> {
    let ng = case.n_gen();
    let nd = case.demand_buses().len();
    if generation.len() != 2 * ng {
        return Err(Error::Dimension {
            what: "generation vector",
            expected: 2 * ng,
            got: generation.len(),
        });
    }
    if d.pd.len() != nd || d.qd.len() != nd {
        return Err(Error::Dimension {
            what: "demand vector",
            expected: 2 * nd,
            got: d.pd.len() + d.qd.len(),
        });
    }
    let nb = case.n_bus();
    let (mut pg, mut qg, mut pd, mut qd) = (
        alloc::vec![0.0; nb],
        alloc::vec![0.0; nb],
        alloc::vec![0.0; nb],
        alloc::vec![0.0; nb],
    );
    for (g, &bus) in case.gen_bus().iter().enumerate() {
        pg[bus] += generation[g];
        qg[bus] += generation[ng + g];
    }
    for (j, &i) in case.demand_buses().iter().enumerate() {
        pd[i] = d.pd[j];
        qd[i] = d.qd[j];
    }
    let sel = |v: &[f64]| -> Vec<f64> { case.injection_buses().iter().map(|&i| v[i]).collect() };
    net_injection(&sel(&pg), &sel(&qg), &sel(&pd), &sel(&qd))
}
