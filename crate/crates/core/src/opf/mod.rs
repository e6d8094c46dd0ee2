//! AC optimal power flow on a full or truncated constraint set.
//!
//! Power balance, generator limits and the reference angle are always
//! enforced. Voltage-magnitude bounds and branch flow limits are enforced
//! only for the buses and branches listed in a [`ConstraintSet`].

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::case::Case;

mod ipm;
mod labels;

pub use ipm::{kkt_residuals, solve_opf, solve_opf_with_clock, KktResiduals};
pub use labels::{check_violations, label_activity, ActivityLabels, ConstraintId, Violation};

/// Which voltage and flow inequalities are kept.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// Bus positions whose upper and lower voltage bounds are enforced.
    pub voltage_buses: BTreeSet<usize>,
    /// Branch positions whose flow limits (both ends) are enforced.
    pub flow_branches: BTreeSet<usize>,
}

impl ConstraintSet {
    /// Every voltage bound and every finite flow limit.
    pub fn full(case: &Case) -> Self {
        Self {
            voltage_buses: (0..case.n_bus()).collect(),
            flow_branches: case.limited_branches().collect(),
        }
    }

    /// Only the always-enforced remainder.
    pub fn chi_only() -> Self {
        Self::default()
    }

    /// Number of individual inequalities this set adds on top of the
    /// always-enforced ones.
    pub fn inequality_count(&self) -> usize {
        2 * self.voltage_buses.len() + 2 * self.flow_branches.len()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.voltage_buses.is_subset(&other.voltage_buses) && self.flow_branches.is_subset(&other.flow_branches)
    }

    /// Drops unlimited branches and out-of-range indices.
    pub fn restricted_to(mut self, case: &Case) -> Self {
        self.voltage_buses.retain(|&i| i < case.n_bus());
        self.flow_branches
            .retain(|&l| l < case.n_branch() && case.branches()[l].is_limited());
        self
    }
}

/// Optimization variables, all in p.u. (angles in radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfVariables {
    pub theta: Vec<f64>,
    pub vm: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

impl OpfVariables {
    /// Zero angles, mid-range magnitudes and generator outputs.
    pub fn flat_start(case: &Case) -> Self {
        Self {
            theta: alloc::vec![0.0; case.n_bus()],
            vm: case.buses().iter().map(|b| 0.5 * (b.vmin + b.vmax)).collect(),
            pg: case.generators().iter().map(|g| 0.5 * (g.pmin + g.pmax)).collect(),
            qg: case.generators().iter().map(|g| 0.5 * (g.qmin + g.qmax)).collect(),
        }
    }

    pub fn voltage(&self) -> crate::network::VoltageState {
        crate::network::VoltageState {
            theta: self.theta.clone(),
            vm: self.vm.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

/// Identifies one scalar inequality of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    PgMax(usize),
    PgMin(usize),
    QgMax(usize),
    QgMin(usize),
    VmMax(usize),
    VmMin(usize),
    FlowFrom(usize),
    FlowTo(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub vars: OpfVariables,
    /// Generation cost, $/h.
    pub objective: f64,
    /// Equality multipliers: `[P balance; Q balance; reference angle]`.
    /// Multipliers refer to the objective scaled by
    /// [`SolverOptions::cost_scale`].
    pub mult_eq: Vec<f64>,
    pub mult_ineq: Vec<f64>,
    /// Slack `z = -h(x) >= 0` of each inequality.
    pub slacks: Vec<f64>,
    pub inequalities: Vec<Inequality>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: f64,
    /// Constraint rows evaluated over the whole solve.
    pub feval_count: u64,
}

impl OpfSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn multiplier(&self, which: Inequality) -> Option<f64> {
        self.inequalities
            .iter()
            .position(|&q| q == which)
            .map(|k| self.mult_ineq[k])
    }

    pub fn slack(&self, which: Inequality) -> Option<f64> {
        self.inequalities
            .iter()
            .position(|&q| q == which)
            .map(|k| self.slacks[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub feastol: f64,
    pub gradtol: f64,
    pub comptol: f64,
    pub max_iter: usize,
    /// Centering parameter: target barrier is this fraction of the
    /// current average complementarity.
    pub barrier_reduction: f64,
    /// Fraction-to-boundary factor.
    pub step_fraction: f64,
    /// Objective multiplier used inside the solver for conditioning.
    pub cost_scale: f64,
    pub reg_initial: f64,
    pub reg_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feastol: 1e-6,
            gradtol: 1e-6,
            comptol: 1e-6,
            max_iter: 150,
            barrier_reduction: 0.1,
            step_fraction: 0.99995,
            cost_scale: 1e-4,
            reg_initial: 1e-8,
            reg_max: 1e-2,
        }
    }
}
