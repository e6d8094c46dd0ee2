//! JSON output of a single solve.

use std::path::Path;

use opfscreen_core::case::Case;
use opfscreen_core::opf::{ActivityLabels, OpfSolution, SolveStatus, Violation};
use opfscreen_core::pipeline::FallbackOutcome;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::write_json;

pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

/// Variables in physical units, in case order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalVariables {
    pub bus_id: Vec<usize>,
    /// Degrees.
    pub va_deg: Vec<f64>,
    /// p.u.
    pub vm: Vec<f64>,
    /// MW.
    pub pg_mw: Vec<f64>,
    /// MVAr.
    pub qg_mvar: Vec<f64>,
}

impl PhysicalVariables {
    pub fn new(case: &Case, sol: &OpfSolution) -> Self {
        let base = case.base_mva();
        Self {
            bus_id: case.buses().iter().map(|b| b.id).collect(),
            va_deg: sol.vars.theta.iter().map(|t| t.to_degrees()).collect(),
            vm: sol.vars.vm.clone(),
            pg_mw: sol.vars.pg.iter().map(|p| p * base).collect(),
            qg_mvar: sol.vars.qg.iter().map(|q| q * base).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenInfo {
    pub rounds: usize,
    pub flagged: bool,
    pub initial_violations: Vec<Violation>,
    pub enforced_voltage_buses: Vec<usize>,
    pub enforced_flow_branches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub case_fingerprint: String,
    pub status: SolveStatus,
    /// $/h.
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub feval_count: u64,
    pub vars: PhysicalVariables,
    /// Present when the solve converged.
    pub labels: Option<ActivityLabels>,
    /// Violations of the full problem at the returned point.
    pub violations: Vec<Violation>,
    /// Present for screened solves.
    pub screen: Option<ScreenInfo>,
}

impl SolutionFile {
    pub fn new(
        case: &Case,
        sol: &OpfSolution,
        labels: Option<ActivityLabels>,
        violations: Vec<Violation>,
        fallback: Option<&FallbackOutcome>,
    ) -> Self {
        Self {
            schema_version: SOLUTION_SCHEMA_VERSION,
            case_fingerprint: case.fingerprint(),
            status: sol.status,
            objective: sol.objective,
            iterations: sol.iterations,
            wall_time: sol.wall_time,
            feval_count: sol.feval_count,
            vars: PhysicalVariables::new(case, sol),
            labels,
            violations,
            screen: fallback.map(|f| ScreenInfo {
                rounds: f.rounds,
                flagged: f.flagged,
                initial_violations: f.initial_violations.clone(),
                enforced_voltage_buses: f.enforced.voltage_buses.iter().copied().collect(),
                enforced_flow_branches: f.enforced.flow_branches.iter().copied().collect(),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
