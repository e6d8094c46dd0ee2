//! Constraint activity labels and violation checks.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ConstraintSet, OpfSolution, OpfVariables};
use crate::case::Case;
use crate::network::{branch_flows, build_admittance};
use crate::{Error, Result};

/// One label per bus and one per branch. A bus is active when its voltage
/// sits at either bound; a branch when either end is at its flow limit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityLabels {
    pub v_active: Vec<bool>,
    pub l_active: Vec<bool>,
}

impl ActivityLabels {
    pub fn count_active(&self) -> (usize, usize) {
        (
            self.v_active.iter().filter(|&&a| a).count(),
            self.l_active.iter().filter(|&&a| a).count(),
        )
    }

    /// The constraint set that enforces exactly the active labels.
    pub fn to_constraint_set(&self) -> ConstraintSet {
        ConstraintSet {
            voltage_buses: positions(&self.v_active),
            flow_branches: positions(&self.l_active),
        }
    }
}

fn positions(flags: &[bool]) -> alloc::collections::BTreeSet<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(i, _)| i)
        .collect()
}

pub fn label_activity(sol: &OpfSolution, case: &Case, eps_active: f64) -> Result<ActivityLabels> {
    if !sol.converged() {
        return Err(Error::NotConverged(alloc::format!("{:?}", sol.status)));
    }
    let vars = &sol.vars;
    let v_active = case
        .buses()
        .iter()
        .zip(&vars.vm)
        .map(|(b, &vm)| (b.vmax - vm).min(vm - b.vmin) <= eps_active)
        .collect();
    let model = build_admittance(case)?;
    let (ff, ft) = branch_flows(&model, &vars.voltage());
    let l_active = case
        .branches()
        .iter()
        .enumerate()
        .map(|(l, br)| br.is_limited() && br.rate_a - ff[l].max(ft[l]) <= eps_active * br.rate_a.max(1.0))
        .collect();
    Ok(ActivityLabels { v_active, l_active })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintId {
    VoltageUpper(usize),
    VoltageLower(usize),
    FlowFrom(usize),
    FlowTo(usize),
}

impl ConstraintId {
    pub fn bus(&self) -> Option<usize> {
        match *self {
            Self::VoltageUpper(i) | Self::VoltageLower(i) => Some(i),
            _ => None,
        }
    }

    pub fn branch(&self) -> Option<usize> {
        match *self {
            Self::FlowFrom(l) | Self::FlowTo(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    /// Amount beyond the limit, p.u. (voltage) or p.u. apparent power.
    pub amount: f64,
}

/// Voltage and flow constraints of `full_set` violated by more than `tol`.
pub fn check_violations(case: &Case, vars: &OpfVariables, full_set: &ConstraintSet, tol: f64) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    for &i in &full_set.voltage_buses {
        let bus = &case.buses()[i];
        let vm = vars.vm[i];
        if vm - bus.vmax > tol {
            out.push(Violation {
                constraint: ConstraintId::VoltageUpper(i),
                amount: vm - bus.vmax,
            });
        }
        if bus.vmin - vm > tol {
            out.push(Violation {
                constraint: ConstraintId::VoltageLower(i),
                amount: bus.vmin - vm,
            });
        }
    }
    if !full_set.flow_branches.is_empty() {
        let model = build_admittance(case)?;
        let (ff, ft) = branch_flows(&model, &vars.voltage());
        for &l in &full_set.flow_branches {
            let rate = case.branches()[l].rate_a;
            if rate <= 0.0 {
                continue;
            }
            if ff[l] - rate > tol {
                out.push(Violation {
                    constraint: ConstraintId::FlowFrom(l),
                    amount: ff[l] - rate,
                });
            }
            if ft[l] - rate > tol {
                out.push(Violation {
                    constraint: ConstraintId::FlowTo(l),
                    amount: ft[l] - rate,
                });
            }
        }
    }
    Ok(out)
}
