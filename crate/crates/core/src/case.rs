//! Grid description: buses, branches, generators and their costs.
//!
//! All electrical quantities are stored per-unit on [`Case::base_mva`].
//! Generator cost coefficients stay per-MW, so the objective is evaluated
//! with `p_g` converted back to MW.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Real demand, p.u.
    pub pd: f64,
    /// Reactive demand, p.u.
    pub qd: f64,
    /// Shunt conductance, p.u. at 1 p.u. voltage.
    pub gs: f64,
    /// Shunt susceptance, p.u. at 1 p.u. voltage.
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub is_ref: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance.
    pub b_chg: f64,
    /// Off-nominal turns ratio; 1 is nominal.
    pub tap: f64,
    /// Phase shift, radians.
    pub shift: f64,
    /// Apparent-power limit in p.u.; 0 means unlimited.
    pub rate_a: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn is_limited(&self) -> bool {
        self.rate_a > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub in_service: bool,
}

/// Quadratic cost `a·P² + b·P + c` with `P` in MW, result in $/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GenCost {
    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        (self.a * p_mw + self.b) * p_mw + self.c
    }
}

/// Validated, immutable grid description.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    costs: Vec<GenCost>,
    index_of: BTreeMap<usize, usize>,
    ref_bus: usize,
    demand_buses: Vec<usize>,
    injection_buses: Vec<usize>,
    gen_bus: Vec<usize>,
}

impl Case {
    /// Validates the data and derives the index sets. Out-of-service
    /// branches and generators (with their costs) are dropped.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        costs: Vec<GenCost>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(invalid("base MVA must be positive"));
        }
        if generators.len() != costs.len() {
            return Err(invalid(format!(
                "{} generators but {} cost rows",
                generators.len(),
                costs.len()
            )));
        }

        let mut index_of = BTreeMap::new();
        let mut ref_bus = None;
        for (i, bus) in buses.iter().enumerate() {
            if index_of.insert(bus.id, i).is_some() {
                return Err(invalid(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.vmin > 0.0) || bus.vmax < bus.vmin {
                return Err(invalid(format!(
                    "bus {}: voltage bounds [{}, {}] invalid",
                    bus.id, bus.vmin, bus.vmax
                )));
            }
            if bus.is_ref {
                if ref_bus.is_some() {
                    return Err(invalid("more than one reference bus"));
                }
                ref_bus = Some(i);
            }
        }
        let ref_bus = ref_bus.ok_or_else(|| invalid("no reference bus"))?;

        let branches: Vec<Branch> = branches.into_iter().filter(|b| b.in_service).collect();
        for (l, br) in branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !index_of.contains_key(&end) {
                    return Err(invalid(format!("branch {l} references unknown bus {end}")));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::DegenerateBranch { index: l });
            }
            if !(br.tap > 0.0) {
                return Err(invalid(format!("branch {l}: tap must be positive")));
            }
            if br.rate_a < 0.0 {
                return Err(invalid(format!("branch {l}: negative rate_a")));
            }
        }

        let (generators, costs): (Vec<Generator>, Vec<GenCost>) = generators
            .into_iter()
            .zip(costs)
            .filter(|(g, _)| g.in_service)
            .unzip();
        let mut gen_bus = Vec::with_capacity(generators.len());
        for (g, (gen, cost)) in generators.iter().zip(&costs).enumerate() {
            let idx = *index_of
                .get(&gen.bus)
                .ok_or_else(|| invalid(format!("generator {g} references unknown bus {}", gen.bus)))?;
            if gen.pmax < gen.pmin || gen.qmax < gen.qmin {
                return Err(invalid(format!("generator {g}: inverted bounds")));
            }
            if cost.a < 0.0 {
                return Err(invalid(format!("generator {g}: non-convex cost (a < 0)")));
            }
            gen_bus.push(idx);
        }

        let mut case = Self {
            base_mva,
            buses,
            branches,
            generators,
            costs,
            index_of,
            ref_bus,
            demand_buses: Vec::new(),
            injection_buses: Vec::new(),
            gen_bus,
        };
        case.derive_index_sets();
        Ok(case)
    }

    fn derive_index_sets(&mut self) {
        self.demand_buses = self.compute_demand_buses();
        self.injection_buses = self.compute_injection_buses();
    }

    /// n_b: buses with nonzero real or reactive demand, ascending bus id.
    pub fn compute_demand_buses(&self) -> Vec<usize> {
        self.index_of
            .values()
            .copied()
            .filter(|&i| self.buses[i].pd != 0.0 || self.buses[i].qd != 0.0)
            .collect()
    }

    /// n_b': demand buses plus buses hosting an in-service generator,
    /// ascending bus id.
    pub fn compute_injection_buses(&self) -> Vec<usize> {
        self.index_of
            .values()
            .copied()
            .filter(|&i| {
                self.buses[i].pd != 0.0 || self.buses[i].qd != 0.0 || self.gen_bus.contains(&i)
            })
            .collect()
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn costs(&self) -> &[GenCost] {
        &self.costs
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    pub fn ref_bus(&self) -> usize {
        self.ref_bus
    }

    /// Position of the bus with the given id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// Bus position of each generator.
    pub fn gen_bus(&self) -> &[usize] {
        &self.gen_bus
    }

    pub fn branch_ends(&self, l: usize) -> (usize, usize) {
        let br = &self.branches[l];
        (self.index_of[&br.from], self.index_of[&br.to])
    }

    /// Bus positions in ascending id order.
    pub fn buses_by_id(&self) -> impl Iterator<Item = usize> + '_ {
        self.index_of.values().copied()
    }

    pub fn demand_buses(&self) -> &[usize] {
        &self.demand_buses
    }

    pub fn injection_buses(&self) -> &[usize] {
        &self.injection_buses
    }

    pub fn limited_branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_limited())
            .map(|(l, _)| l)
    }

    /// Copy of the case with demand replaced bus by bus (p.u.).
    pub fn with_demand(&self, pd: &[f64], qd: &[f64]) -> Result<Self> {
        let n = self.n_bus();
        if pd.len() != n || qd.len() != n {
            return Err(Error::Dimension {
                what: "per-bus demand",
                expected: n,
                got: pd.len().min(qd.len()),
            });
        }
        let mut case = self.clone();
        for (bus, (&p, &q)) in case.buses.iter_mut().zip(pd.iter().zip(qd)) {
            bus.pd = p;
            bus.qd = q;
        }
        case.derive_index_sets();
        Ok(case)
    }

    /// Generation cost in $/h for real outputs given in p.u.
    pub fn cost(&self, pg: &[f64]) -> f64 {
        self.costs
            .iter()
            .zip(pg)
            .map(|(c, &p)| c.eval_mw(p * self.base_mva))
            .sum()
    }

    /// Content hash over every stored quantity (hex, 16 bytes). Demand is
    /// excluded so perturbed copies share the fingerprint of their base case.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |x: f64| h.update(x.to_bits().to_le_bytes());
        put(self.base_mva);
        for b in &self.buses {
            put(b.id as f64);
            put(b.gs);
            put(b.bs);
            put(b.vmin);
            put(b.vmax);
            put(if b.is_ref { 1.0 } else { 0.0 });
            put(if b.pd != 0.0 || b.qd != 0.0 { 1.0 } else { 0.0 });
        }
        for br in &self.branches {
            for v in [br.from as f64, br.to as f64, br.r, br.x, br.b_chg, br.tap, br.shift, br.rate_a] {
                put(v);
            }
        }
        for (g, c) in self.generators.iter().zip(&self.costs) {
            for v in [g.bus as f64, g.pmin, g.pmax, g.qmin, g.qmax, c.a, c.b, c.c] {
                put(v);
            }
        }
        let digest = h.finalize();
        digest[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidCase(msg.into())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn two_bus_index_sets() {
        let case = two_bus();
        assert_eq!(case.n_gen(), 1);
        assert_eq!(case.demand_buses(), &[1]);
        assert_eq!(case.injection_buses(), &[0, 1]);
        assert_eq!(case.ref_bus(), 0);
    }

    #[test]
    fn dangling_branch_rejected() {
        let err = Case::new(
            100.0,
            vec![bus(1, 0.0, 0.0, true), bus(2, 0.5, 0.1, false)],
            vec![line(1, 99, 0.0, 0.1, 0.0)],
            vec![gen(1, 2.0)],
            vec![GenCost { a: 0.0, b: 1.0, c: 0.0 }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidCase(ref m) if m.contains("99")));
    }

    #[test]
    fn missing_and_duplicate_reference() {
        let no_ref = Case::new(
            100.0,
            vec![bus(1, 0.0, 0.0, false)],
            vec![],
            vec![],
            vec![],
        );
        assert!(no_ref.is_err());
        let dup = Case::new(
            100.0,
            vec![bus(1, 0.0, 0.0, true), bus(1, 0.0, 0.0, false)],
            vec![],
            vec![],
            vec![],
        );
        assert!(matches!(dup, Err(Error::InvalidCase(m)) if m.contains("duplicate")));
    }

    #[test]
    fn out_of_service_dropped() {
        let mut off = gen(2, 1.0);
        off.in_service = false;
        let mut br = line(1, 2, 0.0, 0.2, 0.0);
        br.in_service = false;
        let case = Case::new(
            100.0,
            vec![bus(1, 0.0, 0.0, true), bus(2, 0.5, 0.0, false)],
            vec![line(1, 2, 0.0, 0.1, 0.0), br],
            vec![gen(1, 2.0), off],
            vec![GenCost { a: 0.0, b: 1.0, c: 0.0 }, GenCost { a: 0.0, b: 2.0, c: 0.0 }],
        )
        .unwrap();
        assert_eq!(case.n_branch(), 1);
        assert_eq!(case.n_gen(), 1);
        assert_eq!(case.costs()[0].b, 1.0);
    }

    #[test]
    fn degenerate_branch_rejected() {
        let err = Case::new(
            100.0,
            vec![bus(1, 0.0, 0.0, true), bus(2, 0.5, 0.1, false)],
            vec![line(1, 2, 0.0, 0.0, 0.0)],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, Error::DegenerateBranch { index: 0 });
    }

    #[test]
    fn fingerprint_ignores_demand_level() {
        let case = two_bus();
        let scaled = case.with_demand(&[0.0, 0.7], &[0.0, 0.2]).unwrap();
        assert_eq!(case.fingerprint(), scaled.fingerprint());
        assert_eq!(case.fingerprint().len(), 32);
    }
}
