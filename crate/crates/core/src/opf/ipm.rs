//! Primal-dual interior-point method.
//!
//! Inequalities `h(x) <= 0` get slacks `z > 0`; each iteration takes a
//! damped Newton step on the perturbed KKT system, reduced to
//!
//! ```text
//! [ Lxx + Jhᵀ diag(μ/z) Jh   Jgᵀ ] [dx]   [ -(Lx + Jhᵀ (μ∘h + γ)/z) ]
//! [ Jg                        0  ] [dλ] = [ -g                       ]
//! ```
//!
//! with a fraction-to-boundary step rule on `z` and `μ` and a monotone
//! barrier `γ = σ·zᵀμ/m`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{ConstraintSet, Inequality, OpfSolution, OpfVariables, SolveStatus, SolverOptions};
use crate::case::Case;
use crate::clock::{default_clock, Clock};
use crate::network::{build_admittance, hessian_contraction, AdmittanceModel, End, HessianWeights, VoltageState};
use crate::{Error, Result};

pub fn solve_opf(
    case: &Case,
    cs: &ConstraintSet,
    start: Option<&OpfVariables>,
    opts: &SolverOptions,
) -> Result<OpfSolution> {
    solve_opf_with_clock(case, cs, start, opts, &default_clock())
}

pub fn solve_opf_with_clock(
    case: &Case,
    cs: &ConstraintSet,
    start: Option<&OpfVariables>,
    opts: &SolverOptions,
    clock: &dyn Clock,
) -> Result<OpfSolution> {
    let t0 = clock.now();
    let problem = Problem::new(case, cs, opts.cost_scale)?;
    let x0 = match start {
        Some(s) => {
            if s.vm.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("start point has non-positive voltage magnitude".into()));
            }
            problem.pack(s)?
        }
        None => problem.pack(&OpfVariables::flat_start(case))?,
    };
    let mut sol = problem.run(x0, opts);
    sol.wall_time = clock.now() - t0;
    Ok(sol)
}

/// Scaled KKT residuals of a solution, recomputed from its variables,
/// multipliers and slacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub feasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

pub fn kkt_residuals(case: &Case, cs: &ConstraintSet, sol: &OpfSolution, opts: &SolverOptions) -> Result<KktResiduals> {
    let problem = Problem::new(case, cs, opts.cost_scale)?;
    if problem.ineq != sol.inequalities {
        return Err(Error::Config("solution does not belong to this constraint set".into()));
    }
    let x = problem.pack(&sol.vars)?;
    let ev = problem.eval(&x, None);
    let lam = DVector::from_column_slice(&sol.mult_eq);
    let mu = DVector::from_column_slice(&sol.mult_ineq);
    let z = DVector::from_column_slice(&sol.slacks);
    let lx = problem.lagrangian_gradient(&ev, &lam, &mu);
    Ok(conditions(&x, &ev, &lx, &lam, &z, &mu))
}

struct Eval {
    df: DVector<f64>,
    g: DVector<f64>,
    h: DVector<f64>,
    jg: DMatrix<f64>,
    /// Sparse rows of the inequality Jacobian.
    jh: Vec<Vec<(usize, f64)>>,
}

struct Problem<'a> {
    case: &'a Case,
    model: AdmittanceModel,
    ineq: Vec<Inequality>,
    /// Enforced branches with their limits squared.
    flows: Vec<(usize, f64)>,
    nb: usize,
    ng: usize,
    nx: usize,
    neq: usize,
    cost_scale: f64,
}

impl<'a> Problem<'a> {
    fn new(case: &'a Case, cs: &ConstraintSet, cost_scale: f64) -> Result<Self> {
        let nb = case.n_bus();
        let ng = case.n_gen();
        if let Some(&i) = cs.voltage_buses.iter().find(|&&i| i >= nb) {
            return Err(Error::Config(alloc::format!("voltage constraint on unknown bus {i}")));
        }
        for &l in &cs.flow_branches {
            if l >= case.n_branch() || !case.branches()[l].is_limited() {
                return Err(Error::Config(alloc::format!(
                    "flow constraint on branch {l} without a finite limit"
                )));
            }
        }
        let model = build_admittance(case)?;
        let mut ineq = Vec::new();
        for g in 0..ng {
            ineq.push(Inequality::PgMax(g));
        }
        for g in 0..ng {
            ineq.push(Inequality::PgMin(g));
        }
        for g in 0..ng {
            ineq.push(Inequality::QgMax(g));
        }
        for g in 0..ng {
            ineq.push(Inequality::QgMin(g));
        }
        for &i in &cs.voltage_buses {
            ineq.push(Inequality::VmMax(i));
            ineq.push(Inequality::VmMin(i));
        }
        let mut flows = Vec::new();
        for &l in &cs.flow_branches {
            ineq.push(Inequality::FlowFrom(l));
            ineq.push(Inequality::FlowTo(l));
            let rate = case.branches()[l].rate_a;
            flows.push((l, rate * rate));
        }
        Ok(Self {
            case,
            model,
            ineq,
            flows,
            nb,
            ng,
            nx: 2 * nb + 2 * ng,
            neq: 2 * nb + 1,
            cost_scale,
        })
    }

    fn niq(&self) -> usize {
        self.ineq.len()
    }

    fn pack(&self, v: &OpfVariables) -> Result<DVector<f64>> {
        let (nb, ng) = (self.nb, self.ng);
        if v.theta.len() != nb || v.vm.len() != nb || v.pg.len() != ng || v.qg.len() != ng {
            return Err(Error::Dimension {
                what: "OPF start point",
                expected: self.nx,
                got: v.theta.len() + v.vm.len() + v.pg.len() + v.qg.len(),
            });
        }
        let mut x = DVector::zeros(self.nx);
        x.rows_mut(0, nb).copy_from_slice(&v.theta);
        x.rows_mut(nb, nb).copy_from_slice(&v.vm);
        x.rows_mut(2 * nb, ng).copy_from_slice(&v.pg);
        x.rows_mut(2 * nb + ng, ng).copy_from_slice(&v.qg);
        Ok(x)
    }

    fn unpack(&self, x: &DVector<f64>) -> OpfVariables {
        let (nb, ng) = (self.nb, self.ng);
        OpfVariables {
            theta: x.rows(0, nb).iter().copied().collect(),
            vm: x.rows(nb, nb).iter().copied().collect(),
            pg: x.rows(2 * nb, ng).iter().copied().collect(),
            qg: x.rows(2 * nb + ng, ng).iter().copied().collect(),
        }
    }

    fn voltage(&self, x: &DVector<f64>) -> VoltageState {
        VoltageState {
            theta: x.rows(0, self.nb).iter().copied().collect(),
            vm: x.rows(self.nb, self.nb).iter().copied().collect(),
        }
    }

    /// Evaluates objective and constraints. Counts evaluated rows into
    /// `fevals` when given.
    fn eval(&self, x: &DVector<f64>, fevals: Option<&mut u64>) -> Eval {
        let (nb, ng, nx) = (self.nb, self.ng, self.nx);
        let case = self.case;
        let base = case.base_mva();
        let v = self.voltage(x);
        let pg0 = 2 * nb;
        let qg0 = 2 * nb + ng;

        let mut df = DVector::zeros(nx);
        for (g, c) in case.costs().iter().enumerate() {
            let p_mw = x[pg0 + g] * base;
            df[pg0 + g] = self.cost_scale * (2.0 * c.a * p_mw + c.b) * base;
        }
        // power balance
        let mut g_eq = DVector::zeros(self.neq);
        let mut jg = DMatrix::zeros(self.neq, nx);
        for (i, bus) in case.buses().iter().enumerate() {
            let y = self.model.shunts[i];
            let vm = v.vm[i];
            g_eq[i] = y.re * vm * vm + bus.pd;
            g_eq[nb + i] = -y.im * vm * vm + bus.qd;
            jg[(i, nb + i)] += 2.0 * y.re * vm;
            jg[(nb + i, nb + i)] -= 2.0 * y.im * vm;
        }
        for l in 0..self.model.n_branch() {
            for end in [End::From, End::To] {
                let t = self.model.end_terms(l, end, &v);
                let bus = t.cols[0];
                g_eq[bus] += t.p;
                g_eq[nb + bus] += t.q;
                for k in 0..4 {
                    jg[(bus, t.cols[k])] += t.dp[k];
                    jg[(nb + bus, t.cols[k])] += t.dq[k];
                }
            }
        }
        for (gi, &bus) in case.gen_bus().iter().enumerate() {
            g_eq[bus] -= x[pg0 + gi];
            g_eq[nb + bus] -= x[qg0 + gi];
            jg[(bus, pg0 + gi)] = -1.0;
            jg[(nb + bus, qg0 + gi)] = -1.0;
        }
        let r = case.ref_bus();
        g_eq[2 * nb] = x[r];
        jg[(2 * nb, r)] = 1.0;

        // inequalities
        let niq = self.niq();
        let mut h = DVector::zeros(niq);
        let mut jh = Vec::with_capacity(niq);
        let gens = case.generators();
        let buses = case.buses();
        let mut k = 0;
        for which in &self.ineq[..4 * ng] {
            let (val, row) = match *which {
                Inequality::PgMax(g) => (x[pg0 + g] - gens[g].pmax, (pg0 + g, 1.0)),
                Inequality::PgMin(g) => (gens[g].pmin - x[pg0 + g], (pg0 + g, -1.0)),
                Inequality::QgMax(g) => (x[qg0 + g] - gens[g].qmax, (qg0 + g, 1.0)),
                Inequality::QgMin(g) => (gens[g].qmin - x[qg0 + g], (qg0 + g, -1.0)),
                _ => unreachable!(),
            };
            h[k] = val;
            jh.push(vec![row]);
            k += 1;
        }
        for which in &self.ineq[4 * ng..niq - 2 * self.flows.len()] {
            let (val, row) = match *which {
                Inequality::VmMax(i) => (x[nb + i] - buses[i].vmax, (nb + i, 1.0)),
                Inequality::VmMin(i) => (buses[i].vmin - x[nb + i], (nb + i, -1.0)),
                _ => unreachable!(),
            };
            h[k] = val;
            jh.push(vec![row]);
            k += 1;
        }
        for &(l, limit2) in &self.flows {
            for end in [End::From, End::To] {
                let t = self.model.end_terms(l, end, &v);
                let ds2 = t.ds2();
                h[k] = t.s2() - limit2;
                jh.push((0..4).map(|j| (t.cols[j], ds2[j])).collect());
                k += 1;
            }
        }

        if let Some(n) = fevals {
            *n += (self.neq + niq) as u64;
        }
        Eval {
            df,
            g: g_eq,
            h,
            jg,
            jh,
        }
    }

    fn lagrangian_gradient(&self, ev: &Eval, lam: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let mut lx = &ev.df + ev.jg.tr_mul(lam);
        for (row, &m) in ev.jh.iter().zip(mu.iter()) {
            for &(j, d) in row {
                lx[j] += d * m;
            }
        }
        lx
    }

    fn lagrangian_hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        let nb = self.nb;
        let v = self.voltage(x);
        let nl = self.model.n_branch();
        let mut mu_f = vec![0.0; nl];
        let mut mu_t = vec![0.0; nl];
        let first_flow = self.niq() - 2 * self.flows.len();
        for (k, &(l, _)) in self.flows.iter().enumerate() {
            mu_f[l] = mu[first_flow + 2 * k];
            mu_t[l] = mu[first_flow + 2 * k + 1];
        }
        let lp: Vec<f64> = lam.rows(0, nb).iter().copied().collect();
        let lq: Vec<f64> = lam.rows(nb, nb).iter().copied().collect();
        let net = hessian_contraction(
            &self.model,
            &v,
            HessianWeights {
                p: &lp,
                q: &lq,
                flow_from: &mu_f,
                flow_to: &mu_t,
            },
        );
        let mut hess = DMatrix::zeros(self.nx, self.nx);
        for &(r, c, val) in &net.entries {
            hess[(r, c)] += val;
        }
        let base = self.case.base_mva();
        for (g, c) in self.case.costs().iter().enumerate() {
            hess[(2 * nb + g, 2 * nb + g)] += self.cost_scale * 2.0 * c.a * base * base;
        }
        hess
    }

    fn run(&self, mut x: DVector<f64>, opts: &SolverOptions) -> OpfSolution {
        let (nx, neq, niq) = (self.nx, self.neq, self.niq());
        let mut fevals = 0u64;
        let mut ev = self.eval(&x, Some(&mut fevals));

        let z0 = 1.0;
        let mut gamma = 1.0;
        let mut lam = DVector::zeros(neq);
        let mut z = DVector::from_element(niq, z0);
        let mut mu = DVector::from_element(niq, z0);
        for k in 0..niq {
            if ev.h[k] < -z0 {
                z[k] = -ev.h[k];
            }
            if gamma / z[k] > z0 {
                mu[k] = gamma / z[k];
            }
        }

        let mut lx = self.lagrangian_gradient(&ev, &lam, &mu);
        let mut status = SolveStatus::MaxIter;
        let mut iterations = 0;
        if converged(&conditions(&x, &ev, &lx, &lam, &z, &mu), opts) {
            status = SolveStatus::Converged;
        }

        while status == SolveStatus::MaxIter && iterations < opts.max_iter {
            iterations += 1;

            let mut kkt = DMatrix::zeros(nx + neq, nx + neq);
            kkt.view_mut((0, 0), (nx, nx))
                .copy_from(&self.lagrangian_hessian(&x, &lam, &mu));
            let mut n = lx.clone();
            for k in 0..niq {
                let w = mu[k] / z[k];
                let r = (mu[k] * ev.h[k] + gamma) / z[k];
                let row = &ev.jh[k];
                for &(i, di) in row {
                    n[i] += di * r;
                    for &(j, dj) in row {
                        kkt[(i, j)] += w * di * dj;
                    }
                }
            }
            kkt.view_mut((nx, 0), (neq, nx)).copy_from(&ev.jg);
            kkt.view_mut((0, nx), (nx, neq)).copy_from(&ev.jg.transpose());
            let mut rhs = DVector::zeros(nx + neq);
            rhs.rows_mut(0, nx).copy_from(&(-&n));
            rhs.rows_mut(nx, neq).copy_from(&(-&ev.g));

            let step = match solve_regularized(kkt, &rhs, nx, opts) {
                Some(s) => s,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            };
            let dx = step.rows(0, nx).into_owned();
            let dlam = step.rows(nx, neq).into_owned();

            let mut dz = DVector::zeros(niq);
            let mut dmu = DVector::zeros(niq);
            for k in 0..niq {
                let jdx: f64 = ev.jh[k].iter().map(|&(j, d)| d * dx[j]).sum();
                dz[k] = -ev.h[k] - z[k] - jdx;
                dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
            }

            let xi = opts.step_fraction;
            let alpha_p = boundary_step(&z, &dz, xi);
            let alpha_d = boundary_step(&mu, &dmu, xi);

            x += alpha_p * &dx;
            z += alpha_p * &dz;
            lam += alpha_d * &dlam;
            mu += alpha_d * &dmu;
            if niq > 0 {
                gamma = opts.barrier_reduction * z.dot(&mu) / niq as f64;
            }

            if !x.iter().all(|v| v.is_finite()) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            ev = self.eval(&x, Some(&mut fevals));
            lx = self.lagrangian_gradient(&ev, &lam, &mu);
            let cond = conditions(&x, &ev, &lx, &lam, &z, &mu);
            if !(cond.feasibility.is_finite() && cond.stationarity.is_finite() && cond.complementarity.is_finite()) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if converged(&cond, opts) {
                status = SolveStatus::Converged;
            }
        }

        let vars = self.unpack(&x);
        OpfSolution {
            objective: self.case.cost(&vars.pg),
            vars,
            mult_eq: lam.iter().copied().collect(),
            mult_ineq: mu.iter().copied().collect(),
            slacks: z.iter().copied().collect(),
            inequalities: self.ineq.clone(),
            status,
            iterations,
            wall_time: 0.0,
            feval_count: fevals,
        }
    }
}

fn conditions(
    x: &DVector<f64>,
    ev: &Eval,
    lx: &DVector<f64>,
    lam: &DVector<f64>,
    z: &DVector<f64>,
    mu: &DVector<f64>,
) -> KktResiduals {
    let max_h = ev.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feas = ev.g.amax().max(max_h);
    let x_inf = x.amax();
    let z_inf = if z.is_empty() { 0.0 } else { z.amax() };
    let lam_inf = if lam.is_empty() { 0.0 } else { lam.amax() };
    let mu_inf = if mu.is_empty() { 0.0 } else { mu.amax() };
    KktResiduals {
        feasibility: feas / (1.0 + x_inf.max(z_inf)),
        stationarity: lx.amax() / (1.0 + lam_inf.max(mu_inf)),
        complementarity: z.dot(mu) / (1.0 + x_inf),
    }
}

fn converged(c: &KktResiduals, opts: &SolverOptions) -> bool {
    c.feasibility < opts.feastol && c.stationarity < opts.gradtol && c.complementarity < opts.comptol
}

fn boundary_step(v: &DVector<f64>, dv: &DVector<f64>, xi: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (a, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            alpha = alpha.min(xi * a / -d);
        }
    }
    alpha
}

/// LU solve with growing diagonal regularization on failure.
fn solve_regularized(kkt: DMatrix<f64>, rhs: &DVector<f64>, nx: usize, opts: &SolverOptions) -> Option<DVector<f64>> {
    let finite = |s: &DVector<f64>| s.iter().all(|v| v.is_finite());
    if let Some(s) = kkt.clone().lu().solve(rhs) {
        if finite(&s) {
            return Some(s);
        }
    }
    let n = kkt.nrows();
    let mut delta = opts.reg_initial;
    while delta <= opts.reg_max * (1.0 + 1e-12) {
        let mut m = kkt.clone();
        for i in 0..n {
            m[(i, i)] += if i < nx { delta } else { -delta };
        }
        if let Some(s) = m.lu().solve(rhs) {
            if finite(&s) {
                return Some(s);
            }
        }
        delta *= 10.0;
    }
    None
}
