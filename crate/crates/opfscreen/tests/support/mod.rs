//! Shared helpers for integration tests: case loading and a brute-force
//! optimum of the three-bus toy found by grid search over
//! `(pg at bus 2, vm at bus 1, vm at bus 2)` with an independent Newton
//! power flow for the rest.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use opfscreen::case_io::load_case;
use opfscreen_core::case::Case;

pub fn case_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

pub fn load(name: &str) -> Case {
    load_case(&case_path(name)).unwrap()
}

#[derive(Debug, Clone)]
pub struct GridOptimum {
    /// $/h.
    pub cost: f64,
    pub vm: [f64; 3],
    /// Larger end of each branch's apparent-power flow, p.u.
    pub flow: Vec<f64>,
}

impl GridOptimum {
    pub fn voltage_binding(&self, case: &Case, tol: f64) -> Vec<bool> {
        case.buses()
            .iter()
            .zip(self.vm)
            .map(|(b, v)| (b.vmax - v).min(v - b.vmin) <= tol)
            .collect()
    }

    pub fn flow_binding(&self, case: &Case, tol: f64) -> Vec<bool> {
        case.branches()
            .iter()
            .zip(&self.flow)
            .map(|(br, &f)| br.rate_a > 0.0 && (br.rate_a - f) / br.rate_a <= tol)
            .collect()
    }
}

struct Grid {
    g: [[f64; 3]; 3],
    b: [[f64; 3]; 3],
    /// `(from, to, g, b)` series admittance per branch.
    series: Vec<(usize, usize, f64, f64)>,
}

impl Grid {
    fn new(case: &Case) -> Self {
        assert_eq!(case.n_bus(), 3);
        let mut g = [[0.0; 3]; 3];
        let mut b = [[0.0; 3]; 3];
        let mut series = Vec::new();
        for br in case.branches() {
            assert!(br.b_chg == 0.0 && br.tap == 1.0 && br.shift == 0.0);
            let (f, t) = (case.bus_index(br.from).unwrap(), case.bus_index(br.to).unwrap());
            let d = br.r * br.r + br.x * br.x;
            let (ys_g, ys_b) = (br.r / d, -br.x / d);
            for (i, j, s) in [(f, f, 1.0), (t, t, 1.0), (f, t, -1.0), (t, f, -1.0)] {
                g[i][j] += s * ys_g;
                b[i][j] += s * ys_b;
            }
            series.push((f, t, ys_g, ys_b));
        }
        for (i, bus) in case.buses().iter().enumerate() {
            g[i][i] += bus.gs;
            b[i][i] += bus.bs;
        }
        Self { g, b, series }
    }

    fn pq(&self, th: &[f64; 3], v: &[f64; 3], i: usize) -> (f64, f64) {
        let (mut p, mut q) = (0.0, 0.0);
        for j in 0..3 {
            let a = th[i] - th[j];
            p += v[i] * v[j] * (self.g[i][j] * a.cos() + self.b[i][j] * a.sin());
            q += v[i] * v[j] * (self.g[i][j] * a.sin() - self.b[i][j] * a.cos());
        }
        (p, q)
    }

    fn flow(&self, th: &[f64; 3], v: &[f64; 3], from: usize, to: usize, gs: f64, bs: f64) -> f64 {
        // S = V_f conj(y (V_f - V_t))
        let (vfr, vfi) = (v[from] * th[from].cos(), v[from] * th[from].sin());
        let (vtr, vti) = (v[to] * th[to].cos(), v[to] * th[to].sin());
        let (dr, di) = (vfr - vtr, vfi - vti);
        let (ir, ii) = (gs * dr - bs * di, gs * di + bs * dr);
        let (sr, si) = (vfr * ir + vfi * ii, vfi * ir - vfr * ii);
        (sr * sr + si * si).sqrt()
    }
}

fn solve3(a: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = r[i];
        }
        *xk = det(m) / d;
    }
    Some(x)
}

/// Cost and constraint values at one grid point, or `None` when the power
/// flow fails or a limit is broken.
fn evaluate(case: &Case, grid: &Grid, p2: f64, v1: f64, v2: f64, enforce_flows: bool) -> Option<GridOptimum> {
    let buses = case.buses();
    let residual = |x: &[f64; 3]| {
        let th = [0.0, x[0], x[1]];
        let v = [v1, v2, x[2]];
        let (pa, _) = grid.pq(&th, &v, 1);
        let (pb, qb) = grid.pq(&th, &v, 2);
        [pa - (p2 - buses[1].pd), pb + buses[2].pd, qb + buses[2].qd]
    };
    let mut x = [0.0, 0.0, 1.0];
    let mut converged = false;
    for _ in 0..40 {
        let f = residual(&x);
        if f.iter().all(|r| r.abs() < 1e-11) {
            converged = true;
            break;
        }
        let h = 1e-7;
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let (mut up, mut dn) = (x, x);
            up[k] += h;
            dn[k] -= h;
            let (fu, fd) = (residual(&up), residual(&dn));
            for i in 0..3 {
                jac[i][k] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let dx = solve3(jac, [-f[0], -f[1], -f[2]])?;
        for k in 0..3 {
            x[k] += dx[k];
        }
        if !(x[2] > 0.3 && x[2] < 2.0) {
            return None;
        }
    }
    if !converged {
        return None;
    }
    let th = [0.0, x[0], x[1]];
    let v = [v1, v2, x[2]];
    let (p1, q1) = grid.pq(&th, &v, 0);
    let (_, q2) = grid.pq(&th, &v, 1);
    let pg1 = p1 + buses[0].pd;
    let qg1 = q1 + buses[0].qd;
    let qg2 = q2 + buses[1].qd;
    let gens = case.generators();
    let ok = pg1 >= gens[0].pmin
        && pg1 <= gens[0].pmax
        && qg1 >= gens[0].qmin
        && qg1 <= gens[0].qmax
        && qg2 >= gens[1].qmin
        && qg2 <= gens[1].qmax
        && v[2] >= buses[2].vmin
        && v[2] <= buses[2].vmax;
    if !ok {
        return None;
    }
    let flow: Vec<f64> = grid
        .series
        .iter()
        .map(|&(f, t, g, b)| grid.flow(&th, &v, f, t, g, b).max(grid.flow(&th, &v, t, f, g, b)))
        .collect();
    if enforce_flows
        && case
            .branches()
            .iter()
            .zip(&flow)
            .any(|(br, &s)| br.rate_a > 0.0 && s > br.rate_a)
    {
        return None;
    }
    let base = case.base_mva();
    let c = case.costs();
    let cost = c[0].eval_mw(pg1 * base) + c[1].eval_mw(p2 * base);
    Some(GridOptimum { cost, vm: v, flow })
}

fn axis(center: f64, half: f64, bounds: (f64, f64), n: usize) -> Vec<f64> {
    let lo = (center - half).max(bounds.0);
    let hi = (center + half).min(bounds.1);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Cheapest feasible point with the two voltages fixed. Generation at bus 2
/// is scanned; the step into the feasible set is then bisected, since the
/// cost rises with it once feasible. Every scanned point still competes.
fn best_for_voltages(case: &Case, grid: &Grid, v1: f64, v2: f64, enforce_flows: bool) -> Option<GridOptimum> {
    let g = &case.generators()[1];
    let n = 41;
    let p2s: Vec<f64> = (0..n).map(|i| g.pmin + (g.pmax - g.pmin) * i as f64 / (n - 1) as f64).collect();
    let mut best: Option<GridOptimum> = None;
    let mut keep = |o: GridOptimum| {
        if best.as_ref().is_none_or(|b| o.cost < b.cost) {
            best = Some(o);
        }
    };
    let mut first = None;
    for (i, &p2) in p2s.iter().enumerate() {
        if let Some(o) = evaluate(case, grid, p2, v1, v2, enforce_flows) {
            first.get_or_insert(i);
            keep(o);
        }
    }
    if let Some(i) = first.filter(|&i| i > 0) {
        let (mut lo, mut hi) = (p2s[i - 1], p2s[i]);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if evaluate(case, grid, mid, v1, v2, enforce_flows).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if let Some(o) = evaluate(case, grid, hi, v1, v2, enforce_flows) {
            keep(o);
        }
    }
    best
}

/// Cheapest feasible point: a scan of the voltage box, then local refinement
/// around several well-separated candidates.
pub fn brute_force(case: &Case, enforce_flows: bool) -> Option<GridOptimum> {
    assert_eq!(case.n_gen(), 2);
    assert_eq!(case.gen_bus(), &[0, 1]);
    let grid = Grid::new(case);
    let b = case.buses();
    let bounds = [(b[0].vmin, b[0].vmax), (b[1].vmin, b[1].vmax)];
    let n0 = 21;
    let cell: [f64; 2] = core::array::from_fn(|k| (bounds[k].1 - bounds[k].0) / (n0 - 1) as f64);
    let mut coarse = Vec::new();
    for v1 in axis(0.5 * (bounds[0].0 + bounds[0].1), 1.0, bounds[0], n0) {
        for v2 in axis(0.5 * (bounds[1].0 + bounds[1].1), 1.0, bounds[1], n0) {
            if let Some(o) = best_for_voltages(case, &grid, v1, v2, enforce_flows) {
                coarse.push((o, [v1, v2]));
            }
        }
    }
    coarse.sort_by(|a, b| a.0.cost.total_cmp(&b.0.cost));
    let mut starts: Vec<[f64; 2]> = Vec::new();
    for (_, x) in &coarse {
        if starts.iter().all(|s| (0..2).any(|k| (s[k] - x[k]).abs() > 2.5 * cell[k])) {
            starts.push(*x);
        }
        if starts.len() == 4 {
            break;
        }
    }
    let mut best: Option<GridOptimum> = None;
    for start in starts {
        let mut center = start;
        let mut half = cell;
        let mut local: Option<(GridOptimum, [f64; 2])> = None;
        for _level in 0..14 {
            for v1 in axis(center[0], half[0], bounds[0], 7) {
                for v2 in axis(center[1], half[1], bounds[1], 7) {
                    if let Some(o) = best_for_voltages(case, &grid, v1, v2, enforce_flows) {
                        if local.as_ref().is_none_or(|(l, _)| o.cost < l.cost) {
                            local = Some((o, [v1, v2]));
                        }
                    }
                }
            }
            if let Some((_, x)) = &local {
                center = *x;
            }
            for h in &mut half {
                *h *= 0.5;
            }
        }
        if let Some((o, _)) = local {
            if best.as_ref().is_none_or(|b| o.cost < b.cost) {
                best = Some(o);
            }
        }
    }
    best
}

/// The independent model's view of a point given by its free variables.
pub fn evaluate_at(case: &Case, p2: f64, v1: f64, v2: f64, enforce_flows: bool) -> Option<GridOptimum> {
    evaluate(case, &Grid::new(case), p2, v1, v2, enforce_flows)
}
