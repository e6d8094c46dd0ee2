//! Bus admittance model, power injections, branch flows and their
//! derivatives in polar voltage coordinates.
//!
//! Two evaluation routes exist. [`injections`] and [`branch_flows`] go
//! through the assembled `Ybus`/`Yf`/`Yt` matrices. The derivative code
//! works branch by branch: every branch end contributes
//!
//! ```text
//! P = v1² g0 + v1 v2 (g cos δ + b sin δ)
//! Q = -v1² b0 + v1 v2 (g sin δ - b cos δ),      δ = θ1 - θ2
//! ```
//!
//! where `g0 + j b0` is the self admittance of that end and `g + j b` the
//! mutual one. Bus injections are sums of end terms plus shunts. The local
//! variable order of an end is `(θ1, θ2, v1, v2)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};
#[allow(unused_imports)]
use num_traits::Float;

use crate::case::Case;
use crate::{Error, Result};

pub type C64 = Complex<f64>;

fn polar(r: f64, t: f64) -> C64 {
    C64::new(r * t.cos(), r * t.sin())
}

fn abs(z: C64) -> f64 {
    z.re.hypot(z.im)
}

/// Triplet-form sparse matrix. Duplicate entries are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Copy + Default + core::ops::AddAssign + core::ops::Mul<Output = T>> SparseMatrix<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let mut acc = T::default();
        for &(r, c, v) in &self.entries {
            if r == i && c == j {
                acc += v;
            }
        }
        acc
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }
}

impl<T: nalgebra::Scalar + Copy + Default + core::ops::AddAssign + num_traits::Zero> SparseMatrix<T> {
    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::<T>::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

/// Per-bus voltage angles (rad) and magnitudes (p.u.).
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageState {
    pub theta: Vec<f64>,
    pub vm: Vec<f64>,
}

impl VoltageState {
    pub fn flat(n_bus: usize) -> Self {
        Self {
            theta: vec![0.0; n_bus],
            vm: vec![1.0; n_bus],
        }
    }

    fn phasors(&self) -> Vec<C64> {
        self.theta
            .iter()
            .zip(&self.vm)
            .map(|(&t, &v)| polar(v, t))
            .collect()
    }
}

/// Π-model admittances of one in-service branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: C64,
    pub yft: C64,
    pub ytf: C64,
    pub ytt: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    From,
    To,
}

#[derive(Debug, Clone)]
pub struct AdmittanceModel {
    n_bus: usize,
    pub ybus: SparseMatrix<C64>,
    pub yf: SparseMatrix<C64>,
    pub yt: SparseMatrix<C64>,
    pub branches: Vec<BranchAdmittance>,
    /// Bus shunt admittance `gs + j bs`, p.u.
    pub shunts: Vec<C64>,
}

pub fn build_admittance(case: &Case) -> Result<AdmittanceModel> {
    let nb = case.n_bus();
    let nl = case.n_branch();
    let mut ybus = SparseMatrix::new(nb, nb);
    let mut yf = SparseMatrix::new(nl, nb);
    let mut yt = SparseMatrix::new(nl, nb);
    let mut branches = Vec::with_capacity(nl);

    for (l, br) in case.branches().iter().enumerate() {
        let z = C64::new(br.r, br.x);
        if z.norm_sqr() == 0.0 {
            return Err(Error::DegenerateBranch { index: l });
        }
        let ys = C64::new(1.0, 0.0) / z;
        let tap = polar(br.tap, br.shift);
        let ytt = ys + C64::new(0.0, br.b_chg / 2.0);
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        let (f, t) = case.branch_ends(l);

        ybus.push(f, f, yff);
        ybus.push(f, t, yft);
        ybus.push(t, f, ytf);
        ybus.push(t, t, ytt);
        yf.push(l, f, yff);
        yf.push(l, t, yft);
        yt.push(l, f, ytf);
        yt.push(l, t, ytt);
        branches.push(BranchAdmittance {
            from: f,
            to: t,
            yff,
            yft,
            ytf,
            ytt,
        });
    }

    let shunts: Vec<C64> = case.buses().iter().map(|b| C64::new(b.gs, b.bs)).collect();
    for (i, &y) in shunts.iter().enumerate() {
        if y != C64::new(0.0, 0.0) {
            ybus.push(i, i, y);
        }
    }

    Ok(AdmittanceModel {
        n_bus: nb,
        ybus,
        yf,
        yt,
        branches,
        shunts,
    })
}

/// Net real and reactive injection into the network at every bus,
/// `S = V ∘ conj(Ybus V)`.
pub fn injections(model: &AdmittanceModel, v: &VoltageState) -> (Vec<f64>, Vec<f64>) {
    let vc = v.phasors();
    let i = model.ybus.mul_vec(&vc);
    vc.iter()
        .zip(&i)
        .map(|(vk, ik)| {
            let s = vk * ik.conj();
            (s.re, s.im)
        })
        .unzip()
}

/// Apparent power magnitude at the from and to end of every branch.
pub fn branch_flows(model: &AdmittanceModel, v: &VoltageState) -> (Vec<f64>, Vec<f64>) {
    let vc = v.phasors();
    let i_f = model.yf.mul_vec(&vc);
    let i_t = model.yt.mul_vec(&vc);
    model
        .branches
        .iter()
        .enumerate()
        .map(|(l, br)| {
            let sf = vc[br.from] * i_f[l].conj();
            let st = vc[br.to] * i_t[l].conj();
            (abs(sf), abs(st))
        })
        .unzip()
}

/// Value and gradient of the real and reactive power leaving one branch end.
#[derive(Debug, Clone, Copy)]
pub struct EndTerms {
    pub p: f64,
    pub q: f64,
    pub dp: [f64; 4],
    pub dq: [f64; 4],
    /// Global column of each local variable in `(θ, vm)` ordering.
    pub cols: [usize; 4],
    // kept for the second derivatives
    a: f64,
    b: f64,
    v1: f64,
    v2: f64,
    g0: f64,
    b0: f64,
}

impl EndTerms {
    /// Squared apparent power `P² + Q²`.
    pub fn s2(&self) -> f64 {
        self.p * self.p + self.q * self.q
    }

    pub fn ds2(&self) -> [f64; 4] {
        let mut g = [0.0; 4];
        for k in 0..4 {
            g[k] = 2.0 * (self.p * self.dp[k] + self.q * self.dq[k]);
        }
        g
    }

    /// Local Hessians of `P` and `Q`.
    pub fn hessians(&self) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let (a, b, v1, v2) = (self.a, self.b, self.v1, self.v2);
        let vv = v1 * v2;
        let hp = [
            [-vv * a, vv * a, -v2 * b, -v1 * b],
            [vv * a, -vv * a, v2 * b, v1 * b],
            [-v2 * b, v2 * b, 2.0 * self.g0, a],
            [-v1 * b, v1 * b, a, 0.0],
        ];
        let hq = [
            [-vv * b, vv * b, v2 * a, v1 * a],
            [vv * b, -vv * b, -v2 * a, -v1 * a],
            [v2 * a, -v2 * a, -2.0 * self.b0, b],
            [v1 * a, -v1 * a, b, 0.0],
        ];
        (hp, hq)
    }

    /// Local Hessian of `P² + Q²`.
    pub fn hessian_s2(&self) -> [[f64; 4]; 4] {
        let (hp, hq) = self.hessians();
        let mut h = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                h[i][j] = 2.0
                    * (self.dp[i] * self.dp[j]
                        + self.dq[i] * self.dq[j]
                        + self.p * hp[i][j]
                        + self.q * hq[i][j]);
            }
        }
        h
    }
}

impl AdmittanceModel {
    pub fn n_bus(&self) -> usize {
        self.n_bus
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    /// Power leaving `end` of branch `l` with first derivatives.
    pub fn end_terms(&self, l: usize, end: End, v: &VoltageState) -> EndTerms {
        let br = &self.branches[l];
        let (i1, i2, ys, ym) = match end {
            End::From => (br.from, br.to, br.yff, br.yft),
            End::To => (br.to, br.from, br.ytt, br.ytf),
        };
        let (v1, v2) = (v.vm[i1], v.vm[i2]);
        let delta = v.theta[i1] - v.theta[i2];
        let (s, c) = delta.sin_cos();
        let (g0, b0, g, b) = (ys.re, ys.im, ym.re, ym.im);
        let a = g * c + b * s;
        let bb = g * s - b * c;
        let vv = v1 * v2;
        let nb = self.n_bus;
        EndTerms {
            p: v1 * v1 * g0 + vv * a,
            q: -v1 * v1 * b0 + vv * bb,
            dp: [-vv * bb, vv * bb, 2.0 * v1 * g0 + v2 * a, v1 * a],
            dq: [vv * a, -vv * a, -2.0 * v1 * b0 + v2 * bb, v1 * bb],
            cols: [i1, i2, nb + i1, nb + i2],
            a,
            b: bb,
            v1,
            v2,
            g0,
            b0,
        }
    }

    /// Injections assembled branch by branch; equal to [`injections`].
    pub fn injections_by_branch(&self, v: &VoltageState) -> (Vec<f64>, Vec<f64>) {
        let mut p: Vec<f64> = self
            .shunts
            .iter()
            .zip(&v.vm)
            .map(|(y, &vm)| y.re * vm * vm)
            .collect();
        let mut q: Vec<f64> = self
            .shunts
            .iter()
            .zip(&v.vm)
            .map(|(y, &vm)| -y.im * vm * vm)
            .collect();
        for l in 0..self.branches.len() {
            for end in [End::From, End::To] {
                let t = self.end_terms(l, end, v);
                p[t.cols[0]] += t.p;
                q[t.cols[0]] += t.q;
            }
        }
        (p, q)
    }

    /// Squared apparent power at both ends of every branch.
    pub fn flows_squared(&self, v: &VoltageState) -> (Vec<f64>, Vec<f64>) {
        (0..self.branches.len())
            .map(|l| {
                (
                    self.end_terms(l, End::From, v).s2(),
                    self.end_terms(l, End::To, v).s2(),
                )
            })
            .unzip()
    }
}

/// First derivatives w.r.t. `(θ, vm)`, columns `[θ_0..θ_n, vm_0..vm_n]`.
#[derive(Debug, Clone)]
pub struct Jacobians {
    /// Rows `[P_0..P_n, Q_0..Q_n]`.
    pub injections: SparseMatrix<f64>,
    /// Rows: squared from-end flow per branch.
    pub flow_from: SparseMatrix<f64>,
    /// Rows: squared to-end flow per branch.
    pub flow_to: SparseMatrix<f64>,
}

/// Multipliers used to weight the second derivatives.
#[derive(Debug, Clone, Copy)]
pub struct HessianWeights<'a> {
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub flow_from: &'a [f64],
    pub flow_to: &'a [f64],
}

/// What [`derivatives`] should produce.
#[derive(Debug, Clone, Copy)]
pub enum DerivativeOrder<'a> {
    Jacobian,
    HessianVector(HessianWeights<'a>),
}

#[derive(Debug, Clone)]
pub enum Derivatives {
    Jacobian(Jacobians),
    /// `Σ w_k ∇²F_k` over injections and squared flows, `2n × 2n`.
    Hessian(SparseMatrix<f64>),
}

pub fn derivatives(model: &AdmittanceModel, v: &VoltageState, order: DerivativeOrder<'_>) -> Derivatives {
    match order {
        DerivativeOrder::Jacobian => Derivatives::Jacobian(jacobians(model, v)),
        DerivativeOrder::HessianVector(w) => Derivatives::Hessian(hessian_contraction(model, v, w)),
    }
}

pub fn jacobians(model: &AdmittanceModel, v: &VoltageState) -> Jacobians {
    let nb = model.n_bus;
    let nl = model.branches.len();
    let mut inj = SparseMatrix::new(2 * nb, 2 * nb);
    let mut ff = SparseMatrix::new(nl, 2 * nb);
    let mut ft = SparseMatrix::new(nl, 2 * nb);
    for (i, y) in model.shunts.iter().enumerate() {
        if y.re != 0.0 {
            inj.push(i, nb + i, 2.0 * y.re * v.vm[i]);
        }
        if y.im != 0.0 {
            inj.push(nb + i, nb + i, -2.0 * y.im * v.vm[i]);
        }
    }
    for l in 0..nl {
        for (end, rows) in [(End::From, &mut ff), (End::To, &mut ft)] {
            let t = model.end_terms(l, end, v);
            let bus = t.cols[0];
            let ds2 = t.ds2();
            for k in 0..4 {
                inj.push(bus, t.cols[k], t.dp[k]);
                inj.push(nb + bus, t.cols[k], t.dq[k]);
                rows.push(l, t.cols[k], ds2[k]);
            }
        }
    }
    Jacobians {
        injections: inj,
        flow_from: ff,
        flow_to: ft,
    }
}

/// Lagrangian-weighted second derivatives of injections and squared flows.
pub fn hessian_contraction(model: &AdmittanceModel, v: &VoltageState, w: HessianWeights<'_>) -> SparseMatrix<f64> {
    let nb = model.n_bus;
    let mut h = SparseMatrix::new(2 * nb, 2 * nb);
    for (i, y) in model.shunts.iter().enumerate() {
        let d = 2.0 * (y.re * w.p[i] - y.im * w.q[i]);
        if d != 0.0 {
            h.push(nb + i, nb + i, d);
        }
    }
    for l in 0..model.branches.len() {
        for (end, mu) in [(End::From, w.flow_from[l]), (End::To, w.flow_to[l])] {
            let t = model.end_terms(l, end, v);
            let bus = t.cols[0];
            let (lp, lq) = (w.p[bus], w.q[bus]);
            let (hp, hq) = t.hessians();
            let hs = if mu != 0.0 { Some(t.hessian_s2()) } else { None };
            for i in 0..4 {
                for j in 0..4 {
                    let mut val = lp * hp[i][j] + lq * hq[i][j];
                    if let Some(hs) = &hs {
                        val += mu * hs[i][j];
                    }
                    if val != 0.0 {
                        h.push(t.cols[i], t.cols[j], val);
                    }
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;

    fn state(theta: &[f64], vm: &[f64]) -> VoltageState {
        VoltageState {
            theta: theta.to_vec(),
            vm: vm.to_vec(),
        }
    }

    #[test]
    fn two_bus_ybus() {
        let m = build_admittance(&two_bus()).unwrap();
        let y = m.ybus.to_dense();
        let expect = [[-10.0, 10.0], [10.0, -10.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y[(i, j)].re).abs() < 1e-14);
                assert!((y[(i, j)].im - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_bus_injections_closed_form() {
        let m = build_admittance(&two_bus()).unwrap();
        let v = state(&[0.0, -0.1], &[1.0, 1.0]);
        let (p, q) = injections(&m, &v);
        assert!((p[0] - 10.0 * 0.1f64.sin()).abs() < 1e-12);
        assert!((p[0] - 0.998_334_166_468_281_5).abs() < 1e-12);
        assert!((q[0] - 10.0 * (1.0 - 0.1f64.cos())).abs() < 1e-12);
        // lossless: what leaves bus 1 arrives at bus 2
        assert!((p[0] + p[1]).abs() < 1e-12);
        let (pb, qb) = m.injections_by_branch(&v);
        assert!((pb[0] - p[0]).abs() < 1e-12 && (qb[1] - q[1]).abs() < 1e-12);
    }

    #[test]
    fn two_bus_flow_magnitude() {
        let m = build_admittance(&two_bus()).unwrap();
        let (ff, ft) = branch_flows(&m, &state(&[0.0, -0.1], &[1.0, 1.0]));
        let p: f64 = 10.0 * 0.1f64.sin();
        let q: f64 = 10.0 * (1.0 - 0.1f64.cos());
        assert!((ff[0] - (p * p + q * q).sqrt()).abs() < 1e-12);
        assert!((ff[0] - 0.99958).abs() < 1e-5);
        // same |S| at the receiving end of a symmetric lossless line
        assert!((ft[0] - ff[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_flow_at_flat_start() {
        let m = build_admittance(&two_bus()).unwrap();
        let v = VoltageState::flat(2);
        let (p, q) = injections(&m, &v);
        assert!(p.iter().chain(&q).all(|x| x.abs() < 1e-14));
        let (ff, ft) = branch_flows(&m, &v);
        assert!(ff[0].abs() < 1e-14 && ft[0].abs() < 1e-14);
    }

    #[test]
    fn flat_start_jacobian_is_one_over_x() {
        let m = build_admittance(&two_bus()).unwrap();
        let j = jacobians(&m, &VoltageState::flat(2)).injections.to_dense();
        assert!((j[(0, 0)] - 10.0).abs() < 1e-12);
        assert!((j[(0, 1)] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_hessian() {
        let m = build_admittance(&two_bus()).unwrap();
        let z = [0.0; 2];
        let h = hessian_contraction(
            &m,
            &state(&[0.0, -0.2], &[1.02, 0.97]),
            HessianWeights {
                p: &z,
                q: &z,
                flow_from: &z[..1],
                flow_to: &z[..1],
            },
        );
        assert!(h.to_dense().iter().all(|&x| x == 0.0));
    }
}
