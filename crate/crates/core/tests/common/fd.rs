//! Finite-difference checks of the network Jacobians and of backprop.

use opfscreen_core::case::{Branch, Bus, Case, GenCost, Generator};
use opfscreen_core::learner::{backprop, forward_batch, loss, MlpParams, Task};
use opfscreen_core::network::{build_admittance, injections, jacobians, AdmittanceModel, VoltageState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let nb = 5;
    let buses = (0..nb)
        .map(|i| Bus {
            id: i + 1,
            pd: rng.random_range(0.0..1.0),
            qd: rng.random_range(0.0..0.3),
            gs: rng.random_range(-0.05..0.05),
            bs: rng.random_range(-0.2..0.2),
            vmin: 0.9,
            vmax: 1.1,
            is_ref: i == 0,
        })
        .collect();
    let pairs = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (1, 3), (2, 4)];
    let branches = pairs
        .iter()
        .map(|&(from, to)| Branch {
            from,
            to,
            r: rng.random_range(0.001..0.05),
            x: rng.random_range(0.02..0.3),
            b_chg: rng.random_range(0.0..0.2),
            tap: if rng.random_bool(0.4) { rng.random_range(0.9..1.1) } else { 1.0 },
            shift: if rng.random_bool(0.3) { rng.random_range(-0.2..0.2) } else { 0.0 },
            rate_a: 1.0,
            in_service: true,
        })
        .collect();
    let generators = vec![Generator {
        bus: 1,
        pmin: 0.0,
        pmax: 10.0,
        qmin: -5.0,
        qmax: 5.0,
        in_service: true,
    }];
    Case::new(100.0, buses, branches, generators, vec![GenCost { a: 0.0, b: 1.0, c: 0.0 }]).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, nb: usize) -> VoltageState {
    VoltageState {
        theta: (0..nb).map(|_| rng.random_range(-0.5..0.5)).collect(),
        vm: (0..nb).map(|_| rng.random_range(0.85..1.15)).collect(),
    }
}

fn perturbed(v: &VoltageState, col: usize, h: f64) -> VoltageState {
    let nb = v.theta.len();
    let mut w = v.clone();
    if col < nb {
        w.theta[col] += h;
    } else {
        w.vm[col - nb] += h;
    }
    w
}

/// `[P; Q; |S_f|²; |S_t|²]`.
fn stacked(model: &AdmittanceModel, v: &VoltageState) -> Vec<f64> {
    let (p, q) = injections(model, v);
    let (ff, ft) = model.flows_squared(v);
    p.into_iter().chain(q).chain(ff).chain(ft).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Network Jacobians against central differences on `evaluations` random
/// cases and states, relative tolerance `rel`.
pub fn check_network_jacobians(seed: u64, evaluations: usize, rel: f64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    for eval in 0..evaluations {
        let case = random_case(&mut rng);
        let model = build_admittance(&case).unwrap();
        let nb = case.n_bus();
        let v = random_state(&mut rng, nb);
        let j = jacobians(&model, &v);
        let (ji, jf, jt) = (j.injections.to_dense(), j.flow_from.to_dense(), j.flow_to.to_dense());
        let rows = 2 * nb + 2 * case.n_branch();
        for col in 0..2 * nb {
            let up = stacked(&model, &perturbed(&v, col, h));
            let dn = stacked(&model, &perturbed(&v, col, -h));
            for r in 0..rows {
                let fd = (up[r] - dn[r]) / (2.0 * h);
                let an = if r < 2 * nb {
                    ji[(r, col)]
                } else if r < 2 * nb + case.n_branch() {
                    jf[(r - 2 * nb, col)]
                } else {
                    jt[(r - 2 * nb - case.n_branch(), col)]
                };
                if !close(an, fd, rel) {
                    return Err(format!("evaluation {eval}, row {r}, column {col}: {an} vs {fd}"));
                }
            }
        }
    }
    Ok(())
}

fn perturb_param(p: &MlpParams, layer: usize, idx: usize, h: f64) -> MlpParams {
    let mut q = p.clone();
    let l = &mut q.layers[layer];
    let nw = l.weights.len();
    if idx < nw {
        l.weights[idx] += h;
    } else {
        l.bias[idx - nw] += h;
    }
    q
}

/// Backprop gradients of a 4-2-3 network against central differences,
/// relative tolerance `rel` with a floor of 1e-3 on the scale.
pub fn check_backprop(task: Task, seed: u64, evaluations: usize, rel: f64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    for eval in 0..evaluations {
        let params = MlpParams::init(task, 4, &[2], 3, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..3)
                    .map(|_| match task {
                        Task::Regression => rng.random_range(-1.0..1.0),
                        Task::Classification => f64::from(u8::from(rng.random_bool(0.5))),
                    })
                    .collect()
            })
            .collect();
        let grads = backprop(&params, task, &xs, &ys).unwrap();
        let f = |p: &MlpParams| loss(task, &forward_batch(p, &xs).unwrap(), &ys).unwrap();
        for (li, layer) in params.layers.iter().enumerate() {
            let nw = layer.weights.len();
            for idx in 0..nw + layer.bias.len() {
                let fd = (f(&perturb_param(&params, li, idx, h)) - f(&perturb_param(&params, li, idx, -h))) / (2.0 * h);
                let g = &grads.layers[li];
                let an = if idx < nw { g.weights[idx] } else { g.bias[idx - nw] };
                if (an - fd).abs() > rel * an.abs().max(fd.abs()).max(1e-3) {
                    return Err(format!("{task:?} evaluation {eval}, layer {li}, parameter {idx}: {an} vs {fd}"));
                }
            }
        }
    }
    Ok(())
}
