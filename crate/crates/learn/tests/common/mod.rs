//! Test oracles shared with the acceptance suite. Nothing here calls into
//! the admission or training code it checks.

#![allow(dead_code)]

use mec_core::{ClientAction, Observation, OBS_DIM};
use mec_learn::agents::{
    admit_by_q, joint_input, scale_action, select_actions, slot, train_on_batch, Action, AdmissionLimits, ClientAgent,
    MasterAgent, SLOT,
};
use mec_learn::approximator::{Activation, Mlp, MlpSpec};
use mec_learn::{LearnerConfig, NoiseKind, Transition};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn proposes(a: &Action) -> bool {
    ClientAction::from_slice(a).proposes()
}

/// Every feasible subset of `proposals`, ranked by accepted count, then by
/// the sum of `qs`. Only meaningful when storage does not bind.
pub fn brute_force_admission(
    proposals: &[usize],
    qs: &[f64],
    sizes: &[f64],
    limits: &AdmissionLimits,
    devices: usize,
) -> Vec<bool> {
    assert!(proposals.len() <= 16);
    let mut best: Option<(usize, f64, u32)> = None;
    for bits in 0u32..(1 << proposals.len()) {
        let chosen: Vec<usize> = (0..proposals.len()).filter(|i| bits >> i & 1 == 1).collect();
        let load: f64 = chosen.iter().map(|&i| sizes[proposals[i]]).sum();
        if chosen.len() > limits.subchannels || load > limits.storage_bits {
            continue;
        }
        let score: f64 = chosen.iter().map(|&i| qs[i]).sum();
        let better = match best {
            None => true,
            Some((c, s, _)) => chosen.len() > c || (chosen.len() == c && score > s),
        };
        if better {
            best = Some((chosen.len(), score, bits));
        }
    }
    let bits = best.map_or(0, |b| b.2);
    let mut mask = vec![false; devices];
    for (i, &p) in proposals.iter().enumerate() {
        if bits >> i & 1 == 1 {
            mask[p] = true;
        }
    }
    mask
}

/// Highest Q first (lower device id on ties); take each proposal that still
/// fits until K are taken.
pub fn walk_admission(
    proposals: &[usize],
    qs: &[f64],
    sizes: &[f64],
    limits: &AdmissionLimits,
    devices: usize,
) -> Vec<bool> {
    let mut pairs: Vec<(f64, usize)> = qs.iter().copied().zip(proposals.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut mask = vec![false; devices];
    let (mut taken, mut load) = (0, 0.0);
    for (_, p) in pairs {
        if taken < limits.subchannels && load + sizes[p] <= limits.storage_bits {
            mask[p] = true;
            taken += 1;
            load += sizes[p];
        }
    }
    mask
}

/// Subset of proposals, at most K, within storage, and no rejected proposal
/// could have been added.
pub fn check_mask(mask: &[bool], proposals: &[usize], sizes: &[f64], limits: &AdmissionLimits) -> Result<(), String> {
    let accepted: Vec<usize> = (0..mask.len()).filter(|&n| mask[n]).collect();
    if accepted.iter().any(|n| !proposals.contains(n)) {
        return Err(format!("accepted {accepted:?} outside proposals {proposals:?}"));
    }
    if accepted.len() > limits.subchannels {
        return Err(format!("{} accepted with K = {}", accepted.len(), limits.subchannels));
    }
    let load: f64 = accepted.iter().map(|&n| sizes[n]).sum();
    if load > limits.storage_bits {
        return Err(format!("load {load} over storage {}", limits.storage_bits));
    }
    for &p in proposals {
        if !mask[p] && accepted.len() < limits.subchannels && load + sizes[p] <= limits.storage_bits {
            return Err(format!("proposal {p} rejected although it fits"));
        }
    }
    Ok(())
}

pub struct Instance {
    pub devices: usize,
    pub proposals: Vec<usize>,
    pub qs: Vec<f64>,
    pub sizes: Vec<f64>,
    pub limits: AdmissionLimits,
}

impl Instance {
    pub fn storage_binds(&self) -> bool {
        self.proposals.iter().map(|&p| self.sizes[p]).sum::<f64>() > self.limits.storage_bits
    }
}

/// Up to 8 devices, K up to 4, half the instances with binding storage.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let devices = rng.random_range(1..=8);
    let proposals: Vec<usize> = (0..devices).filter(|_| rng.random_bool(0.7)).collect();
    let qs = proposals.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
    let sizes: Vec<f64> = (0..devices).map(|_| rng.random_range(3.0e8..1.2e9)).collect();
    let total: f64 = proposals.iter().map(|&p| sizes[p]).sum();
    let storage_bits = if rng.random_bool(0.5) {
        total + 1.0
    } else {
        rng.random_range(0.3..1.0) * total.max(sizes[0])
    };
    Instance {
        devices,
        proposals,
        qs,
        sizes,
        limits: AdmissionLimits {
            subchannels: rng.random_range(1..=devices.min(4)),
            storage_bits,
        },
    }
}

/// One random admission problem against the oracles and the exp transform.
pub fn admission_trial(rng: &mut impl Rng) -> Result<(), String> {
    let inst = random_instance(rng);
    let got = admit_by_q(&inst.proposals, &inst.qs, &inst.sizes, &inst.limits, inst.devices).accept;
    check_mask(&got, &inst.proposals, &inst.sizes, &inst.limits)?;
    let expected = if inst.storage_binds() {
        walk_admission(&inst.proposals, &inst.qs, &inst.sizes, &inst.limits, inst.devices)
    } else {
        brute_force_admission(&inst.proposals, &inst.qs, &inst.sizes, &inst.limits, inst.devices)
    };
    if got != expected {
        return Err(format!("mask {got:?}, oracle {expected:?}"));
    }
    let exp_qs: Vec<f64> = inst.qs.iter().map(|q| q.exp()).collect();
    let transformed = admit_by_q(&inst.proposals, &exp_qs, &inst.sizes, &inst.limits, inst.devices).accept;
    if transformed != got {
        return Err("exp-transformed Q changed the mask".into());
    }
    Ok(())
}

pub fn small_learner_config() -> LearnerConfig {
    LearnerConfig {
        client_hidden: vec![8],
        master_hidden: vec![16],
        client_final_layer_scale: 1.0,
        batch_size: 4,
        replay_capacity: 32,
        ..LearnerConfig::default()
    }
}

/// Random agents and observations through `select_actions`: evaluation and
/// ε = 0 agree and match the recomputed oracle, and exploring masks obey the
/// invariants.
pub fn selection_trial(seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let cfg = small_learner_config();
    let devices = rng.random_range(1..=6);
    let clients: Vec<ClientAgent> = (0..devices)
        .map(|_| ClientAgent::new(&cfg, &mut rng).unwrap())
        .collect();
    let master = MasterAgent::new(&cfg, devices, &mut rng).unwrap();
    let obs: Vec<Observation> = (0..devices)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();
    let inst = random_instance(&mut rng);
    let sizes: Vec<f64> = (0..devices).map(|n| inst.sizes[n % inst.devices]).collect();
    let limits = AdmissionLimits {
        subchannels: rng.random_range(1..=devices),
        storage_bits: rng.random_range(0.3e9..3.0e9),
    };
    let mut e1 = StdRng::seed_from_u64(seed ^ 1);
    let mut a1 = StdRng::seed_from_u64(seed ^ 2);
    let eval = select_actions(
        &clients,
        &master,
        &obs,
        &sizes,
        &limits,
        0.7,
        true,
        NoiseKind::Gaussian,
        &mut e1,
        &mut a1,
    )
    .map_err(|e| e.to_string())?;
    let zero = select_actions(
        &clients,
        &master,
        &obs,
        &sizes,
        &limits,
        0.0,
        false,
        NoiseKind::Gaussian,
        &mut e1,
        &mut a1,
    )
    .map_err(|e| e.to_string())?;
    if eval.actions != zero.actions || eval.mask != zero.mask || zero.explored {
        return Err("epsilon = 0 differs from evaluation".into());
    }

    let actions: Vec<Action> = clients
        .iter()
        .zip(&obs)
        .map(|(c, o)| scale_action(c.raw(o).unwrap()))
        .collect();
    if actions != eval.actions {
        return Err("evaluation actions are not the noise-free policy outputs".into());
    }
    let proposals: Vec<usize> = (0..devices).filter(|&n| proposes(&actions[n])).collect();
    let joint = joint_input(&obs, &actions);
    let qs: Vec<f64> = proposals
        .iter()
        .map(|&n| master.q(&joint, &slot(&obs[n], &actions[n]), false).unwrap())
        .collect();
    let oracle = walk_admission(&proposals, &qs, &sizes, &limits, devices);
    if eval.mask.accept != oracle {
        return Err(format!("evaluation mask {:?}, oracle {oracle:?}", eval.mask.accept));
    }

    let eps = rng.random::<f64>();
    let explore = select_actions(
        &clients,
        &master,
        &obs,
        &sizes,
        &limits,
        eps,
        false,
        NoiseKind::Gaussian,
        &mut e1,
        &mut a1,
    )
    .map_err(|e| e.to_string())?;
    let explored_props: Vec<usize> = (0..devices).filter(|&n| proposes(&explore.actions[n])).collect();
    check_mask(&explore.mask.accept, &explored_props, &sizes, &limits)
}

/// Plain dense forward over the flat layout `[W (out × in, row-major), b]`
/// per layer.
pub fn dense_forward(widths: &[usize], params: &[f64], hidden: Activation, output: Activation, x: &[f64]) -> Vec<f64> {
    let act = |a: Activation, v: f64| match a {
        Activation::Identity => v,
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
    };
    let mut h = x.to_vec();
    let mut off = 0;
    for l in 0..widths.len() - 1 {
        let (n_in, n_out) = (widths[l], widths[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let a = if l + 2 == widths.len() { output } else { hidden };
        h = (0..n_out)
            .map(|o| act(a, b[o] + (0..n_in).map(|i| w[o * n_in + i] * h[i]).sum::<f64>()))
            .collect();
    }
    h
}

// A tiny two-device problem with hand-set networks.

pub const TRACE_CLIENT: [usize; 3] = [OBS_DIM, 2, 3];
pub const TRACE_MASTER: [usize; 3] = [3 * SLOT, 3, 1];

fn trace_client_params(n: usize) -> Vec<f64> {
    let count = 7 * 2 + 2 + 2 * 3 + 3;
    let mut p: Vec<f64> = (0..count)
        .map(|i| 0.3 * ((i * 7 + n * 3) as f64 * 0.91).sin())
        .collect();
    // Output biases: device 0 always proposes, device 1 never does.
    p[count - 3] = if n == 0 { 0.8 } else { -0.8 };
    p
}

fn trace_master_params() -> Vec<f64> {
    let count = 30 * 3 + 3 + 3 + 1;
    let mut p: Vec<f64> = (0..count).map(|i| 0.2 * ((i * 5) as f64 * 0.37).cos()).collect();
    // Keep every hidden unit active.
    p[90..93].copy_from_slice(&[1.0, 1.0, 1.0]);
    p
}

pub fn trace_config() -> LearnerConfig {
    LearnerConfig {
        gamma: 0.9,
        reward_scale: 0.5,
        client_lr: 1e-3,
        master_lr: 1e-2,
        client_hidden: vec![2],
        master_hidden: vec![3],
        ..LearnerConfig::default()
    }
}

pub fn trace_agents(cfg: &LearnerConfig) -> (Vec<ClientAgent>, MasterAgent) {
    let client = |n| {
        let spec = MlpSpec::new(TRACE_CLIENT.to_vec(), Activation::Relu, Activation::Tanh);
        ClientAgent::from_policy(Mlp::from_params(spec, trace_client_params(n)).unwrap(), cfg.client_lr).unwrap()
    };
    let spec = MlpSpec::new(TRACE_MASTER.to_vec(), Activation::Relu, Activation::Identity);
    let master =
        MasterAgent::from_network(Mlp::from_params(spec, trace_master_params()).unwrap(), 2, cfg.master_lr).unwrap();
    (vec![client(0), client(1)], master)
}

fn obs(seed: f64) -> Observation {
    std::array::from_fn(|i| 0.5 + 0.4 * (seed + i as f64).sin())
}

/// Entry 0: device 0 accepted, not terminal. Entry 1: nothing accepted,
/// terminal. Entry 2: both devices accepted.
pub fn trace_batch() -> Vec<Transition> {
    vec![
        Transition {
            states: vec![obs(0.1), obs(1.3)],
            actions: vec![[0.9, 0.2, 0.7], [0.1, 0.6, 0.4]],
            accepted: vec![true, false],
            reward: -3.0,
            next_states: vec![obs(2.2), obs(3.4)],
            done: false,
        },
        Transition {
            states: vec![obs(4.5), obs(5.1)],
            actions: vec![[0.2, 0.3, 0.9], [0.4, 0.8, 0.1]],
            accepted: vec![false, false],
            reward: -1.5,
            next_states: vec![obs(6.0), obs(7.7)],
            done: true,
        },
        Transition {
            states: vec![obs(8.8), obs(9.2)],
            actions: vec![[0.7, 0.5, 0.5], [0.95, 0.1, 0.3]],
            accepted: vec![true, true],
            reward: -2.25,
            next_states: vec![obs(10.4), obs(11.9)],
            done: false,
        },
    ]
}

pub const TRACE_WEIGHTS: [f64; 3] = [1.0, 0.5, 0.8];

fn master_q(params: &[f64], joint: &[f64], cand: &[f64; SLOT]) -> f64 {
    let mut x = joint.to_vec();
    x.extend_from_slice(cand);
    dense_forward(&TRACE_MASTER, params, Activation::Relu, Activation::Identity, &x)[0]
}

fn client_action(params: &[f64], o: &Observation) -> Action {
    let r = dense_forward(&TRACE_CLIENT, params, Activation::Relu, Activation::Tanh, o);
    [0.5 * r[0] + 0.5, 0.5 * r[1] + 0.5, 0.5 * r[2] + 0.5]
}

/// Targets, TD errors, loss and the feedback objective recomputed from the
/// raw parameter vectors.
pub struct TraceOracle {
    pub clients: Vec<Vec<f64>>,
    pub master: Vec<f64>,
    pub gamma: f64,
    pub scale: f64,
}

impl TraceOracle {
    pub fn targets(&self, batch: &[Transition]) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return self.scale * t.reward;
                }
                let acts: Vec<Action> = self
                    .clients
                    .iter()
                    .zip(&t.next_states)
                    .map(|(p, s)| client_action(p, s))
                    .collect();
                let joint = joint_input(&t.next_states, &acts);
                let mut best: Option<(f64, [f64; SLOT])> = None;
                for (s, a) in t.next_states.iter().zip(&acts) {
                    if proposes(a) {
                        let c = slot(s, a);
                        let q = master_q(&self.master, &joint, &c);
                        if best.is_none_or(|(b, _)| q > b) {
                            best = Some((q, c));
                        }
                    }
                }
                let cand = best.map_or([0.0; SLOT], |b| b.1);
                self.scale * t.reward + self.gamma * master_q(&self.master, &joint, &cand)
            })
            .collect()
    }

    /// `(y − Q)` of every trained pair, grouped by entry.
    pub fn deltas(&self, master: &[f64], batch: &[Transition], targets: &[f64]) -> Vec<Vec<f64>> {
        batch
            .iter()
            .zip(targets)
            .map(|(t, y)| {
                let joint = joint_input(&t.states, &t.actions);
                let mut cands: Vec<[f64; SLOT]> = (0..t.devices())
                    .filter(|&n| t.accepted[n])
                    .map(|n| slot(&t.states[n], &t.actions[n]))
                    .collect();
                if cands.is_empty() {
                    cands.push([0.0; SLOT]);
                }
                cands.iter().map(|c| y - master_q(master, &joint, c)).collect()
            })
            .collect()
    }

    pub fn loss(&self, master: &[f64], batch: &[Transition], targets: &[f64], weights: &[f64]) -> f64 {
        let deltas = self.deltas(master, batch, targets);
        let pairs: usize = deltas.iter().map(Vec::len).sum();
        deltas
            .iter()
            .zip(weights)
            .map(|(d, w)| d.iter().map(|x| w * x * x).sum::<f64>())
            .sum::<f64>()
            / pairs as f64
    }

    /// Mean over entries of the best fresh-proposal Q (placeholder Q when
    /// nobody proposes).
    pub fn objective(&self, clients: &[Vec<f64>], master: &[f64], batch: &[Transition]) -> f64 {
        batch
            .iter()
            .map(|t| {
                let acts: Vec<Action> = clients
                    .iter()
                    .zip(&t.states)
                    .map(|(p, s)| client_action(p, s))
                    .collect();
                let joint = joint_input(&t.states, &acts);
                let qs: Vec<f64> = (0..acts.len())
                    .filter(|&n| proposes(&acts[n]))
                    .map(|n| master_q(master, &joint, &slot(&t.states[n], &acts[n])))
                    .collect();
                if qs.is_empty() {
                    master_q(master, &joint, &[0.0; SLOT])
                } else {
                    qs.into_iter().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .sum::<f64>()
            / batch.len() as f64
    }
}

fn fd<F: Fn(&[f64]) -> f64>(f: F, p: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + h;
            let plus = f(&q);
            q[i] = p[i] - h;
            let minus = f(&q);
            q[i] = p[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// A first Adam step moves each parameter by about `lr` against its
/// gradient; a zero gradient leaves it in place.
fn check_step(what: &str, before: &[f64], after: &[f64], descent: &[f64], lr: f64) -> Result<usize, String> {
    let mut moved = 0;
    for i in 0..before.len() {
        let d = after[i] - before[i];
        let g = descent[i];
        if g.abs() > 1e-5 {
            if d * g >= 0.0 || (d.abs() - lr).abs() > 0.01 * lr {
                return Err(format!("{what} param {i}: step {d}, gradient {g}"));
            }
            moved += 1;
        } else if g.abs() < 1e-10 && d.abs() > 0.1 * lr {
            return Err(format!("{what} param {i}: moved {d} with zero gradient"));
        }
    }
    Ok(moved)
}

/// One training call on the hand-set problem, checked against the oracle:
/// targets, TD error, the master step direction, each client's step
/// direction and the target syncs.
///
/// `entries` picks rows of [`trace_batch`]; each keeps its weight.
pub fn training_trace(entries: &[usize]) -> Result<(), String> {
    let cfg = trace_config();
    let (mut clients, mut master) = trace_agents(&cfg);
    let full = trace_batch();
    let batch: Vec<Transition> = entries.iter().map(|&i| full[i].clone()).collect();
    let weights: Vec<f64> = entries.iter().map(|&i| TRACE_WEIGHTS[i]).collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let oracle = TraceOracle {
        clients: clients.iter().map(|c| c.policy.params().to_vec()).collect(),
        master: master.online.params().to_vec(),
        gamma: cfg.gamma,
        scale: cfg.reward_scale,
    };
    let y = oracle.targets(&batch);
    for (i, t) in batch.iter().enumerate() {
        if t.done && y[i] != cfg.reward_scale * t.reward {
            return Err("terminal target is not the scaled reward".into());
        }
    }
    let deltas = oracle.deltas(&oracle.master, &batch, &y);
    let master_before = oracle.master.clone();
    let master_grad = fd(|p| oracle.loss(p, &batch, &y, &weights), &master_before);

    let report = train_on_batch(&mut clients, &mut master, &refs, &weights, &cfg).map_err(|e| e.to_string())?;
    for (a, b) in report.targets.iter().zip(&y) {
        if (a - b).abs() > 1e-12 {
            return Err(format!("target {a}, oracle {b}"));
        }
    }
    let all: Vec<f64> = deltas.iter().flatten().copied().collect();
    let mse = all.iter().map(|d| d * d).sum::<f64>() / all.len() as f64;
    if (report.td_error - mse).abs() > 1e-12 * mse.max(1.0) {
        return Err(format!("td error {}, oracle {mse}", report.td_error));
    }
    for (p, d) in report.priorities.iter().zip(&deltas) {
        let mean_abs = d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64;
        if (p - mean_abs).abs() > 1e-12 {
            return Err(format!("priority {p}, oracle {mean_abs}"));
        }
    }
    let master_after = master.online.params().to_vec();
    let moved = check_step("master", &master_before, &master_after, &master_grad, cfg.master_lr)?;
    if moved == 0 {
        return Err("master did not move".into());
    }

    // Clients ascend their objective in device order, each seeing the
    // updated master and the already-updated earlier clients.
    let mut params: Vec<Vec<f64>> = oracle.clients.clone();
    for n in 0..clients.len() {
        let before = params[n].clone();
        let grad = fd(
            |p| {
                let mut ps = params.clone();
                ps[n] = p.to_vec();
                -oracle.objective(&ps, &master_after, &batch)
            },
            &before,
        );
        let after = clients[n].policy.params().to_vec();
        let moved = check_step(&format!("client {n}"), &before, &after, &grad, cfg.client_lr)?;
        if moved == 0 {
            return Err(format!("client {n} did not move"));
        }
        params[n] = after;
    }

    if master.target.params() != master.online.params()
        || clients.iter().any(|c| c.target.params() != c.policy.params())
    {
        return Err("targets not synced after the call".into());
    }
    Ok(())
}
