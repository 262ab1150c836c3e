//! Client-master learner. Each device runs an actor; a master value network
//! scores every proposing client from the joint state-action plus that
//! client's own slot, then admits the best-scored proposals under the
//! sub-channel and storage limits.

use std::path::Path;

use mec_core::rng::SimRng;
use mec_core::{ClientAction, MasterDecision, MecEnv, Observation, RejectFate, ACTION_DIM, OBS_DIM};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approximator::{checkpoint, Adam, Mlp, MlpSpec, ReplayMemory, Trace, Transition};
use crate::config::{ClientFeedbackPath, LearnerConfig, NoiseKind};
use crate::error::LearnError;
use crate::learner::{Algorithm, Decision, Learner, LearnerRngs, TrainReport};

/// Width of one client's block in a master input: state then action.
pub const SLOT: usize = OBS_DIM + ACTION_DIM;

/// Candidate slot meaning "no task offloaded".
pub const PLACEHOLDER: [f64; SLOT] = [0.0; SLOT];

pub type Action = [f64; ACTION_DIM];

/// Maps a tanh output in [-1, 1] to the [0, 1] action range.
pub fn scale_action(raw: Action) -> Action {
    raw.map(|a| a / 2.0 + 0.5)
}

pub fn slot(state: &Observation, action: &Action) -> [f64; SLOT] {
    let mut s = [0.0; SLOT];
    s[..OBS_DIM].copy_from_slice(state);
    s[OBS_DIM..].copy_from_slice(action);
    s
}

/// Per-client blocks `[S_n, A_n]` for every device, in device order.
pub fn joint_input(states: &[Observation], actions: &[Action]) -> Vec<f64> {
    debug_assert_eq!(states.len(), actions.len());
    let mut v = Vec::with_capacity(SLOT * (states.len() + 1));
    for (s, a) in states.iter().zip(actions) {
        v.extend_from_slice(s);
        v.extend_from_slice(a);
    }
    v
}

/// Joint blocks followed by a candidate slot.
pub fn master_input(joint: &[f64], candidate: &[f64; SLOT]) -> Vec<f64> {
    let mut v = Vec::with_capacity(joint.len() + SLOT);
    v.extend_from_slice(joint);
    v.extend_from_slice(candidate);
    v
}

fn set_candidate(input: &mut [f64], candidate: &[f64; SLOT]) {
    let n = input.len();
    input[n - SLOT..].copy_from_slice(candidate);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAgent {
    pub policy: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
}

impl ClientAgent {
    pub fn spec(cfg: &LearnerConfig) -> MlpSpec {
        let mut widths = vec![OBS_DIM];
        widths.extend(&cfg.client_hidden);
        widths.push(ACTION_DIM);
        MlpSpec::new(widths, cfg.hidden_activation, crate::approximator::Activation::Tanh)
            .with_final_layer_scale(cfg.client_final_layer_scale)
    }

    pub fn new(cfg: &LearnerConfig, rng: &mut impl Rng) -> Result<Self, LearnError> {
        Self::from_policy(Mlp::new(Self::spec(cfg), rng)?, cfg.client_lr)
    }

    /// Wraps a given policy; the target starts as a copy.
    pub fn from_policy(policy: Mlp, lr: f64) -> Result<Self, LearnError> {
        if policy.spec().input_dim() != OBS_DIM || policy.spec().output_dim() != ACTION_DIM {
            return Err(LearnError::Spec("client network must map 7 inputs to 3 outputs".into()));
        }
        let optimizer = Adam::new(lr, policy.params().len());
        Ok(Self {
            target: policy.clone(),
            policy,
            optimizer,
        })
    }

    /// Raw tanh output of the online policy.
    pub fn raw(&self, obs: &Observation) -> Result<Action, LearnError> {
        let out = self.policy.forward(obs)?;
        Ok([out[0], out[1], out[2]])
    }

    /// Scaled action of the target policy.
    pub fn target_action(&self, obs: &Observation) -> Result<Action, LearnError> {
        let out = self.target.forward(obs)?;
        Ok(scale_action([out[0], out[1], out[2]]))
    }

    pub fn sync(&mut self) {
        self.target.copy_from(&self.policy);
    }
}

/// One client decision: raw output, plus clipped exploration noise when
/// training, mapped to [0, 1].
pub fn client_act(
    agent: &ClientAgent,
    obs: &Observation,
    epsilon: f64,
    evaluation: bool,
    noise: NoiseKind,
    rng: &mut impl Rng,
) -> Result<Action, LearnError> {
    let mut a = agent.raw(obs)?;
    if !evaluation {
        for v in &mut a {
            let draw: f64 = match noise {
                NoiseKind::Gaussian => rng.sample(StandardNormal),
                NoiseKind::UniformSymmetric => rng.random_range(-1.0..1.0),
            };
            *v = (*v + draw * epsilon).clamp(-1.0, 1.0);
        }
    }
    Ok(scale_action(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    devices: usize,
}

impl MasterAgent {
    pub fn spec(cfg: &LearnerConfig, devices: usize) -> MlpSpec {
        let mut widths = vec![SLOT * (devices + 1)];
        widths.extend(&cfg.master_hidden);
        widths.push(1);
        MlpSpec::new(widths, cfg.hidden_activation, cfg.master_output)
    }

    pub fn new(cfg: &LearnerConfig, devices: usize, rng: &mut impl Rng) -> Result<Self, LearnError> {
        Self::from_network(Mlp::new(Self::spec(cfg, devices), rng)?, devices, cfg.master_lr)
    }

    pub fn from_network(online: Mlp, devices: usize, lr: f64) -> Result<Self, LearnError> {
        if online.spec().input_dim() != SLOT * (devices + 1) || online.spec().output_dim() != 1 {
            return Err(LearnError::Spec(format!(
                "master network for {devices} devices must map {} inputs to 1 output",
                SLOT * (devices + 1)
            )));
        }
        let optimizer = Adam::new(lr, online.params().len());
        Ok(Self {
            target: online.clone(),
            online,
            optimizer,
            devices,
        })
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    fn net(&self, target: bool) -> &Mlp {
        if target {
            &self.target
        } else {
            &self.online
        }
    }

    /// Q-value of `candidate` given the joint blocks of all devices.
    pub fn q(&self, joint: &[f64], candidate: &[f64; SLOT], target: bool) -> Result<f64, LearnError> {
        if joint.len() != SLOT * self.devices {
            return Err(LearnError::Dimension {
                what: "joint state-action",
                expected: SLOT * self.devices,
                got: joint.len(),
            });
        }
        Ok(self.net(target).forward(&master_input(joint, candidate))?[0])
    }

    pub fn sync(&mut self) {
        self.target.copy_from(&self.online);
    }
}

/// Sub-channel and storage limits for one admission decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionLimits {
    pub subchannels: usize,
    pub storage_bits: f64,
}

impl AdmissionLimits {
    pub fn of(env: &MecEnv) -> Self {
        let cfg = env.config();
        Self {
            subchannels: cfg.radio.subchannels,
            storage_bits: cfg.server.storage_bits,
        }
    }

    pub fn fits_all(&self, proposals: &[usize], sizes: &[f64]) -> bool {
        proposals.len() <= self.subchannels && proposals.iter().map(|&n| sizes[n]).sum::<f64>() <= self.storage_bits
    }
}

/// Walks `order` accepting each proposal while fewer than K are accepted
/// and its size still fits in the remaining storage. A proposal that does
/// not fit is skipped and the walk continues.
pub fn greedy_admission(order: &[usize], sizes: &[f64], limits: &AdmissionLimits, devices: usize) -> MasterDecision {
    let mut mask = MasterDecision::none(devices);
    let mut load = 0.0;
    let mut count = 0;
    for &n in order {
        if count == limits.subchannels {
            break;
        }
        if load + sizes[n] <= limits.storage_bits {
            mask.accept[n] = true;
            load += sizes[n];
            count += 1;
        }
    }
    mask
}

/// Proposals sorted by descending Q; equal values keep device order.
pub fn rank_by_q(proposals: &[usize], qs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..proposals.len()).collect();
    idx.sort_by(|&a, &b| qs[b].total_cmp(&qs[a]));
    idx.into_iter().map(|i| proposals[i]).collect()
}

/// Exploitation admission from precomputed per-proposal Q-values.
pub fn admit_by_q(
    proposals: &[usize],
    qs: &[f64],
    sizes: &[f64],
    limits: &AdmissionLimits,
    devices: usize,
) -> MasterDecision {
    if limits.fits_all(proposals, sizes) {
        return MasterDecision::from_indices(devices, proposals);
    }
    greedy_admission(&rank_by_q(proposals, qs), sizes, limits, devices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub actions: Vec<Action>,
    pub mask: MasterDecision,
    /// The master shuffled instead of ranking.
    pub explored: bool,
}

/// Joint client and master action selection for one step.
///
/// `exploration` feeds client noise and `admission` the master's coin and
/// shuffles, so one can change without shifting the other.
#[allow(clippy::too_many_arguments)]
pub fn select_actions(
    clients: &[ClientAgent],
    master: &MasterAgent,
    observations: &[Observation],
    sizes: &[f64],
    limits: &AdmissionLimits,
    epsilon: f64,
    evaluation: bool,
    noise: NoiseKind,
    exploration: &mut impl Rng,
    admission: &mut impl Rng,
) -> Result<Selection, LearnError> {
    let devices = clients.len();
    if observations.len() != devices || sizes.len() != devices {
        return Err(LearnError::Dimension {
            what: "observations",
            expected: devices,
            got: observations.len().min(sizes.len()),
        });
    }
    let actions = clients
        .iter()
        .zip(observations)
        .map(|(c, o)| client_act(c, o, epsilon, evaluation, noise, exploration))
        .collect::<Result<Vec<_>, _>>()?;
    let proposals: Vec<usize> = (0..devices)
        .filter(|&n| ClientAction::from_slice(&actions[n]).proposes())
        .collect();
    let explored = !evaluation && admission.random::<f64>() < epsilon;

    let mask = if proposals.is_empty() {
        MasterDecision::none(devices)
    } else if limits.fits_all(&proposals, sizes) {
        MasterDecision::from_indices(devices, &proposals)
    } else if explored {
        let mut order = proposals.clone();
        order.shuffle(admission);
        greedy_admission(&order, sizes, limits, devices)
    } else {
        let joint = joint_input(observations, &actions);
        let mut input = master_input(&joint, &PLACEHOLDER);
        let mut qs = Vec::with_capacity(proposals.len());
        for &n in &proposals {
            set_candidate(&mut input, &slot(&observations[n], &actions[n]));
            qs.push(master.online.forward(&input)?[0]);
        }
        greedy_admission(&rank_by_q(&proposals, &qs), sizes, limits, devices)
    };
    Ok(Selection {
        actions,
        mask,
        explored,
    })
}

/// Bootstrap targets `y_i = scale·r_i + γ·nextQ_i·(1 − done_i)`.
///
/// `nextQ_i` looks at the target-policy proposals in `S'_i`: the online
/// master picks the best proposer and the target master values it. With no
/// proposer the placeholder candidate is valued instead.
pub fn master_targets(
    clients: &[ClientAgent],
    master: &MasterAgent,
    batch: &[&Transition],
    gamma: f64,
    reward_scale: f64,
) -> Result<Vec<f64>, LearnError> {
    batch
        .iter()
        .map(|t| {
            let next_actions = clients
                .iter()
                .zip(&t.next_states)
                .map(|(c, s)| c.target_action(s))
                .collect::<Result<Vec<_>, _>>()?;
            let joint = joint_input(&t.next_states, &next_actions);
            let mut input = master_input(&joint, &PLACEHOLDER);
            let mut best: Option<(f64, [f64; SLOT])> = None;
            for (n, a) in next_actions.iter().enumerate() {
                if !ClientAction::from_slice(a).proposes() {
                    continue;
                }
                let cand = slot(&t.next_states[n], a);
                set_candidate(&mut input, &cand);
                let q = master.online.forward(&input)?[0];
                if best.is_none_or(|(b, _)| q > b) {
                    best = Some((q, cand));
                }
            }
            set_candidate(&mut input, &best.map_or(PLACEHOLDER, |(_, c)| c));
            let next_q = master.target.forward(&input)?[0];
            let bootstrap = if t.done { 0.0 } else { gamma * next_q };
            Ok(reward_scale * t.reward + bootstrap)
        })
        .collect()
}

/// Candidates a stored master mask trains on: the accepted clients' slots,
/// or the placeholder when nothing was accepted.
pub fn trained_candidates(t: &Transition) -> Vec<[f64; SLOT]> {
    let accepted: Vec<[f64; SLOT]> = (0..t.devices())
        .filter(|&n| t.accepted[n])
        .map(|n| slot(&t.states[n], &t.actions[n]))
        .collect();
    if accepted.is_empty() {
        vec![PLACEHOLDER]
    } else {
        accepted
    }
}

/// Gradient of the importance-weighted master loss
/// `Σ_j w_j (y_j − Q_j)² / L` over all `L` trained (entry, candidate) pairs.
/// Returns the gradient, the unweighted mean squared error, and the mean
/// `|y − Q|` of each entry.
pub fn master_loss_gradient(
    master: &MasterAgent,
    batch: &[&Transition],
    weights: &[f64],
    targets: &[f64],
) -> Result<(Vec<f64>, f64, Vec<f64>), LearnError> {
    let candidates: Vec<Vec<[f64; SLOT]>> = batch.iter().map(|t| trained_candidates(t)).collect();
    let pairs: usize = candidates.iter().map(Vec::len).sum();
    let mut grad = vec![0.0; master.online.params().len()];
    let mut sq = 0.0;
    let mut per_entry = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let joint = joint_input(&t.states, &t.actions);
        let mut input = master_input(&joint, &PLACEHOLDER);
        let mut abs = 0.0;
        for cand in &candidates[i] {
            set_candidate(&mut input, cand);
            let trace = master.online.forward_trace(&input)?;
            let diff = targets[i] - trace.output()[0];
            sq += diff * diff;
            abs += diff.abs();
            let upstream = [-2.0 * weights[i] * diff / pairs as f64];
            master.online.backward_into(&trace, &upstream, &mut grad)?;
        }
        per_entry.push(abs / candidates[i].len() as f64);
    }
    let td = sq / pairs as f64;
    if !td.is_finite() {
        return Err(LearnError::NonFinite("master loss"));
    }
    Ok((grad, td, per_entry))
}

/// The feedback a client gets from one minibatch entry under the current
/// policies: the best Q among fresh proposals (or the placeholder Q) and
/// its gradient with respect to client `n`'s raw output.
pub fn client_feedback(
    clients: &[ClientAgent],
    master: &MasterAgent,
    states: &[Observation],
    n: usize,
    path: ClientFeedbackPath,
) -> Result<(f64, Action, Trace), LearnError> {
    let devices = clients.len();
    let mut client_trace = None;
    let mut actions = Vec::with_capacity(devices);
    for (m, (c, s)) in clients.iter().zip(states).enumerate() {
        if m == n {
            let tr = c.policy.forward_trace(s)?;
            let o = tr.output();
            actions.push(scale_action([o[0], o[1], o[2]]));
            client_trace = Some(tr);
        } else {
            actions.push(scale_action(c.raw(s)?));
        }
    }
    let client_trace = client_trace.expect("client index within range");

    let joint = joint_input(states, &actions);
    let mut input = master_input(&joint, &PLACEHOLDER);
    let mut best: Option<(f64, usize, Trace)> = None;
    for (m, a) in actions.iter().enumerate() {
        if !ClientAction::from_slice(a).proposes() {
            continue;
        }
        set_candidate(&mut input, &slot(&states[m], a));
        let trace = master.online.forward_trace(&input)?;
        let q = trace.output()[0];
        if best.as_ref().is_none_or(|(b, _, _)| q > *b) {
            best = Some((q, m, trace));
        }
    }
    let (q, chosen, trace) = match best {
        Some(b) => (b.0, Some(b.1), b.2),
        None => {
            set_candidate(&mut input, &PLACEHOLDER);
            let trace = master.online.forward_trace(&input)?;
            (trace.output()[0], None, trace)
        }
    };
    let g = master.online.input_gradient(&trace, &[1.0])?;
    let mut d = [0.0; ACTION_DIM];
    for (k, dk) in d.iter_mut().enumerate() {
        if path == ClientFeedbackPath::JointAndCandidate {
            *dk += g[SLOT * n + OBS_DIM + k];
        }
        if chosen == Some(n) {
            *dk += g[SLOT * devices + OBS_DIM + k];
        }
        // Through the [0, 1] scaling.
        *dk *= 0.5;
    }
    Ok((q, d, client_trace))
}

/// One training call on a given minibatch: master regression, then each
/// client in turn ascends its feedback, then all targets are hard-synced.
pub fn train_on_batch(
    clients: &mut [ClientAgent],
    master: &mut MasterAgent,
    batch: &[&Transition],
    weights: &[f64],
    cfg: &LearnerConfig,
) -> Result<TrainReport, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyMemory);
    }
    for t in batch {
        t.check(clients.len())?;
    }
    let targets = master_targets(clients, master, batch, cfg.gamma, cfg.reward_scale)?;
    let (grad, td_error, priorities) = master_loss_gradient(master, batch, weights, &targets)?;
    let mut params = master.online.params().to_vec();
    master.optimizer.step(&mut params, &grad)?;
    master.online.params_mut().copy_from_slice(&params);
    master.sync();

    let mut objective = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for n in 0..clients.len() {
        let mut grad = vec![0.0; clients[n].policy.params().len()];
        let mut total = 0.0;
        for t in batch {
            let (q, d, trace) = client_feedback(clients, master, &t.states, n, cfg.feedback_path)?;
            total += q;
            // Descend −Q.
            let upstream = d.map(|v| -v * scale);
            clients[n].policy.backward_into(&trace, &upstream, &mut grad)?;
        }
        objective += total * scale;
        let client = &mut clients[n];
        let mut params = client.policy.params().to_vec();
        client.optimizer.step(&mut params, &grad)?;
        client.policy.params_mut().copy_from_slice(&params);
        client.sync();
    }
    Ok(TrainReport {
        td_error,
        priorities,
        targets,
        client_objective: objective / clients.len() as f64,
    })
}

/// Hard copy of every online network into its target.
pub fn sync_targets(clients: &mut [ClientAgent], master: &mut MasterAgent) {
    for c in clients {
        c.sync();
    }
    master.sync();
}

/// The full client-master learner with its replay memory and RNG streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcmMadrl {
    cfg: LearnerConfig,
    pub clients: Vec<ClientAgent>,
    pub master: MasterAgent,
    memory: ReplayMemory<Transition>,
    rngs: LearnerRngs,
}

impl CcmMadrl {
    pub fn new(cfg: &LearnerConfig, devices: usize, seed: u64) -> Result<Self, LearnError> {
        cfg.validate()?;
        let mut rngs = LearnerRngs::from_seed(seed);
        let clients = (0..devices)
            .map(|_| ClientAgent::new(cfg, &mut rngs.weights))
            .collect::<Result<Vec<_>, _>>()?;
        let master = MasterAgent::new(cfg, devices, &mut rngs.weights)?;
        Ok(Self {
            cfg: cfg.clone(),
            clients,
            master,
            memory: ReplayMemory::new(cfg.replay_capacity, cfg.per_params()),
            rngs,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &ReplayMemory<Transition> {
        &self.memory
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        checkpoint::load(path)
    }
}

impl Learner for CcmMadrl {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ccm
    }

    fn devices(&self) -> usize {
        self.clients.len()
    }

    fn reject_fate(&self) -> RejectFate {
        RejectFate::Local
    }

    fn act(
        &mut self,
        env: &MecEnv,
        observations: &[Observation],
        epsilon: f64,
        evaluation: bool,
    ) -> Result<Decision, LearnError> {
        let sizes = env.task_sizes();
        let sel = select_actions(
            &self.clients,
            &self.master,
            observations,
            &sizes,
            &AdmissionLimits::of(env),
            epsilon,
            evaluation,
            self.cfg.noise,
            &mut self.rngs.exploration,
            &mut self.rngs.admission,
        )?;
        Decision::new(env, sel.actions, sel.mask)
    }

    fn remember(&mut self, transition: Transition) -> Result<(), LearnError> {
        transition.check(self.clients.len())?;
        self.memory.push(transition);
        Ok(())
    }

    fn memory_len(&self) -> usize {
        self.memory.len()
    }

    fn train(&mut self, progress: f64) -> Result<Option<TrainReport>, LearnError> {
        if self.memory.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let beta = self.memory.params().beta(progress);
        let sampled = self.memory.sample(self.cfg.batch_size, beta, &mut self.rngs.replay)?;
        let batch: Vec<&Transition> = sampled
            .indices
            .iter()
            .map(|&i| self.memory.get(i).expect("sampled index is stored"))
            .collect();
        let report = train_on_batch(&mut self.clients, &mut self.master, &batch, &sampled.weights, &self.cfg)?;
        self.memory.update_priorities(&sampled.indices, &report.priorities);
        Ok(Some(report))
    }

    fn save(&self, path: &Path) -> Result<(), LearnError> {
        checkpoint::save(path, self)
    }
}

/// Reused by the baselines: scaled client actions for every device.
pub(crate) fn act_all(
    clients: &[ClientAgent],
    observations: &[Observation],
    epsilon: f64,
    evaluation: bool,
    noise: NoiseKind,
    rng: &mut SimRng,
) -> Result<Vec<Action>, LearnError> {
    clients
        .iter()
        .zip(observations)
        .map(|(c, o)| client_act(c, o, epsilon, evaluation, noise, rng))
        .collect()
}
