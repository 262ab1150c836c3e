//! Actor-critic baselines: independent actors, one critic over the joint
//! state-action, and a fixed rule that admits proposals.

use std::path::Path;

use mec_core::{ClientAction, MasterDecision, MecEnv, Observation, RejectFate, OBS_DIM};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{act_all, greedy_admission, joint_input, scale_action, Action, AdmissionLimits, ClientAgent, SLOT};
use crate::approximator::{checkpoint, Adam, Mlp, MlpSpec, ReplayMemory, Transition};
use crate::config::LearnerConfig;
use crate::error::LearnError;
use crate::learner::{Algorithm, Decision, Learner, LearnerRngs, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionRule {
    /// Ascending upload time; rejected tasks are dropped.
    FifoDrop,
    /// Ascending upload time; rejected tasks run locally.
    ShortestOffloadFirst,
    /// Ascending deadline over size; rejected tasks run locally.
    DeadlineOverSizeFirst,
    /// Uniformly shuffled; rejected tasks run locally.
    Random,
}

impl AdmissionRule {
    pub fn reject_fate(self) -> RejectFate {
        match self {
            AdmissionRule::FifoDrop => RejectFate::Drop,
            _ => RejectFate::Local,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub task_id: usize,
    pub offload_time: f64,
    pub deadline: f64,
    pub size: f64,
}

/// Admission order of `proposals`. Ties go to the lower task id.
pub fn admission_order(rule: AdmissionRule, proposals: &[Proposal], rng: &mut impl Rng) -> Vec<usize> {
    let mut p = proposals.to_vec();
    p.sort_by_key(|x| x.task_id);
    match rule {
        AdmissionRule::FifoDrop | AdmissionRule::ShortestOffloadFirst => {
            p.sort_by(|a, b| a.offload_time.total_cmp(&b.offload_time));
        }
        AdmissionRule::DeadlineOverSizeFirst => {
            p.sort_by(|a, b| (a.deadline / a.size).total_cmp(&(b.deadline / b.size)));
        }
        AdmissionRule::Random => p.shuffle(rng),
    }
    p.into_iter().map(|x| x.task_id).collect()
}

/// Accept mask over `devices` tasks. Proposals are taken in rule order while
/// fewer than K are accepted and each still fits the storage budget.
pub fn admit(
    rule: AdmissionRule,
    proposals: &[Proposal],
    devices: usize,
    limits: &AdmissionLimits,
    rng: &mut impl Rng,
) -> MasterDecision {
    let order = admission_order(rule, proposals, rng);
    let mut sizes = vec![0.0; devices];
    for p in proposals {
        sizes[p.task_id] = p.size;
    }
    greedy_admission(&order, &sizes, limits, devices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    devices: usize,
}

impl CriticAgent {
    pub fn spec(cfg: &LearnerConfig, devices: usize) -> MlpSpec {
        let mut widths = vec![SLOT * devices];
        widths.extend(&cfg.master_hidden);
        widths.push(1);
        MlpSpec::new(widths, cfg.hidden_activation, cfg.master_output)
    }

    pub fn new(cfg: &LearnerConfig, devices: usize, rng: &mut impl Rng) -> Result<Self, LearnError> {
        Self::from_network(Mlp::new(Self::spec(cfg, devices), rng)?, devices, cfg.master_lr)
    }

    pub fn from_network(online: Mlp, devices: usize, lr: f64) -> Result<Self, LearnError> {
        if online.spec().input_dim() != SLOT * devices || online.spec().output_dim() != 1 {
            return Err(LearnError::Spec(format!(
                "critic for {devices} devices must map {} inputs to 1 output",
                SLOT * devices
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

    pub fn q(&self, states: &[Observation], actions: &[Action], target: bool) -> Result<f64, LearnError> {
        let net = if target { &self.target } else { &self.online };
        Ok(net.forward(&joint_input(states, actions))?[0])
    }

    pub fn sync(&mut self) {
        self.target.copy_from(&self.online);
    }
}

/// `y_i = scale·r_i + γ·Q'(S'_i, π'(S'_i))·(1 − done_i)`.
pub fn maddpg_targets(
    actors: &[ClientAgent],
    critic: &CriticAgent,
    batch: &[&Transition],
    gamma: f64,
    reward_scale: f64,
) -> Result<Vec<f64>, LearnError> {
    batch
        .iter()
        .map(|t| {
            let next: Vec<Action> = actors
                .iter()
                .zip(&t.next_states)
                .map(|(a, s)| a.target_action(s))
                .collect::<Result<_, _>>()?;
            let bootstrap = if t.done {
                0.0
            } else {
                gamma * critic.q(&t.next_states, &next, true)?
            };
            Ok(reward_scale * t.reward + bootstrap)
        })
        .collect()
}

/// Critic regression, then every actor ascends the critic with its own
/// action replaced by its current policy output, then a hard target sync.
pub fn maddpg_train_on_batch(
    actors: &mut [ClientAgent],
    critic: &mut CriticAgent,
    batch: &[&Transition],
    weights: &[f64],
    cfg: &LearnerConfig,
) -> Result<TrainReport, LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyMemory);
    }
    for t in batch {
        t.check(actors.len())?;
    }
    let targets = maddpg_targets(actors, critic, batch, cfg.gamma, cfg.reward_scale)?;
    let m = batch.len() as f64;
    let mut grad = vec![0.0; critic.online.params().len()];
    let mut sq = 0.0;
    let mut priorities = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let trace = critic.online.forward_trace(&joint_input(&t.states, &t.actions))?;
        let diff = targets[i] - trace.output()[0];
        sq += diff * diff;
        priorities.push(diff.abs());
        critic
            .online
            .backward_into(&trace, &[-2.0 * weights[i] * diff / m], &mut grad)?;
    }
    let td_error = sq / m;
    if !td_error.is_finite() {
        return Err(LearnError::NonFinite("critic loss"));
    }
    let mut params = critic.online.params().to_vec();
    critic.optimizer.step(&mut params, &grad)?;
    critic.online.params_mut().copy_from_slice(&params);

    let mut objective = 0.0;
    for n in 0..actors.len() {
        let mut grad = vec![0.0; actors[n].policy.params().len()];
        for t in batch {
            let trace_n = actors[n].policy.forward_trace(&t.states[n])?;
            let o = trace_n.output();
            let mut actions = t.actions.clone();
            actions[n] = scale_action([o[0], o[1], o[2]]);
            let trace = critic.online.forward_trace(&joint_input(&t.states, &actions))?;
            objective += trace.output()[0] / m;
            let g = critic.online.input_gradient(&trace, &[1.0])?;
            let base = SLOT * n + OBS_DIM;
            let upstream = [0, 1, 2].map(|k| -0.5 * g[base + k] / m);
            actors[n].policy.backward_into(&trace_n, &upstream, &mut grad)?;
        }
        let actor = &mut actors[n];
        let mut params = actor.policy.params().to_vec();
        actor.optimizer.step(&mut params, &grad)?;
        actor.policy.params_mut().copy_from_slice(&params);
    }
    for a in actors.iter_mut() {
        a.sync();
    }
    critic.sync();
    Ok(TrainReport {
        td_error,
        priorities,
        targets,
        client_objective: objective / actors.len() as f64,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Maddpg {
    cfg: LearnerConfig,
    rule: AdmissionRule,
    pub actors: Vec<ClientAgent>,
    pub critic: CriticAgent,
    memory: ReplayMemory<Transition>,
    rngs: LearnerRngs,
}

impl Maddpg {
    pub fn new(cfg: &LearnerConfig, rule: AdmissionRule, devices: usize, seed: u64) -> Result<Self, LearnError> {
        cfg.validate()?;
        let mut rngs = LearnerRngs::from_seed(seed);
        let actors = (0..devices)
            .map(|_| ClientAgent::new(cfg, &mut rngs.weights))
            .collect::<Result<Vec<_>, _>>()?;
        let critic = CriticAgent::new(cfg, devices, &mut rngs.weights)?;
        Ok(Self {
            cfg: cfg.clone(),
            rule,
            actors,
            critic,
            memory: ReplayMemory::new(cfg.replay_capacity, cfg.per_params()),
            rngs,
        })
    }

    pub fn rule(&self) -> AdmissionRule {
        self.rule
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        checkpoint::load(path)
    }
}

impl Learner for Maddpg {
    fn algorithm(&self) -> Algorithm {
        match self.rule {
            AdmissionRule::FifoDrop => Algorithm::Maddpg,
            AdmissionRule::ShortestOffloadFirst => Algorithm::MaddpgStf,
            AdmissionRule::DeadlineOverSizeFirst => Algorithm::MaddpgDsf,
            AdmissionRule::Random => Algorithm::RandomMaster,
        }
    }

    fn devices(&self) -> usize {
        self.actors.len()
    }

    fn reject_fate(&self) -> RejectFate {
        self.rule.reject_fate()
    }

    fn act(
        &mut self,
        env: &MecEnv,
        observations: &[Observation],
        epsilon: f64,
        evaluation: bool,
    ) -> Result<Decision, LearnError> {
        let actions = act_all(
            &self.actors,
            observations,
            epsilon,
            evaluation,
            self.cfg.noise,
            &mut self.rngs.exploration,
        )?;
        let decision = Decision::new(env, actions, MasterDecision::none(self.actors.len()))?;
        let mut proposals = Vec::new();
        for (n, d) in decision.decoded.iter().enumerate() {
            if d.propose {
                let task = env.tasks()[n];
                proposals.push(Proposal {
                    task_id: n,
                    offload_time: env.offload_time(n, d.power_w)?,
                    deadline: task.deadline_s,
                    size: task.size_bits,
                });
            }
        }
        let mask = admit(
            self.rule,
            &proposals,
            self.actors.len(),
            &AdmissionLimits::of(env),
            &mut self.rngs.admission,
        );
        debug_assert!(mask
            .accepted()
            .all(|n| ClientAction::from_slice(&decision.actions[n]).proposes()));
        Ok(Decision { mask, ..decision })
    }

    fn remember(&mut self, transition: Transition) -> Result<(), LearnError> {
        transition.check(self.actors.len())?;
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
        let report = maddpg_train_on_batch(&mut self.actors, &mut self.critic, &batch, &sampled.weights, &self.cfg)?;
        self.memory.update_priorities(&sampled.indices, &report.priorities);
        Ok(Some(report))
    }

    fn save(&self, path: &Path) -> Result<(), LearnError> {
        checkpoint::save(path, self)
    }
}
