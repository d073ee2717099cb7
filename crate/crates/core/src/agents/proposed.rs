use rand::RngCore;

use super::{explore, next_policy, snapshot, Agent, Hyperparameters, Policy, QHistory, Transition};
use crate::environment::EnvState;
use crate::neuralnet::{QNetwork, TrainingSample};

/// Uncoordinated multi-agent DQN agent.
///
/// Within a phase the policy is frozen and deviations happen only with
/// probability `rho`. Each step trains the network on the most recent
/// samples of the current phase, with targets taken from a stored Q-array
/// that is refreshed every `target_refresh` steps and at every phase end.
/// Between phases the next policy is drawn from the near-best candidate set
/// unless inertia keeps the current one.
#[derive(Debug, Clone)]
pub struct ProposedAgent {
    net: QNetwork,
    target_q: [Vec<f64>; 2],
    policy: Policy,
    phase_buffer: Vec<TrainingSample>,
    history: QHistory,
    hyper: Hyperparameters,
    steps: usize,
}

impl ProposedAgent {
    pub fn new(net: QNetwork, initial_policy: Policy, hyper: Hyperparameters) -> Self {
        let target_q = [net.forward(EnvState::S0), net.forward(EnvState::S1)];
        Self {
            net,
            target_q,
            policy: initial_policy,
            phase_buffer: Vec::with_capacity(hyper.phase_len),
            history: QHistory::new(hyper.std_window),
            hyper,
            steps: 0,
        }
    }

    /// Freshly initialized agent: random network and random initial policy.
    pub fn init(actions: usize, hyper: Hyperparameters, rng: &mut dyn RngCore) -> Self {
        let net = QNetwork::for_actions(actions, rng);
        let policy = Policy::random(actions, rng);
        Self::new(net, policy, hyper)
    }

    pub fn net(&self) -> &QNetwork {
        &self.net
    }

    pub fn target_q(&self) -> &[Vec<f64>; 2] {
        &self.target_q
    }

    pub fn phase_buffer(&self) -> &[TrainingSample] {
        &self.phase_buffer
    }

    pub fn history(&self) -> &QHistory {
        &self.history
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `r + gamma * max_a Qhat(x', a)` from the stored target array.
    pub fn training_target(&self, reward: f64, next_state: EnvState) -> f64 {
        let best = self.target_q[next_state.index()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        reward + self.hyper.gamma * best
    }

    fn refresh_target(&mut self) {
        self.target_q = [self.net.forward(EnvState::S0), self.net.forward(EnvState::S1)];
    }

    /// Records a sample, takes one gradient step on the recent phase samples
    /// and refreshes the target array on `target_refresh` boundaries.
    pub fn train_step(&mut self, t: &Transition) -> f64 {
        let sample = TrainingSample {
            state: t.state,
            next_state: t.next_state,
            action: t.action,
            target_q: self.training_target(t.reward, t.next_state),
        };
        self.phase_buffer.push(sample);
        let start = self.phase_buffer.len().saturating_sub(self.hyper.batch_size);
        let loss = self.net.train_minibatch(&self.phase_buffer[start..], self.hyper.learning_rate);
        self.steps += 1;
        let q0 = self.net.forward(EnvState::S0);
        let q1 = self.net.forward(EnvState::S1);
        self.history.push(snapshot(&q0, &q1));
        if self.steps.is_multiple_of(self.hyper.target_refresh) {
            self.target_q = [q0, q1];
        }
        loss
    }
}

impl Agent for ProposedAgent {
    fn select_action(&mut self, state: EnvState, rng: &mut dyn RngCore) -> usize {
        explore(self.policy.action(state), self.net.outputs(), self.hyper.rho, rng)
    }

    fn observe(&mut self, transition: &Transition, _rng: &mut dyn RngCore) -> f64 {
        self.train_step(transition)
    }

    fn end_phase(&mut self, rng: &mut dyn RngCore) -> Policy {
        self.refresh_target();
        let q = self.target_q.clone();
        let delta = self.tolerance();
        self.policy = next_policy(self.policy, &q, delta, self.hyper.lambda, rng);
        self.phase_buffer.clear();
        self.policy
    }

    fn policy(&self) -> Policy {
        self.policy
    }

    fn q_values(&self, state: EnvState) -> Vec<f64> {
        self.net.forward(state)
    }

    fn tolerance(&self) -> f64 {
        self.history.tolerance(self.hyper.tolerance_scale)
    }
}
