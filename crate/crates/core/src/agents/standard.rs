use std::collections::VecDeque;

use rand::seq::index;
use rand::RngCore;

use super::{argmax, explore, snapshot, Agent, Hyperparameters, Policy, QHistory, Transition};
use crate::environment::EnvState;
use crate::neuralnet::{QNetwork, TrainingSample};

/// Single-agent DQN baseline: epsilon-greedy on the network's greedy action
/// (`epsilon = rho`), uniform mini-batches from a replay memory, targets from
/// an array refreshed every `target_refresh` steps. No phases, no inertia.
#[derive(Debug, Clone)]
pub struct StandardDqlAgent {
    net: QNetwork,
    target_q: [Vec<f64>; 2],
    replay: VecDeque<Transition>,
    history: QHistory,
    hyper: Hyperparameters,
    steps: usize,
}

impl StandardDqlAgent {
    pub fn new(net: QNetwork, hyper: Hyperparameters) -> Self {
        let target_q = [net.forward(EnvState::S0), net.forward(EnvState::S1)];
        Self {
            net,
            target_q,
            replay: VecDeque::with_capacity(hyper.replay_capacity),
            history: QHistory::new(hyper.std_window),
            hyper,
            steps: 0,
        }
    }

    pub fn init(actions: usize, hyper: Hyperparameters, rng: &mut dyn RngCore) -> Self {
        Self::new(QNetwork::for_actions(actions, rng), hyper)
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn target_q(&self) -> &[Vec<f64>; 2] {
        &self.target_q
    }

    pub fn net(&self) -> &QNetwork {
        &self.net
    }

    fn target(&self, t: &Transition) -> f64 {
        let best = self.target_q[t.next_state.index()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        t.reward + self.hyper.gamma * best
    }

    /// Stores the transition and trains on a uniform sample of the replay memory.
    pub fn standard_dql_step(&mut self, transition: &Transition, rng: &mut dyn RngCore) -> f64 {
        if self.replay.len() == self.hyper.replay_capacity {
            self.replay.pop_front();
        }
        self.replay.push_back(*transition);
        let n = self.replay.len().min(self.hyper.batch_size);
        let batch: Vec<TrainingSample> = index::sample(rng, self.replay.len(), n)
            .into_iter()
            .map(|i| {
                let t = &self.replay[i];
                TrainingSample { state: t.state, next_state: t.next_state, action: t.action, target_q: self.target(t) }
            })
            .collect();
        let loss = self.net.train_minibatch(&batch, self.hyper.learning_rate);
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

impl Agent for StandardDqlAgent {
    fn select_action(&mut self, state: EnvState, rng: &mut dyn RngCore) -> usize {
        let greedy = argmax(&self.net.forward(state));
        explore(greedy, self.net.outputs(), self.hyper.rho, rng)
    }

    fn observe(&mut self, transition: &Transition, rng: &mut dyn RngCore) -> f64 {
        self.standard_dql_step(transition, rng)
    }

    fn end_phase(&mut self, _rng: &mut dyn RngCore) -> Policy {
        self.policy()
    }

    fn policy(&self) -> Policy {
        Policy::new(argmax(&self.net.forward(EnvState::S0)), argmax(&self.net.forward(EnvState::S1)))
    }

    fn q_values(&self, state: EnvState) -> Vec<f64> {
        self.net.forward(state)
    }

    fn tolerance(&self) -> f64 {
        self.history.tolerance(self.hyper.tolerance_scale)
    }
}
