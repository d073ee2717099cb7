use rand::RngCore;

use super::{explore, next_policy, snapshot, Agent, Hyperparameters, Policy, QHistory, Transition};
use crate::environment::EnvState;

/// State-by-action Q lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: [Vec<f64>; 2],
}

impl QTable {
    pub fn zeros(actions: usize) -> Self {
        Self { values: [vec![0.0; actions], vec![0.0; actions]] }
    }

    pub fn from_rows(s0: Vec<f64>, s1: Vec<f64>) -> Self {
        assert_eq!(s0.len(), s1.len(), "rows must have equal width");
        Self { values: [s0, s1] }
    }

    pub fn get(&self, state: EnvState, action: usize) -> f64 {
        self.values[state.index()][action]
    }

    pub fn row(&self, state: EnvState) -> &[f64] {
        &self.values[state.index()]
    }

    pub fn rows(&self) -> &[Vec<f64>; 2] {
        &self.values
    }

    pub fn max(&self, state: EnvState) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Temporal-difference update of the visited entry:
/// `Q(x,a) += alpha * (r + gamma * max_a' Q(x',a') - Q(x,a))`.
pub fn tabular_q_update(q: &mut QTable, t: &Transition, alpha: f64, gamma: f64) {
    let target = t.reward + gamma * q.max(t.next_state);
    let entry = &mut q.values[t.state.index()][t.action];
    *entry += alpha * (target - *entry);
}

/// Phased best-reply-with-inertia learner on a lookup table, with step size
/// `1 / (visits of (x, a))`.
#[derive(Debug, Clone)]
pub struct TabularAgent {
    q: QTable,
    visits: [Vec<u64>; 2],
    policy: Policy,
    history: QHistory,
    hyper: Hyperparameters,
}

impl TabularAgent {
    pub fn new(actions: usize, initial_policy: Policy, hyper: Hyperparameters) -> Self {
        Self {
            q: QTable::zeros(actions),
            visits: [vec![0; actions], vec![0; actions]],
            policy: initial_policy,
            history: QHistory::new(hyper.std_window),
            hyper,
        }
    }

    pub fn init(actions: usize, hyper: Hyperparameters, rng: &mut dyn RngCore) -> Self {
        let policy = Policy::random(actions, rng);
        Self::new(actions, policy, hyper)
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }
}

impl Agent for TabularAgent {
    fn select_action(&mut self, state: EnvState, rng: &mut dyn RngCore) -> usize {
        explore(self.policy.action(state), self.q.row(state).len(), self.hyper.rho, rng)
    }

    fn observe(&mut self, t: &Transition, _rng: &mut dyn RngCore) -> f64 {
        let n = &mut self.visits[t.state.index()][t.action];
        *n += 1;
        let alpha = 1.0 / *n as f64;
        let before = self.q.get(t.state, t.action);
        tabular_q_update(&mut self.q, t, alpha, self.hyper.gamma);
        let rows = self.q.rows();
        self.history.push(snapshot(&rows[0], &rows[1]));
        let e = self.q.get(t.state, t.action) - before;
        e * e
    }

    fn end_phase(&mut self, rng: &mut dyn RngCore) -> Policy {
        let delta = self.tolerance();
        self.policy = next_policy(self.policy, self.q.rows(), delta, self.hyper.lambda, rng);
        self.policy
    }

    fn policy(&self) -> Policy {
        self.policy
    }

    fn q_values(&self, state: EnvState) -> Vec<f64> {
        self.q.row(state).to_vec()
    }

    fn tolerance(&self) -> f64 {
        self.history.tolerance(self.hyper.tolerance_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(state: EnvState, action: usize, reward: f64, next_state: EnvState) -> Transition {
        Transition { state, action, reward, next_state }
    }

    #[test]
    fn full_step_no_discount_copies_reward() {
        let mut q = QTable::zeros(3);
        tabular_q_update(&mut q, &t(EnvState::S0, 1, 2.5, EnvState::S1), 1.0, 0.0);
        assert_eq!(q.get(EnvState::S0, 1), 2.5);
    }

    #[test]
    fn half_step_from_zero() {
        let mut q = QTable::zeros(3);
        tabular_q_update(&mut q, &t(EnvState::S0, 0, 1.0, EnvState::S0), 0.5, 0.9);
        assert_eq!(q.get(EnvState::S0, 0), 0.5);
        // only the visited entry moves
        assert_eq!(q.rows()[0][1..], [0.0, 0.0]);
        assert_eq!(q.rows()[1], vec![0.0; 3]);
    }

    #[test]
    fn bellman_consistent_table_is_fixed() {
        // r = 1 everywhere, gamma = 0.5: Q = 2 solves Q = r + gamma * max Q.
        let mut q = QTable::from_rows(vec![2.0, 2.0], vec![2.0, 2.0]);
        let before = q.clone();
        tabular_q_update(&mut q, &t(EnvState::S1, 1, 1.0, EnvState::S0), 0.3, 0.5);
        assert_eq!(q, before);
    }
}
