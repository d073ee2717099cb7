//! Per-CR learning agents.
//!
//! Three variants share the [`Agent`] interface so the harness can drive them
//! in lockstep:
//!
//! - [`ProposedAgent`]: exploration phases with a frozen policy, a DQN
//!   trained on the current phase's samples against a stored target
//!   Q-array, and a best-reply-with-inertia policy update between phases.
//! - [`StandardDqlAgent`]: single-agent DQN with epsilon-greedy exploration,
//!   replay memory and a periodically refreshed target array.
//! - [`TabularAgent`]: the phased algorithm on a lookup table instead of a
//!   network.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::EnvState;
use crate::error::{Error, Result};

mod proposed;
mod standard;
mod tabular;

pub use proposed::ProposedAgent;
pub use standard::StandardDqlAgent;
pub use tabular::{tabular_q_update, QTable, TabularAgent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    /// Number of exploration phases (K).
    pub phases: usize,
    /// Learning steps per exploration phase.
    pub phase_len: usize,
    /// Experimentation probability.
    pub rho: f64,
    /// Inertia probability.
    pub lambda: f64,
    /// Discount factor.
    pub gamma: f64,
    pub learning_rate: f64,
    /// Training steps between target Q-array refreshes.
    pub target_refresh: usize,
    pub batch_size: usize,
    /// Window (steps) of the moving standard deviation behind the tolerance.
    /// Short windows measure how much the Q-values are still moving; a
    /// phase-long window mostly measures the spread accumulated since the
    /// phase began and keeps the candidate sets wide.
    pub std_window: usize,
    /// Multiplier on the largest moving standard deviation.
    pub tolerance_scale: f64,
    /// Replay memory size of the standard DQL baseline.
    pub replay_capacity: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            phases: 60,
            phase_len: 60,
            rho: 0.15,
            lambda: 0.35,
            gamma: 0.9,
            learning_rate: 0.01,
            target_refresh: 30,
            batch_size: 60,
            std_window: 5,
            tolerance_scale: 3.0,
            replay_capacity: 3600,
        }
    }
}

impl Hyperparameters {
    /// The endpoints 0 and 1 of `rho` and `lambda` are accepted so that
    /// frozen-policy and no-exploration runs can be expressed.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, why: &str| Err(Error::Config(format!("hyper.{key}: {why}")));
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return fail("rho", "must be in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return fail("lambda", "must be in [0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return fail("gamma", "must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate", "must be positive");
        }
        if self.phase_len == 0 {
            return fail("phase_len", "must be positive");
        }
        if self.target_refresh == 0 {
            return fail("target_refresh", "must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if self.std_window == 0 {
            return fail("std_window", "must be positive");
        }
        if !(self.tolerance_scale >= 0.0) {
            return fail("tolerance_scale", "must be non-negative");
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity", "must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.phases * self.phase_len
    }
}

/// Action to take in each environment state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub actions: [usize; 2],
}

impl Policy {
    pub fn new(s0: usize, s1: usize) -> Self {
        Self { actions: [s0, s1] }
    }

    pub fn constant(action: usize) -> Self {
        Self::new(action, action)
    }

    pub fn action(&self, state: EnvState) -> usize {
        self.actions[state.index()]
    }

    pub fn random<R: Rng + ?Sized>(actions: usize, rng: &mut R) -> Self {
        Self::new(rng.gen_range(0..actions), rng.gen_range(0..actions))
    }
}

/// One learning step as seen by an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next_state: EnvState,
}

/// Common interface the harness drives.
pub trait Agent: Send {
    /// Action for `state` at the current step.
    fn select_action(&mut self, state: EnvState, rng: &mut dyn rand::RngCore) -> usize;

    /// Learns from one step; returns the training loss.
    fn observe(&mut self, transition: &Transition, rng: &mut dyn rand::RngCore) -> f64;

    /// Closes an exploration phase and returns the policy for the next one.
    fn end_phase(&mut self, rng: &mut dyn rand::RngCore) -> Policy;

    /// Policy currently followed (greedy policy for the standard baseline).
    fn policy(&self) -> Policy;

    fn q_values(&self, state: EnvState) -> Vec<f64>;

    /// Current tolerance level; `+inf` before any Q-values were recorded.
    fn tolerance(&self) -> f64;
}

/// Sliding window of recent Q-value snapshots, one value per (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct QHistory {
    window: usize,
    snapshots: VecDeque<Vec<f64>>,
}

impl QHistory {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must be positive");
        Self { window, snapshots: VecDeque::with_capacity(window) }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn push(&mut self, snapshot: Vec<f64>) {
        if let Some(first) = self.snapshots.front() {
            assert_eq!(first.len(), snapshot.len(), "snapshot width changed");
        }
        if self.snapshots.len() == self.window {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(snapshot);
    }

    /// Population standard deviation of every (state, action) column.
    pub fn stds(&self) -> Vec<f64> {
        let Some(first) = self.snapshots.front() else {
            return Vec::new();
        };
        let n = self.snapshots.len() as f64;
        (0..first.len())
            .map(|k| {
                let mean = self.snapshots.iter().map(|s| s[k]).sum::<f64>() / n;
                let var = self.snapshots.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }

    /// `scale` times the largest column standard deviation; `+inf` when empty.
    pub fn tolerance(&self, scale: f64) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        scale * self.stds().into_iter().fold(0.0, f64::max)
    }
}

/// Both states' Q-values laid out as one snapshot row (S0 actions first).
pub(crate) fn snapshot(q_s0: &[f64], q_s1: &[f64]) -> Vec<f64> {
    q_s0.iter().chain(q_s1).copied().collect()
}

/// Actions whose Q-value is within `delta` of the best one.
pub fn candidate_actions(q: &[f64], delta: f64) -> Vec<usize> {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - delta;
    q.iter().enumerate().filter(|(_, &v)| v >= floor).map(|(a, _)| a).collect()
}

/// Per-state candidate action sets; the candidate policies are their product.
pub fn candidate_sets(q_by_state: &[Vec<f64>; 2], delta: f64) -> [Vec<usize>; 2] {
    [candidate_actions(&q_by_state[0], delta), candidate_actions(&q_by_state[1], delta)]
}

/// Best reply with inertia: keep `current` with probability `lambda`,
/// otherwise draw uniformly from the candidate policy set.
pub fn next_policy<R: Rng + ?Sized>(
    current: Policy,
    q_by_state: &[Vec<f64>; 2],
    delta: f64,
    lambda: f64,
    rng: &mut R,
) -> Policy {
    if rng.gen::<f64>() < lambda {
        return current;
    }
    let sets = candidate_sets(q_by_state, delta);
    // Uniform over the product set == independent uniform draw per state.
    let pick = |set: &Vec<usize>, rng: &mut R| set[rng.gen_range(0..set.len())];
    let s0 = pick(&sets[0], rng);
    let s1 = pick(&sets[1], rng);
    Policy::new(s0, s1)
}

/// Phase-policy action with probability `1 - rho`, otherwise uniform over all actions.
pub fn explore<R: Rng + ?Sized>(policy_action: usize, actions: usize, rho: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < rho {
        rng.gen_range(0..actions)
    } else {
        policy_action
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tolerance_of_constant_history_is_zero() {
        let mut h = QHistory::new(60);
        for _ in 0..10 {
            h.push(vec![1.0, 2.0, 3.0]);
        }
        assert_eq!(h.tolerance(3.0), 0.0);
    }

    #[test]
    fn tolerance_uses_population_std() {
        let mut h = QHistory::new(60);
        h.push(vec![0.0, 5.0, 5.0]);
        h.push(vec![2.0, 5.0, 5.0]);
        assert!((h.tolerance(3.0) - 3.0).abs() < 1e-12);
        // same noise on another column gives the same delta
        let mut g = QHistory::new(60);
        g.push(vec![5.0, 5.0, 0.0]);
        g.push(vec![5.0, 5.0, 2.0]);
        assert_eq!(g.tolerance(3.0), h.tolerance(3.0));
    }

    #[test]
    fn empty_history_allows_everything() {
        let h = QHistory::new(5);
        assert_eq!(h.tolerance(3.0), f64::INFINITY);
        assert_eq!(candidate_actions(&[1.0, -4.0, 2.0], f64::INFINITY), vec![0, 1, 2]);
    }

    #[test]
    fn history_window_slides() {
        let mut h = QHistory::new(2);
        h.push(vec![100.0]);
        h.push(vec![1.0]);
        h.push(vec![1.0]);
        assert_eq!(h.len(), 2);
        assert_eq!(h.tolerance(3.0), 0.0);
    }

    #[test]
    fn candidate_set_within_tolerance() {
        let mut q = vec![0.0; 14];
        q[0] = 1.0;
        q[1] = 3.0;
        q[2] = 2.95;
        assert_eq!(candidate_actions(&q, 0.1), vec![1, 2]);
        assert_eq!(candidate_actions(&q, 0.0), vec![1]);
    }

    #[test]
    fn full_inertia_keeps_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = [vec![0.0, 9.0, 1.0], vec![5.0, 0.0, 1.0]];
        let cur = Policy::new(2, 2);
        for _ in 0..100 {
            assert_eq!(next_policy(cur, &q, 0.0, 1.0, &mut rng), cur);
        }
    }

    #[test]
    fn greedy_limit_picks_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = [vec![0.0, 9.0, 1.0], vec![5.0, 0.0, 1.0]];
        for _ in 0..100 {
            assert_eq!(next_policy(Policy::new(2, 2), &q, 0.0, 0.0, &mut rng), Policy::new(1, 0));
        }
    }

    #[test]
    fn explore_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| explore(5, 14, 0.0, &mut rng) == 5));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
