//! The shared wireless medium as a multi-agent environment.
//!
//! A joint action (one power index per CR) fixes every transmit power. From
//! those powers the environment derives each CR link's throughput, the
//! relative throughput drop at each CR's monitored PN link, the one-bit
//! global state and the per-agent rewards. PN powers come from the PN's own
//! power control with the CRs silent and stay frozen unless the scenario
//! asks for re-adaptation.

use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::linklayer::{
    pn_power_allocation, pn_power_iterate, sinr_db, throughput_mbps, AmcTable, PnAllocation, PnPowerControl,
    PowerVector,
};
use crate::topology::{linear_to_db, NetworkRealization};

/// Joint action spaces up to this many CRs get a precomputed outcome table.
const CACHE_MAX_CRS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvState {
    /// Every monitored PN link is within the underlay limit.
    S0,
    S1,
}

impl EnvState {
    pub const ALL: [EnvState; 2] = [EnvState::S0, EnvState::S1];

    pub fn index(self) -> usize {
        match self {
            EnvState::S0 => 0,
            EnvState::S1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => EnvState::S0,
            _ => EnvState::S1,
        }
    }
}

impl std::fmt::Display for EnvState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvState::S0 => f.write_str("S0"),
            EnvState::S1 => f.write_str("S1"),
        }
    }
}

/// CR transmit-power choices: OFF followed by evenly spaced levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    levels_dbm: Vec<Option<f64>>,
}

impl ActionSpace {
    pub fn new(min_dbm: f64, step_db: f64, levels: usize) -> Self {
        let mut levels_dbm = Vec::with_capacity(levels + 1);
        levels_dbm.push(None);
        levels_dbm.extend((0..levels).map(|i| Some(min_dbm + step_db * i as f64)));
        Self { levels_dbm }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self::new(scenario.cr_power_min_dbm, scenario.cr_power_step_db, scenario.cr_power_levels)
    }

    pub fn len(&self) -> usize {
        self.levels_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels_dbm.is_empty()
    }

    pub fn power_dbm(&self, action: usize) -> Option<f64> {
        self.levels_dbm[action]
    }

    pub fn levels(&self) -> &[Option<f64>] {
        &self.levels_dbm
    }

    pub const OFF: usize = 0;

    pub fn max_power(&self) -> usize {
        self.len() - 1
    }
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self::from_scenario(&Scenario::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Every agent receives `10^(sum of CR throughputs)`.
    #[default]
    Sum,
    /// Agent i receives `10^(its own throughput)`.
    PerCr,
}

/// Everything the environment derives from one joint action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: EnvState,
    /// Mbps
    pub per_cr_throughput: Vec<f64>,
    /// Mbps
    pub sn_sum_throughput: f64,
    pub per_cr_reward: Vec<f64>,
    /// Relative throughput drop at each CR's monitored PN link.
    pub pn_rel_change: Vec<f64>,
}

impl StepOutcome {
    /// Sum throughput credited to a joint action: zero unless the underlay
    /// limit holds.
    pub fn feasible_sum_throughput(&self) -> f64 {
        match self.state {
            EnvState::S0 => self.sn_sum_throughput,
            EnvState::S1 => 0.0,
        }
    }
}

/// `(baseline - current) / baseline`, clamped below at zero.
pub fn relative_change(baseline: f64, current: f64) -> f64 {
    ((baseline - current) / baseline).max(0.0)
}

/// Reward of every agent for the given throughputs and state.
pub fn rewards(state: EnvState, per_cr_throughput: &[f64], mode: RewardMode) -> Vec<f64> {
    match state {
        EnvState::S1 => vec![0.0; per_cr_throughput.len()],
        EnvState::S0 => match mode {
            RewardMode::Sum => {
                let total: f64 = per_cr_throughput.iter().sum();
                vec![10f64.powf(total); per_cr_throughput.len()]
            }
            RewardMode::PerCr => per_cr_throughput.iter().map(|&t| 10f64.powf(t)).collect(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Evaluation {
    state: EnvState,
    per_cr_throughput: Vec<f64>,
    pn_rel_change: Vec<f64>,
}

/// One realization wired up as an environment.
#[derive(Debug, Clone)]
pub struct Environment {
    realization: NetworkRealization,
    table: AmcTable,
    actions: ActionSpace,
    control: PnPowerControl,
    bandwidth_hz: f64,
    noise_dbm: f64,
    underlay_limit: f64,
    readapt: bool,
    baseline: PnAllocation,
    /// Monitored PN link of each CR.
    nearest: Vec<usize>,
    /// PN throughput of every link with all CRs silent.
    baseline_throughput: Vec<f64>,
    cache: Option<Vec<Evaluation>>,
}

impl Environment {
    /// Builds the environment; fails when a monitored PN link carries no
    /// traffic even with the CRs silent (its relative change is undefined).
    pub fn new(realization: NetworkRealization, scenario: &Scenario, table: AmcTable) -> Result<Self> {
        let control = PnPowerControl::from_scenario(scenario, &table);
        let silent = vec![None; realization.num_crs()];
        let baseline = pn_power_allocation(&realization, &silent, &control);
        let baseline_throughput = (0..realization.num_pn_links())
            .map(|link| {
                let s = sinr_db(&realization, &baseline.powers, realization.pn_rx(link), scenario.noise_dbm);
                throughput_mbps(s, &table, scenario.bandwidth_hz)
            })
            .collect::<Vec<_>>();
        let mut env = Self {
            actions: ActionSpace::from_scenario(scenario),
            control,
            bandwidth_hz: scenario.bandwidth_hz,
            noise_dbm: scenario.noise_dbm,
            underlay_limit: scenario.underlay_limit,
            readapt: scenario.pn_readapt_every_step,
            nearest: Vec::new(),
            baseline,
            baseline_throughput,
            table,
            realization,
            cache: None,
        };
        env.nearest = (0..env.realization.num_crs()).map(|cr| env.nearest_pn_link(cr)).collect();
        for (cr, &link) in env.nearest.iter().enumerate() {
            if !(env.baseline_throughput[link] > 0.0) {
                return Err(Error::InvalidRealization(format!(
                    "PN link {link} monitored by CR {cr} has zero baseline throughput"
                )));
            }
        }
        if env.realization.num_crs() <= CACHE_MAX_CRS {
            let n = env.joint_action_count();
            let table = (0..n).map(|code| env.evaluate(&env.decode(code))).collect();
            env.cache = Some(table);
        }
        Ok(env)
    }

    pub fn realization(&self) -> &NetworkRealization {
        &self.realization
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn amc_table(&self) -> &AmcTable {
        &self.table
    }

    pub fn num_crs(&self) -> usize {
        self.realization.num_crs()
    }

    pub fn underlay_limit(&self) -> f64 {
        self.underlay_limit
    }

    /// PN allocation with the CRs silent.
    pub fn baseline_allocation(&self) -> &PnAllocation {
        &self.baseline
    }

    pub fn baseline_throughput(&self, pn_link: usize) -> f64 {
        self.baseline_throughput[pn_link]
    }

    /// Monitored PN link of each CR.
    pub fn monitored_links(&self) -> &[usize] {
        &self.nearest
    }

    pub fn joint_action_count(&self) -> usize {
        self.actions.len().pow(self.num_crs() as u32)
    }

    /// Joint action for a mixed-radix code, first CR most significant.
    pub fn decode(&self, mut code: usize) -> Vec<usize> {
        let base = self.actions.len();
        let mut joint = vec![0; self.num_crs()];
        for slot in joint.iter_mut().rev() {
            *slot = code % base;
            code /= base;
        }
        joint
    }

    pub fn encode(&self, joint: &[usize]) -> usize {
        let base = self.actions.len();
        joint.iter().fold(0, |acc, &a| acc * base + a)
    }

    /// Active PN link whose AP is received strongest at the CR transmitter.
    /// Ties go to the lowest AP index.
    pub fn nearest_pn_link(&self, cr: usize) -> usize {
        let r = &self.realization;
        let mut best = 0;
        let mut best_dbm = f64::NEG_INFINITY;
        for (link, &ap) in r.active_aps.iter().enumerate() {
            let p = self.baseline.powers.get(ap).expect("active AP has a power");
            let rx_dbm = p + linear_to_db(r.ap_to_cr_tx_gain[ap][cr]);
            if rx_dbm > best_dbm {
                best_dbm = rx_dbm;
                best = link;
            }
        }
        best
    }

    fn cr_powers(&self, joint: &[usize]) -> Vec<Option<f64>> {
        joint.iter().map(|&a| self.actions.power_dbm(a)).collect()
    }

    fn powers_for(&self, cr_powers: &[Option<f64>]) -> PowerVector {
        let with_crs = self.baseline.powers.clone().with_cr_powers(&self.realization, cr_powers);
        if self.readapt {
            pn_power_iterate(&self.realization, with_crs, &self.control).powers
        } else {
            with_crs
        }
    }

    fn pn_throughput(&self, powers: &PowerVector, pn_link: usize) -> f64 {
        let s = sinr_db(&self.realization, powers, self.realization.pn_rx(pn_link), self.noise_dbm);
        throughput_mbps(s, &self.table, self.bandwidth_hz)
    }

    /// Relative throughput drop at `pn_link` when the CRs transmit at `cr_powers`.
    pub fn relative_throughput_change(&self, pn_link: usize, cr_powers: &[Option<f64>]) -> f64 {
        let powers = self.powers_for(cr_powers);
        relative_change(self.baseline_throughput[pn_link], self.pn_throughput(&powers, pn_link))
    }

    fn evaluate(&self, joint: &[usize]) -> Evaluation {
        assert_eq!(joint.len(), self.num_crs(), "one action per CR");
        let powers = self.powers_for(&self.cr_powers(joint));
        let r = &self.realization;
        let per_cr_throughput = (0..r.num_crs())
            .map(|cr| {
                let s = sinr_db(r, &powers, r.cr_rx(cr), self.noise_dbm);
                throughput_mbps(s, &self.table, self.bandwidth_hz)
            })
            .collect();
        let pn_rel_change: Vec<f64> = self
            .nearest
            .iter()
            .map(|&link| relative_change(self.baseline_throughput[link], self.pn_throughput(&powers, link)))
            .collect();
        let state = if pn_rel_change.iter().all(|&c| c <= self.underlay_limit) { EnvState::S0 } else { EnvState::S1 };
        Evaluation { state, per_cr_throughput, pn_rel_change }
    }

    /// Applies a joint action. The outcome depends only on the joint action.
    pub fn step(&self, joint: &[usize], mode: RewardMode) -> StepOutcome {
        assert!(joint.iter().all(|&a| a < self.actions.len()), "action index out of range");
        let owned;
        let eval = match &self.cache {
            Some(table) => &table[self.encode(joint)],
            None => {
                owned = self.evaluate(joint);
                &owned
            }
        };
        StepOutcome {
            state: eval.state,
            sn_sum_throughput: eval.per_cr_throughput.iter().sum(),
            per_cr_reward: rewards(eval.state, &eval.per_cr_throughput, mode),
            per_cr_throughput: eval.per_cr_throughput.clone(),
            pn_rel_change: eval.pn_rel_change.clone(),
        }
    }

    /// Local underlay bit of one CR: whether its monitored link is within the limit.
    pub fn local_ok(&self, outcome: &StepOutcome, cr: usize) -> bool {
        outcome.pn_rel_change[cr] <= self.underlay_limit
    }
}

/// Samples realizations for `seed` until one yields a valid environment,
/// moving to a fresh topology stream after each rejection. Returns the
/// environment and the number of rejected draws.
pub fn environment_for_seed(seed: u64, scenario: &Scenario, table: &AmcTable) -> Result<(Environment, u64)> {
    const MAX_ATTEMPTS: u64 = 1_000;
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = crate::topology::topology_rng(seed, attempt);
        let realization = crate::topology::sample_with_rng(&mut rng, scenario)?;
        match Environment::new(realization, scenario, table.clone()) {
            Ok(env) => return Ok((env, attempt)),
            Err(e @ Error::InvalidRealization(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidRealization("no valid realization".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linklayer::test_support::realization_from_db;

    #[test]
    fn action_space_levels() {
        let a = ActionSpace::default();
        assert_eq!(a.len(), 14);
        assert_eq!(a.power_dbm(0), None);
        assert_eq!(a.power_dbm(1), Some(-10.0));
        assert_eq!(a.power_dbm(13), Some(20.0));
        for w in a.levels()[1..].windows(2) {
            assert!((w[1].unwrap() - w[0].unwrap() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_table() {
        assert_eq!(rewards(EnvState::S1, &[0.5, 0.9], RewardMode::Sum), vec![0.0, 0.0]);
        assert_eq!(rewards(EnvState::S1, &[0.5, 0.9], RewardMode::PerCr), vec![0.0, 0.0]);
        assert_eq!(rewards(EnvState::S0, &[0.0], RewardMode::PerCr), vec![1.0]);
        let r = rewards(EnvState::S0, &[0.5, 0.0], RewardMode::PerCr);
        assert!((r[0] - 3.1622776601683795).abs() < 1e-12);
        assert_eq!(r[1], 1.0);
        let s = rewards(EnvState::S0, &[0.25, 0.25], RewardMode::Sum);
        assert!((s[0] - 3.1622776601683795).abs() < 1e-12 && s[0] == s[1]);
    }

    #[test]
    fn relative_change_values() {
        assert_eq!(relative_change(0.7, 0.7), 0.0);
        assert!((relative_change(0.7012, 0.5530) - 0.21135).abs() < 1e-4);
        // an improvement counts as no change
        assert_eq!(relative_change(0.5, 0.6), 0.0);
        // one AMC step down from the top mode
        let t = AmcTable::lte();
        let top = t.modes()[14].spectral_efficiency * 0.18;
        let below = t.modes()[13].spectral_efficiency * 0.18;
        assert!((relative_change(top, below) - (5.5547 - 5.1152) / 5.5547).abs() < 1e-12);
    }

    /// Two APs, one CR. The CR hears AP `near` loudest.
    fn small_env(ap_to_cr: [f64; 2]) -> Environment {
        let r = realization_from_db(
            2,
            1,
            &[vec![-80.0, -130.0, -140.0], vec![-130.0, -80.0, -140.0], vec![-120.0, -150.0, -80.0]],
            &[vec![ap_to_cr[0]], vec![ap_to_cr[1]]],
        );
        Environment::new(r, &Scenario::default(), AmcTable::lte()).unwrap()
    }

    #[test]
    fn nearest_link_picks_strongest_and_breaks_ties_low() {
        assert_eq!(small_env([-90.0, -120.0]).nearest_pn_link(0), 0);
        assert_eq!(small_env([-120.0, -90.0]).nearest_pn_link(0), 1);
        let tied = small_env([-100.0, -100.0]);
        let p = &tied.baseline_allocation().powers;
        assert_eq!(p.get(0), p.get(1));
        assert_eq!(tied.nearest_pn_link(0), 0);
    }

    #[test]
    fn silent_crs_leave_pn_untouched() {
        let env = small_env([-90.0, -120.0]);
        assert_eq!(env.relative_throughput_change(0, &[None]), 0.0);
        let out = env.step(&[0], RewardMode::Sum);
        assert_eq!(out.state, EnvState::S0);
        assert_eq!(out.per_cr_reward, vec![1.0]);
        assert_eq!(out.sn_sum_throughput, 0.0);
    }

    #[test]
    fn loud_cr_violates_limit() {
        let env = small_env([-90.0, -120.0]);
        let out = env.step(&[13], RewardMode::Sum);
        // CR at 20 dBm with -120 dB to PN rx 0: -100 dBm of interference
        assert!(out.pn_rel_change[0] > 0.05, "{out:?}");
        assert_eq!(out.state, EnvState::S1);
        assert_eq!(out.per_cr_reward, vec![0.0]);
        assert_eq!(out.feasible_sum_throughput(), 0.0);
    }

    #[test]
    fn cached_and_direct_paths_agree() {
        let scenario = Scenario::default();
        let (env, _) = environment_for_seed(11, &scenario, &AmcTable::lte()).unwrap();
        for code in [0, 1, 15, 100, 195] {
            let joint = env.decode(code);
            assert_eq!(env.encode(&joint), code);
            let eval = env.evaluate(&joint);
            let out = env.step(&joint, RewardMode::Sum);
            assert_eq!(out.state, eval.state);
            assert_eq!(out.per_cr_throughput, eval.per_cr_throughput);
        }
    }

    #[test]
    fn global_state_is_and_of_local_bits() {
        let scenario = Scenario::default();
        for seed in 0..20 {
            let (env, _) = environment_for_seed(seed, &scenario, &AmcTable::lte()).unwrap();
            for code in 0..env.joint_action_count() {
                let out = env.step(&env.decode(code), RewardMode::Sum);
                let all_ok = (0..env.num_crs()).all(|cr| env.local_ok(&out, cr));
                assert_eq!(all_ok, out.state == EnvState::S0);
            }
        }
    }

    #[test]
    fn readapting_pn_is_supported() {
        let scenario = Scenario { pn_readapt_every_step: true, ..Scenario::default() };
        let (env, _) = environment_for_seed(4, &scenario, &AmcTable::lte()).unwrap();
        let out = env.step(&[0, 0], RewardMode::Sum);
        assert_eq!(out.state, EnvState::S0);
        assert!(out.pn_rel_change.iter().all(|&c| c == 0.0));
    }
}
