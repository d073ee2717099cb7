//! Helpers shared by the integration test targets: an independent
//! re-implementation of the link budget and of the exhaustive search, plus
//! the invariant suites the acceptance target reports on.

#![allow(dead_code)]

use dsa_marl::agents::{candidate_sets, next_policy, Policy};
use dsa_marl::config::Scenario;
use dsa_marl::environment::{environment_for_seed, EnvState, Environment, RewardMode};
use dsa_marl::linklayer::AmcTable;
use dsa_marl::oracle::exhaustive_search;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const THRESHOLDS_DB: [f64; 15] =
    [-6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0, 22.7];
pub const EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152,
    5.5547,
];
pub const BANDWIDTH_MHZ: f64 = 0.18;
pub const NOISE_MW: f64 = 1e-13; // -130 dBm

pub fn mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Mbps at `sinr_db`, by linear scan of the literal table.
pub fn tput(sinr_db: f64) -> f64 {
    let mut eff = 0.0;
    for (t, e) in THRESHOLDS_DB.iter().zip(EFFICIENCY) {
        if sinr_db >= *t {
            eff = e;
        }
    }
    eff * BANDWIDTH_MHZ
}

pub fn env(seed: u64) -> Environment {
    environment_for_seed(seed, &Scenario::default(), &AmcTable::lte()).unwrap().0
}

/// CR powers in dBm for one joint action (`None` = off): 0 is off, then
/// -10 dBm in 2.5 dB steps.
pub fn cr_dbm(action: usize) -> Option<f64> {
    (action > 0).then(|| -10.0 + 2.5 * (action - 1) as f64)
}

/// Everything the brute force needs, extracted from the environment's
/// realization and baseline PN powers.
pub struct Budget {
    /// `gain[tx][rx]`, linear.
    pub gain: Vec<Vec<f64>>,
    pub aps: usize,
    pub active: Vec<usize>,
    pub crs: usize,
    /// Baseline AP powers in mW (0 for inactive APs).
    pub ap_mw: Vec<f64>,
    /// Received power from each AP at each CR transmitter, mW.
    pub ap_at_cr_tx: Vec<Vec<f64>>,
}

impl Budget {
    pub fn from_env(env: &Environment) -> Self {
        let r = env.realization();
        let aps = r.ap_positions.len();
        let ap_mw: Vec<f64> = (0..aps).map(|a| env.baseline_allocation().powers.get(a).map_or(0.0, mw)).collect();
        let ap_at_cr_tx = (0..aps)
            .map(|a| (0..r.cr_tx_positions.len()).map(|c| ap_mw[a] * r.ap_to_cr_tx_gain[a][c]).collect())
            .collect();
        Self {
            gain: r.gain.clone(),
            aps,
            active: r.active_aps.clone(),
            crs: r.cr_tx_positions.len(),
            ap_mw,
            ap_at_cr_tx,
        }
    }

    fn tx_mw(&self, cr_mw: &[f64]) -> Vec<f64> {
        self.ap_mw.iter().chain(cr_mw).copied().collect()
    }

    /// SINR in dB at receiver `rx` whose desired transmitter is `desired`.
    pub fn sinr_db(&self, cr_mw: &[f64], rx: usize, desired: usize) -> f64 {
        let p = self.tx_mw(cr_mw);
        let mut interference = NOISE_MW;
        for (tx, &pt) in p.iter().enumerate() {
            if tx != desired {
                interference += pt * self.gain[tx][rx];
            }
        }
        let s = p[desired] * self.gain[desired][rx] / interference;
        if s > 0.0 {
            10.0 * s.log10()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn pn_tput(&self, cr_mw: &[f64], link: usize) -> f64 {
        tput(self.sinr_db(cr_mw, link, self.active[link]))
    }

    pub fn cr_tput(&self, cr_mw: &[f64], cr: usize) -> f64 {
        tput(self.sinr_db(cr_mw, self.active.len() + cr, self.aps + cr))
    }

    /// Link whose AP arrives strongest at the CR transmitter, lowest index on ties.
    pub fn nearest(&self, cr: usize) -> usize {
        let mut best = 0;
        for link in 1..self.active.len() {
            if self.ap_at_cr_tx[self.active[link]][cr] > self.ap_at_cr_tx[self.active[best]][cr] {
                best = link;
            }
        }
        best
    }

    pub fn feasible(&self, cr_mw: &[f64]) -> bool {
        let silent = vec![0.0; self.crs];
        (0..self.crs).all(|cr| {
            let link = self.nearest(cr);
            let base = self.pn_tput(&silent, link);
            let now = self.pn_tput(cr_mw, link);
            ((base - now) / base).max(0.0) <= 0.05
        })
    }
}

/// Independent exhaustive search over 14^N joint actions (reverse
/// enumeration order); returns the best sum throughput and every joint
/// action attaining it.
pub fn brute_force(env: &Environment) -> (f64, Vec<Vec<usize>>) {
    let b = Budget::from_env(env);
    let n = b.crs;
    let total = 14usize.pow(n as u32);
    let mut best = 0.0;
    let mut arg: Vec<Vec<usize>> = Vec::new();
    for code in (0..total).rev() {
        let joint: Vec<usize> = (0..n).map(|i| (code / 14usize.pow(i as u32)) % 14).collect();
        let cr_mw: Vec<f64> = joint.iter().map(|&a| cr_dbm(a).map_or(0.0, mw)).collect();
        if !b.feasible(&cr_mw) {
            continue;
        }
        let sum: f64 = (0..n).map(|cr| b.cr_tput(&cr_mw, cr)).sum();
        if sum > best + 1e-12 {
            best = sum;
            arg = vec![joint];
        } else if (sum - best).abs() <= 1e-12 {
            arg.push(joint);
        }
    }
    (best, arg)
}

/// Seeds in `first..first + count` where the library's exhaustive search
/// disagrees with [`brute_force`]: on the optimal value, on the set of joint
/// actions attaining it, or on its pick not being one of them. The two
/// sides round the 0.18 MHz bandwidth differently, so values are compared to
/// 1e-12.
pub fn oracle_mismatches(count: u64, first: u64) -> Vec<u64> {
    let mut mismatches = Vec::new();
    for seed in first..first + count {
        let e = env(seed);
        let ours = exhaustive_search(&e).unwrap();
        let (best, mut argmaxes) = brute_force(&e);
        argmaxes.sort();
        let mut attaining: Vec<Vec<usize>> = (0..e.joint_action_count())
            .map(|code| e.decode(code))
            .filter(|joint| {
                let out = e.step(joint, RewardMode::Sum);
                out.state == EnvState::S0 && (out.sn_sum_throughput - ours.best_sum_throughput).abs() <= 1e-12
            })
            .collect();
        attaining.sort();
        if (ours.best_sum_throughput - best).abs() > 1e-12
            || attaining != argmaxes
            || !argmaxes.contains(&ours.best_joint_action)
        {
            mismatches.push(seed);
        }
    }
    mismatches
}

// ---------------------------------------------------------------------------
// Invariant suites. Each returns the number of cases checked or a
// description of the first violation.

/// Raising one CR's power (other CR fixed) never lowers the relative
/// throughput change at any PN link.
pub fn monotone_hazard(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envs: Vec<Environment> = (0..20).map(|s| env(1_000 + s)).collect();
    for case in 0..cases {
        let e = &envs[rng.gen_range(0..20)];
        let n = e.num_crs();
        let cr = rng.gen_range(0..n);
        let mut low: Vec<Option<f64>> = (0..n).map(|_| cr_dbm(rng.gen_range(0..14))).collect();
        let a = rng.gen_range(0..14);
        let b = rng.gen_range(a..14);
        low[cr] = cr_dbm(a);
        let mut high = low.clone();
        high[cr] = cr_dbm(b);
        for link in 0..e.realization().active_aps.len() {
            let before = e.relative_throughput_change(link, &low);
            let after = e.relative_throughput_change(link, &high);
            if after < before {
                return Err(format!(
                    "case {case}: CR {cr} power {a}->{b} lowered change at link {link}: {before} -> {after}"
                ));
            }
        }
    }
    Ok(cases)
}

fn random_q<R: Rng>(rng: &mut R) -> [Vec<f64>; 2] {
    let row = |rng: &mut R| -> Vec<f64> {
        // occasional exact ties
        let pool: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        (0..14).map(|_| if rng.gen_bool(0.3) { pool[rng.gen_range(0..4)] } else { rng.gen_range(-5.0..5.0) }).collect()
    };
    [row(rng), row(rng)]
}

/// Every per-state argmax is a candidate, for any δ ≥ 0; with δ = 0 and a
/// unique argmax the candidate set is exactly that action.
pub fn candidates_contain_argmax(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let q = random_q(&mut rng);
        let delta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) };
        let sets = candidate_sets(&q, delta);
        for s in 0..2 {
            let max = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let argmaxes: Vec<usize> = (0..14).filter(|&a| q[s][a] == max).collect();
            if let Some(missing) = argmaxes.iter().find(|a| !sets[s].contains(a)) {
                return Err(format!("case {case}: argmax {missing} of state {s} not a candidate"));
            }
            if delta == 0.0 && argmaxes.len() == 1 && sets[s] != argmaxes {
                return Err(format!("case {case}: delta 0 set {:?} != {:?}", sets[s], argmaxes));
            }
        }
    }
    Ok(cases)
}

/// The policy after a phase is the current one or a member of the candidate set.
pub fn end_phase_membership(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let q = random_q(&mut rng);
        let delta = rng.gen_range(0.0..2.0);
        let current = Policy::new(rng.gen_range(0..14), rng.gen_range(0..14));
        let lambda = rng.gen_range(0.0..1.0);
        let next = next_policy(current, &q, delta, lambda, &mut rng);
        let sets = candidate_sets(&q, delta);
        let is_candidate = sets[0].contains(&next.action(EnvState::S0)) && sets[1].contains(&next.action(EnvState::S1));
        if next != current && !is_candidate {
            return Err(format!("case {case}: {next:?} neither current nor candidate"));
        }
    }
    Ok(cases)
}

/// Reward table: S1 pays 0, S0 pays 10^T (per CR) or 10^ΣT (sum).
pub fn reward_table(seeds: u64) -> Result<usize, String> {
    let mut checked = 0;
    for seed in 0..seeds {
        let e = env(seed);
        for code in 0..e.joint_action_count() {
            let joint = e.decode(code);
            let sum = e.step(&joint, RewardMode::Sum);
            let per = e.step(&joint, RewardMode::PerCr);
            let total: f64 = sum.per_cr_throughput.iter().sum();
            for i in 0..e.num_crs() {
                let (want_sum, want_per) = match sum.state {
                    EnvState::S1 => (0.0, 0.0),
                    EnvState::S0 => (10f64.powf(total), 10f64.powf(per.per_cr_throughput[i])),
                };
                if (sum.per_cr_reward[i] - want_sum).abs() > 1e-12 || (per.per_cr_reward[i] - want_per).abs() > 1e-12 {
                    return Err(format!(
                        "seed {seed} joint {joint:?} CR {i}: rewards {:?}/{:?}",
                        sum.per_cr_reward, per.per_cr_reward
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}
