//! Centralized exhaustive search over all joint CR power choices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvState, Environment, RewardMode};
use crate::error::{Error, Result};

/// Largest CR count the oracle will enumerate (14^4 joint actions).
pub const MAX_ORACLE_CRS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_joint_action: Vec<usize>,
    /// Mbps
    pub best_sum_throughput: f64,
    /// Joint actions that keep the environment in S0.
    pub feasible_count: usize,
}

/// Best feasible joint action over the full action space.
pub fn exhaustive_search(env: &Environment) -> Result<OracleResult> {
    let all: Vec<Vec<usize>> = vec![(0..env.actions().len()).collect(); env.num_crs()];
    exhaustive_search_over(env, &all)
}

/// Best feasible joint action when CR `i` may only use `allowed[i]`.
///
/// Joint actions are visited in lexicographic order and only a strictly
/// larger sum replaces the incumbent, so ties resolve to the
/// lexicographically smallest joint action.
pub fn exhaustive_search_over(env: &Environment, allowed: &[Vec<usize>]) -> Result<OracleResult> {
    let n = env.num_crs();
    if n > MAX_ORACLE_CRS {
        return Err(Error::OracleTooLarge(n));
    }
    assert_eq!(allowed.len(), n, "one action set per CR");
    assert!(allowed.iter().all(|s| !s.is_empty()), "empty action set");
    let mut sets: Vec<Vec<usize>> = allowed.to_vec();
    for s in &mut sets {
        s.sort_unstable();
        s.dedup();
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut feasible_count = 0;
    let mut digits = vec![0usize; n];
    loop {
        let joint: Vec<usize> = digits.iter().zip(&sets).map(|(&d, s)| s[d]).collect();
        let out = env.step(&joint, RewardMode::Sum);
        if out.state == EnvState::S0 {
            feasible_count += 1;
            if best.as_ref().is_none_or(|(_, v)| out.sn_sum_throughput > *v) {
                best = Some((joint, out.sn_sum_throughput));
            }
        }
        // odometer, last CR fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (best_joint_action, best_sum_throughput) = best.unwrap_or_else(|| (vec![0; n], 0.0));
                return Ok(OracleResult { best_joint_action, best_sum_throughput, feasible_count });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < sets[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Oracle results keyed by run seed, stored as a JSON sidecar. The
/// fingerprint ties the cache to the scenario that produced it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleCache {
    pub fingerprint: String,
    pub entries: BTreeMap<String, OracleResult>,
}

impl OracleCache {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self { fingerprint: fingerprint.into(), entries: BTreeMap::new() }
    }

    fn key(seed: u64, tag: &str) -> String {
        if tag.is_empty() {
            seed.to_string()
        } else {
            format!("{seed}/{tag}")
        }
    }

    pub fn get(&self, seed: u64, tag: &str) -> Option<&OracleResult> {
        self.entries.get(&Self::key(seed, tag))
    }

    pub fn insert(&mut self, seed: u64, tag: &str, result: OracleResult) {
        self.entries.insert(Self::key(seed, tag), result);
    }

    /// Loads `path` if it exists and matches `fingerprint`; otherwise starts empty.
    pub fn load_or_new(path: &Path, fingerprint: &str) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new(fingerprint));
        }
        let cache: OracleCache = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if cache.fingerprint == fingerprint {
            Ok(cache)
        } else {
            Ok(Self::new(fingerprint))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
