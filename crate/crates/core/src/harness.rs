//! Monte Carlo experiment runner.
//!
//! A run samples one realization from its seed, lets the agents learn in
//! lockstep rounds (gather actions, step the environment, deliver rewards)
//! for `phases x phase_len` steps, then scores the final S0 joint action
//! against the exhaustive-search optimum. Runs depend only on their seed,
//! so a preset's runs are spread over a thread pool.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Hyperparameters, Policy, ProposedAgent, StandardDqlAgent, TabularAgent, Transition};
use crate::config::{Scenario, TraceLevel};
use crate::environment::{environment_for_seed, EnvState, Environment, RewardMode};
use crate::error::{Error, Result};
use crate::linklayer::AmcTable;
use crate::oracle::{exhaustive_search_over, OracleCache, OracleResult};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DSA_MARL_THREADS";

/// Sum-throughput tolerance under which two joint actions count as equally good.
pub const OPTIMAL_TOLERANCE_MBPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    Proposed,
    StandardDql,
    Tabular,
}

/// Hyperparameters a preset changes relative to the base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperOverrides {
    pub target_refresh: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    /// Identifier used on the command line.
    pub name: String,
    /// Human-readable row label.
    pub label: String,
    pub variant: AgentVariant,
    pub reward_mode: RewardMode,
    pub overrides: HyperOverrides,
    /// CRs that never transmit and do not learn.
    pub frozen_off: Vec<usize>,
}

impl ExperimentPreset {
    fn new(name: &str, label: &str, variant: AgentVariant) -> Self {
        Self {
            name: name.into(),
            label: label.into(),
            variant,
            reward_mode: RewardMode::Sum,
            overrides: HyperOverrides::default(),
            frozen_off: Vec::new(),
        }
    }

    fn refresh(mut self, c: usize) -> Self {
        self.overrides.target_refresh = Some(c);
        self
    }

    fn batch(mut self, b: usize) -> Self {
        self.overrides.batch_size = Some(b);
        self
    }

    pub fn hyper(&self, base: &Hyperparameters) -> Hyperparameters {
        let mut h = base.clone();
        if let Some(c) = self.overrides.target_refresh {
            h.target_refresh = c;
        }
        if let Some(b) = self.overrides.batch_size {
            h.batch_size = b;
        }
        h
    }

    /// Cache tag of the oracle this preset is scored against.
    pub fn oracle_tag(&self) -> String {
        if self.frozen_off.is_empty() {
            String::new()
        } else {
            let ids: Vec<String> = self.frozen_off.iter().map(|i| i.to_string()).collect();
            format!("off={}", ids.join(","))
        }
    }
}

/// The eight experiment rows of the results table, in order.
pub fn table1_presets() -> Vec<ExperimentPreset> {
    use AgentVariant::*;
    let per_cr = ExperimentPreset {
        reward_mode: RewardMode::PerCr,
        ..ExperimentPreset::new("per_cr_reward", "Uncoordinated per-CR reward", Proposed)
    };
    vec![
        ExperimentPreset::new("default", "Default setting", Proposed),
        ExperimentPreset::new("std_dql_c1", "Standard DQL c=1", StandardDql).refresh(1),
        ExperimentPreset::new("std_dql_c60", "Standard DQL c=60", StandardDql).refresh(60),
        ExperimentPreset::new("c1", "c=1", Proposed).refresh(1),
        ExperimentPreset::new("c60", "c=60", Proposed).refresh(60),
        ExperimentPreset::new("batch120", "Mini batch size = 120", Proposed).batch(120),
        ExperimentPreset::new("batch30", "Mini batch size = 30", Proposed).batch(30),
        per_cr,
    ]
}

/// Every named preset: the table rows plus the tabular and single-agent variants.
pub fn all_presets() -> Vec<ExperimentPreset> {
    let mut all = table1_presets();
    all.push(ExperimentPreset::new("tabular", "Tabular Q-learning", AgentVariant::Tabular));
    all.push(ExperimentPreset {
        frozen_off: vec![1],
        ..ExperimentPreset::new("single_agent", "Single agent (CR 2 off)", AgentVariant::Proposed)
    });
    all
}

pub fn preset_by_name(name: &str) -> Result<ExperimentPreset> {
    all_presets().into_iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownPreset(name.into()))
}

/// Shared inputs of every run of an experiment.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub scenario: Scenario,
    pub hyper: Hyperparameters,
    pub table: AmcTable,
    pub trace: TraceLevel,
    pub oracle_cache: Option<Arc<OracleCache>>,
}

impl RunContext {
    pub fn new(scenario: Scenario, hyper: Hyperparameters) -> Result<Self> {
        let table = AmcTable::for_scenario(&scenario)?;
        Ok(Self { scenario, hyper, table, trace: TraceLevel::Off, oracle_cache: None })
    }

    pub fn with_trace(mut self, trace: TraceLevel) -> Self {
        self.trace = trace;
        self
    }

    /// Identifies the scenario and AMC table an oracle cache belongs to.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&(&self.scenario, self.table.modes())).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub rel_diff: f64,
    pub found_optimal: bool,
    pub phases_to_converge: usize,
    pub learned_joint_action: Vec<usize>,
    pub oracle_joint_action: Vec<usize>,
    /// Mbps, zero when the learned joint action violates the underlay limit.
    pub learned_sum_throughput: f64,
    pub oracle_sum_throughput: f64,
    /// Realizations rejected before this run's one was accepted.
    pub resamples: u64,
}

/// Q-values of one agent in one state after a learning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTraceRecord {
    pub agent: usize,
    pub step: usize,
    pub phase: usize,
    pub state: EnvState,
    pub q: Vec<f64>,
    pub delta: f64,
    pub policy_action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: usize,
    pub joint_action: Vec<usize>,
    pub state: EnvState,
    pub rewards: Vec<f64>,
    pub throughputs: Vec<f64>,
    pub rel_changes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// `policy_log[k][i]`: policy of agent `i` after phase `k + 1`.
    pub policy_log: Vec<Vec<Policy>>,
    pub qtrace: Vec<QTraceRecord>,
    pub steps: Vec<StepRecord>,
}

/// Smallest 1-based phase from which every agent's policy never changes
/// again; the number of phases when the last phase still changed. Zero for
/// an empty log.
pub fn detect_convergence(policy_log: &[Vec<Policy>]) -> usize {
    let Some(last) = policy_log.last() else {
        return 0;
    };
    let mut k = policy_log.len();
    while k > 1 && policy_log[k - 2] == *last {
        k -= 1;
    }
    k
}

/// Per-agent learning RNG.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1_000_000 + agent as u64);
    rng
}

fn make_agent(variant: AgentVariant, actions: usize, hyper: &Hyperparameters, rng: &mut ChaCha8Rng) -> Box<dyn Agent> {
    match variant {
        AgentVariant::Proposed => Box::new(ProposedAgent::init(actions, hyper.clone(), rng)),
        AgentVariant::StandardDql => Box::new(StandardDqlAgent::init(actions, hyper.clone(), rng)),
        AgentVariant::Tabular => Box::new(TabularAgent::init(actions, hyper.clone(), rng)),
    }
}

/// Oracle for `preset` on `env`, with the preset's frozen CRs held OFF.
pub fn preset_oracle(env: &Environment, preset: &ExperimentPreset) -> Result<OracleResult> {
    let allowed: Vec<Vec<usize>> = (0..env.num_crs())
        .map(|cr| if preset.frozen_off.contains(&cr) { vec![0] } else { (0..env.actions().len()).collect() })
        .collect();
    exhaustive_search_over(env, &allowed)
}

/// One full learning run.
pub fn run_one(seed: u64, preset: &ExperimentPreset, ctx: &RunContext) -> Result<RunOutput> {
    let hyper = preset.hyper(&ctx.hyper);
    hyper.validate()?;
    let (env, resamples) = environment_for_seed(seed, &ctx.scenario, &ctx.table)?;
    if let Some(&bad) = preset.frozen_off.iter().find(|&&i| i >= env.num_crs()) {
        return Err(Error::Config(format!("frozen CR {bad} does not exist")));
    }
    let oracle = match ctx.oracle_cache.as_ref().and_then(|c| c.get(seed, &preset.oracle_tag())) {
        Some(hit) => hit.clone(),
        None => preset_oracle(&env, preset)?,
    };

    let n = env.num_crs();
    let actions = env.actions().len();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| agent_rng(seed, i)).collect();
    let mut agents: Vec<Option<Box<dyn Agent>>> = (0..n)
        .map(|i| (!preset.frozen_off.contains(&i)).then(|| make_agent(preset.variant, actions, &hyper, &mut rngs[i])))
        .collect();

    let trace_q = ctx.trace != TraceLevel::Off;
    let trace_steps = ctx.trace == TraceLevel::Full;
    let mut qtrace = Vec::new();
    let mut steps = Vec::new();
    let mut policy_log = Vec::with_capacity(hyper.phases);
    let mut state = EnvState::S0;
    let mut joint = vec![0usize; n];
    let mut step = 0;

    for phase in 1..=hyper.phases {
        for _ in 0..hyper.phase_len {
            for (i, agent) in agents.iter_mut().enumerate() {
                joint[i] = match agent {
                    Some(a) => a.select_action(state, &mut rngs[i]),
                    None => 0,
                };
            }
            let out = env.step(&joint, preset.reward_mode);
            step += 1;
            for (i, agent) in agents.iter_mut().enumerate() {
                if let Some(a) = agent {
                    let t = Transition { state, action: joint[i], reward: out.per_cr_reward[i], next_state: out.state };
                    a.observe(&t, &mut rngs[i]);
                    if trace_q {
                        let delta = a.tolerance();
                        let policy = a.policy();
                        for x in EnvState::ALL {
                            qtrace.push(QTraceRecord {
                                agent: i,
                                step,
                                phase,
                                state: x,
                                q: a.q_values(x),
                                delta,
                                policy_action: policy.action(x),
                            });
                        }
                    }
                }
            }
            if trace_steps {
                steps.push(StepRecord {
                    step,
                    phase,
                    joint_action: joint.clone(),
                    state: out.state,
                    rewards: out.per_cr_reward.clone(),
                    throughputs: out.per_cr_throughput.clone(),
                    rel_changes: out.pn_rel_change.clone(),
                });
            }
            state = out.state;
        }
        let policies = agents
            .iter_mut()
            .enumerate()
            .map(|(i, agent)| match agent {
                Some(a) => a.end_phase(&mut rngs[i]),
                None => Policy::constant(0),
            })
            .collect();
        policy_log.push(policies);
    }

    let learned: Vec<usize> =
        agents.iter().map(|a| a.as_ref().map_or(0, |a| a.policy().action(EnvState::S0))).collect();
    let eval = env.step(&learned, preset.reward_mode);
    let learned_sum = eval.feasible_sum_throughput();
    let optimum = oracle.best_sum_throughput;
    let gap = (optimum - learned_sum).abs();
    let rel_diff = if optimum > 0.0 { gap / optimum } else { 0.0 };
    let found_optimal = eval.state == EnvState::S0 && gap <= OPTIMAL_TOLERANCE_MBPS;
    let phases_to_converge = match preset.variant {
        AgentVariant::StandardDql => hyper.phases,
        _ => detect_convergence(&policy_log),
    };

    Ok(RunOutput {
        metrics: RunMetrics {
            seed,
            rel_diff,
            found_optimal,
            phases_to_converge,
            learned_joint_action: learned,
            oracle_joint_action: oracle.best_joint_action,
            learned_sum_throughput: learned_sum,
            oracle_sum_throughput: optimum,
            resamples,
        },
        policy_log,
        qtrace,
        steps,
    })
}

/// Worker count: `DSA_MARL_THREADS` when set to a positive integer, else all cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every seed in parallel; results come back in seed order.
pub fn run_many(seeds: &[u64], preset: &ExperimentPreset, ctx: &RunContext) -> Result<Vec<RunOutput>> {
    pool()?.install(|| seeds.par_iter().map(|&s| run_one(s, preset, ctx)).collect())
}

/// Like [`run_many`] but keeps only the metrics.
pub fn run_metrics(seeds: &[u64], preset: &ExperimentPreset, ctx: &RunContext) -> Result<Vec<RunMetrics>> {
    pool()?.install(|| seeds.par_iter().map(|&s| run_one(s, preset, ctx).map(|o| o.metrics)).collect())
}

/// Fills `cache` with the oracle of every seed for `preset`, computing missing entries in parallel.
pub fn fill_oracle_cache(
    cache: &mut OracleCache,
    seeds: &[u64],
    preset: &ExperimentPreset,
    ctx: &RunContext,
) -> Result<()> {
    let tag = preset.oracle_tag();
    let missing: Vec<u64> = seeds.iter().copied().filter(|&s| cache.get(s, &tag).is_none()).collect();
    let computed: Vec<(u64, OracleResult)> = pool()?.install(|| {
        missing
            .par_iter()
            .map(|&s| {
                let (env, _) = environment_for_seed(s, &ctx.scenario, &ctx.table)?;
                Ok((s, preset_oracle(&env, preset)?))
            })
            .collect::<Result<_>>()
    })?;
    for (s, r) in computed {
        cache.insert(s, &tag, r);
    }
    Ok(())
}

/// `runs` consecutive seeds starting at `first`.
pub fn seed_range(first: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| first + i).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: String,
    pub label: String,
    pub mean_rel_diff: f64,
    pub mean_phases: f64,
    pub pct_optimal: f64,
    pub runs: usize,
}

/// Mean relative difference, mean phases to converge and percentage of
/// runs that found the optimum.
pub fn aggregate(preset: &ExperimentPreset, runs: &[RunMetrics]) -> Result<Summary> {
    if runs.is_empty() {
        return Err(Error::Config("cannot aggregate zero runs".into()));
    }
    let n = runs.len() as f64;
    Ok(Summary {
        preset: preset.name.clone(),
        label: preset.label.clone(),
        mean_rel_diff: runs.iter().map(|r| r.rel_diff).sum::<f64>() / n,
        mean_phases: runs.iter().map(|r| r.phases_to_converge as f64).sum::<f64>() / n,
        pct_optimal: 100.0 * runs.iter().filter(|r| r.found_optimal).count() as f64 / n,
        runs: runs.len(),
    })
}

/// Mean over learning agents and non-policy actions of the standard
/// deviation of `Q(S0, a)` during the final `phase_len` steps.
pub fn final_phase_q_std(output: &RunOutput, phase_len: usize) -> Option<f64> {
    let last_step = output.qtrace.iter().map(|r| r.step).max()?;
    let first_step = last_step.saturating_sub(phase_len) + 1;
    let mut agents: Vec<usize> = output.qtrace.iter().map(|r| r.agent).collect();
    agents.sort_unstable();
    agents.dedup();
    let mut stds = Vec::new();
    for agent in agents {
        let rows: Vec<&QTraceRecord> = output
            .qtrace
            .iter()
            .filter(|r| r.agent == agent && r.state == EnvState::S0 && r.step >= first_step)
            .collect();
        let Some(last) = rows.last() else { continue };
        let policy_action = last.policy_action;
        let n = rows.len() as f64;
        for a in (0..last.q.len()).filter(|&a| a != policy_action) {
            let mean = rows.iter().map(|r| r.q[a]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.q[a] - mean).powi(2)).sum::<f64>() / n;
            stds.push(var.sqrt());
        }
    }
    (!stds.is_empty()).then(|| stds.iter().sum::<f64>() / stds.len() as f64)
}
