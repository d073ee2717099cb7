//! Command-line front end.
//!
//! Every subcommand resolves one effective [`RunConfig`] (embedded defaults,
//! then `--config`, then flags), writes it to `<out>/config.json` and puts
//! all of its other output under the same directory. Feeding that file
//! back through `--config` reproduces the invocation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::config::{RunConfig, TraceLevel};
use crate::environment::{environment_for_seed, EnvState};
use crate::error::{Error, Result};
use crate::harness::{
    aggregate, fill_oracle_cache, preset_by_name, preset_oracle, run_metrics, run_one, seed_range, table1_presets,
    ExperimentPreset, RunContext, Summary,
};
use crate::neuralnet::{gradient_check, QNetwork, TrainingSample};
use crate::oracle::OracleCache;
use crate::output;

/// Largest finite-difference relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const CONFIG_FILE: &str = "config.json";
const ORACLE_CACHE_FILE: &str = "oracle_cache.json";

#[derive(Debug, Parser)]
#[command(name = "dsa-marl", version, about = "Distributed deep Q-learning for underlay spectrum access")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON file overriding the embedded defaults field by field.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// First run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo runs (consecutive seeds).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one preset over `runs` seeds and write summary.csv and runs.csv.
    Run {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run every row of the results table.
    Table1,
    /// Run one seed and write per-step Q-values (qtrace.csv).
    Trace {
        #[arg(long)]
        preset: Option<String>,
        /// `full` additionally writes per-step environment records (steps.csv).
        #[arg(long, value_enum)]
        level: Option<TraceArg>,
    },
    /// Exhaustive search for the best joint action of one seed.
    Oracle {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Compare back-propagated and finite-difference gradients.
    Gradcheck {
        /// Random networks to check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Print the embedded default configuration.
    DefaultConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceArg {
    Q,
    Full,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Command::DefaultConfig = cli.command {
        println!("{}", RunConfig::default_json());
        return Ok(());
    }
    let mut cfg = resolve_config(&cli.common)?;
    match &cli.command {
        Command::Run { preset } | Command::Trace { preset, .. } | Command::Oracle { preset } => {
            if let Some(p) = preset {
                cfg.preset = p.clone();
            }
        }
        _ => {}
    }
    if let Command::Trace { level, .. } = &cli.command {
        cfg.trace = match level {
            Some(TraceArg::Q) => TraceLevel::Q,
            Some(TraceArg::Full) => TraceLevel::Full,
            None if cfg.trace == TraceLevel::Off => TraceLevel::Q,
            None => cfg.trace,
        };
    }
    // fail on a bad preset name before anything is written
    if !matches!(cli.command, Command::Table1 | Command::Gradcheck { .. }) {
        preset_by_name(&cfg.preset)?;
    }

    let out = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join(CONFIG_FILE), serde_json::to_string_pretty(&cfg)?)?;

    match cli.command {
        Command::Run { .. } => {
            let preset = preset_by_name(&cfg.preset)?;
            let summary = run_presets(&cfg, &out, &[preset])?;
            print_summary(&summary);
        }
        Command::Table1 => {
            let summary = run_presets(&cfg, &out, &table1_presets())?;
            print_summary(&summary);
        }
        Command::Trace { .. } => trace(&cfg, &out)?,
        Command::Oracle { .. } => oracle(&cfg, &out)?,
        Command::Gradcheck { trials } => {
            let worst = gradcheck(cfg.seed, trials);
            println!("max relative error over {trials} networks: {worst:.3e}");
            if !(worst < GRADCHECK_TOLERANCE) {
                return Err(Error::Config(format!("gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:e}")));
            }
        }
        Command::DefaultConfig => unreachable!("handled above"),
    }
    Ok(())
}

/// Defaults, then the `--config` file, then command-line flags.
fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut value: Value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("malformed JSON in {}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let Value::Object(map) = &mut value else {
        return Err(Error::Config("config file must hold a JSON object".into()));
    };
    if let Some(seed) = args.seed {
        map.insert("seed".into(), seed.into());
    }
    if let Some(runs) = args.runs {
        map.insert("runs".into(), runs.into());
    }
    if let Some(out) = &args.out {
        map.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    let cfg = RunConfig::from_overrides(&value)?;
    if cfg.runs == 0 {
        return Err(Error::Config("`runs` must be positive".into()));
    }
    Ok(cfg)
}

fn context(cfg: &RunConfig) -> Result<RunContext> {
    Ok(RunContext::new(cfg.scenario.clone(), cfg.hyper.clone())?.with_trace(cfg.trace))
}

fn run_presets(cfg: &RunConfig, out: &Path, presets: &[ExperimentPreset]) -> Result<Vec<Summary>> {
    let mut ctx = context(cfg)?.with_trace(TraceLevel::Off);
    let seeds = seed_range(cfg.seed, cfg.runs);
    let cache_path = out.join(ORACLE_CACHE_FILE);
    let mut cache = OracleCache::load_or_new(&cache_path, &ctx.fingerprint())?;
    for preset in presets {
        fill_oracle_cache(&mut cache, &seeds, preset, &ctx)?;
    }
    cache.save(&cache_path)?;
    ctx.oracle_cache = Some(Arc::new(cache));

    let mut summaries = Vec::with_capacity(presets.len());
    let mut all_runs = Vec::with_capacity(presets.len());
    for preset in presets {
        let runs = run_metrics(&seeds, preset, &ctx)?;
        summaries.push(aggregate(preset, &runs)?);
        all_runs.push((preset.name.clone(), runs));
    }
    output::write_summary(&out.join("summary.csv"), &summaries)?;
    output::write_runs_multi(&out.join("runs.csv"), &all_runs)?;
    Ok(summaries)
}

fn print_summary(rows: &[Summary]) {
    println!("{:<32} {:>14} {:>12} {:>12} {:>6}", "preset", "mean_rel_diff", "mean_phases", "pct_optimal", "runs");
    for s in rows {
        println!(
            "{:<32} {:>14.4} {:>12.2} {:>12.1} {:>6}",
            s.label, s.mean_rel_diff, s.mean_phases, s.pct_optimal, s.runs
        );
    }
}

fn trace(cfg: &RunConfig, out: &Path) -> Result<()> {
    let preset = preset_by_name(&cfg.preset)?;
    let ctx = context(cfg)?;
    let run = run_one(cfg.seed, &preset, &ctx)?;
    output::write_qtrace(&out.join("qtrace.csv"), &run.qtrace)?;
    if cfg.trace == TraceLevel::Full {
        output::write_steps(&out.join("steps.csv"), &run.steps)?;
    }
    output::write_runs(&out.join("runs.csv"), &preset.name, std::slice::from_ref(&run.metrics))?;
    let m = &run.metrics;
    println!(
        "seed {}: learned {:?} ({:.4} Mbps), oracle {:?} ({:.4} Mbps), converged at phase {}",
        m.seed,
        m.learned_joint_action,
        m.learned_sum_throughput,
        m.oracle_joint_action,
        m.oracle_sum_throughput,
        m.phases_to_converge
    );
    Ok(())
}

fn oracle(cfg: &RunConfig, out: &Path) -> Result<()> {
    let preset = preset_by_name(&cfg.preset)?;
    let ctx = context(cfg)?;
    let (env, _) = environment_for_seed(cfg.seed, &ctx.scenario, &ctx.table)?;
    let result = preset_oracle(&env, &preset)?;
    let mut cache = OracleCache::new(ctx.fingerprint());
    cache.insert(cfg.seed, &preset.oracle_tag(), result.clone());
    cache.save(&out.join(ORACLE_CACHE_FILE))?;
    let powers: Vec<String> = result
        .best_joint_action
        .iter()
        .map(|&a| match env.actions().power_dbm(a) {
            Some(p) => format!("{p} dBm"),
            None => "off".into(),
        })
        .collect();
    println!(
        "seed {}: best joint action {:?} [{}], sum throughput {:.6} Mbps, {} of {} joint actions feasible",
        cfg.seed,
        result.best_joint_action,
        powers.join(", "),
        result.best_sum_throughput,
        result.feasible_count,
        env.joint_action_count()
    );
    Ok(())
}

/// Worst relative gradient error over `trials` random networks, each with a
/// random mini-batch. Weights are drawn wider than the default
/// initialization so that hidden units sit in every activation regime.
pub fn gradcheck(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = QNetwork::standard_sizes(14);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let net = QNetwork::random_uniform(&sizes, -1.0, 1.0, &mut rng);
        let batch_len = rng.gen_range(1..=16);
        let batch: Vec<TrainingSample> = (0..batch_len)
            .map(|_| TrainingSample {
                state: EnvState::from_index(rng.gen_range(0..2)),
                next_state: EnvState::from_index(rng.gen_range(0..2)),
                action: rng.gen_range(0..14),
                target_q: rng.gen_range(-5.0..5.0),
            })
            .collect();
        worst = worst.max(gradient_check(&net, &batch, 1e-5));
    }
    worst
}
