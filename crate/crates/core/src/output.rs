//! Plot-ready CSV files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{QTraceRecord, RunMetrics, StepRecord, Summary};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// `summary.csv`: preset, label, mean_rel_diff, mean_phases, pct_optimal, runs.
pub fn write_summary(path: &Path, rows: &[Summary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["preset", "label", "mean_rel_diff", "mean_phases", "pct_optimal", "runs"]).map_err(csv_err)?;
    for s in rows {
        w.write_record([
            s.preset.clone(),
            s.label.clone(),
            s.mean_rel_diff.to_string(),
            s.mean_phases.to_string(),
            s.pct_optimal.to_string(),
            s.runs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn joined(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// `runs.csv`: seed, rel_diff, found_optimal, phases, plus the joint actions and throughputs.
pub fn write_runs(path: &Path, preset: &str, runs: &[RunMetrics]) -> Result<()> {
    write_runs_multi(path, &[(preset.to_string(), runs.to_vec())])
}

/// `runs.csv` for several presets, one block of rows per preset.
pub fn write_runs_multi(path: &Path, groups: &[(String, Vec<RunMetrics>)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "preset",
        "seed",
        "rel_diff",
        "found_optimal",
        "phases",
        "learned_action",
        "oracle_action",
        "learned_mbps",
        "oracle_mbps",
    ])
    .map_err(csv_err)?;
    for (preset, runs) in groups {
        for r in runs {
            w.write_record([
                preset.clone(),
                r.seed.to_string(),
                r.rel_diff.to_string(),
                r.found_optimal.to_string(),
                r.phases_to_converge.to_string(),
                joined(&r.learned_joint_action),
                joined(&r.oracle_joint_action),
                r.learned_sum_throughput.to_string(),
                r.oracle_sum_throughput.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `qtrace.csv`: agent, step, phase, state, q_0..q_{A-1}, delta, policy_action.
pub fn write_qtrace(path: &Path, records: &[QTraceRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let width = records.first().map_or(14, |r| r.q.len());
    let mut header: Vec<String> = ["agent", "step", "phase", "state"].map(String::from).to_vec();
    header.extend((0..width).map(|a| format!("q_{a}")));
    header.push("delta".into());
    header.push("policy_action".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.agent.to_string(), r.step.to_string(), r.phase.to_string(), r.state.to_string()];
        row.extend(r.q.iter().map(|q| q.to_string()));
        row.push(r.delta.to_string());
        row.push(r.policy_action.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `steps.csv`: step, phase, state, then per-CR action, reward, throughput and
/// monitored-link relative change.
pub fn write_steps(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let n = records.first().map_or(0, |r| r.joint_action.len());
    let mut header: Vec<String> = ["step", "phase", "state"].map(String::from).to_vec();
    for prefix in ["action", "reward", "throughput_mbps", "rel_change"] {
        header.extend((0..n).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.step.to_string(), r.phase.to_string(), r.state.to_string()];
        row.extend(r.joint_action.iter().map(|v| v.to_string()));
        row.extend(r.rewards.iter().map(|v| v.to_string()));
        row.extend(r.throughputs.iter().map(|v| v.to_string()));
        row.extend(r.rel_changes.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
