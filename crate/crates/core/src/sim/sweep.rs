//! Scaling sweeps: convergence rounds and message rates across network sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingConfig;

use super::scenario::{GossipMode, NetworkSpec};
use super::Simulation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub trials: u32,
    pub seed: u64,
    /// Fanout of the unstructured comparison run, if any.
    pub baseline_fanout: Option<usize>,
    pub max_rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub trial: u32,
    pub seed: u64,
    /// First round after which every node is converged; `None` if it never was.
    pub rounds: Option<u64>,
    pub msgs_per_round: f64,
    pub max_sent: u64,
    pub max_received: u64,
    pub baseline_rounds: Option<u64>,
    pub baseline_msgs_per_round: Option<f64>,
    pub violations: usize,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "size,trial,seed,rounds,msgs_per_round,max_sent,max_received,baseline_rounds,baseline_msgs_per_round";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<u64>| v.map_or_else(String::new, |x| x.to_string());
        format!(
            "{},{},{},{},{:.3},{},{},{},{}",
            self.size,
            self.trial,
            self.seed,
            opt(self.rounds),
            self.msgs_per_round,
            self.max_sent,
            self.max_received,
            opt(self.baseline_rounds),
            self.baseline_msgs_per_round
                .map_or_else(String::new, |x| format!("{x:.3}")),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Slope of log(rounds) against log(log2 n). `None` with fewer than two sizes.
    pub rounds_exponent_in_log_n: Option<f64>,
    /// Slope of log(msgs/round) against log(n).
    pub msgs_exponent_in_n: Option<f64>,
    pub baseline_msgs_exponent_in_n: Option<f64>,
    /// Smallest C with worst-trial rounds ≤ C·⌈log2 n⌉² at every size.
    pub fitted_c: Option<f64>,
}

/// Outcome of one run from a fresh ring until every node is converged.
pub struct TrialResult {
    pub rounds: Option<u64>,
    pub msgs_per_round: f64,
    pub max_sent: u64,
    pub max_received: u64,
    pub violations: usize,
}

pub fn run_trial(spec: NetworkSpec, max_rounds: u64) -> Result<TrialResult> {
    let mut sim = Simulation::new(spec)?;
    let mut rounds = None;
    for _ in 0..max_rounds {
        let m = sim.finish_round();
        if m.all_converged() {
            rounds = Some(m.round + 1);
            break;
        }
    }
    let ms = sim.metrics();
    let sent: Vec<u64> = ms.iter().map(|m| m.gossip_sent + m.baseline_sent).collect();
    Ok(TrialResult {
        rounds,
        msgs_per_round: sent.iter().sum::<u64>() as f64 / sent.len().max(1) as f64,
        max_sent: sent.iter().copied().max().unwrap_or(0),
        max_received: ms.iter().map(|m| m.max_received).max().unwrap_or(0),
        violations: ms.iter().map(|m| m.violations.len()).sum(),
    })
}

pub fn sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    if cfg.trials == 0 {
        return Err(Error::validation("trials", "must be at least 1"));
    }
    if cfg.sizes.is_empty() {
        return Err(Error::validation("sizes", "must name at least one size"));
    }
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(Error::validation("sizes", format!("size {n} is below 2")));
    }
    if cfg.baseline_fanout == Some(0) {
        return Err(Error::validation("baseline_fanout", "must be at least 1"));
    }
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        for trial in 0..cfg.trials {
            let seed = cfg.seed.wrapping_add(u64::from(trial));
            let spec = NetworkSpec::dense(n, seed);
            let s = run_trial(spec.clone(), cfg.max_rounds)?;
            let b = match cfg.baseline_fanout {
                Some(fanout) => Some(run_trial(
                    NetworkSpec {
                        gossip: GossipMode::Baseline { fanout },
                        ..spec
                    },
                    cfg.max_rounds,
                )?),
                None => None,
            };
            rows.push(SweepRow {
                size: n,
                trial,
                seed,
                rounds: s.rounds,
                msgs_per_round: s.msgs_per_round,
                max_sent: s.max_sent,
                max_received: s.max_received,
                baseline_rounds: b.as_ref().and_then(|b| b.rounds),
                baseline_msgs_per_round: b.as_ref().map(|b| b.msgs_per_round),
                violations: s.violations + b.as_ref().map_or(0, |b| b.violations),
            });
        }
    }
    Ok(summarize(rows))
}

fn mean_by_size(rows: &[SweepRow], f: impl Fn(&SweepRow) -> Option<f64>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.dedup();
    for n in sizes {
        let vals: Option<Vec<f64>> = rows.iter().filter(|r| r.size == n).map(&f).collect();
        if let Some(v) = vals.filter(|v| !v.is_empty()) {
            out.push((n, v.iter().sum::<f64>() / v.len() as f64));
        }
    }
    out
}

/// Least-squares slope of y against x. `None` for fewer than two distinct x.
pub fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.len() < 2 || sxx < 1e-12 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn log_slope(points: &[(usize, f64)], x: impl Fn(usize) -> f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(n, y)| (x(n).ln(), y.ln()))
        .collect();
    slope(&pts)
}

fn log2_ceil(n: usize) -> f64 {
    f64::from(RingConfig::bits_for(n))
}

pub fn summarize(rows: Vec<SweepRow>) -> SweepSummary {
    let rounds = mean_by_size(&rows, |r| r.rounds.map(|x| x as f64));
    let msgs = mean_by_size(&rows, |r| Some(r.msgs_per_round));
    let base = mean_by_size(&rows, |r| r.baseline_msgs_per_round);
    let all_converged = rows.iter().all(|r| r.rounds.is_some());
    let fitted_c = all_converged
        .then(|| {
            rows.iter()
                .map(|r| r.rounds.expect("checked") as f64 / log2_ceil(r.size).powi(2))
                .fold(0.0, f64::max)
        })
        .filter(|_| !rows.is_empty());
    SweepSummary {
        rounds_exponent_in_log_n: log_slope(&rounds, log2_ceil),
        msgs_exponent_in_n: log_slope(&msgs, |n| n as f64),
        baseline_msgs_exponent_in_n: log_slope(&base, |n| n as f64),
        fitted_c,
        rows,
    }
}

pub fn write_csv<W: std::io::Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{}", SweepRow::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
