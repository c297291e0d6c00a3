use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use sgdns::sim::metrics::write_csv;
use sgdns::sim::sweep::{self, SweepConfig};
use sgdns::sim::{self, log::write_jsonl};
use sgdns::{Error, Scenario};

use crate::exit;

/// Failure of a command, already mapped to its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn env(e: anyhow::Error) -> Self {
        Failure {
            code: exit::ENVIRONMENT,
            message: format!("{e:#}"),
        }
    }

    fn validation(context: &str, e: Error) -> Self {
        Failure {
            code: exit::VALIDATION,
            message: format!("{context}: {e}"),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::env)?;
    Scenario::from_json(&text).map_err(|e| Failure::validation(&path.display().to_string(), e))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Outcome of `run`: the exit status and a one-line report.
pub struct RunReport {
    pub code: u8,
    pub line: String,
}

pub fn cmd_run(
    scenario_path: &Path,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<RunReport, Failure> {
    let mut scenario = load_scenario(scenario_path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let out = sim::run(&scenario).map_err(|e| Failure::validation("scenario", e))?;

    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        write_jsonl(create(out_dir, "events.jsonl")?, &out.log)?;
        write_csv(create(out_dir, "metrics.csv")?, &out.metrics)?;
        serde_json::to_writer_pretty(create(out_dir, "summary.json")?, &out.summary)?;
        Ok(())
    };
    write().map_err(Failure::env)?;

    let s = &out.summary;
    let code = if s.violations > 0 {
        exit::VIOLATIONS
    } else if !s.all_converged {
        exit::NOT_CONVERGED
    } else {
        exit::OK
    };
    let partitions: Vec<String> = s
        .final_partitions
        .iter()
        .map(|(p, n)| format!("{p}x{n}"))
        .collect();
    Ok(RunReport {
        code,
        line: format!(
            "rounds={} converged={} partitions=[{}] gossip={} records={} merges={} violations={}",
            s.rounds_run,
            s.all_converged,
            partitions.join(" "),
            s.gossip_sent,
            s.record_sent,
            s.merge_decisions,
            s.violations
        ),
    })
}

pub fn cmd_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<RunReport, Failure> {
    let summary = sweep::sweep(cfg).map_err(|e| Failure::validation("sweep", e))?;
    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        sweep::write_csv(create(out_dir, "sweep.csv")?, &summary.rows)?;
        serde_json::to_writer_pretty(create(out_dir, "sweep_summary.json")?, &summary)?;
        Ok(())
    };
    write().map_err(Failure::env)?;

    let fmt = |v: Option<f64>| v.map_or_else(|| "N/A".to_owned(), |x| format!("{x:.3}"));
    let converged = summary.rows.iter().all(|r| r.rounds.is_some());
    let violations: usize = summary.rows.iter().map(|r| r.violations).sum();
    Ok(RunReport {
        code: if violations > 0 {
            exit::VIOLATIONS
        } else if converged {
            exit::OK
        } else {
            exit::NOT_CONVERGED
        },
        line: format!(
            "trials={} rounds~(log n)^{} msgs~n^{} baseline msgs~n^{} C={}",
            summary.rows.len(),
            fmt(summary.rounds_exponent_in_log_n),
            fmt(summary.msgs_exponent_in_n),
            fmt(summary.baseline_msgs_exponent_in_n),
            fmt(summary.fitted_c)
        ),
    })
}
