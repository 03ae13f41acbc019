//! Aggregation across seeds: mean ± std of the cumulative loss per
//! algorithm and noise family, plus the fraction of safe runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bench::csv::{fmt_f64, parse_csv, RunSummary};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, safety_rate, RunLog};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub algorithm: String,
    pub noise: String,
    pub runs: usize,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub safety_rate: f64,
    /// Mean regret over the runs that recorded one.
    pub regret_mean: Option<f64>,
}

/// One row per `(algorithm, noise)`, sorted by noise then algorithm.
pub fn aggregate(runs: &[(RunLog, RunSummary)]) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<(String, String), Vec<&(RunLog, RunSummary)>> = BTreeMap::new();
    for run in runs {
        let key = (run.0.meta.noise.clone(), run.0.meta.algorithm.clone());
        groups.entry(key).or_default().push(run);
    }
    groups
        .into_iter()
        .map(|((noise, algorithm), group)| {
            let losses: Vec<f64> = group.iter().map(|r| r.0.cumulative_loss()).collect();
            let logs: Vec<RunLog> = group.iter().map(|r| r.0.clone()).collect();
            let regrets: Vec<f64> = group.iter().filter_map(|r| r.1.regret).collect();
            let (loss_mean, loss_std) = mean_std(&losses);
            Ok(ReportRow {
                algorithm,
                noise,
                runs: group.len(),
                loss_mean,
                loss_std,
                safety_rate: safety_rate(&logs)?,
                regret_mean: (!regrets.is_empty()).then(|| mean_std(&regrets).0),
            })
        })
        .collect()
}

/// Every per-run CSV directly inside `dir` (files named `summary*` are
/// skipped).
pub fn load_dir(dir: &Path) -> Result<Vec<(RunLog, RunSummary)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && !p
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("summary"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!("no run CSVs in {}", dir.display())));
    }
    paths.iter().map(|p| parse_csv(p)).collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::config(format!("csv: {e}"));
    w.write_record([
        "algorithm",
        "noise",
        "runs",
        "loss_mean",
        "loss_std",
        "safety_rate",
        "regret_mean",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.noise.clone(),
            r.runs.to_string(),
            fmt_f64(r.loss_mean),
            fmt_f64(r.loss_std),
            fmt_f64(r.safety_rate),
            r.regret_mean.map(fmt_f64).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table for the terminal.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<14} {:>4} {:>24} {:>7} {:>12}",
        "noise", "algorithm", "runs", "cumulative loss", "safe", "regret"
    );
    for r in rows {
        let loss = format!("{:.3} ± {:.3}", r.loss_mean, r.loss_std);
        let regret = r.regret_mean.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<12} {:<14} {:>4} {:>24} {:>6.0}% {:>12}",
            r.noise,
            r.algorithm,
            r.runs,
            loss,
            100.0 * r.safety_rate,
            regret
        );
    }
    s
}
