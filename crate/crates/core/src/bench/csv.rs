//! Per-run CSV files.
//!
//! One header row, one row per step, then `#`-prefixed key/value rows with
//! the run metadata and summary metrics. Vectors are `;`-joined; floats are
//! written with 17 significant digits so a parse reproduces them exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::metrics::{
    dynamic_regret, path_length_ct, set_variation_st, ComparatorTrajectory, RunLog, RunMeta, StepRecord,
};

pub const HEADER: [&str; 9] = [
    "t",
    "x",
    "u",
    "w",
    "loss",
    "zeta",
    "safe_state",
    "safe_input",
    "decision",
];

/// Summary rows beyond the metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub cumulative_loss: f64,
    pub regret: Option<f64>,
    pub path_length: Option<f64>,
    pub set_variation: f64,
}

impl RunSummary {
    pub fn of(log: &RunLog, comparator: Option<&ComparatorTrajectory>) -> Result<Self> {
        Ok(RunSummary {
            cumulative_loss: log.cumulative_loss(),
            regret: comparator.map(|c| dynamic_regret(log, c)).transpose()?,
            path_length: comparator.map(path_length_ct),
            set_variation: set_variation_st(log),
        })
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(v: &DVector<f64>) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(format!("`{s}` is not a number")))
}

fn parse_vec(s: &str) -> Result<DVector<f64>> {
    let parts = s.split(';').map(parse_f64).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(parts))
}

fn parse_bool(s: &str) -> Result<bool> {
    s.parse().map_err(|_| Error::config(format!("`{s}` is not a boolean")))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::config(format!("csv: {other:?}")),
    }
}

/// Writes the log (and comparator-derived metrics, when given) as CSV.
pub fn write_run<W: Write>(out: W, log: &RunLog, comparator: Option<&ComparatorTrajectory>) -> Result<()> {
    let summary = RunSummary::of(log, comparator)?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for s in &log.steps {
        w.write_record([
            s.t.to_string(),
            fmt_vec(&s.x),
            fmt_vec(&s.u),
            fmt_vec(&s.w),
            fmt_f64(s.loss),
            fmt_f64(s.zeta),
            s.safe_state.to_string(),
            s.safe_input.to_string(),
            fmt_vec(&s.decision),
        ])
        .map_err(csv_err)?;
    }
    let m = &log.meta;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let rows: [(&str, String); 13] = [
        ("scenario", m.scenario.clone()),
        ("algorithm", m.algorithm.clone()),
        ("noise", m.noise.clone()),
        ("seed", m.seed.to_string()),
        ("horizon", m.horizon.to_string()),
        ("final_state", fmt_vec(&log.final_state)),
        ("final_safe", log.final_safe.to_string()),
        ("aborted", log.aborted.clone().unwrap_or_default()),
        ("cumulative_loss", fmt_f64(summary.cumulative_loss)),
        ("regret", opt(summary.regret)),
        ("C_T", opt(summary.path_length)),
        ("S_T", fmt_f64(summary.set_variation)),
        ("safe", log.is_safe().to_string()),
    ];
    for (k, v) in rows {
        w.write_record([format!("# {k}"), v]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(log: &RunLog, comparator: Option<&ComparatorTrajectory>, path: &Path) -> Result<()> {
    write_run(File::create(path)?, log, comparator)
}

/// Parses a file written by [`write_run`].
pub fn read_run<R: Read>(input: R) -> Result<(RunLog, RunSummary)> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::config("unexpected CSV header"));
    }
    let mut steps = Vec::new();
    let mut meta = RunMeta::default();
    let mut summary = RunSummary::default();
    let mut final_state = None;
    let mut final_safe = true;
    let mut aborted = None;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let first = rec.get(0).unwrap_or_default();
        if let Some(key) = first.strip_prefix("# ") {
            let v = rec.get(1).unwrap_or_default();
            let opt = |v: &str| if v.is_empty() { Ok(None) } else { parse_f64(v).map(Some) };
            match key {
                "scenario" => meta.scenario = v.into(),
                "algorithm" => meta.algorithm = v.into(),
                "noise" => meta.noise = v.into(),
                "seed" => meta.seed = v.parse().map_err(|_| Error::config("bad seed"))?,
                "horizon" => meta.horizon = v.parse().map_err(|_| Error::config("bad horizon"))?,
                "final_state" => final_state = Some(parse_vec(v)?),
                "final_safe" => final_safe = parse_bool(v)?,
                "aborted" => aborted = (!v.is_empty()).then(|| v.to_string()),
                "cumulative_loss" => summary.cumulative_loss = parse_f64(v)?,
                "regret" => summary.regret = opt(v)?,
                "C_T" => summary.path_length = opt(v)?,
                "S_T" => summary.set_variation = parse_f64(v)?,
                "safe" => {}
                other => return Err(Error::config(format!("unknown summary key `{other}`"))),
            }
            continue;
        }
        if rec.len() != HEADER.len() {
            return Err(Error::config(format!("row with {} fields", rec.len())));
        }
        steps.push(StepRecord {
            t: first.parse().map_err(|_| Error::config("bad step index"))?,
            x: parse_vec(&rec[1])?,
            u: parse_vec(&rec[2])?,
            w: parse_vec(&rec[3])?,
            loss: parse_f64(&rec[4])?,
            zeta: parse_f64(&rec[5])?,
            safe_state: parse_bool(&rec[6])?,
            safe_input: parse_bool(&rec[7])?,
            decision: parse_vec(&rec[8])?,
        });
    }
    let final_state = final_state.ok_or_else(|| Error::config("missing final_state row"))?;
    Ok((
        RunLog {
            meta,
            steps,
            final_state,
            final_safe,
            aborted,
        },
        summary,
    ))
}

pub fn parse_csv(path: &Path) -> Result<(RunLog, RunSummary)> {
    read_run(File::open(path)?)
}
