use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use safe_nsc::bench::chart::{cumulative_loss_chart, regret_chart, state_trajectory_chart, Series};
use safe_nsc::bench::csv::{emit_csv, fmt_f64, RunSummary};
use safe_nsc::bench::report::{aggregate, format_table, load_dir, write_summary};
use safe_nsc::bench::run::{evaluate_regret, run_seeds};
use safe_nsc::bench::scenario::{parse_seed_range, Algorithm, Scenario};
use safe_nsc::metrics::{mean_std, RunLog};
use safe_nsc::{Error, Result};

#[derive(Parser)]
#[command(name = "safe-nsc", version, about = "Safe online control benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed range, `a..b` or `a..=b`; defaults to the scenario's seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated algorithms, or `all`; defaults to the scenario's.
    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated noise families; defaults to the scenario's.
    #[arg(long)]
    noise: Option<String>,
    /// Output directory; defaults to the scenario's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the pendulum equation exactly as printed.
    #[arg(long)]
    literal_pendulum: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (algorithm, noise, seed) and write per-run CSVs,
    /// a summary table and charts.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<usize>,
        /// Skip the greedy comparator (no regret column).
        #[arg(long)]
        no_regret: bool,
    },
    /// Mean dynamic regret at several horizons.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "200,800,3200")]
        horizons: Vec<usize>,
    },
    /// Aggregate the per-run CSVs in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

struct Plan {
    scenario: Scenario,
    seeds: Vec<u64>,
    algorithms: Vec<Algorithm>,
    noises: Vec<String>,
    out: PathBuf,
}

fn plan(c: &Common) -> Result<Plan> {
    let mut scenario = Scenario::load(&c.scenario)?;
    if c.literal_pendulum {
        scenario = scenario.with_literal_pendulum()?;
    }
    let seeds = match &c.seeds {
        Some(s) => parse_seed_range(s)?,
        None => scenario.seeds.clone(),
    };
    let algorithms = match c.algo.as_deref() {
        None => vec![scenario.params.algorithm],
        Some("all") => Algorithm::ALL.to_vec(),
        Some(list) => list.split(',').map(|a| a.trim().parse()).collect::<Result<_>>()?,
    };
    let noises = match &c.noise {
        Some(list) => list.split(',').map(|n| n.trim().to_string()).collect(),
        None => vec![scenario.distribution.name().to_string()],
    };
    let out = c.out.clone().unwrap_or_else(|| scenario.out.clone());
    std::fs::create_dir_all(&out)?;
    Ok(Plan {
        scenario,
        seeds,
        algorithms,
        noises,
        out,
    })
}

impl Plan {
    /// The scenario for one cell of the grid. The scenario's own noise
    /// parameters are kept when the family is unchanged.
    fn cell(&self, algorithm: Algorithm, noise: &str) -> Result<Scenario> {
        let s = if noise == self.scenario.distribution.name() {
            self.scenario.clone()
        } else {
            self.scenario.with_distribution(noise)?
        };
        Ok(s.with_algorithm(algorithm))
    }
}

fn aborted(logs: &[RunLog]) -> bool {
    logs.iter().any(|l| l.aborted.is_some())
}

fn run(common: &Common, horizon: Option<usize>, no_regret: bool) -> Result<bool> {
    let plan = plan(common)?;
    let mut all = Vec::new();
    let mut any_aborted = false;
    for noise in &plan.noises {
        let mut firsts = Vec::new();
        for &alg in &plan.algorithms {
            let mut scn = plan.cell(alg, noise)?;
            if let Some(h) = horizon {
                scn = scn.with_horizon(h);
            }
            let logs = run_seeds(&scn, &plan.seeds)?;
            any_aborted |= aborted(&logs);
            let runs: Vec<(RunLog, RunSummary)> = logs
                .into_par_iter()
                .map(|log| {
                    let comp = if no_regret || log.aborted.is_some() {
                        None
                    } else {
                        Some(evaluate_regret(&scn, &log)?.0)
                    };
                    let name = format!("{}_{}_{}_seed{}.csv", scn.name, alg.name(), noise, log.meta.seed);
                    emit_csv(&log, comp.as_ref(), &plan.out.join(name))?;
                    let summary = RunSummary::of(&log, comp.as_ref())?;
                    Ok((log, summary))
                })
                .collect::<Result<_>>()?;
            if let Some(first) = runs.first() {
                firsts.push(first.0.clone());
            }
            all.extend(runs);
        }
        if firsts.iter().all(|l| l.steps.is_empty()) {
            continue;
        }
        let limits = [plan.scenario.state_lower[0], plan.scenario.state_upper[0]];
        state_trajectory_chart(&firsts, &limits).write(&plan.out.join(format!("states_{noise}.svg")))?;
        cumulative_loss_chart(&firsts).write(&plan.out.join(format!("cumulative_loss_{noise}.svg")))?;
    }
    let rows = aggregate(&all)?;
    write_summary(std::fs::File::create(plan.out.join("summary.csv"))?, &rows)?;
    print!("{}", format_table(&rows));
    Ok(any_aborted)
}

fn sweep(common: &Common, horizons: &[usize]) -> Result<bool> {
    let plan = plan(common)?;
    let noise = &plan.noises[0];
    let mut any_aborted = false;
    let mut series = Vec::new();
    let csv_err = |e: csv::Error| Error::Config(e.to_string());
    let mut w = csv::Writer::from_path(plan.out.join("regret_vs_T.csv")).map_err(csv_err)?;
    w.write_record(["algorithm", "horizon", "regret_mean", "regret_std", "regret_per_step"])
        .map_err(csv_err)?;
    println!("{:<14} {:>6} {:>14} {:>12}", "algorithm", "T", "regret", "regret/T");
    for &alg in &plan.algorithms {
        let mut points = Vec::new();
        for &h in horizons {
            let scn = plan.cell(alg, noise)?.with_horizon(h);
            let logs = run_seeds(&scn, &plan.seeds)?;
            any_aborted |= aborted(&logs);
            let regrets = logs
                .par_iter()
                .filter(|l| l.aborted.is_none())
                .map(|l| Ok(evaluate_regret(&scn, l)?.1))
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&regrets);
            let per_step = mean / h as f64;
            w.write_record([
                alg.name().to_string(),
                h.to_string(),
                fmt_f64(mean),
                fmt_f64(std),
                fmt_f64(per_step),
            ])
            .map_err(csv_err)?;
            println!("{:<14} {:>6} {:>14.4} {:>12.5}", alg.name(), h, mean, per_step);
            points.push((h as f64, per_step));
        }
        series.push(Series {
            label: alg.name().into(),
            points,
        });
    }
    w.flush()?;
    regret_chart(series).write(&plan.out.join("regret_vs_T.svg"))?;
    Ok(any_aborted)
}

fn report(input: &Path) -> Result<bool> {
    let runs = load_dir(input)?;
    let rows = aggregate(&runs)?;
    write_summary(std::fs::File::create(input.join("summary.csv"))?, &rows)?;
    print!("{}", format_table(&rows));
    Ok(runs.iter().any(|r| r.0.aborted.is_some()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            common,
            horizon,
            no_regret,
        } => run(common, *horizon, *no_regret),
        Command::Sweep { common, horizons } => sweep(common, horizons),
        Command::Report { input } => report(input),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: at least one run stopped on an empty safe decision set");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
