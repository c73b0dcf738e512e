//! Multi-trial experiment execution and the output bundle on disk.
//!
//! Bundle layout:
//! - `traces/<algorithm>-trial<NNN>.csv`: `t, x.., sq_error, nu.., nu_star..`
//! - `aggregate.csv`: `algorithm, t, mean_sq_error, std_sq_error, mean_time_avg_sq_error, std_time_avg_sq_error`
//! - `convergence.svg`
//! - `bounds.csv`: `check, algorithm, agent, statistic, bound, pass`
//! - `config.resolved.toml`

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context};
use cvar_nash::analysis::{
    density_constants_along, time_averaged_error, validate_convergence_bound, validate_rate,
    validate_var_concentration, validate_var_tracking, AggregateTrace, BoundReport,
    ConcentrationCheck, ConvergenceConstants, EpisodeRecord, RunTrace, TraceMeta,
};
use cvar_nash::seeds::{agent_rng, trial_seed};
use cvar_nash::{dkw_confidence_width, run, ActionProfile, Algorithm, BuiltinGame, StochasticGame};
use rayon::prelude::*;

use crate::config::{load_config, ExperimentConfig};
use crate::plot::emit_plot;

pub const TRACE_DIR: &str = "traces";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PLOT_FILE: &str = "convergence.svg";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

pub const AGGREGATE_HEADER: [&str; 6] = [
    "algorithm",
    "t",
    "mean_sq_error",
    "std_sq_error",
    "mean_time_avg_sq_error",
    "std_time_avg_sq_error",
];
pub const BOUNDS_HEADER: [&str; 6] = ["check", "algorithm", "agent", "statistic", "bound", "pass"];

/// Confidence parameter used by every bound check.
pub const GAMMA: f64 = 0.05;
/// Independent sample sets drawn for the VaR concentration check.
pub const CONCENTRATION_REPEATS: usize = 1000;
/// A fitted log-log slope above this fails the rate check.
pub const RATE_SLOPE_MAX: f64 = -0.4;
/// First episode of the rate fit; earlier episodes are transient.
pub const RATE_WINDOW_START: usize = 100;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Per-trial progress lines on standard error.
    pub progress: bool,
}

/// One line of the bound report.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub algorithm: Option<Algorithm>,
    pub agent: Option<usize>,
    pub report: BoundReport,
}

#[derive(Debug, Clone)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub trace_files: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
    pub plot_svg: PathBuf,
    pub bounds_csv: PathBuf,
    pub resolved_config: PathBuf,
    pub bounds: Vec<BoundRow>,
}

impl OutputBundle {
    pub fn all_bounds_pass(&self) -> bool {
        self.bounds.iter().all(|b| b.report.pass)
    }
}

/// Traces of every trial, grouped by algorithm in config order.
pub type TraceSet = Vec<(Algorithm, Vec<RunTrace<f64>>)>;

/// Per algorithm: aggregate of the squared error and of its running average.
pub type Aggregates = Vec<(Algorithm, AggregateTrace<f64>, AggregateTrace<f64>)>;

fn trace_file_name(algorithm: Algorithm, trial: usize) -> String {
    format!("{algorithm}-trial{trial:03}.csv")
}

/// Runs every (algorithm, trial) pair; results come back in config order
/// whatever the worker count.
pub fn run_trials(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
    progress: bool,
) -> anyhow::Result<TraceSet> {
    let game = cfg.game.build();
    let run_cfg = cfg.run_config(&game);
    let jobs: Vec<(Algorithm, usize)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| (0..cfg.trials).map(move |r| (a, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .context("cannot start worker pool")?;
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    let traces: Vec<RunTrace<f64>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(alg, r)| {
                let trace = run(&game, alg, &run_cfg, trial_seed(cfg.seed, r))?;
                if progress {
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    eprintln!("[{k}/{total}] {alg} trial {r} done");
                }
                Ok(trace)
            })
            .collect::<cvar_nash::Result<_>>()
    })?;
    let mut iter = traces.into_iter();
    Ok(cfg
        .algorithms
        .iter()
        .map(|&a| (a, iter.by_ref().take(cfg.trials).collect()))
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn trace_header(game: &BuiltinGame<f64>) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for (i, s) in game.action_sets().iter().enumerate() {
        if s.dim() == 1 {
            h.push(format!("x{}", i + 1));
        } else {
            h.extend((1..=s.dim()).map(|k| format!("x{}_{k}", i + 1)));
        }
    }
    h.push("sq_error".into());
    let n = game.num_agents();
    h.extend((1..=n).map(|i| format!("nu{i}")));
    h.extend((1..=n).map(|i| format!("nu_star{i}")));
    h
}

pub fn write_trace(
    path: &Path,
    game: &BuiltinGame<f64>,
    trace: &RunTrace<f64>,
) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(trace_header(game))?;
    let n = game.num_agents();
    for r in &trace.records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.action.flatten().iter().map(f64::to_string));
        row.push(fmt_opt(r.sq_error));
        row.extend(r.var_estimates.iter().map(f64::to_string));
        match &r.true_vars {
            Some(tv) => row.extend(tv.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field(path: &Path, line: usize, s: &str) -> anyhow::Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .with_context(|| format!("{}: row {line}: malformed number `{s}`", path.display()))
}

/// Reads back a trace written by [`write_trace`]. The final action is not
/// stored, so it is set to the last recorded action.
pub fn read_trace(
    path: &Path,
    game: &BuiltinGame<f64>,
    meta: TraceMeta,
) -> anyhow::Result<RunTrace<f64>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let expected = trace_header(game);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let sets = game.action_sets();
    let n = game.num_agents();
    let dim: usize = sets.iter().map(|s| s.dim()).sum();
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let f = |k: usize| parse_field(path, line + 1, &row[k]);
        let req = |k: usize| -> anyhow::Result<f64> {
            f(k)?.with_context(|| {
                format!(
                    "{}: row {}: missing value in column {}",
                    path.display(),
                    line + 1,
                    expected[k]
                )
            })
        };
        let t = row[0].parse().with_context(|| {
            format!(
                "{}: row {}: malformed episode index",
                path.display(),
                line + 1
            )
        })?;
        let flat = (1..=dim).map(req).collect::<anyhow::Result<Vec<_>>>()?;
        let mut offset = 0;
        let action = ActionProfile::new(
            sets.iter()
                .map(|s| {
                    let b = flat[offset..offset + s.dim()].to_vec();
                    offset += s.dim();
                    b
                })
                .collect(),
        );
        let sq_error = f(dim + 1)?;
        let var_estimates = (dim + 2..dim + 2 + n)
            .map(req)
            .collect::<anyhow::Result<Vec<_>>>()?;
        let true_vars = (dim + 2 + n..dim + 2 + 2 * n)
            .map(f)
            .collect::<anyhow::Result<Option<Vec<_>>>>()?;
        records.push(EpisodeRecord {
            t,
            action,
            var_estimates,
            true_vars,
            sq_error,
        });
    }
    let final_action = records
        .last()
        .map(|r| r.action.clone())
        .with_context(|| format!("{}: trace has no rows", path.display()))?;
    Ok(RunTrace {
        meta,
        records,
        final_action,
    })
}

pub fn aggregate(traces: &TraceSet) -> anyhow::Result<Aggregates> {
    traces
        .iter()
        .map(|(alg, runs)| {
            let sq: Vec<Vec<f64>> = runs
                .iter()
                .map(|t| t.sq_errors())
                .collect::<cvar_nash::Result<_>>()?;
            let avg: Vec<Vec<f64>> = runs
                .iter()
                .map(time_averaged_error)
                .collect::<cvar_nash::Result<_>>()?;
            Ok((
                *alg,
                AggregateTrace::from_series(&sq)?,
                AggregateTrace::from_series(&avg)?,
            ))
        })
        .collect()
}

fn write_aggregate(path: &Path, aggs: &Aggregates) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(AGGREGATE_HEADER)?;
    for (alg, sq, avg) in aggs {
        for k in 0..sq.len() {
            w.write_record([
                alg.as_str().to_string(),
                (k + 1).to_string(),
                sq.mean[k].to_string(),
                sq.std[k].to_string(),
                avg.mean[k].to_string(),
                avg.std[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_bounds(path: &Path, rows: &[BoundRow]) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(BOUNDS_HEADER)?;
    for r in rows {
        w.write_record([
            r.report.kind.as_str().to_string(),
            r.algorithm
                .map(|a| a.as_str().to_string())
                .unwrap_or_default(),
            r.agent.map(|i| (i + 1).to_string()).unwrap_or_default(),
            r.report.statistic.to_string(),
            r.report.bound.to_string(),
            r.report.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bound checks for a finished experiment:
/// - VaR concentration of each agent's cost distribution at the initial action
///   (sample size `T`, seeded from the trial seed after the last trial);
/// - accumulated VaR error of every `algorithm1` trial, per agent;
/// - the time-averaged convergence bound, when the game is strongly monotone;
/// - the fitted decay rate over `[RATE_WINDOW_START, T]`, when `T` exceeds the start.
pub fn bound_reports(cfg: &ExperimentConfig, traces: &TraceSet) -> anyhow::Result<Vec<BoundRow>> {
    let game = cfg.game.build();
    let levels = cfg.levels();
    let x0 = cfg.initial_action(&game);
    let mut rows = Vec::new();

    let check_seed = trial_seed(cfg.seed, cfg.trials);
    for (agent, &level) in levels.iter().enumerate() {
        let Some(dist) = game.induced_cost_distribution(agent, &x0) else {
            continue;
        };
        let epsilon = dkw_confidence_width(cfg.episodes, GAMMA, dist.density())?;
        let check = ConcentrationCheck {
            distribution: dist,
            level,
            samples: cfg.episodes,
            repeats: CONCENTRATION_REPEATS,
            epsilon,
            p_lower: None,
        };
        let report = validate_var_concentration(&check, &mut agent_rng(check_seed, agent))?;
        rows.push(BoundRow {
            algorithm: None,
            agent: Some(agent),
            report,
        });
    }

    let aggs = aggregate(traces)?;
    for ((alg, runs), (_, _, avg)) in traces.iter().zip(&aggs) {
        let mut lipschitz = 0.0f64;
        let mut p_lower = f64::INFINITY;
        let mut have_density = true;
        let mut per_agent: Vec<Option<BoundReport>> = vec![None; game.num_agents()];
        for trace in runs {
            for (agent, slot) in per_agent.iter_mut().enumerate() {
                let Ok((l0, p)) = density_constants_along(&game, trace, agent) else {
                    have_density = false;
                    continue;
                };
                lipschitz = lipschitz.max(l0);
                p_lower = p_lower.min(p);
                if *alg != Algorithm::Algorithm1 || !(p > 0.0) {
                    continue;
                }
                let rep = validate_var_tracking(trace, agent, l0, game.grad_bound(), p, GAMMA)?;
                *slot = Some(match slot.take() {
                    None => rep,
                    Some(prev) => BoundReport {
                        statistic: prev.statistic.max(rep.statistic),
                        bound: prev.bound.max(rep.bound),
                        pass: prev.pass && rep.pass,
                        ..prev
                    },
                });
            }
        }
        for (agent, rep) in per_agent.into_iter().enumerate() {
            if let Some(report) = rep {
                rows.push(BoundRow {
                    algorithm: Some(*alg),
                    agent: Some(agent),
                    report,
                });
            }
        }

        if let (Some(m), true) = (
            game.monotonicity_constant(&levels),
            have_density && p_lower > 0.0,
        ) {
            let constants = ConvergenceConstants {
                diameter: game.diameter(),
                grad_bound: game.grad_bound(),
                monotonicity: m,
                step: cfg
                    .step
                    .resolve(game.diameter(), game.grad_bound(), cfg.episodes)?,
                lipschitz,
                p_lower,
                gamma: GAMMA,
            };
            if constants.step > 0.0 {
                rows.push(BoundRow {
                    algorithm: Some(*alg),
                    agent: None,
                    report: validate_convergence_bound(avg, &constants, &levels)?,
                });
            }
        }

        if cfg.episodes > RATE_WINDOW_START && avg.mean.iter().all(|&v| v > 0.0) {
            rows.push(BoundRow {
                algorithm: Some(*alg),
                agent: None,
                report: validate_rate(avg, RATE_WINDOW_START..=cfg.episodes, RATE_SLOPE_MAX)?,
            });
        }
    }
    Ok(rows)
}

fn bundle_paths(
    dir: &Path,
    cfg: &ExperimentConfig,
) -> (Vec<PathBuf>, PathBuf, PathBuf, PathBuf, PathBuf) {
    let traces = cfg
        .algorithms
        .iter()
        .flat_map(|&a| {
            (0..cfg.trials).map(move |r| dir.join(TRACE_DIR).join(trace_file_name(a, r)))
        })
        .collect();
    (
        traces,
        dir.join(AGGREGATE_FILE),
        dir.join(PLOT_FILE),
        dir.join(BOUNDS_FILE),
        dir.join(RESOLVED_CONFIG_FILE),
    )
}

/// Runs the experiment and writes the full bundle. Files are written only
/// after every trial has finished.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<OutputBundle> {
    let dir = opts.out.clone().unwrap_or_else(|| cfg.out.clone());
    let traces = run_trials(cfg, opts.workers, opts.progress)?;
    let game = cfg.game.build();

    fs::create_dir_all(dir.join(TRACE_DIR))
        .with_context(|| format!("cannot create {}", dir.display()))?;
    let (trace_files, aggregate_csv, plot_svg, bounds_csv, resolved_config) =
        bundle_paths(&dir, cfg);
    for (path, trace) in trace_files
        .iter()
        .zip(traces.iter().flat_map(|(_, runs)| runs))
    {
        write_trace(path, &game, trace)?;
    }
    let aggs = aggregate(&traces)?;
    write_aggregate(&aggregate_csv, &aggs)?;
    let series: Vec<(String, AggregateTrace<f64>)> = aggs
        .iter()
        .map(|(a, sq, _)| (a.to_string(), sq.clone()))
        .collect();
    emit_plot(&series, &plot_svg)?;
    if opts.progress {
        eprintln!("checking bounds");
    }
    let bounds = bound_reports(cfg, &traces)?;
    write_bounds(&bounds_csv, &bounds)?;
    fs::write(&resolved_config, cfg.to_toml())
        .with_context(|| format!("cannot write {}", resolved_config.display()))?;
    Ok(OutputBundle {
        dir,
        trace_files,
        aggregate_csv,
        plot_svg,
        bounds_csv,
        resolved_config,
        bounds,
    })
}

/// Re-reads the traces of a bundle and recomputes (and rewrites) its bound report.
pub fn report(bundle: &Path) -> anyhow::Result<Vec<BoundRow>> {
    let cfg = load_config(&bundle.join(RESOLVED_CONFIG_FILE))?;
    let game = cfg.game.build();
    let step = cfg
        .step
        .resolve(game.diameter(), game.grad_bound(), cfg.episodes)?;
    let mut traces = TraceSet::new();
    for &alg in &cfg.algorithms {
        let mut runs = Vec::with_capacity(cfg.trials);
        for r in 0..cfg.trials {
            let meta = TraceMeta {
                game: game.name().to_string(),
                algorithm: alg,
                alphas: cfg.alphas.clone(),
                step,
                episodes: cfg.episodes,
                seed: trial_seed(cfg.seed, r),
            };
            runs.push(read_trace(
                &bundle.join(TRACE_DIR).join(trace_file_name(alg, r)),
                &game,
                meta,
            )?);
        }
        traces.push((alg, runs));
    }
    let rows = bound_reports(&cfg, &traces)?;
    write_bounds(&bundle.join(BOUNDS_FILE), &rows)?;
    Ok(rows)
}

/// Human-readable bound report, one line per check.
pub fn format_bounds(rows: &[BoundRow]) -> String {
    rows.iter()
        .map(|r| {
            let mut who = String::new();
            if let Some(a) = r.algorithm {
                who.push_str(&format!(" {a}"));
            }
            if let Some(i) = r.agent {
                who.push_str(&format!(" agent {}", i + 1));
            }
            format!(
                "{:<4} {}{}: statistic {:.6e} vs bound {:.6e}\n",
                if r.report.pass { "PASS" } else { "FAIL" },
                r.report.kind,
                who,
                r.report.statistic,
                r.report.bound
            )
        })
        .collect()
}
