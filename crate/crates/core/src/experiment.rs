//! Experiment orchestration: every (aggregator, init) cell on a bounded
//! worker pool, trajectories to CSV, a JSON summary after the join.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::AggregatorKind;
use crate::config::{ConfigError, ExperimentConfig};
use crate::linalg::Vector;
use crate::metrics;
use crate::optimizer::{self, OptimizerConfig};
use crate::output::{
    self, BenchReport, BenchRun, CellFailure, CellSummary, FailureManifest, MetricsSummary, Summary,
};
use crate::plot::{self, PlotError};
use crate::problems::Problem;

pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURE_FILE: &str = "failures.json";
pub const BENCH_FILE: &str = "bench.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{} of {total} cells failed; see {manifest}", failures.len())]
    CellsFailed {
        failures: Vec<CellFailure>,
        total: usize,
        manifest: PathBuf,
    },
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn trajectory_file_name(kind: &AggregatorKind, init_index: usize) -> String {
    format!("{}_init{init_index}.csv", kind.name())
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| ExperimentError::Pool(e.to_string()))
}

struct Prepared {
    problem: Box<dyn Problem>,
    kinds: Vec<AggregatorKind>,
    inits: Vec<Vector>,
    opt: OptimizerConfig,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ConfigError> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let kinds = cfg.aggregator_kinds()?;
    let inits = cfg.initial_points(problem.as_ref())?;
    let opt = cfg.optimizer_config(cfg.step_rule(problem.as_ref())?);
    Ok(Prepared {
        problem,
        kinds,
        inits,
        opt,
    })
}

fn run_cell(
    p: &Prepared,
    kind: &AggregatorKind,
    init_index: usize,
    opt: &OptimizerConfig,
    out_dir: Option<&Path>,
) -> Result<CellSummary, CellFailure> {
    let fail = |error: String| CellFailure {
        aggregator: kind.name().to_string(),
        init_index,
        error,
    };
    let init = &p.inits[init_index];
    let start = Instant::now();
    let r = optimizer::run(p.problem.as_ref(), kind, init, opt).map_err(|e| fail(e.to_string()))?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let file = trajectory_file_name(kind, init_index);
    if let Some(dir) = out_dir {
        let path = dir.join(&file);
        output::write_trajectory_file(&path, &r.trajectory, p.problem.dim(), p.problem.num_tasks())
            .map_err(|e| fail(format!("{}: {e}", path.display())))?;
    }
    Ok(CellSummary {
        aggregator: kind.name().to_string(),
        init_index,
        init: init.as_slice().to_vec(),
        trajectory_file: file,
        steps: r.trajectory.last().map_or(0, |t| t.step),
        final_theta: r.final_theta.as_slice().to_vec(),
        final_losses: r.final_losses.as_slice().to_vec(),
        final_stationarity: r.final_stationarity(),
        termination: r.termination,
        solver_calls: r.solver_calls,
        wall_time_s,
    })
}

fn metrics_summary(cfg: &ExperimentConfig, kinds: &[AggregatorKind], cells: &[CellSummary]) -> Option<MetricsSummary> {
    let mut table = cfg.metric_table()?;
    for kind in kinds {
        let rows: Vec<&CellSummary> = cells.iter().filter(|c| c.aggregator == kind.name()).collect();
        if rows.is_empty() {
            continue;
        }
        let k = table.tasks.len();
        let mean: Vec<f64> =
            (0..k).map(|i| rows.iter().map(|c| c.final_losses[i]).sum::<f64>() / rows.len() as f64).collect();
        table.push(kind.name(), mean).ok()?;
    }
    let delta_m: BTreeMap<String, f64> = table
        .methods
        .iter()
        .filter_map(|m| metrics::delta_m(&table, m).ok().map(|d| (m.clone(), d)))
        .collect();
    let mean_rank = metrics::mean_rank(&table).ok();
    Some(MetricsSummary {
        table,
        delta_m,
        mean_rank,
    })
}

/// Runs every cell of `cfg`, writing trajectories and the summary into
/// `cfg.output_dir`. Cells that fail are listed in a failure manifest next to
/// the partial summary.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Summary, ExperimentError> {
    let p = prepare(cfg)?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cells: Vec<(usize, usize)> =
        (0..p.kinds.len()).flat_map(|a| (0..p.inits.len()).map(move |i| (a, i))).collect();
    let results: Vec<Result<CellSummary, CellFailure>> = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(a, i)| run_cell(&p, &p.kinds[a], i, &p.opt, Some(out)))
            .collect()
    });

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => done.push(c),
            Err(f) => failures.push(f),
        }
    }
    let summary = Summary {
        problem: p.problem.name().to_string(),
        dim: p.problem.dim(),
        num_tasks: p.problem.num_tasks(),
        seed: cfg.seed,
        metrics: metrics_summary(cfg, &p.kinds, &done),
        cells: done,
    };
    let summary_path = out.join(SUMMARY_FILE);
    output::write_json(&summary_path, &summary).map_err(io_err(&summary_path))?;
    let manifest = out.join(FAILURE_FILE);
    if !failures.is_empty() {
        output::write_json(&manifest, &FailureManifest { failures: failures.clone() }).map_err(io_err(&manifest))?;
        return Err(ExperimentError::CellsFailed {
            failures,
            total: cells.len(),
            manifest,
        });
    }
    if manifest.exists() {
        fs::remove_file(&manifest).map_err(io_err(&manifest))?;
    }
    if cfg.emit_plots {
        plot::plot_summary(&summary_path, out)?;
    }
    Ok(summary)
}

/// Runs the bargaining aggregator from every init once per configured weight
/// update interval and writes `bench.json`.
pub fn run_bench(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<BenchReport, ExperimentError> {
    let p = prepare(cfg)?;
    let intervals = cfg
        .bench
        .as_ref()
        .map(|b| b.weight_update_every.clone())
        .ok_or_else(|| ConfigError::Invalid {
            field: "bench",
            reason: "a [bench] section with weight_update_every is required".into(),
        })?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let workers = pool(jobs)?;
    let mut runs: Vec<BenchRun> = Vec::with_capacity(intervals.len());
    for &t in &intervals {
        let opt = OptimizerConfig {
            weight_update_every: t,
            ..p.opt.clone()
        };
        let start = Instant::now();
        let results: Vec<Result<CellSummary, CellFailure>> = workers.install(|| {
            (0..p.inits.len())
                .into_par_iter()
                .map(|i| run_cell(&p, &AggregatorKind::Nash, i, &opt, None))
                .collect()
        });
        let wall_time_s = start.elapsed().as_secs_f64();
        let mut cells = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(c) => cells.push(c),
                Err(f) => failures.push(f),
            }
        }
        if !failures.is_empty() {
            let manifest = out.join(FAILURE_FILE);
            output::write_json(&manifest, &FailureManifest { failures: failures.clone() })
                .map_err(io_err(&manifest))?;
            return Err(ExperimentError::CellsFailed {
                failures,
                total: p.inits.len(),
                manifest,
            });
        }
        let solver_calls: u64 = cells.iter().map(|c| c.solver_calls).sum();
        let steps: usize = cells.iter().map(|c| c.steps).sum();
        let calls_per_step = solver_calls as f64 / steps.max(1) as f64;
        let final_stationarity: Vec<f64> = cells.iter().map(|c| c.final_stationarity).collect();
        let (call_ratio, wall_ratio) = match runs.first() {
            Some(first) => (calls_per_step / first.calls_per_step, wall_time_s / first.wall_time_s),
            None => (1.0, 1.0),
        };
        runs.push(BenchRun {
            weight_update_every: t,
            solver_calls,
            steps,
            calls_per_step,
            call_ratio,
            wall_time_s,
            wall_ratio,
            max_final_stationarity: final_stationarity.iter().copied().fold(0.0, f64::max),
            final_stationarity,
        });
    }
    let report = BenchReport {
        problem: p.problem.name().to_string(),
        runs,
    };
    let path = out.join(BENCH_FILE);
    output::write_json(&path, &report).map_err(io_err(&path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_config(dir: &Path, aggregators: &str) -> ExperimentConfig {
        let text = format!(
            r#"
            aggregators = {aggregators}
            inits = {{ random = 3 }}
            output_dir = "{}"
            emit_plots = true
            [problem]
            kind = "quadratics"
            tasks = 2
            dim = 4
            cond = 5.0
            seed = 2
            [optimizer]
            max_steps = 200
            step_rule = {{ kind = "fixed", lr = 0.05 }}
            [metrics]
            baseline = [1.0, 1.0]
            [bench]
            weight_update_every = [1, 5, 50]
            "#,
            dir.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn runs_cells_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quad_config(dir.path(), r#"["nash", "mgda"]"#);
        let s = run_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(s.cells.len(), 6);
        for c in &s.cells {
            assert!(dir.path().join(&c.trajectory_file).exists());
        }
        assert!(dir.path().join("nash.svg").exists());
        let m = s.metrics.unwrap();
        assert_eq!(m.table.methods, vec!["nash", "mgda"]);
        assert_eq!(m.mean_rank.unwrap().len(), 2);
    }

    #[test]
    fn bench_counts_calls() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quad_config(dir.path(), r#"["nash"]"#);
        // A fixed step held against stale weights can overshoot; Adam cannot.
        cfg.optimizer.step_rule = crate::config::StepRuleSpec::Adam {
            lr: 1e-2,
            beta1: None,
            beta2: None,
            eps: None,
        };
        cfg.optimizer.stationarity_tol = 0.0;
        let r = run_bench(&cfg, Some(2)).unwrap();
        let calls: Vec<u64> = r.runs.iter().map(|b| b.solver_calls).collect();
        assert_eq!(calls, vec![600, 120, 12]);
        assert!((r.runs[1].call_ratio - 0.2).abs() < 1e-12);
        assert!(dir.path().join(BENCH_FILE).exists());
    }
}
