//! Ensemble orchestration and file I/O.
//!
//! Trials are embarrassingly parallel: each owns its generator, graph and
//! state. Aggregation always runs in trial-index order after all trials
//! finish, so reports and CSV files are byte-identical at any worker count.

use crate::dynamics::{run_trial_full, SimConfig, Trajectory, TrialOverrides};
use crate::metrics::{bound_check, default_fit_window, fit_decay_rate, EnsembleCurve};
use crate::rng::{mix_seed, FIXED_GRAPH_STREAM};
use crate::spectral::graph_fiedler_value;
use crate::topology::generate_feasible_graph;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Everything an ensemble run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Echo of the effective configuration (serializing it again is
    /// byte-stable, so runs can be replayed from their own reports).
    pub config: SimConfig,
    /// Fiedler value of each trial's feasible graph; empty when skipped.
    pub lambda2_per_trial: Vec<f64>,
    /// Minimum over trials — the rate constant for the ensemble-level bound
    /// verdict when graphs vary.
    pub lambda2_min: Option<f64>,
    pub curve: EnsembleCurve,
    /// Least-squares decay rate of mean V over the default window, when the
    /// window is usable.
    pub fitted_decay_rate: Option<f64>,
    /// Whether mean V stayed below `slack * V(0) * exp(-lambda2_min * t)`.
    pub bound_satisfied: Option<bool>,
    /// Summed over trials and every step (not just recorded ones).
    pub invariance_violations: u64,
    pub lyapunov_increases: u64,
    pub max_sum_drift: f64,
    /// Wall-clock duration; the one field that varies between identical runs.
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn to_json_string(&self) -> String {
        let mut body =
            serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        body.push('\n');
        body
    }
}

/// Runs `config.trials` trials on a private worker pool and aggregates.
///
/// `parallelism` is the worker count; `0` means one worker per core. Results
/// do not depend on it. Any trial failure aborts the run, tagged with the
/// failing trial index and its mixed seed for replay.
pub fn run_ensemble(config: &SimConfig, parallelism: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();

    let shared_graph = if config.fixed_graph {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, FIXED_GRAPH_STREAM));
        Some(generate_feasible_graph(config.n, config.p1, &mut rng)?)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a worker pool: {e}")))?;

    let outcomes: Result<Vec<(Trajectory, Option<f64>)>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial_index| {
                let run_one = || -> Result<(Trajectory, Option<f64>)> {
                    let overrides = TrialOverrides {
                        x0: None,
                        graph: shared_graph.as_ref(),
                        snapshots: Some(false),
                    };
                    let run = run_trial_full(config, trial_index, overrides)?;
                    let lambda2 = if config.compute_lambda2 {
                        Some(graph_fiedler_value(&run.graph)?)
                    } else {
                        None
                    };
                    Ok((run.trajectory, lambda2))
                };
                run_one().map_err(|source| Error::TrialFailed {
                    trial_index,
                    seed: mix_seed(config.seed, trial_index),
                    source: Box::new(source),
                })
            })
            .collect()
    });
    let outcomes = outcomes?;

    let trajectories: Vec<Trajectory> = outcomes.iter().map(|(t, _)| t.clone()).collect();
    let lambda2_per_trial: Vec<f64> = outcomes.iter().filter_map(|(_, l)| *l).collect();
    let lambda2_min = lambda2_per_trial
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));

    let curve = EnsembleCurve::from_trajectories(&trajectories)?;
    let fitted_decay_rate =
        default_fit_window(&curve).and_then(|w| fit_decay_rate(&curve, w).ok());
    let bound_satisfied = lambda2_min.map(|l2| bound_check(&curve, l2, config.bound_slack));

    Ok(ExperimentReport {
        config: config.clone(),
        lambda2_per_trial,
        lambda2_min,
        curve,
        fitted_decay_rate,
        bound_satisfied,
        invariance_violations: trajectories.iter().map(|t| t.invariance_violations).sum(),
        lyapunov_increases: trajectories.iter().map(|t| t.lyapunov_increases).sum(),
        max_sum_drift: trajectories
            .iter()
            .map(|t| t.max_sum_drift)
            .fold(0.0, f64::max),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// 17 significant digits — enough to reproduce any `f64` bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders the curve as `t,mean_V,mean_relerr,trials` rows with LF endings.
pub fn curve_to_csv(curve: &EnsembleCurve) -> String {
    let mut out = String::from("t,mean_V,mean_relerr,trials\n");
    for i in 0..curve.len() {
        out.push_str(&fmt_f64(curve.t[i]));
        out.push(',');
        out.push_str(&fmt_f64(curve.mean_v[i]));
        out.push(',');
        out.push_str(&fmt_f64(curve.mean_relerr[i]));
        out.push(',');
        out.push_str(&curve.trials.to_string());
        out.push('\n');
    }
    out
}

/// Parses a file produced by [`curve_to_csv`] back into the exact curve.
pub fn parse_curve_csv(body: &str, origin: &Path) -> Result<EnsembleCurve> {
    let malformed = |msg: String| Error::Malformed {
        path: origin.to_path_buf(),
        msg,
    };
    let mut lines = body.lines();
    match lines.next() {
        Some("t,mean_V,mean_relerr,trials") => {}
        other => {
            return Err(malformed(format!(
                "unexpected header {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let mut curve = EnsembleCurve {
        t: Vec::new(),
        mean_v: Vec::new(),
        mean_relerr: Vec::new(),
        trials: 0,
    };
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(format!(
                "line {}: expected 4 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_field = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| malformed(format!("line {}: {e}", lineno + 2)))
        };
        curve.t.push(parse_field(fields[0])?);
        curve.mean_v.push(parse_field(fields[1])?);
        curve.mean_relerr.push(parse_field(fields[2])?);
        let trials: usize = fields[3]
            .parse()
            .map_err(|e| malformed(format!("line {}: {e}", lineno + 2)))?;
        if curve.trials == 0 {
            curve.trials = trials;
        } else if curve.trials != trials {
            return Err(malformed(format!(
                "line {}: trial count changed from {} to {trials}",
                lineno + 2,
                curve.trials
            )));
        }
    }
    Ok(curve)
}

/// Writes the report's curve as CSV. Byte-deterministic for a given report.
pub fn emit_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    std::fs::write(path, curve_to_csv(&report.curve)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_curve_csv(path: &Path) -> Result<EnsembleCurve> {
    let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_curve_csv(&body, path)
}
