//! Disagreement bookkeeping, decay-rate fitting, and the exponential-bound
//! verdict.
//!
//! The convergence claim under test: the ensemble mean of
//! `V = 1/2 ||x - Ave(x_0) 1||^2` decays at least as fast as
//! `V(0) * exp(-lambda2 * t)`, with `lambda2` the Fiedler value of the
//! feasible graph. The bound is checked on mean `V` (the quantity the claim
//! is actually about); the relative error `||e_t|| / ||e_0||` is recorded
//! alongside because that is the natural axis for plots.

use crate::dynamics::Trajectory;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fraction of the horizon skipped at the start of the default fit window
/// (transient from the initial active-set distribution).
pub const FIT_WINDOW_SKIP_FRACTION: f64 = 0.05;

/// Mean-V floor below which points are excluded from fit windows.
pub const FIT_WINDOW_V_FLOOR: f64 = 1e-24;

/// Mean-V floor below which points are exempt from the exponential bound.
pub const BOUND_CHECK_V_FLOOR: f64 = 1e-20;

/// Default multiplicative slack for Monte Carlo bound checks (finite-sample
/// allowance at >= 200 trials).
pub const DEFAULT_BOUND_SLACK: f64 = 1.1;

/// Minimum number of points for a least-squares fit.
pub const MIN_FIT_POINTS: usize = 10;

/// The disagreement vector `e = x - Ave(x) 1`; orthogonal to the all-ones
/// vector up to rounding.
pub fn disagreement(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|&v| v - mean).collect()
}

/// `V(e) = 1/2 ||e||^2`.
pub fn lyapunov(e: &[f64]) -> f64 {
    0.5 * e.iter().map(|&v| v * v).sum::<f64>()
}

/// One scalar measurement along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisagreementRecord {
    pub t: f64,
    pub v: f64,
    pub relerr: f64,
}

/// The scalar rows of a trajectory, in step order.
pub fn disagreement_records(trajectory: &Trajectory) -> Vec<DisagreementRecord> {
    trajectory
        .records
        .iter()
        .map(|r| DisagreementRecord {
            t: r.t,
            v: r.lyapunov,
            relerr: r.relerr,
        })
        .collect()
}

/// Trial-averaged curves on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCurve {
    pub t: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub mean_relerr: Vec<f64>,
    /// Number of trials averaged at every time point.
    pub trials: usize,
}

impl EnsembleCurve {
    /// Averages trajectories point-by-point. All trajectories must share the
    /// record grid (same config), and averaging runs in trial-index order so
    /// the result is independent of how trials were scheduled.
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidConfig("cannot aggregate zero trajectories".into()))?;
        let t: Vec<f64> = first.records.iter().map(|r| r.t).collect();
        let len = t.len();
        let mut mean_v = vec![0.0f64; len];
        let mut mean_relerr = vec![0.0f64; len];
        for traj in trajectories {
            if traj.records.len() != len
                || traj.records.iter().zip(&t).any(|(r, &tt)| r.t != tt)
            {
                return Err(Error::InvalidConfig(
                    "trajectories disagree on the record grid; \
                     they must come from one config"
                        .into(),
                ));
            }
            for (i, r) in traj.records.iter().enumerate() {
                mean_v[i] += r.lyapunov;
                mean_relerr[i] += r.relerr;
            }
        }
        let scale = 1.0 / trajectories.len() as f64;
        for v in &mut mean_v {
            *v *= scale;
        }
        for v in &mut mean_relerr {
            *v *= scale;
        }
        Ok(Self {
            t,
            mean_v,
            mean_relerr,
            trials: trajectories.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Closed time interval over which to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
}

/// The default fit window: skip the first 5% of the horizon, stop where
/// mean V first drops below [`FIT_WINDOW_V_FLOOR`]. `None` when fewer than
/// [`MIN_FIT_POINTS`] points survive.
pub fn default_fit_window(curve: &EnsembleCurve) -> Option<FitWindow> {
    if curve.len() < 2 {
        return None;
    }
    let t0 = curve.t[0];
    let t_span = curve.t[curve.len() - 1] - t0;
    let t_lo = t0 + FIT_WINDOW_SKIP_FRACTION * t_span;
    let cutoff = curve
        .mean_v
        .iter()
        .position(|&v| v < FIT_WINDOW_V_FLOOR)
        .unwrap_or(curve.len());
    if cutoff == 0 {
        return None;
    }
    let t_hi = curve.t[cutoff - 1];
    let window = FitWindow { t_lo, t_hi };
    let points = curve
        .t
        .iter()
        .zip(&curve.mean_v)
        .filter(|&(&t, &v)| t >= t_lo && t <= t_hi && v > 0.0)
        .count();
    (points >= MIN_FIT_POINTS).then_some(window)
}

fn windowed_log_points<'a>(
    curve: &'a EnsembleCurve,
    values: &'a [f64],
    window: FitWindow,
    what: &str,
) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for (&t, &v) in curve.t.iter().zip(values) {
        if t < window.t_lo || t > window.t_hi {
            continue;
        }
        if v <= 0.0 {
            return Err(Error::UnusableFitWindow(format!(
                "non-positive {what} at t={t}; shrink the window"
            )));
        }
        points.push((t, v.ln()));
    }
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::UnusableFitWindow(format!(
            "only {} points in [{}, {}], need at least {MIN_FIT_POINTS}",
            points.len(),
            window.t_lo,
            window.t_hi
        )));
    }
    Ok(points)
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, y) in points {
        cov += (t - t_mean) * (y - y_mean);
        var += (t - t_mean) * (t - t_mean);
    }
    cov / var
}

/// Empirical decay rate: minus the least-squares slope of `ln(mean V)`
/// against `t` over the window. A positive result means decay. The rate is
/// invariant to scaling `V` by any positive constant (the intercept absorbs
/// it).
pub fn fit_decay_rate(curve: &EnsembleCurve, window: FitWindow) -> Result<f64> {
    let points = windowed_log_points(curve, &curve.mean_v, window, "mean V")?;
    Ok(-ols_slope(&points))
}

/// Goodness of the log-linear model for mean relative error: the R^2 of
/// `ln(mean relerr)` against `t` over the window. Close to 1 means the
/// decay is exponential in shape.
pub fn log_linear_r2(curve: &EnsembleCurve, window: FitWindow) -> Result<f64> {
    let points = windowed_log_points(curve, &curve.mean_relerr, window, "mean relerr")?;
    let slope = ols_slope(&points);
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(t, y) in &points {
        let fitted = y_mean + slope * (t - t_mean);
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - y_mean) * (y - y_mean);
    }
    if ss_tot == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// True iff `mean V(t) <= slack * V(0) * exp(-lambda2 * (t - t_0))` at every
/// recorded point down to [`BOUND_CHECK_V_FLOOR`].
pub fn bound_check(curve: &EnsembleCurve, lambda2: f64, slack: f64) -> bool {
    if curve.is_empty() || !lambda2.is_finite() || lambda2 <= 0.0 {
        return false;
    }
    let v0 = curve.mean_v[0];
    let t0 = curve.t[0];
    curve
        .t
        .iter()
        .zip(&curve.mean_v)
        .filter(|&(_, &v)| v >= BOUND_CHECK_V_FLOOR)
        .all(|(&t, &v)| v <= slack * v0 * (-lambda2 * (t - t0)).exp())
}
