//! The Euler-discretized stochastic consensus recursion.
//!
//! Per step, fresh link decisions are drawn for every feasible edge from the
//! current state and the previous active set, and the state contracts along
//! the sampled Laplacian:
//!
//! ```text
//! x_{k+1} = x_k - delta * L_k * x_k ,    L_k = L(x_k, edges before k).
//! ```
//!
//! The product `L_k * x_k` is accumulated edge-wise in canonical edge order
//! and the sampled decisions double as the next active set, so a trajectory
//! is a pure function of `(config, trial_index)` — bit-identical across
//! machines, thread counts and runs.
//!
//! With `delta <= 1/n` every update is a convex combination of neighbor
//! values: `x_{k+1,i} = (1 - delta*d_i) x_i + delta * sum_j x_j` with
//! `1 - delta*d_i >= 1/n > 0`. That keeps `[0,1]^n` forward-invariant and
//! makes the disagreement norm non-increasing step by step; both counters
//! are tracked on every step, not just recorded ones. The continuous-time
//! model needs neither condition, so larger steps are allowed behind an
//! explicit override.

use crate::game::{weight_create, weight_maintain, GameParams};
use crate::rng::{mix_seed, unit_f64};
use crate::topology::{
    generate_feasible_graph, init_active_sets, EdgeState, FeasibleGraph,
};
use crate::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Full experiment description. Doubles as the JSON config-file schema; every
/// field has a CLI flag of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Vertex count. No default; must come from the file or the CLI.
    #[serde(default)]
    pub n: usize,
    /// Probability that an unordered pair is a feasible edge.
    #[serde(default = "defaults::p")]
    pub p1: f64,
    /// Probability that a feasible edge starts active.
    #[serde(default = "defaults::p")]
    pub p2: f64,
    /// Benefit per unit coordination; must exceed `c`.
    #[serde(default = "defaults::b")]
    pub b: f64,
    /// Cost per unit coordination; must be positive.
    #[serde(default = "defaults::c")]
    pub c: f64,
    /// Euler step size. Omitted means `1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "defaults::steps")]
    pub steps: u64,
    #[serde(default = "defaults::trials")]
    pub trials: u64,
    /// Master seed; per-trial generators derive from it via
    /// [`crate::rng::mix_seed`].
    #[serde(default)]
    pub seed: u64,
    /// Subsampling stride for trajectory records.
    #[serde(default = "defaults::record_every")]
    pub record_every: u64,
    /// Permit `delta > 1/n`, forfeiting the invariance guarantee.
    #[serde(default)]
    pub allow_large_delta: bool,
    /// Reuse one feasible graph across all trials of an ensemble.
    #[serde(default)]
    pub fixed_graph: bool,
    /// Force state snapshots on or off; omitted means "snapshot when
    /// `n <= 200`".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<bool>,
    /// Compute the feasible graph's Fiedler value per trial (dense
    /// eigensolve; the one expensive non-simulation step at large `n`).
    #[serde(default = "defaults::yes")]
    pub compute_lambda2: bool,
    /// Multiplicative tolerance for the exponential-bound verdict.
    #[serde(default = "defaults::bound_slack")]
    pub bound_slack: f64,
}

mod defaults {
    pub fn p() -> f64 {
        0.2
    }
    pub fn b() -> f64 {
        5.0
    }
    pub fn c() -> f64 {
        4.0
    }
    pub fn steps() -> u64 {
        1000
    }
    pub fn trials() -> u64 {
        1
    }
    pub fn record_every() -> u64 {
        1
    }
    pub fn yes() -> bool {
        true
    }
    pub fn bound_slack() -> f64 {
        1.1
    }
}

impl SimConfig {
    /// A minimal valid config for the given size; fields beyond `n` hold the
    /// reference experiment's values.
    pub fn for_n(n: usize) -> Self {
        Self {
            n,
            p1: defaults::p(),
            p2: defaults::p(),
            b: defaults::b(),
            c: defaults::c(),
            delta: None,
            steps: defaults::steps(),
            trials: defaults::trials(),
            seed: 0,
            record_every: defaults::record_every(),
            allow_large_delta: false,
            fixed_graph: false,
            snapshots: None,
            compute_lambda2: true,
            bound_slack: defaults::bound_slack(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig(
                "n must be at least 1 (set it in the config file or with --n)".into(),
            ));
        }
        if !(self.p1.is_finite() && self.p1 > 0.0 && self.p1 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p1 must lie in (0, 1], got {}",
                self.p1
            )));
        }
        if !(self.p2.is_finite() && (0.0..=1.0).contains(&self.p2)) {
            return Err(Error::InvalidConfig(format!(
                "p2 must lie in [0, 1], got {}",
                self.p2
            )));
        }
        GameParams::new(self.b, self.c)?;
        if let Some(d) = self.delta {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "delta must be positive, got {d}"
                )));
            }
            let invariance_cap = 1.0 / self.n as f64;
            if d > invariance_cap && !self.allow_large_delta {
                return Err(Error::InvalidConfig(format!(
                    "delta={d} exceeds 1/n={invariance_cap}, which voids the \
                     [0,1]-invariance guarantee; pass --allow-large-delta to force it"
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        if !(self.bound_slack.is_finite() && self.bound_slack >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bound_slack must be >= 1, got {}",
                self.bound_slack
            )));
        }
        Ok(())
    }

    /// The step size actually used: configured value or the `1/n` default.
    pub fn effective_delta(&self) -> f64 {
        self.delta.unwrap_or(1.0 / self.n as f64)
    }

    /// Game parameters; call after [`SimConfig::validate`].
    pub fn game_params(&self) -> GameParams {
        GameParams { b: self.b, c: self.c }
    }
}

/// One recorded point along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    /// Simulated time `step * delta`.
    pub t: f64,
    /// `V = 1/2 ||x - Ave(x_0) 1||^2`.
    pub lyapunov: f64,
    /// `||e_t|| / ||e_0||`; zero when the trajectory starts at consensus.
    pub relerr: f64,
    /// `sum_i x_i`, for conservation checks.
    pub state_sum: f64,
    pub active_edges: u64,
    /// Full state snapshot, present per the snapshot policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<f64>>,
}

/// A completed trial. Scalar diagnostics (`max_sum_drift`, the violation
/// counters) are accumulated on every step even when records are subsampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trial_index: u64,
    /// Mixed per-trial seed, sufficient to replay this trial alone.
    pub seed: u64,
    pub n: usize,
    pub delta: f64,
    pub initial_sum: f64,
    pub initial_average: f64,
    pub records: Vec<TrajectoryRecord>,
    pub final_state: Vec<f64>,
    /// `max_k |sum(x_k) - sum(x_0)|` over all steps.
    pub max_sum_drift: f64,
    /// Steps on which some coordinate left `[0,1]`.
    pub invariance_violations: u64,
    /// Steps on which `V` increased beyond the float-roundoff allowance of
    /// [`lyapunov_noise_floor`]. In exact arithmetic `V` never increases;
    /// in doubles it wobbles by ulps once the state reaches consensus to
    /// machine precision, which this counter must not flag.
    pub lyapunov_increases: u64,
}

/// How much `V` may apparently grow in one step from rounding alone.
///
/// The step map contracts `V` exactly, but each coordinate picks up
/// absolute rounding `O(n * eps * sqrt(V))` (flow sums near consensus) plus
/// `O(eps)` floor terms, and the `V` summation itself carries `O(n * eps)`
/// relative error. Anything above this envelope is a real violation.
pub fn lyapunov_noise_floor(n: usize, v: f64) -> f64 {
    let nf = n as f64;
    f64::EPSILON * (4.0 * nf * nf.sqrt() * v + 8.0 * (nf * v).sqrt() + 8.0 * nf * f64::EPSILON)
}

/// Test and harness hooks: inject an exact initial state, pin a shared
/// graph, or override the snapshot policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOverrides<'a> {
    pub x0: Option<&'a [f64]>,
    pub graph: Option<&'a FeasibleGraph>,
    pub snapshots: Option<bool>,
}

/// A trial together with the graph it ran on (the harness needs the graph
/// for its Fiedler value; the trajectory alone does not retain it).
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trajectory: Trajectory,
    pub graph: FeasibleGraph,
}

/// Draws decisions for every feasible edge, applies
/// `x -= delta * L * x` edge-wise, and writes the decisions back as the next
/// active set. Returns the number of linked edges.
fn advance<R: RngCore + ?Sized>(
    g: &FeasibleGraph,
    params: &GameParams,
    delta: f64,
    x: &mut [f64],
    active: &mut [bool],
    flow: &mut [f64],
    rng: &mut R,
) -> u64 {
    flow.fill(0.0);
    let mut linked = 0u64;
    for (idx, &(a, b)) in g.edges().iter().enumerate() {
        let (i, j) = (a as usize, b as usize);
        let w = if active[idx] {
            weight_maintain(x[i], x[j], params)
        } else {
            weight_create(x[i], x[j], params)
        };
        let keep = unit_f64(rng) < w;
        active[idx] = keep;
        if keep {
            linked += 1;
            let d = x[i] - x[j];
            flow[i] += d;
            flow[j] -= d;
        }
    }
    for (xi, fi) in x.iter_mut().zip(flow.iter()) {
        *xi -= delta * fi;
    }
    linked
}

/// One step of the recursion, as a pure function: samples decisions for
/// every feasible edge, applies the edge-wise update, and returns the new
/// state vector together with the next active set.
pub fn step<R: RngCore + ?Sized>(
    x: &[f64],
    state: &EdgeState,
    g: &FeasibleGraph,
    params: &GameParams,
    delta: f64,
    rng: &mut R,
) -> (Vec<f64>, EdgeState) {
    let mut x_next = x.to_vec();
    let mut active = state.flags().to_vec();
    let mut flow = vec![0.0; x.len()];
    advance(g, params, delta, &mut x_next, &mut active, &mut flow, rng);
    (x_next, EdgeState::from_flags(active))
}

/// Runs one trial: derives the trial seed, draws graph, initial active set
/// and `x_0` (unless overridden), then iterates `config.steps` steps.
pub fn run_trial_full(
    config: &SimConfig,
    trial_index: u64,
    overrides: TrialOverrides<'_>,
) -> Result<TrialRun> {
    config.validate()?;
    let params = config.game_params();
    let delta = config.effective_delta();
    let n = config.n;
    let seed = mix_seed(config.seed, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let graph = match overrides.graph {
        Some(g) => {
            if g.n() != n {
                return Err(Error::InvalidConfig(format!(
                    "pinned graph has n={}, config has n={n}",
                    g.n()
                )));
            }
            g.clone()
        }
        None => generate_feasible_graph(n, config.p1, &mut rng)?,
    };
    let state0 = init_active_sets(&graph, config.p2, &mut rng)?;
    let x0: Vec<f64> = match overrides.x0 {
        Some(v) => {
            if v.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "injected x0 has length {}, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|value| !value.is_finite()) {
                return Err(Error::InvalidConfig("injected x0 has non-finite entries".into()));
            }
            v.to_vec()
        }
        None => (0..n).map(|_| unit_f64(&mut rng)).collect(),
    };
    let snapshots = overrides
        .snapshots
        .unwrap_or_else(|| config.snapshots.unwrap_or(n <= 200));

    let initial_sum: f64 = x0.iter().sum();
    let initial_average = initial_sum / n as f64;
    let v0 = half_squared_distance(&x0, initial_average);

    let mut x = x0;
    let mut active = state0.flags().to_vec();
    let mut flow = vec![0.0; n];

    let make_record = |k: u64, x: &[f64], v: f64, sum: f64, active_edges: u64| TrajectoryRecord {
        step: k,
        t: k as f64 * delta,
        lyapunov: v,
        relerr: if v0 > 0.0 { (v / v0).sqrt() } else { 0.0 },
        state_sum: sum,
        active_edges,
        state: snapshots.then(|| x.to_vec()),
    };
    let mut records = Vec::with_capacity((config.steps / config.record_every + 2) as usize);
    records.push(make_record(0, &x, v0, initial_sum, state0.active_count() as u64));

    let mut max_sum_drift = 0.0f64;
    let mut invariance_violations = 0u64;
    let mut lyapunov_increases = 0u64;
    let mut v_prev = v0;

    for k in 1..=config.steps {
        let linked = advance(&graph, &params, delta, &mut x, &mut active, &mut flow, &mut rng);

        let sum: f64 = x.iter().sum();
        let v = half_squared_distance(&x, initial_average);
        max_sum_drift = max_sum_drift.max((sum - initial_sum).abs());
        if x.iter().any(|&value| !(0.0..=1.0).contains(&value)) {
            invariance_violations += 1;
        }
        if v > v_prev + lyapunov_noise_floor(n, v_prev) {
            lyapunov_increases += 1;
        }
        v_prev = v;

        if k % config.record_every == 0 || k == config.steps {
            records.push(make_record(k, &x, v, sum, linked));
        }
    }

    Ok(TrialRun {
        trajectory: Trajectory {
            trial_index,
            seed,
            n,
            delta,
            initial_sum,
            initial_average,
            records,
            final_state: x,
            max_sum_drift,
            invariance_violations,
            lyapunov_increases,
        },
        graph,
    })
}

/// [`run_trial_full`] without overrides, dropping the graph.
pub fn run_trial(config: &SimConfig, trial_index: u64) -> Result<Trajectory> {
    run_trial_full(config, trial_index, TrialOverrides::default()).map(|run| run.trajectory)
}

/// Maximum conservation drift `|sum(x_k) - sum(x_0)|` over recorded steps.
pub fn conservation_check(trajectory: &Trajectory) -> f64 {
    trajectory
        .records
        .iter()
        .map(|r| (r.state_sum - trajectory.initial_sum).abs())
        .fold(0.0, f64::max)
}

fn half_squared_distance(x: &[f64], center: f64) -> f64 {
    0.5 * x
        .iter()
        .map(|&v| {
            let e = v - center;
            e * e
        })
        .sum::<f64>()
}
