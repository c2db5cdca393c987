use clap::{Args, Parser, Subcommand};
use evocons::dynamics::{run_trial_full, SimConfig, TrialOverrides};
use evocons::harness::{curve_to_csv, emit_csv, fmt_f64, run_ensemble};
use evocons::laplacian::{empirical_mean_laplacian, full_graph_laplacian, weighted_laplacian};
use evocons::rng::{mix_seed, unit_f64};
use evocons::spectral::{fiedler_value, graph_fiedler_value, spectrum};
use evocons::topology::{generate_feasible_graph, init_active_sets, FeasibleGraph};
use evocons::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::ExitCode;

/// Stream index for the auxiliary draws of `check`; distinct from every
/// trial stream and from the fixed-graph stream.
const CHECK_STREAM: u64 = u64::MAX - 1;

#[derive(Parser)]
#[command(
    name = "evocons",
    version,
    about = "Average consensus over evolutionary graphs: simulate, aggregate, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Experiment parameters; any flag overrides the config file's value.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config file with the same keys as these flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vertex count
    #[arg(long)]
    n: Option<usize>,
    /// Feasible-edge probability
    #[arg(long)]
    p1: Option<f64>,
    /// Initial activation probability
    #[arg(long)]
    p2: Option<f64>,
    /// Benefit per unit coordination (must exceed c)
    #[arg(long)]
    b: Option<f64>,
    /// Cost per unit coordination
    #[arg(long)]
    c: Option<f64>,
    /// Euler step size (default 1/n)
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Record every k-th step
    #[arg(long)]
    record_every: Option<u64>,
    /// Permit delta > 1/n (forfeits the [0,1]-invariance guarantee)
    #[arg(long)]
    allow_large_delta: bool,
    /// Share one feasible graph across all trials
    #[arg(long)]
    fixed_graph: bool,
    /// Force full state snapshots into trajectory records
    #[arg(long)]
    snapshots: bool,
    /// Skip the per-trial Fiedler-value eigensolve
    #[arg(long)]
    skip_lambda2: bool,
    /// Multiplicative slack for the exponential-bound verdict
    #[arg(long)]
    bound_slack: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trial and emit its full trajectory as JSON
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trial index (selects the per-trial seed stream)
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Write the trajectory here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the trial's feasible graph as JSON
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Run a Monte Carlo ensemble and emit the averaged curves as CSV
    Ensemble {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (0 = one per core); never affects the output bytes
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full report as JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the Fiedler value and extremal eigenvalues of a dumped graph
    Spectrum {
        /// Graph JSON produced by `simulate --dump-graph`
        #[arg(long)]
        graph: PathBuf,
    },
    /// Run the invariant battery on a config and report pass/fail
    Check {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
}

fn build_config(args: &ConfigArgs) -> Result<SimConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_str::<SimConfig>(&body).map_err(|e| Error::Malformed {
                path: path.clone(),
                msg: e.to_string(),
            })?
        }
        None => SimConfig::for_n(0),
    };
    if let Some(v) = args.n {
        config.n = v;
    }
    if let Some(v) = args.p1 {
        config.p1 = v;
    }
    if let Some(v) = args.p2 {
        config.p2 = v;
    }
    if let Some(v) = args.b {
        config.b = v;
    }
    if let Some(v) = args.c {
        config.c = v;
    }
    if let Some(v) = args.delta {
        config.delta = Some(v);
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.record_every {
        config.record_every = v;
    }
    if args.allow_large_delta {
        config.allow_large_delta = true;
    }
    if args.fixed_graph {
        config.fixed_graph = true;
    }
    if args.snapshots {
        config.snapshots = Some(true);
    }
    if args.skip_lambda2 {
        config.compute_lambda2 = false;
    }
    if let Some(v) = args.bound_slack {
        config.bound_slack = v;
    }
    config.validate()?;
    Ok(config)
}

fn write_text(path: &PathBuf, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}

fn cmd_simulate(
    config: SimConfig,
    trial: u64,
    out: Option<PathBuf>,
    dump_graph: Option<PathBuf>,
) -> Result<()> {
    let run = run_trial_full(&config, trial, TrialOverrides::default())?;
    if let Some(path) = dump_graph {
        run.graph.save(&path)?;
        eprintln!("wrote graph ({} edges) to {}", run.graph.edge_count(), path.display());
    }
    let mut body = serde_json::to_string_pretty(&run.trajectory)
        .expect("trajectory serialization cannot fail");
    body.push('\n');
    match out {
        Some(path) => {
            write_text(&path, &body)?;
            println!(
                "trial {trial}: {} records, final V = {}, wrote {}",
                run.trajectory.records.len(),
                fmt_f64(run.trajectory.records.last().map_or(0.0, |r| r.lyapunov)),
                path.display()
            );
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_ensemble(
    config: SimConfig,
    parallelism: usize,
    out: Option<PathBuf>,
    report_path: Option<PathBuf>,
) -> Result<()> {
    let report = run_ensemble(&config, parallelism)?;
    let mut summary = Vec::new();
    summary.push(format!(
        "{} trials, {} steps, n = {}",
        config.trials, config.steps, config.n
    ));
    if let Some(l2) = report.lambda2_min {
        summary.push(format!("lambda2 min over trials: {l2:.6}"));
    }
    if let Some(rate) = report.fitted_decay_rate {
        summary.push(format!("fitted decay rate of mean V: {rate:.6}"));
    }
    if let Some(ok) = report.bound_satisfied {
        summary.push(format!(
            "exponential bound (slack {}): {}",
            config.bound_slack,
            if ok { "satisfied" } else { "VIOLATED" }
        ));
    }
    summary.push(format!("wall clock: {:.2}s", report.wall_clock_secs));

    match out {
        Some(path) => {
            emit_csv(&report, &path)?;
            for line in &summary {
                println!("{line}");
            }
            println!("wrote {}", path.display());
        }
        None => {
            print!("{}", curve_to_csv(&report.curve));
            for line in &summary {
                eprintln!("{line}");
            }
        }
    }
    if let Some(path) = report_path {
        write_text(&path, &report.to_json_string())?;
    }
    Ok(())
}

fn cmd_spectrum(graph_path: PathBuf) -> Result<()> {
    let g = FeasibleGraph::load(&graph_path)?;
    let l = full_graph_laplacian(&g);
    let s = spectrum(&l);
    let lambda2 = fiedler_value(&l)?;
    let body = serde_json::json!({
        "n": g.n(),
        "edge_count": g.edge_count(),
        "lambda2": lambda2,
        "lambda_min": s.min(),
        "lambda_max": s.max(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&body).expect("spectrum serialization cannot fail")
    );
    Ok(())
}

struct CheckOutcome {
    name: &'static str,
    // None = skipped
    passed: Option<bool>,
    detail: String,
}

fn cmd_check(config: SimConfig, parallelism: usize) -> Result<ExitCode> {
    let mut outcomes: Vec<CheckOutcome> = Vec::new();
    let report = run_ensemble(&config, parallelism)?;
    let n = config.n;
    let delta = config.effective_delta();

    let budget = n as f64 * config.steps.max(1) as f64 * 2f64.powi(-40);
    outcomes.push(CheckOutcome {
        name: "conservation",
        passed: Some(report.max_sum_drift < budget),
        detail: format!(
            "max |sum drift| = {:.3e}, budget {:.3e}",
            report.max_sum_drift, budget
        ),
    });

    if delta <= 1.0 / n as f64 {
        outcomes.push(CheckOutcome {
            name: "forward-invariance",
            passed: Some(report.invariance_violations == 0),
            detail: format!("{} steps left [0,1]^n", report.invariance_violations),
        });
        outcomes.push(CheckOutcome {
            name: "monotone-lyapunov",
            passed: Some(report.lyapunov_increases == 0),
            detail: format!("{} steps increased V", report.lyapunov_increases),
        });
    } else {
        outcomes.push(CheckOutcome {
            name: "forward-invariance",
            passed: None,
            detail: format!("delta = {delta} > 1/n; guarantee does not apply"),
        });
    }

    if n <= 100 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, CHECK_STREAM));
        let g = generate_feasible_graph(n, config.p1, &mut rng)?;
        let state = init_active_sets(&g, config.p2, &mut rng)?;
        let x: Vec<f64> = (0..n).map(|_| unit_f64(&mut rng)).collect();
        let params = config.game_params();

        let draws = 10_000u32;
        let mean = empirical_mean_laplacian(&g, &state, &x, &params, draws, &mut rng);
        let w = weighted_laplacian(&g, &state, &x, &params);
        let mut gap = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    gap = gap.max((mean[(i, j)] - w.entry(i, j)).abs());
                }
            }
        }
        let tol = 4.0 * (0.25 / draws as f64).sqrt();
        outcomes.push(CheckOutcome {
            name: "expected-laplacian",
            passed: Some(gap < tol),
            detail: format!("max off-diagonal gap {gap:.4e} over {draws} draws, tol {tol:.4e}"),
        });

        let lambda2_feasible = graph_fiedler_value(&g)?;
        let mut worst = f64::INFINITY;
        for _ in 0..20 {
            let xr: Vec<f64> = (0..n).map(|_| unit_f64(&mut rng)).collect();
            let sr = init_active_sets(&g, config.p2, &mut rng)?;
            let lw = fiedler_value(&weighted_laplacian(&g, &sr, &xr, &params))?;
            worst = worst.min(lw - 0.5 * lambda2_feasible);
        }
        outcomes.push(CheckOutcome {
            name: "weighted-connectivity",
            passed: Some(worst >= -1e-9),
            detail: format!(
                "min of lambda2(W) - lambda2(G')/2 over 20 states: {worst:.4e}"
            ),
        });
    } else {
        outcomes.push(CheckOutcome {
            name: "expected-laplacian",
            passed: None,
            detail: format!("dense spot checks run at n <= 100, got n = {n}"),
        });
    }

    match report.bound_satisfied {
        Some(ok) if config.trials >= 200 => outcomes.push(CheckOutcome {
            name: "exponential-bound",
            passed: Some(ok),
            detail: format!(
                "slack {} against lambda2 = {:.6}",
                config.bound_slack,
                report.lambda2_min.unwrap_or(f64::NAN)
            ),
        }),
        Some(ok) => outcomes.push(CheckOutcome {
            name: "exponential-bound",
            passed: None,
            detail: format!(
                "needs >= 200 trials for the slack to be meaningful (got {}); observed: {}",
                config.trials,
                if ok { "satisfied" } else { "violated" }
            ),
        }),
        None => outcomes.push(CheckOutcome {
            name: "exponential-bound",
            passed: None,
            detail: "lambda2 computation disabled".into(),
        }),
    }

    let mut all_pass = true;
    for o in &outcomes {
        let tag = match o.passed {
            Some(true) => "PASS",
            Some(false) => {
                all_pass = false;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} {}: {}", o.name, o.detail);
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::InvalidConfig(_) | Error::InvalidGraph(_) | Error::Malformed { .. } => {
            ExitCode::from(2)
        }
        _ => ExitCode::FAILURE,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, trial, out, dump_graph } => {
            let config = build_config(&config)?;
            cmd_simulate(config, trial, out, dump_graph)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ensemble { config, parallelism, out, report } => {
            let config = build_config(&config)?;
            cmd_ensemble(config, parallelism, out, report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum { graph } => {
            cmd_spectrum(graph)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config, parallelism } => {
            let config = build_config(&config)?;
            cmd_check(config, parallelism)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
