//! Batch experiment runner: builds scenarios, runs solvers, simulations,
//! differential-inclusion probes, and stability classification, and writes
//! plot-ready CSV/JSONL outputs plus a run manifest.
//!
//! Every output directory is self-describing (it embeds the scenario spec),
//! and the manifest is written last as the commit point. Reruns with the
//! same arguments produce byte-identical outputs.
//!
//! Exit codes: 0 on success, 2 on validation/usage errors, 3 when a solver
//! failed to converge (results are still written).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mislearn::decision::default_opt_tol;
use mislearn::di::{integrate_di, probe_global_attraction, start_grid, SelectionRule};
use mislearn::dynamics::{
    concentration_rate, diagnose_convergence, is_subjectively_exogenous, load_path_record,
    oscillation_stats, probe_attraction, save_path_record, simulate_path_stream, Policy,
    ProbeMode,
};
use mislearn::equilibrium::{
    find_game_bne, find_intended_bne, find_mixed_bne_binary, find_pure_bne, rationalizable_set,
};
use mislearn::model::{build_game_scenario, build_scenario, GameScenarioSpec, ScenarioSpec};
use mislearn::scenarios::{describe, list_builtins, make_builtin, Built};
use mislearn::{dynamics, GameScenario, MixedAction, Scenario};

mod output;

use output::{fmt_g17, OutputDir};

#[derive(Parser)]
#[command(
    name = "mislearn",
    version,
    about = "Misspecified Bayesian learning: equilibria, dynamics, and stability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List, inspect, or export scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Solve for Berk-Nash equilibria.
    Solve(SolveArgs),
    /// Simulate seeded learning paths.
    Simulate(SimulateArgs),
    /// Convergence, concentration, and oscillation diagnostics on a run
    /// directory produced by `simulate`.
    Diagnose(DiagnoseArgs),
    /// Differential-inclusion integration and global-attraction probes.
    Di(DiArgs),
    /// Local stability classification of point beliefs.
    Stability(StabilityArgs),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Print the builtin catalog.
    List,
    /// Show one builtin's parameters and reference values.
    Show { name: String },
    /// Write the full spec file for a scenario.
    Export {
        scenario: String,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioRef {
    /// Builtin name or path to a scenario spec JSON file.
    scenario: String,
    /// Builtin parameter overrides, repeatable.
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scn: ScenarioRef,
    /// Scan pure actions for equilibria.
    #[arg(long)]
    pure: bool,
    /// Root-find the binary-action mixed equilibrium.
    #[arg(long)]
    mixed_binary: bool,
    /// Find equilibria in intended (random-utility) strategies at this
    /// temperature.
    #[arg(long, value_name = "TAU")]
    intended: Option<f64>,
    /// Solve a game scenario by damped best-response iteration.
    #[arg(long)]
    game: bool,
    /// Iterate the justifiability operator to the rationalizable set.
    #[arg(long)]
    rationalize: bool,
    /// Simplex mesh denominator for the rationalizability operator.
    #[arg(long, default_value_t = 32)]
    mesh: usize,
    /// Damping for fixed-point iterations.
    #[arg(long, default_value_t = 0.2)]
    damping: f64,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scn: ScenarioRef,
    /// Seed range `a..b` (inclusive) or a single seed.
    #[arg(long, default_value = "0..0")]
    seeds: String,
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    /// `myopic`, `logit:TAU`, or `override`.
    #[arg(long, default_value = "myopic")]
    policy: String,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// A run directory written by `simulate`.
    run_dir: PathBuf,
    /// Trailing window for convergence checks.
    #[arg(long, default_value_t = 0)]
    window: usize,
    /// Frequency-settling tolerance (sup norm).
    #[arg(long, default_value_t = 0.02)]
    freq_tol: f64,
    /// Comma-separated parameter indices for the concentration fit.
    #[arg(long, value_name = "I,J,...")]
    concentration_set: Option<String>,
    /// Comma-separated pair of parameter indices for oscillation statistics.
    #[arg(long, value_name = "I,J")]
    pair: Option<String>,
}

#[derive(Args)]
struct DiArgs {
    #[command(flatten)]
    scn: ScenarioRef,
    /// Probe global attraction of the solved mixed equilibrium set.
    #[arg(long)]
    probe_attraction: bool,
    /// Integrate one trajectory.
    #[arg(long)]
    integrate: bool,
    /// Start point for --integrate: comma-separated weights.
    #[arg(long, value_name = "W,W,...")]
    from: Option<String>,
    /// Selection rule: max_utility, min_speed, or index_order.
    #[arg(long, default_value = "max_utility")]
    selection: String,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 40.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 101)]
    starts: usize,
    /// Belief-simplex mesh for gridded minimizer sets.
    #[arg(long, default_value_t = 4)]
    belief_mesh: usize,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    scn: ScenarioRef,
    /// Grid index of the point belief to classify.
    #[arg(long, conflicts_with = "probe_action")]
    theta: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    radius: f64,
    #[arg(long, default_value_t = 5)]
    shells: usize,
    /// Monte Carlo mode instead: probe convergence to this action index.
    #[arg(long)]
    probe_action: Option<usize>,
    /// Probe mode: `positive` (full-support prior) or `uniform:EPS`
    /// (random priors in the stability ball of radius EPS).
    #[arg(long, default_value = "positive")]
    probe_mode: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 5000)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trailing window for the per-replication convergence check.
    #[arg(long, default_value_t = 0)]
    window: usize,
    /// Policy for the probe replications.
    #[arg(long, default_value = "myopic")]
    policy: String,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, f64>, String> {
    let mut map = BTreeMap::new();
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("bad --param `{pair}`, expected K=V"))?;
        let value: f64 = v.parse().map_err(|e| format!("bad value in `{pair}`: {e}"))?;
        map.insert(k.to_string(), value);
    }
    Ok(map)
}

fn load_built(reference: &ScenarioRef) -> Result<Built<f64>, String> {
    let as_path = Path::new(&reference.scenario);
    if as_path.is_file() || reference.scenario.ends_with(".json") {
        if !reference.params.is_empty() {
            return Err("--param applies to builtins, not spec files".into());
        }
        let text = std::fs::read_to_string(as_path)
            .map_err(|e| format!("cannot read {}: {e}", reference.scenario))?;
        // Single-agent specs carry a `grid`; game specs carry `players`.
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("bad JSON: {e}"))?;
        if value.get("players").is_some() {
            let spec = GameScenarioSpec::from_json(&text).map_err(|e| e.to_string())?;
            Ok(Built::Game(
                build_game_scenario::<f64>(&spec).map_err(|e| e.to_string())?,
            ))
        } else {
            let spec = ScenarioSpec::from_json(&text).map_err(|e| e.to_string())?;
            Ok(Built::Single(
                build_scenario::<f64>(&spec).map_err(|e| e.to_string())?,
            ))
        }
    } else {
        let params = parse_params(&reference.params)?;
        make_builtin::<f64>(&reference.scenario, &params).map_err(|e| e.to_string())
    }
}

fn parse_policy(text: &str) -> Result<Policy<f64>, String> {
    if text == "myopic" {
        return Ok(Policy::Myopic { tol: 1e-9 });
    }
    if text == "override" {
        return Ok(Policy::Override);
    }
    if let Some(tau) = text.strip_prefix("logit:") {
        let tau: f64 = tau.parse().map_err(|e| format!("bad logit tau: {e}"))?;
        if tau <= 0.0 {
            return Err("logit tau must be positive".into());
        }
        return Ok(Policy::Logit { tau });
    }
    Err(format!(
        "unknown policy `{text}` (expected myopic, logit:TAU, or override)"
    ))
}

fn parse_seed_range(text: &str) -> Result<(u64, u64), String> {
    if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a.parse().map_err(|e| format!("bad seed range: {e}"))?;
        let hi: u64 = b.parse().map_err(|e| format!("bad seed range: {e}"))?;
        if hi < lo {
            return Err("seed range must be increasing".into());
        }
        Ok((lo, hi))
    } else {
        let s: u64 = text.parse().map_err(|e| format!("bad seed: {e}"))?;
        Ok((s, s))
    }
}

fn parse_index_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn worker_count(jobs: usize) -> usize {
    let from_env = std::env::var("MISLEARN_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    from_env.unwrap_or(default).min(jobs.max(1))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Scenario { action } => run_scenario(action),
        Command::Solve(args) => run_solve(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Diagnose(args) => run_diagnose(args),
        Command::Di(args) => run_di(args),
        Command::Stability(args) => run_stability(args),
    }
}

fn run_scenario(action: ScenarioCmd) -> Result<ExitCode, String> {
    match action {
        ScenarioCmd::List => {
            for d in list_builtins() {
                println!("{:<24} {}", d.name, d.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        ScenarioCmd::Show { name } => {
            let d = describe(&name).map_err(|e| e.to_string())?;
            println!("{}", d.name);
            println!("  {}", d.summary);
            println!("  parameters:");
            for p in &d.params {
                println!("    {:<18} default {:<12} {}", p.name, p.default, p.doc);
            }
            if !d.references.is_empty() {
                println!("  reference values:");
                for (k, v) in &d.references {
                    println!("    {:<24} {}", k, fmt_g17(*v));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        ScenarioCmd::Export {
            scenario,
            params,
            out,
        } => {
            let built = load_built(&ScenarioRef { scenario, params })?;
            let text = match &built {
                Built::Single(s) => s.to_spec().to_canonical_json(),
                Built::Game(g) => g.to_spec().to_canonical_json(),
            };
            match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| e.to_string())?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn scenario_of(built: &Built<f64>) -> Result<&Scenario, String> {
    built
        .as_single()
        .ok_or_else(|| "this command needs a single-agent scenario (did you mean --game?)".into())
}

fn game_of(built: &Built<f64>) -> Result<&GameScenario, String> {
    built
        .as_game()
        .ok_or_else(|| "this command needs a game scenario".into())
}

fn run_solve(args: SolveArgs) -> Result<ExitCode, String> {
    let built = load_built(&args.scn)?;
    let out_dir = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/solve-{}", built.id())));
    let mut out = OutputDir::new(&out_dir)?;
    out.write_scenario(&built)?;

    let tol = default_opt_tol::<f64>();
    let mut any_nonconverged = false;
    let mut results_jsonl = String::new();
    let mut summary = String::from("method,sigma,optimality_gap,converged\n");

    if args.game {
        let game = game_of(&built)?;
        let solved = find_game_bne(game, args.damping, tol, 5_000);
        if solved.is_empty() || solved.iter().any(|r| !r.solver.converged) {
            any_nonconverged = true;
        }
        for r in &solved {
            results_jsonl.push_str(&serde_json::to_string(&r.to_json_value()).unwrap());
            results_jsonl.push('\n');
            let sigma = r
                .profile
                .iter()
                .map(|m| {
                    m.probs()
                        .iter()
                        .map(|p| fmt_g17(*p))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect::<Vec<_>>()
                .join(" | ");
            let gap = r.residuals.iter().cloned().fold(0.0f64, f64::max);
            summary.push_str(&format!(
                "game,{sigma},{},{}\n",
                fmt_g17(gap),
                u8::from(r.solver.converged)
            ));
        }
    } else if args.rationalize {
        let scn = scenario_of(&built)?;
        let report = rationalizable_set(scn, args.mesh, tol).map_err(|e| e.to_string())?;
        let value = serde_json::json!({
            "sets": report.sets,
            "mixture_mesh": report.mixture_mesh,
            "sigma_samples": report.sigma_samples,
        });
        results_jsonl.push_str(&serde_json::to_string(&value).unwrap());
        results_jsonl.push('\n');
        summary.push_str(&format!(
            "rationalize,{:?},0,1\n",
            report.fixed_point().to_vec()
        ));
    } else {
        let scn = scenario_of(&built)?;
        let mut results = Vec::new();
        if args.pure {
            results.extend(find_pure_bne(scn, tol).map_err(|e| e.to_string())?);
        }
        if args.mixed_binary {
            results.extend(find_mixed_bne_binary(scn, tol).map_err(|e| e.to_string())?);
        }
        if let Some(tau) = args.intended {
            if tau <= 0.0 {
                return Err("--intended temperature must be positive".into());
            }
            results.extend(
                find_intended_bne(scn, tau, args.damping, 2_000_000).map_err(|e| e.to_string())?,
            );
        }
        if !args.pure && !args.mixed_binary && args.intended.is_none() {
            results.extend(find_pure_bne(scn, tol).map_err(|e| e.to_string())?);
        }
        for r in &results {
            if !r.solver.converged {
                any_nonconverged = true;
            }
            results_jsonl.push_str(&serde_json::to_string(&r.to_json_value()).unwrap());
            results_jsonl.push('\n');
            let sigma = r
                .sigma
                .probs()
                .iter()
                .map(|p| fmt_g17(*p))
                .collect::<Vec<_>>()
                .join(" ");
            summary.push_str(&format!(
                "{},{sigma},{},{}\n",
                r.solver.method,
                fmt_g17(r.residuals.optimality_gap),
                u8::from(r.solver.converged)
            ));
        }
    }

    out.write("results.jsonl", &results_jsonl)?;
    out.write("summary.csv", &summary)?;
    out.finish_manifest(serde_json::json!({
        "command": "solve",
        "scenario": args.scn.scenario,
        "params": parse_params(&args.scn.params)?,
        "mesh": args.mesh,
        "damping": args.damping,
    }))?;
    println!("wrote {}", out_dir.display());
    Ok(if any_nonconverged {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode, String> {
    let built = load_built(&args.scn)?;
    let scn = scenario_of(&built)?.clone();
    let policy = parse_policy(&args.policy)?;
    let (seed_lo, seed_hi) = parse_seed_range(&args.seeds)?;
    if args.horizon == 0 {
        return Err("horizon must be >= 1".into());
    }
    let out_dir = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/simulate-{}", scn.id())));
    let mut out = OutputDir::new(&out_dir)?;
    out.write_scenario(&built)?;

    let seeds: Vec<u64> = (seed_lo..=seed_hi).collect();
    let workers = worker_count(seeds.len());
    let mut rows: Vec<(u64, String)> = Vec::with_capacity(seeds.len());
    std::thread::scope(|scope| -> Result<(), String> {
        let chunks: Vec<Vec<u64>> = seeds
            .chunks(seeds.len().div_ceil(workers))
            .map(|c| c.to_vec())
            .collect();
        let mut handles = Vec::new();
        for chunk in chunks {
            let scn = &scn;
            let policy = &policy;
            let out_dir = &out_dir;
            handles.push(scope.spawn(move || -> Result<Vec<(u64, String)>, String> {
                let mut local = Vec::new();
                for seed in chunk {
                    let path =
                        simulate_path_stream(scn, scn.prior(), args.horizon, seed, 0, policy)
                            .map_err(|e| e.to_string())?;
                    let rep_dir = out_dir.join(format!("rep-{seed:05}"));
                    save_path_record(&path, &rep_dir).map_err(|e| e.to_string())?;
                    let final_sigma = path.checkpoints.last().unwrap().sigma.clone();
                    let belief = path.final_belief();
                    let probs = belief.probs();
                    let top_theta = probs
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(i, _)| i)
                        .unwrap();
                    let mut row = format!("{seed},{}", path.actions.last().unwrap());
                    for s in &final_sigma {
                        row.push_str(&format!(",{}", fmt_g17(*s)));
                    }
                    row.push_str(&format!(",{top_theta},{}", fmt_g17(probs[top_theta])));
                    local.push((seed, row));
                }
                Ok(local)
            }));
        }
        for h in handles {
            rows.extend(h.join().expect("worker panicked")?);
        }
        Ok(())
    })?;
    rows.sort_by_key(|(seed, _)| *seed);

    let mut summary = String::from("seed,final_action");
    for i in 0..scn.n_actions() {
        summary.push_str(&format!(",sigma_{i}"));
    }
    summary.push_str(",top_theta,top_theta_mass\n");
    for (_, row) in &rows {
        summary.push_str(row);
        summary.push('\n');
    }
    out.write("summary.csv", &summary)?;
    out.finish_manifest(serde_json::json!({
        "command": "simulate",
        "scenario": args.scn.scenario,
        "params": parse_params(&args.scn.params)?,
        "seeds": [seed_lo, seed_hi],
        "horizon": args.horizon,
        "policy": policy.to_json_value(),
    }))?;
    println!("wrote {} ({} paths)", out_dir.display(), rows.len());
    Ok(ExitCode::SUCCESS)
}

fn run_diagnose(args: DiagnoseArgs) -> Result<ExitCode, String> {
    let scenario_text = std::fs::read_to_string(args.run_dir.join("scenario.json"))
        .map_err(|e| format!("run directory is missing scenario.json: {e}"))?;
    let spec = ScenarioSpec::from_json(&scenario_text).map_err(|e| e.to_string())?;
    let scn = build_scenario::<f64>(&spec).map_err(|e| e.to_string())?;

    let mut rep_dirs: Vec<PathBuf> = std::fs::read_dir(&args.run_dir)
        .map_err(|e| e.to_string())?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("rep-"))
        })
        .collect();
    rep_dirs.sort();
    if rep_dirs.is_empty() {
        return Err("no rep-* directories found".into());
    }

    let concentration_set = args
        .concentration_set
        .as_deref()
        .map(parse_index_list)
        .transpose()?;
    let pair = args.pair.as_deref().map(parse_index_list).transpose()?;
    if let Some(p) = &pair {
        if p.len() != 2 {
            return Err("--pair needs exactly two indices".into());
        }
    }

    let mut csv = String::from(
        "seed,action_limit,frequency_settled,optimality_gap,weak_identification,\
         slope,slope_stderr,rho_closed_form,crossings,min_mass,max_mass,final_log_odds\n",
    );
    for rep in &rep_dirs {
        let path: dynamics::PathRecord<f64> =
            load_path_record(rep).map_err(|e| format!("{}: {e}", rep.display()))?;
        let window = if args.window > 0 {
            args.window
        } else {
            (path.horizon / 10).clamp(1, 5_000).min(path.horizon - 1)
        };
        let report = diagnose_convergence(&scn, &path, window, args.freq_tol)
            .map_err(|e| e.to_string())?;
        let (gap, wi) = report
            .equilibrium
            .as_ref()
            .map(|eq| {
                (
                    fmt_g17(eq.residuals.optimality_gap),
                    u8::from(eq.flags.weak_identification).to_string(),
                )
            })
            .unwrap_or_else(|| (String::from(""), String::from("")));
        let (slope, stderr, rho) = match &concentration_set {
            Some(set) => {
                let c = concentration_rate(&scn, &path, set).map_err(|e| e.to_string())?;
                (
                    fmt_g17(c.slope),
                    fmt_g17(c.stderr),
                    fmt_g17(c.rho_closed_form),
                )
            }
            None => (String::new(), String::new(), String::new()),
        };
        let (crossings, min_mass, max_mass, final_lo) = match &pair {
            Some(p) => {
                let s = oscillation_stats(&scn, &path, p[0], p[1]).map_err(|e| e.to_string())?;
                (
                    s.crossings.to_string(),
                    fmt_g17(s.min_mass),
                    fmt_g17(s.max_mass),
                    fmt_g17(s.final_log_odds),
                )
            }
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        csv.push_str(&format!(
            "{},{},{},{gap},{wi},{slope},{stderr},{rho},{crossings},{min_mass},{max_mass},{final_lo}\n",
            path.seed,
            report
                .action_limit
                .map(|a| a.to_string())
                .unwrap_or_default(),
            u8::from(report.frequency_limit.is_some()),
        ));
    }

    let diagnose_dir = args.run_dir.join("diagnose");
    let mut out = OutputDir::new(&diagnose_dir)?;
    out.write("diagnose.csv", &csv)?;
    out.finish_manifest(serde_json::json!({
        "command": "diagnose",
        "run_dir": args.run_dir.display().to_string(),
        "window": args.window,
        "freq_tol": args.freq_tol,
        "concentration_set": concentration_set,
        "pair": pair,
        "subjectively_exogenous": is_subjectively_exogenous(&scn),
    }))?;
    println!("wrote {}", diagnose_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_selection(text: &str) -> Result<SelectionRule, String> {
    match text {
        "max_utility" => Ok(SelectionRule::MaxUtility),
        "min_speed" => Ok(SelectionRule::MinSpeed),
        "index_order" => Ok(SelectionRule::IndexOrder),
        other => Err(format!("unknown selection rule `{other}`")),
    }
}

fn run_di(args: DiArgs) -> Result<ExitCode, String> {
    if !args.integrate && !args.probe_attraction {
        return Err("choose --probe-attraction or --integrate".into());
    }
    let built = load_built(&args.scn)?;
    let scn = scenario_of(&built)?;
    let out_dir = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/di-{}", scn.id())));
    let mut out = OutputDir::new(&out_dir)?;
    out.write_scenario(&built)?;

    if args.integrate {
        let from = args
            .from
            .as_deref()
            .ok_or("--integrate needs --from W,W,...")?;
        let weights: Vec<f64> = from
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let sigma0 = MixedAction::new(weights).map_err(|e| e.to_string())?;
        let rule = parse_selection(&args.selection)?;
        let traj = integrate_di(scn, &sigma0, args.horizon, args.dt, rule, args.belief_mesh)
            .map_err(|e| e.to_string())?;
        out.write("trajectory.csv", &traj.to_csv())?;
        out.finish_manifest(serde_json::json!({
            "command": "di-integrate",
            "scenario": args.scn.scenario,
            "params": parse_params(&args.scn.params)?,
            "from": from,
            "selection": args.selection,
            "horizon": args.horizon,
            "dt": args.dt,
        }))?;
        println!("wrote {}", out_dir.display());
        return Ok(ExitCode::SUCCESS);
    }

    // Target set: the solved mixed equilibria (plus any pure ones).
    let tol = default_opt_tol::<f64>();
    let mut targets: Vec<MixedAction> = Vec::new();
    if scn.n_actions() == 2 {
        for r in find_mixed_bne_binary(scn, tol).map_err(|e| e.to_string())? {
            if r.solver.converged && r.residuals.optimality_gap <= 10.0 * tol {
                targets.push(r.sigma.clone());
            }
        }
    } else {
        for r in find_pure_bne(scn, tol).map_err(|e| e.to_string())? {
            targets.push(r.sigma.clone());
        }
    }
    if targets.is_empty() {
        return Err("no equilibrium targets found to probe".into());
    }
    let starts = start_grid::<f64>(scn.n_actions(), args.starts);
    let probe = probe_global_attraction(
        scn,
        &targets,
        &starts,
        args.eps,
        args.horizon,
        args.dt,
        args.belief_mesh,
    )
    .map_err(|e| e.to_string())?;
    let mut jsonl = serde_json::to_string(&probe.to_json_value()).unwrap();
    jsonl.push('\n');
    out.write("probe.jsonl", &jsonl)?;
    out.finish_manifest(serde_json::json!({
        "command": "di-probe-attraction",
        "scenario": args.scn.scenario,
        "params": parse_params(&args.scn.params)?,
        "eps": args.eps,
        "horizon": args.horizon,
        "dt": args.dt,
        "starts": args.starts,
        "targets": targets.iter().map(|t| t.probs().to_vec()).collect::<Vec<_>>(),
    }))?;
    let verdict = if probe.consistent {
        "consistent with globally attracting"
    } else {
        "counterexample found"
    };
    println!(
        "{verdict}; max entry time {:?}",
        probe.max_entry_time.map(|t| (t * 1e6).round() / 1e6)
    );
    println!("wrote {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run_stability(args: StabilityArgs) -> Result<ExitCode, String> {
    let built = load_built(&args.scn)?;
    let scn = scenario_of(&built)?;
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/stability-{}", scn.id())));
    let mut out = OutputDir::new(&out_dir)?;
    out.write_scenario(&built)?;

    if let Some(target) = args.probe_action {
        if target >= scn.n_actions() {
            return Err(format!("--probe-action {target} out of range"));
        }
        let mode = if args.probe_mode == "positive" {
            ProbeMode::PositiveAttraction
        } else if let Some(eps) = args.probe_mode.strip_prefix("uniform:") {
            let eps: f64 = eps.parse().map_err(|e| format!("bad ball radius: {e}"))?;
            ProbeMode::UniformStability { epsilon: eps }
        } else {
            return Err(format!(
                "unknown probe mode `{}` (expected positive or uniform:EPS)",
                args.probe_mode
            ));
        };
        let policy = parse_policy(&args.policy)?;
        let window = if args.window > 0 {
            args.window
        } else {
            (args.horizon / 10).clamp(1, 5_000).min(args.horizon - 1)
        };
        let est = probe_attraction(
            scn,
            target,
            mode,
            args.reps,
            args.horizon,
            args.seed,
            &policy,
            window,
        )
        .map_err(|e| e.to_string())?;
        let mut csv = String::from(
            "target_action,mode,reps,successes,estimate,wilson_low,wilson_high\n",
        );
        csv.push_str(&format!(
            "{target},{},{},{},{},{},{}\n",
            args.probe_mode,
            est.reps,
            est.successes,
            fmt_g17(est.estimate),
            fmt_g17(est.wilson_low),
            fmt_g17(est.wilson_high),
        ));
        out.write("probe.csv", &csv)?;
        out.finish_manifest(serde_json::json!({
            "command": "stability-probe",
            "scenario": args.scn.scenario,
            "params": parse_params(&args.scn.params)?,
            "probe_action": target,
            "probe_mode": args.probe_mode,
            "reps": args.reps,
            "horizon": args.horizon,
            "seed": args.seed,
            "window": window,
            "policy": policy.to_json_value(),
        }))?;
        println!(
            "P(converge to action {target}) = {:.4} [{:.4}, {:.4}] over {} reps",
            est.estimate, est.wilson_low, est.wilson_high, est.reps
        );
        println!("wrote {}", out_dir.display());
        return Ok(ExitCode::SUCCESS);
    }

    let theta = args
        .theta
        .ok_or("choose --theta for the classifier or --probe-action for the Monte Carlo probe")?;
    if theta >= scn.n_params() {
        return Err(format!(
            "--theta {theta} out of range (grid has {} points)",
            scn.n_params()
        ));
    }
    let q_grid = dynamics::default_q_grid::<f64>();
    let report =
        mislearn::dynamics::classify_stability(scn, theta, &q_grid, args.radius, args.shells)
            .map_err(|e| e.to_string())?;
    let value = serde_json::json!({
        "theta": theta,
        "theta_label": scn.grid().label(theta),
        "verdict": report.verdict.to_string(),
        "witness_q": report.witness.map(|(q, _)| q),
        "witness_rival": report.witness.map(|(_, o)| o),
        "equilibrium_belief": report.equilibrium_belief,
        "sampled_beliefs": report.sampled_beliefs,
        "notes": report.notes,
    });
    let mut text = serde_json::to_string_pretty(&value).unwrap();
    text.push('\n');
    out.write("stability.json", &text)?;
    out.finish_manifest(serde_json::json!({
        "command": "stability",
        "scenario": args.scn.scenario,
        "params": parse_params(&args.scn.params)?,
        "theta": theta,
        "radius": args.radius,
        "shells": args.shells,
    }))?;
    println!("{}: {}", scn.grid().label(theta), report.verdict);
    println!("wrote {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}
