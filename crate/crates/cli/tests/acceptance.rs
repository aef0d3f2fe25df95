//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities. Monte Carlo thresholds (master seeds, horizons,
//! and bands) were fixed once by the calibration run in
//! `crates/core/examples/calibrate.rs` and are frozen here.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use mislearn::decision::{best_reply_set, default_opt_tol};
use mislearn::di::{probe_global_attraction, start_grid};
use mislearn::dynamics::{
    classify_stability, concentration_rate, default_q_grid, empirical_frequency,
    oscillation_stats, simulate_path_stream, Outcomes, Policy, StabilityVerdict,
};
use mislearn::equilibrium::{
    check_equilibrium, check_uniformly_strict, find_game_bne, find_mixed_bne_binary,
    find_pure_bne, CheckKind,
};
use mislearn::inference::{default_min_set_tol, kl_min_set, weighted_kl};
use mislearn::scenarios::make_builtin;
use mislearn::{Belief, MixedAction, Scenario};

fn builtin(name: &str, params: &[(&str, f64)]) -> mislearn::scenarios::Built<f64> {
    let mut map = BTreeMap::new();
    for (k, v) in params {
        map.insert(k.to_string(), *v);
    }
    make_builtin::<f64>(name, &map).unwrap()
}

fn single(name: &str) -> Scenario {
    builtin(name, &[]).as_single().cloned().unwrap()
}

fn pass(criterion: &str, detail: String, t0: Instant) {
    println!(
        "acceptance {criterion}: pass ({detail}) [{:.2?}]",
        t0.elapsed()
    );
}

/// Runs seeded replications in parallel; results are keyed by index so the
/// aggregation is order-independent.
fn parallel_reps<T: Send>(reps: usize, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let results: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::with_capacity(reps));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(reps.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= reps {
                    break;
                }
                let out = f(i as u64);
                results.lock().unwrap().push((i, out));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, t)| t).collect()
}

#[test]
fn acceptance_01_monopolist_mixed_equilibrium() {
    let t0 = Instant::now();
    // Through the CLI, as the criterion is phrased.
    let dir = std::env::temp_dir().join(format!("mislearn-acc1-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    let out = Command::new(env!("CARGO_BIN_EXE_mislearn"))
        .args([
            "solve",
            "monopolist",
            "--mixed-binary",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .expect("cli runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let jsonl = std::fs::read_to_string(dir.join("results.jsonl")).unwrap();
    let mixed: Vec<serde_json::Value> = jsonl
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["flags"]["mixed"] == true)
        .collect();
    assert_eq!(mixed.len(), 1, "one mixed equilibrium");
    let sigma10 = mixed[0]["sigma"][1].as_f64().unwrap();
    assert!(
        (sigma10 - 1.0 / 36.0).abs() < 1e-6,
        "sigma(10) = {sigma10}, expected 1/36"
    );
    // The supporting belief concentrates within grid spacing of (40, 10/3).
    let scn = single("monopolist");
    let belief = mixed[0]["beliefs"]["single"].as_array().unwrap();
    let argmax = belief
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.as_f64().partial_cmp(&b.1.as_f64()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let point = scn.grid().point(argmax);
    let (alpha_step, beta_step) = (0.5, 0.5 / 6.0);
    assert!((point[0] - 40.0).abs() <= alpha_step + 1e-12);
    assert!((point[1] - 10.0 / 3.0).abs() <= beta_step + 1e-12);
    std::fs::remove_dir_all(&dir).ok();
    pass(
        "01 monopolist mixed equilibrium",
        format!("sigma(10) = {sigma10:.12}, minimizer ({}, {})", point[0], point[1]),
        t0,
    );
}

#[test]
fn acceptance_02_monopolist_boundary_law() {
    let t0 = Instant::now();
    let scn = single("monopolist");
    let beta_step = 0.5 / 6.0;
    let mut details = Vec::new();
    for &s in &[0.005, 0.01, 0.02] {
        let sigma = MixedAction::new(vec![1.0 - s, s]).unwrap();
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        assert_eq!(report.min_set.len(), 1, "unique grid minimizer at {s}");
        let point = scn.grid().point(report.min_set[0]);
        let law = (3.0 + 92.0 * s) / (1.0 + 24.0 * s);
        assert_eq!(point[0], 40.0, "alpha pinned to the boundary at {s}");
        assert!(
            (point[1] - law).abs() <= beta_step + 1e-12,
            "beta({s}) = {} vs law {law}",
            point[1]
        );
        details.push(format!("beta({s}) = {:.6} (law {law:.6})", point[1]));
    }
    pass("02 monopolist boundary law", details.join("; "), t0);
}

#[test]
fn acceptance_03_di_global_attraction_bound() {
    let t0 = Instant::now();
    let scn = single("monopolist");
    let tol = default_opt_tol::<f64>();
    let mixed: Vec<MixedAction> = find_mixed_bne_binary(&scn, tol)
        .unwrap()
        .into_iter()
        .filter(|r| r.flags.mixed && r.solver.converged)
        .map(|r| r.sigma)
        .collect();
    assert_eq!(mixed.len(), 1);
    let starts = start_grid::<f64>(2, 101);
    let probe =
        probe_global_attraction(&scn, &mixed, &starts, 0.01, 40.0, 1e-3, 4).unwrap();
    assert!(probe.consistent, "verdict must be consistent");
    let entry = probe.max_entry_time.unwrap();
    assert!(entry <= 35.0 + 0.1, "max entry time {entry} exceeds the bound");
    pass(
        "03 di global attraction",
        format!("consistent over 101 starts x 3 rules, max entry time {entry:.3} <= 35.1"),
        t0,
    );
}

#[test]
fn acceptance_04_berk_posterior_decay() {
    let t0 = Instant::now();
    const MASTER_SEED: u64 = 9001;
    let scn = single("misspecified-bernoulli");
    // Closed-form rate: the KL gap between the runner-up and the minimizer.
    let kl = |t: f64| 0.5 * (0.5f64 / t).ln() + 0.5 * (0.5f64 / (1.0 - t)).ln();
    let rho = kl(0.3) - kl(0.6);
    let results = parallel_reps(20, |rep| {
        let path = simulate_path_stream(
            &scn,
            scn.prior(),
            100_000,
            MASTER_SEED,
            1 + rep,
            &Policy::Myopic { tol: 1e-9 },
        )
        .unwrap();
        let report = concentration_rate(&scn, &path, &[0, 1, 3]).unwrap();
        assert!((report.rho_closed_form - rho).abs() < 1e-12);
        ((report.slope + rho).abs() / rho) < 0.2
    });
    let hits = results.iter().filter(|&&ok| ok).count();
    assert!(hits >= 18, "only {hits}/20 slopes within 20% of -rho");
    pass(
        "04 berk posterior decay",
        format!("{hits}/20 seeds within 20% of -rho = {:.6}", -rho),
        t0,
    );
}

#[test]
fn acceptance_05_coin_oscillation() {
    let t0 = Instant::now();
    const MASTER_SEED: u64 = 7700;
    let scn = single("coin");
    let results = parallel_reps(100, |rep| {
        let path = simulate_path_stream(
            &scn,
            scn.prior(),
            1_000_000,
            MASTER_SEED,
            1 + rep,
            &Policy::Myopic { tol: 1e-9 },
        )
        .unwrap();
        let stats = oscillation_stats(&scn, &path, 0, 1).unwrap();
        // Exactness of the replay: the dense reconstruction ends at the
        // recorded final log-odds bit for bit.
        let cp = path.checkpoints.last().unwrap();
        assert_eq!(stats.final_log_odds, cp.logw[0] - cp.logw[1]);
        // And the count-based closed form agrees to accumulated rounding.
        let heads = match &path.outcomes {
            Outcomes::Indices(v) => v.iter().filter(|&&y| y == 1).count() as f64,
            _ => unreachable!(),
        };
        let tails = 1.0e6 - heads;
        let closed = (tails - heads) * 3.0f64.ln();
        // Accumulated rounding over 1e6 additions sits near 1e-7; the
        // bitwise claim is the replay equality above.
        assert!((stats.final_log_odds - closed).abs() < 1e-6);
        stats.max_mass > 0.99 && stats.min_mass < 0.01 && stats.crossings >= 50
    });
    let qualifying = results.iter().filter(|&&ok| ok).count();
    assert!(
        qualifying >= 95,
        "only {qualifying}/100 seeds met the oscillation thresholds"
    );
    pass(
        "05 coin oscillation",
        format!("{qualifying}/100 seeds hit mass > 0.99, < 0.01, and >= 50 crossings"),
        t0,
    );
}

#[test]
fn acceptance_06_overconfidence_pure_equilibrium() {
    let t0 = Instant::now();
    let scn = single("overconfidence");
    let results = find_pure_bne(&scn, default_opt_tol()).unwrap();
    assert_eq!(results.len(), 1, "unique pure equilibrium");
    let action_idx = results[0].sigma.support(1e-12)[0];
    let effort = scn.actions().scalar(action_idx);
    // Bisection oracle on c'(a) = theta* + theta* (alpha* - alpha)/(alpha+a)
    // with c'(a) = a, alpha = 2, alpha* = theta* = 1.
    let f = |a: f64| a - (1.0 - 1.0 / (2.0 + a));
    let (mut lo, mut hi) = (0.0f64, 3.0f64);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let grid_step = 3.0 / 300.0;
    assert!(
        (effort - root).abs() <= grid_step + 1e-12,
        "effort {effort} vs root {root}"
    );
    // Strictly below the truth-based benchmark (c')^{-1}(theta*) = 1.
    assert!(effort < 1.0, "effort {effort} must sit below the benchmark 1");
    pass(
        "06 overconfidence equilibrium",
        format!("effort {effort:.6} within one grid step of root {root:.6}, below 1"),
        t0,
    );
}

#[test]
fn acceptance_07_adverse_selection() {
    let t0 = Instant::now();
    let scn = single("adverse-selection");
    // The joint table behind the builtin, restated for the oracle.
    let joint: [[f64; 3]; 3] = [[6.0, 1.0, 1.0], [1.0, 6.0, 1.0], [1.0, 1.0, 14.0]];
    let total = 32.0;
    let costs = [0.5, 1.5, 2.5];
    let values = [1.0, 2.0, 3.0];
    let prices = [0.0, 0.5, 1.5, 2.5];

    // Part one: the KL minimizer at each trading price equals the
    // conditional value pmf exactly.
    for (ai, &a) in prices.iter().enumerate() {
        let mut col = [0.0f64; 3];
        let mut mass = 0.0;
        for (r, &s) in costs.iter().enumerate() {
            if s <= a {
                for (c, q) in joint[r].iter().enumerate() {
                    col[c] += q;
                    mass += q;
                }
            }
        }
        if mass == 0.0 {
            continue;
        }
        let pmf: Vec<f64> = col.iter().map(|&c| c / mass).collect();
        let sigma = MixedAction::point_mass(scn.n_actions(), ai);
        let report = kl_min_set(&scn, &sigma, default_min_set_tol()).unwrap();
        assert_eq!(report.min_set.len(), 1, "unique minimizer at price {a}");
        let theta = scn.grid().point(report.min_set[0]);
        assert_eq!(theta, &pmf[..], "minimizer at price {a} is the conditional pmf");
    }

    // Part two: exhaustive-scan oracle for the fixed-point price.
    let f_s = |a: f64| -> f64 {
        costs
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= a)
            .map(|(r, _)| joint[r].iter().sum::<f64>())
            .sum::<f64>()
            / total
    };
    let cond_mean = |a: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (r, &s) in costs.iter().enumerate() {
            if s <= a {
                for (c, q) in joint[r].iter().enumerate() {
                    num += q * values[c];
                    den += q;
                }
            }
        }
        num / den
    };
    let mut oracle_fixed_points = Vec::new();
    for &a in &prices {
        if f_s(a) == 0.0 {
            continue;
        }
        let mean = cond_mean(a);
        let best = prices
            .iter()
            .copied()
            .max_by(|&x, &y| {
                (f_s(x) * (mean - x))
                    .partial_cmp(&(f_s(y) * (mean - y)))
                    .unwrap()
            })
            .unwrap();
        if best == a {
            oracle_fixed_points.push(a);
        }
    }
    assert_eq!(oracle_fixed_points, vec![0.5], "oracle fixed point");

    let solved = find_pure_bne(&scn, default_opt_tol()).unwrap();
    assert_eq!(solved.len(), 1, "solver finds one pure equilibrium");
    let price = scn.actions().scalar(solved[0].sigma.support(1e-12)[0]);
    assert_eq!(price, 0.5, "solver equilibrium price matches the oracle");
    pass(
        "07 adverse selection",
        format!("minimizers equal conditional pmfs; equilibrium price {price}"),
        t0,
    );
}

#[test]
fn acceptance_08_slow_learning() {
    let t0 = Instant::now();
    let scn = single("slow-learning");
    let q_grid = default_q_grid::<f64>();
    let low = classify_stability(&scn, 0, &q_grid, 0.05, 5).unwrap();
    assert_eq!(low.verdict, StabilityVerdict::Unstable, "theta1 unstable");
    let high = classify_stability(&scn, 1, &q_grid, 0.05, 5).unwrap();
    assert_eq!(
        high.verdict,
        StabilityVerdict::LocallyStable,
        "theta2 locally stable"
    );
    // Pre-registered simulation band: master seed 4242, T = 20000, final
    // mass on theta2 above 0.99, in at least 95% of 200 seeds.
    const MASTER_SEED: u64 = 4242;
    let results = parallel_reps(200, |rep| {
        let path = simulate_path_stream(
            &scn,
            scn.prior(),
            20_000,
            MASTER_SEED,
            1 + rep,
            &Policy::Override,
        )
        .unwrap();
        path.final_belief().probs()[1] > 0.99
    });
    let hits = results.iter().filter(|&&ok| ok).count();
    assert!(hits >= 190, "only {hits}/200 runs converged to theta2");
    pass(
        "08 slow learning",
        format!("theta1 unstable, theta2 stable; {hits}/200 runs reached mass > 0.99"),
        t0,
    );
}

#[test]
fn acceptance_09_effort_game() {
    let t0 = Instant::now();
    let game = builtin("effort-game", &[]).as_game().cloned().unwrap();
    let results = find_game_bne(&game, 0.2, 1e-9, 5_000);
    assert!(!results.is_empty(), "solver found a fixed point");

    // Scalar oracle: damped best response on the symmetric one-dimensional
    // problem, clamped to the effort interval, to fixed-point precision.
    let (alpha, alpha_star, theta_star, hi) = (2.0, 1.0, 1.0, 3.0);
    let oracle = {
        let mut a = 0.5f64;
        for _ in 0..200_000 {
            let s = 2.0 * a + a * a;
            let theta = theta_star * (alpha_star + s) / (alpha + s);
            let target = (theta * (1.0 + a)).clamp(0.0, hi);
            a += 0.2 * (target - a);
        }
        a
    };
    // The equilibrium-system residual at oracle precision, with boundary
    // complementarity: at the interval edges only the inward violation
    // counts.
    let residual = |a1: f64, a2: f64| -> f64 {
        let s = a1 + a2 + a1 * a2;
        let theta = theta_star * (alpha_star + s) / (alpha + s);
        let mut worst = 0.0f64;
        let edge = 1e-9;
        for (own, other) in [(a1, a2), (a2, a1)] {
            let foc = own - theta * (1.0 + other);
            let r = if own <= edge {
                (-foc).max(0.0)
            } else if own >= hi - edge {
                foc.max(0.0)
            } else {
                foc.abs()
            };
            worst = worst.max(r);
        }
        worst
    };
    assert!(
        residual(oracle, oracle) < 1e-8,
        "oracle residual {}",
        residual(oracle, oracle)
    );

    for r in &results {
        assert!(r.solver.converged);
        let a: Vec<f64> = r
            .profile
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let support = m.support(1e-9);
                assert_eq!(support.len(), 1, "pure profile");
                game.player(i).actions.scalar(support[0])
            })
            .collect();
        assert!((a[0] - a[1]).abs() < 1e-12, "symmetric profile");
        assert!(
            (a[0] - oracle).abs() < 1e-6,
            "profile {} vs oracle {oracle}",
            a[0]
        );
    }
    pass(
        "09 effort game",
        format!(
            "symmetric profile at {oracle:.6} (oracle match < 1e-6, system residual {:.2e})",
            residual(oracle, oracle)
        ),
        t0,
    );
}

#[test]
fn acceptance_10_property_suites() {
    let t0 = Instant::now();

    // Frequency recursion, exact in counts, at rounding error in floats.
    let mono = single("monopolist");
    let path = simulate_path_stream(
        &mono,
        mono.prior(),
        2_000,
        31,
        0,
        &Policy::Logit { tau: 0.05 },
    )
    .unwrap();
    let n = mono.n_actions();
    let mut counts = vec![0usize; n];
    for (t, &a) in path.actions.iter().enumerate() {
        counts[a as usize] += 1;
        let sigma_t = empirical_frequency(&path, t + 1, n).unwrap();
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(sigma_t.prob(i), c as f64 / (t + 1) as f64, "exact counts");
        }
        if t + 1 < path.actions.len() {
            let sigma_next = empirical_frequency(&path, t + 2, n).unwrap();
            let a_next = path.actions[t + 1] as usize;
            for i in 0..n {
                let indicator = if i == a_next { 1.0 } else { 0.0 };
                let rhs = sigma_t.prob(i) + (indicator - sigma_t.prob(i)) / (t + 2) as f64;
                assert!((sigma_next.prob(i) - rhs).abs() < 1e-14);
            }
        }
    }

    // Posterior normalization at horizon 1e6.
    let coin = single("coin");
    let long_path = simulate_path_stream(
        &coin,
        coin.prior(),
        1_000_000,
        77,
        0,
        &Policy::Myopic { tol: 1e-9 },
    )
    .unwrap();
    for cp in &long_path.checkpoints {
        let belief = Belief::from_log_weights(cp.logw.clone()).unwrap();
        let sum: f64 = belief.probs().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-10, "normalization at t = {}", cp.t);
    }

    // Weighted-KL affinity in the mixing weight.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for scn in [&mono, &single("adverse-selection")] {
        for _ in 0..200 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let w: Vec<f64> = (0..scn.n_actions()).map(|_| rng.random::<f64>()).collect();
                MixedAction::from_unnormalized(w).unwrap()
            };
            let (s1, s2) = (draw(&mut rng), draw(&mut rng));
            let lambda: f64 = rng.random();
            let mix = MixedAction::new(
                s1.probs()
                    .iter()
                    .zip(s2.probs())
                    .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
                    .collect(),
            )
            .unwrap();
            for theta in [0, scn.n_params() / 2, scn.n_params() - 1] {
                let left = weighted_kl(scn, theta, &mix).unwrap();
                let right = lambda * weighted_kl(scn, theta, &s1).unwrap()
                    + (1.0 - lambda) * weighted_kl(scn, theta, &s2).unwrap();
                assert!(
                    (left - right).abs() <= 1e-12,
                    "affinity violated by {}",
                    (left - right).abs()
                );
            }
        }
    }

    // Vertex equivalence for uniform strictness: strict preference at every
    // minimizer-set vertex implies strict preference at sampled beliefs.
    let exo = {
        use mislearn::model::*;
        let grid = ParameterGrid::new(vec![vec![0.25], vec![0.75]], None).unwrap();
        let actions = ActionSet::native(vec![vec![0.0], vec![1.0]]).unwrap();
        Scenario::new(ScenarioParts {
            id: "vertex-equivalence".into(),
            grid,
            actions,
            outcomes: OutcomeSpace::Finite {
                values: vec![0.0, 1.0],
            },
            true_kernel: TrueKernel::Categorical {
                prob: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            },
            family: KernelFamily::Categorical {
                prob: vec![
                    vec![vec![0.75, 0.25], vec![0.75, 0.25]],
                    vec![vec![0.25, 0.75], vec![0.25, 0.75]],
                ],
            },
            payoff: Payoff::Table {
                value: vec![vec![1.0, 0.8], vec![0.0, 0.0]],
            },
            prior_weights: vec![1.0, 1.0],
            policy_override: None,
            continuous_theta: None,
            metadata: Default::default(),
        })
        .unwrap()
    };
    let strict = check_uniformly_strict(&exo, 0, default_opt_tol()).unwrap();
    assert!(strict.holds, "action 0 is uniformly strict by construction");
    let report = kl_min_set(&exo, &MixedAction::point_mass(2, 0), default_min_set_tol()).unwrap();
    assert_eq!(report.min_set.len(), 2, "both vertices tie");
    let mut contradictions = 0;
    for _ in 0..1000 {
        let w: f64 = rng.random();
        let belief = Belief::from_weights(&[w.max(1e-12), (1.0 - w).max(1e-12)]).unwrap();
        let br = best_reply_set(&exo, &belief, 0.0);
        if !(br.optimal == vec![0]) {
            contradictions += 1;
        }
    }
    assert_eq!(contradictions, 0, "affine utility gaps cannot flip inside");

    // Rest point <-> generalized equilibrium cross-check on every builtin.
    for name in [
        "coin",
        "misspecified-bernoulli",
        "overconfidence",
        "adverse-selection",
        "monopolist",
        "slow-learning",
    ] {
        let scn = single(name);
        let n = scn.n_actions();
        let mut candidates: Vec<MixedAction> = Vec::new();
        // Pure actions (all of them for small action sets, a spread for
        // large grids), the uniform mix, and any solved mixed equilibrium.
        let pure_picks: Vec<usize> = if n <= 8 {
            (0..n).collect()
        } else {
            vec![0, n / 3, n / 2, n - 1]
        };
        for a in pure_picks {
            candidates.push(MixedAction::point_mass(n, a));
        }
        if n > 1 {
            candidates.push(MixedAction::uniform(n));
        }
        if n == 2 {
            for r in find_mixed_bne_binary(&scn, default_opt_tol()).unwrap() {
                if r.solver.converged {
                    candidates.push(r.sigma);
                }
            }
        }
        for r in find_pure_bne(&scn, default_opt_tol()).unwrap() {
            candidates.push(r.sigma);
        }
        for sigma in candidates {
            let set = mislearn::di::di_velocity_set(&scn, &sigma, 4).unwrap();
            let rest = set.contains_zero(&sigma, 1e-9);
            let check =
                check_equilibrium(&scn, &sigma, CheckKind::Generalized, default_opt_tol())
                    .unwrap();
            let is_eq = check.residuals.optimality_gap < 1e-8;
            assert_eq!(
                rest, is_eq,
                "{name}: rest-point/equilibrium mismatch at {:?}",
                sigma.probs()
            );
        }
    }

    pass(
        "10 property suites",
        "recursion exact; normalization <= 1e-10 at 1e6; affinity <= 1e-12; \
         1000-belief vertex equivalence clean; rest points match generalized equilibria"
            .to_string(),
        t0,
    );
}
