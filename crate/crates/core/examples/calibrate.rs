//! One-off calibration run for the Monte Carlo acceptance thresholds.
//! Not part of the test suite; kept for reproducibility of the frozen
//! constants in tests/acceptance.rs.

use std::collections::BTreeMap;

use mislearn::dynamics::{concentration_rate, oscillation_stats, simulate_path_stream, Policy};
use mislearn::scenarios::make_builtin;

fn main() {
    let t0 = std::time::Instant::now();

    // Berk decay: slope vs closed-form rate over 20 seeds at T = 1e5.
    let mb = make_builtin::<f64>("misspecified-bernoulli", &BTreeMap::new())
        .unwrap()
        .as_single()
        .cloned()
        .unwrap();
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let path = simulate_path_stream(
            &mb,
            mb.prior(),
            100_000,
            9001,
            1 + seed,
            &Policy::Myopic { tol: 1e-9 },
        )
        .unwrap();
        let rep = concentration_rate(&mb, &path, &[0, 1, 3]).unwrap();
        let rel = (rep.slope + rep.rho_closed_form).abs() / rep.rho_closed_form;
        worst = worst.max(rel);
        if rel < 0.2 {
            ok += 1;
        }
    }
    println!(
        "berk-decay: {ok}/20 within 20%, worst rel err {worst:.4} ({:?})",
        t0.elapsed()
    );

    // Coin oscillation: 100 seeds at T = 1e6.
    let t1 = std::time::Instant::now();
    let coin = make_builtin::<f64>("coin", &BTreeMap::new())
        .unwrap()
        .as_single()
        .cloned()
        .unwrap();
    let mut qualifying = 0;
    let mut min_crossings = usize::MAX;
    for seed in 0..100u64 {
        let path = simulate_path_stream(
            &coin,
            coin.prior(),
            1_000_000,
            7700,
            1 + seed,
            &Policy::Myopic { tol: 1e-9 },
        )
        .unwrap();
        let stats = oscillation_stats(&coin, &path, 0, 1).unwrap();
        min_crossings = min_crossings.min(stats.crossings);
        if stats.max_mass > 0.99 && stats.min_mass < 0.01 && stats.crossings >= 50 {
            qualifying += 1;
        }
    }
    println!(
        "coin-oscillation: {qualifying}/100 qualify, min crossings {min_crossings} ({:?})",
        t1.elapsed()
    );

    // Slow learning: fraction of 200 seeds with final mass(theta2) > 0.99.
    let t2 = std::time::Instant::now();
    let sl = make_builtin::<f64>("slow-learning", &BTreeMap::new())
        .unwrap()
        .as_single()
        .cloned()
        .unwrap();
    for horizon in [10_000usize, 20_000, 40_000] {
        let mut hits = 0;
        for seed in 0..200u64 {
            let path =
                simulate_path_stream(&sl, sl.prior(), horizon, 4242, 1 + seed, &Policy::Override)
                    .unwrap();
            let mass2 = path.final_belief().probs()[1];
            if mass2 > 0.99 {
                hits += 1;
            }
        }
        println!("slow-learning T={horizon}: {hits}/200 above 0.99");
    }
    println!("slow-learning block took {:?}", t2.elapsed());
}
