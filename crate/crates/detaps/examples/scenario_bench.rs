//! Scenario runs from a key=value config, deterministic reports, and
//! the two built-in micro-benchmarks with their linear-fit quality.
//!
//! Run with: cargo run --release --example scenario_bench

use detaps::scenario::{
    bench_combine_vs_pending, bench_scenario_axis, bench_sign_vs_message, run_scenario,
    ScenarioConfig,
};

fn main() {
    // The same format the detaps-sim binary reads with --config.
    let config = ScenarioConfig::from_kv(
        "
        # accountable signing over two groups
        n = 8
        t = 4
        n1 = 2
        n2 = 2
        n3 = 8
        t_prime = 3
        message_size_kb = 1
        num_signatures = 4
        epochs = 3
        seed = 1234
        ",
    )
    .unwrap();

    let report = run_scenario(&config).unwrap();
    print!("{}", report.render());
    assert!(report.all_checks_pass());

    // Same seed, same digest; the report pins everything but timings.
    let again = run_scenario(&config).unwrap();
    assert_eq!(report.deterministic_digest(), again.deterministic_digest());
    println!("second run reproduced the report digest\n");

    // Signing cost scales with the message, combining cost with the
    // number of pending signatures in the epoch.
    let sign_bench = bench_sign_vs_message(&config, &[1, 8, 16], 40).unwrap();
    print!("{}", sign_bench.render());
    let combine_bench = bench_combine_vs_pending(&config, &[1, 2, 4], 2).unwrap();
    print!("{}", combine_bench.render());
    assert!(
        combine_bench.r_squared > 0.8,
        "combining is linear in pending signatures"
    );

    // Whole-scenario sweeps along a config axis, one table row per
    // value; the size columns stay flat while t varies.
    let table = bench_scenario_axis(&config, "t", &[2, 4, 6], 1).unwrap();
    print!("{}", table.render());
    let sig_sizes: std::collections::BTreeSet<usize> =
        table.rows.iter().map(|r| r.sizes.signature_bytes).collect();
    assert_eq!(sig_sizes.len(), 1, "signature size does not depend on t");
}
