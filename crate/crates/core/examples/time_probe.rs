use rhsim_core::config::NetworkConfig;
use rhsim_core::workload::{run_bench, BenchOptions, TrafficProfile};
fn main() {
    let mut cfg = NetworkConfig::two_orgs_two_peers();
    cfg.seed = Some(42);
    let opts = BenchOptions { rides: 1000,
        profile: TrafficProfile::ConstantRate { delay_ms: 100.0, deviation_frac: 0.3 },
        submitters_per_org: 2 };
    let t0 = std::time::Instant::now();
    let r = run_bench(&cfg, 42, &opts).unwrap();
    println!("wall={:?} v={}/{} events={}/{}", t0.elapsed(),
        r.counters.committed_valid, r.counters.submitted,
        r.counters.events_delivered, r.events_expected);
}
