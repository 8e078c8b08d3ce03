use rhsim_core::config::NetworkConfig;
use rhsim_core::workload::{run_bench, BenchOptions, TrafficProfile};

fn main() {
    let mut cfg = NetworkConfig::two_orgs_two_peers();
    cfg.seed = Some(42);
    let opts = BenchOptions {
        rides: 50,
        profile: TrafficProfile::ConstantRate { delay_ms: 100.0, deviation_frac: 0.3 },
        submitters_per_org: 2,
    };
    let t0 = std::time::Instant::now();
    let report = run_bench(&cfg, 42, &opts).unwrap();
    println!("wall: {:?}", t0.elapsed());
    println!("submitted={} valid={} invalid={} policy={} div={} cc={} stalled={}",
        report.counters.submitted, report.counters.committed_valid,
        report.counters.committed_invalid, report.counters.policy_unsatisfied,
        report.counters.divergence_failures, report.counters.chaincode_rejected,
        report.stalled_rides);
    println!("events delivered={} expected={}", report.counters.events_delivered, report.events_expected);
    println!("peer={:.3}ms orderer={:.3}ms event={:.3}ms tps={:.2} dur={:.1}ms",
        report.peer_mean_ms, report.orderer_mean_ms, report.event_mean_ms,
        report.tps_committed, report.duration_ms);
}
