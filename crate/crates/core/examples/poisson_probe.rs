use rhsim_core::config::NetworkConfig;
use rhsim_core::workload::{run_bench, BenchOptions, TrafficProfile};

fn main() {
    let mut cfg = NetworkConfig::two_orgs_two_peers();
    cfg.seed = Some(42);
    println!("== poisson lambda sweep, 120 rides ==");
    for lambda in [320.0, 640.0, 1280.0, 2560.0] {
        let opts = BenchOptions {
            rides: 120,
            profile: TrafficProfile::Poisson { lambda_tps: lambda },
            submitters_per_org: 2,
        };
        let r = run_bench(&cfg, 42, &opts).unwrap();
        println!("lambda={lambda:5} peer={:8.3} orderer={:7.3} event={:9.3} tps={:6.2} v={}/{}",
            r.peer_mean_ms, r.orderer_mean_ms, r.event_mean_ms, r.tps_committed,
            r.counters.committed_valid, r.counters.submitted);
    }
}
