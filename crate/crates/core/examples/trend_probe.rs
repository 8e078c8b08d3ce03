use rhsim_core::config::NetworkConfig;
use rhsim_core::workload::{run_bench, sweep, BenchOptions, SweepAxis, SweepOptions, TrafficProfile};

fn main() {
    let mut cfg = NetworkConfig::two_orgs_two_peers();
    cfg.seed = Some(42);

    println!("== constant-rate sweep, 120 rides per point ==");
    for delay in [100.0, 200.0, 300.0, 400.0, 500.0] {
        let opts = BenchOptions {
            rides: 120,
            profile: TrafficProfile::ConstantRate { delay_ms: delay, deviation_frac: 0.3 },
            submitters_per_org: 2,
        };
        let r = run_bench(&cfg, 42, &opts).unwrap();
        println!("delay={delay:3} peer={:8.3} orderer={:7.3} event={:9.3} tps={:6.2} valid={}/{}",
            r.peer_mean_ms, r.orderer_mean_ms, r.event_mean_ms, r.tps_committed,
            r.counters.committed_valid, r.counters.submitted);
    }

    println!("== peer sweep 1..4 ==");
    for policy in ["ALL_ORG_PEERS", "ANY_ONE"] {
        let opts = SweepOptions {
            axis: SweepAxis::Peers, from: 1, to: 4, policy: policy.into(),
            scale_traffic: false, rides: 120,
            profile: TrafficProfile::ConstantRate { delay_ms: 100.0, deviation_frac: 0.3 },
            submitters_per_org: 2,
        };
        let pts = sweep(&cfg, 42, &opts).unwrap();
        print!("{policy:14}");
        for p in &pts {
            print!(" | n={} peer={:7.3} stalled={}", p.axis_value, p.report.peer_mean_ms, p.report.stalled_rides);
        }
        println!();
    }

    println!("== org sweep 1..6, pi profile, scaled traffic ==");
    let mut pi_cfg = cfg.clone();
    pi_cfg.profile = rhsim_core::config::ProfileConfig::Preset("pi".into());
    for delay in [200.0, 250.0, 300.0] {
        let opts = SweepOptions {
            axis: SweepAxis::Orgs, from: 1, to: 6, policy: "ALL_ORG_PEERS".into(),
            scale_traffic: true, rides: 30,
            profile: TrafficProfile::ConstantRate { delay_ms: delay, deviation_frac: 0.3 },
            submitters_per_org: 2,
        };
        let t0 = std::time::Instant::now();
        let pts = sweep(&pi_cfg, 42, &opts).unwrap();
        print!("delay={delay:3}:");
        for p in &pts {
            print!(" {:.1}(s{},v{}/{})", p.report.tps_committed, p.report.stalled_rides,
                p.report.counters.committed_valid, p.report.counters.submitted);
        }
        println!("  [{:?}]", t0.elapsed());
    }
}
