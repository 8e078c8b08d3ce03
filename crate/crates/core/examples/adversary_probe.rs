use rhsim_core::config::NetworkConfig;
use rhsim_core::workload::{run_adversary, AdversaryScenario};

fn main() {
    let mut cfg = NetworkConfig::two_orgs_two_peers();
    cfg.seed = Some(42);
    for scenario in [
        AdversaryScenario::Eclipse,
        AdversaryScenario::MaliciousQuery,
        AdversaryScenario::StaleEndorser,
    ] {
        let v = run_adversary(&cfg, 42, scenario).unwrap();
        println!("== {} passed={}", v.scenario, v.passed);
        for d in &v.details {
            println!("   {d}");
        }
    }
}
