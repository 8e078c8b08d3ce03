//! Restructuring sweeps: vary peer or organization counts and benchmark
//! each configuration.

use crate::config::{ConfigError, NetworkConfig, OrgConfig};

use super::{run_bench, BenchOptions, BenchReport, TrafficProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Grow one organization from `from` to `to` peers; traffic constant.
    Peers,
    /// Grow the network from `from` to `to` organizations (two peers
    /// each); traffic optionally scales with the organization count.
    Orgs,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "peers" => Some(SweepAxis::Peers),
            "orgs" => Some(SweepAxis::Orgs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub axis: SweepAxis,
    pub from: u32,
    pub to: u32,
    pub policy: String,
    /// Orgs axis only: offered traffic grows with the organization count
    /// (rides per organization stay constant).
    pub scale_traffic: bool,
    /// Rides per point (peers axis) or per organization (orgs axis with
    /// scaling).
    pub rides: usize,
    pub profile: TrafficProfile,
    pub submitters_per_org: usize,
}

#[derive(Debug)]
pub struct SweepPoint {
    pub axis_value: u32,
    pub report: BenchReport,
}

/// Benchmark every configuration along the axis. Each point runs as an
/// independent simulation from the same master seed.
pub fn sweep(
    base: &NetworkConfig,
    seed: u64,
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>, ConfigError> {
    if options.from == 0 || options.from > options.to {
        return Err(ConfigError::Invalid(format!(
            "sweep range {}..={} is empty or zero-based",
            options.from, options.to
        )));
    }
    let mut points = Vec::new();
    for value in options.from..=options.to {
        let mut config = base.clone();
        config.policy = options.policy.clone();
        let rides = match options.axis {
            SweepAxis::Peers => {
                let first = base
                    .orgs
                    .first()
                    .ok_or_else(|| ConfigError::Invalid("base config has no orgs".into()))?;
                config.orgs = vec![OrgConfig {
                    name: first.name.clone(),
                    peers: value,
                    orderers: 1,
                }];
                options.rides
            }
            SweepAxis::Orgs => {
                let peers = base.orgs.first().map(|o| o.peers).unwrap_or(2);
                config.orgs = (1..=value)
                    .map(|i| OrgConfig {
                        name: format!("Org{i}PeerOrg"),
                        peers,
                        orderers: if i == 1 { 1 } else { 0 },
                    })
                    .collect();
                if options.scale_traffic {
                    options.rides * value as usize
                } else {
                    options.rides
                }
            }
        };
        config.validate()?;
        let bench = BenchOptions {
            rides,
            profile: options.profile,
            submitters_per_org: options.submitters_per_org,
        };
        let report = run_bench(&config, seed, &bench)?;
        points.push(SweepPoint {
            axis_value: value,
            report,
        });
    }
    Ok(points)
}

/// Plot-ready trend file: one row per sweep point.
pub fn trend_csv(axis: SweepAxis, policy: &str, points: &[SweepPoint]) -> String {
    let axis_name = match axis {
        SweepAxis::Peers => "peers",
        SweepAxis::Orgs => "orgs",
    };
    let mut out = String::from(
        "axis,value,policy,tps_committed,peer_mean_ms,orderer_mean_ms,event_mean_ms,committed_valid,submitted,stalled_rides\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{},{},{}\n",
            axis_name,
            p.axis_value,
            policy,
            p.report.tps_committed,
            p.report.peer_mean_ms,
            p.report.orderer_mean_ms,
            p.report.event_mean_ms,
            p.report.counters.committed_valid,
            p.report.counters.submitted,
            p.report.stalled_rides,
        ));
    }
    out
}
