//! Traffic generation, benchmarks, restructuring sweeps, and adversary
//! scenarios.
//!
//! A benchmark drives full ride lifecycles — six transactions per ride:
//! request, accept, set destination, pickup, dropoff, leave — through the
//! simulated network from a set of submitter clients, at a constant rate
//! with bounded jitter or with Poisson arrivals. Three latencies are
//! sampled per transaction (endorsement round-trip, ordering
//! acknowledgment, registration-to-commit-event) and aggregated into a
//! report with committed throughput.

mod adversary;
mod bench;
mod sweep;

use thiserror::Error;

use crate::netsim::{SimRng, SimTime};

pub use adversary::{run_adversary, AdversaryScenario, ScenarioVerdict};
pub use bench::{run_bench, BenchOptions, BenchReport, WindowMean, LIFECYCLE_FUNCTIONS};
pub use sweep::{sweep, trend_csv, SweepAxis, SweepOptions, SweepPoint};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("delay must be positive, got {0}ms")]
    BadDelay(f64),
    #[error("deviation must be in [0, 1), got {0}")]
    BadDeviation(f64),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("ride count must be positive")]
    NoRides,
}

/// How submitters space their transactions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficProfile {
    /// Uniform delays in `[delay·(1−dev), delay·(1+dev)]` milliseconds
    /// between one submitter's consecutive transactions.
    ConstantRate { delay_ms: f64, deviation_frac: f64 },
    /// Poisson process at `lambda` transactions per second, aggregate
    /// across all submitters.
    Poisson { lambda_tps: f64 },
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        match *self {
            TrafficProfile::ConstantRate {
                delay_ms,
                deviation_frac,
            } => {
                if delay_ms <= 0.0 {
                    return Err(WorkloadError::BadDelay(delay_ms));
                }
                if !(0.0..1.0).contains(&deviation_frac) {
                    return Err(WorkloadError::BadDeviation(deviation_frac));
                }
                Ok(())
            }
            TrafficProfile::Poisson { lambda_tps } => {
                if lambda_tps <= 0.0 {
                    return Err(WorkloadError::BadLambda(lambda_tps));
                }
                Ok(())
            }
        }
    }

    /// Per-submitter delay stream; a Poisson aggregate rate is split
    /// evenly across `submitters`.
    pub fn stream_for_submitter(&self, submitters: usize) -> DelayStream {
        match *self {
            TrafficProfile::ConstantRate {
                delay_ms,
                deviation_frac,
            } => DelayStream::Constant {
                delay_us: delay_ms * 1000.0,
                deviation_frac,
            },
            TrafficProfile::Poisson { lambda_tps } => DelayStream::Poisson {
                mean_us: 1_000_000.0 / (lambda_tps / submitters.max(1) as f64),
            },
        }
    }
}

/// Stream of inter-submission delays.
#[derive(Debug, Clone, Copy)]
pub enum DelayStream {
    Constant { delay_us: f64, deviation_frac: f64 },
    Poisson { mean_us: f64 },
}

impl DelayStream {
    pub fn next_us(&self, rng: &mut SimRng) -> u64 {
        match *self {
            DelayStream::Constant {
                delay_us,
                deviation_frac,
            } => {
                let lo = delay_us * (1.0 - deviation_frac);
                let hi = delay_us * (1.0 + deviation_frac);
                rng.uniform(lo, hi).round() as u64
            }
            DelayStream::Poisson { mean_us } => rng.exponential(mean_us).round() as u64,
        }
    }
}

/// Uniform delays with a deviation fraction around `delay_ms`.
pub fn gen_constant(delay_ms: f64, deviation_frac: f64) -> Result<DelayStream, WorkloadError> {
    TrafficProfile::ConstantRate {
        delay_ms,
        deviation_frac,
    }
    .validate()?;
    Ok(DelayStream::Constant {
        delay_us: delay_ms * 1000.0,
        deviation_frac,
    })
}

/// Exponential inter-arrivals at `lambda_tps` transactions per second.
pub fn gen_poisson(lambda_tps: f64) -> Result<DelayStream, WorkloadError> {
    TrafficProfile::Poisson { lambda_tps }.validate()?;
    Ok(DelayStream::Poisson {
        mean_us: 1_000_000.0 / lambda_tps,
    })
}

/// Render a virtual instant as an `M/D/YYYY HH:MM` timestamp, counting
/// from a fixed calendar origin. Only the simulation's virtual clock ever
/// feeds this; there is no wall-clock path.
pub fn virtual_timestamp(t: SimTime) -> String {
    const ORIGIN: (u32, u32, u32, u64) = (2018, 12, 5, 12 * 60); // y, m, d, minutes into day
    let total_minutes = ORIGIN.3 + t.as_us() / 60_000_000;
    let (mut year, mut month, mut day) = (ORIGIN.0, ORIGIN.1, ORIGIN.2);
    let mut extra_days = total_minutes / (24 * 60);
    let minutes_in_day = total_minutes % (24 * 60);
    while extra_days > 0 {
        let dim = days_in_month(year, month) as u64;
        let remaining = dim - day as u64;
        if extra_days <= remaining {
            day += extra_days as u32;
            break;
        }
        extra_days -= remaining + 1;
        day = 1;
        month += 1;
        if month > 12 {
            month = 1;
            year += 1;
        }
    }
    format!(
        "{}/{}/{} {:02}:{:02}",
        month,
        day,
        year,
        minutes_in_day / 60,
        minutes_in_day % 60
    )
}

fn days_in_month(year: u32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 {
                29
            } else {
                28
            }
        }
        _ => unreachable!("month out of range"),
    }
}
