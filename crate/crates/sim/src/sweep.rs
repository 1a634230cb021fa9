//! Parameter sweeps.
//!
//! Points are the cartesian product of the axes in the order distance, mu, eve
//! fraction, each axis in the order declared. Every point runs `seeds` sessions.
//! Job `j` (counting points, then repetitions) gets seed `mix64(master, j)`, so a
//! row's seed does not depend on how the jobs are scheduled.

use qkd_core::protocol::{run_session, SessionError};
use qkd_core::rng::mix64;
use qkd_core::{EveStrategy, FiberChannel, SessionConfig, SourceModel};
use rayon::prelude::*;

use crate::config::SweepAxes;
use crate::table::CsvRow;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("the sweep needs at least one non-empty axis (distance_km, mu, eve_fraction)")]
    NoAxes,
    #[error("sweep seeds per point must be at least 1")]
    NoSeeds,
    #[error("sweep point {index}: {message}")]
    InvalidPoint { index: usize, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot start worker threads: {0}")]
    Threads(String),
}

/// Expands the axes around `base` into one config per job, in output order.
pub fn plan(base: &SessionConfig, axes: &SweepAxes) -> Result<Vec<SessionConfig>, SweepError> {
    if axes.is_empty() {
        return Err(SweepError::NoAxes);
    }
    let seeds = axes.seeds.unwrap_or(1);
    if seeds == 0 {
        return Err(SweepError::NoSeeds);
    }
    let or_base = |axis: &[f64], base: Option<f64>| -> Vec<Option<f64>> {
        if axis.is_empty() {
            vec![base]
        } else {
            axis.iter().copied().map(Some).collect()
        }
    };
    let base_mu = match base.source {
        SourceModel::Poisson { mu } => Some(mu),
        SourceModel::Fixed { .. } => None,
    };

    let mut jobs = Vec::new();
    let mut point = 0;
    for distance in or_base(&axes.distance_km, Some(base.channel.length_km)) {
        for mu in or_base(&axes.mu, base_mu) {
            for fraction in or_base(&axes.eve_fraction, None) {
                let invalid = |message: String| SweepError::InvalidPoint { index: point, message };
                let mut config = base.clone();
                config.channel = FiberChannel::new(
                    distance.expect("distance always set"),
                    base.channel.attenuation_db_per_km,
                    base.channel.excess_flip_prob,
                )
                .map_err(|e| invalid(e.to_string()))?;
                if let Some(mu) = mu {
                    config.source = SourceModel::poisson(mu).map_err(|e| invalid(e.to_string()))?;
                }
                if let Some(fraction) = fraction {
                    config.eve = EveStrategy::InterceptResend { fraction };
                    config.eve.validate().map_err(|e| invalid(e.to_string()))?;
                }
                for _ in 0..seeds {
                    config.seed = mix64(base.seed, jobs.len() as u64);
                    jobs.push(config.clone());
                }
                point += 1;
            }
        }
    }
    Ok(jobs)
}

/// Runs every job and returns rows in job order. `threads = None` uses rayon's
/// default pool.
pub fn run(jobs: &[SessionConfig], threads: Option<usize>) -> Result<Vec<CsvRow>, SweepError> {
    let work = || -> Result<Vec<CsvRow>, SweepError> {
        jobs.par_iter()
            .map(|config| Ok(CsvRow::new(config, &run_session(config)?)))
            .collect()
    };
    match threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Threads(e.to_string()))?
            .install(work),
    }
}
