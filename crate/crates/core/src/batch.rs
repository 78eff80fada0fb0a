//! Independent scenario runs and electrical sweeps, fanned out over a rayon
//! pool when the `parallel` feature is on.
//!
//! Each simulation is single-timeline and deterministic, so running many of
//! them side by side gives the same results as running them one after another.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::SimConfig;
use crate::envmodel::SmokeChainParams;
use crate::error::DomainError;
use crate::firmware::{adc_sample, AdcCode};
use crate::scenario::Scenario;
use crate::sim::{run, RunOutcome, SimError};

/// One scenario run: the scenario, an optional config override and a duration.
#[derive(Debug, Clone)]
pub struct BatchJob {
    pub scenario: Scenario,
    pub config: Option<SimConfig>,
    pub duration_ms: u64,
}

impl BatchJob {
    fn run(&self) -> Result<RunOutcome, SimError> {
        run(&self.scenario, self.config.as_ref(), self.duration_ms)
    }
}

pub fn run_batch_sequential(jobs: &[BatchJob]) -> Vec<Result<RunOutcome, SimError>> {
    jobs.iter().map(BatchJob::run).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(jobs: &[BatchJob]) -> Vec<Result<RunOutcome, SimError>> {
    jobs.par_iter().map(BatchJob::run).collect()
}

/// Runs every job, in parallel when available. Results keep job order.
pub fn run_batch(jobs: &[BatchJob]) -> Vec<Result<RunOutcome, SimError>> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(jobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(jobs)
    }
}

/// Smoke chain output and its ADC code at each density.
pub fn smoke_sweep(
    chain: &SmokeChainParams,
    densities: &[f64],
) -> Result<Vec<(f64, AdcCode)>, DomainError> {
    let point = |&d: &f64| -> Result<(f64, AdcCode), DomainError> {
        let v = chain.output(d)?;
        Ok((v, adc_sample(v)?))
    };
    #[cfg(feature = "parallel")]
    {
        densities.par_iter().map(point).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        densities.iter().map(point).collect()
    }
}
