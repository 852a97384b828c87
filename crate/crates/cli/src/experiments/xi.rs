//! `xi-rate`: replicate sets of `X_n^f` over a horizon grid and their decay fit.

use polymer_core::env::SeededEnvironment;
use polymer_core::lattice::PolymerConfig;
use polymer_core::martingale::{field_average, rate_regression, RateFit, RateSample};
use polymer_core::rng::replica_seed;
use polymer_core::stats::{mean, median, std_dev};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{fmt_f64, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const BOOTSTRAP_REPS: usize = 1000;

#[derive(Debug, Serialize)]
struct HorizonStats {
    n: i64,
    mean: f64,
    sd: f64,
    median_abs: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    d: usize,
    beta: f64,
    replicas: usize,
    horizons: Vec<HorizonStats>,
    fit: RateFit,
}

pub fn run(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let mut grid = config.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if let Some(&n_max) = grid.last() {
        let reach = (config.test_function.half_width() * (n_max as f64).sqrt()).ceil() as i64 + n_max;
        config.check_box(reach)?;
    }
    let mut samples = Vec::new();
    for &n in &grid {
        let cfg = PolymerConfig::new(config.d, n, config.beta, config.law);
        let values = (0..config.replicas as u64)
            .into_par_iter()
            .map(|i| {
                let env = SeededEnvironment::new(replica_seed(config.seed, i), config.law);
                field_average(&config.test_function, &cfg, &env, n)
            })
            .collect::<polymer_core::Result<Vec<f64>>>()?;
        samples.push(RateSample { n, values });
    }
    let fit = rate_regression(&samples, BOOTSTRAP_REPS, config.seed)?;
    let mut rows = Vec::new();
    for s in &samples {
        for (i, v) in s.values.iter().enumerate() {
            rows.push(vec![
                s.n.to_string(),
                i.to_string(),
                replica_seed(config.seed, i as u64).to_string(),
                fmt_f64(*v),
            ]);
        }
    }
    art.csv("samples.csv", &["n", "replica", "env_seed", "X"], rows)?;
    let horizons = samples
        .iter()
        .map(|s| {
            let abs: Vec<f64> = s.values.iter().map(|v| v.abs()).collect();
            HorizonStats {
                n: s.n,
                mean: mean(&s.values),
                sd: std_dev(&s.values),
                median_abs: median(&abs),
            }
        })
        .collect();
    art.write_json(
        "summary.json",
        &Summary {
            d: config.d,
            beta: config.beta,
            replicas: config.replicas,
            horizons,
            fit,
        },
    )?;
    Ok(())
}
