//! `qv`: martingale traces of `M_{n,k}` and level-set profiles.

use polymer_core::env::SeededEnvironment;
use polymer_core::lattice::PolymerConfig;
use polymer_core::martingale::{level_set_profile, martingale_trace, LevelSetProfile, MartingaleTrace};
use polymer_core::rng::replica_seed;
use polymer_core::stats::{mean, std_error};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{fmt_f64, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct Summary {
    d: usize,
    n: i64,
    beta: f64,
    replicas: usize,
    max_residual: f64,
    field_mean: f64,
    field_sd_error: f64,
    /// Largest `|mean(M^2 - <M>)| / se` over `k`.
    max_compensated_z: f64,
    level_delta: Option<f64>,
    /// Realizations with `sum Wcheck^2 > bound` (should be 0).
    level_bound_violations: usize,
}

pub fn run(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let n = config.n;
    let delta = config.qv.level_delta;
    let reach = (config.test_function.half_width() * (n as f64).sqrt()).ceil() as i64 + n;
    let window = delta.map_or(0, |dl| (n as f64).powf(0.5 + dl).floor() as i64 + n);
    config.check_box(reach.max(window))?;
    let cfg = PolymerConfig::new(config.d, n, config.beta, config.law);
    let runs = (0..config.replicas as u64)
        .into_par_iter()
        .map(|i| -> polymer_core::Result<(MartingaleTrace, Option<LevelSetProfile>)> {
            let env = SeededEnvironment::new(replica_seed(config.seed, i), config.law);
            let tr = martingale_trace(&config.test_function, &cfg, &env, n)?;
            let lp = match delta {
                Some(dl) => Some(level_set_profile(&cfg, &env, n, dl)?),
                None => None,
            };
            Ok((tr, lp))
        })
        .collect::<polymer_core::Result<Vec<_>>>()?;

    if let Some((tr, _)) = runs.first() {
        art.write_with("trace_0.csv", |buf| Ok(tr.write_csv(buf)?))?;
    }
    let mut rows = Vec::new();
    let mut max_z = 0.0f64;
    for k in 0..=n as usize {
        let col: Vec<f64> = runs.iter().map(|(t, _)| t.m[k] * t.m[k] - t.qv[k]).collect();
        let qv: Vec<f64> = runs.iter().map(|(t, _)| t.qv[k]).collect();
        let (mu, se) = (mean(&col), std_error(&col));
        let z = if se > 0.0 { mu / se } else { 0.0 };
        max_z = max_z.max(z.abs());
        rows.push(vec![k.to_string(), fmt_f64(mean(&qv)), fmt_f64(mu), fmt_f64(se), fmt_f64(z)]);
    }
    art.csv("compensated.csv", &["k", "QV_mean", "M2_minus_QV_mean", "se", "z"], rows)?;

    let mut level_violations = 0;
    if delta.is_some() {
        let mut rows = Vec::new();
        for (i, (_, lp)) in runs.iter().enumerate() {
            let lp = lp.as_ref().expect("level profile computed");
            level_violations += usize::from(lp.sum_sq > lp.bound);
            for (k, c) in lp.counts.iter().enumerate() {
                rows.push(vec![i.to_string(), k.to_string(), c.to_string()]);
            }
        }
        art.csv("level_sets.csv", &["replica", "level", "count"], rows)?;
    }
    let fields: Vec<f64> = runs.iter().map(|(t, _)| t.field).collect();
    art.write_json(
        "summary.json",
        &Summary {
            d: config.d,
            n,
            beta: config.beta,
            replicas: config.replicas,
            max_residual: runs.iter().map(|(t, _)| t.max_residual()).fold(0.0, f64::max),
            field_mean: mean(&fields),
            field_sd_error: std_error(&fields),
            max_compensated_z: max_z,
            level_delta: delta,
            level_bound_violations: level_violations,
        },
    )?;
    Ok(())
}
