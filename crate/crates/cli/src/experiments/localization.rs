//! `localization`: overlap traces, the stochastic integral and the conditional table.

use polymer_core::env::SeededEnvironment;
use polymer_core::lattice::PolymerConfig;
use polymer_core::localization::{
    conditional_localization, overlap_trace, stochastic_integral, LocalizationTable, OverlapTrace,
    StochasticIntegralTrace, MIN_LOCALIZATION_REPLICAS,
};
use polymer_core::rng::replica_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{fmt_f64, fmt_opt, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct IntegralSummary {
    alpha: f64,
    claimed_bounds: (f64, f64),
    derived_bounds: (f64, f64),
    claimed_violations: usize,
    derived_violations: usize,
    max_qv_residual: f64,
    min_increment: f64,
    max_increment: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    d: usize,
    n: i64,
    beta: f64,
    replicas: usize,
    sandwich_violations: usize,
    integral: Option<IntegralSummary>,
    /// `None` when fewer replicas than the conditional table needs.
    table: Option<LocalizationTable>,
}

pub fn run(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let n = config.n;
    config.check_box(n)?;
    let cfg = PolymerConfig::new(config.d, n, config.beta, config.law);
    let bounded = config.law.upper_bound().is_some();
    let runs = (0..config.replicas as u64)
        .into_par_iter()
        .map(|i| -> polymer_core::Result<(OverlapTrace, Option<StochasticIntegralTrace>)> {
            let env = SeededEnvironment::new(replica_seed(config.seed, i), config.law);
            let ov = overlap_trace(&cfg, &env, n)?;
            let si = if bounded { Some(stochastic_integral(&cfg, &env, n)?) } else { None };
            Ok((ov, si))
        })
        .collect::<polymer_core::Result<Vec<_>>>()?;

    let len = n as usize + 1;
    let reps = runs.len().max(1) as f64;
    let mut rows = Vec::with_capacity(len);
    for m in 0..len {
        let avg = |f: &dyn Fn(&OverlapTrace) -> f64| runs.iter().map(|(o, _)| f(o)).sum::<f64>() / reps;
        let w = avg(&|o| o.partition[m]);
        let r = avg(&|o| o.replica_overlap[m]);
        let mass = avg(&|o| o.max_mass[m]);
        let i = if m == 0 { f64::NAN } else { avg(&|o| o.overlap_at(m)) };
        let hw = if bounded {
            Some(runs.iter().map(|(_, s)| s.as_ref().map_or(0.0, |s| s.integral[m])).sum::<f64>() / reps)
        } else {
            None
        };
        rows.push(vec![
            m.to_string(),
            fmt_f64(w),
            fmt_f64(r),
            fmt_f64(mass),
            fmt_f64(i),
            fmt_opt(hw),
        ]);
    }
    art.csv("overlap_mean.csv", &["m", "W", "R", "max_mass", "I", "HW"], rows)?;
    if let Some((ov, si)) = runs.first() {
        art.write_with("trace_0.csv", |buf| Ok(ov.write_csv(buf)?))?;
        if let Some(si) = si {
            art.write_with("integral_0.csv", |buf| Ok(si.write_csv(buf)?))?;
        }
    }

    let sandwich = runs.iter().map(|(o, _)| o.sandwich_violations(config.d).len()).sum();
    let integral = runs.first().and_then(|(_, s)| s.as_ref()).map(|first| {
        let all = runs.iter().filter_map(|(_, s)| s.as_ref());
        let incs = || all.clone().flat_map(|s| s.increments.iter().copied());
        IntegralSummary {
            alpha: first.alpha,
            claimed_bounds: first.claimed_bounds,
            derived_bounds: first.derived_bounds,
            claimed_violations: all.clone().map(|s| s.claimed_violations.len()).sum(),
            derived_violations: all.clone().map(|s| s.derived_violations.len()).sum(),
            max_qv_residual: all.clone().flat_map(|s| s.qv_residuals.iter().copied()).fold(0.0, f64::max),
            min_increment: incs().fold(f64::INFINITY, f64::min),
            max_increment: incs().fold(f64::NEG_INFINITY, f64::max),
        }
    });
    let table = if config.replicas >= MIN_LOCALIZATION_REPLICAS {
        let t = conditional_localization(
            &cfg,
            &config.localization.levels,
            config.localization.threshold,
            config.replicas,
            n,
            config.seed,
        )?;
        art.csv(
            "localization.csv",
            &["u", "numerator", "denominator", "ratio", "ratio_lo", "ratio_hi"],
            t.cells
                .iter()
                .map(|c| {
                    vec![
                        fmt_f64(c.u),
                        c.numerator.to_string(),
                        c.denominator.to_string(),
                        fmt_opt(c.ratio.map(|r| r.value)),
                        fmt_opt(c.ratio.map(|r| r.lo)),
                        fmt_opt(c.ratio.map(|r| r.hi)),
                    ]
                })
                .collect(),
        )?;
        Some(t)
    } else {
        None
    };
    art.write_json(
        "summary.json",
        &Summary {
            d: config.d,
            n,
            beta: config.beta,
            replicas: config.replicas,
            sandwich_violations: sandwich,
            integral,
            table,
        },
    )?;
    Ok(())
}
