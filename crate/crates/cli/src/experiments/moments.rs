//! `moments` and `scan-beta`.

use polymer_core::lattice::PolymerConfig;
use polymer_core::moments::{
    a2_positive, beta_crit_l2, doubling_growth_rate, gff_intensity, log_second_moment_curve, phase_point,
    GffIntensity, PhasePoint,
};
use serde::Serialize;

use crate::artifacts::{fmt_f64, fmt_opt, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::CliError;

fn tail_rows(pp: &PhasePoint) -> Vec<Vec<String>> {
    pp.p_star
        .cells
        .iter()
        .map(|c| {
            vec![
                fmt_f64(c.t),
                c.exceed.to_string(),
                c.replicas.to_string(),
                fmt_f64(c.prob.value),
                fmt_f64(c.prob.lo),
                fmt_f64(c.prob.hi),
                fmt_opt(c.floor),
            ]
        })
        .collect()
}

fn phase(config: &ExperimentConfig, beta: f64) -> Result<PhasePoint, CliError> {
    let horizon = config.phase.horizons.iter().copied().max().unwrap_or(0) as i64;
    config.check_box(horizon)?;
    let mut opts = config.phase.clone();
    opts.replicas = config.replicas;
    opts.seed = config.seed;
    let cfg = PolymerConfig::new(config.d, horizon, beta, config.law);
    Ok(phase_point(&cfg, &opts)?)
}

pub fn run_moments(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let pp = phase(config, config.beta)?;
    art.write_with("moment_curve.csv", |buf| Ok(pp.curve.write_csv(buf)?))?;
    art.csv(
        "tail.csv",
        &["t", "exceed", "replicas", "prob", "prob_lo", "prob_hi", "floor"],
        tail_rows(&pp),
    )?;
    art.write_json("summary.json", &pp)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScanRow {
    beta: f64,
    pair_exponent: f64,
    a2_exact: f64,
    a2_positive: bool,
    log_second_moment: f64,
    gamma: Option<f64>,
    p_star: Option<f64>,
    q_star: Option<f64>,
    xi_hat: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ScanSummary {
    d: usize,
    exact_horizon: usize,
    beta_crit_l2: Option<f64>,
    /// Last grid value with `a(2) = 0` and first with `a(2) > 0`.
    a2_sign_change: Option<(f64, f64)>,
    rows: Vec<ScanRow>,
}

pub fn run_scan(config: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let mut grid = config.beta_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let big_n = config.phase.exact_horizon;
    let mut rows = Vec::new();
    for &beta in &grid {
        let curve = log_second_moment_curve(config.d, 2 * big_n, beta, &config.law)?;
        let gamma = match gff_intensity(config.d, beta, &config.law, config.phase.gamma_horizon)? {
            GffIntensity::Converged { gamma, .. } => Some(gamma),
            GffIntensity::Divergent { .. } => None,
        };
        let (p_star, q_star, xi_hat) = if config.scan_monte_carlo {
            let pp = phase(config, beta)?;
            (pp.p_star.p_star.map(|e| e.value), pp.q_star.value, pp.xi_hat)
        } else {
            (None, None, None)
        };
        rows.push(ScanRow {
            beta,
            pair_exponent: config.law.pair_exponent(beta),
            a2_exact: doubling_growth_rate(&curve, big_n),
            a2_positive: a2_positive(&curve, big_n),
            log_second_moment: curve[2 * big_n],
            gamma,
            p_star,
            q_star,
            xi_hat,
        });
    }
    let beta_crit = match beta_crit_l2(config.d, &config.law, 1e-9) {
        Ok(b) => Some(b),
        Err(polymer_core::Error::NoCriticalPoint(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let a2_sign_change = rows
        .windows(2)
        .find(|w| !w[0].a2_positive && w[1].a2_positive)
        .map(|w| (w[0].beta, w[1].beta));
    art.csv(
        "scan.csv",
        &[
            "beta",
            "pair_exponent",
            "a2_exact",
            "a2_positive",
            "log_second_moment",
            "gamma",
            "p_star",
            "q_star",
            "xi_hat",
        ],
        rows.iter()
            .map(|r| {
                vec![
                    fmt_f64(r.beta),
                    fmt_f64(r.pair_exponent),
                    fmt_f64(r.a2_exact),
                    r.a2_positive.to_string(),
                    fmt_f64(r.log_second_moment),
                    fmt_opt(r.gamma),
                    fmt_opt(r.p_star),
                    fmt_opt(r.q_star),
                    fmt_opt(r.xi_hat),
                ]
            })
            .collect(),
    )?;
    art.write_json(
        "summary.json",
        &ScanSummary {
            d: config.d,
            exact_horizon: big_n,
            beta_crit_l2: beta_crit,
            a2_sign_change,
            rows,
        },
    )?;
    Ok(())
}
