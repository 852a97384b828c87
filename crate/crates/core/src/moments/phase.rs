//! Phase-diagram summaries at one inverse temperature.

use serde::{Deserialize, Serialize};

use super::exact::{
    beta_crit_l2, doubling_growth_rate, first_return_sequence, gff_intensity, log_second_moment_curve,
    log_second_moment_from_returns, return_probability, return_sequence, GffIntensity, CRITICAL_RETURN_HORIZON,
};
use super::mc::{estimate_qstar, pstar_from_set, simulate_replicas, xi_from_pstar, MomentCurve, PStar, QStar};
use crate::env::DisorderLaw;
use crate::error::{Error, Result};
use crate::lattice::PolymerConfig;
use crate::stats::Estimate;

/// Whether `a(2) > 0` as resolved at horizon `n`: the doubling growth rate of
/// the exact second moment exceeds `1 / n`. Below the edge the rate decays
/// faster than `1 / n`; at the edge it is `O(log 2 / (2n))`.
pub fn a2_positive(log_curve: &[f64], n: usize) -> bool {
    doubling_growth_rate(log_curve, n) > 1.0 / n as f64
}

/// Inverse temperature in `[lo, hi]` where [`a2_positive`] at horizon `n` switches on, by bisection.
pub fn a2_sign_change(d: usize, law: &DisorderLaw, n: usize, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    law.validate()?;
    let f = first_return_sequence(&return_sequence(d, 2 * n)?);
    let positive = |beta: f64| a2_positive(&log_second_moment_from_returns(&f, law.pair_exponent(beta)), n);
    if positive(lo) || !positive(hi) {
        return Err(Error::NoCriticalPoint(format!(
            "a(2) at horizon {n} does not change sign on [{lo}, {hi}]"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if positive(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Knobs for [`phase_point`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseOptions {
    pub horizons: Vec<usize>,
    pub replicas: usize,
    pub p_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Threshold on the extrapolated `a(p)` that counts as positive.
    pub q_tol: f64,
    /// Horizon `N` of the exact `a(2)` test (uses `E[W_{2N}^2]`).
    pub exact_horizon: usize,
    /// Largest horizon for the second-moment limit behind `gamma`.
    pub gamma_horizon: usize,
    pub seed: u64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            horizons: vec![8, 16, 32, 64],
            replicas: 2000,
            p_grid: (0..=8).map(|i| 1.0 + 0.25 * i as f64).collect(),
            t_grid: vec![2.0, 4.0, 8.0],
            q_tol: 0.01,
            exact_horizon: 4096,
            gamma_horizon: 1 << 14,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub d: usize,
    pub beta: f64,
    pub law: DisorderLaw,
    /// Exact doubling growth rate of `E[W_n^2]` at `exact_horizon`.
    pub a2_exact: f64,
    pub a2_positive: bool,
    pub p_star: PStar,
    pub q_star: QStar,
    pub xi_hat: Option<f64>,
    pub gamma: GffIntensity,
    pub beta_crit_l2: Option<f64>,
    /// `(T, p_return,T)` at doubling `T`.
    pub p_return: Vec<(usize, f64)>,
    pub p_return_extrapolated: f64,
    pub curve: MomentCurve,
}

impl PhasePoint {
    /// `p* <= q*` up to the joint intervals: the lower end of `p*` does not
    /// exceed the upper end of `q*`.
    pub fn ordering_holds(&self) -> Option<bool> {
        let p = self.p_star.p_star?;
        Some(match self.q_star.hi {
            Some(q_hi) => p.lo <= q_hi,
            None => true,
        })
    }

    pub fn p_star_estimate(&self) -> Option<Estimate> {
        self.p_star.p_star
    }
}

pub fn phase_point(config: &PolymerConfig, opts: &PhaseOptions) -> Result<PhasePoint> {
    config.validate()?;
    let (d, beta, law) = (config.d, config.beta, config.law);
    let curve2 = log_second_moment_curve(d, 2 * opts.exact_horizon, beta, &law)?;
    let ret = return_probability(d, CRITICAL_RETURN_HORIZON)?;
    let beta_crit = match beta_crit_l2(d, &law, 1e-6) {
        Ok(b) => Some(b),
        Err(Error::NoCriticalPoint(_)) => None,
        Err(e) => return Err(e),
    };
    let set = simulate_replicas(config, &opts.horizons, opts.replicas, opts.seed)?;
    let p_star = pstar_from_set(&set, &opts.t_grid, opts.seed)?;
    let curve = MomentCurve::from_samples(set, &opts.p_grid, opts.seed ^ 0xC0);
    let q_star = estimate_qstar(&curve, opts.q_tol);
    let xi_hat = p_star.p_star.and_then(|p| xi_from_pstar(d, p.value).ok());
    Ok(PhasePoint {
        d,
        beta,
        law,
        a2_exact: doubling_growth_rate(&curve2, opts.exact_horizon),
        a2_positive: a2_positive(&curve2, opts.exact_horizon),
        p_star,
        q_star,
        xi_hat,
        gamma: gff_intensity(d, beta, &law, opts.gamma_horizon)?,
        beta_crit_l2: beta_crit,
        p_return: ret.table,
        p_return_extrapolated: ret.extrapolated,
        curve,
    })
}
