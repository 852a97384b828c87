//! Replica overlaps, the scale-adapted stochastic integral of `W`, hitting
//! times and conditional localization frequencies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{DisorderLaw, Environment, SeededEnvironment};
use crate::error::{Error, Result};
use crate::lattice::{PolymerConfig, Propagator, SeedProfile, Weigher};
use crate::rng::replica_seed;
use crate::stats::{wilson_interval, Estimate};

/// Point-to-line quantities of one realization from the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTrace {
    pub n: i64,
    /// `W_m`, `m = 0..=n`.
    pub partition: Vec<f64>,
    /// `max_{k <= m} W_k`, `m = 0..=n`.
    pub running_max: Vec<f64>,
    /// `R_m = sum_x rho_m(x)^2`, `m = 0..=n`.
    pub replica_overlap: Vec<f64>,
    /// `max_x rho_m(x)`, `m = 0..=n`.
    pub max_mass: Vec<f64>,
    /// `I_m = sum_x mu_{m-1}(X_m = x)^2` for `m = 1..=n`, stored at index `m - 1`.
    pub next_overlap: Vec<f64>,
}

impl OverlapTrace {
    /// `I_m`, `m >= 1`.
    pub fn overlap_at(&self, m: usize) -> f64 {
        self.next_overlap[m - 1]
    }

    /// Steps `m` where `(4 d^2)^{-1} I_m <= R_{m-1} <= 4 d^2 I_m` fails.
    pub fn sandwich_violations(&self, d: usize) -> Vec<usize> {
        let c = 4.0 * (d * d) as f64;
        (1..=self.next_overlap.len())
            .filter(|&m| {
                let i = self.overlap_at(m);
                let r = self.replica_overlap[m - 1];
                !(i / c <= r && r <= c * i)
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "W", "W_max", "R", "max_mass", "I"])?;
        for m in 0..self.partition.len() {
            let i = if m == 0 { f64::NAN } else { self.overlap_at(m) };
            out.write_record([
                m.to_string(),
                format!("{:.16e}", self.partition[m]),
                format!("{:.16e}", self.running_max[m]),
                format!("{:.16e}", self.replica_overlap[m]),
                format!("{:.16e}", self.max_mass[m]),
                format!("{:.16e}", i),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One step of a point-started pass, normalized by the total mass.
struct OverlapRow {
    partition: f64,
    next_overlap: f64,
    replica_overlap: f64,
    max_mass: f64,
}

/// Runs the point pass from the origin for up to `n` steps; `keep_going` sees
/// each step `m = 1..` and may stop the pass early.
fn overlap_pass<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    n: i64,
    mut keep_going: impl FnMut(i64, &OverlapRow) -> bool,
) -> Result<()> {
    config.validate()?;
    let d = config.d;
    let radius = match config.policy {
        crate::lattice::BoxPolicy::Exact => n,
        crate::lattice::BoxPolicy::Truncate => config.box_radius,
    };
    let mut p = Propagator::new(
        &vec![0; d],
        radius,
        &SeedProfile::point(&vec![0; d]),
        n,
        config.policy,
        config.renormalize,
    )?;
    let weigher = Weigher::new(config.beta, &config.law);
    for _ in 0..n {
        let mut post_sq = 0.0;
        let mut post_max = 0.0f64;
        let st = p.step_polymer(env, &weigher, |_, _, post| {
            post_sq += post * post;
            post_max = post_max.max(post);
        });
        let row = OverlapRow {
            partition: st.sum_post * st.log_scale_before.exp(),
            next_overlap: st.sum_pre_sq / (st.sum_pre * st.sum_pre),
            replica_overlap: post_sq / (st.sum_post * st.sum_post),
            max_mass: post_max / st.sum_post,
        };
        if !keep_going(st.t, &row) {
            break;
        }
    }
    Ok(())
}

pub fn overlap_trace<E: Environment + ?Sized>(config: &PolymerConfig, env: &E, n: i64) -> Result<OverlapTrace> {
    let mut tr = OverlapTrace {
        n,
        partition: vec![1.0],
        running_max: vec![1.0],
        replica_overlap: vec![1.0],
        max_mass: vec![1.0],
        next_overlap: Vec::with_capacity(n as usize),
    };
    overlap_pass(config, env, n, |_, row| {
        let wmax = tr.running_max.last().unwrap().max(row.partition);
        tr.partition.push(row.partition);
        tr.running_max.push(wmax);
        tr.replica_overlap.push(row.replica_overlap);
        tr.max_mass.push(row.max_mass);
        tr.next_overlap.push(row.next_overlap);
        true
    })?;
    Ok(tr)
}

/// `ceil(log_alpha w)` for `w >= 1`, decided on exact powers of `alpha`: the
/// smallest `k >= 0` with `alpha^k >= w`.
pub fn ceil_log(alpha: f64, w: f64) -> i32 {
    debug_assert!(alpha > 1.0);
    if !(w > 1.0) {
        // Also covers w in (0, 1]: k = 0 is the smallest admissible exponent
        // whenever the running maximum starts at W_0 = 1.
        return 0;
    }
    let mut k = ((w.ln() / alpha.ln()).floor() as i32 - 1).max(0);
    while alpha.powi(k) < w {
        k += 1;
    }
    while k > 0 && alpha.powi(k - 1) >= w {
        k -= 1;
    }
    k
}

/// `(H . W)_m = sum_{k <= m} H_k (W_k - W_{k-1})` with `H_k = alpha^{-ceil(log_alpha W*_{k-1})}`
/// and `alpha = 2 e^{beta K}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticIntegralTrace {
    pub alpha: f64,
    /// `H_m`, `m = 1..=n` at index `m - 1`.
    pub integrand: Vec<f64>,
    /// `(H . W)_m`, `m = 0..=n`.
    pub integral: Vec<f64>,
    /// Increments `H_m (W_m - W_{m-1})`, index `m - 1`.
    pub increments: Vec<f64>,
    /// Predictable variation increments `c1 alpha^{-2 c} W_{m-1}^2 I_m`, index `m - 1`.
    pub qv_increments: Vec<f64>,
    /// `<H . W>_m`, `m = 0..=n`.
    pub qv: Vec<f64>,
    /// Relative gap between `qv_increments` and `H_m^2 c1 sum_x Z_m(x)^2` from the raw pass.
    pub qv_residuals: Vec<f64>,
    /// Claimed increment range `[-1/alpha, e^{beta K} - 1]`.
    pub claimed_bounds: (f64, f64),
    /// Range implied by `W_m / W_{m-1} in [e^{beta lo - lambda}, e^{beta K - lambda}]` and `H_m W_{m-1} <= 1`.
    pub derived_bounds: (f64, f64),
    /// Steps `m` whose increment leaves `claimed_bounds`.
    pub claimed_violations: Vec<usize>,
    /// Steps `m` whose increment leaves `derived_bounds`.
    pub derived_violations: Vec<usize>,
}

/// Absolute rounding allowance on the increment range checks.
pub const BOUND_SLACK: f64 = 1e-12;

pub fn stochastic_integral<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    n: i64,
) -> Result<StochasticIntegralTrace> {
    let k = config
        .law
        .upper_bound()
        .ok_or(Error::UnsupportedLaw("the stochastic integral"))?;
    let beta = config.beta;
    let alpha = 2.0 * (beta * k).exp();
    let c1 = config.law.compensator_c1(beta);
    let lam = config.law.log_mgf(beta);
    let lower = config.law.lower_bound().map_or(-1.0, |lo| (beta * lo - lam).exp() - 1.0);
    let claimed = (-1.0 / alpha, (beta * k).exp() - 1.0);
    let derived = (lower.min(0.0), (beta * k - lam).exp() - 1.0);
    let mut tr = StochasticIntegralTrace {
        alpha,
        integrand: Vec::new(),
        integral: vec![0.0],
        increments: Vec::new(),
        qv_increments: Vec::new(),
        qv: vec![0.0],
        qv_residuals: Vec::new(),
        claimed_bounds: claimed,
        derived_bounds: derived,
        claimed_violations: Vec::new(),
        derived_violations: Vec::new(),
    };
    config.validate()?;
    let mut w_prev = 1.0f64;
    let mut w_max = 1.0f64;
    let weigher = Weigher::new(beta, &config.law);
    let d = config.d;
    let mut p = Propagator::new(
        &vec![0; d],
        match config.policy {
            crate::lattice::BoxPolicy::Exact => n,
            crate::lattice::BoxPolicy::Truncate => config.box_radius,
        },
        &SeedProfile::point(&vec![0; d]),
        n,
        config.policy,
        config.renormalize,
    )?;
    for m in 1..=n as usize {
        let st = p.step_polymer(env, &weigher, |_, _, _| {});
        let unit = st.log_scale_before.exp();
        let w = st.sum_post * unit;
        let c = ceil_log(alpha, w_max);
        let h = alpha.powi(-c);
        let inc = h * (w - w_prev);
        let overlap = st.sum_pre_sq / (st.sum_pre * st.sum_pre);
        let qv_inc = c1 * alpha.powi(-2 * c) * w_prev * w_prev * overlap;
        let raw = h * h * c1 * st.sum_pre_sq * unit * unit;
        let residual = if qv_inc == 0.0 && raw == 0.0 {
            0.0
        } else {
            (qv_inc - raw).abs() / qv_inc.abs().max(raw.abs())
        };
        if inc < claimed.0 - BOUND_SLACK || inc > claimed.1 + BOUND_SLACK {
            tr.claimed_violations.push(m);
        }
        if inc < derived.0 - BOUND_SLACK || inc > derived.1 + BOUND_SLACK {
            tr.derived_violations.push(m);
        }
        tr.integrand.push(h);
        tr.increments.push(inc);
        tr.integral.push(tr.integral[m - 1] + inc);
        tr.qv_increments.push(qv_inc);
        tr.qv.push(tr.qv[m - 1] + qv_inc);
        tr.qv_residuals.push(residual);
        w_prev = w;
        w_max = w_max.max(w);
    }
    Ok(tr)
}

impl StochasticIntegralTrace {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "H", "HW", "increment", "QV", "qv_residual"])?;
        for m in 0..self.integral.len() {
            let (h, inc, r) = if m == 0 {
                (f64::NAN, 0.0, 0.0)
            } else {
                (self.integrand[m - 1], self.increments[m - 1], self.qv_residuals[m - 1])
            };
            out.write_record([
                m.to_string(),
                format!("{:.16e}", h),
                format!("{:.16e}", self.integral[m]),
                format!("{:.16e}", inc),
                format!("{:.16e}", self.qv[m]),
                format!("{:.16e}", r),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `exp(lambda (H . W)_m - psi <H . W>_m)` for `m = 0..=n`.
    pub fn exponential_supermartingale(&self, lambda: f64, psi: f64) -> Vec<f64> {
        self.integral
            .iter()
            .zip(&self.qv)
            .map(|(x, q)| (lambda * x - psi * q).exp())
            .collect()
    }
}

/// First `k` in `1..=n_max` with `W_k > u`; `None` when `W` stays at or below `u`.
pub fn hitting_time<E: Environment + ?Sized>(config: &PolymerConfig, env: &E, u: f64, n_max: i64) -> Result<Option<i64>> {
    Ok(hitting_times(config, env, &[u], n_max)?[0])
}

/// [`hitting_time`] for several levels from one pass.
pub fn hitting_times<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    levels: &[f64],
    n_max: i64,
) -> Result<Vec<Option<i64>>> {
    if let Some(u) = levels.iter().find(|&&u| !(u > 0.0)) {
        return Err(Error::Domain(format!("hitting levels must be positive, got {u}")));
    }
    let mut out = vec![None; levels.len()];
    let mut open = levels.len();
    overlap_pass(config, env, n_max, |m, row| {
        for (slot, &u) in out.iter_mut().zip(levels) {
            if slot.is_none() && row.partition > u {
                *slot = Some(m);
                open -= 1;
            }
        }
        open > 0
    })?;
    Ok(out)
}

/// One row of the conditional localization table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCell {
    pub u: f64,
    /// Replicas with `W_n > u` and `max_x mu_{n'}(x) > c` for some `1 <= n' <= n`.
    pub numerator: u64,
    /// Replicas with `W_n > u`.
    pub denominator: u64,
    /// Ratio with a 95% Wilson interval; `None` when the denominator is 0.
    pub ratio: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTable {
    pub d: usize,
    pub n: i64,
    pub beta: f64,
    pub law: DisorderLaw,
    pub threshold: f64,
    pub replicas: usize,
    pub base_seed: u64,
    pub cells: Vec<LocalizationCell>,
}

/// Minimal replica count accepted by [`conditional_localization`].
pub const MIN_LOCALIZATION_REPLICAS: usize = 1000;

pub fn conditional_localization(
    config: &PolymerConfig,
    levels: &[f64],
    threshold: f64,
    replicas: usize,
    n: i64,
    base_seed: u64,
) -> Result<LocalizationTable> {
    if replicas < MIN_LOCALIZATION_REPLICAS {
        return Err(Error::Domain(format!(
            "conditional localization needs at least {MIN_LOCALIZATION_REPLICAS} replicas, got {replicas}"
        )));
    }
    config.validate()?;
    let per_replica: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let env = SeededEnvironment::new(replica_seed(base_seed, i), config.law);
            let mut w = 1.0;
            let mut peak = 0.0f64;
            overlap_pass(config, &env, n, |_, row| {
                w = row.partition;
                peak = peak.max(row.max_mass);
                true
            })?;
            Ok((w, peak))
        })
        .collect::<Result<_>>()?;
    let cells = levels
        .iter()
        .map(|&u| {
            let denominator = per_replica.iter().filter(|(w, _)| *w > u).count() as u64;
            let numerator = per_replica
                .iter()
                .filter(|(w, peak)| *w > u && *peak > threshold)
                .count() as u64;
            LocalizationCell {
                u,
                numerator,
                denominator,
                ratio: (denominator > 0).then(|| wilson_interval(numerator, denominator, 0.05)),
            }
        })
        .collect();
    Ok(LocalizationTable {
        d: config.d,
        n,
        beta: config.beta,
        law: config.law,
        threshold,
        replicas,
        base_seed,
        cells,
    })
}
