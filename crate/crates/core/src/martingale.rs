//! The f-weighted field average of point-to-line partition functions, its
//! martingale decomposition and quadratic variation, and decay-rate fits.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::lattice::{forward_field, BoxPolicy, PolymerConfig, Propagator, SeedProfile, Weigher};
use crate::stats::{self, Estimate};
use crate::testfn::TestFunction;

/// Residual above which [`martingale_trace`] reports an integrity failure.
pub const INCREMENT_TOLERANCE: f64 = 1e-8;

/// Config whose box holds an f-seeded pass of `n` steps losslessly under the
/// exact policy.
pub(crate) fn seeded_config(config: &PolymerConfig, seed: &SeedProfile, n: i64) -> PolymerConfig {
    let mut c = config.clone();
    if c.policy == BoxPolicy::Exact {
        c.box_radius = c.box_radius.max(seed.reach(&vec![0; c.d]) + n);
    }
    c
}

/// `n^{-d/2} sum_x f(x / sqrt n)`.
pub fn centering_constant(f: &TestFunction, n: i64, d: usize) -> f64 {
    SeedProfile::scaled(f, n, d).total() * scale_factor(n, d)
}

fn scale_factor(n: i64, d: usize) -> f64 {
    (n.max(1) as f64).powf(-(d as f64) / 2.0)
}

/// `X_n^f = n^{-d/2} (sum_x f(x / sqrt n) W_n^{0,x} - sum_x f(x / sqrt n))` from one f-seeded pass.
pub fn field_average<E: Environment + ?Sized>(f: &TestFunction, config: &PolymerConfig, env: &E, n: i64) -> Result<f64> {
    f.validate(config.d)?;
    if config.beta == 0.0 {
        return Ok(0.0);
    }
    let seed = SeedProfile::scaled(f, n, config.d);
    let cfg = seeded_config(config, &seed, n);
    let run = forward_field(&cfg, env, &seed, n, false)?;
    Ok(scale_factor(n, config.d) * (run.total(n as usize) - seed.total()))
}

/// `M_{n,k}` for `k = 0..=n` with both sides of the one-step increment identity
/// and the predictable quadratic variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTrace {
    pub n: i64,
    /// `X_n^f`.
    pub field: f64,
    pub centering: f64,
    /// `M_{n,k}`, `k = 0..=n`.
    pub m: Vec<f64>,
    /// `<M>_k`, `k = 0..=n`.
    pub qv: Vec<f64>,
    /// `M_{n,t} - M_{n,t-1}` from the forward totals, `t = 1..=n`.
    pub increment_forward: Vec<f64>,
    /// `n^{-d/2} sum_x (w_{t,x} - 1) Utilde_t(x)`, `t = 1..=n`.
    pub increment_backward: Vec<f64>,
    /// Relative disagreement of the two increment columns.
    pub residuals: Vec<f64>,
}

impl MartingaleTrace {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `t, M, QV, residual` rows; row `t = 0` carries residual 0.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "M", "QV", "residual"])?;
        for t in 0..self.m.len() {
            let r = if t == 0 { 0.0 } else { self.residuals[t - 1] };
            out.write_record([
                t.to_string(),
                format!("{:.16e}", self.m[t]),
                format!("{:.16e}", self.qv[t]),
                format!("{:.16e}", r),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn martingale_trace<E: Environment + ?Sized>(
    f: &TestFunction,
    config: &PolymerConfig,
    env: &E,
    n: i64,
) -> Result<MartingaleTrace> {
    f.validate(config.d)?;
    let d = config.d;
    let seed = SeedProfile::scaled(f, n, d);
    let scale = scale_factor(n, d);
    let centering = seed.total() * scale;
    let len = n.max(0) as usize;
    if config.beta == 0.0 {
        return Ok(MartingaleTrace {
            n,
            field: 0.0,
            centering,
            m: vec![0.0; len + 1],
            qv: vec![0.0; len + 1],
            increment_forward: vec![0.0; len],
            increment_backward: vec![0.0; len],
            residuals: vec![0.0; len],
        });
    }
    let cfg = seeded_config(config, &seed, n);
    cfg.validate()?;
    let c1 = cfg.law.compensator_c1(cfg.beta);
    let weigher = Weigher::new(cfg.beta, &cfg.law);
    let mut p = Propagator::new(&vec![0; d], cfg.box_radius, &seed, n, cfg.policy, cfg.renormalize)?;
    let total0 = seed.total();
    let mut prev_total = total0;
    let mut m = vec![0.0];
    let mut qv = vec![0.0];
    let mut fwd = Vec::with_capacity(len);
    let mut bwd = Vec::with_capacity(len);
    let mut residuals = Vec::with_capacity(len);
    for _ in 0..n {
        let t = p.time() + 1;
        let mut rhs = 0.0;
        let mut rhs_abs = 0.0;
        let st = p.step_polymer(env, &weigher, |x, pre, _| {
            let w = weigher.weight(env, t, x) - 1.0;
            rhs += w * pre;
            rhs_abs += (w * pre).abs();
        });
        let unit = st.log_scale_before.exp();
        let total = st.sum_post * unit;
        let lhs = scale * (total - prev_total);
        let rhs = scale * rhs * unit;
        let denom = (scale * rhs_abs * unit).max(lhs.abs()).max(f64::MIN_POSITIVE);
        let residual = (lhs - rhs).abs() / denom;
        if residual > INCREMENT_TOLERANCE {
            return Err(Error::Integrity(format!(
                "increment identity broken at t={t}: forward {lhs:e}, backward {rhs:e}"
            )));
        }
        let q = qv.last().copied().unwrap_or(0.0) + c1 * scale * scale * st.sum_pre_sq * unit * unit;
        m.push(scale * (total - total0));
        qv.push(q);
        fwd.push(lhs);
        bwd.push(rhs);
        residuals.push(residual);
        prev_total = total;
    }
    Ok(MartingaleTrace {
        n,
        field: *m.last().unwrap(),
        centering,
        m,
        qv,
        increment_forward: fwd,
        increment_backward: bwd,
        residuals,
    })
}

/// Histogram of `Wcheck_1^{t,x}` over `[1, n] x [-R, R]^d` with `R = floor(n^{1/2 + delta})`,
/// in levels `[n^{k delta}, n^{(k+1) delta})` (level 0 also holds values below 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetProfile {
    pub n: i64,
    pub delta: f64,
    pub window_radius: i64,
    /// `|A_k(n)|` for `k = 0..`.
    pub counts: Vec<u64>,
    /// `sum_{t, x} Wcheck_1^{t,x}^2` over the window.
    pub sum_sq: f64,
    /// `sum_k |A_k| n^{2 (k+1) delta}`; dominates `sum_sq`.
    pub bound: f64,
}

impl LevelSetProfile {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn level_set_profile<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    n: i64,
    delta: f64,
) -> Result<LevelSetProfile> {
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1/3), got {delta}")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("level sets need n >= 2, got {n}")));
    }
    config.validate()?;
    let d = config.d;
    let nf = n as f64;
    let window = nf.powf(0.5 + delta).floor() as i64;
    // Wcheck_1^{t,.} is the pre-weight average of the pass seeded with 1
    // everywhere; a seed of radius R + n keeps the window exact up to time n.
    let outer = window + n;
    let lat = crate::lattice::Lattice::new(&vec![0; d], outer);
    let seed = SeedProfile {
        sites: (0..lat.cube_len()).map(|i| (lat.cube_site(i), 1.0)).collect(),
    };
    let weigher = Weigher::new(config.beta, &config.law);
    let level_width = delta * nf.ln();
    let mut counts: Vec<u64> = Vec::new();
    let mut sum_sq = 0.0;
    let mut p = Propagator::new(
        &vec![0; d],
        outer,
        &seed,
        n,
        BoxPolicy::Truncate,
        config.renormalize,
    )?;
    for _ in 0..n {
        let mut level_of = |v: f64| {
            let k = if v > 0.0 {
                ((v.ln() / level_width).floor().max(0.0)) as usize
            } else {
                0
            };
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        };
        let mut batch = Vec::new();
        let st = p.step_polymer(env, &weigher, |x, pre, _| {
            if x.iter().all(|c| c.abs() <= window) {
                batch.push(pre);
            }
        });
        let unit = st.log_scale_before.exp();
        for v in batch {
            let w = v * unit;
            sum_sq += w * w;
            level_of(w);
        }
    }
    let expected = (n as u64) * ((2 * window + 1) as u64).pow(d as u32);
    if counts.iter().sum::<u64>() != expected {
        // Sites with zero pre-weight are skipped by the propagator; they belong to level 0.
        let missing = expected - counts.iter().sum::<u64>();
        if counts.is_empty() {
            counts.push(0);
        }
        counts[0] += missing;
    }
    let bound = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * nf.powf(2.0 * (k as f64 + 1.0) * delta))
        .sum();
    Ok(LevelSetProfile {
        n,
        delta,
        window_radius: window,
        counts,
        sum_sq,
        bound,
    })
}

/// Replicate values of `X_n^f` at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub n: i64,
    pub values: Vec<f64>,
}

/// Log-log decay fits of the spread of `X_n^f` against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// No slope could be fitted because some `n` has zero spread.
    pub degenerate: bool,
    /// Slope of `log sd` against `log n`, with a 90% bootstrap interval.
    pub sd_slope: Option<Estimate>,
    /// Slope of `log median |X|` against `log n`, with a 90% bootstrap interval.
    pub median_slope: Option<Estimate>,
    pub log_n: Vec<f64>,
    pub log_sd: Vec<f64>,
    pub log_median_abs: Vec<f64>,
}

/// Minimal number of distinct horizons accepted by [`rate_regression`].
pub const MIN_RATE_HORIZONS: usize = 3;
/// Minimal number of replicas per horizon accepted by [`rate_regression`].
pub const MIN_RATE_REPLICAS: usize = 50;

fn median_abs(xs: &[f64]) -> f64 {
    let a: Vec<f64> = xs.iter().map(|v| v.abs()).collect();
    stats::median(&a)
}

pub fn rate_regression(samples: &[RateSample], bootstrap_reps: usize, seed: u64) -> Result<RateFit> {
    let mut ns: Vec<i64> = samples.iter().map(|s| s.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() != samples.len() || ns.len() < MIN_RATE_HORIZONS {
        return Err(Error::Domain(format!(
            "rate regression needs at least {MIN_RATE_HORIZONS} distinct horizons, one sample each"
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.values.len() < MIN_RATE_REPLICAS || s.n < 1) {
        return Err(Error::Domain(format!(
            "horizon {} has {} replicas, need {MIN_RATE_REPLICAS}",
            s.n,
            s.values.len()
        )));
    }
    let log_n: Vec<f64> = samples.iter().map(|s| (s.n as f64).ln()).collect();
    let sds: Vec<f64> = samples.iter().map(|s| stats::std_dev(&s.values)).collect();
    let meds: Vec<f64> = samples.iter().map(|s| median_abs(&s.values)).collect();
    let log_sd: Vec<f64> = sds.iter().map(|v| v.ln()).collect();
    let log_median_abs: Vec<f64> = meds.iter().map(|v| v.ln()).collect();
    if sds.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Ok(RateFit {
            degenerate: true,
            sd_slope: None,
            median_slope: None,
            log_n,
            log_sd,
            log_median_abs,
        });
    }
    let fit = |ys: &[f64]| stats::least_squares(&log_n, ys).map_or(f64::NAN, |f| f.slope);
    let sd_point = fit(&log_sd);
    let med_point = if meds.iter().all(|&v| v > 0.0) {
        Some(fit(&log_median_abs))
    } else {
        None
    };
    let mut rng = stats::bootstrap_rng(seed);
    let mut buf = Vec::new();
    let mut sd_draws = Vec::with_capacity(bootstrap_reps);
    let mut med_draws = Vec::with_capacity(bootstrap_reps);
    for _ in 0..bootstrap_reps {
        let mut ls = Vec::with_capacity(samples.len());
        let mut lm = Vec::with_capacity(samples.len());
        for s in samples {
            stats::resample_into(&mut rng, &s.values, &mut buf);
            ls.push(stats::std_dev(&buf).ln());
            lm.push(median_abs(&buf).ln());
        }
        let a = fit(&ls);
        if a.is_finite() {
            sd_draws.push(a);
        }
        let b = fit(&lm);
        if b.is_finite() {
            med_draws.push(b);
        }
    }
    let interval = |point: f64, mut draws: Vec<f64>| {
        if draws.is_empty() {
            return Estimate::new(point, f64::NAN, f64::NAN);
        }
        draws.sort_by(f64::total_cmp);
        Estimate::new(
            point,
            stats::quantile_sorted(&draws, 0.05),
            stats::quantile_sorted(&draws, 0.95),
        )
    };
    Ok(RateFit {
        degenerate: false,
        sd_slope: Some(interval(sd_point, sd_draws)),
        median_slope: med_point.map(|v| interval(v, med_draws)),
        log_n,
        log_sd,
        log_median_abs,
    })
}
