//! Monte Carlo moment curves and tail exponents from independent replicas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{DisorderLaw, SeededEnvironment};
use crate::error::{Error, Result};
use crate::lattice::{forward_field, BoxPolicy, PolymerConfig, SeedProfile};
use crate::rng::replica_seed;
use crate::stats::{self, Estimate};

/// Smallest replica count accepted by [`mc_moment`].
pub const MIN_MOMENT_REPLICAS: usize = 1000;

/// Share of `sum_i W_i^p` held by the largest term above which an estimate is flagged.
pub const HEAVY_TAIL_SHARE: f64 = 0.5;

const BOOTSTRAP_REPS: usize = 400;
const CI_LEVEL: f64 = 0.95;

/// `log W_k` along independent environments, all started at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSet {
    pub d: usize,
    pub beta: f64,
    pub law: DisorderLaw,
    pub base_seed: u64,
    pub horizons: Vec<usize>,
    /// `log_w[h][i] = log W_{horizons[h]}` of replica `i`.
    pub log_w: Vec<Vec<f64>>,
    /// `log max_{k <= n_max} W_k`, `n_max` the largest horizon.
    pub log_sup: Vec<f64>,
    /// `log max_{k <= n_max / 2} W_k`.
    pub log_sup_half: Vec<f64>,
}

impl ReplicaSet {
    pub fn replicas(&self) -> usize {
        self.log_sup.len()
    }

    pub fn n_max(&self) -> usize {
        *self.horizons.last().unwrap_or(&0)
    }

    fn horizon_index(&self, n: usize) -> Result<usize> {
        self.horizons
            .iter()
            .position(|&h| h == n)
            .ok_or_else(|| Error::Domain(format!("horizon {n} was not simulated")))
    }
}

/// Runs `reps` replicas of the point-to-line polymer up to the largest horizon.
/// Replica `i` uses the environment seed `replica_seed(base_seed, i)`.
pub fn simulate_replicas(config: &PolymerConfig, horizons: &[usize], reps: usize, base_seed: u64) -> Result<ReplicaSet> {
    config.validate()?;
    let mut horizons = horizons.to_vec();
    horizons.sort_unstable();
    horizons.dedup();
    let n_max = *horizons
        .last()
        .ok_or_else(|| Error::Domain("at least one horizon is required".into()))?;
    let mut cfg = config.clone();
    cfg.policy = BoxPolicy::Exact;
    cfg.box_radius = n_max as i64;
    let seed = SeedProfile::point(&vec![0; cfg.d]);
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, f64, f64)> {
            let env = SeededEnvironment::new(replica_seed(base_seed, i), cfg.law);
            let run = forward_field(&cfg, &env, &seed, n_max as i64, false)?;
            let logs: Vec<f64> = run.totals.iter().map(|s| s.ln()).collect();
            let sup = |m: usize| logs[..=m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((horizons.iter().map(|&h| logs[h]).collect(), sup(n_max), sup(n_max / 2)))
        })
        .collect::<Result<_>>()?;
    let mut log_w = vec![Vec::with_capacity(reps); horizons.len()];
    let mut log_sup = Vec::with_capacity(reps);
    let mut log_sup_half = Vec::with_capacity(reps);
    for (w, s, h) in rows {
        for (slot, v) in log_w.iter_mut().zip(w) {
            slot.push(v);
        }
        log_sup.push(s);
        log_sup_half.push(h);
    }
    Ok(ReplicaSet {
        d: cfg.d,
        beta: cfg.beta,
        law: cfg.law,
        base_seed,
        horizons,
        log_w,
        log_sup,
        log_sup_half,
    })
}

/// `log( (1/N) sum_i W_i^p )` from `log W_i`.
pub fn log_mean_power(log_w: &[f64], p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let scaled: Vec<f64> = log_w.iter().map(|l| p * l).collect();
    stats::log_sum_exp(&scaled) - (log_w.len() as f64).ln()
}

/// Result of [`mc_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub n: usize,
    pub replicas: usize,
    /// `(1/n) log mean W_n^p` with a bootstrap interval.
    pub rate: Estimate,
    /// Sample mean of `W_n^p` and its standard error.
    pub mean_power: f64,
    pub mean_power_se: f64,
    /// Share of the largest term in `sum_i W_i^p`.
    pub top_share: f64,
    /// `top_share > HEAVY_TAIL_SHARE`: the estimate is likely biased low.
    pub heavy_tail: bool,
}

/// Moment estimate at horizon `n` from simulated replicas.
pub fn moment_from_samples(log_w: &[f64], p: f64, n: usize, seed: u64) -> MomentEstimate {
    let nf = n.max(1) as f64;
    if p == 0.0 {
        return MomentEstimate {
            p,
            n,
            replicas: log_w.len(),
            rate: Estimate::new(0.0, 0.0, 0.0),
            mean_power: 1.0,
            mean_power_se: 0.0,
            top_share: 1.0 / log_w.len() as f64,
            heavy_tail: false,
        };
    }
    let rate = stats::bootstrap_ci(log_w, |xs| log_mean_power(xs, p) / nf, BOOTSTRAP_REPS, CI_LEVEL, seed);
    let powers: Vec<f64> = log_w.iter().map(|l| (p * l).exp()).collect();
    let scaled: Vec<f64> = log_w.iter().map(|l| p * l).collect();
    let top = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top_share = (top - stats::log_sum_exp(&scaled)).exp();
    MomentEstimate {
        p,
        n,
        replicas: log_w.len(),
        rate,
        mean_power: stats::mean(&powers),
        mean_power_se: stats::std_error(&powers),
        top_share,
        heavy_tail: top_share > HEAVY_TAIL_SHARE,
    }
}

/// `(1/n) log` of the empirical mean of `W_n^p` over `reps` replicas.
pub fn mc_moment(config: &PolymerConfig, p: f64, n: usize, reps: usize, base_seed: u64) -> Result<MomentEstimate> {
    if reps < MIN_MOMENT_REPLICAS {
        return Err(Error::Domain(format!(
            "moment estimates need at least {MIN_MOMENT_REPLICAS} replicas, got {reps}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("moment horizon must be at least 1".into()));
    }
    let set = simulate_replicas(config, &[n], reps, base_seed)?;
    Ok(moment_from_samples(&set.log_w[0], p, n, base_seed ^ 0xA5A5))
}

/// One `(p, n)` cell of a moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCell {
    pub p: f64,
    pub n: usize,
    pub rate: Estimate,
    pub heavy_tail: bool,
}

/// `a(p) = lim (1/n) log E[W_n^p]` over a grid of `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p_grid: Vec<f64>,
    pub cells: Vec<MomentCell>,
    /// `A` of the fit `(1/n) log E[W_n^p] = A + B / n`, with a bootstrap interval.
    pub a: Vec<Estimate>,
    /// Bootstrap draws of `a`, one row per resample, for joint statements.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub draws: Vec<Vec<f64>>,
    /// Replicas behind the curve, when it was estimated from samples.
    #[serde(skip)]
    pub samples: Option<ReplicaSet>,
}

fn extrapolate(ns: &[usize], rates: &[f64]) -> f64 {
    if ns.len() == 1 {
        return rates[0];
    }
    let x: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    stats::least_squares(&x, rates).map_or(rates[rates.len() - 1], |f| f.intercept)
}

fn curve_values(set: &ReplicaSet, idx: Option<&[usize]>, p: f64) -> (Vec<f64>, f64) {
    let mut buf = Vec::new();
    let rates: Vec<f64> = set
        .horizons
        .iter()
        .zip(&set.log_w)
        .map(|(&n, lw)| {
            let xs: &[f64] = match idx {
                Some(ix) => {
                    buf.clear();
                    buf.extend(ix.iter().map(|&i| lw[i]));
                    &buf
                }
                None => lw,
            };
            log_mean_power(xs, p) / n as f64
        })
        .collect();
    let a = extrapolate(&set.horizons, &rates);
    (rates, a)
}

impl MomentCurve {
    /// Moment curve over `p_grid` from replicas; intervals come from resampling
    /// whole replicas, so all cells of one draw share the same environments.
    pub fn from_samples(set: ReplicaSet, p_grid: &[f64], seed: u64) -> Self {
        use rand::Rng;
        let mut grid = p_grid.to_vec();
        grid.sort_by(f64::total_cmp);
        let r = set.replicas();
        let mut rng = stats::bootstrap_rng(seed);
        let resamples: Vec<Vec<usize>> = (0..BOOTSTRAP_REPS)
            .map(|_| (0..r).map(|_| rng.gen_range(0..r)).collect())
            .collect();
        // boot[b] = (per-horizon rates per p, a per p)
        let boot: Vec<Vec<(Vec<f64>, f64)>> = resamples
            .par_iter()
            .map(|ix| grid.iter().map(|&p| curve_values(&set, Some(ix), p)).collect())
            .collect();
        let alpha = (1.0 - CI_LEVEL) / 2.0;
        let band = |mut v: Vec<f64>, value: f64| {
            v.sort_by(f64::total_cmp);
            Estimate::new(value, stats::quantile_sorted(&v, alpha), stats::quantile_sorted(&v, 1.0 - alpha))
        };
        let mut cells = Vec::new();
        let mut a = Vec::new();
        for (j, &p) in grid.iter().enumerate() {
            let (rates, a_val) = curve_values(&set, None, p);
            for (h, &n) in set.horizons.iter().enumerate() {
                let draws: Vec<f64> = boot.iter().map(|b| b[j].0[h]).collect();
                let top = set.log_w[h].iter().map(|l| p * l).fold(f64::NEG_INFINITY, f64::max);
                let total = stats::log_sum_exp(&set.log_w[h].iter().map(|l| p * l).collect::<Vec<_>>());
                cells.push(MomentCell {
                    p,
                    n,
                    rate: band(draws, rates[h]),
                    heavy_tail: p != 0.0 && (top - total).exp() > HEAVY_TAIL_SHARE,
                });
            }
            a.push(band(boot.iter().map(|b| b[j].1).collect(), a_val));
        }
        let draws = boot.iter().map(|b| b.iter().map(|c| c.1).collect()).collect();
        Self {
            p_grid: grid,
            cells,
            a,
            draws,
            samples: Some(set),
        }
    }

    /// A curve with known values and no sampling error.
    pub fn synthetic(p_grid: &[f64], a: impl Fn(f64) -> f64) -> Self {
        Self {
            p_grid: p_grid.to_vec(),
            cells: Vec::new(),
            a: p_grid.iter().map(|&p| {
                let v = a(p);
                Estimate::new(v, v, v)
            }).collect(),
            draws: Vec::new(),
            samples: None,
        }
    }

    /// Extrapolated `a(p)` off the grid, from the stored replicas.
    pub fn a_at(&self, p: f64) -> Option<f64> {
        self.samples.as_ref().map(|s| curve_values(s, None, p).1)
    }

    /// Interior grid points where the chord lies below the curve by more than
    /// the combined interval half-widths of the three points involved.
    pub fn convexity_violations(&self) -> Vec<f64> {
        self.second_differences()
            .into_iter()
            .filter(|&(i, second)| {
                let w0 = self.chord_weight(i);
                let slack = w0 * self.a[i - 1].half_width() + (1.0 - w0) * self.a[i + 1].half_width() + self.a[i].half_width();
                second + slack < -1e-12
            })
            .map(|(i, _)| self.p_grid[i])
            .collect()
    }

    /// Interior grid points whose chord gap is negative in all but
    /// `(1 - level) / 2` of the joint bootstrap draws. Stricter than
    /// [`Self::convexity_violations`]; the extrapolation mixes horizons with
    /// weights of both signs, so heavy-tailed samples can fail it.
    pub fn joint_convexity_violations(&self) -> Vec<f64> {
        if self.draws.is_empty() {
            return self.convexity_violations();
        }
        (1..self.p_grid.len().saturating_sub(1))
            .filter(|&i| {
                let w0 = self.chord_weight(i);
                let mut v: Vec<f64> = self
                    .draws
                    .iter()
                    .map(|row| w0 * row[i - 1] + (1.0 - w0) * row[i + 1] - row[i])
                    .collect();
                v.sort_by(f64::total_cmp);
                stats::quantile_sorted(&v, 1.0 - (1.0 - CI_LEVEL) / 2.0) < -1e-12
            })
            .map(|i| self.p_grid[i])
            .collect()
    }

    fn chord_weight(&self, i: usize) -> f64 {
        let (p0, p1, p2) = (self.p_grid[i - 1], self.p_grid[i], self.p_grid[i + 1]);
        (p2 - p1) / (p2 - p0)
    }

    /// `(i, chord value at p_i minus a(p_i))` for interior points.
    fn second_differences(&self) -> Vec<(usize, f64)> {
        (1..self.p_grid.len().saturating_sub(1))
            .map(|i| {
                let w0 = self.chord_weight(i);
                (i, w0 * self.a[i - 1].value + (1.0 - w0) * self.a[i + 1].value - self.a[i].value)
            })
            .collect()
    }

    /// Grid points where the estimated `a` decreases beyond both intervals.
    pub fn monotonicity_violations(&self) -> Vec<f64> {
        self.a
            .windows(2)
            .zip(self.p_grid.windows(2))
            .filter(|(a, _)| a[1].hi < a[0].lo - 1e-12)
            .map(|(_, p)| p[1])
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "n", "rate", "rate_lo", "rate_hi", "heavy_tail"])?;
        for c in &self.cells {
            w.write_record([
                format!("{:.16e}", c.p),
                c.n.to_string(),
                format!("{:.16e}", c.rate.value),
                format!("{:.16e}", c.rate.lo),
                format!("{:.16e}", c.rate.hi),
                c.heavy_tail.to_string(),
            ])?;
        }
        for (p, a) in self.p_grid.iter().zip(&self.a) {
            w.write_record([
                format!("{:.16e}", p),
                "inf".to_string(),
                format!("{:.16e}", a.value),
                format!("{:.16e}", a.lo),
                format!("{:.16e}", a.hi),
                "false".to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where the crossing of `a(p) = tol` sits relative to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bracket {
    Inside,
    /// `a(p) <= tol` on the whole grid: `q*` exceeds its largest point.
    AboveGrid,
    /// `a(p) > tol` already at the smallest grid point.
    BelowGrid,
}

/// `q* = inf { p : a(p) > 0 }` as resolved by a moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QStar {
    pub bracket: Bracket,
    pub value: Option<f64>,
    /// Where the upper band crosses `tol`.
    pub lo: f64,
    /// Where the lower band crosses `tol`; `None` past the grid.
    pub hi: Option<f64>,
}

/// First grid crossing of `values > tol`, linearly interpolated.
fn crossing(grid: &[f64], values: &[f64], tol: f64) -> Option<f64> {
    let j = values.iter().position(|&v| v > tol)?;
    if j == 0 {
        return Some(grid[0]);
    }
    let (v0, v1) = (values[j - 1], values[j]);
    Some(grid[j - 1] + (grid[j] - grid[j - 1]) * ((tol - v0) / (v1 - v0)).clamp(0.0, 1.0))
}

pub fn estimate_qstar(curve: &MomentCurve, tol: f64) -> QStar {
    let grid = &curve.p_grid;
    let vals: Vec<f64> = curve.a.iter().map(|e| e.value).collect();
    let upper: Vec<f64> = curve.a.iter().map(|e| e.hi).collect();
    let lower: Vec<f64> = curve.a.iter().map(|e| e.lo).collect();
    let lo = crossing(grid, &upper, tol).unwrap_or(grid[grid.len() - 1]);
    let hi = crossing(grid, &lower, tol);
    let Some(j) = vals.iter().position(|&v| v > tol) else {
        return QStar {
            bracket: Bracket::AboveGrid,
            value: None,
            lo,
            hi,
        };
    };
    if j == 0 {
        return QStar {
            bracket: Bracket::BelowGrid,
            value: None,
            lo: grid[0],
            hi: Some(grid[0]),
        };
    }
    let value = match curve.samples {
        Some(_) => {
            let (mut a, mut b) = (grid[j - 1], grid[j]);
            for _ in 0..30 {
                let mid = 0.5 * (a + b);
                if curve.a_at(mid).unwrap() > tol {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        }
        None => crossing(grid, &vals, tol).unwrap(),
    };
    QStar {
        bracket: Bracket::Inside,
        value: Some(value),
        lo: lo.min(value),
        hi: hi.map(|h| h.max(value)),
    }
}

/// One threshold of the tail table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub t: f64,
    pub exceed: u64,
    pub replicas: u64,
    /// Wilson interval around the exceedance frequency.
    pub prob: Estimate,
    /// `(e^{-2 beta K} / 2) t^{-p*}` when the law has an upper bound `K`.
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailStatus {
    Estimated,
    /// Fewer than three thresholds were ever exceeded.
    Unestimable,
}

/// Tail exponent of `sup_k W_k` from a log-log regression over thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PStar {
    pub status: TailStatus,
    /// `-slope` over `sup_{k <= n_max}`, with a bootstrap interval.
    pub p_star: Option<Estimate>,
    /// The same over `sup_{k <= n_max / 2}`, exposing truncation drift.
    pub p_star_half: Option<Estimate>,
    pub n_max: usize,
    pub cells: Vec<TailCell>,
    /// Thresholds where the Wilson upper bound falls below the floor.
    pub floor_violations: Vec<f64>,
}

impl PStar {
    pub fn floor_holds(&self) -> Option<bool> {
        (self.status == TailStatus::Estimated && self.cells.iter().all(|c| c.floor.is_some()))
            .then_some(self.floor_violations.is_empty())
    }
}

const MIN_TAIL_CELLS: usize = 3;

fn tail_slope(log_sup: &[f64], log_t: &[f64]) -> Option<f64> {
    let n = log_sup.len() as f64;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &lt in log_t {
        let k = log_sup.iter().filter(|&&s| s > lt).count();
        if k > 0 {
            x.push(lt);
            y.push((k as f64 / n).ln());
        }
    }
    if x.len() < MIN_TAIL_CELLS {
        return None;
    }
    stats::least_squares(&x, &y).map(|f| -f.slope)
}

fn tail_estimate(log_sup: &[f64], log_t: &[f64], seed: u64) -> Option<Estimate> {
    let value = tail_slope(log_sup, log_t)?;
    let e = stats::bootstrap_ci(
        log_sup,
        |xs| tail_slope(xs, log_t).unwrap_or(f64::NAN),
        BOOTSTRAP_REPS,
        CI_LEVEL,
        seed,
    );
    Some(Estimate::new(value, e.lo, e.hi))
}

/// Tail regression from sampled `log sup W`. `floor_scale` is `e^{-2 beta K} / 2`
/// when the floor check applies.
pub fn pstar_from_sups(
    log_sup: &[f64],
    log_sup_half: &[f64],
    t_grid: &[f64],
    n_max: usize,
    floor_scale: Option<f64>,
    seed: u64,
) -> Result<PStar> {
    if t_grid.iter().any(|&t| !(t > 1.0 && t.is_finite())) {
        return Err(Error::Domain("tail thresholds must be finite and > 1".into()));
    }
    let log_t: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let p_star = tail_estimate(log_sup, &log_t, seed);
    let p_star_half = tail_estimate(log_sup_half, &log_t, seed ^ 1);
    let reps = log_sup.len() as u64;
    let mut floor_violations = Vec::new();
    let cells = t_grid
        .iter()
        .zip(&log_t)
        .map(|(&t, &lt)| {
            let exceed = log_sup.iter().filter(|&&s| s > lt).count() as u64;
            let prob = stats::wilson_interval(exceed, reps, 1.0 - CI_LEVEL);
            let floor = match (floor_scale, p_star) {
                (Some(c), Some(p)) => Some(c * t.powf(-p.value)),
                _ => None,
            };
            if floor.is_some_and(|f| prob.hi < f) {
                floor_violations.push(t);
            }
            TailCell {
                t,
                exceed,
                replicas: reps,
                prob,
                floor,
            }
        })
        .collect();
    Ok(PStar {
        status: if p_star.is_some() {
            TailStatus::Estimated
        } else {
            TailStatus::Unestimable
        },
        p_star,
        p_star_half,
        n_max,
        cells,
        floor_violations,
    })
}

/// `e^{-2 beta K} / 2` for a law with upper bound `K`.
pub fn tail_floor_scale(beta: f64, law: &DisorderLaw) -> Option<f64> {
    law.upper_bound().map(|k| 0.5 * (-2.0 * beta * k).exp())
}

/// Simulates `reps` replicas to `n_max` and regresses the tail of `sup_k W_k`.
pub fn estimate_pstar(config: &PolymerConfig, t_grid: &[f64], reps: usize, n_max: usize, base_seed: u64) -> Result<PStar> {
    let set = simulate_replicas(config, &[n_max], reps, base_seed)?;
    pstar_from_set(&set, t_grid, base_seed)
}

pub fn pstar_from_set(set: &ReplicaSet, t_grid: &[f64], seed: u64) -> Result<PStar> {
    pstar_from_sups(
        &set.log_sup,
        &set.log_sup_half,
        t_grid,
        set.n_max(),
        tail_floor_scale(set.beta, &set.law),
        seed ^ 0x5EED,
    )
}

/// `xi = d/2 - (2 + d) / (2 p*)`.
pub fn xi_from_pstar(d: usize, p_star: f64) -> Result<f64> {
    if !(p_star >= 1.0) {
        return Err(Error::Domain(format!("p* must be at least 1, got {p_star}")));
    }
    let df = d as f64;
    if p_star == 1.0 + 2.0 / df {
        return Ok(0.0);
    }
    Ok((df * p_star - df - 2.0) / (2.0 * p_star))
}

impl ReplicaSet {
    pub fn moment(&self, p: f64, n: usize, seed: u64) -> Result<MomentEstimate> {
        let h = self.horizon_index(n)?;
        Ok(moment_from_samples(&self.log_w[h], p, n, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::exact_second_moment;
    use crate::rng::CounterStream;

    fn skew() -> DisorderLaw {
        DisorderLaw::TwoPoint { p: 0.1, lo: -1.0, hi: 1.0 }
    }

    #[test]
    fn zero_power_is_exactly_zero() {
        let cfg = PolymerConfig::new(2, 6, 0.8, skew());
        let m = mc_moment(&cfg, 0.0, 6, 1000, 3).unwrap();
        assert_eq!(m.rate.value, 0.0);
        assert!(mc_moment(&cfg, 1.0, 6, 999, 3).is_err());
    }

    #[test]
    fn first_moment_is_flat() {
        let cfg = PolymerConfig::new(2, 8, 0.6, skew());
        let m = mc_moment(&cfg, 1.0, 8, 2000, 11).unwrap();
        assert!(m.rate.contains(0.0), "{:?}", m.rate);
        assert!((m.mean_power - 1.0).abs() < 4.0 * m.mean_power_se);
    }

    #[test]
    fn second_moment_matches_exact_value() {
        let cfg = PolymerConfig::new(3, 8, 0.6, skew());
        let m = mc_moment(&cfg, 2.0, 8, 3000, 5).unwrap();
        let exact = exact_second_moment(3, 8, 0.6, &skew()).unwrap();
        assert!((m.mean_power - exact).abs() < 3.0 * m.mean_power_se, "{} vs {exact}", m.mean_power);
        assert!(!m.heavy_tail);
    }

    #[test]
    fn heavy_tail_flag_on_dominated_sum() {
        let mut lw = vec![0.0; 1000];
        lw[0] = 10.0;
        let m = moment_from_samples(&lw, 2.0, 10, 1);
        assert!(m.heavy_tail && m.top_share > 0.99);
    }

    #[test]
    fn synthetic_qstar() {
        let grid: Vec<f64> = (0..=12).map(|i| 1.0 + 0.125 * i as f64).collect();
        let curve = MomentCurve::synthetic(&grid, |p| (p - 1.7).max(0.0));
        let q = estimate_qstar(&curve, 1e-3);
        assert_eq!(q.bracket, Bracket::Inside);
        assert!((q.value.unwrap() - 1.7).abs() <= 0.125);
        assert!(curve.convexity_violations().is_empty());
        assert!(curve.monotonicity_violations().is_empty());
        let flat = MomentCurve::synthetic(&grid, |_| 0.0);
        assert_eq!(estimate_qstar(&flat, 1e-3).bracket, Bracket::AboveGrid);
        let concave = MomentCurve::synthetic(&[1.0, 2.0, 3.0], |p| (p - 1.0).sqrt());
        assert_eq!(concave.convexity_violations(), vec![2.0]);
    }

    #[test]
    fn zero_temperature_curve_has_no_crossing() {
        let cfg = PolymerConfig::new(2, 8, 0.0, skew());
        let set = simulate_replicas(&cfg, &[2, 4, 8], 1000, 9).unwrap();
        assert!(set.log_w.iter().flatten().all(|&l| l == 0.0));
        let curve = MomentCurve::from_samples(set.clone(), &[1.0, 1.5, 2.0, 3.0], 2);
        assert!(curve.a.iter().all(|e| e.value == 0.0));
        assert_eq!(estimate_qstar(&curve, 1e-3).bracket, Bracket::AboveGrid);
        let tail = pstar_from_set(&set, &[2.0, 4.0, 8.0], 1).unwrap();
        assert_eq!(tail.status, TailStatus::Unestimable);
        assert!(tail.cells.iter().all(|c| c.exceed == 0));
    }

    #[test]
    fn pareto_tail_slope() {
        let mut s = CounterStream::new(21, 0);
        let n = 100_000;
        // sup-values with P(X > t) = t^{-2.5}
        let logs: Vec<f64> = (0..n).map(|_| -(1.0 - s.next_f64()).ln() / 2.5).collect();
        let tail = pstar_from_sups(&logs, &logs, &[2.0, 4.0, 8.0], 1, Some(0.01), 3).unwrap();
        let p = tail.p_star.unwrap();
        assert!((p.value - 2.5).abs() < 0.1, "{p:?}");
        assert!(p.contains(2.5));
        assert_eq!(tail.floor_holds(), Some(true));
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi_from_pstar(3, 2.0).unwrap(), 0.25);
        assert_eq!(xi_from_pstar(3, 1.0 + 2.0 / 3.0).unwrap(), 0.0);
        assert_eq!(xi_from_pstar(4, 2.0).unwrap(), 0.5);
        assert!(xi_from_pstar(3, 0.99).is_err());
        assert!(xi_from_pstar(3, f64::NAN).is_err());
    }

    #[test]
    fn moment_curve_shape_in_low_dimension() {
        let cfg = PolymerConfig::new(1, 32, 0.8, skew());
        let set = simulate_replicas(&cfg, &[8, 16, 32], 2000, 4).unwrap();
        let curve = MomentCurve::from_samples(set, &[1.0, 1.5, 2.0, 2.5, 3.0], 6);
        assert!(curve.a[0].value.abs() < 0.02);
        assert!(curve.convexity_violations().is_empty());
        assert!(curve.monotonicity_violations().is_empty());
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 15 + 5);
    }
}
