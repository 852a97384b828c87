//! Exact replica moments through the difference walk of independent walkers.
//!
//! Two independent walks meet at time `t` exactly when their difference
//! `D_t` sits at the origin, and `D` has the law of `S_{2t}` for one simple
//! random walk `S`. Everything below is built on the return sequence
//! `u_t = P(D_t = 0)` and the first-return sequence `f_t` it determines.

use serde::{Deserialize, Serialize};

use crate::env::DisorderLaw;
use crate::error::{Error, Result};

/// Upper limit on horizons handled by the renewal tables.
pub const MAX_RENEWAL_HORIZON: usize = 1 << 16;

/// Binomial(t, q) masses relative to their sum, dropping terms below
/// `1e-40` of the mode. Returns `(first index, masses)`.
fn binomial_row(t: usize, q: f64) -> (usize, Vec<f64>) {
    if t == 0 {
        return (0, vec![1.0]);
    }
    let mode = (((t + 1) as f64) * q).floor().min(t as f64) as usize;
    let odds = q / (1.0 - q);
    let mut up = vec![1.0];
    let mut r = 1.0;
    for j in mode..t {
        r *= (t - j) as f64 / (j + 1) as f64 * odds;
        if r < 1e-40 {
            break;
        }
        up.push(r);
    }
    let mut down = Vec::new();
    let mut r = 1.0;
    for j in (1..=mode).rev() {
        r *= j as f64 / (t - j + 1) as f64 / odds;
        if r < 1e-40 {
            break;
        }
        down.push(r);
    }
    let first = mode - down.len();
    let mut row: Vec<f64> = down.into_iter().rev().collect();
    row.extend(up);
    let total: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= total;
    }
    (first, row)
}

/// `u_t = P(S_{2t} = 0)` for the `d`-dimensional simple random walk, `t = 0..=horizon`.
///
/// Uses `u_t = P_1(2t) G_d(t)` where `P_1(2t) = C(2t, t) 4^{-t}` and `G_d(t)` is the
/// collision probability of two Multinomial(t; 1/d, ..., 1/d) axis-step counts,
/// `G_d(t) = sum_j b(j; t, 1/d)^2 G_{d-1}(t - j)`, `G_1 = 1`.
pub fn return_sequence(d: usize, horizon: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if horizon > MAX_RENEWAL_HORIZON {
        return Err(Error::Capacity {
            what: "renewal horizon",
            needed: horizon as u128,
            limit: MAX_RENEWAL_HORIZON as u128,
        });
    }
    let mut g = vec![1.0; horizon + 1];
    for k in 2..=d {
        let q = 1.0 / k as f64;
        let prev = g.clone();
        for t in 0..=horizon {
            let (first, row) = binomial_row(t, q);
            g[t] = row
                .iter()
                .enumerate()
                .map(|(i, b)| b * b * prev[t - (first + i)])
                .sum();
        }
    }
    let mut p1 = 1.0;
    let mut out = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        if t > 0 {
            p1 *= (2 * t - 1) as f64 / (2 * t) as f64;
        }
        out.push(p1 * g[t]);
    }
    Ok(out)
}

/// First-return probabilities `f_t`, `t = 0..=horizon` (`f_0 = 0`), from
/// `u_t = sum_{k=1}^t f_k u_{t-k}`.
pub fn first_return_sequence(u: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; u.len()];
    for t in 1..u.len() {
        let mut s = u[t];
        for k in 1..t {
            s -= f[k] * u[t - k];
        }
        f[t] = s.max(0.0);
    }
    f
}

/// Return-to-origin data of the difference walk up to a horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbability {
    pub d: usize,
    pub horizon: usize,
    /// `P(D_t = 0 for some 1 <= t <= T)`.
    pub finite: f64,
    /// `finite` plus the extrapolated tail `sum_{t > T} f_t`; 1 for `d <= 2`.
    pub extrapolated: f64,
    /// `p_{return,t}` at `t = 1, 2, 4, ..., T`.
    pub table: Vec<(usize, f64)>,
}

/// Tail `sum_{t > T} f_t` from the local limit shape `f_t ~ C t^{-d/2} (1 + b / t)`
/// fitted at `T / 2` and `T`.
fn extrapolated_tail(d: usize, f: &[f64]) -> f64 {
    let big_t = f.len() - 1;
    let half = big_t / 2;
    if d <= 2 || half < 8 {
        return 0.0;
    }
    let a = d as f64 / 2.0;
    let (t1, t2) = (half as f64, big_t as f64);
    let (y1, y2) = (f[half] * t1.powf(a), f[big_t] * t2.powf(a));
    // y = C (1 + b / t) through both points.
    let b = (y1 - y2) / (y2 / t1 - y1 / t2);
    let c = y2 / (1.0 + b / t2);
    let s = t2 + 0.5;
    c * (s.powf(1.0 - a) / (a - 1.0) + b * s.powf(-a) / a)
}

pub fn return_probability(d: usize, horizon: usize) -> Result<ReturnProbability> {
    if horizon == 0 {
        return Err(Error::Domain("return horizon must be at least 1".into()));
    }
    let u = return_sequence(d, horizon)?;
    let f = first_return_sequence(&u);
    let mut acc = 0.0;
    let mut cumulative = Vec::with_capacity(horizon + 1);
    cumulative.push(0.0);
    for &v in &f[1..] {
        acc += v;
        cumulative.push(acc);
    }
    let mut table = Vec::new();
    let mut t = 1;
    while t <= horizon {
        table.push((t, cumulative[t]));
        t *= 2;
    }
    if table.last().map(|x| x.0) != Some(horizon) {
        table.push((horizon, cumulative[horizon]));
    }
    let finite = cumulative[horizon];
    let extrapolated = if d <= 2 {
        1.0
    } else {
        (finite + extrapolated_tail(d, &f)).min(1.0)
    };
    Ok(ReturnProbability {
        d,
        horizon,
        finite,
        extrapolated,
        table,
    })
}

/// `log E[W_n^2]` for `n = 0..=n_max` from the renewal decomposition on the
/// meeting times of two replicas. Each meeting multiplies by `e^c` with
/// `c = lambda(2 beta) - 2 lambda(beta)`.
pub fn log_second_moment_curve(d: usize, n_max: usize, beta: f64, law: &DisorderLaw) -> Result<Vec<f64>> {
    law.validate()?;
    let c = law.pair_exponent(beta);
    if c == 0.0 {
        return Ok(vec![0.0; n_max + 1]);
    }
    let u = return_sequence(d, n_max)?;
    let f = first_return_sequence(&u);
    Ok(log_second_moment_from_returns(&f, c))
}

/// As [`log_second_moment_curve`] with precomputed first-return probabilities.
pub fn log_second_moment_from_returns(f: &[f64], c: f64) -> Vec<f64> {
    let n_max = f.len() - 1;
    let e = c.exp();
    // Tilt by the growth rate so the renewal sequence stays bounded.
    let mass = |theta: f64| -> f64 { e * (1..=n_max).map(|k| f[k] * (-theta * k as f64).exp()).sum::<f64>() };
    let theta = if mass(0.0) > 1.0 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while mass(hi) > 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    } else {
        0.0
    };
    let ft: Vec<f64> = (0..=n_max).map(|k| e * f[k] * (-theta * k as f64).exp()).collect();
    // Tilted E[e^{c N_t}; D_t = 0].
    let mut a = vec![0.0; n_max + 1];
    a[0] = 1.0;
    for t in 1..=n_max {
        a[t] = (1..=t).map(|k| ft[k] * a[t - k]).sum();
    }
    // P(no return during m steps), tilted.
    let mut survive = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    for m in 0..=n_max {
        if m > 0 {
            acc += f[m];
        }
        survive.push((1.0 - acc).max(0.0) * (-theta * m as f64).exp());
    }
    (0..=n_max)
        .map(|n| {
            let s: f64 = (0..=n).map(|j| a[j] * survive[n - j]).sum();
            theta * n as f64 + s.ln()
        })
        .collect()
}

/// `E[W_n^2]` exactly (up to rounding), for the walk started at the origin.
pub fn exact_second_moment(d: usize, n: i64, beta: f64, law: &DisorderLaw) -> Result<f64> {
    if n < 0 {
        return Err(Error::Domain(format!("horizon must be non-negative, got {n}")));
    }
    Ok(log_second_moment_curve(d, n as usize, beta, law)?[n as usize].exp())
}

/// Offsets `xi - xi'` of two independent steps with their probabilities.
fn difference_kernel(d: usize) -> Vec<(Vec<i64>, f64)> {
    let steps: Vec<Vec<i64>> = (0..2 * d)
        .map(|i| {
            let mut e = vec![0i64; d];
            e[i / 2] = if i % 2 == 0 { 1 } else { -1 };
            e
        })
        .collect();
    let w = 1.0 / (4 * d * d) as f64;
    let mut out: Vec<(Vec<i64>, f64)> = Vec::new();
    for a in &steps {
        for b in &steps {
            let off: Vec<i64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            match out.iter_mut().find(|(o, _)| *o == off) {
                Some(slot) => slot.1 += w,
                None => out.push((off, w)),
            }
        }
    }
    out
}

/// Limit on dense states for the direct difference-walk recursion.
pub const KERNEL_STATE_LIMIT: u128 = 50_000_000;

/// `E[W_n^2]` by propagating the law of the difference walk directly, with
/// multiplier `e^c` on the origin at times `1..=n`. Independent of the renewal route.
pub fn second_moment_by_kernel(d: usize, n: i64, beta: f64, law: &DisorderLaw) -> Result<f64> {
    law.validate()?;
    let n = n.max(0) as usize;
    let r = 2 * n;
    let side = 2 * r + 1;
    let cells = (side as u128).pow(d as u32);
    if cells > KERNEL_STATE_LIMIT {
        return Err(Error::Capacity {
            what: "difference-walk states",
            needed: cells,
            limit: KERNEL_STATE_LIMIT,
        });
    }
    let e = law.pair_exponent(beta).exp();
    let kernel = difference_kernel(d);
    let strides: Vec<usize> = (0..d).map(|k| side.pow((d - 1 - k) as u32)).collect();
    let index = |z: &[i64]| -> Option<usize> {
        let mut i = 0usize;
        for k in 0..d {
            let c = z[k] + r as i64;
            if c < 0 || c >= side as i64 {
                return None;
            }
            i += c as usize * strides[k];
        }
        Some(i)
    };
    let origin = index(&vec![0; d]).unwrap();
    let mut cur = vec![0.0; cells as usize];
    let mut next = vec![0.0; cells as usize];
    cur[origin] = 1.0;
    let mut z = vec![0i64; d];
    for _ in 0..n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &v) in cur.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut rem = i;
            for k in 0..d {
                z[k] = (rem / strides[k]) as i64 - r as i64;
                rem %= strides[k];
            }
            for (off, p) in &kernel {
                let y: Vec<i64> = z.iter().zip(off).map(|(a, b)| a + b).collect();
                let j = index(&y).expect("difference walk stays within 2n");
                next[j] += v * p;
            }
        }
        next[origin] *= e;
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur.iter().sum())
}

/// Limit on pair states for the three-replica recursion.
pub const TRIPLE_STATE_LIMIT: u128 = 4_000_000;

/// Even-parity points of the l1 ball of radius `r` in `Z^d` with a dense lookup.
struct EvenBall {
    points: Vec<Vec<i64>>,
    lookup: Vec<u32>,
    side: usize,
    r: i64,
}

impl EvenBall {
    fn new(d: usize, r: i64) -> Self {
        let side = (2 * r + 1) as usize;
        let mut lookup = vec![u32::MAX; side.pow(d as u32)];
        let mut points = Vec::new();
        for flat in 0..lookup.len() {
            let mut rem = flat;
            let mut z = vec![0i64; d];
            for k in (0..d).rev() {
                z[k] = (rem % side) as i64 - r;
                rem /= side;
            }
            let l1: i64 = z.iter().map(|c| c.abs()).sum();
            if l1 <= r && l1 % 2 == 0 {
                lookup[flat] = points.len() as u32;
                points.push(z);
            }
        }
        Self { points, lookup, side, r }
    }

    fn find(&self, z: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for &c in z {
            if c.abs() > self.r {
                return None;
            }
            flat = flat * self.side + (c + self.r) as usize;
        }
        let i = self.lookup[flat];
        (i != u32::MAX).then_some(i as usize)
    }
}

fn even_ball_size(d: usize, r: i64) -> u128 {
    // Count directly for the small dimensions this is used with.
    let side = 2 * r + 1;
    let mut count = 0u128;
    let total = (side as u128).pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut l1 = 0i64;
        for _ in 0..d {
            l1 += ((rem % side as u128) as i64 - r).abs();
            rem /= side as u128;
        }
        if l1 <= r && l1 % 2 == 0 {
            count += 1;
        }
    }
    count
}

/// `E[W_n^3]` by a recursion over the offsets `(X^2 - X^1, X^3 - X^1)`.
fn exact_third_moment(d: usize, n: i64, beta: f64, law: &DisorderLaw) -> Result<f64> {
    let n = n.max(0) as usize;
    if d > 2 || n > 20 {
        return Err(Error::Capacity {
            what: "three-replica states (d <= 2, n <= 20)",
            needed: even_ball_size(d.min(3), 2 * n as i64).pow(2),
            limit: TRIPLE_STATE_LIMIT,
        });
    }
    let ball = EvenBall::new(d, 2 * n as i64);
    let m = ball.points.len();
    let states = (m as u128) * (m as u128);
    if states > TRIPLE_STATE_LIMIT {
        return Err(Error::Capacity {
            what: "three-replica states",
            needed: states,
            limit: TRIPLE_STATE_LIMIT,
        });
    }
    let lam = law.log_mgf(beta);
    let pair = (law.log_mgf(2.0 * beta) - 2.0 * lam).exp();
    let triple = (law.log_mgf(3.0 * beta) - 3.0 * lam).exp();
    let kernel = difference_kernel(d);
    let offsets: Vec<Vec<i64>> = kernel.iter().map(|(o, _)| o.clone()).collect();
    let steps: Vec<Vec<i64>> = (0..2 * d)
        .map(|i| {
            let mut e = vec![0i64; d];
            e[i / 2] = if i % 2 == 0 { 1 } else { -1 };
            e
        })
        .collect();
    // (offset index for a, offset index for b, probability)
    let mut moves: Vec<(usize, usize, f64)> = Vec::new();
    let w = 1.0 / ((2 * d) as f64).powi(3);
    for s1 in &steps {
        for s2 in &steps {
            for s3 in &steps {
                let da: Vec<i64> = s2.iter().zip(s1).map(|(a, b)| a - b).collect();
                let db: Vec<i64> = s3.iter().zip(s1).map(|(a, b)| a - b).collect();
                let ia = offsets.iter().position(|o| *o == da).unwrap();
                let ib = offsets.iter().position(|o| *o == db).unwrap();
                match moves.iter_mut().find(|mv| mv.0 == ia && mv.1 == ib) {
                    Some(mv) => mv.2 += w,
                    None => moves.push((ia, ib, w)),
                }
            }
        }
    }
    let nb: Vec<Vec<u32>> = ball
        .points
        .iter()
        .map(|z| {
            offsets
                .iter()
                .map(|o| {
                    let y: Vec<i64> = z.iter().zip(o).map(|(a, b)| a + b).collect();
                    ball.find(&y).map_or(u32::MAX, |i| i as u32)
                })
                .collect()
        })
        .collect();
    let zero = ball.find(&vec![0; d]).unwrap();
    let mut cur = vec![0.0; m * m];
    let mut next = vec![0.0; m * m];
    cur[zero * m + zero] = 1.0;
    for _ in 0..n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..m {
            for b in 0..m {
                let v = cur[a * m + b];
                if v == 0.0 {
                    continue;
                }
                for &(oa, ob, p) in &moves {
                    let na = nb[a][oa] as usize;
                    let nbb = nb[b][ob] as usize;
                    next[na * m + nbb] += v * p;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let mult = if a == zero && b == zero {
                    triple
                } else if a == zero || b == zero || a == b {
                    pair
                } else {
                    1.0
                };
                next[a * m + b] *= mult;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur.iter().sum())
}

/// `E[W_n^k]` for `k` in `{2, 3}`.
pub fn exact_kth_moment(d: usize, n: i64, beta: f64, law: &DisorderLaw, k: usize) -> Result<f64> {
    law.validate()?;
    match k {
        2 => exact_second_moment(d, n, beta, law),
        3 => exact_third_moment(d, n, beta, law),
        _ => Err(Error::Domain(format!("exact moments are available for k = 2, 3; got {k}"))),
    }
}

/// `lambda(2 beta) - 2 lambda(beta) + log p_return`, whose root separates the
/// square-integrable phase.
pub fn l2_criterion(law: &DisorderLaw, beta: f64, p_return: f64) -> f64 {
    law.pair_exponent(beta) + p_return.ln()
}

/// Largest inverse temperature searched for a root of [`l2_criterion`].
pub const BETA_SEARCH_LIMIT: f64 = 64.0;

/// Root of [`l2_criterion`] for a given return probability, by bisection to `tol`.
pub fn l2_critical_beta(law: &DisorderLaw, p_return: f64, tol: f64) -> Result<f64> {
    law.validate()?;
    if !(p_return > 0.0 && p_return < 1.0) {
        return Err(Error::NoCriticalPoint(format!(
            "return probability {p_return} leaves no square-integrable phase"
        )));
    }
    let g = |b: f64| l2_criterion(law, b, p_return);
    let mut hi = 0.25;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if hi > BETA_SEARCH_LIMIT {
            return Err(Error::NoCriticalPoint(format!(
                "lambda(2b) - 2 lambda(b) stays below -log p_return = {} for b <= {BETA_SEARCH_LIMIT}",
                -p_return.ln()
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Horizon used for the return probability inside [`beta_crit_l2`].
pub const CRITICAL_RETURN_HORIZON: usize = 2048;

/// Estimated edge of the square-integrable phase for `d >= 3`.
pub fn beta_crit_l2(d: usize, law: &DisorderLaw, tol: f64) -> Result<f64> {
    if d <= 2 {
        return Err(Error::NoCriticalPoint(format!(
            "d = {d} is recurrent; E[W_n^2] diverges for every beta > 0"
        )));
    }
    let p = return_probability(d, CRITICAL_RETURN_HORIZON)?.extrapolated;
    l2_critical_beta(law, p, tol)
}

/// Finite-horizon growth rate `(log E[W_{2n}^2] - log E[W_n^2]) / n`.
pub fn doubling_growth_rate(log_curve: &[f64], n: usize) -> f64 {
    (log_curve[2 * n] - log_curve[n]) / n as f64
}

/// Result of [`gff_intensity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GffIntensity {
    Converged { gamma: f64, second_moment: f64, n: usize },
    Divergent { n: usize },
}

/// `gamma = c1 E[W_infinity^2]` from exact second moments over doubling `n`.
///
/// In `d >= 3` the approach `E[W_n^2] -> E[W_infinity^2]` is polynomial with
/// exponent `1 - d/2`, so each doubling is Richardson-extrapolated with that
/// exponent; convergence is declared when two successive extrapolations agree
/// to `1e-4` relative.
pub fn gff_intensity(d: usize, beta: f64, law: &DisorderLaw, n_large: usize) -> Result<GffIntensity> {
    law.validate()?;
    let c1 = law.compensator_c1(beta);
    if c1 == 0.0 {
        return Ok(GffIntensity::Converged {
            gamma: 0.0,
            second_moment: 1.0,
            n: 0,
        });
    }
    if d <= 2 {
        return Ok(GffIntensity::Divergent { n: 0 });
    }
    let u = return_sequence(d, n_large)?;
    let f = first_return_sequence(&u);
    let curve = log_second_moment_from_returns(&f, law.pair_exponent(beta));
    let ratio = 2f64.powf(1.0 - d as f64 / 2.0);
    let mut prev: Option<f64> = None;
    let mut n = 16;
    while 2 * n <= n_large {
        let (e1, e2) = (curve[n].exp(), curve[2 * n].exp());
        // e_n = e_inf + k n^{1 - d/2}
        let extrapolated = (e2 - ratio * e1) / (1.0 - ratio);
        if doubling_growth_rate(&curve, n) > 1.0 / n as f64 {
            return Ok(GffIntensity::Divergent { n: 2 * n });
        }
        if let Some(p) = prev {
            if ((extrapolated - p) / extrapolated).abs() < 1e-4 {
                return Ok(GffIntensity::Converged {
                    gamma: c1 * extrapolated,
                    second_moment: extrapolated,
                    n: 2 * n,
                });
            }
        }
        prev = Some(extrapolated);
        n *= 2;
    }
    Ok(GffIntensity::Divergent { n: n_large })
}
