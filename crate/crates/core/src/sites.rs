//! Exceptional sites: calibration constants, the separated grid, near-maximizer
//! detection with random tie-breaking, and structural independence audits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::env::{Environment, PatchedEnvironment, SeededEnvironment, SpaceTimeBlock};
use crate::error::{Error, Result};
use crate::lattice::{backward_field, PolymerConfig};
use crate::rng::{mix64, replica_seed, CounterStream};
use crate::testfn::TestFunction;

/// Spacing of the search mesh for `z` and the candidate values of `eta_1`.
pub const CALIBRATION_MESH: f64 = 0.05;
/// Margin added around `[-L, L]^d` when searching for `z`.
pub const SEARCH_MARGIN: f64 = 4.0;

/// Constants derived from the test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub z: Vec<f64>,
    /// `(f * phi)(z)`.
    pub smoothing: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Half-width of the smallest cube `[-L, L]^d` holding the support.
    pub l: f64,
    /// `false` when `eta1` comes from the modulus within continuity pieces only.
    pub continuous: bool,
}

/// `max{|1 - sqrt(1 - e)|, |1 - 1/sqrt(1 - e)|}`.
fn eta2_gap(e: f64) -> f64 {
    let s = (1.0 - e).sqrt();
    (1.0 - s).abs().max((1.0 - 1.0 / s).abs())
}

pub fn calibrate_constants(f: &TestFunction, d: usize) -> Result<Calibration> {
    f.validate(d)?;
    let l = f.half_width();
    let m = ((l + SEARCH_MARGIN) / CALIBRATION_MESH).ceil() as i64;
    let side = (2 * m + 1) as usize;
    let total = side.pow(d as u32);
    let point = |flat: usize| -> Vec<f64> {
        let mut z = vec![0.0; d];
        let mut r = flat;
        for k in (0..d).rev() {
            z[k] = ((r % side) as i64 - m) as f64 * CALIBRATION_MESH;
            r /= side;
        }
        z
    };
    // Argmax of |f * phi|; ties go to the first point in lexicographic order.
    let (best, value) = (0..total)
        .into_par_iter()
        .map(|i| (i, f.gaussian_smoothing(&point(i))))
        .reduce(
            || (usize::MAX, 0.0),
            |a, b| {
                let better = b.1.abs() > a.1.abs() || (b.1.abs() == a.1.abs() && b.0 < a.0);
                if better {
                    b
                } else {
                    a
                }
            },
        );
    if best == usize::MAX || value.abs() < 1e-300 {
        return Err(Error::Calibration("f * phi vanishes on the whole search mesh".into()));
    }
    let z = point(best);
    // Within a piece |f(x) - f(y)| <= Lip |x - y|; need Lip * 2 eta1 <= |f * phi(z)| / 8.
    let lip = f.piece_lipschitz(d);
    let cap = 1.0 - CALIBRATION_MESH;
    let eta1 = if lip == 0.0 {
        cap
    } else {
        let bound = value.abs() / (16.0 * lip);
        let on_mesh = (bound / CALIBRATION_MESH).floor() * CALIBRATION_MESH;
        if on_mesh > 0.0 {
            on_mesh.min(cap)
        } else {
            bound
        }
    };
    let scale = l.max(z.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let target = eta1 / scale;
    let eta2 = (1..1000)
        .rev()
        .map(|k| k as f64 / 1000.0)
        .find(|&e| eta2_gap(e) < target)
        .unwrap_or_else(|| {
            // Below the mesh: the gap is ~ e / 2 for small e.
            let mut e = 1e-3;
            while eta2_gap(e) >= target {
                e /= 2.0;
            }
            e
        });
    Ok(Calibration {
        z,
        smoothing: value,
        eta1,
        eta2,
        l,
        continuous: f.is_continuous(),
    })
}

/// `(1 + d/2 - 3 delta) / (q (1 + delta)) > (2 + d) / (2 q) - eps / 2`.
pub fn delta_admissible(d: usize, q_star: f64, epsilon: f64, delta: f64) -> bool {
    let df = d as f64;
    (1.0 + df / 2.0 - 3.0 * delta) / (q_star * (1.0 + delta)) > (2.0 + df) / (2.0 * q_star) - epsilon / 2.0
}

/// Largest `delta = k / 1024 <= 1/8` that is admissible; halves below `1/1024` if needed.
pub fn choose_delta(d: usize, q_star: f64, epsilon: f64) -> Result<f64> {
    if !(q_star >= 1.0 && q_star.is_finite()) {
        return Err(Error::Domain(format!("q* must be finite and >= 1, got {q_star}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some(k) = (1..=128).rev().find(|&k| delta_admissible(d, q_star, epsilon, k as f64 / 1024.0)) {
        return Ok(k as f64 / 1024.0);
    }
    let mut delta = 1.0 / 2048.0;
    while !delta_admissible(d, q_star, epsilon, delta) {
        delta /= 2.0;
    }
    Ok(delta)
}

/// `floor(log(n)^2)`.
pub fn ell(n: u64) -> i64 {
    let l = (n as f64).ln();
    (l * l).floor() as i64
}

/// Inputs to [`build_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInputs {
    pub n: u64,
    pub d: usize,
    pub calibration: Calibration,
    pub q_star: f64,
    /// Where `q_star` came from (an estimate, a fixed value, ...).
    pub q_star_source: String,
    pub epsilon: f64,
    /// Overrides [`choose_delta`] when set.
    pub delta: Option<f64>,
}

/// Times of one block `T_n(k)`, latest last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBlock {
    pub k: usize,
    pub times: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: u64,
    pub d: usize,
    pub ell: i64,
    pub z: Vec<f64>,
    pub eta1: f64,
    pub eta2: f64,
    pub l: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub q_star: f64,
    pub q_star_source: String,
    /// `n^{(2+d)/(2 q*) - eps/2}`.
    pub threshold: f64,
    /// `T_n` within `[ell, n]`.
    pub times: Vec<i64>,
    /// `S_n` in lexicographic order.
    pub space: Vec<Vec<i64>>,
    pub blocks: Vec<TimeBlock>,
}

/// The environment block a backward partition function over `[t - ell, t)` reads.
pub fn dependence_block(t: i64, x: &[i64], ell: i64) -> SpaceTimeBlock {
    SpaceTimeBlock {
        t_lo: t - ell,
        t_hi: t,
        center: x.to_vec(),
        radius: ell,
    }
}

struct Layout {
    ell: i64,
    times: Vec<i64>,
    space: Vec<Vec<i64>>,
    blocks: Vec<TimeBlock>,
}

fn multiples_in(step: i64, lo: f64, hi: f64) -> Vec<i64> {
    let first = (lo / step as f64).ceil() as i64;
    let last = (hi / step as f64).floor() as i64;
    (first..=last).map(|j| j * step).collect()
}

fn layout(n: u64, d: usize, cal: &Calibration, delta: f64) -> std::result::Result<Layout, String> {
    let ell = ell(n);
    let nf = n as f64;
    let root = nf.sqrt();
    let axes: Vec<Vec<i64>> = cal
        .z
        .iter()
        .map(|&zi| multiples_in(2 * ell + 1, (zi - cal.eta1) * root, (zi + cal.eta1) * root))
        .collect();
    if axes.iter().any(|a| a.is_empty()) {
        return Err(format!(
            "S_n is empty: the window z sqrt(n) +- {:.3} has no multiple of 2 ell + 1 = {}",
            cal.eta1 * root,
            2 * ell + 1
        ));
    }
    let mut space = vec![Vec::new()];
    for a in &axes {
        space = space
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                a.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    debug_assert_eq!(space.first().map(|p| p.len()), Some(d));
    let count = (cal.eta2 * nf.powf(2.0 * delta) / 2.0).floor() as usize;
    if count == 0 {
        return Err(format!(
            "no time blocks: eta2 n^(2 delta) / 2 = {:.3} < 1",
            cal.eta2 * nf.powf(2.0 * delta) / 2.0
        ));
    }
    let width = nf.powf(1.0 - 2.0 * delta);
    let base = (1.0 - cal.eta2) * nf;
    let mut blocks = Vec::with_capacity(count);
    for k in 1..=count {
        let times: Vec<i64> = multiples_in(ell + 1, base + (2 * k - 1) as f64 * width, base + (2 * k) as f64 * width)
            .into_iter()
            .filter(|&t| t as f64 <= nf)
            .collect();
        if times.is_empty() {
            return Err(format!("block T_n({k}) has no multiple of ell + 1 = {}", ell + 1));
        }
        if times[0] - ell < 0 {
            return Err(format!("block T_n({k}) starts before time ell = {ell}"));
        }
        blocks.push(TimeBlock { k, times });
    }
    let times = multiples_in(ell + 1, ell as f64, nf);
    Ok(Layout {
        ell,
        times,
        space,
        blocks,
    })
}

/// Smallest `n` at which the grid is feasible, found by doubling then bisection.
fn min_feasible(d: usize, cal: &Calibration, delta: f64, from: u64) -> Option<u64> {
    let ok = |n: u64| layout(n, d, cal, delta).is_ok();
    let mut hi = from.max(2);
    while !ok(hi) {
        hi = hi.checked_mul(2)?;
        if hi > 1 << 48 {
            return None;
        }
    }
    let mut lo = from.max(1);
    if lo >= hi {
        return Some(hi);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

pub fn build_grid(inputs: &GridInputs) -> Result<GridSpec> {
    let GridInputs {
        n,
        d,
        calibration: cal,
        q_star,
        epsilon,
        ..
    } = inputs;
    let (n, d) = (*n, *d);
    if cal.z.len() != d {
        return Err(Error::Domain(format!("calibration is for d = {}, grid asks for d = {d}", cal.z.len())));
    }
    let delta = match inputs.delta {
        Some(v) if v > 0.0 && v < 0.5 => v,
        Some(v) => return Err(Error::Domain(format!("delta must lie in (0, 1/2), got {v}"))),
        None => choose_delta(d, *q_star, *epsilon)?,
    };
    let lay = layout(n, d, cal, delta).map_err(|reason| Error::GridInfeasible {
        n,
        reason,
        min_feasible: min_feasible(d, cal, delta, n + 1),
    })?;
    let exponent = (2.0 + d as f64) / (2.0 * q_star) - epsilon / 2.0;
    let grid = GridSpec {
        n,
        d,
        ell: lay.ell,
        z: cal.z.clone(),
        eta1: cal.eta1,
        eta2: cal.eta2,
        l: cal.l,
        delta,
        epsilon: *epsilon,
        q_star: *q_star,
        q_star_source: inputs.q_star_source.clone(),
        threshold: (n as f64).powf(exponent),
        times: lay.times,
        space: lay.space,
        blocks: lay.blocks,
    };
    if let Some((a, b)) = grid.overlapping_pair() {
        return Err(Error::Integrity(format!("dependence blocks of {a:?} and {b:?} overlap")));
    }
    Ok(grid)
}

impl GridSpec {
    /// Grid sites `(t, x)` with `t` in some block, in block order.
    pub fn sites(&self) -> Vec<(i64, Vec<i64>)> {
        self.blocks
            .iter()
            .flat_map(|b| b.times.iter().flat_map(|&t| self.space.iter().map(move |x| (t, x.clone()))))
            .collect()
    }

    /// First pair of grid sites whose dependence blocks intersect, if any.
    pub fn overlapping_pair(&self) -> Option<((i64, Vec<i64>), (i64, Vec<i64>))> {
        first_overlap(&self.sites(), self.ell)
    }
}

/// Checks pairwise disjointness of dependence blocks; sites must be sorted by time.
fn first_overlap(sites: &[(i64, Vec<i64>)], ell: i64) -> Option<((i64, Vec<i64>), (i64, Vec<i64>))> {
    let mut sorted: Vec<&(i64, Vec<i64>)> = sites.iter().collect();
    sorted.sort_by_key(|s| s.0);
    for (i, a) in sorted.iter().enumerate() {
        let ba = dependence_block(a.0, &a.1, ell);
        for b in &sorted[i + 1..] {
            if b.0 - a.0 >= ell.max(1) {
                break;
            }
            if ba.overlaps(&dependence_block(b.0, &b.1, ell)) {
                return Some(((*a).clone(), (*b).clone()));
            }
        }
    }
    None
}

/// `Wcheck_{t - ell}^{t, x}`.
pub fn local_partition<E: Environment + ?Sized>(config: &PolymerConfig, env: &E, t: i64, x: &[i64], ell: i64) -> Result<f64> {
    backward_field(config, env, t, x, t - ell, None)
}

/// Uniform on `(0, 1]` for block `k` under `tie_seed`.
pub fn tie_uniform(tie_seed: u64, k: usize) -> f64 {
    1.0 - CounterStream::new(tie_seed, k as u64).at(0)
}

/// `ceil(N u)` as a zero-based index, `u` in `(0, 1]`.
pub fn tie_break_index(candidates: usize, u: f64) -> usize {
    ((candidates as f64 * u).ceil() as usize).clamp(1, candidates) - 1
}

/// Outcome in one block. `time == None` is the `-infinity` sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub k: usize,
    pub time: Option<i64>,
    pub site: Option<Vec<i64>>,
    pub candidates: usize,
    pub u: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub n: u64,
    pub ell: i64,
    pub threshold: f64,
    pub q_star: f64,
    pub q_star_source: String,
    pub tie_seed: u64,
    pub blocks: Vec<BlockOutcome>,
    /// Every block detected a site.
    pub event: bool,
}

/// Scans each block from its latest time down; at the first time with sites
/// reaching the threshold, picks one of them by the tie-break draw.
pub fn detect_sites<E: Environment + Sync + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    grid: &GridSpec,
    tie_seed: u64,
) -> Result<SiteReport> {
    let blocks: Vec<BlockOutcome> = grid
        .blocks
        .par_iter()
        .map(|b| -> Result<BlockOutcome> {
            let u = tie_uniform(tie_seed, b.k);
            for &t in b.times.iter().rev() {
                let mut hits = Vec::new();
                for x in &grid.space {
                    let v = local_partition(config, env, t, x, grid.ell)?;
                    if v >= grid.threshold {
                        hits.push((x, v));
                    }
                }
                if !hits.is_empty() {
                    let (x, v) = hits[tie_break_index(hits.len(), u)];
                    return Ok(BlockOutcome {
                        k: b.k,
                        time: Some(t),
                        site: Some(x.clone()),
                        candidates: hits.len(),
                        u,
                        value: Some(v),
                    });
                }
            }
            Ok(BlockOutcome {
                k: b.k,
                time: None,
                site: None,
                candidates: 0,
                u,
                value: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SiteReport {
        n: grid.n,
        ell: grid.ell,
        threshold: grid.threshold,
        q_star: grid.q_star,
        q_star_source: grid.q_star_source.clone(),
        tie_seed,
        event: blocks.iter().all(|b| b.time.is_some()),
        blocks,
    })
}

/// `Wcheck` at a site before and after resampling part of the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityCheck {
    pub t: i64,
    pub x: Vec<i64>,
    /// The site whose block was resampled (cross checks) or `None` (outside resampled).
    pub resampled_block_of: Option<(i64, Vec<i64>)>,
    pub base: f64,
    pub patched: f64,
    pub identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCheck {
    pub replicas: usize,
    pub sites: Vec<(i64, Vec<i64>)>,
    /// `(i, j, r, r sqrt(R))` per pair.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub max_abs_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub ell: i64,
    pub env_seed: u64,
    pub audit_seed: u64,
    /// `Wcheck` unchanged when everything outside the site's own block is resampled.
    pub own_block: Vec<LocalityCheck>,
    /// `Wcheck` unchanged when another site's block is resampled.
    pub cross: Vec<LocalityCheck>,
    pub correlation: Option<CorrelationCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditOptions {
    pub sites: usize,
    pub pairs: usize,
    /// Replicas for the correlation check; 0 skips it.
    pub replicas: usize,
    /// Sites entering the correlation check.
    pub correlation_sites: usize,
    pub audit_seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            sites: 20,
            pairs: 20,
            replicas: 0,
            correlation_sites: 4,
            audit_seed: 0,
        }
    }
}

/// Correlations beyond this many standard errors fail the audit.
pub const CORRELATION_SIGMAS: f64 = 4.0;

/// `count` distinct indices below `len`, drawn from `stream`.
fn pick(stream: &mut CounterStream, len: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    let count = count.min(len);
    for i in 0..count {
        let j = i + ((stream.next_f64() * (len - i) as f64) as usize).min(len - i - 1);
        idx.swap(i, j);
    }
    idx.truncate(count);
    idx
}

/// Structural independence audit over an explicit site list.
///
/// The list need not come from a valid grid; an invalid one (sites closer
/// than their dependence radius) is expected to fail the cross checks.
pub fn audit_sites(
    config: &PolymerConfig,
    sites: &[(i64, Vec<i64>)],
    ell: i64,
    env_seed: u64,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    let env = SeededEnvironment::new(env_seed, config.law);
    let fresh = SeededEnvironment::new(mix64(env_seed ^ mix64(opts.audit_seed)), config.law);
    let mut stream = CounterStream::new(opts.audit_seed, 1);
    let own_block = pick(&mut stream, sites.len(), opts.sites)
        .into_par_iter()
        .map(|i| -> Result<LocalityCheck> {
            let (t, x) = &sites[i];
            let base = local_partition(config, &env, *t, x, ell)?;
            let patched_env = PatchedEnvironment {
                inside: &env,
                outside: &fresh,
                block: dependence_block(*t, x, ell),
            };
            let patched = local_partition(config, &patched_env, *t, x, ell)?;
            Ok(LocalityCheck {
                t: *t,
                x: x.clone(),
                resampled_block_of: None,
                base,
                patched,
                identical: base.to_bits() == patched.to_bits(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    if sites.len() >= 2 {
        for _ in 0..opts.pairs {
            let ab = pick(&mut stream, sites.len(), 2);
            pairs.push((ab[0], ab[1]));
        }
    }
    let cross = pairs
        .into_par_iter()
        .map(|(a, b)| -> Result<LocalityCheck> {
            let (ta, xa) = &sites[a];
            let (tb, xb) = &sites[b];
            let base = local_partition(config, &env, *tb, xb, ell)?;
            let patched_env = PatchedEnvironment {
                inside: &fresh,
                outside: &env,
                block: dependence_block(*ta, xa, ell),
            };
            let patched = local_partition(config, &patched_env, *tb, xb, ell)?;
            Ok(LocalityCheck {
                t: *tb,
                x: xb.clone(),
                resampled_block_of: Some((*ta, xa.clone())),
                base,
                patched,
                identical: base.to_bits() == patched.to_bits(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correlation = if opts.replicas >= 2 && sites.len() >= 2 {
        let chosen: Vec<(i64, Vec<i64>)> = pick(&mut stream, sites.len(), opts.correlation_sites.max(2))
            .into_iter()
            .map(|i| sites[i].clone())
            .collect();
        let rows = (0..opts.replicas as u64)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let e = SeededEnvironment::new(replica_seed(env_seed, r), config.law);
                chosen.iter().map(|(t, x)| local_partition(config, &e, *t, x, ell)).collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Some(correlations(&chosen, &rows))
    } else {
        None
    };
    let pass = own_block.iter().chain(&cross).all(|c| c.identical) && correlation.as_ref().is_none_or(|c| c.pass);
    Ok(AuditReport {
        ell,
        env_seed,
        audit_seed: opts.audit_seed,
        own_block,
        cross,
        correlation,
        pass,
    })
}

fn correlations(sites: &[(i64, Vec<i64>)], rows: &[Vec<f64>]) -> CorrelationCheck {
    let r = rows.len();
    let m = sites.len();
    let col = |j: usize| -> Vec<f64> { rows.iter().map(|row| row[j]).collect() };
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let (a, b) = (col(i), col(j));
            let (ma, mb) = (crate::stats::mean(&a), crate::stats::mean(&b));
            let sab: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
            let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
            let rho = if saa > 0.0 && sbb > 0.0 { sab / (saa * sbb).sqrt() } else { 0.0 };
            pairs.push((i, j, rho, rho * (r as f64).sqrt()));
        }
    }
    let max_abs_z = pairs.iter().fold(0.0f64, |acc, p| acc.max(p.3.abs()));
    CorrelationCheck {
        replicas: r,
        sites: sites.to_vec(),
        pairs,
        max_abs_z,
        pass: max_abs_z <= CORRELATION_SIGMAS,
    }
}

pub fn independence_audit(config: &PolymerConfig, env_seed: u64, grid: &GridSpec, opts: &AuditOptions) -> Result<AuditReport> {
    audit_sites(config, &grid.sites(), grid.ell, env_seed, opts)
}

/// Pearson chi-square test of uniformity of counts; returns `(statistic, p-value)`.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let k = counts.len();
    if k < 2 || total == 0 {
        return (0.0, 1.0);
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new((k - 1) as f64).map_or(f64::NAN, |dist| dist.sf(stat));
    (stat, p)
}

/// Counts of the chosen site in block 1 over `draws` tie seeds when every grid
/// site qualifies (`beta = 0`, threshold 1), indexed like `grid.space`.
pub fn tie_break_counts(grid: &GridSpec, draws: u64, base_seed: u64) -> Result<Vec<u64>> {
    let mut g = grid.clone();
    g.threshold = 1.0;
    g.blocks.truncate(1);
    let cfg = PolymerConfig::new(grid.d, grid.n as i64, 0.0, crate::env::DisorderLaw::default());
    let env = SeededEnvironment::new(0, cfg.law);
    let mut counts = vec![0u64; g.space.len()];
    for i in 0..draws {
        let rep = detect_sites(&cfg, &env, &g, replica_seed(base_seed, i))?;
        let site = rep.blocks[0]
            .site
            .as_ref()
            .ok_or_else(|| Error::Integrity("threshold 1 at beta = 0 must detect".into()))?;
        let j = g.space.iter().position(|s| s == site).expect("detected site is on the grid");
        counts[j] += 1;
    }
    Ok(counts)
}
