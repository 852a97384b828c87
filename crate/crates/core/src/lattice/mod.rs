//! Transfer-matrix computation of partition functions.
//!
//! Slices are stored in linear space on a padded cube with a shared
//! `log_scale`; the represented field is `values * exp(log_scale)`.
//! Weights live at arrival sites at times `1..=n`; time 0 carries no weight.

pub mod dump;

use serde::{Deserialize, Serialize};

use crate::env::{DisorderLaw, Environment};
use crate::error::{Error, Result};
use crate::testfn::TestFunction;

const RENORM_HIGH: f64 = 1e100;
const RENORM_LOW: f64 = 1e-100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxPolicy {
    /// The box must contain every reachable site; checked before any work.
    #[default]
    Exact,
    /// Paths leaving the box are dropped; the dropped mass is recorded.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Renormalize {
    /// Rescale when the slice maximum leaves `[1e-100, 1e100]`.
    #[default]
    Auto,
    /// Rescale after every step.
    EveryStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymerConfig {
    pub d: usize,
    pub n: i64,
    pub beta: f64,
    pub law: DisorderLaw,
    /// Half-width of the cube around the computation's center.
    pub box_radius: i64,
    #[serde(default)]
    pub policy: BoxPolicy,
    #[serde(default)]
    pub renormalize: Renormalize,
}

impl PolymerConfig {
    /// Exact policy with the smallest lossless radius for a point start.
    pub fn new(d: usize, n: i64, beta: f64, law: DisorderLaw) -> Self {
        Self {
            d,
            n,
            beta,
            law,
            box_radius: n.max(0),
            policy: BoxPolicy::Exact,
            renormalize: Renormalize::Auto,
        }
    }

    pub fn with_radius(mut self, radius: i64) -> Self {
        self.box_radius = radius;
        self
    }

    pub fn truncated(mut self, radius: i64) -> Self {
        self.box_radius = radius;
        self.policy = BoxPolicy::Truncate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.d) {
            return Err(Error::Domain(format!("dimension {} not in 1..=4", self.d)));
        }
        if self.n < 0 {
            return Err(Error::Domain(format!("horizon {} is negative", self.n)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.box_radius < 0 {
            return Err(Error::Domain("box radius is negative".into()));
        }
        self.law.validate()
    }

    /// `lambda(beta)` of the configured law.
    pub fn lambda(&self) -> f64 {
        self.law.log_mgf(self.beta)
    }
}

/// A padded cube `center + [-radius, radius]^d` with row-major strides, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub d: usize,
    pub radius: i64,
    pub center: Vec<i64>,
    side: usize,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(center: &[i64], radius: i64) -> Self {
        let d = center.len();
        let side = (2 * radius + 3) as usize;
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * side;
        }
        Self {
            d,
            radius,
            center: center.to_vec(),
            side,
            strides,
            len: side.pow(d as u32),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(v, c)| (v - c).abs() <= self.radius)
    }

    /// Padded index of the absolute site `x` (must be inside the cube).
    #[inline]
    pub fn index(&self, x: &[i64]) -> usize {
        let mut idx = 0;
        for k in 0..self.d {
            idx += (x[k] - self.center[k] + self.radius + 1) as usize * self.strides[k];
        }
        idx
    }

    /// Number of sites of the unpadded cube.
    pub fn cube_len(&self) -> usize {
        ((2 * self.radius + 1) as usize).pow(self.d as u32)
    }

    /// Absolute coordinates of the `flat`-th site of the unpadded cube.
    pub fn cube_site(&self, flat: usize) -> Vec<i64> {
        let w = (2 * self.radius + 1) as usize;
        let mut x = vec![0i64; self.d];
        let mut r = flat;
        for k in (0..self.d).rev() {
            x[k] = (r % w) as i64 - self.radius + self.center[k];
            r /= w;
        }
        x
    }
}

/// A number stored as `mantissa * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn value(&self) -> f64 {
        if self.log_scale == 0.0 {
            self.mantissa
        } else {
            self.mantissa * self.log_scale.exp()
        }
    }

    pub fn ln(&self) -> f64 {
        self.mantissa.ln() + self.log_scale
    }
}

/// One time slice `U_t` over the unpadded cube.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub t: i64,
    pub d: usize,
    pub center: Vec<i64>,
    pub radius: i64,
    /// Row-major over `center + [-radius, radius]^d`, last axis fastest.
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl FieldSlice {
    fn offset(&self, x: &[i64]) -> Option<usize> {
        let w = 2 * self.radius + 1;
        let mut idx = 0i64;
        for k in 0..self.d {
            let c = x[k] - self.center[k] + self.radius;
            if c < 0 || c >= w {
                return None;
            }
            idx = idx * w + c;
        }
        Some(idx as usize)
    }

    /// Represented value at `x`; zero outside the cube.
    pub fn get(&self, x: &[i64]) -> f64 {
        match self.offset(x) {
            Some(i) => self.values[i] * self.log_scale.exp(),
            None => 0.0,
        }
    }

    /// Stored (unscaled) value at `x`.
    pub fn raw(&self, x: &[i64]) -> f64 {
        self.offset(x).map_or(0.0, |i| self.values[i])
    }

    pub fn site(&self, flat: usize) -> Vec<i64> {
        let w = (2 * self.radius + 1) as usize;
        let mut x = vec![0i64; self.d];
        let mut r = flat;
        for k in (0..self.d).rev() {
            x[k] = (r % w) as i64 - self.radius + self.center[k];
            r /= w;
        }
        x
    }

    pub fn sum(&self) -> Scaled {
        Scaled {
            mantissa: self.values.iter().sum(),
            log_scale: self.log_scale,
        }
    }
}

/// Initial weights `U_0` as a finitely supported list of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedProfile {
    pub sites: Vec<(Vec<i64>, f64)>,
}

impl SeedProfile {
    pub fn point(x: &[i64]) -> Self {
        Self {
            sites: vec![(x.to_vec(), 1.0)],
        }
    }

    /// `x -> f(x / sqrt(n))` over lattice sites of `d` dimensions; zeros are omitted.
    pub fn scaled(f: &TestFunction, n: i64, d: usize) -> Self {
        let sq = (n.max(1) as f64).sqrt();
        let reach = (f.half_width() * sq).floor() as i64;
        let lat = Lattice::new(&vec![0; d], reach);
        let mut sites = Vec::new();
        let mut y = vec![0f64; d];
        for flat in 0..lat.cube_len() {
            let x = lat.cube_site(flat);
            for k in 0..d {
                y[k] = x[k] as f64 / sq;
            }
            let v = f.eval(&y);
            if v != 0.0 {
                sites.push((x, v));
            }
        }
        Self { sites }
    }

    /// `sum_x U_0(x)`.
    pub fn total(&self) -> f64 {
        self.sites.iter().map(|(_, v)| v).sum()
    }

    /// Largest sup-distance of a seeded site from `center`.
    pub fn reach(&self, center: &[i64]) -> i64 {
        self.sites
            .iter()
            .map(|(x, _)| x.iter().zip(center).map(|(a, b)| (a - b).abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

/// Per-step summary, in the scale `exp(log_scale_before)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub t: i64,
    pub log_scale_before: f64,
    /// `sum_x Utilde_t(x)`, the neighbor average of `U_{t-1}`.
    pub sum_pre: f64,
    /// `sum_x U_t(x)`.
    pub sum_post: f64,
    /// `sum_x Utilde_t(x)^2`.
    pub sum_pre_sq: f64,
    /// Pre-weight mass that left the box this step.
    pub leaked: f64,
}

/// Normalized site weights `exp(beta omega - lambda(beta))`.
#[derive(Debug, Clone, Copy)]
pub struct Weigher {
    beta: f64,
    lambda: f64,
    two_point: Option<(f64, f64, f64, f64)>,
}

impl Weigher {
    pub fn new(beta: f64, law: &DisorderLaw) -> Self {
        let lambda = law.log_mgf(beta);
        let two_point = match *law {
            DisorderLaw::TwoPoint { lo, hi, .. } => {
                Some((lo, hi, (beta * lo - lambda).exp(), (beta * hi - lambda).exp()))
            }
            _ => None,
        };
        Self {
            beta,
            lambda,
            two_point,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.beta == 0.0
    }

    #[inline]
    pub fn weight_of(&self, omega: f64) -> f64 {
        if let Some((lo, hi, wlo, whi)) = self.two_point {
            if (omega == hi) | (omega == lo) {
                return [wlo, whi][(omega == hi) as usize];
            }
        }
        (self.beta * omega - self.lambda).exp()
    }

    #[inline]
    pub fn weight<E: Environment + ?Sized>(&self, env: &E, t: i64, x: &[i64]) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            self.weight_of(env.omega(t, x))
        }
    }
}

/// Streaming transfer-matrix pass: holds `U_t` and advances it one step at a time.
///
/// Each row along the last axis carries the column interval outside of which
/// it is known to vanish, so a step only visits the reachable region.
pub struct Propagator {
    lat: Lattice,
    cur: Vec<f64>,
    next: Vec<f64>,
    /// Column intervals `[lo, hi]` (padded columns) per row; empty when `lo > hi`.
    ext_cur: Vec<(i32, i32)>,
    ext_next: Vec<(i32, i32)>,
    row_cols: Vec<i32>,
    row_lasts: Vec<i64>,
    row_w: Vec<f64>,
    /// Bounding box of nonempty rows over the outer `d - 1` coordinates (absolute).
    outer_lo: Vec<i64>,
    outer_hi: Vec<i64>,
    row_strides: Vec<usize>,
    t: i64,
    log_scale: f64,
    renormalize: Renormalize,
    leaked: f64,
    empty: bool,
    /// `Some(q)` when every seeded site has coordinate sum `= q (mod 2)`; the
    /// field at time `t` then lives on sites of parity `q + t`.
    parity: Option<i64>,
}

const EMPTY_EXT: (i32, i32) = (i32::MAX, i32::MIN);

thread_local! {
    /// All-zero buffers handed back by finished passes. Reusing them avoids
    /// first-touch page faults, which otherwise dominate a pass on a large box.
    static BUFFER_POOL: std::cell::RefCell<Vec<Vec<f64>>> = const { std::cell::RefCell::new(Vec::new()) };
}

const POOL_CAPACITY: usize = 4;

fn take_zeroed(len: usize) -> Vec<f64> {
    BUFFER_POOL
        .with(|pool| {
            let mut pool = pool.borrow_mut();
            let i = pool.iter().position(|b| b.len() == len)?;
            Some(pool.swap_remove(i))
        })
        .unwrap_or_else(|| vec![0.0; len])
}

fn give_back(buf: Vec<f64>) {
    BUFFER_POOL.with(|pool| {
        let mut pool = pool.borrow_mut();
        if pool.len() >= POOL_CAPACITY {
            pool.remove(0);
        }
        pool.push(buf);
    });
}

impl Drop for Propagator {
    fn drop(&mut self) {
        let side = self.lat.side;
        for (buf, ext) in [(&mut self.cur, &self.ext_cur), (&mut self.next, &self.ext_next)] {
            for (row, &(lo, hi)) in ext.iter().enumerate() {
                if lo <= hi {
                    buf[row * side + lo as usize..=row * side + hi as usize].fill(0.0);
                }
            }
        }
        give_back(std::mem::take(&mut self.cur));
        give_back(std::mem::take(&mut self.next));
    }
}

impl Propagator {
    /// Starts from `seed` at time 0 on `center + [-radius, radius]^d`. Under the
    /// exact policy the box must hold `steps` moves from every seeded site.
    pub fn new(
        center: &[i64],
        radius: i64,
        seed: &SeedProfile,
        steps: i64,
        policy: BoxPolicy,
        renormalize: Renormalize,
    ) -> Result<Self> {
        let d = center.len();
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let lat = Lattice::new(center, radius);
        let reach = seed.reach(center);
        if policy == BoxPolicy::Exact && reach + steps > radius {
            return Err(Error::BoxOverflow {
                needed: reach + steps,
                radius,
            });
        }
        let rows = lat.len() / lat.side;
        let row_strides: Vec<usize> = lat.strides[..d - 1].iter().map(|s| s / lat.side).collect();
        let mut p = Self {
            cur: take_zeroed(lat.len()),
            next: take_zeroed(lat.len()),
            ext_cur: vec![EMPTY_EXT; rows],
            ext_next: vec![EMPTY_EXT; rows],
            row_cols: Vec::new(),
            row_lasts: Vec::new(),
            row_w: Vec::new(),
            outer_lo: center[..d - 1].to_vec(),
            outer_hi: center[..d - 1].to_vec(),
            row_strides,
            lat,
            t: 0,
            log_scale: 0.0,
            renormalize,
            leaked: 0.0,
            empty: true,
            parity: None,
        };
        let mut parities = seed
            .sites
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(x, _)| x.iter().sum::<i64>().rem_euclid(2));
        if let Some(first) = parities.next() {
            if parities.all(|q| q == first) {
                p.parity = Some(first);
            }
        }
        let mut lo = vec![i64::MAX; d - 1];
        let mut hi = vec![i64::MIN; d - 1];
        for (x, v) in &seed.sites {
            if x.len() != d {
                return Err(Error::Domain("seed site has the wrong dimension".into()));
            }
            if !p.lat.contains(x) {
                if policy == BoxPolicy::Exact {
                    return Err(Error::BoxOverflow { needed: reach, radius });
                }
                continue;
            }
            if *v == 0.0 {
                continue;
            }
            let idx = p.lat.index(x);
            p.cur[idx] += v;
            let row = idx / p.lat.side;
            let col = (idx % p.lat.side) as i32;
            let e = &mut p.ext_cur[row];
            *e = (e.0.min(col), e.1.max(col));
            p.empty = false;
            for k in 0..d - 1 {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        if !p.empty {
            p.outer_lo = lo;
            p.outer_hi = hi;
        }
        p.maybe_renormalize(p.cur.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        Ok(p)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn time(&self) -> i64 {
        self.t
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Total pre-weight mass dropped at the box boundary so far, in absolute units.
    pub fn leaked_mass(&self) -> f64 {
        self.leaked
    }

    /// Stored value at `x` (multiply by `exp(log_scale)` for the field).
    #[inline]
    pub fn raw(&self, x: &[i64]) -> f64 {
        if self.lat.contains(x) {
            self.cur[self.lat.index(x)]
        } else {
            0.0
        }
    }

    pub fn sum(&self) -> Scaled {
        let mut s = 0.0;
        self.for_each_support(|_, v| s += v);
        Scaled {
            mantissa: s,
            log_scale: self.log_scale,
        }
    }

    fn row_base(&self, outer: &[i64]) -> usize {
        let mut row = 0usize;
        for (k, &xk) in outer.iter().enumerate() {
            row += (xk - self.lat.center[k] + self.lat.radius + 1) as usize * self.row_strides[k];
        }
        row
    }

    /// Visits every site of the tracked support with its stored value.
    pub fn for_each_support(&self, mut f: impl FnMut(&[i64], f64)) {
        if self.empty {
            return;
        }
        let d = self.lat.d;
        let last = d - 1;
        let side = self.lat.side;
        let col0 = self.lat.center[last] - self.lat.radius - 1;
        let mut x = vec![0i64; d];
        x[..last].copy_from_slice(&self.outer_lo);
        loop {
            let row = self.row_base(&x[..last]);
            let (lo, hi) = self.ext_cur[row];
            for c in lo..=hi {
                x[last] = col0 + c as i64;
                f(&x, self.cur[row * side + c as usize]);
            }
            if !advance_odometer(&mut x[..last], &self.outer_lo, &self.outer_hi) {
                break;
            }
        }
    }

    pub fn slice(&self) -> FieldSlice {
        let w = (2 * self.lat.radius + 1) as usize;
        let mut values = vec![0.0; w.pow(self.lat.d as u32)];
        let r = self.lat.radius;
        let c = self.lat.center.clone();
        self.for_each_support(|x, v| {
            let mut idx = 0usize;
            for k in 0..x.len() {
                idx = idx * w + (x[k] - c[k] + r) as usize;
            }
            values[idx] = v;
        });
        FieldSlice {
            t: self.t,
            d: self.lat.d,
            center: c,
            radius: r,
            values,
            log_scale: self.log_scale,
        }
    }

    fn maybe_renormalize(&mut self, max: f64) {
        if max == 0.0 || !max.is_finite() {
            return;
        }
        let force = self.renormalize == Renormalize::EveryStep;
        if force || !(RENORM_LOW..=RENORM_HIGH).contains(&max) {
            let inv = 1.0 / max;
            for v in self.cur.iter_mut() {
                *v *= inv;
            }
            self.log_scale += max.ln();
        }
    }

    /// Advances to `t + 1`. `weigh(x)` gives the multiplier at the arrival site
    /// (return 0 to forbid the site); `visit(x, pre, post)` sees every site
    /// with nonzero pre-weight value.
    pub fn step(
        &mut self,
        mut weigh: impl FnMut(&[i64]) -> f64,
        visit: impl FnMut(&[i64], f64, f64),
    ) -> StepStats {
        self.step_rows(
            |x, lasts, out| {
                let last = x.len() - 1;
                for (o, &l) in out.iter_mut().zip(lasts) {
                    x[last] = l;
                    *o = weigh(x);
                }
            },
            visit,
        )
    }

    /// As [`Propagator::step`], with multipliers requested one row at a time:
    /// `weigh_row(x, lasts, out)` fills `out[i]` for the site `(x[..d-1], lasts[i])`.
    pub fn step_rows(
        &mut self,
        mut weigh_row: impl FnMut(&mut [i64], &[i64], &mut [f64]),
        mut visit: impl FnMut(&[i64], f64, f64),
    ) -> StepStats {
        let d = self.lat.d;
        let r = self.lat.radius;
        let side = self.lat.side;
        let last = d - 1;
        let t = self.t + 1;
        let log_scale_before = self.log_scale;
        let inv2d = 1.0 / (2 * d) as f64;
        let mut stats = StepStats {
            t,
            log_scale_before,
            sum_pre: 0.0,
            sum_post: 0.0,
            sum_pre_sq: 0.0,
            leaked: 0.0,
        };
        if self.empty {
            self.t = t;
            return stats;
        }
        let c = &self.lat.center;
        let new_lo: Vec<i64> = (0..last).map(|k| (self.outer_lo[k] - 1).max(c[k] - r)).collect();
        let new_hi: Vec<i64> = (0..last).map(|k| (self.outer_hi[k] + 1).min(c[k] + r)).collect();
        let col_min = 1i32;
        let col_max = (side - 2) as i32;
        let col0 = c[last] - r - 1;
        let strides = &self.lat.strides;
        let mut max = 0.0f64;
        let mut leaked = 0.0;
        let mut any = false;
        let mut x = vec![0i64; d];
        x[..last].copy_from_slice(&new_lo);
        loop {
            let mut row = 0usize;
            let mut on_face = 0usize;
            let outer_sum: i64 = x[..last].iter().sum();
            for k in 0..last {
                let off = x[k] - c[k];
                row += (off + r + 1) as usize * self.row_strides[k];
                on_face += (off == r) as usize + (off == -r) as usize;
            }
            // Clear what U_{t-2} left in this row of the target buffer.
            let (olo, ohi) = self.ext_next[row];
            if olo <= ohi {
                self.next[row * side + olo as usize..=row * side + ohi as usize].fill(0.0);
            }
            let own = self.ext_cur[row];
            if own.0 <= own.1 {
                // Mass of U_{t-1} on the box faces that steps outside.
                let base = row * side;
                if on_face > 0 {
                    let row_mass: f64 = self.cur[base + own.0 as usize..=base + own.1 as usize].iter().sum();
                    leaked += row_mass * on_face as f64 * inv2d;
                }
                if own.0 == col_min {
                    leaked += self.cur[base + col_min as usize] * inv2d;
                }
                if own.1 == col_max {
                    leaked += self.cur[base + col_max as usize] * inv2d;
                }
            }
            let mut lo = if own.0 <= own.1 { own.0 - 1 } else { i32::MAX };
            let mut hi = if own.0 <= own.1 { own.1 + 1 } else { i32::MIN };
            for &rs in &self.row_strides {
                for nb in [row - rs, row + rs] {
                    let e = self.ext_cur[nb];
                    lo = lo.min(e.0);
                    hi = hi.max(e.1);
                }
            }
            lo = lo.max(col_min);
            hi = hi.min(col_max);
            let mut new_ext = EMPTY_EXT;
            let mut stride = 1;
            if let (Some(q), true) = (self.parity, lo <= hi) {
                // Only sites with coordinate sum of parity q + t can be reached.
                let first = outer_sum + col0 + lo as i64;
                if (first - q - t).rem_euclid(2) != 0 {
                    lo += 1;
                }
                stride = 2;
            }
            if lo <= hi {
                let base = row * side;
                let step = stride;
                // Neighbor averages first, in a tight loop.
                let mut col = lo;
                while col <= hi {
                    let idx = base + col as usize;
                    self.next[idx] = neighbor_sum(&self.cur, idx, &strides[..d]) * inv2d;
                    col += step;
                }
                // Then weights, only where the average is nonzero.
                self.row_cols.clear();
                self.row_lasts.clear();
                let mut col = lo;
                while col <= hi {
                    if self.next[base + col as usize] != 0.0 {
                        self.row_cols.push(col);
                        self.row_lasts.push(col0 + col as i64);
                    }
                    col += step;
                }
                self.row_w.clear();
                self.row_w.resize(self.row_cols.len(), 0.0);
                weigh_row(&mut x, &self.row_lasts, &mut self.row_w);
                for (i, &col) in self.row_cols.iter().enumerate() {
                    let idx = base + col as usize;
                    let pre = self.next[idx];
                    let post = pre * self.row_w[i];
                    self.next[idx] = post;
                    stats.sum_pre += pre;
                    stats.sum_pre_sq += pre * pre;
                    x[last] = self.row_lasts[i];
                    visit(&x, pre, post);
                    if post != 0.0 {
                        new_ext = (new_ext.0.min(col), new_ext.1.max(col));
                        stats.sum_post += post;
                        max = max.max(post.abs());
                    }
                }
            }
            self.ext_next[row] = new_ext;
            any |= new_ext.0 <= new_ext.1;
            if !advance_odometer(&mut x[..last], &new_lo, &new_hi) {
                break;
            }
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        std::mem::swap(&mut self.ext_cur, &mut self.ext_next);
        self.outer_lo = new_lo;
        self.outer_hi = new_hi;
        self.t = t;
        self.empty = !any;
        stats.leaked = leaked;
        if leaked != 0.0 {
            self.leaked += leaked * log_scale_before.exp();
        }
        self.maybe_renormalize(max);
        stats
    }

    /// One polymer step with weights `exp(beta omega_{t,x} - lambda)`.
    pub fn step_polymer<E: Environment + ?Sized>(
        &mut self,
        env: &E,
        weigher: &Weigher,
        visit: impl FnMut(&[i64], f64, f64),
    ) -> StepStats {
        let t = self.t + 1;
        if weigher.is_trivial() {
            self.step_rows(|_, _, out| out.fill(1.0), visit)
        } else {
            self.step_rows(
                |x, lasts, out| {
                    env.omega_row(t, x, lasts, out);
                    for w in out.iter_mut() {
                        *w = weigher.weight_of(*w);
                    }
                },
                visit,
            )
        }
    }
}

#[inline(always)]
fn neighbor_sum(cur: &[f64], idx: usize, strides: &[usize]) -> f64 {
    // The padding ring guarantees idx +- stride stays inside `cur` for every
    // interior idx; checked once here instead of per access.
    debug_assert!(strides.iter().all(|&st| idx >= st && idx + st < cur.len()));
    let mut s = 0.0;
    for &st in strides {
        // SAFETY: see the assertion above; `idx` is an interior cell of the padded cube.
        unsafe {
            s += *cur.get_unchecked(idx - st) + *cur.get_unchecked(idx + st);
        }
    }
    s
}

/// Advances `x` through the box `[lo, hi]` like an odometer, last digit
/// fastest. Returns false after the last position (and for empty `x`).
fn advance_odometer(x: &mut [i64], lo: &[i64], hi: &[i64]) -> bool {
    let mut k = x.len();
    while k > 0 {
        k -= 1;
        if x[k] < hi[k] {
            x[k] += 1;
            return true;
        }
        x[k] = lo[k];
    }
    false
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardRun {
    /// `sum_y U_t(y)` for `t = 0..=t_end`.
    pub totals: Vec<Scaled>,
    /// Slices `U_t` for `t = 0..=t_end` when requested.
    pub slices: Option<Vec<FieldSlice>>,
    /// Final slice `U_{t_end}`.
    pub last: FieldSlice,
    pub leaked_mass: f64,
}

impl ForwardRun {
    pub fn total(&self, t: usize) -> f64 {
        self.totals[t].value()
    }
}

/// Radius of a point-started pass: lossless under the exact policy, the
/// configured radius otherwise.
fn local_radius(config: &PolymerConfig, steps: i64) -> i64 {
    match config.policy {
        BoxPolicy::Exact => steps,
        BoxPolicy::Truncate => config.box_radius,
    }
}

fn origin(d: usize) -> Vec<i64> {
    vec![0; d]
}

/// `U_t(y) = exp(beta omega_{t,y} - lambda) (2d)^-1 sum_{|y - y'| = 1} U_{t-1}(y')`
/// from `U_0 = seed`, on the box of radius `config.box_radius` around the origin.
pub fn forward_field<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    seed: &SeedProfile,
    t_end: i64,
    keep_slices: bool,
) -> Result<ForwardRun> {
    config.validate()?;
    let mut p = Propagator::new(
        &origin(config.d),
        config.box_radius,
        seed,
        t_end,
        config.policy,
        config.renormalize,
    )?;
    let weigher = Weigher::new(config.beta, &config.law);
    let mut totals = vec![p.sum()];
    let mut slices = keep_slices.then(|| vec![p.slice()]);
    for _ in 0..t_end {
        let st = p.step_polymer(env, &weigher, |_, _, _| {});
        totals.push(Scaled {
            mantissa: st.sum_post,
            log_scale: st.log_scale_before,
        });
        if let Some(s) = slices.as_mut() {
            s.push(p.slice());
        }
    }
    Ok(ForwardRun {
        totals,
        slices,
        last: p.slice(),
        leaked_mass: p.leaked_mass(),
    })
}

/// `W_n^{0,x}` from a point start.
pub fn point_partition<E: Environment + ?Sized>(config: &PolymerConfig, env: &E, x: &[i64], n: i64) -> Result<f64> {
    config.validate()?;
    let seed = SeedProfile::point(x);
    let radius = local_radius(config, n);
    let mut p = Propagator::new(x, radius, &seed, n, config.policy, config.renormalize)?;
    let weigher = Weigher::new(config.beta, &config.law);
    let mut last = p.sum();
    for _ in 0..n {
        let st = p.step_polymer(env, &weigher, |_, _, _| {});
        last = Scaled {
            mantissa: st.sum_post,
            log_scale: st.log_scale_before,
        };
    }
    Ok(last.value())
}

/// `W_n[1_A]` from `start`, with `U_t` zeroed wherever `admissible(t, x)` fails
/// (including `t = 0`).
pub fn restricted_partition<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    start: &[i64],
    admissible: &dyn Fn(i64, &[i64]) -> bool,
) -> Result<f64> {
    config.validate()?;
    if !admissible(0, start) {
        return Ok(0.0);
    }
    let n = config.n;
    let mut p = Propagator::new(
        start,
        local_radius(config, n),
        &SeedProfile::point(start),
        n,
        config.policy,
        config.renormalize,
    )?;
    let weigher = Weigher::new(config.beta, &config.law);
    let mut last = p.sum();
    for _ in 0..n {
        let t = p.time() + 1;
        let st = p.step(
            |x| {
                if admissible(t, x) {
                    weigher.weight(env, t, x)
                } else {
                    0.0
                }
            },
            |_, _, _| {},
        );
        last = Scaled {
            mantissa: st.sum_post,
            log_scale: st.log_scale_before,
        };
    }
    Ok(last.value())
}

/// `Wcheck_s^{t,x}[g(X_0)]`: the walk runs backward from `(t, x)` to time 0,
/// collecting normalized weights at times `max(s, 1)..t-1`, and `g` is applied
/// at `X_0` when given.
pub fn backward_field<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    t: i64,
    x: &[i64],
    s: i64,
    endpoint: Option<&dyn Fn(&[i64]) -> f64>,
) -> Result<f64> {
    config.validate()?;
    if s > t {
        return Err(Error::Domain(format!("backward field needs s <= t, got s={s}, t={t}")));
    }
    if s < 0 {
        return Err(Error::Domain(format!("backward field needs s >= 0, got s={s}")));
    }
    let first_weighted = s.max(1);
    if endpoint.is_none() && (s == t || config.beta == 0.0) {
        return Ok(1.0);
    }
    let steps = if endpoint.is_some() { t } else { t - first_weighted };
    let mut p = Propagator::new(
        x,
        local_radius(config, steps),
        &SeedProfile::point(x),
        steps,
        config.policy,
        config.renormalize,
    )?;
    let weigher = Weigher::new(config.beta, &config.law);
    for _ in 0..steps {
        // Arrival at real time t - k.
        let real = t - (p.time() + 1);
        if real >= first_weighted && real < t && !weigher.is_trivial() {
            p.step(|y| weigher.weight(env, real, y), |_, _, _| {});
        } else {
            p.step(|_| 1.0, |_, _, _| {});
        }
    }
    match endpoint {
        None => Ok(p.sum().value()),
        Some(g) => {
            let mut acc = 0.0;
            p.for_each_support(|y, v| {
                if v != 0.0 {
                    acc += v * g(y);
                }
            });
            Ok(acc * p.log_scale().exp())
        }
    }
}

/// `Utilde_t(x) = (2d)^-1 sum_{|y - x| = 1} U_{t-1}(y)` for `t = 1..=n`, where `U` is the
/// forward recursion seeded with `f(./sqrt(n))`; equals `Wcheck_1^{t,x}[f(X_0/sqrt(n))]`.
pub fn backward_sweep<E: Environment + ?Sized>(
    config: &PolymerConfig,
    env: &E,
    f: &TestFunction,
    n: i64,
) -> Result<Vec<FieldSlice>> {
    config.validate()?;
    f.validate(config.d)?;
    let seed = SeedProfile::scaled(f, n, config.d);
    let mut p = Propagator::new(
        &origin(config.d),
        config.box_radius,
        &seed,
        n,
        config.policy,
        config.renormalize,
    )?;
    let weigher = Weigher::new(config.beta, &config.law);
    let r = config.box_radius;
    let w = (2 * r + 1) as usize;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut values = vec![0.0; w.pow(config.d as u32)];
        let st = p.step_polymer(env, &weigher, |x, pre, _| {
            let mut idx = 0usize;
            for &xi in x {
                idx = idx * w + (xi + r) as usize;
            }
            values[idx] = pre;
        });
        out.push(FieldSlice {
            t: st.t,
            d: config.d,
            center: origin(config.d),
            radius: r,
            values,
            log_scale: st.log_scale_before,
        });
    }
    Ok(out)
}

/// Endpoint law `mu(X_n = x) = U_n(x) / sum_y U_n(y)` from the origin.
pub fn endpoint_measure<E: Environment + ?Sized>(config: &PolymerConfig, env: &E, n: i64) -> Result<FieldSlice> {
    let run = forward_field(config, env, &SeedProfile::point(&origin(config.d)), n, false)?;
    let mut slice = run.last;
    let total: f64 = slice.values.iter().sum();
    for v in slice.values.iter_mut() {
        *v /= total;
    }
    slice.log_scale = 0.0;
    Ok(slice)
}

#[cfg(test)]
mod tests;
