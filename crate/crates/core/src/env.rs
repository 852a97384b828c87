//! Random environment: i.i.d. site weights with closed-form log moment
//! generating functions, addressable by `(seed, t, x)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::rng;

/// Marginal law of a single weight `omega_{t,x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisorderLaw {
    /// `hi` with probability `p`, `lo` otherwise.
    TwoPoint { p: f64, lo: f64, hi: f64 },
    UniformInterval { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl Default for DisorderLaw {
    fn default() -> Self {
        DisorderLaw::symmetric_two_point()
    }
}

impl DisorderLaw {
    /// `+1` or `-1` with probability one half each.
    pub fn symmetric_two_point() -> Self {
        DisorderLaw::TwoPoint {
            p: 0.5,
            lo: -1.0,
            hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match *self {
            DisorderLaw::TwoPoint { p, lo, hi } => {
                if !(0.0..=1.0).contains(&p) || !finite(lo) || !finite(hi) || lo > hi {
                    return Err(Error::InvalidLaw(format!(
                        "two-point needs p in [0,1] and finite lo <= hi, got p={p}, lo={lo}, hi={hi}"
                    )));
                }
            }
            DisorderLaw::UniformInterval { a, b } => {
                if !finite(a) || !finite(b) || a >= b {
                    return Err(Error::InvalidLaw(format!(
                        "uniform-interval needs finite a < b, got a={a}, b={b}"
                    )));
                }
            }
            DisorderLaw::Gaussian { mean, sd } => {
                if !finite(mean) || !finite(sd) || sd <= 0.0 {
                    return Err(Error::InvalidLaw(format!(
                        "gaussian needs finite mean and sd > 0, got mean={mean}, sd={sd}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Essential supremum `K`, present iff the law is bounded above.
    pub fn upper_bound(&self) -> Option<f64> {
        match *self {
            DisorderLaw::TwoPoint { p, lo, hi } => Some(if p > 0.0 { hi } else { lo }),
            DisorderLaw::UniformInterval { b, .. } => Some(b),
            DisorderLaw::Gaussian { .. } => None,
        }
    }

    /// Essential infimum, when finite.
    pub fn lower_bound(&self) -> Option<f64> {
        match *self {
            DisorderLaw::TwoPoint { p, lo, hi } => Some(if p < 1.0 { lo } else { hi }),
            DisorderLaw::UniformInterval { a, .. } => Some(a),
            DisorderLaw::Gaussian { .. } => None,
        }
    }

    /// `lambda(beta) = log E[exp(beta * omega)]`.
    pub fn log_mgf(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            return 0.0;
        }
        match *self {
            DisorderLaw::TwoPoint { p, lo, hi } => {
                if p <= 0.0 {
                    return beta * lo;
                }
                if p >= 1.0 {
                    return beta * hi;
                }
                let a = p.ln() + beta * hi;
                let b = (1.0 - p).ln() + beta * lo;
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
            DisorderLaw::UniformInterval { a, b } => {
                // log((e^{beta b} - e^{beta a}) / (beta (b - a)))
                let h = beta * (b - a);
                if h.abs() < 1e-5 {
                    // log(expm1(h)/h) = h/2 + h^2/24 - h^4/2880 + ...
                    beta * a + h / 2.0 + h * h / 24.0 - h.powi(4) / 2880.0
                } else if h > 0.0 {
                    beta * b + (-(-h).exp_m1() / h).ln()
                } else {
                    beta * a + (h.exp_m1() / h).ln()
                }
            }
            DisorderLaw::Gaussian { mean, sd } => beta * mean + 0.5 * beta * beta * sd * sd,
        }
    }

    /// `exp(lambda(2 beta) - 2 lambda(beta)) - 1`, the variance of the
    /// normalized weight `exp(beta omega - lambda(beta))`.
    pub fn compensator_c1(&self, beta: f64) -> f64 {
        self.pair_exponent(beta).exp_m1()
    }

    /// `lambda(2 beta) - 2 lambda(beta)`.
    pub fn pair_exponent(&self, beta: f64) -> f64 {
        self.log_mgf(2.0 * beta) - 2.0 * self.log_mgf(beta)
    }

    /// Map a uniform in (0, 1) to a draw from the law by inversion.
    #[inline]
    pub fn from_uniform(&self, u: f64) -> f64 {
        match *self {
            // Indexed select keeps the coin flip branch-free.
            DisorderLaw::TwoPoint { p, lo, hi } => [lo, hi][(u < p) as usize],
            DisorderLaw::UniformInterval { a, b } => a + (b - a) * u,
            DisorderLaw::Gaussian { mean, sd } => mean - sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * u),
        }
    }
}

/// Largest supported time index (28 bits of the counter word).
pub const MAX_TIME: i64 = (1 << 28) - 1;

/// Splits the last coordinate into a pair key and a lane: sites `4m + a` and
/// `4m + a + 2` (`a` in {0, 1}) share one Philox block, one 64-bit lane each.
/// Both members of a pair have the same parity, so a sweep over one
/// sublattice uses every block it generates.
#[inline]
pub fn pair_of(last: i64) -> (i64, usize) {
    ((last >> 2) * 2 + (last & 1), ((last >> 1) & 1) as usize)
}

/// Injective packing of `(t, x)` with the last coordinate replaced by its
/// pair key into a 128-bit Philox counter.
///
/// Word 0 carries the dimension in its top 4 bits and `t` below. For `d <= 3`
/// each coordinate owns a full 32-bit word; for `d = 4` coordinates take 24 bits.
#[inline]
pub fn block_counter(t: i64, x: &[i64], pair_key: i64) -> [u32; 4] {
    let d = x.len();
    debug_assert!((1..=4).contains(&d));
    debug_assert!((1..=MAX_TIME).contains(&t));
    let mut c = [((d as u32) << 28) | (t as u32), 0, 0, 0];
    if d <= 3 {
        for (i, &xi) in x[..d - 1].iter().enumerate() {
            c[i + 1] = xi as i32 as u32;
        }
        c[d] = pair_key as i32 as u32;
    } else {
        let mut bits: u128 = 0;
        for &xi in &x[..d - 1] {
            bits = (bits << 24) | ((xi as i32 as u32 & 0x00FF_FFFF) as u128);
        }
        bits = (bits << 24) | ((pair_key as i32 as u32 & 0x00FF_FFFF) as u128);
        c[1] = bits as u32;
        c[2] = (bits >> 32) as u32;
        c[3] = (bits >> 64) as u32;
    }
    c
}

/// The uniform in (0, 1) assigned to `(t, x)` under `seed`.
#[inline]
pub fn site_uniform(seed: u64, t: i64, x: &[i64]) -> f64 {
    let (key, lane) = pair_of(x[x.len() - 1]);
    let r = rng::philox4x32(block_counter(t, x, key), rng::key_from_seed(seed));
    rng::open_unit_f64(r[2 * lane], r[2 * lane + 1])
}

fn check_site(t: i64, x: &[i64]) -> Result<()> {
    if t <= 0 {
        return Err(Error::Domain(format!(
            "time {t} carries no weight; weights live at t >= 1"
        )));
    }
    if t > MAX_TIME {
        return Err(Error::Domain(format!("time {t} exceeds {MAX_TIME}")));
    }
    if x.is_empty() || x.len() > 4 {
        return Err(Error::Domain(format!("dimension {} not in 1..=4", x.len())));
    }
    let lim: i64 = if x.len() <= 3 { i32::MAX as i64 } else { (1 << 23) - 1 };
    if x.iter().any(|&v| v.abs() > lim) {
        return Err(Error::Domain(format!("coordinate out of range: {x:?}")));
    }
    Ok(())
}

/// `omega_{t,x}` for the environment keyed by `seed`.
pub fn sample_omega(seed: u64, t: i64, x: &[i64], law: &DisorderLaw) -> Result<f64> {
    check_site(t, x)?;
    law.validate()?;
    Ok(law.from_uniform(site_uniform(seed, t, x)))
}

/// Read access to a space-time weight field.
pub trait Environment: Sync {
    fn law(&self) -> &DisorderLaw;

    /// Weight at `(t, x)`, `t >= 1`.
    fn omega(&self, t: i64, x: &[i64]) -> f64;

    /// Weights at `(t, (x[..d-1], l))` for each `l` in `lasts`; `x[d-1]` is scratch.
    fn omega_row(&self, t: i64, x: &mut [i64], lasts: &[i64], out: &mut [f64]) {
        let last = x.len() - 1;
        for (o, &l) in out.iter_mut().zip(lasts) {
            x[last] = l;
            *o = self.omega(t, x);
        }
    }
}

/// The i.i.d. environment keyed by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeededEnvironment {
    pub seed: u64,
    pub law: DisorderLaw,
}

impl SeededEnvironment {
    pub fn new(seed: u64, law: DisorderLaw) -> Self {
        Self { seed, law }
    }
}

impl Environment for SeededEnvironment {
    fn law(&self) -> &DisorderLaw {
        &self.law
    }

    #[inline]
    fn omega(&self, t: i64, x: &[i64]) -> f64 {
        self.law.from_uniform(site_uniform(self.seed, t, x))
    }

    fn omega_row(&self, t: i64, x: &mut [i64], lasts: &[i64], out: &mut [f64]) {
        let key = rng::key_from_seed(self.seed);
        let mut cached_pair = i64::MIN;
        let mut block = [0u32; 4];
        for (o, &l) in out.iter_mut().zip(lasts) {
            let (pair, lane) = pair_of(l);
            if pair != cached_pair {
                block = rng::philox4x32(block_counter(t, x, pair), key);
                cached_pair = pair;
            }
            *o = self.law.from_uniform(rng::open_unit_f64(block[2 * lane], block[2 * lane + 1]));
        }
    }
}

/// A seeded environment together with the box it is used on.
///
/// The box only documents the region of interest; values never depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentBox {
    pub env: SeededEnvironment,
    pub dim: usize,
    pub horizon: i64,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl EnvironmentBox {
    pub fn cube(seed: u64, law: DisorderLaw, dim: usize, horizon: i64, radius: i64) -> Self {
        Self {
            env: SeededEnvironment::new(seed, law),
            dim,
            horizon,
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
        }
    }

    pub fn contains(&self, t: i64, x: &[i64]) -> bool {
        t >= 1
            && t <= self.horizon
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }
}

impl Environment for EnvironmentBox {
    fn law(&self) -> &DisorderLaw {
        &self.env.law
    }

    #[inline]
    fn omega(&self, t: i64, x: &[i64]) -> f64 {
        self.env.omega(t, x)
    }

    fn omega_row(&self, t: i64, x: &mut [i64], lasts: &[i64], out: &mut [f64]) {
        self.env.omega_row(t, x, lasts, out)
    }
}

/// Space-time block `[t_lo, t_hi) x (center + [-radius, radius]^d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceTimeBlock {
    pub t_lo: i64,
    pub t_hi: i64,
    pub center: Vec<i64>,
    pub radius: i64,
}

impl SpaceTimeBlock {
    #[inline]
    pub fn contains(&self, t: i64, x: &[i64]) -> bool {
        t >= self.t_lo
            && t < self.t_hi
            && x
                .iter()
                .zip(&self.center)
                .all(|(v, c)| (v - c).abs() <= self.radius)
    }

    pub fn overlaps(&self, other: &SpaceTimeBlock) -> bool {
        self.t_lo < other.t_hi
            && other.t_lo < self.t_hi
            && self
                .center
                .iter()
                .zip(&other.center)
                .all(|(a, b)| (a - b).abs() <= self.radius + other.radius)
    }
}

/// `inside` on a block, `outside` elsewhere.
pub struct PatchedEnvironment<'a> {
    pub inside: &'a dyn Environment,
    pub outside: &'a dyn Environment,
    pub block: SpaceTimeBlock,
}

impl Environment for PatchedEnvironment<'_> {
    fn law(&self) -> &DisorderLaw {
        self.inside.law()
    }

    #[inline]
    fn omega(&self, t: i64, x: &[i64]) -> f64 {
        if self.block.contains(t, x) {
            self.inside.omega(t, x)
        } else {
            self.outside.omega(t, x)
        }
    }
}

/// `omega'_{k,x} = omega_{horizon - k, x}`.
pub struct TimeReversed<'a> {
    pub inner: &'a dyn Environment,
    pub horizon: i64,
}

impl Environment for TimeReversed<'_> {
    fn law(&self) -> &DisorderLaw {
        self.inner.law()
    }

    #[inline]
    fn omega(&self, t: i64, x: &[i64]) -> f64 {
        self.inner.omega(self.horizon - t, x)
    }

    fn omega_row(&self, t: i64, x: &mut [i64], lasts: &[i64], out: &mut [f64]) {
        self.inner.omega_row(self.horizon - t, x, lasts, out)
    }
}

/// A hand-written weight table; unlisted sites take `default`.
#[derive(Debug, Clone, Default)]
pub struct TableEnvironment {
    pub law: DisorderLaw,
    pub default: f64,
    pub values: HashMap<(i64, Vec<i64>), f64>,
}

impl TableEnvironment {
    pub fn new(law: DisorderLaw, default: f64) -> Self {
        Self {
            law,
            default,
            values: HashMap::new(),
        }
    }

    pub fn set(&mut self, t: i64, x: &[i64], v: f64) -> &mut Self {
        self.values.insert((t, x.to_vec()), v);
        self
    }

    /// Snapshot of `env` over `[1, horizon] x [-radius, radius]^d`.
    pub fn capture(env: &dyn Environment, d: usize, horizon: i64, radius: i64) -> Self {
        let mut table = TableEnvironment::new(*env.law(), 0.0);
        let side = (2 * radius + 1) as usize;
        let mut x = vec![0i64; d];
        for t in 1..=horizon {
            for flat in 0..side.pow(d as u32) {
                let mut r = flat;
                for xi in x.iter_mut() {
                    *xi = (r % side) as i64 - radius;
                    r /= side;
                }
                table.values.insert((t, x.clone()), env.omega(t, &x));
            }
        }
        table
    }
}

impl Environment for TableEnvironment {
    fn law(&self) -> &DisorderLaw {
        &self.law
    }

    fn omega(&self, t: i64, x: &[i64]) -> f64 {
        *self.values.get(&(t, x.to_vec())).unwrap_or(&self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_laws() -> Vec<DisorderLaw> {
        vec![
            DisorderLaw::symmetric_two_point(),
            DisorderLaw::TwoPoint {
                p: 0.1,
                lo: -1.0,
                hi: 1.0,
            },
            DisorderLaw::UniformInterval { a: 0.0, b: 1.0 },
            DisorderLaw::UniformInterval { a: -2.0, b: 0.5 },
            DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 },
            DisorderLaw::Gaussian { mean: 0.3, sd: 0.5 },
        ]
    }

    #[test]
    fn log_mgf_at_zero_is_zero() {
        for law in all_laws() {
            assert_eq!(law.log_mgf(0.0), 0.0);
            assert_eq!(law.compensator_c1(0.0), 0.0);
        }
    }

    #[test]
    fn symmetric_two_point_closed_forms() {
        let law = DisorderLaw::symmetric_two_point();
        assert!((law.log_mgf(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        let c1 = 2f64.cosh() / 1f64.cosh().powi(2) - 1.0;
        assert!((law.compensator_c1(1.0) - c1).abs() < 1e-14);
    }

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn uniform_log_mgf_matches_quadrature() {
        let law = DisorderLaw::UniformInterval { a: 0.0, b: 1.0 };
        let integral = adaptive_simpson(&|u: f64| (2.0 * u).exp(), 0.0, 1.0, 1e-15);
        assert!((law.log_mgf(2.0) - integral.ln()).abs() < 1e-12);
        // Series branch agrees with the direct formula near the switch.
        let h: f64 = 0.99e-5;
        let direct = (h.exp_m1() / h).ln();
        assert!((law.log_mgf(h) - direct).abs() < 1e-15);
        let law2 = DisorderLaw::UniformInterval { a: -2.0, b: 0.5 };
        let integral2 = adaptive_simpson(&|u: f64| (-1.3 * u).exp(), -2.0, 0.5, 1e-15) / 2.5;
        assert!((law2.log_mgf(-1.3) - integral2.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_mgf_convex() {
        let h = 1e-3;
        for law in all_laws() {
            for i in 1..=20 {
                let b = 0.1 * i as f64;
                let second = law.log_mgf(b + h) - 2.0 * law.log_mgf(b) + law.log_mgf(b - h);
                assert!(second >= -1e-12, "{law:?} at {b}");
            }
        }
    }

    #[test]
    fn degenerate_law_samples_constant() {
        let law = DisorderLaw::TwoPoint {
            p: 1.0,
            lo: 0.0,
            hi: 0.0,
        };
        for t in 1..5 {
            assert_eq!(sample_omega(11, t, &[t, -t, 3], &law).unwrap(), 0.0);
        }
    }

    #[test]
    fn time_zero_rejected() {
        let law = DisorderLaw::default();
        assert!(matches!(sample_omega(1, 0, &[0], &law), Err(Error::Domain(_))));
        assert!(matches!(sample_omega(1, -3, &[0], &law), Err(Error::Domain(_))));
    }

    #[test]
    fn value_independent_of_box() {
        let law = DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 };
        let small = EnvironmentBox::cube(5, law, 3, 10, 4);
        let large = EnvironmentBox::cube(5, law, 3, 1000, 400);
        for t in 1..=10 {
            let x = [t % 3, -2, 1];
            assert_eq!(small.omega(t, &x).to_bits(), large.omega(t, &x).to_bits());
            assert_eq!(
                small.omega(t, &x).to_bits(),
                sample_omega(5, t, &x, &law).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn counters_injective_on_a_box() {
        let mut seen = std::collections::HashSet::new();
        for d in 1..=4usize {
            for t in 1..=3 {
                for flat in 0..5usize.pow(d as u32) {
                    let mut r = flat;
                    let x: Vec<i64> = (0..d)
                        .map(|_| {
                            let v = (r % 5) as i64 - 2;
                            r /= 5;
                            v
                        })
                        .collect();
                    let (pair, lane) = pair_of(x[d - 1]);
                    assert!(seen.insert((block_counter(t, &x, pair), lane)));
                }
            }
        }
    }

    #[test]
    fn two_point_mean_clt() {
        let law = DisorderLaw::symmetric_two_point();
        let n = 1_000_000;
        let env = SeededEnvironment::new(2024, law);
        let mut sum = 0.0;
        for i in 0..n {
            sum += env.omega(1 + (i % 1000) as i64, &[(i / 1000) as i64]);
        }
        // sd of the mean is 1e-3; 4 sigma.
        assert!((sum / n as f64).abs() < 4e-3);
    }

    #[test]
    fn normalized_weight_has_unit_mean_and_c1_variance() {
        let n = 1_000_000usize;
        for law in all_laws() {
            for &beta in &[0.5, 2.0] {
                let env = SeededEnvironment::new(77, law);
                let lam = law.log_mgf(beta);
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in 0..n {
                    let w = (beta * env.omega(1 + (i % 997) as i64, &[(i / 997) as i64, 1]) - lam).exp();
                    s += w;
                    s2 += (w - 1.0) * (w - 1.0);
                }
                let mean = s / n as f64;
                let var = s2 / n as f64;
                let c1 = law.compensator_c1(beta);
                let se_mean = (c1 / n as f64).sqrt();
                assert!((mean - 1.0).abs() < 4.0 * se_mean, "{law:?} beta={beta} mean={mean}");
                // Standard error from the exact moments E[w^k] = exp(lambda(k beta) - k lambda(beta)).
                let m = |k: f64| (law.log_mgf(k * beta) - k * lam).exp();
                let central4 = m(4.0) - 4.0 * m(3.0) + 6.0 * m(2.0) - 3.0;
                let se_var = ((central4 - c1 * c1) / n as f64).sqrt();
                assert!((var - c1).abs() < 4.0 * se_var + 1e-9 * c1, "{law:?} beta={beta} var={var} c1={c1}");
            }
        }
    }

    #[test]
    fn law_serialization_tags() {
        let law = DisorderLaw::TwoPoint {
            p: 0.5,
            lo: -1.0,
            hi: 1.0,
        };
        let s = serde_json::to_string(&law).unwrap();
        assert_eq!(s, r#"{"kind":"two-point","p":0.5,"lo":-1.0,"hi":1.0}"#);
        let back: DisorderLaw = serde_json::from_str(r#"{"kind":"gaussian","mean":0,"sd":2}"#).unwrap();
        assert_eq!(back, DisorderLaw::Gaussian { mean: 0.0, sd: 2.0 });
    }

    #[test]
    fn patched_environment_switches_on_block() {
        let law = DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 };
        let a = SeededEnvironment::new(1, law);
        let b = SeededEnvironment::new(2, law);
        let block = SpaceTimeBlock {
            t_lo: 3,
            t_hi: 5,
            center: vec![0, 0],
            radius: 1,
        };
        let p = PatchedEnvironment {
            inside: &a,
            outside: &b,
            block,
        };
        assert_eq!(p.omega(3, &[1, -1]), a.omega(3, &[1, -1]));
        assert_eq!(p.omega(5, &[0, 0]), b.omega(5, &[0, 0]));
        assert_eq!(p.omega(4, &[2, 0]), b.omega(4, &[2, 0]));
    }
}
