//! Brute-force ground truth by exhaustive path enumeration, plus
//! distribution-level diagnostics.
//!
//! Everything here is deliberately naive: each path's energy is summed and
//! exponentiated once, and environment expectations are taken analytically.

use crate::env::{DisorderLaw, Environment};
use crate::error::{Error, Result};

/// Largest number of paths (or path tuples) any enumeration may visit.
pub const PATH_LIMIT: u128 = 10_000_000;

/// Neumaier-compensated running sum, so the oracle's own rounding stays far
/// below the DP tolerances even over millions of terms.
#[derive(Default)]
struct Sum {
    sum: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn guard(what: &'static str, d: usize, steps: i64) -> Result<()> {
    let needed = (2 * d as u128).checked_pow(steps as u32).unwrap_or(u128::MAX);
    if needed > PATH_LIMIT {
        return Err(Error::Capacity {
            what,
            needed,
            limit: PATH_LIMIT,
        });
    }
    Ok(())
}

/// Calls `visit(path)` for every nearest-neighbor path of `steps` moves from `start`;
/// `path[i]` is the position after `i` moves.
fn for_each_path(d: usize, steps: usize, start: &[i64], visit: &mut dyn FnMut(&[Vec<i64>])) {
    fn rec(d: usize, steps: usize, path: &mut Vec<Vec<i64>>, visit: &mut dyn FnMut(&[Vec<i64>])) {
        if path.len() == steps + 1 {
            visit(path);
            return;
        }
        let last = path.last().unwrap().clone();
        for k in 0..d {
            for s in [-1i64, 1] {
                let mut y = last.clone();
                y[k] += s;
                path.push(y);
                rec(d, steps, path, visit);
                path.pop();
            }
        }
    }
    let mut path = vec![start.to_vec()];
    rec(d, steps, &mut path, visit);
}

/// `E^SRW[exp(beta H_n - n lambda) 1{constraint} 1{X_n = endpoint}]` from `start`,
/// summed literally over all `(2d)^n` paths. `constraint(t, x)` is checked at
/// `t = 0..=n`.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_partition(
    d: usize,
    n: i64,
    start: &[i64],
    env: &dyn Environment,
    beta: f64,
    law: &DisorderLaw,
    constraint: Option<&dyn Fn(i64, &[i64]) -> bool>,
    endpoint: Option<&[i64]>,
) -> Result<f64> {
    guard("path enumeration", d, n)?;
    let lam = law.log_mgf(beta);
    let mut total = Sum::default();
    for_each_path(d, n as usize, start, &mut |path| {
        if let Some(c) = constraint {
            if !path.iter().enumerate().all(|(t, x)| c(t as i64, x)) {
                return;
            }
        }
        if let Some(e) = endpoint {
            if path[n as usize] != e {
                return;
            }
        }
        let h: f64 = (1..=n as usize).map(|t| env.omega(t as i64, &path[t])).sum();
        total.add((beta * h - n as f64 * lam).exp());
    });
    Ok(total.value() / (2.0 * d as f64).powi(n as i32))
}

/// Backward partition function from `(t, x)`: paths `X_t = x, ..., X_0`,
/// energy `sum_{k = max(s,1)}^{t-1} omega_{k, X_k}`, optional `g(X_0)`.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_backward(
    d: usize,
    t: i64,
    x: &[i64],
    s: i64,
    env: &dyn Environment,
    beta: f64,
    law: &DisorderLaw,
    endpoint: Option<&dyn Fn(&[i64]) -> f64>,
) -> Result<f64> {
    if s > t || s < 0 {
        return Err(Error::Domain(format!("need 0 <= s <= t, got s={s}, t={t}")));
    }
    guard("backward path enumeration", d, t)?;
    let lam = law.log_mgf(beta);
    let lo = s.max(1);
    let weighted = (t - lo).max(0);
    let mut total = Sum::default();
    // path[j] is the position at real time t - j.
    for_each_path(d, t as usize, x, &mut |path| {
        let h: f64 = (lo..t).map(|k| env.omega(k, &path[(t - k) as usize])).sum();
        let g = endpoint.map_or(1.0, |g| g(&path[t as usize]));
        total.add((beta * h - weighted as f64 * lam).exp() * g);
    });
    Ok(total.value() / (2.0 * d as f64).powi(t as i32))
}

/// `E[W_n^k]` over the environment, exactly: the average over all `k`-tuples
/// of paths of `prod_{t=1}^{n} prod_x exp(lambda(m beta) - m lambda(beta))`,
/// with `m` the number of walkers at `(t, x)`.
pub fn enumerate_moments(d: usize, n: i64, beta: f64, law: &DisorderLaw, k: usize) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    guard("moment enumeration", d, n * k as i64)?;
    let lam = law.log_mgf(beta);
    let mult: Vec<f64> = (0..=k)
        .map(|m| law.log_mgf(m as f64 * beta) - m as f64 * lam)
        .collect();
    let mut paths: Vec<Vec<Vec<i64>>> = Vec::new();
    for_each_path(d, n as usize, &vec![0; d], &mut |p| paths.push(p.to_vec()));
    let np = paths.len();
    let mut total = Sum::default();
    let mut idx = vec![0usize; k];
    let mut positions: Vec<&Vec<i64>> = Vec::with_capacity(k);
    loop {
        let mut exponent = 0.0;
        for t in 1..=n as usize {
            positions.clear();
            positions.extend(idx.iter().map(|&i| &paths[i][t]));
            positions.sort();
            let mut run = 1;
            for j in 1..=positions.len() {
                if j < positions.len() && positions[j] == positions[j - 1] {
                    run += 1;
                } else {
                    exponent += mult[run];
                    run = 1;
                }
            }
        }
        total.add(exponent.exp());
        let mut j = k;
        loop {
            if j == 0 {
                return Ok(total.value() / (np as f64).powi(k as i32));
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < np {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// `Qhat(lambda)`: the largest fraction of the sample inside any closed interval of length `lambda`.
pub fn concentration_function(samples: &[f64], lambda: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Domain("concentration function needs at least 2 samples".into()));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let mut best = 0usize;
    let mut i = 0usize;
    for j in 0..s.len() {
        while s[j] - s[i] > lambda {
            i += 1;
        }
        best = best.max(j + 1 - i);
    }
    Ok(best as f64 / s.len() as f64)
}

/// Left and right side of the Rogozin scaling for a sum of independent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RogozinReport {
    /// `Qhat` of the sample of sums.
    pub lhs: f64,
    /// `(sum_i (1 - Qhat_i))^{-1/2}`; `None` when every set is degenerate.
    pub rhs: Option<f64>,
    pub ratio: Option<f64>,
}

/// `sample_sets[i][j]` is replicate `j` of variable `i`; sums are formed
/// across variables at equal replicate index.
pub fn rogozin_diagnostic(sample_sets: &[Vec<f64>], lambda: f64) -> Result<RogozinReport> {
    if sample_sets.is_empty() {
        return Err(Error::Domain("rogozin diagnostic needs at least one set".into()));
    }
    let m = sample_sets[0].len();
    if sample_sets.iter().any(|s| s.len() != m) {
        return Err(Error::Domain("sample sets must have equal lengths".into()));
    }
    let sums: Vec<f64> = (0..m).map(|j| sample_sets.iter().map(|s| s[j]).sum()).collect();
    let lhs = concentration_function(&sums, lambda)?;
    let mut spread = 0.0;
    for s in sample_sets {
        spread += 1.0 - concentration_function(s, lambda)?;
    }
    let rhs = (spread > 0.0).then(|| spread.powf(-0.5));
    Ok(RogozinReport {
        lhs,
        rhs,
        ratio: rhs.map(|r| lhs / r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{SeededEnvironment, TableEnvironment};

    #[test]
    fn trivial_partitions() {
        let law = DisorderLaw::symmetric_two_point();
        let env = SeededEnvironment::new(3, law);
        assert_eq!(enumerate_partition(2, 0, &[0, 0], &env, 1.0, &law, None, None).unwrap(), 1.0);
        assert_eq!(enumerate_partition(2, 4, &[0, 0], &env, 0.0, &law, None, None).unwrap(), 1.0);
    }

    #[test]
    fn hand_checked_four_paths() {
        // omega(1, +1) = 1, omega(1, -1) = -1, omega(2, .) = 0, beta = 1.
        let law = DisorderLaw::symmetric_two_point();
        let mut env = TableEnvironment::new(law, 0.0);
        env.set(1, &[1], 1.0).set(1, &[-1], -1.0);
        let lam = 1f64.cosh().ln();
        // Two paths through +1 carry e^{1 - 2 lam}, two through -1 carry e^{-1 - 2 lam}.
        let expected = (2.0 * (1.0 - 2.0 * lam).exp() + 2.0 * (-1.0 - 2.0 * lam).exp()) / 4.0;
        let got = enumerate_partition(1, 2, &[0], &env, 1.0, &law, None, None).unwrap();
        assert!((got - expected).abs() < 1e-15);
        // = cosh(1) e^{-2 lam} = 1 / cosh(1).
        assert!((got - 1.0 / 1f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn guard_trips() {
        let law = DisorderLaw::symmetric_two_point();
        let env = SeededEnvironment::new(3, law);
        let e = enumerate_partition(3, 10, &[0, 0, 0], &env, 1.0, &law, None, None);
        assert!(matches!(e, Err(Error::Capacity { .. })));
        assert!(matches!(enumerate_moments(2, 6, 1.0, &law, 2), Err(Error::Capacity { .. })));
    }

    #[test]
    fn first_moment_is_one() {
        let law = DisorderLaw::UniformInterval { a: -1.0, b: 2.0 };
        assert_eq!(enumerate_moments(2, 5, 0.7, &law, 1).unwrap(), 1.0);
        assert_eq!(enumerate_moments(1, 4, 0.0, &law, 3).unwrap(), 1.0);
    }

    #[test]
    fn second_moment_one_step() {
        let law = DisorderLaw::symmetric_two_point();
        let beta = 0.8;
        let c1 = law.compensator_c1(beta);
        for d in 1..=3 {
            let e = enumerate_moments(d, 1, beta, &law, 2).unwrap();
            let expected = 1.0 + c1 / (2 * d) as f64;
            assert!((e - expected).abs() < 1e-14, "d={d}");
        }
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(concentration_function(&[2.0; 5], 0.0).unwrap(), 1.0);
        let distinct: Vec<f64> = (1..=50).map(f64::from).collect();
        assert_eq!(concentration_function(&distinct, 0.0).unwrap(), 1.0 / 50.0);
        assert_eq!(concentration_function(&distinct, f64::INFINITY).unwrap(), 1.0);
        let u: Vec<f64> = (0..100_000)
            .map(|i| crate::rng::CounterStream::new(1, 0).at(i))
            .collect();
        let q = concentration_function(&u, 0.1).unwrap();
        assert!((q - 0.1).abs() < 0.01, "{q}");
    }

    #[test]
    fn concentration_shift_invariant_and_monotone() {
        let s: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 * 0.13).collect();
        let shifted: Vec<f64> = s.iter().map(|v| v + 1024.0).collect();
        let mut prev = 0.0;
        for &l in &[0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let a = concentration_function(&s, l).unwrap();
            assert_eq!(a, concentration_function(&shifted, l).unwrap());
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn rogozin_degenerate_flagged() {
        let r = rogozin_diagnostic(&[vec![1.0; 10]], 0.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert!(r.rhs.is_none() && r.ratio.is_none());
    }
}
