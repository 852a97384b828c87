//! Oracle and identity gate.

use polymer_core::env::{site_uniform, DisorderLaw, SeededEnvironment};
use polymer_core::lattice::{backward_field, point_partition, restricted_partition, PolymerConfig};
use polymer_core::localization::{overlap_trace, stochastic_integral};
use polymer_core::martingale::martingale_trace;
use polymer_core::moments::{exact_kth_moment, exact_second_moment};
use polymer_core::oracle::{enumerate_backward, enumerate_moments, enumerate_partition};
use polymer_core::rng::{replica_seed, CounterStream};
use polymer_core::TestFunction;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{fmt_f64, Artifacts};
use crate::config::ExperimentConfig;
use crate::error::CliError;

const ORACLE_TOLERANCE: f64 = 1e-12;

/// One self-contained check; serialized on failure so it can be replayed with `--case`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VerifyCase {
    /// Forward, backward and restricted DP against path enumeration.
    Oracle {
        d: usize,
        n: i64,
        beta: f64,
        law: DisorderLaw,
        start: Vec<i64>,
        t: i64,
        s: i64,
        env_seed: u64,
        mask_seed: u64,
        /// Sites with `site_uniform(mask_seed, t, x) < cut` are excluded.
        cut: f64,
    },
    /// Exact `E[W_n^k]` against enumeration of `k`-tuples of paths.
    Moment { d: usize, n: i64, beta: f64, law: DisorderLaw, k: usize },
    /// Both sides of the one-step increment identity of `M_{n,k}`.
    Increment {
        d: usize,
        n: i64,
        beta: f64,
        law: DisorderLaw,
        f: TestFunction,
        env_seed: u64,
    },
    /// Overlap sandwich and predictable variation identity of `(H . W)`.
    Localization { d: usize, n: i64, beta: f64, law: DisorderLaw, env_seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub case: usize,
    pub suite: &'static str,
    pub check: &'static str,
    /// Relative error, residual or violation count.
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

impl VerifyCase {
    fn suite(&self) -> &'static str {
        match self {
            VerifyCase::Oracle { .. } => "oracle",
            VerifyCase::Moment { .. } => "moment",
            VerifyCase::Increment { .. } => "increment",
            VerifyCase::Localization { .. } => "localization",
        }
    }

    /// `(check, value, tolerance)` triples.
    pub fn run(&self, tolerance: f64) -> Vec<(&'static str, f64, f64)> {
        match self.try_run(tolerance) {
            Ok(rows) => rows,
            Err(_) => vec![("error", f64::INFINITY, 0.0)],
        }
    }

    fn try_run(&self, tolerance: f64) -> polymer_core::Result<Vec<(&'static str, f64, f64)>> {
        match self {
            VerifyCase::Oracle {
                d,
                n,
                beta,
                law,
                start,
                t,
                s,
                env_seed,
                mask_seed,
                cut,
            } => {
                let (d, n, beta) = (*d, *n, *beta);
                let env = SeededEnvironment::new(*env_seed, *law);
                let cfg = PolymerConfig::new(d, n, beta, *law);
                let forward = rel_err(
                    point_partition(&cfg, &env, start, n)?,
                    enumerate_partition(d, n, start, &env, beta, law, None, None)?,
                );
                let g = |y: &[i64]| 1.0 + 0.25 * y.iter().map(|&c| c as f64).sum::<f64>().sin();
                let bcfg = PolymerConfig::new(d, *t, beta, *law);
                let backward = rel_err(
                    backward_field(&bcfg, &env, *t, start, *s, Some(&g))?,
                    enumerate_backward(d, *t, start, *s, &env, beta, law, Some(&g))?,
                );
                let (key, cut) = (*mask_seed, *cut);
                let admissible = move |t: i64, x: &[i64]| t == 0 || site_uniform(key, t, x) >= cut;
                let restricted = rel_err(
                    restricted_partition(&cfg, &env, start, &admissible)?,
                    enumerate_partition(d, n, start, &env, beta, law, Some(&admissible), None)?,
                );
                Ok(vec![
                    ("forward", forward, ORACLE_TOLERANCE),
                    ("backward", backward, ORACLE_TOLERANCE),
                    ("restricted", restricted, ORACLE_TOLERANCE),
                ])
            }
            VerifyCase::Moment { d, n, beta, law, k } => {
                let exact = if *k == 2 {
                    exact_second_moment(*d, *n, *beta, law)?
                } else {
                    exact_kth_moment(*d, *n, *beta, law, *k)?
                };
                let brute = enumerate_moments(*d, *n, *beta, law, *k)?;
                Ok(vec![("moment", rel_err(exact, brute), tolerance)])
            }
            VerifyCase::Increment {
                d,
                n,
                beta,
                law,
                f,
                env_seed,
            } => {
                let env = SeededEnvironment::new(*env_seed, *law);
                let cfg = PolymerConfig::new(*d, *n, *beta, *law);
                let tr = martingale_trace(f, &cfg, &env, *n)?;
                let qv_monotone = tr.qv.windows(2).filter(|w| w[1] < w[0]).count() + usize::from(tr.qv[0] != 0.0);
                Ok(vec![
                    ("increment-identity", tr.max_residual(), tolerance),
                    ("qv-monotone", qv_monotone as f64, 0.0),
                ])
            }
            VerifyCase::Localization { d, n, beta, law, env_seed } => {
                let env = SeededEnvironment::new(*env_seed, *law);
                let cfg = PolymerConfig::new(*d, *n, *beta, *law);
                let ov = overlap_trace(&cfg, &env, *n)?;
                let mut rows = vec![("sandwich", ov.sandwich_violations(*d).len() as f64, 0.0)];
                if law.upper_bound().is_some() {
                    let si = stochastic_integral(&cfg, &env, *n)?;
                    let q = si.qv_residuals.iter().copied().fold(0.0, f64::max);
                    rows.push(("qv-identity", q, tolerance));
                }
                Ok(rows)
            }
        }
    }
}

/// The default case list derived from the config.
pub fn cases(config: &ExperimentConfig) -> Vec<VerifyCase> {
    let mut out = Vec::new();
    let law = config.law;
    for i in 0..config.verify.oracle_cases {
        let mut s = CounterStream::new(config.seed, i);
        let d = 1 + (s.next_f64() * 2.0) as usize;
        let n = (s.next_f64() * 9.0) as i64;
        let beta = 2.0 * s.next_f64();
        let case_law = if i % 2 == 0 {
            let lo = -0.5 - s.next_f64();
            DisorderLaw::TwoPoint {
                p: 0.05 + 0.9 * s.next_f64(),
                lo,
                hi: lo + 0.5 + 1.5 * s.next_f64(),
            }
        } else {
            let a = -1.0 - s.next_f64();
            DisorderLaw::UniformInterval {
                a,
                b: a + 0.5 + 2.0 * s.next_f64(),
            }
        };
        let start = (0..d).map(|_| (s.next_f64() * 7.0) as i64 - 3).collect();
        let t = (s.next_f64() * (n + 1) as f64) as i64;
        let back_s = (s.next_f64() * (t + 1) as f64) as i64;
        out.push(VerifyCase::Oracle {
            d,
            n,
            beta,
            law: case_law,
            start,
            t,
            s: back_s,
            env_seed: replica_seed(config.seed, i),
            mask_seed: replica_seed(config.seed ^ 0x5A5A, i),
            cut: 0.3 * s.next_f64(),
        });
    }
    for d in 1..=2usize {
        for n in [1i64, 3, 5] {
            for beta in [0.3, 1.0] {
                out.push(VerifyCase::Moment { d, n, beta, law, k: 2 });
            }
        }
    }
    for n in [2i64, 4] {
        out.push(VerifyCase::Moment {
            d: 1,
            n,
            beta: 0.7,
            law,
            k: 3,
        });
    }
    for d in 1..=3usize {
        for beta in [0.4, 1.2] {
            for r in 0..config.verify.identity_replicas {
                let env_seed = replica_seed(config.seed, 1000 * d as u64 + r);
                out.push(VerifyCase::Increment {
                    d,
                    n: 16,
                    beta,
                    law,
                    f: config.test_function.clone(),
                    env_seed,
                });
                out.push(VerifyCase::Localization {
                    d,
                    n: 32,
                    beta,
                    law,
                    env_seed,
                });
            }
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct SuiteSummary {
    suite: &'static str,
    checks: usize,
    failures: usize,
    worst: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    pass: bool,
    cases: usize,
    suites: Vec<SuiteSummary>,
}

pub fn run(config: &ExperimentConfig, cases: Vec<VerifyCase>, art: &mut Artifacts) -> Result<(), CliError> {
    let tol = config.verify.tolerance;
    let results: Vec<Vec<(&'static str, f64, f64)>> = cases.par_iter().map(|c| c.run(tol)).collect();
    let mut rows = Vec::new();
    let mut failing = Vec::new();
    for (i, (case, res)) in cases.iter().zip(&results).enumerate() {
        let mut failed = false;
        for &(check, value, tolerance) in res {
            let pass = value <= tolerance;
            failed |= !pass;
            rows.push(CheckRow {
                case: i,
                suite: case.suite(),
                check,
                value,
                tolerance,
                pass,
            });
        }
        if failed {
            failing.push(case.clone());
        }
    }
    let mut suites: Vec<SuiteSummary> = Vec::new();
    for r in &rows {
        match suites.iter_mut().find(|s| s.suite == r.suite) {
            Some(s) => {
                s.checks += 1;
                s.failures += usize::from(!r.pass);
                s.worst = s.worst.max(r.value);
            }
            None => suites.push(SuiteSummary {
                suite: r.suite,
                checks: 1,
                failures: usize::from(!r.pass),
                worst: r.value,
            }),
        }
    }
    art.csv(
        "verify.csv",
        &["case", "suite", "check", "value", "tolerance", "pass"],
        rows.iter()
            .map(|r| {
                vec![
                    r.case.to_string(),
                    r.suite.to_string(),
                    r.check.to_string(),
                    fmt_f64(r.value),
                    fmt_f64(r.tolerance),
                    r.pass.to_string(),
                ]
            })
            .collect(),
    )?;
    let summary = Summary {
        pass: failing.is_empty(),
        cases: cases.len(),
        suites,
    };
    art.write_json("summary.json", &summary)?;
    if !failing.is_empty() {
        art.write_json("failures.json", &failing)?;
        return Err(CliError::Failed(format!(
            "{} of {} cases failed; replay with `polymer verify --case {}`",
            failing.len(),
            cases.len(),
            art.dir().join("failures.json").display()
        )));
    }
    Ok(())
}
