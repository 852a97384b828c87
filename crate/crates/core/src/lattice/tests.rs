use super::*;
use crate::env::{SeededEnvironment, TableEnvironment, TimeReversed};
use crate::oracle;
use crate::rng::{replica_seed, CounterStream};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn beta_zero_point_seed_gives_one() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(1, law);
    for d in 1..=2 {
        let cfg = PolymerConfig::new(d, 12, 0.0, law);
        let run = forward_field(&cfg, &env, &SeedProfile::point(&vec![0; d]), 12, false).unwrap();
        for t in 0..=12 {
            assert_eq!(run.total(t), 1.0, "d={d} t={t}");
        }
    }
    let cfg = PolymerConfig::new(3, 12, 0.0, law);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0, 0, 0]), 12, false).unwrap();
    for t in 0..=12 {
        assert!((run.total(t) - 1.0).abs() < 1e-14, "{}", run.total(t));
    }
}

#[test]
fn forward_matches_oracle_d1_n2() {
    let law = DisorderLaw::symmetric_two_point();
    let mut env = TableEnvironment::new(law, 0.0);
    env.set(1, &[1], 1.0).set(1, &[-1], -1.0).set(2, &[2], 1.0).set(2, &[0], -1.0);
    let cfg = PolymerConfig::new(1, 2, 1.3, law);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0]), 2, false).unwrap();
    let o = oracle::enumerate_partition(1, 2, &[0], &env, 1.3, &law, None, None).unwrap();
    assert!(rel(run.total(2), o) < 1e-14);
}

#[test]
fn exact_policy_rejects_small_box() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(1, law);
    let cfg = PolymerConfig::new(2, 5, 0.5, law).with_radius(4);
    let e = forward_field(&cfg, &env, &SeedProfile::point(&[0, 0]), 5, false);
    assert!(matches!(e, Err(Error::BoxOverflow { needed: 5, radius: 4 })));
}

#[test]
fn truncation_records_leak() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(1, law);
    let cfg = PolymerConfig::new(1, 6, 0.0, law).truncated(2);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0]), 6, false).unwrap();
    // beta = 0: retained + leaked mass is conserved.
    assert!((run.total(6) + run.leaked_mass - 1.0).abs() < 1e-15);
    assert!(run.leaked_mass > 0.0);
    let exact = forward_field(&PolymerConfig::new(1, 6, 0.0, law), &env, &SeedProfile::point(&[0]), 6, false).unwrap();
    assert_eq!(exact.leaked_mass, 0.0);
}

#[test]
fn restricted_examples() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(8, law);
    let cfg = PolymerConfig::new(1, 1, 0.7, law);
    let stay = |_: i64, x: &[i64]| x[0] == 0;
    assert_eq!(restricted_partition(&cfg, &env, &[0], &stay).unwrap(), 0.0);

    let cfg = PolymerConfig::new(2, 6, 0.7, law);
    let all = |_: i64, _: &[i64]| true;
    let full = forward_field(&cfg, &env, &SeedProfile::point(&[0, 0]), 6, false).unwrap();
    assert_eq!(restricted_partition(&cfg, &env, &[0, 0], &all).unwrap(), full.total(6));

    let cfg = PolymerConfig::new(1, 3, 0.9, law);
    let band = |_: i64, x: &[i64]| x[0].abs() <= 1;
    let r = restricted_partition(&cfg, &env, &[0], &band).unwrap();
    let o = oracle::enumerate_partition(1, 3, &[0], &env, 0.9, &law, Some(&band), None).unwrap();
    assert!(rel(r, o) < 1e-14);
    let full = forward_field(&cfg, &env, &SeedProfile::point(&[0]), 3, false).unwrap();
    assert!(r <= full.total(3));
}

#[test]
fn backward_examples() {
    let law = DisorderLaw::UniformInterval { a: -1.0, b: 1.0 };
    let env = SeededEnvironment::new(4, law);
    let cfg = PolymerConfig::new(1, 3, 1.1, law);
    assert_eq!(backward_field(&cfg, &env, 3, &[1], 3, None).unwrap(), 1.0);
    assert!(matches!(backward_field(&cfg, &env, 3, &[1], 4, None), Err(Error::Domain(_))));
    let b = backward_field(&cfg, &env, 3, &[1], 1, None).unwrap();
    let o = oracle::enumerate_backward(1, 3, &[1], 1, &env, 1.1, &law, None).unwrap();
    assert!(rel(b, o) < 1e-14);
    // beta = 0 with f = 1 gives 1.
    let cfg0 = PolymerConfig::new(2, 5, 0.0, law);
    let one = |_: &[i64]| 1.0;
    let b = backward_field(&cfg0, &env, 5, &[1, 0], 1, Some(&one)).unwrap();
    assert!((b - 1.0).abs() < 1e-15);
}

#[test]
fn backward_is_forward_on_reversed_environment() {
    let law = DisorderLaw::TwoPoint { p: 0.3, lo: -1.0, hi: 2.0 };
    let env = SeededEnvironment::new(17, law);
    let mut draws = CounterStream::new(99, 0);
    for _ in 0..100 {
        let d = 1 + (draws.next_f64() * 3.0) as usize;
        let t = 1 + (draws.next_f64() * 12.0) as i64;
        let s = 1 + (draws.next_f64() * t as f64) as i64;
        let s = s.min(t);
        let x: Vec<i64> = (0..d).map(|_| (draws.next_f64() * 9.0) as i64 - 4).collect();
        let cfg = PolymerConfig::new(d, t, 0.8, law);
        let b = backward_field(&cfg, &env, t, &x, s, None).unwrap();
        let rev = TimeReversed { inner: &env, horizon: t };
        let fcfg = PolymerConfig::new(d, t - s, 0.8, law);
        let f = point_partition(&fcfg, &rev, &x, t - s).unwrap();
        assert!(rel(b, f) < 1e-12, "t={t} s={s} x={x:?}: {b} vs {f}");
    }
}

#[test]
fn sweep_spot_checks_against_backward_field() {
    let law = DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 };
    let env = SeededEnvironment::new(5, law);
    let n = 9;
    let f = TestFunction::Tent { half_width: 1.0 };
    let cfg = PolymerConfig::new(2, n, 0.6, law).with_radius(n + 3);
    let sweep = backward_sweep(&cfg, &env, &f, n).unwrap();
    let sq = (n as f64).sqrt();
    let g = |y: &[i64]| f.eval(&[y[0] as f64 / sq, y[1] as f64 / sq]);
    let mut draws = CounterStream::new(5, 1);
    for _ in 0..20 {
        let t = 1 + (draws.next_f64() * n as f64) as i64;
        let x = [(draws.next_f64() * 9.0) as i64 - 4, (draws.next_f64() * 9.0) as i64 - 4];
        let u = sweep[(t - 1) as usize].get(&x);
        let b = backward_field(&cfg, &env, t, &x, 1, Some(&g)).unwrap();
        if b == 0.0 {
            assert_eq!(u, 0.0);
        } else {
            assert!(rel(u, b) < 1e-12, "t={t} x={x:?}: {u} vs {b}");
        }
    }
}

#[test]
fn sweep_first_slice_is_environment_free() {
    let law = DisorderLaw::symmetric_two_point();
    let f = TestFunction::IndicatorBox { half_width: 1.0 };
    let n = 4;
    let cfg = PolymerConfig::new(1, n, 1.5, law).with_radius(n + 2);
    let a = backward_sweep(&cfg, &SeededEnvironment::new(1, law), &f, n).unwrap();
    let b = backward_sweep(&cfg, &SeededEnvironment::new(2, law), &f, n).unwrap();
    assert_eq!(a[0].values, b[0].values);
    // f(y/2) = 1 for |y| <= 2: at x = 3 one neighbor of two is inside.
    assert_eq!(a[0].get(&[3]), 0.5);
    assert_eq!(a[0].get(&[0]), 1.0);
}

#[test]
fn endpoint_measure_examples() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(3, law);
    let mu = endpoint_measure(&PolymerConfig::new(1, 1, 0.0, law), &env, 1).unwrap();
    assert_eq!(mu.get(&[1]), 0.5);
    assert_eq!(mu.get(&[-1]), 0.5);
    let cfg = PolymerConfig::new(2, 7, 1.2, law);
    let mu = endpoint_measure(&cfg, &env, 7).unwrap();
    let total: f64 = mu.values.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (i, v) in mu.values.iter().enumerate() {
        let x = mu.site(i);
        if (x[0] + x[1]).rem_euclid(2) != 1 {
            assert_eq!(*v, 0.0);
        }
    }
    let mut tenv = TableEnvironment::new(law, -1.0);
    tenv.set(1, &[1], 1.0).set(2, &[2], 1.0);
    let mu = endpoint_measure(&PolymerConfig::new(1, 2, 0.9, law), &tenv, 2).unwrap();
    let w = oracle::enumerate_partition(1, 2, &[0], &tenv, 0.9, &law, None, None).unwrap();
    for e in [-2i64, 0, 2] {
        let z = oracle::enumerate_partition(1, 2, &[0], &tenv, 0.9, &law, None, Some(&[e])).unwrap();
        assert!(rel(mu.get(&[e]), z / w) < 1e-14);
    }
}

#[test]
fn forced_renormalization_changes_nothing() {
    let law = DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 };
    let env = SeededEnvironment::new(11, law);
    let cfg = PolymerConfig::new(2, 20, 2.5, law);
    let mut forced = cfg.clone();
    forced.renormalize = Renormalize::EveryStep;
    let seed = SeedProfile::point(&[0, 0]);
    let a = forward_field(&cfg, &env, &seed, 20, false).unwrap();
    let b = forward_field(&forced, &env, &seed, 20, false).unwrap();
    for t in 0..=20 {
        assert!(rel(a.totals[t].value(), b.totals[t].value()) < 1e-12);
    }
}

#[test]
fn renormalization_keeps_values_in_range() {
    let law = DisorderLaw::Gaussian { mean: 0.0, sd: 1.0 };
    let env = SeededEnvironment::new(12, law);
    let cfg = PolymerConfig::new(1, 400, 6.0, law);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0]), 400, false).unwrap();
    let max = run.last.values.iter().fold(0.0f64, |m, v| m.max(*v));
    assert!((1e-150..=1e150).contains(&max));
    assert!(run.totals[400].ln().is_finite());
    assert!(run.last.log_scale.abs() > 100.0);
}

/// Averaging the last step's weight analytically over both two-point branches
/// reproduces the previous total: `E[W_{n+1} | F_n] = W_n`.
#[test]
fn martingale_step_exact_for_two_point() {
    let (p, lo, hi) = (0.3, -1.0, 2.0);
    let law = DisorderLaw::TwoPoint { p, lo, hi };
    let beta = 0.7;
    let lam = law.log_mgf(beta);
    let env = SeededEnvironment::new(21, law);
    let n = 6;
    let cfg = PolymerConfig::new(2, n, beta, law);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0, 0]), n, true).unwrap();
    let slices = run.slices.clone().unwrap();
    let slice = &slices[n as usize];
    let mut avg = 0.0;
    // sum_x Utilde_{n+1}(x) (p e^{beta hi - lam} + (1-p) e^{beta lo - lam}) with Utilde from U_n.
    let wider = Lattice::new(&[0, 0], n + 1);
    for i in 0..wider.cube_len() {
        let x = wider.cube_site(i);
        let mut pre = 0.0;
        for k in 0..2 {
            for s in [-1, 1] {
                let mut y = x.clone();
                y[k] += s;
                pre += slice.get(&y) / 4.0;
            }
        }
        avg += pre * (p * (beta * hi - lam).exp() + (1.0 - p) * (beta * lo - lam).exp());
    }
    let wn = run.total(n as usize);
    assert!(rel(avg, wn) < 1e-12, "{avg} vs {wn}");
}

#[test]
fn e_w_is_one_mc() {
    let law = DisorderLaw::symmetric_two_point();
    let beta = 0.3;
    let reps = 10_000u64;
    let cfg = PolymerConfig::new(3, 16, beta, law);
    let vals: Vec<f64> = (0..reps)
        .map(|i| {
            let env = SeededEnvironment::new(replica_seed(40, i), law);
            point_partition(&cfg, &env, &[0, 0, 0], 16).unwrap()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * se, "mean {mean} se {se}");
}

#[test]
fn dump_round_trip() {
    let law = DisorderLaw::symmetric_two_point();
    let env = SeededEnvironment::new(2, law);
    let cfg = PolymerConfig::new(2, 4, 0.5, law);
    let run = forward_field(&cfg, &env, &SeedProfile::point(&[0, 0]), 4, true).unwrap();
    let slices = run.slices.unwrap();
    let mut buf = Vec::new();
    dump::write_slices(&mut buf, &slices).unwrap();
    let back = dump::read_slices(buf.as_slice()).unwrap();
    assert_eq!(back, slices);
    buf[0] = b'X';
    assert!(dump::read_slices(buf.as_slice()).is_err());
}
