use num_complex::Complex64;
use proptest::prelude::*;
use sil_core::arith::*;

fn trial_factor(mut n: u64) -> Vec<(u64, u8)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut e = 0;
        while n.is_multiple_of(p) {
            n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

fn pairs(fs: &[PrimePower]) -> Vec<(u64, u8)> {
    fs.iter().map(|pp| (pp.p, pp.e)).collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn window(start: u64, len: u64) -> FactorWindow {
    factor_window(start, len, &table_for(start + len)).unwrap()
}

#[test]
fn prime_count_matches_trial_division() {
    let table = sieve_primes(1_000_000).unwrap();
    let oracle = (2..=1_000_000u64).filter(|&n| trial_factor(n) == [(n, 1)]).count();
    assert_eq!(table.len(), oracle);
    assert!(table.primes().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(table.primes().last(), Some(&999_983));
}

#[test]
fn small_windows() {
    let fw = window(1_000_000, 1);
    assert_eq!(pairs(fw.at(0)), vec![(2, 6), (5, 6)]);
    let fw = window(10, 3);
    assert_eq!(format_factorization(fw.at(2)), "2^2*3^1");
}

#[test]
fn reconstruction_near_1e9() {
    let fw = window(1_000_000_000, 10_000);
    for (n, fs) in fw.iter() {
        let prod: u64 = fs.iter().map(|pp| pp.p.pow(pp.e as u32)).product();
        assert_eq!(prod, n);
        assert!(fs.windows(2).all(|w| w[0].p < w[1].p));
        assert!(fs.iter().all(|pp| pp.e >= 1));
    }
    for n in (1_000_000_000..1_000_010_000).step_by(997) {
        assert_eq!(pairs(fw.factors_of(n).unwrap()), trial_factor(n), "n = {n}");
    }
}

#[test]
fn insufficient_table() {
    let aux = sieve_primes(10).unwrap();
    assert!(factor_window(1_000, 10, &aux).is_err());
}

#[test]
fn builtin_values() {
    let fw = window(2, 100);
    let at = |f: &str, n: u64| eval_fn(&MultFn::parse(f).unwrap(), n, &fw).unwrap();
    assert_eq!(at("moebius", 4).re, 0.0);
    assert_eq!(at("moebius", 6).re, 1.0);
    assert_eq!(at("moebius", 30).re, -1.0);
    for (n, v) in [(5, 1.0), (3, 0.0), (9, 1.0), (45, 1.0), (21, 0.0)] {
        assert_eq!(at("two_squares", n).re, v, "two_squares({n})");
    }
    assert_eq!(at("omega_geom(0.5)", 12).re, 0.125);
    assert_eq!(at("liouville", 12).re, -1.0);
    assert_eq!(at("char_mod4", 7).re, -1.0);
    let z = at("nit(2.5)", 77);
    assert!((z - Complex64::from_polar(1.0, 2.5 * 77f64.ln())).norm() < 1e-12);
    assert!(MultFn::parse("smooth_at(0.5,100)").unwrap().value(11, 1).re == 0.0);
    assert!(MultFn::parse("smooth_at(0.5,100)").unwrap().value(7, 3).re == 1.0);
}

#[test]
fn window_eval_matches_eval_fn() {
    let fw = window(10, 3);
    let mu = MultFn::parse("moebius").unwrap();
    let v: Vec<f64> = window_eval(&mu, &fw).iter().map(|z| z.re).collect();
    assert_eq!(v, vec![1.0, -1.0, 0.0]);

    let fw = window(500_000, 20_000);
    for spec in ["one", "moebius", "two_squares", "omega_geom(0.3)", "nit(7)"] {
        let f = MultFn::parse(spec).unwrap();
        let all = window_eval(&f, &fw);
        for i in (0..fw.len()).step_by(20) {
            let n = fw.start() + i as u64;
            assert_eq!(all[i], eval_fn(&f, n, &fw).unwrap(), "{spec} at {n}");
        }
    }
    assert!(eval_fn(&mu, 10, &fw).is_err());
}

/// Values straight from a trial-division factorisation.
fn oracle_value(f: &MultFn, n: u64) -> Complex64 {
    trial_factor(n).iter().map(|&(p, e)| f.value(p, e as u32)).product()
}

#[test]
fn long_mean_direct() {
    let one = MultFn::parse("one").unwrap();
    assert!((long_mean(&one, 1000, 0.0).unwrap().re - 1.0).abs() < 1e-12);
    let x = 1_000_000;
    let mu = MultFn::parse("moebius").unwrap();
    let m = long_mean(&mu, x, 0.0).unwrap();
    assert!(m.norm() < 0.01);
    let ts = MultFn::parse("two_squares").unwrap();
    let fw = window(x + 1, x);
    let direct = window_eval(&ts, &fw).iter().map(|z| z.re).sum::<f64>() / x as f64;
    let m = long_mean(&ts, x, 0.0).unwrap();
    assert!((m.re - direct).abs() < 1e-12 && m.re > 0.0);
}

#[test]
fn grkoma_cap() {
    // (1/X) Σ_{X<n≤2X} f(n) ≤ 10 ∏_{p≤X}(1 + (f(p) − 1)/p)
    for spec in ["one", "two_squares", "omega_geom(0.5)", "smooth_at(0.5,100000)"] {
        let f = MultFn::parse(spec).unwrap();
        for x in [10_000u64, 100_000, 1_000_000] {
            let mean = long_mean(&f, x, 0.0).unwrap().re;
            let primes = sieve_primes(x).unwrap();
            let prod: f64 = primes.primes().iter().map(|&p| 1.0 + (f.value(p, 1).re - 1.0) / p as f64).product();
            assert!(mean <= 10.0 * prod, "{spec} at {x}: {mean} vs {prod}");
        }
    }
}

#[test]
fn shiu_ratio_stable() {
    for spec in ["two_squares", "omega_geom(0.5)"] {
        let f = MultFn::parse(spec).unwrap();
        let ratios: Vec<f64> = [100_000u64, 1_000_000, 10_000_000]
            .iter()
            .map(|&x| {
                let y = (x as f64).powf(0.6) as u64;
                let fw = window(x + 1, y);
                let s: f64 = window_eval(&f, &fw).iter().map(|z| z.norm()).sum();
                let prod: f64 = sieve_primes(x)
                    .unwrap()
                    .primes()
                    .iter()
                    .map(|&p| 1.0 + (f.value(p, 1).norm() - 1.0) / p as f64)
                    .product();
                s / (y as f64 * prod)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 3.0, "{spec}: {ratios:?}");
    }
}

#[test]
fn almost_real_budget() {
    let primes = sieve_primes(100_000).unwrap();
    for spec in ["one", "moebius", "two_squares", "omega_geom(0.5)", "char_mod4"] {
        let f = MultFn::parse(spec).unwrap();
        assert!(f.almost_real());
        assert_eq!(non_real_mass(&f, primes.primes()), 0.0);
    }
    let f = MultFn::parse("nit(1)").unwrap();
    assert!(!f.almost_real());
    assert!(non_real_mass(&f, primes.primes()) > 1.0);
}

fn big_window() -> &'static FactorWindow {
    static FW: std::sync::OnceLock<FactorWindow> = std::sync::OnceLock::new();
    FW.get_or_init(|| window(2, 3000 * 3000))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiplicative_on_coprime_pairs(m in 2u64..3000, n in 2u64..3000, tau in -20.0f64..20.0) {
        prop_assume!(gcd(m, n) == 1);
        let fw = big_window();
        for f in [MultFn::parse("moebius").unwrap(), MultFn::parse("two_squares").unwrap(),
                  MultFn::parse("omega_geom(0.25)").unwrap(), MultFn::parse(&format!("nit({tau})")).unwrap()] {
            let lhs = eval_fn(&f, m * n, fw).unwrap();
            let rhs = eval_fn(&f, m, fw).unwrap() * eval_fn(&f, n, fw).unwrap();
            if f.is_exact() {
                prop_assert_eq!(lhs, rhs);
            } else {
                prop_assert!((lhs - rhs).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn windows_match_trial_division(start in 2u64..5_000_000, len in 1u64..300) {
        let fw = window(start, len);
        for (n, fs) in fw.iter() {
            prop_assert_eq!(pairs(fs), trial_factor(n));
        }
    }

    #[test]
    fn unit_disc_and_oracle(n in 2u64..100_000, eps in 0.0f64..=1.0, tau in -50.0f64..50.0) {
        let fw = window(n, 1);
        for f in [MultFn::parse(&format!("omega_geom({eps})")).unwrap(), MultFn::parse(&format!("nit({tau})")).unwrap(),
                  MultFn::parse("liouville").unwrap(), MultFn::parse("char_mod4").unwrap()] {
            let v = eval_fn(&f, n, &fw).unwrap();
            prop_assert!(v.norm() <= 1.0 + 1e-12);
            prop_assert!((v - oracle_value(&f, n)).norm() <= 1e-12);
        }
    }
}
