//! Acceptance checks, one line per criterion. Runs without the test harness so
//! the lines always reach stdout; exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_complex::Complex64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use sil_core::arith::*;
use sil_core::dirpoly::buchstab_ramare_split;
use sil_core::intervals::*;
use sil_core::lab::*;
use sil_core::normform::*;
use sil_core::pretence::*;
use sil_core::sieve::*;

type Check = Result<String, String>;

fn require(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mf(spec: &str) -> MultFn {
    MultFn::parse(spec).unwrap()
}

fn trial_factor(mut n: u64) -> Vec<(u64, u32)> {
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

fn mu(n: u64) -> i64 {
    let fs = trial_factor(n);
    if fs.iter().any(|f| f.1 > 1) {
        0
    } else if fs.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

fn primes_upto(x: u64) -> Vec<u64> {
    sieve_primes(x).unwrap().primes().to_vec()
}

/// Values of `x² + c·y²` up to `limit`.
fn form_values(c: u64, limit: u64) -> HashSet<u64> {
    let mut out = HashSet::new();
    let mut y = 0;
    while c * y * y <= limit {
        let mut x = 0;
        while x * x + c * y * y <= limit {
            out.insert(x * x + c * y * y);
            x += 1;
        }
        y += 1;
    }
    out
}

// ---------------------------------------------------------------------------

fn c1_majorant() -> Check {
    let n_max = 1_000_000;
    let plans = [brun_hooley_plan(1_000_000, 3.0).unwrap(), brun_hooley_plan_with(1_000_000_000, 1.0, Some(2)).unwrap()];
    let mut total = 0;
    let mut weights = Vec::new();
    for plan in &plans {
        for spec in ["two_squares", "omega_geom(0.5)", "omega_geom(0)"] {
            let g = mf(spec);
            let w = lambda_weights(plan, &g).map_err(|e| e.to_string())?;
            weights.push(w.len());
            total += majorant_violations(&w, &g, n_max).map_err(|e| e.to_string())?;
        }
    }
    require(total == 0, format!("violations = {total} over n ≤ {n_max}, weight counts {weights:?}"))
}

fn c2_linear_sieve() -> Check {
    let (d, z, n_max) = (10_000u64, 100u64, 100_000usize);
    let ps = primes_upto(z);
    let s = linear_sieve_support(d, z as f64, &ps).map_err(|e| e.to_string())?;
    let mut sums = vec![0i64; n_max + 1];
    for &m in &s {
        let sign = mu(m);
        for k in (m as usize..=n_max).step_by(m as usize) {
            sums[k] += sign;
        }
    }
    let bad = (1..=n_max).filter(|&n| i64::from(ps.iter().all(|&p| !(n as u64).is_multiple_of(p))) > sums[n]).count();
    let euler_gamma = 0.577_215_664_901_532_9_f64;
    let v: f64 = ps.iter().map(|&p| 1.0 - 1.0 / p as f64).product();
    let sv = (d as f64).ln() / (z as f64).ln();
    let sum = moebius_sum(&s).to_f64();
    let bound = (2.0 * euler_gamma.exp() / sv + 0.25) * v;
    require(bad == 0 && sum <= bound, format!("|S⁺| = {}, upper-bound failures = {bad}, Σμ(d)/d = {sum:.6} ≤ {bound:.6}", s.len()))
}

fn c3_weight_sums() -> Check {
    let x = 1_000_000;
    let plan = brun_hooley_plan(x, 3.0).unwrap();
    let mut held = Vec::new();
    let mut rejected = Vec::new();
    let mut ok = true;
    for spec in [
        "one",
        "moebius",
        "liouville",
        "nit(1)",
        "omega_geom(0.5)",
        "omega_geom(0)",
        "two_squares",
        "smooth_at(0.5,1000000)",
        "char_mod4",
    ] {
        let g = mf(spec);
        match lambda_weights(&plan, &g) {
            Ok(w) => {
                let r = weight_sum_report(&w, &g, x).map_err(|e| e.to_string())?;
                ok &= r.s1_le_b1;
                held.push(format!("{spec}:{}", if r.s1_le_b1 { "ok" } else { "FAIL" }));
            }
            // weights are only defined for g with values in [0, 1] on the primes
            Err(sil_core::Error::Domain(_)) => rejected.push(spec),
            Err(e) => return Err(format!("{spec}: {e}")),
        }
    }
    require(ok, format!("s1 ≤ b1 [{}]; not [0,1]-valued: {}", held.join(" "), rejected.join(" ")))
}

fn c4_ramare() -> Check {
    let fw = factor_window(100_001, 10_000, &table_for(110_001)).unwrap();
    let mut out = Vec::new();
    for spec in ["moebius", "one", "two_squares"] {
        let split = buchstab_ramare_split(&fw, &mf(spec), 10.0, 100.0, 4.0).map_err(|e| e.to_string())?;
        let nonzero = split.reassembly_residual().len();
        let (l, r) = split.identity_at_one();
        if nonzero != 0 || l.reduced() != r.reduced() {
            return Err(format!("{spec}: {nonzero} nonzero residual coefficients"));
        }
        out.push(spec);
    }
    Ok(format!("exact residual 0 for {} on (10⁵, 10⁵+10⁴], (P,Q] = (10,100]", out.join(", ")))
}

fn c5_inclusion_exclusion() -> Check {
    let three = build_system(10_000_000, 0.05, 0.1, 0.1, 1.0, 4.0, 1000.0).map_err(|e| e.to_string())?;
    let four = custom_system(&[(1.5, 5.0), (5.0, 30.0), (30.0, 200.0), (200.0, 5000.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for sys in [&three, &four] {
        for start in [2u64, 1_000_000] {
            let fw = factor_window(start, 10_000, &table_for(start + 10_000)).unwrap();
            let a: Vec<Complex64> =
                (0..fw.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            worst = worst.max(inclusion_exclusion_residual(sys, &fw, &a).map_err(|e| e.to_string())?);
            let exact: Vec<Rat> = fw.iter().map(|(_, fs)| mf("moebius").eval_factors_exact(fs).unwrap()).collect();
            if !inclusion_exclusion_residual_exact(sys, &fw, &exact).map_err(|e| e.to_string())?.is_zero() {
                return Err(format!("exact residual nonzero for {} pairs", sys.pairs.len()));
            }
        }
    }
    require(worst <= 1e-12, format!("exact residual 0; complex residual {worst:.2e} ≤ 1e-12 (3 and 4 pairs)"))
}

fn c6_genus() -> Check {
    let n_max = 100_000;
    let k = define_field(&parse_poly("x^2+5").unwrap()).unwrap();
    let s = genus_split_decomposition(&k).map_err(|e| e.to_string())?;
    let fw = factor_window(2, n_max, &table_for(n_max + 2)).unwrap();
    let vals = form_values(5, n_max);
    let half = Rat::new(1, 2);
    let (mut checked, mut bad) = (0, 0);
    for (n, fs) in fw.iter() {
        if n > n_max || n % 2 == 0 || n % 5 == 0 || fs.iter().any(|pp| pp.e > 1) {
            continue;
        }
        let g = Rat::from_integer(vals.contains(&n) as i128);
        let split = half * (s.f0.eval_factors_exact(fs).unwrap() + s.f1.eval_factors_exact(fs).unwrap());
        checked += 1;
        bad += (split != g) as usize;
    }
    require(bad == 0, format!("{checked} squarefree n ≤ 10⁵ coprime to 10, {bad} mismatches"))
}

fn c7_class_number_one() -> Check {
    let n_max = 10_000;
    let fw = factor_window(2, n_max, &table_for(n_max + 2)).unwrap();
    let gauss = define_field(&parse_poly("x^2+1").unwrap()).unwrap();
    let cubic = define_field(&parse_poly("x^3-2").unwrap()).unwrap();
    let sums = form_values(1, n_max);
    // |N(a + b∛2 + c∛4)| = |a³ + 2b³ + 4c³ − 6abc|
    let mut norms = HashSet::new();
    let b = 40i64;
    for x in -b..=b {
        for y in -b..=b {
            for z in -b..=b {
                let n = (x * x * x + 2 * y * y * y + 4 * z * z * z - 6 * x * y * z).unsigned_abs();
                if n <= n_max {
                    norms.insert(n);
                }
            }
        }
    }
    let mut bad = 0;
    for n in 2..=n_max {
        let dg = ideal_norm_indicator(&gauss, n, &fw).unwrap();
        bad += (dg != sums.contains(&n) || dg != normform_indicator(&gauss, n, &fw).unwrap()) as usize;
        let dc = ideal_norm_indicator(&cubic, n, &fw).unwrap();
        bad += (dc != norms.contains(&n) || dc != normform_indicator(&cubic, n, &fw).unwrap()) as usize;
    }
    require(bad == 0, format!("ℚ(i) and ℚ(∛2) over n ≤ 10⁴: {bad} mismatches against the two oracles"))
}

/// min over `t = k·step ∈ [0, t_max]` of `Σ_p (1 − a_p cos(t log p))/p`, cosines by Chebyshev recurrence.
fn real_grid_min(a: &[(u64, f64)], t_max: f64, step: f64) -> (f64, f64) {
    const L: usize = 8;
    let n = a.len().div_ceil(L) * L;
    let pad = |v: Vec<f64>| -> Vec<f64> { v.into_iter().chain(std::iter::repeat(0.0)).take(n).collect() };
    let base: f64 = a.iter().map(|&(p, _)| 1.0 / p as f64).sum();
    let w = pad(a.iter().map(|&(p, v)| v / p as f64).collect());
    let two_c = pad(a.iter().map(|&(p, _)| 2.0 * (step * (p as f64).ln()).cos()).collect());
    let mut prev: Vec<f64> = two_c.iter().map(|c| c / 2.0).collect();
    let mut cur = vec![1.0; n];
    let mut best = (f64::MAX, 0.0);
    for k in 0..=(t_max / step) as usize {
        let mut acc = [0.0; L];
        for (((w, c), tc), pv) in
            w.chunks_exact(L).zip(cur.chunks_exact_mut(L)).zip(two_c.chunks_exact(L)).zip(prev.chunks_exact_mut(L))
        {
            for j in 0..L {
                acc[j] += w[j] * c[j];
                let next = tc[j] * c[j] - pv[j];
                pv[j] = c[j];
                c[j] = next;
            }
        }
        let d = base - acc.iter().sum::<f64>();
        if d < best.0 {
            best = (d, k as f64 * step);
        }
    }
    best
}

fn c8_pretence() -> Check {
    let x = 1_000_000u64;
    let mut parts = Vec::new();
    let mut ok = true;
    for tau in [0.0, 5.0, 50.0] {
        let s = minimize_pretend(&mf(&format!("nit({tau})")), x, Variant::Dense).map_err(|e| e.to_string())?;
        ok &= (s.t_star - tau).abs() < 1e-3 && s.m_value.abs() < 1e-3;
        parts.push(format!("τ={tau}: t*={:.6} M={:.1e}", s.t_star, s.m_value));
    }
    let g = mf("moebius");
    let s = minimize_pretend(&g, x, Variant::Dense).map_err(|e| e.to_string())?;
    let a: Vec<(u64, f64)> = primes_upto(x).iter().map(|&p| (p, g.value(p, 1).re)).collect();
    let t_max = 1000.0;
    let (oracle, t_oracle) = real_grid_min(&a, t_max, 1.0 / (16.0 * (x as f64).ln()));
    // μ is real, so |t| ≤ 10³ reduces to t ∈ [0, 10³]
    let rel = (s.m_value - oracle).abs() / oracle;
    ok &= s.t_star.abs() <= t_max && rel <= 0.01;
    parts.push(format!(
        "μ: M={:.6} at t*={:.3}, grid oracle {oracle:.6} at {t_oracle:.3}, rel diff {rel:.1e}",
        s.m_value, s.t_star
    ));
    require(ok, parts.join("; "))
}

/// Frozen from the first full run; the band for each series is `[c/√2, c·√2]`.
const GAP_FROZEN: [(&str, f64, [f64; 3]); 3] = [
    ("two_squares", 1.25, [1.11242981672, 1.11599648217, 1.11877213651]),
    ("two_squares", 1.49, [1.26073342604, 1.2696239943, 1.27672022735]),
    ("smooth(0.3)", 1.25, [2.70178440741, 2.79067944045, 2.87847669661]),
];

fn c9_gaps() -> Check {
    let xs = [100_000u64, 1_000_000, 10_000_000];
    let mut ok = true;
    let mut parts = Vec::new();
    let mut reports = Vec::new();
    for spec in ["two_squares", "smooth(0.3)"] {
        let set = GapSet::parse(spec).unwrap();
        let gammas: &[f64] = if spec == "two_squares" { &[1.25, 1.49] } else { &[1.25] };
        for &x in &xs {
            reports.push((spec, x, run_gaps(&set, x, gammas).map_err(|e| e.to_string())?));
        }
    }
    // the smallest scale against membership by brute force
    let direct: Vec<u64> = (100_001..=200_000u64)
        .filter(|&n| trial_factor(n).iter().all(|&(p, e)| p % 4 != 3 || e % 2 == 0))
        .collect();
    let r = &reports[0].2;
    let oracle = gap_moments(&direct, &[1.25])[0] / r.normalizers[0];
    ok &= (oracle - r.ratios[0]).abs() <= 1e-12 * oracle;
    for (spec, gamma, frozen) in GAP_FROZEN {
        let ratios: Vec<f64> = reports
            .iter()
            .filter(|(s, _, _)| *s == spec)
            .map(|(_, _, r)| r.ratios[r.gammas.iter().position(|&g| g == gamma).unwrap()])
            .collect();
        let c = (frozen[0] * frozen[2]).sqrt();
        let (lo, hi) = (c / 2f64.sqrt(), c * 2f64.sqrt());
        let in_band = ratios.iter().all(|&v| v >= lo && v <= hi);
        let regress = ratios.iter().zip(frozen).all(|(v, f)| (v - f).abs() <= 1e-6 * f);
        ok &= in_band && regress;
        parts.push(format!(
            "{spec} γ={gamma}: {} in [{lo:.4}, {hi:.4}]{}",
            ratios.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", "),
            if regress { "" } else { " (drifted from frozen values)" }
        ));
    }
    require(ok, parts.join("; "))
}

fn c10_concentration() -> Check {
    let x = 10_000_000u64;
    let stride = default_stride(x);
    let frac = |h| run_scan(&mf("moebius"), x, h, stride, &[0.1]).map(|r| r.exceptional_fraction[0].1);
    let (f2, f3) = (frac(100).map_err(|e| e.to_string())?, frac(1000).map_err(|e| e.to_string())?);
    let set = GapSet::parse("two_squares").unwrap();
    let delta = set.density(x).map_err(|e| e.to_string())?;
    let h = (1000.0 / delta).round() as u64;
    let scan = run_scan_relaxed(&mf("two_squares"), x, h, stride, &[]).map_err(|e| e.to_string())?;
    let counts: Vec<f64> = scan.rows.iter().map(|r| r.short_avg.re * h as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let dev = counts.iter().filter(|&&c| (c - mean).abs() > 0.5 * mean).count() as f64 / counts.len() as f64;
    require(
        f3 + 0.02 < f2 && dev < 0.05,
        format!("μ: frac(0.1) {f2:.4} at h=10², {f3:.4} at h=10³; two_squares h={h}: mean count {mean:.1}, >50% off {dev:.4}"),
    )
}

fn c11_rearrangement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut run, mut bad) = (0, 0);
    while run < 10_000 {
        let n = rng.gen_range(1..=40);
        let den = rng.gen_range(1..=16i128);
        let alphas: Vec<Rat> = (0..n).map(|_| Rat::new(rng.gen_range(0..=den), den)).collect();
        let bs: Vec<Rat> = (0..n).map(|_| Rat::new(rng.gen_range(0..1000), rng.gen_range(1..50))).collect();
        let total: Rat = alphas.iter().copied().sum();
        let n0 = total.to_integer() as usize;
        if n0 == 0 {
            continue;
        }
        let (lhs, rhs) = rearrangement_check_exact(&alphas, &bs, n0).map_err(|e| e.to_string())?;
        bad += (lhs < rhs) as usize;
        run += 1;
    }
    require(bad == 0, format!("{run} exact instances, {bad} violations"))
}

fn c12_bounds() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["shiu", "contmvt2", "halmont_int", "huxley", "grkoma"] {
        let r = measure_bound(id, &Params::new(), 0).map_err(|e| format!("{id}: {e}"))?;
        let spread = r.spread();
        ok &= r.sweep.len() >= 3 && spread < 4.0;
        parts.push(format!("{id} ×{spread:.3}"));
        if id == "grkoma" {
            let le10 = r.checks.get("le_10") == Some(&true) && r.checks.get("exact") == Some(&true);
            ok &= le10;
            parts.push(format!("grkoma exact ≤ 10∏: {le10}"));
        }
    }
    require(ok, parts.join(", "))
}

fn sil(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sil")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("sil {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn digest(path: &Path) -> Result<[u8; 32], String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Sha256::digest(&bytes).into())
}

fn c13_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        ("scan", "experiment = \"scan\"\nfunction = \"liouville\"\nX = 100000\nh = 50\nformat = \"json\"\n", vec![]),
        ("gaps", "experiment = \"gaps\"\nfunction = \"smooth(0.4)\"\nX = 100000\n", vec![]),
        ("bound", "experiment = \"bound\"\nbound = \"halmont_int\"\nseed = 7\n", vec![]),
        ("bound", "experiment = \"bound\"\nbound = \"halmont_primes\"\nseed = 3\nformat = \"json\"\n", vec![]),
        ("pretend", "experiment = \"pretend\"\nfunction = \"char_mod4\"\nX = 100000\n", vec![]),
        ("sieve", "experiment = \"sieve\"\nfunction = \"two_squares\"\nX = 100000\n", vec!["check"]),
        ("normform", "experiment = \"normform\"\n[params]\npoly = \"x^2+5\"\nstart = 1\nlen = 3000\n", vec![]),
        ("normform", "experiment = \"normform\"\nX = 100000\n[params]\npoly = \"x^3-2\"\n", vec!["density"]),
        ("intervals", "experiment = \"intervals\"\nX = 1000000\n", vec![]),
    ];
    let mut names = Vec::new();
    for (i, (cmd, text, sub)) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let mut hashes = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("c{i}-{run}.out"));
            let mut args: Vec<&str> = vec![cmd];
            args.extend(sub.iter());
            let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
            args.extend(["--config", cfg_s, "--out", out_s]);
            sil(&args)?;
            hashes.push(digest(&out)?);
        }
        if hashes[0] != hashes[1] {
            return Err(format!("{cmd} {}: outputs differ between runs", sub.join(" ")));
        }
        names.push(format!("{cmd}{}", sub.iter().map(|s| format!(" {s}")).collect::<String>()));
    }
    Ok(format!("byte-identical re-runs: {}", names.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(u32, f64, fn() -> Check); 13] = [
        (1, 60.0, c1_majorant),
        (2, 10.0, c2_linear_sieve),
        (3, 30.0, c3_weight_sums),
        (4, 10.0, c4_ramare),
        (5, 5.0, c5_inclusion_exclusion),
        (6, 60.0, c6_genus),
        (7, 120.0, c7_class_number_one),
        (8, 60.0, c8_pretence),
        (9, 600.0, c9_gaps),
        (10, 600.0, c10_concentration),
        (11, 5.0, c11_rearrangement),
        (12, 300.0, c12_bounds),
        (13, 600.0, c13_determinism),
    ];
    let only: Vec<u32> = std::env::var("SIL_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(d) if secs < limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit} s budget")),
            Err(d) => (false, d),
        };
        failed += !pass as u32;
        println!("criterion {n:>2}: {} [{secs:.1} s / {limit} s] {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
