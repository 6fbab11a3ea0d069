//! Linear-sieve support, the Brun–Hooley block plan, `λ_d = μ(d) g*(d) χ(d)`
//! and the checks built on it.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::arith::{
    for_each_window, sieve_primes, table_for, FactorWindow, MultFn, PrimePower, Rat, SCAN_SEGMENT,
};
use crate::error::{domain, Error, Result};
use crate::numeric::{frac_product, frac_sum, Frac, KahanSum};
use crate::pretence::mean_factor;

/// Upper-bound linear-sieve support: `d = p₁ > … > p_r` over `primes`,
/// `d ≤ D` and `p₁⋯p_{ℓ-1} p_ℓ³ ≤ D` for every odd `ℓ`. Sorted ascending.
pub fn linear_sieve_support(d_max: u64, z: f64, primes: &[u64]) -> Result<Vec<u64>> {
    if !(z >= 1.0) || (d_max as f64) < z {
        return domain(format!("need D ≥ z ≥ 1, got D = {d_max}, z = {z}"));
    }
    if let Some(&p) = primes.iter().find(|&&p| p as f64 > z) {
        return domain(format!("sifting prime {p} exceeds z = {z}"));
    }
    let mut desc: Vec<u64> = primes.to_vec();
    desc.sort_unstable_by(|a, b| b.cmp(a));
    desc.dedup();
    let mut out = vec![1u64];
    fn walk(desc: &[u64], from: usize, d: u64, depth: usize, d_max: u64, out: &mut Vec<u64>) {
        for (i, &p) in desc.iter().enumerate().skip(from) {
            let Some(next) = d.checked_mul(p).filter(|&v| v <= d_max) else { continue };
            // ℓ = depth + 1 is odd when depth is even.
            if depth.is_multiple_of(2) && (next as u128) * (p as u128) * (p as u128) > d_max as u128 {
                continue;
            }
            out.push(next);
            walk(desc, i + 1, next, depth + 1, d_max, out);
        }
    }
    walk(&desc, 0, 1, 0, d_max, &mut out);
    out.sort_unstable();
    Ok(out)
}

/// Whether a squarefree `d`, given by its distinct primes, satisfies the
/// linear-sieve conditions.
pub fn in_linear_support(d_max: u64, primes_of_d: &[u64]) -> bool {
    let mut desc = primes_of_d.to_vec();
    desc.sort_unstable_by(|a, b| b.cmp(a));
    let mut prefix: u128 = 1;
    for (i, &p) in desc.iter().enumerate() {
        if i % 2 == 0 && prefix * (p as u128).pow(3) > d_max as u128 {
            return false;
        }
        prefix *= p as u128;
        if prefix > d_max as u128 {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BlockRule {
    /// `χ_k(n) = 0` once `n` has more than `m` prime factors in the block.
    Truncate { m: u32 },
    /// `χ_K(n) = 1_{S⁺}` of the block part of `n`.
    LinearSieve { d: u64, z: f64 },
    ExcludeAll,
}

/// Primes `p` with `lo < p ≤ hi`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub rule: BlockRule,
}

impl Block {
    pub fn contains(&self, p: u64) -> bool {
        let x = p as f64;
        x > self.lo && x <= self.hi
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SievePlan {
    pub x: u64,
    pub tau: f64,
    /// Number of sifted blocks; block `K+1` excludes everything.
    pub k: usize,
    pub blocks: Vec<Block>,
    #[serde(skip)]
    s_plus: Vec<u64>,
}

/// `log_k X`, the `k`-fold logarithm (`log_1 X = log X`).
pub fn iterated_log(x: f64, k: usize) -> f64 {
    let mut v = x;
    for _ in 0..k {
        v = if v > 0.0 { v.ln() } else { f64::NAN };
    }
    v
}

pub fn brun_hooley_plan(x: u64, tau: f64) -> Result<SievePlan> {
    brun_hooley_plan_with(x, tau, None)
}

/// Block plan with `K` the largest `k` such that `log_k X > τ`.
///
/// `truncation` replaces every `m_k = 30⌊log_{k+1} X⌋` by a fixed even value,
/// which makes the truncated blocks bite at small `X`.
pub fn brun_hooley_plan_with(x: u64, tau: f64, truncation: Option<u32>) -> Result<SievePlan> {
    if x < 100 {
        return domain(format!("the block plan needs X ≥ 100, got {x}"));
    }
    if !(tau >= 1.0) {
        return domain(format!("τ must be at least 1 so that every truncation is positive, got {tau}"));
    }
    if let Some(m) = truncation {
        if m % 2 == 1 {
            return domain(format!("truncation must be even for an upper bound, got {m}"));
        }
    }
    let xf = x as f64;
    let mut k = 0;
    while iterated_log(xf, k + 1) > tau {
        k += 1;
    }
    if k == 0 {
        return domain(format!("log X = {:.3} does not exceed τ = {tau}, so K = 0", xf.ln()));
    }
    let z = xf.powf(1.0 / 7.0);
    // Interior endpoint X^{1/(log_j X)²}, never beyond X^{1/7}.
    let edge = |j: usize| (xf.ln() / iterated_log(xf, j).powi(2)).exp().min(z);
    let mut blocks = Vec::with_capacity(k + 1);
    for j in 1..k {
        let lo = if j == 1 { 1.0 } else { edge(j) };
        let m = truncation.unwrap_or(30 * iterated_log(xf, j + 1).floor() as u32);
        blocks.push(Block { lo, hi: edge(j + 1), rule: BlockRule::Truncate { m } });
    }
    let d = xf.powf(2.0 / 5.0 - 1.0 / 1000.0).floor() as u64;
    let lo_k = if k == 1 { 1.0 } else { edge(k) };
    blocks.push(Block { lo: lo_k, hi: z, rule: BlockRule::LinearSieve { d, z } });
    blocks.push(Block { lo: z, hi: 4.0 * xf, rule: BlockRule::ExcludeAll });

    let sieve_primes: Vec<u64> = sieve_primes(z.floor().max(2.0) as u64)?
        .primes()
        .iter()
        .copied()
        .filter(|&p| blocks[k - 1].contains(p))
        .collect();
    let s_plus = linear_sieve_support(d.max(z.ceil() as u64), z, &sieve_primes)?;
    Ok(SievePlan { x, tau, k, blocks, s_plus })
}

impl SievePlan {
    /// Index of the block holding `p`, if any.
    pub fn block_of(&self, p: u64) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(p))
    }

    /// `S⁺` of the linear-sieve block.
    pub fn s_plus(&self) -> &[u64] {
        &self.s_plus
    }

    /// `χ(n) = ∏_k χ_k(n)` from the factorization of `n`.
    pub fn chi_of_factors(&self, fs: &[PrimePower]) -> bool {
        let mut counts = vec![0u32; self.blocks.len()];
        let mut sieve_part: Vec<u64> = Vec::new();
        for pp in fs {
            let Some(b) = self.block_of(pp.p) else { continue };
            match self.blocks[b].rule {
                BlockRule::ExcludeAll => return false,
                BlockRule::Truncate { m } => {
                    counts[b] += 1;
                    if counts[b] > m {
                        return false;
                    }
                }
                BlockRule::LinearSieve { .. } => {
                    if pp.e > 1 {
                        return false;
                    }
                    sieve_part.push(pp.p);
                }
            }
        }
        let prod: u64 = sieve_part.iter().product();
        self.s_plus.binary_search(&prod).is_ok()
    }
}

/// `χ(d)` for `d` inside `fw`.
pub fn chi_value(plan: &SievePlan, d: u64, fw: &FactorWindow) -> Result<bool> {
    if d == 1 {
        return Ok(true);
    }
    Ok(plan.chi_of_factors(fw.factors_of(d)?))
}

#[derive(Clone, Debug)]
pub struct SieveWeights {
    /// `(d, λ_d)` sorted by `d`.
    pub entries: Vec<(u64, Rat)>,
    pub d_bound: u64,
    pub g_name: String,
    /// Distinct primes of each `d`, aligned with `entries`.
    primes: Vec<Vec<u64>>,
}

impl SieveWeights {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, d: u64) -> Option<Rat> {
        self.entries.binary_search_by_key(&d, |e| e.0).ok().map(|i| self.entries[i].1)
    }

    pub fn to_f64(&self) -> Vec<(u64, f64)> {
        self.entries.iter().map(|(d, l)| (*d, crate::arith::rat_to_f64(l))).collect()
    }

    /// `d,lambda` rows with `λ_d` as an exact fraction when it is not an integer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,lambda\n");
        for (d, l) in &self.entries {
            out.push_str(&format!("{d},{l}\n"));
        }
        out
    }
}

/// `g(p)` exactly, checked to lie in `[0, 1]`.
fn unit_interval_value(g: &MultFn, p: u64) -> Result<Rat> {
    let v = g
        .exact(p, 1)
        .ok_or_else(|| Error::Domain(format!("{} must be rational-valued", g.name())))?;
    if v.is_negative() || v > Rat::one() {
        return domain(format!("{}({p}) = {v} lies outside [0, 1]", g.name()));
    }
    Ok(v)
}

/// Cap on the number of weights enumerated.
const MAX_WEIGHTS: usize = 5_000_000;

/// `λ_d = μ(d) g*(d) χ(d)` over every `d` with `χ(d) = 1` and `g*(d) ≠ 0`.
pub fn lambda_weights(plan: &SievePlan, g: &MultFn) -> Result<SieveWeights> {
    if !g.is_real() {
        return domain(format!("{} must be real-valued", g.name()));
    }
    let z = plan.blocks[plan.k - 1].hi;
    let table = sieve_primes(z.floor().max(2.0) as u64)?;
    // Per block, the admissible squarefree parts as (d, g*(d), primes).
    type Part = (u64, Rat, Vec<u64>);
    let mut per_block: Vec<Vec<Part>> = Vec::new();
    for (b, block) in plan.blocks[..plan.k].iter().enumerate() {
        let mut live = Vec::new();
        for &p in table.primes() {
            if block.contains(p) {
                let gstar = Rat::one() - unit_interval_value(g, p)?;
                if !gstar.is_zero() {
                    live.push((p, gstar));
                }
            }
        }
        let mut parts: Vec<Part> = vec![(1, Rat::one(), Vec::new())];
        match block.rule {
            BlockRule::Truncate { m } => {
                // Subsets of at most m live primes.
                for (p, gs) in &live {
                    let mut grown = Vec::new();
                    for (d, w, ps) in &parts {
                        if ps.len() < m as usize {
                            let nd = d
                                .checked_mul(*p)
                                .ok_or_else(|| Error::Range("sieve weight modulus overflows u64".into()))?;
                            let mut nps = ps.clone();
                            nps.push(*p);
                            grown.push((nd, -(w * gs), nps));
                        }
                    }
                    parts.extend(grown);
                    if parts.len() > MAX_WEIGHTS {
                        return Err(Error::Range(format!("block {} has too many sieve weights", b + 1)));
                    }
                }
            }
            BlockRule::LinearSieve { .. } => {
                let weight: BTreeMap<u64, Rat> = live.iter().cloned().collect();
                parts.clear();
                for &d in plan.s_plus() {
                    let ps = distinct_primes(d, table.primes());
                    if ps.iter().all(|p| weight.contains_key(p)) {
                        let mut w = Rat::one();
                        for p in &ps {
                            w *= -weight[p];
                        }
                        parts.push((d, w, ps));
                    }
                }
            }
            BlockRule::ExcludeAll => unreachable!("the excluded block is never sifted"),
        }
        per_block.push(parts);
    }
    let mut combined: Vec<Part> = vec![(1, Rat::one(), Vec::new())];
    for parts in &per_block {
        let mut next = Vec::with_capacity(combined.len() * parts.len());
        for (d1, w1, p1) in &combined {
            for (d2, w2, p2) in parts {
                let d = d1
                    .checked_mul(*d2)
                    .ok_or_else(|| Error::Range("sieve weight modulus overflows u64".into()))?;
                let mut ps = p1.clone();
                ps.extend_from_slice(p2);
                next.push((d, w1 * w2, ps));
            }
        }
        if next.len() > MAX_WEIGHTS {
            return Err(Error::Range("too many sieve weights".into()));
        }
        combined = next;
    }
    combined.sort_unstable_by_key(|e| e.0);
    let d_bound = combined.last().map_or(1, |e| e.0);
    let (entries, primes) = combined.into_iter().map(|(d, w, ps)| ((d, w), ps)).unzip();
    Ok(SieveWeights { entries, d_bound, g_name: g.name().to_string(), primes })
}

fn distinct_primes(mut d: u64, primes: &[u64]) -> Vec<u64> {
    let mut out = Vec::new();
    for &p in primes {
        if d == 1 {
            break;
        }
        if d.is_multiple_of(p) {
            out.push(p);
            while d.is_multiple_of(p) {
                d /= p;
            }
        }
    }
    debug_assert_eq!(d, 1);
    out
}

/// Common denominator of the weights and `λ_d` scaled by it.
fn integer_weights(w: &SieveWeights) -> Result<(i128, Vec<(u64, i128)>)> {
    let den = w.entries.iter().fold(1i128, |acc, (_, l)| acc.lcm(l.denom()));
    let scaled = w
        .entries
        .iter()
        .map(|(d, l)| {
            l.numer()
                .checked_mul(den / l.denom())
                .map(|v| (*d, v))
                .ok_or_else(|| Error::Range("weight denominators overflow".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((den, scaled))
}

/// `Σ_{d|n} λ_d` for `n ≤ N`, scaled by the common denominator.
pub fn divisor_sums(w: &SieveWeights, n_max: u64) -> Result<(i128, Vec<i128>)> {
    let (den, scaled) = integer_weights(w)?;
    let mut acc = vec![0i128; n_max as usize + 1];
    for (d, l) in scaled {
        let mut m = d;
        while m <= n_max {
            acc[m as usize] += l;
            m += d;
        }
    }
    Ok((den, acc))
}

/// Count of `n ≤ N` with `|μ(n)| g(n) > Σ_{d|n} λ_d`.
pub fn majorant_violations(w: &SieveWeights, g: &MultFn, n_max: u64) -> Result<u64> {
    if !g.is_exact() {
        return domain(format!("{} must be rational-valued", g.name()));
    }
    let (den, rhs) = divisor_sums(w, n_max)?;
    let mut bad = 0u64;
    for_each_window(1, n_max, SCAN_SEGMENT, &table_for(n_max + 1), |fw| {
        for (n, fs) in fw.iter() {
            if fs.iter().any(|pp| pp.e > 1) {
                if rhs[n as usize] < 0 {
                    bad += 1;
                }
                continue;
            }
            let lhs = g.eval_factors_exact(fs).expect("exact rule");
            if lhs > Rat::new(rhs[n as usize], den) {
                bad += 1;
            }
        }
    })?;
    Ok(bad)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightSums {
    pub s1: f64,
    pub s2: f64,
    pub b1: f64,
    pub b2: f64,
    /// `s1 ≤ b1` decided in exact arithmetic.
    pub s1_le_b1: bool,
}

/// `Σ λ_d/d`, `Σ_d (1/d)(Σ_e λ_{de}/e)²` and the two Euler-product bounds.
pub fn weight_sum_report(w: &SieveWeights, g: &MultFn, x: u64) -> Result<WeightSums> {
    let s1_exact = frac_sum(
        &w.entries
            .iter()
            .map(|(d, l)| Frac::new(*l.numer(), l.denom() * *d as i128))
            .collect::<Vec<_>>(),
    );
    let primes = sieve_primes(x.max(2))?;
    let mut factors = vec![Frac::from_ratio(&Rat::from_integer(9))];
    let mut log_b2 = KahanSum::new();
    for &p in primes.primes() {
        let gp = unit_interval_value(g, p)?;
        let pr = p as i128;
        factors.push(Frac::from_ratio(&((Rat::from_integer(pr - 1) + gp) / Rat::from_integer(pr))));
        let gf = crate::arith::rat_to_f64(&gp);
        log_b2.add_re(((gf * gf - 1.0) / p as f64).ln_1p());
    }
    let b1_exact = frac_product(&factors);

    // Inner sums over e, keyed by every divisor d of a weight modulus.
    let mut inner: BTreeMap<u64, f64> = BTreeMap::new();
    for ((m, l), ps) in w.entries.iter().zip(&w.primes) {
        let lf = crate::arith::rat_to_f64(l);
        for mask in 0u32..(1 << ps.len()) {
            let d: u64 = ps.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| p).product();
            *inner.entry(d).or_insert(0.0) += lf / (m / d) as f64;
        }
    }
    let s2 = crate::numeric::ksum(inner.iter().map(|(d, v)| v * v / *d as f64));
    Ok(WeightSums {
        s1: s1_exact.to_f64(),
        s2,
        b1: b1_exact.to_f64(),
        b2: log_b2.value().re.exp(),
        s1_le_b1: s1_exact.le(&b1_exact),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SurvivorScan {
    pub fraction: f64,
    pub samples: usize,
    pub stride: u64,
    pub threshold: f64,
    /// Mean over the samples of the sifted short average.
    pub mean_short_avg: f64,
    /// `h ≤ X^{1/6}`, outside of which the measured fraction has no matching bound.
    pub h_in_range: bool,
    /// `(log²(2+h/h₁)/(1+h/h₁)) ∏_{P<p≤Q}(1−|f(p)|²/p) / Δ²`, the bound's shape without its constant.
    pub bound_shape: f64,
}

/// Fraction of sampled `x ∈ [X, 2X]` whose `(P,Q]`-free short average of `|f|` reaches
/// `∏_{p≤X}(1+(|f(p)|−1)/p)·(Δ + 20∏_{P<p≤Q}(1−|f(p)|/p))`.
pub fn survivor_scan(f: &MultFn, x: u64, h: u64, p_lo: f64, q_hi: f64, delta: f64) -> Result<SurvivorScan> {
    if h < 2 {
        return domain(format!("need h ≥ 2, got {h}"));
    }
    if !(p_lo >= 1.0 && p_lo <= q_hi && q_hi <= (x as f64).powf(0.75)) {
        return domain(format!("need 1 ≤ P ≤ Q ≤ X^(3/4), got P = {p_lo}, Q = {q_hi}"));
    }
    if !(delta > 0.0) {
        return domain(format!("Δ must be positive, got {delta}"));
    }
    let absf = f.abs();
    let mean = mean_factor(f, x);
    let table = sieve_primes(q_hi.floor().max(2.0) as u64)?;
    let mut range_prod = 0.0;
    let mut range_sq = 0.0;
    for &p in table.primes() {
        if (p as f64) > p_lo {
            let a = f.value(p, 1).norm();
            range_prod += (-a / p as f64).ln_1p();
            range_sq += (-a * a / p as f64).ln_1p();
        }
    }
    let threshold = mean * (delta + 20.0 * range_prod.exp());
    let h1 = crate::pretence::euler_products(f, x)?.h_value;
    let r = h as f64 / h1;
    let bound_shape = (2.0 + r).ln().powi(2) / (1.0 + r) * range_sq.exp() / (delta * delta);

    let stride = (x / 10_000).max(1);
    let aux = table_for(2 * x + h + 1);
    let sifted = absf.sifted(&[(p_lo, q_hi)]);
    let mut hits = 0usize;
    let mut samples = 0usize;
    let mut total = KahanSum::new();
    let mut xs = x;
    while xs <= 2 * x {
        let fw = crate::arith::factor_range(xs + 1, h, &aux)?;
        let sum: f64 = crate::arith::window_eval(&sifted, &fw).iter().map(|v| v.re).sum();
        total.add_re(sum / h as f64);
        if sum / h as f64 >= threshold {
            hits += 1;
        }
        samples += 1;
        xs += stride;
    }
    Ok(SurvivorScan {
        fraction: hits as f64 / samples as f64,
        samples,
        stride,
        threshold,
        mean_short_avg: total.value().re / samples as f64,
        h_in_range: (h as f64) <= (x as f64).powf(1.0 / 6.0),
        bound_shape,
    })
}

/// `Σ_{d∈S} μ(d)/d` exactly for a set of squarefree integers.
pub fn moebius_sum(support: &[u64]) -> Frac {
    let omega = |mut d: u64| {
        let mut k = 0;
        let mut p = 2;
        while p * p <= d {
            if d.is_multiple_of(p) {
                k += 1;
                d /= p;
            }
            p += 1;
        }
        k + u32::from(d > 1)
    };
    frac_sum(
        &support
            .iter()
            .map(|&d| Frac::new(if omega(d) % 2 == 0 { 1 } else { -1 }, d))
            .collect::<Vec<_>>(),
    )
}
