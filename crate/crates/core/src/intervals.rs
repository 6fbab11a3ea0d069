//! The interval system `(P_j, Q_j]`, `j = 1..J+2`, membership in `S` and
//! the inclusion–exclusion expansion over subsets of intervals.

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{for_each_window, sieve_primes, table_for, FactorWindow, PrimePower, Rat, SCAN_SEGMENT};
use crate::error::{domain, Error, Result};
use crate::numeric::KahanSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub nu1: f64,
    pub nu2: f64,
    pub eta: f64,
    pub beta0: f64,
}

/// One requirement on the system with both of its sides.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    pub j: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Condition {
    fn le(name: &str, j: Option<usize>, lhs: f64, rhs: f64) -> Self {
        Condition { name: name.into(), j, lhs, rhs, pass: lhs <= rhs }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IntervalSystem {
    /// `(P_j, Q_j]` for `j = 1..J+2`.
    pub pairs: Vec<(f64, f64)>,
    pub params: Option<SystemParams>,
    pub j: usize,
    pub conditions: Vec<Condition>,
}

impl IntervalSystem {
    pub fn all_conditions_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    /// Indices of the pairs containing `p`.
    fn pair_of(&self, p: u64) -> impl Iterator<Item = usize> + '_ {
        let x = p as f64;
        self.pairs.iter().enumerate().filter(move |(_, &(lo, hi))| x > lo && x <= hi).map(|(i, _)| i)
    }

    /// Bitmask of the pairs that contain a prime factor of `n`.
    pub fn hit_mask(&self, fs: &[PrimePower]) -> u32 {
        let mut mask = 0u32;
        for pp in fs {
            for i in self.pair_of(pp.p) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn contains_factored(&self, fs: &[PrimePower]) -> bool {
        self.hit_mask(fs) == (1u32 << self.pairs.len()) - 1
    }

    /// The same system with pair `i` replaced.
    pub fn with_pair(&self, i: usize, pair: (f64, f64)) -> Result<IntervalSystem> {
        let mut pairs = self.pairs.clone();
        *pairs
            .get_mut(i)
            .ok_or_else(|| Error::Range(format!("pair index {i} out of range")))? = pair;
        custom_system(&pairs)
    }
}

/// Pairs chosen by the `P_j`, `Q_j` recipe, with `J` maximal subject to
/// `Q_J ≤ exp(√log X)`, followed by `(X^{ν₁}, X^{√(ν₁ν₂)}]` and `(X^{√(ν₁ν₂)}, X^{ν₂}]`.
///
/// Size conditions that fail at this `X` are recorded in `conditions`.
pub fn build_system(x: u64, nu1: f64, nu2: f64, eta: f64, beta0: f64, p1: f64, q1: f64) -> Result<IntervalSystem> {
    if x < 16 {
        return domain(format!("X must be at least 16, got {x}"));
    }
    if !(nu1 > 0.0 && nu1 < nu2 && nu2 < 1.0 / 6.0) {
        return domain(format!("need 0 < ν₁ < ν₂ < 1/6, got ν₁ = {nu1}, ν₂ = {nu2}"));
    }
    if !(eta > 0.0 && eta < 1.0 / 6.0 - nu2 / 3.0) {
        return domain(format!("need 0 < η < 1/6 − ν₂/3, got η = {eta}"));
    }
    if !(beta0 > 0.0 && beta0 <= 1.0) {
        return domain(format!("need 0 < β₀ ≤ 1, got β₀ = {beta0}"));
    }
    if !(p1 >= 1.5 && p1 < q1) {
        return domain(format!("need 3/2 ≤ P₁ < Q₁, got P₁ = {p1}, Q₁ = {q1}"));
    }
    let lx = (x as f64).ln();
    let cap_log = lx.sqrt();
    let (lp1, lq1) = (p1.ln(), q1.ln());
    // log Q_j and log P_j for j ≥ 2, kept in log space to avoid overflow.
    let log_q = |j: usize| {
        let jf = j as f64;
        ((8.0 * jf + 6.0) / beta0 * jf.ln() + jf * lq1.ln()).exp()
    };
    let log_p = |j: usize| {
        let jf = j as f64;
        (8.0 * jf / beta0 * jf.ln() + (jf - 1.0) * lq1.ln() + lp1.ln()).exp()
    };
    let mut j_max = 1;
    if lq1 < cap_log {
        while log_q(j_max + 1) <= cap_log {
            j_max += 1;
        }
    }
    let mut logs: Vec<(f64, f64)> = vec![(lp1, lq1)];
    for j in 2..=j_max {
        logs.push((log_p(j), log_q(j)));
    }
    let mid = (nu1 * nu2).sqrt();
    logs.push((nu1 * lx, mid * lx));
    logs.push((mid * lx, nu2 * lx));

    let mut conditions = vec![
        Condition::le("nu1_lower", None, lx.powf(-0.1), nu1),
        Condition::le("q1_upper", None, lq1, lx / 6.0),
        Condition::le("p1_lower", None, 40.0 / eta * lq1.ln(), lp1),
    ];
    let (lpj, lqj) = logs[j_max - 1];
    conditions.push(Condition::le("pj_size", Some(j_max), 2.0 / eta * lx.ln(), lpj));
    if j_max > 1 {
        conditions.push(Condition::le("qj_size", Some(j_max), lqj, cap_log));
    }
    for j in 2..=j_max {
        let jf = j as f64;
        let (lp_prev, lq_prev) = logs[j - 2];
        let (lp_j, lq_j) = logs[j - 1];
        conditions.push(Condition::le("not_too_far", Some(j), lq_j.ln() / (lp_prev - 1.0), eta / (4.0 * jf * jf)));
        conditions.push(Condition::le(
            "not_too_close",
            Some(j),
            16.0 * lq_prev + 16.0 * jf.ln(),
            eta / (jf * jf) * lp_j,
        ));
    }
    for j in 1..logs.len() {
        conditions.push(Condition::le("increasing", Some(j), logs[j - 1].1, logs[j].0));
    }
    Ok(IntervalSystem {
        pairs: logs.iter().map(|&(a, b)| (a.exp(), b.exp())).collect(),
        params: Some(SystemParams { nu1, nu2, eta, beta0 }),
        j: j_max,
        conditions,
    })
}

/// A system from explicit pairs; the last two play the roles of `J+1` and `J+2`.
pub fn custom_system(pairs: &[(f64, f64)]) -> Result<IntervalSystem> {
    if pairs.len() < 3 {
        return domain(format!("a system needs at least 3 pairs, got {}", pairs.len()));
    }
    if pairs.len() > 20 {
        return domain(format!("at most 20 pairs are supported, got {}", pairs.len()));
    }
    if let Some(&(lo, hi)) = pairs.iter().find(|&&(lo, hi)| !(lo >= 1.0 && lo < hi)) {
        return domain(format!("pair ({lo}, {hi}] must satisfy 1 ≤ P < Q"));
    }
    let conditions = (1..pairs.len())
        .map(|j| Condition::le("increasing", Some(j), pairs[j - 1].1, pairs[j].0))
        .collect();
    Ok(IntervalSystem { pairs: pairs.to_vec(), params: None, j: pairs.len() - 2, conditions })
}

/// Whether `n` has a prime factor in every `(P_j, Q_j]`.
pub fn system_membership(sys: &IntervalSystem, n: u64, fw: &FactorWindow) -> Result<bool> {
    Ok(sys.contains_factored(fw.factors_of(n)?))
}

/// `g_𝒥(n) = 1` iff `n` has no prime factor in the pairs selected by `mask`.
fn g_subset(hits: u32, mask: u32) -> bool {
    hits & mask == 0
}

fn check_len(fw: &FactorWindow, len: usize) -> Result<()> {
    if fw.len() != len {
        return domain(format!("{len} coefficients for a window of {}", fw.len()));
    }
    Ok(())
}

/// `|Σ_{n∈S} a_n − Σ_𝒥 (−1)^{#𝒥} Σ_n g_𝒥(n) a_n|` over the window.
pub fn inclusion_exclusion_residual(sys: &IntervalSystem, fw: &FactorWindow, a: &[Complex64]) -> Result<f64> {
    check_len(fw, a.len())?;
    let hits: Vec<u32> = (0..fw.len()).map(|i| sys.hit_mask(fw.at(i))).collect();
    let full = (1u32 << sys.pairs.len()) - 1;
    let mut lhs = KahanSum::new();
    for (&h, &v) in hits.iter().zip(a) {
        if h == full {
            lhs.add(v);
        }
    }
    let mut rhs = Complex64::zero();
    for mask in 0..=full {
        let mut part = KahanSum::new();
        for (&h, &v) in hits.iter().zip(a) {
            if g_subset(h, mask) {
                part.add(v);
            }
        }
        if mask.count_ones() % 2 == 0 {
            rhs += part.value();
        } else {
            rhs -= part.value();
        }
    }
    Ok((lhs.value() - rhs).norm())
}

/// Exact form of [`inclusion_exclusion_residual`] for rational coefficients.
pub fn inclusion_exclusion_residual_exact(sys: &IntervalSystem, fw: &FactorWindow, a: &[Rat]) -> Result<Rat> {
    check_len(fw, a.len())?;
    let hits: Vec<u32> = (0..fw.len()).map(|i| sys.hit_mask(fw.at(i))).collect();
    let full = (1u32 << sys.pairs.len()) - 1;
    let lhs: Rat = hits.iter().zip(a).filter(|(&h, _)| h == full).map(|(_, v)| *v).sum();
    let mut rhs = Rat::zero();
    for mask in 0..=full {
        let part: Rat = hits.iter().zip(a).filter(|(&h, _)| g_subset(h, mask)).map(|(_, v)| *v).sum();
        if mask.count_ones() % 2 == 0 {
            rhs += part;
        } else {
            rhs -= part;
        }
    }
    Ok(lhs - rhs)
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    pub x: u64,
    /// Fraction of `X < n ≤ 2X` in `S`.
    pub in_s: f64,
    /// `Σ_j ∏_{P_j<p≤Q_j} (1 − 1/p)`.
    pub complement_bound: f64,
}

/// `Σ_j ∏_{P_j<p≤Q_j} (1 − 1/p)`.
pub fn complement_bound(sys: &IntervalSystem) -> Result<f64> {
    let top = sys.pairs.iter().map(|p| p.1).fold(2.0, f64::max);
    let primes = sieve_primes(top.floor() as u64)?;
    Ok(sys
        .pairs
        .iter()
        .map(|&(lo, hi)| {
            let log: f64 = primes
                .primes()
                .iter()
                .filter(|&&p| (p as f64) > lo && (p as f64) <= hi)
                .map(|&p| (-1.0 / p as f64).ln_1p())
                .sum();
            log.exp()
        })
        .sum())
}

pub fn system_density_report(sys: &IntervalSystem, x: u64) -> Result<DensityReport> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    let mut inside = 0u64;
    for_each_window(x + 1, x, SCAN_SEGMENT, &table_for(2 * x + 1), |fw| {
        for i in 0..fw.len() {
            if sys.contains_factored(fw.at(i)) {
                inside += 1;
            }
        }
    })?;
    Ok(DensityReport { x, in_s: inside as f64 / x as f64, complement_bound: complement_bound(sys)? })
}

/// Parameters of a system as read from a config file: either the recipe
/// parameters (with defaults) or explicit `pairs`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub eta: Option<f64>,
    pub beta0: Option<f64>,
    #[serde(rename = "P1")]
    pub p1: Option<f64>,
    #[serde(rename = "Q1")]
    pub q1: Option<f64>,
    pub pairs: Option<Vec<(f64, f64)>>,
}

impl SystemSpec {
    pub fn from_toml(text: &str) -> Result<SystemSpec> {
        toml::from_str(text).map_err(|e| Error::Parse { path: "params".into(), message: e.message().to_string() })
    }

    /// Defaults: `ν₁ = 0.05`, `ν₂ = 0.1`, `η = 0.1`, `β₀ = 1`, `Q₁ = 10³`, `P₁ = Q₁^{1/4}`.
    pub fn build(&self, x: u64) -> Result<IntervalSystem> {
        if let Some(pairs) = &self.pairs {
            if self.nu1.or(self.nu2).or(self.eta).or(self.beta0).or(self.p1).or(self.q1).is_some() {
                return domain("give either pairs or recipe parameters, not both");
            }
            return custom_system(pairs);
        }
        let q1 = self.q1.unwrap_or(1000.0);
        build_system(
            x,
            self.nu1.unwrap_or(0.05),
            self.nu2.unwrap_or(0.1),
            self.eta.unwrap_or(0.1),
            self.beta0.unwrap_or(1.0),
            self.p1.unwrap_or(q1.powf(0.25)),
            q1,
        )
    }
}
