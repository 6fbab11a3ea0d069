//! Dirichlet polynomials: evaluation, mean squares, large values, truncated
//! Perron averages and the Buchstab/Ramaré split.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{factor_range, omega_in, rat_to_f64, table_for, FactorWindow, MultFn, Rat};
use crate::error::{domain, precondition, Result};
use crate::numeric::{frac_sum, ksum, Frac, KahanSum, RotationBank};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    None,
    OverN,
}

/// `Σ_{lo ≤ n ≤ hi} c_n n^{-s}`.
///
/// `sigma_convention` records the power of `n` already folded into the stored
/// coefficients: 1 when they are `a_n/n`, so that `F(1+it)` is the stored
/// polynomial at `σ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirPoly {
    lo: u64,
    coeffs: Vec<Complex64>,
    sigma_convention: f64,
}

impl DirPoly {
    pub fn new(lo: u64, coeffs: Vec<Complex64>) -> Result<DirPoly> {
        if lo == 0 {
            return domain("support must start at n ≥ 1");
        }
        if coeffs.is_empty() {
            return domain("a Dirichlet polynomial needs at least one coefficient");
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return domain("coefficients must be finite");
        }
        Ok(DirPoly { lo, coeffs, sigma_convention: 0.0 })
    }

    /// Coefficients `values[i]` at `n = start + i`, optionally divided by `n`.
    pub fn from_window(values: &[Complex64], start: u64, normalize: Normalize) -> Result<DirPoly> {
        let coeffs = match normalize {
            Normalize::None => values.to_vec(),
            Normalize::OverN => {
                values.iter().enumerate().map(|(i, v)| v / (start + i as u64) as f64).collect()
            }
        };
        let mut p = DirPoly::new(start, coeffs)?;
        if normalize == Normalize::OverN {
            p.sigma_convention = 1.0;
        }
        Ok(p)
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.lo + self.coeffs.len() as u64 - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn sigma_convention(&self) -> f64 {
        self.sigma_convention
    }

    pub fn coeff(&self, n: u64) -> Complex64 {
        if n < self.lo || n > self.hi() {
            Complex64::zero()
        } else {
            self.coeffs[(n - self.lo) as usize]
        }
    }

    /// Nonzero terms as a rotation bank for `P(σ+it)`.
    pub fn bank(&self, sigma: f64) -> RotationBank {
        RotationBank::new(self.coeffs.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(i, &c)| {
            let n = (self.lo + i as u64) as f64;
            let scale = if sigma == 0.0 { 1.0 } else { n.powf(-sigma) };
            (n.ln(), c * scale)
        }))
    }

    /// `Σ c_n n^{-σ-it}` by direct compensated summation.
    pub fn evaluate(&self, sigma: f64, t: f64) -> Complex64 {
        let mut acc = KahanSum::new();
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let n = (self.lo + i as u64) as f64;
            acc.add(c * n.powf(-sigma) * Complex64::from_polar(1.0, -t * n.ln()));
        }
        acc.value()
    }

    /// Values at `t0 + j·step`, `j < count`.
    pub fn evaluate_grid(&self, sigma: f64, t0: f64, step: f64, count: usize) -> Vec<Complex64> {
        self.bank(sigma).grid(t0, step, count)
    }

    /// `Σ |c_n|² n^{-2σ}`.
    pub fn weighted_l2(&self, sigma: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm_sqr() * ((self.lo + i as u64) as f64).powf(-2.0 * sigma))
            .sum()
    }

    /// Whether every coefficient is real (so `P(σ−it)` is the conjugate of `P(σ+it)`).
    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|c| c.im == 0.0)
    }
}

/// Largest grid step accepted for a polynomial ending at `hi`.
pub fn max_step(hi: u64) -> f64 {
    let l = (hi.max(3) as f64).ln();
    1.0 / (4.0 * l)
}

/// `∫_{-T}^{T} |P(σ+it)|² dt` by the trapezoid rule, halving the step until the
/// relative change drops below 0.5%.
pub fn mean_square_grid(p: &DirPoly, sigma: f64, t_max: f64, step: f64) -> Result<f64> {
    let cap = max_step(p.hi());
    if !(step > 0.0) || step > cap {
        return precondition(format!("step {step} exceeds 1/(4 log N) = {cap}"));
    }
    let bank = p.bank(sigma);
    integrate_sq(t_max, step, |t0, h, n| bank.grid(t0, h, n).into_iter().map(|z| z.norm_sqr()).collect())
}

/// `∫_{-T}^{T} w(t) dt` for a non-negative integrand given on uniform grids by
/// `sample(t0, h, count)`; trapezoid rule refined by midpoints until the relative
/// change drops below 0.5% (at most 8 refinements).
pub fn integrate_sq(t_max: f64, step: f64, sample: impl Fn(f64, f64, usize) -> Vec<f64>) -> Result<f64> {
    if !(t_max > 0.0) {
        return domain(format!("T must be positive, got {t_max}"));
    }
    let mut n = (2.0 * t_max / step).ceil().max(1.0) as usize;
    let h = 2.0 * t_max / n as f64;
    let mut prev = {
        let vals = sample(-t_max, h, n + 1);
        let mut acc = KahanSum::new();
        for (k, v) in vals.iter().enumerate() {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc.add_re(w * v);
        }
        acc.value().re * h
    };
    for _ in 0..8 {
        // Reuse the previous nodes: only midpoints are new.
        let h = 2.0 * t_max / n as f64;
        let mid_sum = ksum(sample(-t_max + h / 2.0, h, n));
        let next = prev / 2.0 + mid_sum * h / 2.0;
        n *= 2;
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if (next - prev).abs() <= 0.005 * scale {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// A set of reals with pairwise gaps at least `spacing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacedSet {
    pub points: Vec<f64>,
    pub spacing: f64,
}

impl SpacedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Greedy one-spaced subset of grid points in `[-T, T]` with `|P(σ+it)| ≥ V`.
///
/// The threshold is compared with a relative slack of `1e-12` so that exact
/// ties survive rounding in the grid recurrence.
pub fn large_value_set(p: &DirPoly, sigma: f64, t_max: f64, v: f64) -> Result<SpacedSet> {
    if !(v > 0.0) {
        return domain(format!("threshold must be positive, got {v}"));
    }
    if !(t_max >= 0.0) {
        return domain(format!("T must be non-negative, got {t_max}"));
    }
    let step = max_step(p.hi());
    let n = (2.0 * t_max / step).ceil().max(1.0) as usize;
    let h = if t_max == 0.0 { 0.0 } else { 2.0 * t_max / n as f64 };
    let vals = p.bank(sigma).grid(-t_max, h, n + 1);
    let cut = v * (1.0 - 1e-12);
    let mut points: Vec<f64> = Vec::new();
    for (k, z) in vals.iter().enumerate() {
        let t = -t_max + k as f64 * h;
        if z.norm() >= cut && points.last().is_none_or(|&last| t - last >= 1.0 - 1e-9) {
            points.push(t);
        }
    }
    Ok(SpacedSet { points, spacing: 1.0 })
}

/// Truncated Perron reconstruction of `(1/h) Σ_{x<n≤x+h} a_n`.
///
/// Computes `(1/2π) ∫_{-T}^{T} F(1+it)((x+h)^{1+it} − x^{1+it})/(1+it) dt / h`
/// where `F(s) = Σ a_n n^{-s}` and `P` stores `a_n n^{-c}` with `c` its sigma convention.
/// The scale `X` is taken as `hi/4`, matching a support `(X/4, 4X]`.
pub fn perron_short_average(p: &DirPoly, x: f64, h: f64, t_max: f64) -> Result<Complex64> {
    let scale = p.hi() as f64 / 4.0;
    if !(h > 0.0) || !(x > 0.0) {
        return domain("x and h must be positive");
    }
    if x < p.lo() as f64 || x + h > p.hi() as f64 {
        return domain(format!(
            "[x, x+h] = [{x}, {}] must lie inside the support [{}, {}]",
            x + h,
            p.lo(),
            p.hi()
        ));
    }
    if t_max < scale / h {
        return precondition(format!("T = {t_max} is below X/h = {}", scale / h));
    }
    let sigma = 1.0 - p.sigma_convention();
    let bank = p.bank(sigma);
    let span = (p.hi() as f64 / p.lo() as f64).ln().max(1.0);
    let step_cap = 1.0 / (4.0 * span);
    let symmetric = p.is_real();
    let (t0, n) = if symmetric {
        (0.0, (t_max / step_cap).ceil() as usize)
    } else {
        (-t_max, (2.0 * t_max / step_cap).ceil() as usize)
    };
    let step = if symmetric { t_max / n as f64 } else { 2.0 * t_max / n as f64 };
    let vals = bank.grid(t0, step, n + 1);
    let (lx, lxh) = (x.ln(), (x + h).ln());
    let mut acc = KahanSum::new();
    for (k, f) in vals.iter().enumerate() {
        let t = t0 + k as f64 * step;
        let s = Complex64::new(1.0, t);
        let kernel = ((s * lxh).exp() - (s * lx).exp()) / s;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc.add(f * kernel * w);
    }
    let integral = acc.value() * step;
    let value = if symmetric {
        // The integrand at -t is the conjugate of the one at t.
        Complex64::new(2.0 * integral.re, 0.0)
    } else {
        integral
    };
    Ok(value / (2.0 * PI) / h)
}

/// Sparse exact Dirichlet polynomial.
pub type ExactPoly = BTreeMap<u64, Rat>;

fn add_to(poly: &mut ExactPoly, n: u64, c: Rat) {
    if c.is_zero() {
        return;
    }
    let slot = poly.entry(n).or_insert_with(Rat::zero);
    *slot += c;
    if slot.is_zero() {
        poly.remove(&n);
    }
}

fn exact_to_dirpoly(p: &ExactPoly) -> Option<DirPoly> {
    let (&lo, _) = p.iter().next()?;
    let (&hi, _) = p.iter().next_back()?;
    let mut coeffs = vec![Complex64::zero(); (hi - lo + 1) as usize];
    for (&n, c) in p {
        coeffs[(n - lo) as usize] = Complex64::new(rat_to_f64(c), 0.0);
    }
    DirPoly::new(lo, coeffs).ok()
}

/// `Σ c_n / n` exactly.
pub fn exact_at_one(p: &ExactPoly) -> Frac {
    let parts: Vec<Frac> = p
        .iter()
        .map(|(&n, c)| Frac::new(*c.numer(), c.denom() * n as i128))
        .collect();
    frac_sum(&parts)
}

#[derive(Clone, Debug)]
pub struct RamareBucket {
    pub nu: i64,
    /// `Σ_{p ∈ bucket} c_p p^{-s}`
    pub q: ExactPoly,
    /// `Σ_m b_m m^{-s} / (ω_{(P,Q]}(m) + 1)` over the bucket's `m` range.
    pub r: ExactPoly,
}

/// The Buchstab/Ramaré split of `Σ_{n ∈ W} a_n n^{-s}` with `a_n = f(n)·1[n has a prime factor in (P,Q]]`.
#[derive(Clone, Debug)]
pub struct RamareSplit {
    pub p: f64,
    pub q: f64,
    pub h: f64,
    pub original: ExactPoly,
    pub buckets: Vec<RamareBucket>,
    /// Pairs lost or gained when `X < mp ≤ 2X` is traded for the bucket's `m` range.
    pub boundary: ExactPoly,
    /// Terms with `p² | n`, where `p` is extracted from a non-squarefree position.
    pub collision: ExactPoly,
}

impl RamareSplit {
    /// Coefficients of `Σ_ν Q_ν R_ν + boundary + collision − original` that are non-zero.
    pub fn reassembly_residual(&self) -> ExactPoly {
        let mut acc = ExactPoly::new();
        for b in &self.buckets {
            for (&pn, pc) in &b.q {
                for (&m, rc) in &b.r {
                    add_to(&mut acc, pn * m, pc * rc);
                }
            }
        }
        for (&n, c) in self.boundary.iter().chain(&self.collision) {
            add_to(&mut acc, n, *c);
        }
        for (&n, c) in &self.original {
            add_to(&mut acc, n, -c);
        }
        acc
    }

    /// Both sides of the split at `s = 1`, each summed exactly; the right side
    /// multiplies `Q_ν(1)` by `R_ν(1)` instead of expanding coefficients.
    pub fn identity_at_one(&self) -> (Frac, Frac) {
        let lhs = exact_at_one(&self.original);
        let mut parts: Vec<Frac> =
            self.buckets.iter().map(|b| exact_at_one(&b.q).mul(&exact_at_one(&b.r))).collect();
        parts.push(exact_at_one(&self.boundary));
        parts.push(exact_at_one(&self.collision));
        (lhs, frac_sum(&parts))
    }

    pub fn factor_polys(&self) -> Vec<(DirPoly, DirPoly)> {
        self.buckets
            .iter()
            .filter_map(|b| Some((exact_to_dirpoly(&b.q)?, exact_to_dirpoly(&b.r)?)))
            .collect()
    }

    pub fn error_polys(&self) -> Vec<DirPoly> {
        [&self.boundary, &self.collision].into_iter().filter_map(exact_to_dirpoly).collect()
    }
}

/// The unsmoothed identity at `s = 1`:
/// `Σ a_n/n = Σ_p (c_p/p) Σ_{m: mp ∈ W} b_m/(m(ω(m)+1)) + Σ_{p|m} e_{m,p}/(mp)`.
/// Returns `(lhs, main, error)`.
pub fn ramare_identity_at_one(fw: &FactorWindow, f: &MultFn, p_lo: f64, q_hi: f64) -> Result<(Frac, Frac, Frac)> {
    let split = buchstab_ramare_split(fw, f, p_lo, q_hi, 1.0)?;
    let lhs = exact_at_one(&split.original);
    let err = exact_at_one(&split.collision);
    let mut main = ExactPoly::new();
    let ctx = SplitContext::new(fw, f, p_lo, q_hi)?;
    for &p in &ctx.primes {
        let cp = ctx.c(p);
        for m in ctx.window_lo.div_ceil(p)..=(ctx.window_hi / p) {
            add_to(&mut main, p * m, cp * ctx.weighted_b(m));
        }
    }
    Ok((lhs, exact_at_one(&main), err))
}

struct SplitContext<'a> {
    f: &'a MultFn,
    p_lo: f64,
    q_hi: f64,
    primes: Vec<u64>,
    window_lo: u64,
    window_hi: u64,
    m_window: FactorWindow,
}

impl<'a> SplitContext<'a> {
    fn new(fw: &FactorWindow, f: &'a MultFn, p_lo: f64, q_hi: f64) -> Result<Self> {
        let window_lo = fw.start();
        let window_hi = fw.end() - 1;
        let primes: Vec<u64> = crate::arith::sieve_primes((q_hi.floor() as u64).max(2))?
            .primes()
            .iter()
            .copied()
            .filter(|&p| (p as f64) > p_lo && (p as f64) <= q_hi)
            .collect();
        // m ranges over at most (window_lo / (Q e^{1}), window_hi / P e^{1}] for H ≥ 1.
        let m_hi = window_hi * 3 / primes.first().copied().unwrap_or(2).max(2) + 2;
        let m_window = factor_range(1, m_hi, &table_for(m_hi + 1))?;
        Ok(SplitContext { f, p_lo, q_hi, primes, window_lo, window_hi, m_window })
    }

    fn c(&self, p: u64) -> Rat {
        self.f.exact(p, 1).expect("exact rule")
    }

    fn omega(&self, m: u64) -> u32 {
        omega_in(self.m_window.at((m - 1) as usize), self.p_lo, self.q_hi)
    }

    fn b(&self, m: u64) -> Rat {
        self.f.eval_factors_exact(self.m_window.at((m - 1) as usize)).expect("exact rule")
    }

    fn weighted_b(&self, m: u64) -> Rat {
        self.b(m) / Rat::from_integer(self.omega(m) as i128 + 1)
    }
}

/// Split `Σ_{n∈W} a_n n^{-s}` into bucket products `Q_ν R_ν` plus explicit
/// boundary and collision polynomials.
///
/// `f` must be rational-valued; the split is exact. Primes are bucketed by
/// `e^{ν/H} < p ≤ e^{(ν+1)/H}` and `R_ν` runs over `L e^{-ν/H} < m ≤ U e^{-ν/H}`
/// where the window is `(L, U]`.
pub fn buchstab_ramare_split(fw: &FactorWindow, f: &MultFn, p_lo: f64, q_hi: f64, h: f64) -> Result<RamareSplit> {
    if !f.is_exact() {
        return domain(format!("{} is not rational-valued", f.name()));
    }
    if !(p_lo >= 1.0 && q_hi >= p_lo) {
        return domain(format!("need 1 ≤ P ≤ Q, got P = {p_lo}, Q = {q_hi}"));
    }
    if !(h >= 1.0) {
        return domain(format!("need H ≥ 1, got {h}"));
    }
    let ctx = SplitContext::new(fw, f, p_lo, q_hi)?;
    let (lo_excl, hi_incl) = (fw.start() - 1, fw.end() - 1);

    let mut original = ExactPoly::new();
    for (n, fs) in fw.iter() {
        if omega_in(fs, p_lo, q_hi) > 0 {
            add_to(&mut original, n, f.eval_factors_exact(fs).expect("exact rule"));
        }
    }
    let mut split = RamareSplit {
        p: p_lo,
        q: q_hi,
        h,
        original,
        buckets: Vec::new(),
        boundary: ExactPoly::new(),
        collision: ExactPoly::new(),
    };
    if split.original.is_empty() {
        return Ok(split);
    }

    let nu_of = |p: u64| ((h * (p as f64).ln()).ceil() as i64) - 1;
    // Integer m range of bucket ν: floor(L e^{-ν/H}) < m ≤ floor(U e^{-ν/H}).
    let m_range = |nu: i64| {
        let scale = (-(nu as f64) / h).exp();
        ((lo_excl as f64 * scale).floor() as u64, (hi_incl as f64 * scale).floor() as u64)
    };
    let in_window = |n: u64| n > lo_excl && n <= hi_incl;

    let mut by_bucket: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for &p in &ctx.primes {
        by_bucket.entry(nu_of(p)).or_default().push(p);
    }
    for (&nu, ps) in &by_bucket {
        let (m_lo, m_hi) = m_range(nu);
        let mut q = ExactPoly::new();
        for &p in ps {
            add_to(&mut q, p, ctx.c(p));
        }
        let mut r = ExactPoly::new();
        for m in (m_lo + 1).max(1)..=m_hi {
            add_to(&mut r, m, ctx.weighted_b(m));
        }
        for &p in ps {
            let cp = ctx.c(p);
            // m in the bucket range whose product leaves the window.
            for m in (m_lo + 1).max(1)..=m_hi {
                if !in_window(p * m) {
                    add_to(&mut split.boundary, p * m, -(cp * ctx.weighted_b(m)));
                }
            }
            // Products inside the window whose m is outside the bucket range.
            for m in (lo_excl / p + 1)..=(hi_incl / p) {
                if m <= m_lo || m > m_hi {
                    add_to(&mut split.boundary, p * m, cp * ctx.weighted_b(m));
                }
            }
            // Non-squarefree positions: a_{mp}/ω(m) − b_m c_p/(ω(m)+1) for p | m.
            for m in (lo_excl / p + 1)..=(hi_incl / p) {
                if m % p != 0 {
                    continue;
                }
                let n = p * m;
                let w = ctx.omega(m) as i128;
                let a_n = split.original.get(&n).copied().unwrap_or_else(Rat::zero);
                let e = a_n / Rat::from_integer(w) - cp * ctx.weighted_b(m);
                add_to(&mut split.collision, n, e);
            }
        }
        split.buckets.push(RamareBucket { nu, q, r });
    }
    Ok(split)
}
