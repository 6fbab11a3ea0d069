//! Primes, windowed factorization and multiplicative functions.
//!
//! A [`FactorWindow`] holds the complete factorization of every integer in a
//! half-open range, built by segmented sieving with a [`PrimeTable`] that reaches
//! the square root of the range end. A [`MultFn`] is given by its values on prime
//! powers and is evaluated through a window.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{domain, precondition, Error, Result};
use crate::numeric::{isqrt, KahanSum};

/// Exact rational value type used for real rational-valued functions.
pub type Rat = Ratio<i128>;

#[derive(Clone, Debug)]
pub struct PrimeTable {
    limit: u64,
    primes: Vec<u64>,
}

impl PrimeTable {
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Primes `p ≤ x` (clipped to the table).
    pub fn up_to(&self, x: u64) -> &[u64] {
        &self.primes[..self.primes.partition_point(|&p| p <= x)]
    }

    /// Primes in `(lo, hi]`.
    pub fn between(&self, lo: u64, hi: u64) -> &[u64] {
        let a = self.primes.partition_point(|&p| p <= lo);
        let b = self.primes.partition_point(|&p| p <= hi);
        &self.primes[a..b.max(a)]
    }

    /// Membership test, valid for `n ≤ limit`.
    pub fn contains(&self, n: u64) -> bool {
        self.primes.binary_search(&n).is_ok()
    }
}

/// All primes up to `limit` by an odd-only sieve of Eratosthenes.
pub fn sieve_primes(limit: u64) -> Result<PrimeTable> {
    if limit < 2 {
        return domain(format!("prime limit must be at least 2, got {limit}"));
    }
    let half = ((limit - 1) / 2) as usize; // index i stands for 2i+1, i ≥ 1
    let mut composite = vec![false; half + 1];
    let mut i = 1usize;
    while (2 * i + 1) * (2 * i + 1) <= limit as usize {
        if !composite[i] {
            let p = 2 * i + 1;
            let mut j = (p * p) / 2;
            while j <= half {
                composite[j] = true;
                j += p;
            }
        }
        i += 1;
    }
    let mut primes = Vec::with_capacity(estimate_pi(limit));
    primes.push(2);
    primes.extend((1..=half).filter(|&i| !composite[i]).map(|i| 2 * i as u64 + 1));
    Ok(PrimeTable { limit, primes })
}

fn estimate_pi(x: u64) -> usize {
    let xf = x as f64;
    (1.3 * xf / xf.ln().max(1.0)) as usize + 16
}

/// A prime power `p^e` inside a factorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimePower {
    pub p: u64,
    pub e: u8,
}

/// Complete factorizations of every integer in `[start, start + len)`.
#[derive(Clone, Debug)]
pub struct FactorWindow {
    start: u64,
    offsets: Vec<u32>,
    factors: Vec<PrimePower>,
}

impl FactorWindow {
    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One past the last integer in the window.
    pub fn end(&self) -> u64 {
        self.start + self.len() as u64
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.start && n < self.end()
    }

    /// Factorization of `start + i`.
    pub fn at(&self, i: usize) -> &[PrimePower] {
        &self.factors[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn factors_of(&self, n: u64) -> Result<&[PrimePower]> {
        if !self.contains(n) {
            return Err(Error::Range(format!(
                "{n} outside window [{}, {})",
                self.start,
                self.end()
            )));
        }
        Ok(self.at((n - self.start) as usize))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[PrimePower])> + '_ {
        (0..self.len()).map(move |i| (self.start + i as u64, self.at(i)))
    }
}

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut a: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, a);
            }
            a = mul(a, a);
            e >>= 1;
        }
        r
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Factor `[start, start + len)` with `start ≥ 2`.
pub fn factor_window(start: u64, len: u64, aux: &PrimeTable) -> Result<FactorWindow> {
    if start < 2 {
        return domain(format!("window start must be at least 2, got {start}"));
    }
    if len == 0 {
        return domain("window length must be positive");
    }
    factor_range(start, len, aux)
}

/// Like [`factor_window`] but also admits `start = 1` (empty factorization).
pub(crate) fn factor_range(start: u64, len: u64, aux: &PrimeTable) -> Result<FactorWindow> {
    let end = start
        .checked_add(len)
        .ok_or_else(|| Error::Domain("window end overflows u64".into()))?;
    let need = isqrt(end);
    if aux.limit() < need {
        return precondition(format!(
            "prime table reaches {} but the window needs primes up to {need}",
            aux.limit()
        ));
    }
    let sieving = aux.up_to(isqrt(end - 1));
    let mut offsets = Vec::with_capacity(len as usize + 1);
    let mut factors = Vec::with_capacity(len as usize * 3);
    offsets.push(0u32);

    const SEG: u64 = 1 << 15;
    const CAP: usize = 16;
    let seg = SEG.min(len) as usize;
    let mut rem = vec![0u64; seg];
    let mut count = vec![0u8; seg];
    let mut slots = vec![PrimePower { p: 0, e: 0 }; seg * CAP];

    let mut lo = start;
    while lo < end {
        let hi = (lo + SEG).min(end);
        let m = (hi - lo) as usize;
        for i in 0..m {
            rem[i] = lo + i as u64;
            count[i] = 0;
        }
        for &p in sieving {
            if p * p >= hi {
                break;
            }
            let first = lo.div_ceil(p) * p;
            let mut n = first;
            while n < hi {
                let i = (n - lo) as usize;
                let mut r = rem[i] / p;
                let mut e = 1u8;
                while r.is_multiple_of(p) {
                    r /= p;
                    e += 1;
                }
                rem[i] = r;
                slots[i * CAP + count[i] as usize] = PrimePower { p, e };
                count[i] += 1;
                n += p;
            }
        }
        for i in 0..m {
            factors.extend_from_slice(&slots[i * CAP..i * CAP + count[i] as usize]);
            if rem[i] > 1 {
                factors.push(PrimePower { p: rem[i], e: 1 });
            }
            let off = u32::try_from(factors.len())
                .map_err(|_| Error::Domain("window too large for one FactorWindow".into()))?;
            offsets.push(off);
        }
        lo = hi;
    }
    Ok(FactorWindow { start, offsets, factors })
}

/// Stream `[start, start + len)` through windows of at most `seg` integers.
pub fn for_each_window(
    start: u64,
    len: u64,
    seg: u64,
    aux: &PrimeTable,
    mut visit: impl FnMut(&FactorWindow),
) -> Result<()> {
    let end = start + len;
    let mut lo = start;
    while lo < end {
        let n = seg.min(end - lo);
        let fw = factor_range(lo, n, aux)?;
        visit(&fw);
        lo += n;
    }
    Ok(())
}

/// Prime table large enough to factor integers below `end`.
pub fn table_for(end: u64) -> PrimeTable {
    sieve_primes(isqrt(end).max(2) + 1).expect("limit ≥ 2")
}

/// Window segment length used by streaming scans.
pub const SCAN_SEGMENT: u64 = 1 << 16;

type ValueRule = Arc<dyn Fn(u64, u32) -> Complex64 + Send + Sync>;
type ExactRule = Arc<dyn Fn(u64, u32) -> Rat + Send + Sync>;

#[derive(Clone)]
enum Rule {
    One,
    Moebius,
    Liouville,
    Nit(f64),
    OmegaGeom { eps: f64, exact: Option<Rat> },
    TwoSquares,
    SmoothAt { bound: u64 },
    CharMod4,
    Twisted { base: Arc<MultFn>, tau: f64 },
    Abs(Arc<MultFn>),
    Sifted { base: Arc<MultFn>, ranges: Arc<[(f64, f64)]> },
    Custom { value: ValueRule, exact: Option<ExactRule>, real: bool },
}

/// A multiplicative function with values in the closed unit disc.
#[derive(Clone)]
pub struct MultFn {
    name: String,
    rule: Rule,
    almost_real: bool,
}

impl fmt::Debug for MultFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultFn")
            .field("name", &self.name)
            .field("almost_real", &self.almost_real)
            .finish()
    }
}

/// Names accepted by [`builtin_fn`].
pub const BUILTIN_NAMES: &[&str] = &[
    "one",
    "moebius",
    "liouville",
    "nit",
    "omega_geom",
    "two_squares",
    "smooth_at",
    "char_mod4",
];

/// Look up a built-in function by name with its numeric parameters.
pub fn builtin_fn(name: &str, params: &[f64]) -> Result<MultFn> {
    let arity = |k: usize| -> Result<()> {
        if params.len() != k {
            return domain(format!("{name} takes {k} parameter(s), got {}", params.len()));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return domain(format!("{name}: parameters must be finite"));
        }
        Ok(())
    };
    let (label, rule, almost_real) = match name {
        "one" => {
            arity(0)?;
            ("one".to_string(), Rule::One, true)
        }
        "moebius" | "mu" => {
            arity(0)?;
            ("moebius".to_string(), Rule::Moebius, true)
        }
        "liouville" => {
            arity(0)?;
            ("liouville".to_string(), Rule::Liouville, true)
        }
        "nit" => {
            arity(1)?;
            let tau = params[0];
            (format!("nit({tau})"), Rule::Nit(tau), tau == 0.0)
        }
        "omega_geom" => {
            arity(1)?;
            let eps = params[0];
            if !(0.0..=1.0).contains(&eps) {
                return domain(format!("omega_geom needs ε in [0, 1], got {eps}"));
            }
            (format!("omega_geom({eps})"), Rule::OmegaGeom { eps, exact: dyadic(eps) }, true)
        }
        "two_squares" => {
            arity(0)?;
            ("two_squares".to_string(), Rule::TwoSquares, true)
        }
        "smooth_at" => {
            arity(2)?;
            let (theta, x) = (params[0], params[1]);
            if !(theta > 0.0 && theta <= 1.0) {
                return domain(format!("smooth_at needs θ in (0, 1], got {theta}"));
            }
            if x < 2.0 {
                return domain(format!("smooth_at needs X ≥ 2, got {x}"));
            }
            let bound = (x.powf(theta) * (1.0 + 1e-12)).floor() as u64;
            (format!("smooth_at({theta},{x})"), Rule::SmoothAt { bound }, true)
        }
        "char_mod4" => {
            arity(0)?;
            ("char_mod4".to_string(), Rule::CharMod4, true)
        }
        other => return domain(format!("unknown function `{other}`")),
    };
    Ok(MultFn { name: label, rule, almost_real })
}

/// `ε` as an exact fraction when it has a short binary expansion.
fn dyadic(eps: f64) -> Option<Rat> {
    let scaled = eps * (1u64 << 20) as f64;
    (scaled.fract() == 0.0).then(|| Rat::new(scaled as i128, 1 << 20))
}

impl MultFn {
    /// Parse `name` or `name(p1,p2,...)`.
    pub fn parse(spec: &str) -> Result<MultFn> {
        let spec = spec.trim();
        let (name, params) = match spec.split_once('(') {
            None => (spec, Vec::new()),
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Domain(format!("unbalanced parentheses in `{spec}`")))?;
                let params = inner
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Domain(format!("bad parameter `{s}` in `{spec}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (name.trim(), params)
            }
        };
        builtin_fn(name, &params)
    }

    /// A function from a user-supplied prime-power rule. `real` declares that
    /// every value is real, which also sets the almost-real flag.
    pub fn custom(
        name: impl Into<String>,
        real: bool,
        value: impl Fn(u64, u32) -> Complex64 + Send + Sync + 'static,
    ) -> MultFn {
        MultFn {
            name: name.into(),
            rule: Rule::Custom { value: Arc::new(value), exact: None, real },
            almost_real: real,
        }
    }

    /// Override the almost-real flag.
    pub fn with_almost_real(mut self, flag: bool) -> MultFn {
        self.almost_real = flag;
        self
    }

    /// A real rational-valued function given exactly on prime powers.
    pub fn custom_exact(
        name: impl Into<String>,
        exact: impl Fn(u64, u32) -> Rat + Send + Sync + 'static,
    ) -> MultFn {
        let exact: ExactRule = Arc::new(exact);
        let e2 = exact.clone();
        MultFn {
            name: name.into(),
            rule: Rule::Custom {
                value: Arc::new(move |p, k| Complex64::new(rat_to_f64(&e2(p, k)), 0.0)),
                exact: Some(exact),
                real: true,
            },
            almost_real: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn almost_real(&self) -> bool {
        self.almost_real
    }

    /// `f(n)·n^{iτ}`.
    pub fn twisted(&self, tau: f64) -> MultFn {
        MultFn {
            name: format!("{}*n^i{}", self.name, tau),
            rule: Rule::Twisted { base: Arc::new(self.clone()), tau },
            almost_real: self.almost_real && tau == 0.0,
        }
    }

    /// `|f|`.
    pub fn abs(&self) -> MultFn {
        MultFn {
            name: format!("|{}|", self.name),
            rule: Rule::Abs(Arc::new(self.clone())),
            almost_real: true,
        }
    }

    /// `f` with every prime power `p^k`, `p ∈ (lo, hi]` for some range, sent to 0.
    pub fn sifted(&self, ranges: &[(f64, f64)]) -> MultFn {
        MultFn {
            name: format!("{}|sifted", self.name),
            rule: Rule::Sifted { base: Arc::new(self.clone()), ranges: ranges.into() },
            almost_real: self.almost_real,
        }
    }

    /// Value at `p^k`, `k ≥ 1`.
    pub fn value(&self, p: u64, k: u32) -> Complex64 {
        let real = |x: f64| Complex64::new(x, 0.0);
        match &self.rule {
            Rule::One => real(1.0),
            Rule::Moebius => real(if k == 1 { -1.0 } else { 0.0 }),
            Rule::Liouville => real(if k % 2 == 1 { -1.0 } else { 1.0 }),
            Rule::Nit(tau) => Complex64::from_polar(1.0, tau * k as f64 * (p as f64).ln()),
            Rule::OmegaGeom { eps, .. } => real(eps.powi(k as i32)),
            Rule::TwoSquares => real(if p % 4 == 3 && k % 2 == 1 { 0.0 } else { 1.0 }),
            Rule::SmoothAt { bound } => real(if p <= *bound { 1.0 } else { 0.0 }),
            Rule::CharMod4 => real(match p % 4 {
                1 => 1.0,
                3 => {
                    if k % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                _ => 0.0,
            }),
            Rule::Twisted { base, tau } => {
                base.value(p, k) * Complex64::from_polar(1.0, tau * k as f64 * (p as f64).ln())
            }
            Rule::Abs(base) => real(base.value(p, k).norm()),
            Rule::Sifted { base, ranges } => {
                if in_ranges(p, ranges) {
                    Complex64::zero()
                } else {
                    base.value(p, k)
                }
            }
            Rule::Custom { value, .. } => value(p, k),
        }
    }

    /// Exact value at `p^k` when the function is real and rational.
    pub fn exact(&self, p: u64, k: u32) -> Option<Rat> {
        let int = |x: i128| Some(Rat::from_integer(x));
        match &self.rule {
            Rule::One => int(1),
            Rule::Moebius => int(if k == 1 { -1 } else { 0 }),
            Rule::Liouville => int(if k % 2 == 1 { -1 } else { 1 }),
            Rule::Nit(tau) => (*tau == 0.0).then(Rat::one),
            Rule::OmegaGeom { exact, .. } => exact.map(|e| pow_rat(e, k)),
            Rule::TwoSquares | Rule::SmoothAt { .. } | Rule::CharMod4 => {
                let v = self.value(p, k).re;
                int(v as i128)
            }
            Rule::Twisted { base, tau } => {
                if *tau == 0.0 {
                    base.exact(p, k)
                } else {
                    None
                }
            }
            Rule::Abs(base) => base.exact(p, k).map(|r| r.abs()),
            Rule::Sifted { base, ranges } => {
                if in_ranges(p, ranges) {
                    Some(Rat::zero())
                } else {
                    base.exact(p, k)
                }
            }
            Rule::Custom { exact, .. } => exact.as_ref().map(|e| e(p, k)),
        }
    }

    /// Whether [`MultFn::exact`] is available on every prime power.
    pub fn is_exact(&self) -> bool {
        match &self.rule {
            Rule::One
            | Rule::Moebius
            | Rule::Liouville
            | Rule::TwoSquares
            | Rule::SmoothAt { .. }
            | Rule::CharMod4 => true,
            Rule::Nit(tau) => *tau == 0.0,
            Rule::OmegaGeom { exact, .. } => exact.is_some(),
            Rule::Twisted { base, tau } => *tau == 0.0 && base.is_exact(),
            Rule::Abs(base) | Rule::Sifted { base, .. } => base.is_exact(),
            Rule::Custom { exact, .. } => exact.is_some(),
        }
    }

    /// Whether every value is real.
    pub fn is_real(&self) -> bool {
        match &self.rule {
            Rule::Nit(tau) => *tau == 0.0,
            Rule::Twisted { base, tau } => *tau == 0.0 && base.is_real(),
            Rule::Sifted { base, .. } => base.is_real(),
            Rule::Custom { real, .. } => *real,
            _ => true,
        }
    }

    /// `f(n)` from a factorization.
    pub fn eval_factors(&self, fs: &[PrimePower]) -> Complex64 {
        let mut v = Complex64::one();
        for pp in fs {
            v *= self.value(pp.p, pp.e as u32);
            if v.re == 0.0 && v.im == 0.0 {
                break;
            }
        }
        v
    }

    /// Exact `f(n)` from a factorization.
    pub fn eval_factors_exact(&self, fs: &[PrimePower]) -> Option<Rat> {
        let mut v = Rat::one();
        for pp in fs {
            v *= self.exact(pp.p, pp.e as u32)?;
            if v.is_zero() {
                break;
            }
        }
        Some(v)
    }
}

fn in_ranges(p: u64, ranges: &[(f64, f64)]) -> bool {
    let x = p as f64;
    ranges.iter().any(|&(lo, hi)| x > lo && x <= hi)
}

fn pow_rat(r: Rat, k: u32) -> Rat {
    let mut out = Rat::one();
    for _ in 0..k {
        out *= r;
    }
    out
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

/// `f(n)` for `n` inside `fw`.
pub fn eval_fn(f: &MultFn, n: u64, fw: &FactorWindow) -> Result<Complex64> {
    let fs = fw.factors_of(n)?;
    Ok(match (f.is_exact(), f.eval_factors_exact(fs)) {
        (true, Some(r)) => Complex64::new(rat_to_f64(&r), 0.0),
        _ => f.eval_factors(fs),
    })
}

/// `f` at every offset of `fw`.
pub fn window_eval(f: &MultFn, fw: &FactorWindow) -> Vec<Complex64> {
    // Products of values in {0, ±1} or of one dyadic ε are exact in f64;
    // other exact rules go through rationals.
    let through_rationals = f.is_exact() && !float_exact(f);
    (0..fw.len())
        .map(|i| {
            if through_rationals {
                let r = f.eval_factors_exact(fw.at(i)).expect("exact rule");
                Complex64::new(rat_to_f64(&r), 0.0)
            } else {
                f.eval_factors(fw.at(i))
            }
        })
        .collect()
}

fn float_exact(f: &MultFn) -> bool {
    match &f.rule {
        Rule::One
        | Rule::Moebius
        | Rule::Liouville
        | Rule::TwoSquares
        | Rule::SmoothAt { .. }
        | Rule::CharMod4
        | Rule::OmegaGeom { .. } => true,
        Rule::Abs(b) | Rule::Sifted { base: b, .. } => float_exact(b),
        Rule::Twisted { base, tau } => *tau == 0.0 && float_exact(base),
        Rule::Nit(_) | Rule::Custom { .. } => false,
    }
}

/// `(1/X) Σ_{X<n≤2X} f(n) n^{-it}`.
pub fn long_mean(f: &MultFn, x: u64, t: f64) -> Result<Complex64> {
    if x < 2 {
        return domain(format!("long_mean needs X ≥ 2, got {x}"));
    }
    let aux = table_for(2 * x + 1);
    let mut acc = KahanSum::new();
    for_each_window(x + 1, x, SCAN_SEGMENT, &aux, |fw| {
        for (v, (n, _)) in window_eval(f, fw).into_iter().zip(fw.iter()) {
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            let w = if t == 0.0 {
                v
            } else {
                v * Complex64::from_polar(1.0, -t * (n as f64).ln())
            };
            acc.add(w);
        }
    })?;
    Ok(acc.value() / x as f64)
}

/// `Σ_{p ≤ X, f(p) ∉ ℝ} |f(p)|/p`, the budget behind the almost-real flag.
pub fn non_real_mass(f: &MultFn, primes: &[u64]) -> f64 {
    primes
        .iter()
        .map(|&p| {
            let v = f.value(p, 1);
            if v.im.abs() > 1e-12 {
                v.norm() / p as f64
            } else {
                0.0
            }
        })
        .sum()
}

/// Number of prime factors of `fs` in `(lo, hi]`, counted without multiplicity.
pub fn omega_in(fs: &[PrimePower], lo: f64, hi: f64) -> u32 {
    fs.iter().filter(|pp| (pp.p as f64) > lo && (pp.p as f64) <= hi).count() as u32
}

/// `p^e*p^e` rendering used by the CLI.
pub fn format_factorization(fs: &[PrimePower]) -> String {
    fs.iter().map(|pp| format!("{}^{}", pp.p, pp.e)).collect::<Vec<_>>().join("*")
}
