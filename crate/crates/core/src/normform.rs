//! Monogenic quadratic and pure cubic fields: splitting of primes, the
//! ideal-norm indicator `Δ_K`, the norm-form indicator `g_K`, genus
//! decompositions at class number 2 and the associated densities.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::arith::{sieve_primes, FactorWindow, MultFn, PrimePower, Rat};
use crate::error::{domain, Error, Result};
use crate::numeric::{is_square, isqrt, KahanSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `x² − d`, `d` squarefree and `d ≢ 1 (mod 4)`.
    Quadratic { d: i64 },
    /// `x³ − 2`.
    PureCubic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NumberField {
    /// Coefficients, leading first.
    pub min_poly: Vec<i64>,
    pub degree: usize,
    pub poly_disc: i64,
    pub monogenic_ok: bool,
    pub kind: FieldKind,
}

impl fmt::Display for NumberField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let deg = self.degree;
        let mut first = true;
        for (i, &c) in self.min_poly.iter().enumerate() {
            let k = deg - i;
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.unsigned_abs();
            let body = match (k, mag) {
                (0, m) => m.to_string(),
                (1, 1) => "x".to_string(),
                (1, m) => format!("{m}x"),
                (k, 1) => format!("x^{k}"),
                (k, m) => format!("{m}x^{k}"),
            };
            write!(f, "{sign}{body}")?;
            first = false;
        }
        Ok(())
    }
}

/// Parse `x^2+5`, `x^3-2`, `x^2 - 3` and similar into leading-first coefficients.
pub fn parse_poly(text: &str) -> Result<Vec<i64>> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return domain("empty polynomial");
    }
    let bad = || Error::Domain(format!("cannot parse polynomial `{text}`"));
    let mut terms: Vec<(u32, i64)> = Vec::new();
    let mut rest = s.as_str();
    while !rest.is_empty() {
        let (sign, body) = match rest.as_bytes()[0] {
            b'+' => (1, &rest[1..]),
            b'-' => (-1, &rest[1..]),
            _ => (1, rest),
        };
        let end = body[1..].find(['+', '-']).map_or(body.len(), |i| i + 1);
        let term = &body[..end];
        rest = &body[end..];
        let (coef, power) = match term.split_once('x') {
            None => (term.parse::<i64>().map_err(|_| bad())?, 0),
            Some((c, p)) => {
                let c = match c.trim_end_matches('*') {
                    "" => 1,
                    c => c.parse::<i64>().map_err(|_| bad())?,
                };
                let p = match p {
                    "" => 1,
                    p => p.strip_prefix('^').ok_or_else(bad)?.parse::<u32>().map_err(|_| bad())?,
                };
                (c, p)
            }
        };
        terms.push((power, sign * coef));
    }
    let deg = terms.iter().map(|t| t.0).max().ok_or_else(bad)? as usize;
    let mut out = vec![0i64; deg + 1];
    for (p, c) in terms {
        out[deg - p as usize] += c;
    }
    Ok(out)
}

fn is_squarefree(mut n: u64) -> bool {
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p * p) {
            return false;
        }
        if n.is_multiple_of(p) {
            n /= p;
        }
        p += 1;
    }
    true
}

/// Largest `|d|` accepted for `x² − d`.
pub const MAX_QUADRATIC_D: i64 = 10_000;

/// A field from its minimal polynomial, leading coefficient first.
///
/// Only polynomials `α` with `ℤ[α]` the full ring of integers are accepted:
/// `x² − d` with `d` squarefree, `d ≢ 1 (mod 4)`, and `x³ − 2`.
pub fn define_field(coeffs: &[i64]) -> Result<NumberField> {
    let restriction = "supported fields are monogenic: x^2 - d (d squarefree, d ≢ 1 mod 4, |d| ≤ 10000) and x^3 - 2";
    if coeffs.first() != Some(&1) {
        return domain(format!("polynomial must be monic; {restriction}"));
    }
    match coeffs {
        [1, 0, c] => {
            let d = -c;
            if d == 0 || d == 1 || d.abs() > MAX_QUADRATIC_D || !is_squarefree(d.unsigned_abs()) || d.rem_euclid(4) == 1 {
                return domain(format!("x^2 - ({d}) is not supported; {restriction}"));
            }
            Ok(NumberField {
                min_poly: coeffs.to_vec(),
                degree: 2,
                poly_disc: 4 * d,
                monogenic_ok: true,
                kind: FieldKind::Quadratic { d },
            })
        }
        [1, 0, 0, -2] => Ok(NumberField {
            min_poly: coeffs.to_vec(),
            degree: 3,
            poly_disc: -108,
            monogenic_ok: true,
            kind: FieldKind::PureCubic,
        }),
        _ => domain(format!("unsupported polynomial {coeffs:?}; {restriction}")),
    }
}

/// Residue degrees and ramification indices of the primes above `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitType {
    pub p: u64,
    /// `(f_i, e_i)`, sorted.
    pub parts: Vec<(u32, u32)>,
}

impl SplitType {
    pub fn residue_degrees(&self) -> impl Iterator<Item = u32> + '_ {
        self.parts.iter().map(|&(f, _)| f)
    }

    /// Whether `v` lies in the numerical semigroup generated by the residue degrees.
    pub fn norm_exponent_ok(&self, v: u32) -> bool {
        let fs: Vec<u32> = self.residue_degrees().collect();
        let mut reach = vec![false; v as usize + 1];
        reach[0] = true;
        for k in 1..=v as usize {
            reach[k] = fs.iter().any(|&f| f as usize <= k && reach[k - f as usize]);
        }
        reach[v as usize]
    }

    pub fn min_residue_degree(&self) -> u32 {
        self.residue_degrees().min().unwrap_or(0)
    }
}

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    r
}

/// Polynomials mod `p`, lowest coefficient first, without trailing zeros.
type Poly = Vec<u64>;

fn trim(mut a: Poly) -> Poly {
    while a.last() == Some(&0) {
        a.pop();
    }
    a
}

fn poly_rem(mut a: Poly, b: &[u64], p: u64) -> Poly {
    let db = b.len() - 1;
    let inv = powmod(b[db], p - 2, p);
    while a.len() > db {
        let top = a.len() - 1;
        let q = mulmod(a[top], inv, p);
        if q != 0 {
            for (i, &bc) in b.iter().enumerate() {
                let idx = top - db + i;
                a[idx] = (a[idx] + p - mulmod(q, bc, p)) % p;
            }
        }
        a.pop();
        a = trim(a);
    }
    trim(a)
}

fn poly_mulmod(a: &[u64], b: &[u64], f: &[u64], p: u64) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + mulmod(x, y, p)) % p;
        }
    }
    poly_rem(trim(out), f, p)
}

fn poly_gcd(mut a: Poly, mut b: Poly, p: u64) -> Poly {
    while !b.is_empty() {
        let r = poly_rem(a, &b, p);
        a = b;
        b = r;
    }
    a
}

/// Roots of `f` mod `p` with multiplicity, by trying every residue.
fn roots_with_multiplicity(f: &[u64], p: u64) -> (Vec<u32>, usize) {
    let mut g = f.to_vec();
    let mut mults = Vec::new();
    for r in 0..p {
        let mut m = 0;
        loop {
            // Synthetic division by (x − r).
            let n = g.len();
            if n < 2 {
                break;
            }
            let mut q = vec![0u64; n - 1];
            let mut carry = 0u64;
            for i in (0..n).rev() {
                carry = (g[i] + mulmod(carry, r, p)) % p;
                if i > 0 {
                    q[i - 1] = carry;
                }
            }
            if carry != 0 {
                break;
            }
            g = q;
            m += 1;
        }
        if m > 0 {
            mults.push(m);
        }
        if g.len() <= 1 {
            break;
        }
    }
    (mults, g.len() - 1)
}

impl NumberField {
    /// Minimal polynomial mod `p`, lowest coefficient first.
    fn poly_mod(&self, p: u64) -> Poly {
        self.min_poly.iter().rev().map(|&c| c.rem_euclid(p as i64) as u64).collect()
    }

    pub fn is_imaginary_quadratic(&self) -> bool {
        matches!(self.kind, FieldKind::Quadratic { d } if d < 0)
    }
}

/// Factor the minimal polynomial mod `p`: one `(degree, multiplicity)` per irreducible factor.
pub fn dedekind_split(k: &NumberField, p: u64) -> Result<SplitType> {
    if p < 2 || !crate::arith::is_prime_u64(p) {
        return domain(format!("{p} is not prime"));
    }
    let f = k.poly_mod(p);
    let deg = k.degree;
    let mut parts: Vec<(u32, u32)> = Vec::new();
    if p < 64 || k.poly_disc.unsigned_abs().is_multiple_of(p) {
        let (mults, rest) = roots_with_multiplicity(&f, p);
        parts.extend(mults.iter().map(|&m| (1, m)));
        // Degree ≤ 3: a rootless remainder is irreducible.
        if rest > 0 {
            parts.push((rest as u32, 1));
        }
    } else {
        // p ∤ disc, so factors are distinct and the root count is deg gcd(x^p − x, f).
        let mut xp: Poly = vec![1];
        let mut base: Poly = poly_rem(vec![0, 1], &f, p);
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                xp = poly_mulmod(&xp, &base, &f, p);
            }
            base = poly_mulmod(&base, &base, &f, p);
            e >>= 1;
        }
        let mut h = xp;
        h.resize(h.len().max(2), 0);
        h[1] = (h[1] + p - 1) % p;
        let g = poly_gcd(f.clone(), trim(h), p);
        let roots = g.len().saturating_sub(1);
        parts.extend(std::iter::repeat_n((1, 1), roots));
        if roots < deg {
            parts.push(((deg - roots) as u32, 1));
        }
    }
    parts.sort_unstable();
    Ok(SplitType { p, parts })
}

/// `Δ_K(p^v)`.
pub fn delta_prime_power(k: &NumberField, p: u64, v: u32) -> bool {
    v == 0 || dedekind_split(k, p).map(|s| s.norm_exponent_ok(v)).unwrap_or(false)
}

pub fn delta_of_factors(k: &NumberField, fs: &[PrimePower]) -> bool {
    fs.iter().all(|pp| delta_prime_power(k, pp.p, pp.e as u32))
}

/// `Δ_K(n)`: whether `n` is the norm of an integral ideal.
pub fn ideal_norm_indicator(k: &NumberField, n: u64, fw: &FactorWindow) -> Result<bool> {
    if n == 1 {
        return Ok(true);
    }
    Ok(delta_of_factors(k, fw.factors_of(n)?))
}

/// Whether `n = x² + c y²` for some integers, `c ≥ 1`.
pub fn represented_by_principal(c: u64, n: u64) -> bool {
    let ymax = isqrt(n / c);
    (0..=ymax).any(|y| is_square(n - c * y * y))
}

fn g_of_factors(k: &NumberField, n: u64, fs: &[PrimePower]) -> Result<bool> {
    match k.kind {
        FieldKind::Quadratic { d: -1 } => Ok(fs.iter().all(|pp| pp.p % 4 != 3 || pp.e % 2 == 0)),
        FieldKind::Quadratic { d } if d < 0 => Ok(represented_by_principal(d.unsigned_abs(), n)),
        FieldKind::Quadratic { d } => domain(format!(
            "norm forms of the real quadratic field x^2 - {d} are not supported (infinite unit group)"
        )),
        // Class number one and a unit of norm −1.
        FieldKind::PureCubic => Ok(delta_of_factors(k, fs)),
    }
}

/// `g_K(n)`: whether `n` is the norm of an algebraic integer of `K`.
pub fn normform_indicator(k: &NumberField, n: u64, fw: &FactorWindow) -> Result<bool> {
    if n == 1 {
        return Ok(true);
    }
    g_of_factors(k, n, fw.factors_of(n)?)
}

/// Class data of an imaginary quadratic field `ℚ(√−c)` with `D = −4c`.
#[derive(Clone, Debug, Serialize)]
pub struct QuadClassData {
    pub disc: i64,
    pub class_number: u32,
    pub principal_form: (i64, i64, i64),
    /// Odd prime `q | c` whose Legendre symbol separates the two classes when `h = 2`.
    pub genus_prime: Option<u64>,
    /// Reduced forms `(a, b, c)` of discriminant `D`.
    pub reduced_forms: Vec<(i64, i64, i64)>,
}

impl QuadClassData {
    /// Genus character at `p`: 0 on primes with `Δ_K(p) = 0`, ±1 otherwise.
    /// Only defined for class number 1 or 2.
    pub fn genus_character(&self, k: &NumberField, p: u64) -> i8 {
        let split = dedekind_split(k, p).expect("p prime");
        if split.min_residue_degree() > 1 {
            return 0;
        }
        if self.class_number == 1 {
            return 1;
        }
        let c = (-self.disc / 4) as u64;
        match self.genus_prime {
            Some(q) if p != q && !c.is_multiple_of(p) && p != 2 => legendre(p % q, q),
            // Ramified primes: the prime above p is principal iff p is a norm.
            _ => {
                if represented_by_principal(c, p) {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

fn legendre(a: u64, q: u64) -> i8 {
    match powmod(a, (q - 1) / 2, q) {
        0 => 0,
        1 => 1,
        _ => -1,
    }
}

/// Reduced forms of discriminant `disc < 0`: `|b| ≤ a ≤ c`, `b ≥ 0` when `|b| = a` or `a = c`.
pub fn reduced_forms(disc: i64) -> Vec<(i64, i64, i64)> {
    let mut out = Vec::new();
    let amax = ((-disc) as f64 / 3.0).sqrt() as i64 + 1;
    for a in 1..=amax {
        for b in -a..=a {
            let num = b * b - disc;
            if num % (4 * a) != 0 {
                continue;
            }
            let c = num / (4 * a);
            if c < a || (b < 0 && (b.abs() == a || a == c)) {
                continue;
            }
            out.push((a, b, c));
        }
    }
    out
}

pub fn quad_class_data(k: &NumberField) -> Result<QuadClassData> {
    let FieldKind::Quadratic { d } = k.kind else {
        return domain("class data is only available for quadratic fields");
    };
    if d > 0 {
        return domain("class data is only available for imaginary quadratic fields");
    }
    let c = d.unsigned_abs();
    let forms = reduced_forms(k.poly_disc);
    let genus_prime = (3..=c).step_by(2).find(|&q| c % q == 0 && crate::arith::is_prime_u64(q));
    Ok(QuadClassData {
        disc: k.poly_disc,
        class_number: forms.len() as u32,
        principal_form: (1, 0, c as i64),
        genus_prime,
        reduced_forms: forms,
    })
}

/// `g_K = c₀ f₀ + c₁ f₁` at class number 2.
#[derive(Clone, Debug)]
pub struct GenusSplit {
    pub f0: MultFn,
    pub f1: MultFn,
    pub weights: [Rat; 2],
    pub class_data: QuadClassData,
}

/// `f₀ = Δ_K` and `f₁ = χ·Δ_K`, with `χ` the genus character extended
/// completely multiplicatively on primes of degree one.
pub fn genus_split_decomposition(k: &NumberField) -> Result<GenusSplit> {
    let data = quad_class_data(k)?;
    if data.class_number != 2 {
        return domain(format!("the genus decomposition needs class number 2, {k} has {}", data.class_number));
    }
    let field = Arc::new(k.clone());
    let shared = Arc::new(data.clone());
    let kf = field.clone();
    let f0 = MultFn::custom_exact(format!("delta[{k}]"), move |p, e| {
        Rat::from_integer(delta_prime_power(&kf, p, e) as i128)
    });
    let f1 = MultFn::custom_exact(format!("genus[{k}]"), move |p, e| {
        let split = dedekind_split(&field, p).expect("p prime");
        if split.min_residue_degree() > 1 {
            return Rat::from_integer(split.norm_exponent_ok(e) as i128);
        }
        let chi = shared.genus_character(&field, p) as i128;
        Rat::from_integer(if e % 2 == 0 { 1 } else { chi })
    });
    Ok(GenusSplit { f0, f1, weights: [Rat::new(1, 2), Rat::new(1, 2)], class_data: data })
}

/// `∏_{p ≤ X}(1 − 1/p)` over primes with no ideal of norm `p`.
pub fn delta_k_x(k: &NumberField, x: u64) -> Result<f64> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    let mut log = KahanSum::new();
    for &p in sieve_primes(x)?.primes() {
        if dedekind_split(k, p)?.min_residue_degree() > 1 {
            log.add_re((-1.0 / p as f64).ln_1p());
        }
    }
    Ok(log.value().re.exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct PrimeDensity {
    pub lhs: f64,
    pub alpha_hat: f64,
}

/// `Σ_{w<p≤z} g_K(p)/p` and its ratio to `Σ_{w<p≤z} 1/p`.
pub fn prime_normform_density(k: &NumberField, w: f64, z: f64) -> Result<PrimeDensity> {
    if !(w >= 2.0 && w < z) {
        return domain(format!("need 2 ≤ w < z, got w = {w}, z = {z}"));
    }
    let mut hit = KahanSum::new();
    let mut all = KahanSum::new();
    for &p in sieve_primes(z.floor() as u64)?.primes() {
        if (p as f64) <= w {
            continue;
        }
        let inv = 1.0 / p as f64;
        all.add_re(inv);
        if g_of_factors(k, p, &[PrimePower { p, e: 1 }])? {
            hit.add_re(inv);
        }
    }
    let lhs = hit.value().re;
    let total = all.value().re;
    if total == 0.0 {
        return domain(format!("no primes in ({w}, {z}]"));
    }
    Ok(PrimeDensity { lhs, alpha_hat: lhs / total })
}
