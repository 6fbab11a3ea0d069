//! Numerical helpers shared by the analytic modules: compensated sums, a
//! rotation-recurrence evaluator for exponential sums on uniform grids,
//! exact big-rational folds and `%g` style float formatting.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, Zero};

/// Neumaier compensated accumulator for complex values.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    #[inline]
    pub fn add_re(&mut self, x: f64) {
        neumaier(&mut self.re, &mut self.re_c, x);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

/// Compensated sum of real numbers.
pub fn ksum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add_re(x);
    }
    acc.value().re
}

/// Exponential sum `S(t) = Σ_k c_k e^{-i t ω_k}` prepared for repeated evaluation.
///
/// Grid evaluation multiplies each term by `e^{-i Δ ω_k}` per step instead of
/// calling `sin_cos`, restarting from exact phases every [`RotationBank::BLOCK`]
/// steps to keep the drift at rounding level. Summation order is fixed, so the
/// result does not depend on how the work is scheduled.
#[derive(Clone, Debug)]
pub struct RotationBank {
    freq: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

const LANES: usize = 8;
const CHUNK: usize = 256;

impl RotationBank {
    pub const BLOCK: usize = 512;

    /// Zero coefficients are dropped.
    pub fn new(terms: impl IntoIterator<Item = (f64, Complex64)>) -> Self {
        let mut freq = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (w, c) in terms {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            freq.push(w);
            re.push(c.re);
            im.push(c.im);
        }
        while freq.len() % LANES != 0 {
            freq.push(0.0);
            re.push(0.0);
            im.push(0.0);
        }
        Self { freq, re, im }
    }

    pub fn terms(&self) -> usize {
        self.freq.len()
    }

    /// Direct evaluation with compensated summation.
    pub fn eval(&self, t: f64) -> Complex64 {
        let mut acc = KahanSum::new();
        for k in 0..self.freq.len() {
            let (s, c) = (t * self.freq[k]).sin_cos();
            let (a, b) = (self.re[k], self.im[k]);
            // (a + ib)(c - is)
            acc.add(Complex64::new(a * c + b * s, b * c - a * s));
        }
        acc.value()
    }

    /// Values at `t0 + j·step` for `j < count`.
    pub fn grid(&self, t0: f64, step: f64, count: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::zero(); count];
        let n = self.freq.len();
        let mut zr = [0.0f64; CHUNK];
        let mut zi = [0.0f64; CHUNK];
        let mut wr = [0.0f64; CHUNK];
        let mut wi = [0.0f64; CHUNK];
        let mut kb = 0;
        while kb < count {
            let nk = Self::BLOCK.min(count - kb);
            let t_start = t0 + kb as f64 * step;
            let mut start = 0;
            while start < n {
                let m = CHUNK.min(n - start);
                for j in 0..m {
                    let f = self.freq[start + j];
                    let (s, c) = (t_start * f).sin_cos();
                    let (a, b) = (self.re[start + j], self.im[start + j]);
                    zr[j] = a * c + b * s;
                    zi[j] = b * c - a * s;
                    let (ds, dc) = (step * f).sin_cos();
                    wr[j] = dc;
                    wi[j] = -ds;
                }
                rotate_block(&mut zr[..m], &mut zi[..m], &wr[..m], &wi[..m], &mut out[kb..kb + nk]);
                start += m;
            }
            kb += nk;
        }
        out
    }
}

/// Accumulate `Σ z` into each output slot, advancing `z ← z·w` between slots.
///
/// The lane structure is fixed, so the AVX2 build of this loop produces the
/// same bits as the portable one (no fused multiply-add is ever emitted).
#[inline(always)]
fn rotate_block_body(zr: &mut [f64], zi: &mut [f64], wr: &[f64], wi: &[f64], out: &mut [Complex64]) {
    let (zr, _) = zr.as_chunks_mut::<LANES>();
    let (zi, _) = zi.as_chunks_mut::<LANES>();
    let (wr, _) = wr.as_chunks::<LANES>();
    let (wi, _) = wi.as_chunks::<LANES>();
    let n = zr.len();
    assert!(zi.len() == n && wr.len() == n && wi.len() == n);
    for slot in out.iter_mut() {
        let mut sr = [0.0f64; LANES];
        let mut si = [0.0f64; LANES];
        for i in 0..n {
            let (zr4, zi4, wr4, wi4) = (&mut zr[i], &mut zi[i], &wr[i], &wi[i]);
            for l in 0..LANES {
                let (a, b) = (zr4[l], zi4[l]);
                sr[l] += a;
                si[l] += b;
                zr4[l] = a * wr4[l] - b * wi4[l];
                zi4[l] = a * wi4[l] + b * wr4[l];
            }
        }
        *slot += Complex64::new(lane_sum(&sr), lane_sum(&si));
    }
}

#[inline(always)]
fn lane_sum(v: &[f64; LANES]) -> f64 {
    ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn rotate_block_avx2(zr: &mut [f64], zi: &mut [f64], wr: &[f64], wi: &[f64], out: &mut [Complex64]) {
    use std::arch::x86_64::*;
    let n = zr.len();
    assert!(n.is_multiple_of(LANES) && zi.len() == n && wr.len() == n && wi.len() == n);
    for slot in out.iter_mut() {
        let mut sr0 = _mm256_setzero_pd();
        let mut sr1 = _mm256_setzero_pd();
        let mut si0 = _mm256_setzero_pd();
        let mut si1 = _mm256_setzero_pd();
        let mut j = 0;
        while j < n {
            let (pr, pi) = (zr.as_mut_ptr().add(j), zi.as_mut_ptr().add(j));
            let a0 = _mm256_loadu_pd(pr);
            let a1 = _mm256_loadu_pd(pr.add(4));
            let b0 = _mm256_loadu_pd(pi);
            let b1 = _mm256_loadu_pd(pi.add(4));
            let c0 = _mm256_loadu_pd(wr.as_ptr().add(j));
            let c1 = _mm256_loadu_pd(wr.as_ptr().add(j + 4));
            let d0 = _mm256_loadu_pd(wi.as_ptr().add(j));
            let d1 = _mm256_loadu_pd(wi.as_ptr().add(j + 4));
            sr0 = _mm256_add_pd(sr0, a0);
            sr1 = _mm256_add_pd(sr1, a1);
            si0 = _mm256_add_pd(si0, b0);
            si1 = _mm256_add_pd(si1, b1);
            _mm256_storeu_pd(pr, _mm256_sub_pd(_mm256_mul_pd(a0, c0), _mm256_mul_pd(b0, d0)));
            _mm256_storeu_pd(pr.add(4), _mm256_sub_pd(_mm256_mul_pd(a1, c1), _mm256_mul_pd(b1, d1)));
            _mm256_storeu_pd(pi, _mm256_add_pd(_mm256_mul_pd(a0, d0), _mm256_mul_pd(b0, c0)));
            _mm256_storeu_pd(pi.add(4), _mm256_add_pd(_mm256_mul_pd(a1, d1), _mm256_mul_pd(b1, c1)));
            j += LANES;
        }
        let mut r = [0.0f64; LANES];
        let mut i = [0.0f64; LANES];
        _mm256_storeu_pd(r.as_mut_ptr(), sr0);
        _mm256_storeu_pd(r.as_mut_ptr().add(4), sr1);
        _mm256_storeu_pd(i.as_mut_ptr(), si0);
        _mm256_storeu_pd(i.as_mut_ptr().add(4), si1);
        *slot += Complex64::new(lane_sum(&r), lane_sum(&i));
    }
}

fn rotate_block(zr: &mut [f64], zi: &mut [f64], wr: &[f64], wi: &[f64], out: &mut [Complex64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { rotate_block_avx2(zr, zi, wr, wi, out) };
        }
    }
    rotate_block_body(zr, zi, wr, wi, out)
}

/// Exact fraction `num/den` with `den > 0`, kept unreduced while folding.
#[derive(Clone, Debug, PartialEq)]
pub struct Frac {
    pub num: BigInt,
    pub den: BigInt,
}

impl Frac {
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        let (num, den) = (num.into(), den.into());
        assert!(!den.is_zero(), "zero denominator");
        if den.is_negative() {
            Self { num: -num, den: -den }
        } else {
            Self { num, den }
        }
    }

    pub fn from_ratio(r: &num_rational::Ratio<i128>) -> Self {
        Self::new(*r.numer(), *r.denom())
    }

    pub fn zero() -> Self {
        Self::new(0, 1)
    }

    pub fn one() -> Self {
        Self::new(1, 1)
    }

    pub fn mul(&self, o: &Frac) -> Frac {
        Frac { num: &self.num * &o.num, den: &self.den * &o.den }
    }

    pub fn add(&self, o: &Frac) -> Frac {
        if self.den == o.den {
            return Frac { num: &self.num + &o.num, den: self.den.clone() };
        }
        Frac { num: &self.num * &o.den + &o.num * &self.den, den: &self.den * &o.den }
    }

    pub fn neg(&self) -> Frac {
        Frac { num: -&self.num, den: self.den.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `self ≤ other`, by cross multiplication.
    pub fn le(&self, o: &Frac) -> bool {
        &self.num * &o.den <= &o.num * &self.den
    }

    pub fn to_f64(&self) -> f64 {
        big_ratio_to_f64(&self.num, &self.den)
    }

    pub fn reduced(&self) -> num_rational::BigRational {
        num_rational::BigRational::new(self.num.clone(), self.den.clone())
    }
}

/// Accurate `a/b` for big integers whose magnitudes may exceed the f64 range.
pub fn big_ratio_to_f64(a: &BigInt, b: &BigInt) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    let shift_a = a.bits().saturating_sub(64) as i64;
    let shift_b = b.bits().saturating_sub(64) as i64;
    let ma: f64 = num_traits::ToPrimitive::to_f64(&(a >> shift_a as usize)).unwrap();
    let mb: f64 = num_traits::ToPrimitive::to_f64(&(b >> shift_b as usize)).unwrap();
    (ma / mb) * 2f64.powi((shift_a - shift_b) as i32)
}

/// Product of fractions by balanced splitting.
pub fn frac_product(fs: &[Frac]) -> Frac {
    match fs.len() {
        0 => Frac::one(),
        1 => fs[0].clone(),
        n => frac_product(&fs[..n / 2]).mul(&frac_product(&fs[n / 2..])),
    }
}

/// Sum of fractions by balanced splitting.
pub fn frac_sum(fs: &[Frac]) -> Frac {
    match fs.len() {
        0 => Frac::zero(),
        1 => fs[0].clone(),
        n => frac_sum(&fs[..n / 2]).add(&frac_sum(&fs[n / 2..])),
    }
}

/// C-style `%.{prec}g`.
pub fn fmt_g(x: f64, prec: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = prec.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= p as i32 {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Integer square root.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r.checked_mul(r).is_none_or(|v| v > n) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|v| v <= n) {
        r += 1;
    }
    r
}

pub fn is_square(n: u64) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// Golden-section minimisation of `f` on `[a, b]`; returns `(argmin, min)`.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g_matches_c() {
        assert_eq!(fmt_g(0.5, 12), "0.5");
        assert_eq!(fmt_g(100000.0, 12), "100000");
        assert_eq!(fmt_g(1e-7, 12), "1e-07");
        assert_eq!(fmt_g(123456789012345.0, 12), "1.23456789012e+14");
        assert_eq!(fmt_g(-2.0 / 3.0, 12), "-0.666666666667");
        assert_eq!(fmt_g(0.0001, 12), "0.0001");
        assert_eq!(fmt_g(1e12, 12), "1e+12");
    }

    #[test]
    fn grid_matches_direct() {
        let bank = RotationBank::new((1..300u64).map(|n| {
            let w = (n as f64).ln();
            (w, Complex64::new(1.0 / n as f64, 0.3 / n as f64))
        }));
        let g = bank.grid(-7.3, 0.013, 1500);
        for (j, v) in g.iter().enumerate().step_by(97) {
            let d = bank.eval(-7.3 + j as f64 * 0.013);
            assert!((v - d).norm() < 1e-11, "{j}: {v} vs {d}");
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[test]
    fn avx2_block_matches_portable() {
        if !std::arch::is_x86_feature_detected!("avx2") {
            return;
        }
        let n = 3 * LANES;
        let mk = |k: usize, s: f64| (0..n).map(|j| ((j * 7 + k) as f64 * s).sin()).collect::<Vec<f64>>();
        let (wr, wi) = (mk(1, 0.9).iter().map(|x| x.cos()).collect::<Vec<_>>(), mk(1, 0.9));
        let (mut zr1, mut zi1) = (mk(2, 1.3), mk(3, 0.7));
        let (mut zr2, mut zi2) = (zr1.clone(), zi1.clone());
        let mut a = vec![Complex64::new(0.25, -1.0); 40];
        let mut b = a.clone();
        rotate_block_body(&mut zr1, &mut zi1, &wr, &wi, &mut a);
        // SAFETY: AVX2 support checked above.
        unsafe { rotate_block_avx2(&mut zr2, &mut zi2, &wr, &wi, &mut b) };
        assert_eq!(a, b);
        assert_eq!((zr1, zi1), (zr2, zi2));
    }

    #[test]
    fn isqrt_edges() {
        assert_eq!(isqrt(u64::MAX), 4294967295);
        assert_eq!(isqrt(24), 4);
        assert_eq!(isqrt(25), 5);
    }
}
