//! Experiment drivers: short-interval scans, gap moments, measured ratios for
//! the analytic inequalities, plus config loading and report emission.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Map, Value};

use crate::arith::{
    for_each_window, long_mean, rat_to_f64, sieve_primes, table_for, window_eval, MultFn, Rat, SCAN_SEGMENT,
};
use crate::dirpoly::{integrate_sq, large_value_set, max_step, mean_square_grid, DirPoly};
use crate::error::{domain, Error, Result};
use crate::numeric::{fmt_g, frac_product, ksum, Frac, KahanSum};
use crate::pretence::{euler_products, mean_factor, minimize_pretend, pretend_distance, rho_alpha, Variant};
use crate::sieve::{brun_hooley_plan, lambda_weights, weight_sum_report};

// ---------------------------------------------------------------------------
// Scans

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub x: u64,
    pub short_avg: Complex64,
    pub main_term: Complex64,
    pub discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub x: u64,
    pub h: u64,
    pub fn_name: String,
    pub t_star: f64,
    pub rows: Vec<ScanRow>,
    /// `(δ, fraction)` sorted by `δ`.
    pub exceptional_fraction: Vec<(f64, f64)>,
    /// `∏_{p≤X}(1 + (|f(p)| − 1)/p)`; equal to 1 when `|f(p)| = 1` for all `p`.
    pub normalizer: f64,
    pub sample_stride: u64,
}

impl ScanResult {
    /// Fraction of rows with discrepancy above `δ` times the normalizer.
    pub fn fraction_above(&self, delta: f64) -> f64 {
        let cut = delta * self.normalizer;
        self.rows.iter().filter(|r| r.discrepancy > cut).count() as f64 / self.rows.len() as f64
    }

    /// Fraction of rows whose short average differs from the main term by more
    /// than `rel·|main term|`.
    pub fn deviation_fraction(&self, rel: f64) -> f64 {
        self.rows.iter().filter(|r| r.discrepancy > rel * r.main_term.norm()).count() as f64 / self.rows.len() as f64
    }
}

/// Short averages `(1/h)Σ_{x<n≤x+h} f(n)` against the twisted long mean on the
/// grid `x = X, X + stride, …, ≤ 2X`. Requires `2 ≤ h ≤ X^{1/2}`.
pub fn run_scan(f: &MultFn, x: u64, h: u64, stride: u64, deltas: &[f64]) -> Result<ScanResult> {
    if x >= 4 && h.saturating_mul(h) > x {
        return domain(format!("h = {h} exceeds X^(1/2) for X = {x}"));
    }
    scan(f, x, h, stride, deltas)
}

/// [`run_scan`] without the `h ≤ X^{1/2}` cap (still `h ≤ X`).
pub fn run_scan_relaxed(f: &MultFn, x: u64, h: u64, stride: u64, deltas: &[f64]) -> Result<ScanResult> {
    if h > x {
        return domain(format!("h = {h} exceeds X = {x}"));
    }
    scan(f, x, h, stride, deltas)
}

/// Default stride: about `10⁴` rows per scan.
pub fn default_stride(x: u64) -> u64 {
    (x / 10_000).max(1)
}

fn scan(f: &MultFn, x: u64, h: u64, stride: u64, deltas: &[f64]) -> Result<ScanResult> {
    if x < 4 {
        return domain(format!("X must be at least 4, got {x}"));
    }
    if h < 2 {
        return domain(format!("h must be at least 2, got {h}"));
    }
    if stride == 0 {
        return domain("stride must be positive");
    }
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return domain(format!("δ must be a non-negative number, got {d}"));
    }
    let t_star = if f.almost_real() { 0.0 } else { minimize_pretend(f, x, Variant::Sparse)?.t_star };
    let lm = long_mean(f, x, t_star)?;
    let normalizer = mean_factor(f, x);

    let xs: Vec<u64> = (0..).map(|k| x + k * stride).take_while(|&v| v <= 2 * x).collect();
    let mut queries: Vec<u64> = xs.iter().flat_map(|&v| [v, v + h]).collect();
    queries.sort_unstable();
    queries.dedup();
    // Prefix sums S(q) = Σ_{X<n≤q} f(n) at every query point.
    let mut prefix = vec![Complex64::new(0.0, 0.0); queries.len()];
    let mut next = queries.iter().take_while(|&&q| q <= x).count();
    let mut acc = KahanSum::new();
    let end = 2 * x + h;
    for_each_window(x + 1, end - x, SCAN_SEGMENT, &table_for(end + 1), |fw| {
        for (v, (n, _)) in window_eval(f, fw).into_iter().zip(fw.iter()) {
            acc.add(v);
            if next < queries.len() && queries[next] == n {
                prefix[next] = acc.value();
                next += 1;
            }
        }
    })?;
    let at = |q: u64| prefix[queries.binary_search(&q).expect("query point")];

    let hf = h as f64;
    let s = Complex64::new(1.0, t_star);
    let rows: Vec<ScanRow> = xs
        .iter()
        .map(|&xv| {
            let short_avg = (at(xv + h) - at(xv)) / hf;
            let main_term = if t_star == 0.0 {
                lm
            } else {
                let (a, b) = ((xv as f64).ln(), ((xv + h) as f64).ln());
                ((s * b).exp() - (s * a).exp()) / s / hf * lm
            };
            ScanRow { x: xv, short_avg, main_term, discrepancy: (short_avg - main_term).norm() }
        })
        .collect();

    let mut result = ScanResult {
        x,
        h,
        fn_name: f.name().to_string(),
        t_star,
        rows,
        exceptional_fraction: Vec::new(),
        normalizer,
        sample_stride: stride,
    };
    let mut ds = deltas.to_vec();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    result.exceptional_fraction = ds.iter().map(|&d| (d, result.fraction_above(d))).collect();
    Ok(result)
}

// ---------------------------------------------------------------------------
// Gaps

/// Sets whose gaps can be measured.
#[derive(Clone, Debug)]
pub enum GapSet {
    /// `{n : f(n) ≠ 0}`.
    Support(MultFn),
    /// `{n : p | n ⇒ p ≤ n^θ}`, decided per integer.
    Smooth { theta: f64 },
    Members { name: String, members: Vec<u64> },
}

impl GapSet {
    /// `smooth(θ)` for the exact smooth predicate, otherwise a function spec.
    pub fn parse(spec: &str) -> Result<GapSet> {
        let s = spec.trim();
        if let Some(arg) = s.strip_prefix("smooth(").and_then(|r| r.strip_suffix(')')) {
            let theta: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("bad smoothness exponent `{arg}`")))?;
            if !(theta > 0.0 && theta <= 1.0) {
                return domain(format!("θ must lie in (0, 1], got {theta}"));
            }
            return Ok(GapSet::Smooth { theta });
        }
        Ok(GapSet::Support(MultFn::parse(s)?))
    }

    pub fn name(&self) -> String {
        match self {
            GapSet::Support(f) => f.name().to_string(),
            GapSet::Smooth { theta } => format!("smooth({theta})"),
            GapSet::Members { name, .. } => name.clone(),
        }
    }

    /// Members in `(lo, hi]`.
    pub fn members_in(&self, lo: u64, hi: u64) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        match self {
            GapSet::Members { members, .. } => {
                out = members.iter().copied().filter(|&n| n > lo && n <= hi).collect();
                out.sort_unstable();
                out.dedup();
            }
            GapSet::Support(f) => {
                for_each_window(lo + 1, hi - lo, SCAN_SEGMENT, &table_for(hi + 1), |fw| {
                    for (v, (n, _)) in window_eval(f, fw).into_iter().zip(fw.iter()) {
                        if v.re != 0.0 || v.im != 0.0 {
                            out.push(n);
                        }
                    }
                })?;
            }
            GapSet::Smooth { theta } => {
                for_each_window(lo + 1, hi - lo, SCAN_SEGMENT, &table_for(hi + 1), |fw| {
                    for (n, fs) in fw.iter() {
                        let cut = theta * (n as f64).ln();
                        if fs.last().is_none_or(|pp| (pp.p as f64).ln() <= cut) {
                            out.push(n);
                        }
                    }
                })?;
            }
        }
        Ok(out)
    }

    /// `δ(N;X) = ∏_{p≤X, p ∉ N}(1 − 1/p)` for supports of indicator-valued
    /// functions; 1 for the smooth predicate and explicit member lists.
    pub fn density(&self, x: u64) -> Result<f64> {
        match self {
            GapSet::Support(f) => euler_products(f, x)?
                .set_density
                .ok_or_else(|| Error::Domain(format!("{} is not an indicator on the primes", f.name()))),
            _ => Ok(1.0),
        }
    }
}

/// `Σ_i (n_{i+1} − n_i)^γ` over consecutive members, for each `γ`.
pub fn gap_moments(members: &[u64], gammas: &[f64]) -> Vec<f64> {
    gammas
        .iter()
        .map(|&g| ksum(members.windows(2).map(|w| ((w[1] - w[0]) as f64).powf(g))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub set_name: String,
    pub x: u64,
    pub member_count: usize,
    pub first_member: u64,
    pub last_member: u64,
    pub delta: f64,
    pub gammas: Vec<f64>,
    pub moment_sums: Vec<f64>,
    /// `X·δ^{1−γ}`.
    pub normalizers: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Gap moments of the members in `(X, 2X]` against `X·δ(N;X)^{1−γ}`; `γ ∈ [1, 2)`.
pub fn run_gaps(set: &GapSet, x: u64, gammas: &[f64]) -> Result<GapReport> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 1.0 && **g < 2.0)) {
        return domain(format!("γ must lie in [1, 2), got {g}"));
    }
    let members = set.members_in(x, 2 * x)?;
    if members.len() < 2 {
        return domain(format!("{} has {} members in (X, 2X]; need at least 2", set.name(), members.len()));
    }
    let delta = set.density(x)?;
    let moment_sums = gap_moments(&members, gammas);
    let normalizers: Vec<f64> = gammas.iter().map(|g| x as f64 * delta.powf(1.0 - g)).collect();
    let ratios = moment_sums.iter().zip(&normalizers).map(|(m, n)| m / n).collect();
    Ok(GapReport {
        set_name: set.name(),
        x,
        member_count: members.len(),
        first_member: members[0],
        last_member: *members.last().unwrap(),
        delta,
        gammas: gammas.to_vec(),
        moment_sums,
        normalizers,
        ratios,
    })
}

// ---------------------------------------------------------------------------
// Measured bounds

/// A bound parameter: a number, a list of numbers (sweeps) or a name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    List(Vec<f64>),
    Text(String),
}

pub type Params = BTreeMap<String, ParamValue>;

pub const BOUND_IDS: &[&str] = &[
    "shiu",
    "henriot",
    "mvt_sparse",
    "contmvt2",
    "halmont_int",
    "halmont_primes",
    "huxley",
    "moment",
    "parseval",
    "halasz_sparse",
    "halappl",
    "grkoma",
    "fried",
    "distest",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Both sides of an inequality with implied constants set to 1. The headline
/// `lhs`, `rhs`, `ratio` are those of the last sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_id: String,
    /// Every parameter, defaults included.
    pub params: Params,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub sweep: Vec<SweepPoint>,
    pub checks: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

impl BoundReport {
    /// `max ratio / min ratio` over the sweep.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .sweep
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.ratio), hi.max(p.ratio)));
        hi / lo
    }
}

/// Reads parameters, recording defaults, and rejects keys nobody asked for.
struct Args<'a> {
    id: &'a str,
    given: &'a Params,
    used: Params,
}

impl<'a> Args<'a> {
    fn new(id: &'a str, given: &'a Params) -> Self {
        Args { id, given, used: Params::new() }
    }

    fn bad<T>(&self, key: &str, want: &str) -> Result<T> {
        Err(Error::Parse { path: format!("params.{key}"), message: format!("{} expects {want}", self.id) })
    }

    fn num(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = match self.given.get(key) {
            None => default,
            Some(ParamValue::Num(v)) => *v,
            Some(_) => return self.bad(key, "a number"),
        };
        if !v.is_finite() {
            return self.bad(key, "a finite number");
        }
        self.used.insert(key.into(), ParamValue::Num(v));
        Ok(v)
    }

    fn int(&mut self, key: &str, default: u64) -> Result<u64> {
        let v = self.num(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
            return self.bad(key, "a non-negative integer");
        }
        Ok(v as u64)
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let v = match self.given.get(key) {
            None => default.to_vec(),
            Some(ParamValue::List(v)) => v.clone(),
            Some(ParamValue::Num(v)) => vec![*v],
            Some(_) => return self.bad(key, "a list of numbers"),
        };
        if v.len() < 3 || v.iter().any(|x| !x.is_finite()) {
            return self.bad(key, "at least 3 finite sweep values");
        }
        self.used.insert(key.into(), ParamValue::List(v.clone()));
        Ok(v)
    }

    fn text(&mut self, key: &str, default: &str) -> Result<String> {
        let v = match self.given.get(key) {
            None => default.to_string(),
            Some(ParamValue::Text(v)) => v.clone(),
            Some(_) => return self.bad(key, "a name"),
        };
        self.used.insert(key.into(), ParamValue::Text(v.clone()));
        Ok(v)
    }

    fn func(&mut self, key: &str, default: &str) -> Result<MultFn> {
        MultFn::parse(&self.text(key, default)?)
    }

    fn finish(self) -> Result<Params> {
        if let Some(k) = self.given.keys().find(|k| !self.used.contains_key(*k)) {
            return Err(Error::Parse {
                path: format!("params.{k}"),
                message: format!("unknown parameter for {}", self.id),
            });
        }
        Ok(self.used)
    }
}

/// `lhs` and `rhs` of one sweep point.
struct Side {
    value: f64,
    lhs: f64,
    rhs: f64,
}

/// `∏_{p ∈ primes}(1 + term(p))`, or 0 if some factor is not positive.
fn euler(primes: &[u64], term: impl Fn(u64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    for &p in primes {
        let t = term(p);
        if t <= -1.0 {
            return 0.0;
        }
        acc.add_re(t.ln_1p());
    }
    acc.value().re.exp()
}

fn primes_upto(x: u64) -> Result<Vec<u64>> {
    Ok(sieve_primes(x.max(2))?.primes().to_vec())
}

/// `f(n)` for `lo < n ≤ hi`.
fn values_on(f: &MultFn, lo: u64, hi: u64) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity((hi - lo) as usize);
    for_each_window(lo + 1, hi - lo, SCAN_SEGMENT, &table_for(hi + 1), |fw| out.extend(window_eval(f, fw)))?;
    Ok(out)
}

fn as_count(v: f64, what: &str) -> Result<u64> {
    if !((1.0..=1e12).contains(&v) && v.fract() == 0.0) {
        return domain(format!("{what} must be a positive integer, got {v}"));
    }
    Ok(v as u64)
}

/// Seeded generator for task `task` of an experiment.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

fn unit_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.gen::<f64>())).collect()
}

/// `count` random points in `[-T, T]`, pairwise at least 1 apart.
pub fn random_spaced_set(rng: &mut ChaCha8Rng, t_max: f64, count: usize) -> Result<Vec<f64>> {
    // Points sit in every other unit cell, so neighbours are more than 1 apart.
    let cells = t_max.floor() as usize;
    if count > cells {
        return domain(format!("cannot place {count} one-spaced points in [-{t_max}, {t_max}]"));
    }
    let mut picks = rand::seq::index::sample(rng, cells, count).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|j| -t_max + 2.0 * j as f64 + rng.gen::<f64>()).collect())
}

/// Measure both sides of inequality `bound_id` over its parameter sweep.
pub fn measure_bound(bound_id: &str, params: &Params, seed: u64) -> Result<BoundReport> {
    let mut args = Args::new(bound_id, params);
    let mut checks = BTreeMap::new();
    let mut notes = vec!["implied constants set to 1".to_string()];
    let (param, sides) = match bound_id {
        "shiu" => bound_shiu(&mut args)?,
        "henriot" => bound_henriot(&mut args)?,
        "mvt_sparse" => bound_mvt_sparse(&mut args)?,
        "contmvt2" => bound_contmvt2(&mut args)?,
        "halmont_int" => bound_halmont_int(&mut args, seed)?,
        "halmont_primes" => bound_halmont_primes(&mut args, seed)?,
        "huxley" => bound_huxley(&mut args)?,
        "moment" => bound_moment(&mut args)?,
        "parseval" => bound_parseval(&mut args)?,
        "halasz_sparse" => bound_halasz(&mut args, false)?,
        "halappl" => bound_halasz(&mut args, true)?,
        "grkoma" => bound_grkoma(&mut args, &mut checks)?,
        "fried" => bound_fried(&mut args, &mut notes)?,
        "distest" => {
            notes.push("the additive O(1) term is dropped".into());
            bound_distest(&mut args)?
        }
        _ => return domain(format!("unknown bound id `{bound_id}`; known: {}", BOUND_IDS.join(", "))),
    };
    let params = args.finish()?;
    let mut sweep = Vec::with_capacity(sides.len());
    for s in sides {
        if !(s.rhs > 0.0 && s.rhs.is_finite()) {
            return domain(format!("{bound_id}: right side {} at {param} = {} is not positive", s.rhs, s.value));
        }
        if !s.lhs.is_finite() {
            return Err(Error::Range(format!("{bound_id}: left side is not finite at {param} = {}", s.value)));
        }
        sweep.push(SweepPoint { param: param.to_string(), value: s.value, lhs: s.lhs, rhs: s.rhs, ratio: s.lhs / s.rhs });
    }
    let last = sweep.last().expect("sweeps have at least 3 points").clone();
    Ok(BoundReport {
        bound_id: bound_id.to_string(),
        params,
        lhs: last.lhs,
        rhs: last.rhs,
        ratio: last.ratio,
        sweep,
        checks,
        notes,
    })
}

type Sweep = (&'static str, Vec<Side>);

fn bound_shiu(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let theta = a.num("theta", 0.6)?;
    if !(theta > 0.0 && theta < 1.0) {
        return domain(format!("θ must lie in (0, 1), got {theta}"));
    }
    let mut out = Vec::new();
    for xv in a.list("x", &[1e5, 1e6, 1e7])? {
        let x = as_count(xv, "x")?;
        let y = (xv.powf(theta).ceil() as u64).min(x);
        let lhs = ksum(values_on(&f, x, x + y)?.iter().map(|v| v.norm()));
        let rhs = y as f64 * mean_factor(&f, x);
        out.push(Side { value: xv, lhs, rhs });
    }
    Ok(("x", out))
}

fn bound_henriot(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let theta = a.num("theta", 0.6)?;
    let k_max = a.int("K", 10)?;
    let r1 = a.int("r1", 1)?;
    let r2 = a.int("r2", 1)?;
    if !(theta > 0.0 && theta <= 1.0) || k_max == 0 || r1 == 0 || r2 == 0 {
        return domain("henriot needs θ ∈ (0, 1], K ≥ 1 and r1, r2 ≥ 1");
    }
    let g = num_integer::gcd(r1, r2);
    let fr = |r: u64| -> Result<f64> { Ok(values_on(&f, r - 1, r)?[0].norm()) };
    let (fr1, fr2) = (fr(r1)?, fr(r2)?);
    let mut out = Vec::new();
    for xv in a.list("x", &[1e5, 1e6, 1e7])? {
        let x = as_count(xv, "x")?;
        let y = (xv.powf(theta).ceil() as u64).min(x);
        if k_max > x || (r1.max(r2) as f64) > xv.powf(3.0 * theta / 7.0) {
            return domain(format!("henriot needs K ≤ x and r1, r2 ≤ x^(3θ/7) at x = {x}"));
        }
        let lo = x.saturating_sub(k_max).max(1) - 1;
        let vals: Vec<f64> = values_on(&f, lo, x + y + k_max)?.iter().map(|v| v.norm()).collect();
        let at = |n: u64| vals[(n - lo - 1) as usize];
        let mut lhs = KahanSum::new();
        for k in -(k_max as i64)..=(k_max as i64) {
            if k == 0 || k.unsigned_abs() % g != 0 {
                continue;
            }
            for n in x + 1..=x + y {
                let m = (n as i64 + k) as u64;
                if n % r1 == 0 && m.is_multiple_of(r2) {
                    lhs.add_re(at(n) * at(m));
                }
            }
        }
        let primes = primes_upto(x)?;
        let mut rhs = k_max as f64 * fr1 * fr2 / (r1 * r2) as f64 * y as f64;
        rhs *= euler(&primes, |p| (2.0 * f.value(p, 1).norm() - 2.0) / p as f64);
        let big: Vec<u64> = primes_upto(r1 * r2)?
            .into_iter()
            .filter(|&p| (r1 * r2) % p == 0 && p > k_max)
            .collect();
        rhs *= euler(&big, |p| (1.0 - f.value(p, 1).norm()) / p as f64);
        out.push(Side { value: xv, lhs: lhs.value().re, rhs });
    }
    Ok(("x", out))
}

fn bound_mvt_sparse(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let x = a.int("x", 100_000)?;
    let theta = a.num("theta", 0.6)?;
    if x < 3 || !(theta > 0.0 && theta < 1.0) {
        return domain("mvt_sparse needs x ≥ 3 and θ ∈ (0, 1)");
    }
    let y = ((x as f64).powf(theta).ceil() as u64).min(x);
    let p = DirPoly::new(x + 1, values_on(&f, x, x + y)?)?;
    let primes = primes_upto(x)?;
    let sq = euler(&primes, |q| (f.value(q, 1).norm_sqr() - 1.0) / q as f64);
    let pair = euler(&primes, |q| (2.0 * f.value(q, 1).norm() - 2.0) / q as f64);
    let mut out = Vec::new();
    for t in a.list("T", &[100.0, 1000.0, 10000.0])? {
        if t < 1.0 {
            return domain(format!("T must be at least 1, got {t}"));
        }
        let lhs = mean_square_grid(&p, 1.0, t, max_step(p.hi()))?;
        let rhs = t * y as f64 / (x as f64 * x as f64) * sq + y as f64 / x as f64 * pair;
        out.push(Side { value: t, lhs, rhs });
    }
    Ok(("T", out))
}

fn bound_contmvt2(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let n = a.int("N", 2000)?;
    if n < 2 {
        return domain("contmvt2 needs N ≥ 2");
    }
    let coeffs = values_on(&f, 0, n)?;
    let abs: Vec<f64> = coeffs.iter().map(|c| c.norm()).collect();
    let p = DirPoly::new(1, coeffs)?;
    let l2 = ksum(abs.iter().map(|v| v * v));
    let mut out = Vec::new();
    for t in a.list("T", &[n as f64 / 10.0, n as f64, 10.0 * n as f64])? {
        if t < 1.0 {
            return domain(format!("T must be at least 1, got {t}"));
        }
        let lhs = mean_square_grid(&p, 0.0, t, max_step(n))?;
        let k_max = (n as f64 / t).floor() as usize;
        let mut shifted = KahanSum::new();
        for k in 1..=k_max.min(abs.len()) {
            // |k| and −|k| contribute the same sum.
            shifted.add_re(2.0 * ksum(abs.iter().zip(&abs[k..]).map(|(u, v)| u * v)));
        }
        let rhs = t * l2 + t * shifted.value().re;
        out.push(Side { value: t, lhs, rhs });
    }
    Ok(("T", out))
}

fn bound_halmont_int(a: &mut Args, seed: u64) -> Result<Sweep> {
    let t_max = a.num("T", 1e4)?;
    if t_max < 1.0 {
        return domain("halmont_int needs T ≥ 1");
    }
    let mut out = Vec::new();
    for (task, nv) in a.list("N", &[1000.0, 4000.0, 16000.0])?.into_iter().enumerate() {
        let n = as_count(nv, "N")? as usize;
        // Balanced size: |𝒯|·√T = N.
        let count = ((nv / t_max.sqrt()).round() as usize).max(1);
        let mut rng = task_rng(seed, task as u64);
        let coeffs = unit_coeffs(&mut rng, n);
        let ts = random_spaced_set(&mut rng, t_max, count)?;
        let p = DirPoly::new(1, coeffs)?;
        let lhs = ksum(ts.iter().map(|&t| p.evaluate(0.0, t).norm_sqr()));
        let rhs = (nv + count as f64 * t_max.sqrt()) * (2.0 * t_max).ln() * n as f64;
        out.push(Side { value: nv, lhs, rhs });
    }
    Ok(("N", out))
}

fn bound_halmont_primes(a: &mut Args, seed: u64) -> Result<Sweep> {
    let count = a.int("count", 50)? as usize;
    let eta = a.num("eta", 0.25)?;
    let eps = a.num("eps", 0.25)?;
    if !(eta > 0.0 && eta < 0.5 && eps > 0.0 && eps < 0.5) {
        return domain("halmont_primes needs η, ε' ∈ (0, 1/2)");
    }
    let mut out = Vec::new();
    for (task, nv) in a.list("N", &[1000.0, 4000.0, 16000.0])?.into_iter().enumerate() {
        let n = as_count(nv, "N")?;
        // T = N keeps N ≤ T².
        let t_max = nv.max(3.0);
        let mut rng = task_rng(seed, task as u64);
        let primes = sieve_primes(2 * n)?.between(n, 2 * n).to_vec();
        let phases = unit_coeffs(&mut rng, primes.len());
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n as usize];
        for (&p, &c) in primes.iter().zip(&phases) {
            coeffs[(p - n - 1) as usize] = c;
        }
        let ts = random_spaced_set(&mut rng, t_max, count)?;
        let p = DirPoly::new(n + 1, coeffs)?;
        let lhs = ksum(ts.iter().map(|&t| p.evaluate(0.0, t).norm_sqr()));
        let lt = t_max.ln();
        let rhs = (nv / nv.ln() + count as f64 * t_max.powf(4.5 * eta.powf(1.5)) * lt * lt * nv.powf(1.0 - eta * (1.0 - eps)))
            * primes.len() as f64;
        out.push(Side { value: nv, lhs, rhs });
    }
    Ok(("N", out))
}

fn bound_huxley(a: &mut Args) -> Result<Sweep> {
    let n = a.int("N", 1000)?;
    let t_max = a.num("T", 2000.0)?;
    if n < 3 || t_max < 3.0 {
        return domain("huxley needs N, T ≥ 3");
    }
    // Prime-supported coefficients a_p = 1 on (N, 2N].
    let table = sieve_primes(2 * n)?;
    let coeffs: Vec<Complex64> = (n + 1..=2 * n)
        .map(|m| Complex64::new(if table.contains(m) { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let p = DirPoly::new(n + 1, coeffs)?;
    let g = p.weighted_l2(1.0);
    let nf = n as f64;
    let lt6 = t_max.ln().powi(6);
    let mut out = Vec::new();
    // The threshold V^{-1} is κ times the root mean square √G of |A(1+it)|.
    for kappa in a.list("kappa", &[1.5, 2.0, 2.5])? {
        if kappa <= 0.0 {
            return domain(format!("κ must be positive, got {kappa}"));
        }
        let v = 1.0 / (kappa * g.sqrt());
        let lhs = large_value_set(&p, 1.0, t_max, 1.0 / v)?.len() as f64;
        let rhs = (g * nf * v * v + g.powi(3) * nf * t_max * v.powi(6)) * lt6;
        out.push(Side { value: v, lhs, rhs });
    }
    Ok(("V", out))
}

fn bound_moment(a: &mut Args) -> Result<Sweep> {
    let g = a.func("fn", "two_squares")?;
    let x = a.int("x", 1_000_000)?;
    let y1 = a.int("Y1", 8)?;
    let y2 = a.int("Y2", 15)?;
    if y1 < 2 || y2 < 2 || (y2 as f64) > (x as f64).powf(0.2) {
        return domain(format!("moment needs Y1, Y2 ≥ 2 and Y2 ≤ X^(1/5), got Y1 = {y1}, Y2 = {y2}, X = {x}"));
    }
    let ell = ((y2 as f64).ln() / (y1 as f64).ln()).ceil() as i32;
    let table = sieve_primes(2 * y1)?;
    let q_coeffs: Vec<Complex64> = (y1 + 1..=2 * y1)
        .map(|m| Complex64::new(if table.contains(m) { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let q = DirPoly::new(y1 + 1, q_coeffs)?;
    let (m_lo, m_hi) = (x / y2, 2 * x / y2);
    let a_coeffs = values_on(&g, m_lo, m_hi)?;
    if a_coeffs.iter().any(|c| c.im != 0.0 || c.re < 0.0 || c.re > 1.0) {
        return domain(format!("moment needs g with values in [0, 1], got {}", g.name()));
    }
    let ap = DirPoly::new(m_lo + 1, a_coeffs)?;
    let (qb, ab) = (q.bank(1.0), ap.bank(1.0));
    let hi = (2 * y1).pow(ell as u32) * m_hi;
    let primes = primes_upto(x)?;
    let sq = euler(&primes, |p| (g.value(p, 1).norm_sqr() - 1.0) / p as f64);
    let pair = euler(&primes, |p| (2.0 * g.value(p, 1).norm() - 2.0) / p as f64);
    let fact: f64 = (1..=ell).map(f64::from).product();
    let mut out = Vec::new();
    for t in a.list("T", &[10.0, 100.0, 1000.0])? {
        let lhs = integrate_sq(t, max_step(hi), |t0, h, count| {
            let (qv, av) = (qb.grid(t0, h, count), ab.grid(t0, h, count));
            qv.iter().zip(&av).map(|(u, v)| u.norm_sqr().powi(ell) * v.norm_sqr()).collect()
        })?;
        let rhs = fact * fact * (t / x as f64 * sq + pair);
        out.push(Side { value: t, lhs, rhs });
    }
    Ok(("T", out))
}

fn bound_parseval(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "moebius")?;
    let x = a.int("x", 2000)?;
    let t0 = a.num("T0", 100.0)?;
    if x < 8 || t0 <= 0.0 {
        return domain("parseval needs x ≥ 8 and T0 > 0");
    }
    // A(s) = Σ_{X/2<n≤4X} f(n) n^{-s} and 𝒯 = [-T0, T0].
    let (lo, hi) = (x / 2, 4 * x);
    let p = DirPoly::new(lo + 1, values_on(&f, lo, hi)?)?;
    let span = ((hi as f64) / (lo as f64 + 1.0)).ln() + (3.0f64).ln();
    let cells = 2 * (t0 * 8.0 * span).ceil() as usize;
    let dt = 2.0 * t0 / cells as f64;
    let avals = p.bank(1.0).grid(-t0, dt, cells + 1);
    let w = |k: usize| if k == 0 || k == cells { 0.5 } else { 1.0 };
    let mid = cells / 2;
    let mut xs = Vec::new();
    for y in a.list("y", &[25.0, 50.0, 100.0])? {
        let yv = y.round();
        if !(yv >= 1.0 && yv <= x as f64) {
            return domain(format!("parseval needs 1 ≤ y ≤ x, got {y}"));
        }
        let mut outer = KahanSum::new();
        for xi in x..=2 * x {
            let (lx, lxy) = ((xi as f64).ln(), (xi as f64 + yv).ln());
            let mut inner = KahanSum::new();
            for (k, av) in avals.iter().enumerate() {
                let s = Complex64::new(1.0, -t0 + k as f64 * dt);
                inner.add(av * ((s * lxy).exp() - (s * lx).exp()) / s * w(k));
            }
            let v = (inner.value() * dt).norm_sqr();
            outer.add_re(if xi == x || xi == 2 * x { 0.5 * v } else { v });
        }
        let lhs = outer.value().re / (x as f64 * yv * yv);
        // max over T ≥ X/y of (X/y)/T ∫_{[-T,T]∩𝒯}|A|², growing the integral
        // outwards from t = 0 one grid cell per side at a time.
        let floor_t = x as f64 / yv;
        let mut best: f64 = 0.0;
        let mut acc = KahanSum::new();
        for j in 0..=mid {
            if j > 0 {
                let (l, r) = (mid - j, mid + j);
                let sq = |k: usize| avals[k].norm_sqr();
                acc.add_re(0.5 * dt * (sq(l) + sq(l + 1) + sq(r) + sq(r - 1)));
            }
            let t = j as f64 * dt;
            if t >= floor_t {
                best = best.max(floor_t / t * acc.value().re);
            }
        }
        if floor_t > t0 {
            // Every admissible T covers all of 𝒯; the maximum sits at T = X/y.
            best = acc.value().re;
        }
        xs.push(Side { value: yv, lhs, rhs: best });
    }
    Ok(("y", xs))
}

/// Shared by `halasz_sparse` and `halappl`: `|Σ_{x<n≤2x} f(n)/n^{1+it}|` against
/// the two Halász-type shapes, with `𝒫 = ∅` and `x = X`.
fn bound_halasz(a: &mut Args, tailored: bool) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let alpha = a.num("alpha", 0.5)?;
    let rho = a.num("rho", rho_alpha(alpha)? / 2.0)?;
    let t = a.num("t", 0.0)?;
    let big_p = if tailored { a.int("P", 100)? } else { 0 };
    if !(rho > 0.0 && rho < rho_alpha(alpha)?) {
        return domain(format!("ρ must lie in (0, ρ_α) = (0, {}), got {rho}", rho_alpha(alpha)?));
    }
    let mut out = Vec::new();
    for xv in a.list("X", &[1e4, 1e5, 1e6])? {
        let x = as_count(xv, "X")?;
        if x < 16 || t.abs() > xv / 2.0 || (tailored && (big_p < 2 || big_p >= x)) {
            return domain(format!("need X ≥ 16, |t| ≤ X/2 and 2 ≤ P < X at X = {x}"));
        }
        let t_hat = if f.almost_real() { 0.0 } else { minimize_pretend(&f, x, Variant::Sparse)?.t_star };
        let vals = values_on(&f, x, 2 * x)?;
        let mut acc = KahanSum::new();
        for (i, v) in vals.iter().enumerate() {
            let n = (x + 1 + i as u64) as f64;
            acc.add(v * Complex64::from_polar(1.0 / n, -t * n.ln()));
        }
        let lhs = acc.value().norm();
        let lx = xv.ln();
        let prod = euler(&primes_upto(x)?, |p| f.value(p, 1).norm() / p as f64);
        let gap = (t - t_hat).abs();
        let rhs = if tailored {
            (lx.powf(-rho / 2.0) + lx.ln().powi(2) / (gap + 1.0).sqrt()) * prod / (big_p as f64).ln()
        } else {
            (lx.ln() / (gap.sqrt() + 1.0) + lx.powf(-rho / 2.0)) * prod / lx
        };
        out.push(Side { value: xv, lhs, rhs });
    }
    Ok(("X", out))
}

fn bound_grkoma(a: &mut Args, checks: &mut BTreeMap<String, bool>) -> Result<Sweep> {
    let f = a.func("fn", "two_squares")?;
    let mut out = Vec::new();
    let mut all_exact = true;
    for xv in a.list("X", &[1e4, 1e5, 1e6])? {
        let x = as_count(xv, "X")?;
        if x < 2 {
            return domain("grkoma needs X ≥ 2");
        }
        let vals = values_on(&f, x, 2 * x)?;
        if vals.iter().any(|v| v.im != 0.0 || v.re < 0.0 || v.re > 1.0) {
            return domain(format!("grkoma needs f with values in [0, 1], got {}", f.name()));
        }
        let lhs = ksum(vals.iter().map(|v| v.re)) / xv;
        let primes = primes_upto(x)?;
        let rhs = euler(&primes, |p| (f.value(p, 1).re - 1.0) / p as f64);
        if f.is_exact() {
            let mut sum = Rat::from_integer(0);
            for_each_window(x + 1, x, SCAN_SEGMENT, &table_for(2 * x + 1), |fw| {
                for i in 0..fw.len() {
                    sum += f.eval_factors_exact(fw.at(i)).expect("exact rule");
                }
            })?;
            let lhs_exact = Frac::new(*sum.numer(), *sum.denom() * x as i128);
            let mut factors = vec![Frac::new(10, 1)];
            for &p in &primes {
                let fp = f.exact(p, 1).expect("exact rule");
                let pr = Rat::from_integer(p as i128);
                factors.push(Frac::from_ratio(&((pr - 1 + fp) / pr)));
            }
            all_exact &= lhs_exact.le(&frac_product(&factors));
        } else {
            all_exact &= lhs <= 10.0 * rhs;
        }
        out.push(Side { value: xv, lhs, rhs });
    }
    checks.insert("le_10".into(), all_exact);
    checks.insert("exact".into(), f.is_exact());
    Ok(("X", out))
}

fn bound_fried(a: &mut Args, notes: &mut Vec<String>) -> Result<Sweep> {
    let g = a.func("g", "two_squares")?;
    let x = a.int("X", 100_000)?;
    let plan_x = a.int("plan_X", 1_000_000)?;
    let tau = a.num("tau", 3.0)?;
    let big_a = a.num("A", 1.0)?;
    if x < 16 || big_a < 1.0 {
        return domain("fried needs X ≥ 16 and A ≥ 1");
    }
    let w = lambda_weights(&brun_hooley_plan(plan_x, tau)?, &g)?;
    let s1 = ksum(w.entries.iter().map(|(d, l)| rat_to_f64(l) / *d as f64));
    let s2 = weight_sum_report(&w, &g, plan_x)?.s2;
    let d_max = w.entries.iter().map(|e| e.0).max().unwrap_or(1) as f64;
    notes.push(format!("λ from the sieve plan at X = {plan_x}, τ = {tau}; support up to {d_max}"));
    let hs = a.list("h", &[100.0, 1000.0, 10000.0])?;
    let h_top = hs.iter().fold(0.0f64, |m, &h| m.max(h)) as u64;
    // θ_n = Σ_{d|n} λ_d on X < n ≤ 2X + h_top.
    let len = (x + h_top) as usize;
    let mut theta = vec![0.0f64; len];
    for (d, l) in &w.entries {
        let lf = rat_to_f64(l);
        let mut n = (x / d + 1) * d;
        while n <= 2 * x + h_top {
            theta[(n - x - 1) as usize] += lf;
            n += d;
        }
    }
    let mut prefix = vec![0.0f64; len + 1];
    let mut acc = KahanSum::new();
    for (i, v) in theta.iter().enumerate() {
        acc.add_re(*v);
        prefix[i + 1] = acc.value().re;
    }
    let lx = (x as f64).ln();
    let mut out = Vec::new();
    for hv in hs {
        let h = as_count(hv, "h")?;
        // The integrand is constant on [m, m+1) for integer h.
        let lhs = ksum((x..2 * x).map(|m| {
            let (i, j) = ((m - x) as usize, (m - x + h) as usize);
            let d = prefix[j] - prefix[i] - hv * s1;
            d * d
        }));
        let main = x as f64 * hv * s2;
        notes.push(format!("h = {}: lhs / (X h s2) = {}", hv, fmt_g(lhs / main, 6)));
        let rhs = main + hv * hv * d_max * d_max * lx.powf(big_a + 8.0) + hv * x as f64 * lx.powf(-big_a);
        out.push(Side { value: hv, lhs, rhs });
    }
    Ok(("h", out))
}

fn bound_distest(a: &mut Args) -> Result<Sweep> {
    let f = a.func("fn", "moebius")?;
    let x = a.int("X", 100_000)?;
    let variant: Variant = a.text("variant", "dense")?.parse()?;
    let rho = a.num("rho", 0.1)?;
    if x < 16 {
        return domain("distest needs X ≥ 16");
    }
    let cap = match variant {
        Variant::Dense => rho_alpha(1.0)?,
        Variant::Sparse => rho_alpha(a.num("alpha", 0.5)?)?,
    };
    if !(rho > 0.0 && rho < cap) {
        return domain(format!("ρ must lie in (0, {cap}), got {rho}"));
    }
    let t_hat = if f.almost_real() { 0.0 } else { minimize_pretend(&f, x, variant)?.t_star };
    let lx = (x as f64).ln();
    let mut out = Vec::new();
    for off in a.list("offset", &[1.0, 10.0, 100.0])? {
        let t = t_hat + off;
        if t.abs() > x as f64 {
            return domain(format!("|t| = {} exceeds X", t.abs()));
        }
        let lhs = pretend_distance(&f, t, x, variant)?;
        let rhs = rho * lx.ln().min(3.0 * (off.abs() * lx + 1.0).ln());
        out.push(Side { value: off, lhs, rhs });
    }
    Ok(("offset", out))
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => domain(format!("format must be csv or json, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Scan,
    Gaps,
    Bound,
    Pretend,
    Sieve,
    Normform,
    Intervals,
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<u64>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<u64>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: Params,
}

fn field_error<T>(path: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { path: path.into(), message: message.into() })
}

impl ExperimentPlan {
    /// A plan with nothing but the experiment kind set.
    pub fn new(experiment: Experiment) -> Self {
        ExperimentPlan {
            experiment,
            function: None,
            x: None,
            h: Vec::new(),
            gammas: Vec::new(),
            deltas: Vec::new(),
            stride: None,
            seed: 0,
            out: None,
            format: Format::Csv,
            bound: None,
            params: Params::new(),
        }
    }

    /// Fill defaults and check the fields the experiment needs.
    pub fn validated(mut self) -> Result<Self> {
        match self.experiment {
            Experiment::Scan => {
                let x = self.x.map_or_else(|| field_error("X", "scan needs X"), Ok)?;
                self.function.get_or_insert_with(|| "moebius".into());
                if self.h.is_empty() {
                    self.h.push(100);
                }
                if self.deltas.is_empty() {
                    self.deltas = vec![0.05, 0.1, 0.2];
                }
                self.stride.get_or_insert(default_stride(x));
                if self.h.len() > 1 && self.format == Format::Csv {
                    return field_error("h", "csv output takes a single h; use format = \"json\"");
                }
            }
            Experiment::Gaps => {
                self.x.map_or_else(|| field_error("X", "gaps needs X"), Ok)?;
                self.function.get_or_insert_with(|| "two_squares".into());
                if self.gammas.is_empty() {
                    self.gammas = vec![1.0, 1.25, 1.49];
                }
            }
            Experiment::Bound => {
                let id = self.bound.as_deref().map_or_else(|| field_error("bound", "bound needs an id"), Ok)?;
                if !BOUND_IDS.contains(&id) {
                    return field_error("bound", format!("unknown bound id `{id}`"));
                }
            }
            _ => {}
        }
        if self.stride == Some(0) {
            return field_error("stride", "must be positive");
        }
        if let Some(x) = self.x {
            if x < 2 {
                return field_error("X", format!("must be at least 2, got {x}"));
            }
        }
        Ok(self)
    }

    /// Canonical TOML rendering; loading it gives back the same plan.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans serialize")
    }
}

/// Parse and validate a plan from TOML text.
pub fn load_config(text: &str) -> Result<ExperimentPlan> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| Error::Parse { path: "<toml>".into(), message: e.message().to_string() })?;
    let plan: ExperimentPlan = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse { path, message: e.inner().message().to_string() }
    })?;
    plan.validated()
}

/// [`load_config`] on a file.
pub fn load_config_file(path: &Path) -> Result<ExperimentPlan> {
    load_config(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug)]
pub enum Report {
    Scan(ScanResult),
    Scans(Vec<ScanResult>),
    Gaps(GapReport),
    Bound(BoundReport),
}

/// Run a scan, gaps or bound plan.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Report> {
    let function = plan.function.as_deref().unwrap_or("");
    match plan.experiment {
        Experiment::Scan => {
            let f = MultFn::parse(function)?;
            let x = plan.x.expect("validated");
            let stride = plan.stride.expect("validated");
            let mut scans = plan
                .h
                .iter()
                .map(|&h| run_scan(&f, x, h, stride, &plan.deltas))
                .collect::<Result<Vec<_>>>()?;
            Ok(if scans.len() == 1 { Report::Scan(scans.remove(0)) } else { Report::Scans(scans) })
        }
        Experiment::Gaps => {
            let set = GapSet::parse(function)?;
            Ok(Report::Gaps(run_gaps(&set, plan.x.expect("validated"), &plan.gammas)?))
        }
        Experiment::Bound => Ok(Report::Bound(measure_bound(
            plan.bound.as_deref().expect("validated"),
            &plan.params,
            plan.seed,
        )?)),
        other => domain(format!("{other:?} plans are run by their own subcommand")),
    }
}

fn g12(x: f64) -> String {
    fmt_g(x, 12)
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn keyed(keys: &[f64], vals: &[f64]) -> Value {
    Value::Object(keys.iter().zip(vals).map(|(k, v)| (g12(*k), num(*v))).collect::<Map<_, _>>())
}

impl ScanResult {
    pub fn to_json(&self) -> Value {
        let (ds, fr): (Vec<f64>, Vec<f64>) = self.exceptional_fraction.iter().copied().unzip();
        json!({
            "X": self.x,
            "h": self.h,
            "fn_name": self.fn_name,
            "t_star": num(self.t_star),
            "normalizer": num(self.normalizer),
            "sample_stride": self.sample_stride,
            "exceptional_fraction": keyed(&ds, &fr),
            "rows": self.rows.iter().map(|r| json!({
                "x": r.x,
                "short_re": num(r.short_avg.re),
                "short_im": num(r.short_avg.im),
                "main_re": num(r.main_term.re),
                "main_im": num(r.main_term.im),
                "disc": num(r.discrepancy),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,short_re,short_im,main_re,main_im,disc\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.x,
                g12(r.short_avg.re),
                g12(r.short_avg.im),
                g12(r.main_term.re),
                g12(r.main_term.im),
                g12(r.discrepancy)
            ));
        }
        s
    }
}

impl GapReport {
    pub fn to_json(&self) -> Value {
        json!({
            "set_name": self.set_name,
            "X": self.x,
            "member_count": self.member_count,
            "first_member": self.first_member,
            "last_member": self.last_member,
            "delta": num(self.delta),
            "gammas": self.gammas.iter().map(|g| num(*g)).collect::<Vec<_>>(),
            "moment_sums": keyed(&self.gammas, &self.moment_sums),
            "normalizers": keyed(&self.gammas, &self.normalizers),
            "ratios": keyed(&self.gammas, &self.ratios),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("gamma,moment_sum,normalizer,ratio\n");
        for i in 0..self.gammas.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                g12(self.gammas[i]),
                g12(self.moment_sums[i]),
                g12(self.normalizers[i]),
                g12(self.ratios[i])
            ));
        }
        s
    }
}

impl BoundReport {
    pub fn to_json(&self) -> Value {
        let params: Map<String, Value> = self
            .params
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    ParamValue::Num(x) => num(*x),
                    ParamValue::List(xs) => Value::Array(xs.iter().map(|x| num(*x)).collect()),
                    ParamValue::Text(t) => Value::String(t.clone()),
                };
                (k.clone(), v)
            })
            .collect();
        json!({
            "bound_id": self.bound_id,
            "params": params,
            "lhs": num(self.lhs),
            "rhs": num(self.rhs),
            "ratio": num(self.ratio),
            "spread": num(self.spread()),
            "sweep": self.sweep.iter().map(|p| json!({
                "param": p.param,
                "value": num(p.value),
                "lhs": num(p.lhs),
                "rhs": num(p.rhs),
                "ratio": num(p.ratio),
            })).collect::<Vec<_>>(),
            "checks": self.checks,
            "notes": self.notes,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("param,value,lhs,rhs,ratio\n");
        for p in &self.sweep {
            s.push_str(&format!("{},{},{},{},{}\n", p.param, g12(p.value), g12(p.lhs), g12(p.rhs), g12(p.ratio)));
        }
        s
    }
}

impl Report {
    pub fn to_json(&self) -> Value {
        match self {
            Report::Scan(r) => r.to_json(),
            Report::Scans(rs) => json!({ "scans": rs.iter().map(ScanResult::to_json).collect::<Vec<_>>() }),
            Report::Gaps(r) => r.to_json(),
            Report::Bound(r) => r.to_json(),
        }
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Json => json_text(&self.to_json()),
            Format::Csv => match self {
                Report::Scan(r) => r.to_csv(),
                Report::Scans(_) => return domain("csv output takes a single scan"),
                Report::Gaps(r) => r.to_csv(),
                Report::Bound(r) => r.to_csv(),
            },
        })
    }
}

/// Write `report` to `path` in `format`.
pub fn emit_report(report: &Report, format: Format, path: &Path) -> Result<()> {
    std::fs::write(path, report.render(format)?)?;
    Ok(())
}

/// JSON text with sorted keys, two-space indentation, `%.12g` floats and a
/// trailing newline. Non-finite floats become `null`.
pub fn json_text(v: &Value) -> String {
    let mut s = String::new();
    write_json(v, 0, &mut s);
    s.push('\n');
    s
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| " ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if x.is_finite() {
                    out.push_str(&g12(x));
                } else {
                    out.push_str("null");
                }
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                write_json(item, indent + 2, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 2));
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_json(&map[*k], indent + 2, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_moments_small_set() {
        assert_eq!(gap_moments(&[1, 2, 4, 8], &[1.0, 2.0]), vec![7.0, 21.0]);
    }

    #[test]
    fn spaced_sets_are_spaced() {
        let mut rng = task_rng(7, 3);
        let ts = random_spaced_set(&mut rng, 100.0, 40).unwrap();
        assert_eq!(ts.len(), 40);
        assert!(ts.windows(2).all(|w| w[1] - w[0] >= 1.0));
        assert!(ts.iter().all(|t| t.abs() <= 100.0));
    }

    #[test]
    fn json_keys_sorted_and_floats_g12() {
        let v = json!({"b": 0.1 + 0.2, "a": [1, 2.5], "c": {"z": true, "y": null}});
        assert_eq!(
            json_text(&v),
            "{\n  \"a\": [\n    1,\n    2.5\n  ],\n  \"b\": 0.3,\n  \"c\": {\n    \"y\": null,\n    \"z\": true\n  }\n}\n"
        );
    }
}
