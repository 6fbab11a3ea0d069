//! Pretentious distances, minimizing twists, Euler products and the
//! rearrangement/cosine inequalities.

use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::arith::{for_each_window, sieve_primes, table_for, window_eval, MultFn, Rat, SCAN_SEGMENT};
use crate::error::{domain, precondition, Result};
use crate::numeric::{golden_min, ksum, KahanSum, RotationBank};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `Σ (1 − Re f(p)p^{-it})/p`
    Dense,
    /// `Σ (|f(p)| − Re f(p)p^{-it})/p`
    Sparse,
}

impl std::str::FromStr for Variant {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Variant::Dense),
            "sparse" => Ok(Variant::Sparse),
            _ => domain(format!("variant must be dense or sparse, got `{s}`")),
        }
    }
}

/// `α/3 − (2/3π) sin(πα/2)`.
pub fn rho_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("α must lie in (0, 1], got {alpha}"));
    }
    Ok(alpha / 3.0 - 2.0 / (3.0 * PI) * (PI * alpha / 2.0).sin())
}

/// `2∫₀^{α/2}(1 − cos πx)dx = α − (2/π) sin(πα/2)`.
pub fn cos_integral(alpha: f64) -> f64 {
    alpha - 2.0 / PI * (PI * alpha / 2.0).sin()
}

/// The prime sum `t ↦ Σ_{p≤X}(w_p − Re f(p)p^{-it})/p` with its constant part split off.
#[derive(Clone, Debug)]
pub struct DistanceSum {
    constant: f64,
    bank: RotationBank,
    real: bool,
}

impl DistanceSum {
    pub fn new(f: &MultFn, primes: &[u64], variant: Variant) -> Self {
        let mut constant = KahanSum::new();
        let mut terms = Vec::with_capacity(primes.len());
        for &p in primes {
            let v = f.value(p, 1);
            let w = match variant {
                Variant::Dense => 1.0,
                Variant::Sparse => v.norm(),
            };
            constant.add_re(w / p as f64);
            terms.push(((p as f64).ln(), v / p as f64));
        }
        Self { constant: constant.value().re, bank: RotationBank::new(terms), real: f.is_real() }
    }

    pub fn at(&self, t: f64) -> f64 {
        (self.constant - self.bank.eval(t).re).max(0.0)
    }

    /// Values at `t0 + j·step`, `j < count`.
    pub fn grid(&self, t0: f64, step: f64, count: usize) -> Vec<f64> {
        self.bank.grid(t0, step, count).into_iter().map(|z| (self.constant - z.re).max(0.0)).collect()
    }

    /// Whether `D(−t) = D(t)` holds identically.
    pub fn symmetric(&self) -> bool {
        self.real
    }
}

fn primes_to(x: u64) -> Vec<u64> {
    sieve_primes(x.max(2)).expect("limit ≥ 2").primes().to_vec()
}

/// `Σ_{p≤X}(1 − Re f(p)p^{-it})/p` (dense) or `Σ(|f(p)| − Re f(p)p^{-it})/p` (sparse).
pub fn pretend_distance(f: &MultFn, t: f64, x: u64, variant: Variant) -> Result<f64> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    Ok(DistanceSum::new(f, &primes_to(x), variant).at(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Searched range `|t| ≤ range`.
    pub range: f64,
    /// Uniform grid covers `|t| ≤ dense_limit`.
    pub dense_limit: f64,
    pub spacing: f64,
    /// Log-spaced points per sign beyond `dense_limit`.
    pub log_points: usize,
    pub refine_cells: usize,
    pub refine_tol: f64,
    /// Skip grid points whose small-prime lower bound already rules them out.
    /// The outcome matches the exhaustive scan.
    #[serde(default = "yes")]
    pub prune: bool,
}

fn yes() -> bool {
    true
}

impl GridSpec {
    pub fn for_scale(x: u64) -> Self {
        let range = x as f64;
        GridSpec {
            range,
            dense_limit: range.min(1000.0),
            spacing: 1.0 / (8.0 * (x as f64).ln()),
            log_points: 256,
            refine_cells: 5,
            refine_tol: 1e-9,
            prune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretendSummary {
    pub variant: Variant,
    pub t_star: f64,
    pub m_value: f64,
    pub grid_spec: GridSpec,
}

/// Better of two `(t, value)` candidates: smaller value, then smaller `|t|`, then smaller `t`.
/// Values within `tol` count as equal.
fn better(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    a.1 < b.1 - tol || (a.1 <= b.1 + tol && (a.0.abs(), a.0) < (b.0.abs(), b.0))
}

/// Minimise the distance over `|t| ≤ X` with the default grid.
pub fn minimize_pretend(f: &MultFn, x: u64, variant: Variant) -> Result<PretendSummary> {
    minimize_pretend_with(f, x, variant, GridSpec::for_scale(x))
}

/// Coarse grid: log points below `−dense_limit`, the uniform part, log points above.
struct Coarse {
    ts: Vec<f64>,
    spacing: f64,
    /// Index of `t = −half·spacing`.
    first_dense: usize,
    half: i64,
}

impl Coarse {
    fn new(spec: &GridSpec) -> Self {
        let s = spec.spacing;
        let half = (spec.dense_limit / s).floor() as i64;
        let log_ts: Vec<f64> = if spec.range > spec.dense_limit && spec.log_points > 0 {
            let ratio = spec.range / spec.dense_limit;
            (1..=spec.log_points)
                .map(|k| spec.dense_limit * ratio.powf(k as f64 / spec.log_points as f64))
                .collect()
        } else {
            Vec::new()
        };
        let mut ts: Vec<f64> = log_ts.iter().rev().map(|t| -t).collect();
        let first_dense = ts.len();
        ts.extend((-half..=half).map(|j| j as f64 * s));
        ts.extend(log_ts);
        Coarse { ts, spacing: s, first_dense, half }
    }

    fn dense_j(&self, i: usize) -> Option<i64> {
        let j = i as i64 - self.first_dense as i64 - self.half;
        (i >= self.first_dense && j <= self.half).then_some(j)
    }
}

/// Runs of grid offsets closer than this are evaluated as one run.
const MERGE_GAP: i64 = 16;

/// `d` at the coarse points `idx`; uniform points go through rotation runs.
fn eval_points(d: &DistanceSum, grid: &Coarse, idx: &[usize]) -> Vec<f64> {
    let fold = |j: i64| if d.symmetric() { j.abs() } else { j };
    let mut js: Vec<i64> = idx.iter().filter_map(|&i| grid.dense_j(i)).map(fold).collect();
    js.sort_unstable();
    js.dedup();
    let mut table: Vec<(i64, f64)> = Vec::with_capacity(js.len());
    let mut k = 0;
    while k < js.len() {
        let mut e = k;
        while e + 1 < js.len() && js[e + 1] - js[e] <= MERGE_GAP {
            e += 1;
        }
        let (a, b) = (js[k], js[e]);
        let vals = d.grid(a as f64 * grid.spacing, grid.spacing, (b - a + 1) as usize);
        table.extend(js[k..=e].iter().map(|&j| (j, vals[(j - a) as usize])));
        k = e + 1;
    }
    idx.iter()
        .map(|&i| match grid.dense_j(i) {
            Some(j) => {
                let j = fold(j);
                table[table.binary_search_by_key(&j, |e| e.0).expect("evaluated")].1
            }
            None => d.at(grid.ts[i]),
        })
        .collect()
}

/// Indices of local minima of `vals` (unknown points count as `+∞`), best first.
fn local_minima(ts: &[f64], vals: &[f64]) -> Vec<usize> {
    let n = vals.len();
    let mut cells: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = vals[i];
            v.is_finite() && (i == 0 || vals[i - 1] >= v) && (i + 1 == n || vals[i + 1] >= v)
        })
        .collect();
    cells.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(ts[a].total_cmp(&ts[b])));
    cells
}

/// Fewer primes than this and the scan is exhaustive.
const PRUNE_MIN_PRIMES: usize = 2000;

/// Coarse-grid values, `+∞` where a point provably cannot be among the best cells.
fn coarse_values(f: &MultFn, primes: &[u64], variant: Variant, grid: &Coarse, spec: &GridSpec) -> Vec<f64> {
    let full = DistanceSum::new(f, primes, variant);
    let n = grid.ts.len();
    let all: Vec<usize> = (0..n).collect();
    if !spec.prune || primes.len() < PRUNE_MIN_PRIMES {
        return eval_points(&full, grid, &all);
    }
    // D(t) ≥ D_P(t) + Σ_{p>P}(w_p − |f(p)|)/p for the partial sum over p ≤ P.
    let x = *primes.last().expect("non-empty") as f64;
    let levels: Vec<(DistanceSum, f64)> = [0.5, 2.0 / 3.0, 5.0 / 6.0]
        .iter()
        .map(|&e| {
            let k = primes.partition_point(|&p| (p as f64) <= x.powf(e));
            let tail = ksum(primes[k..].iter().map(|&p| {
                let a = f.value(p, 1).norm();
                let w = match variant {
                    Variant::Dense => 1.0,
                    Variant::Sparse => a,
                };
                (w - a) / p as f64
            }));
            (DistanceSum::new(f, &primes[..k], variant), tail)
        })
        .collect();
    let margin = 1e-9 * full.constant.max(1.0);
    let lb0: Vec<f64> = eval_points(&levels[0].0, grid, &all).into_iter().map(|v| v + levels[0].1).collect();

    // Threshold: the worst of the full values at the best few lower-bound minima.
    let seeds: Vec<usize> = local_minima(&grid.ts, &lb0).into_iter().take(spec.refine_cells.max(1)).collect();
    let mut tau = eval_points(&full, grid, &seeds).into_iter().fold(0.0, f64::max);
    let mut bump = 0.05 * tau.max(1.0);
    loop {
        let mut active: Vec<usize> = (0..n).filter(|&i| lb0[i] <= tau + margin).collect();
        for (d, tail) in &levels[1..] {
            let lb = eval_points(d, grid, &active);
            active = active.into_iter().zip(lb).filter(|&(_, v)| v + tail <= tau + margin).map(|(i, _)| i).collect();
        }
        let mut vals = vec![f64::INFINITY; n];
        for (&i, v) in active.iter().zip(eval_points(&full, grid, &active)) {
            vals[i] = v;
        }
        // Every point left out has D > τ, so minima at or below τ are exact.
        let found = local_minima(&grid.ts, &vals).into_iter().filter(|&i| vals[i] <= tau).count();
        if found >= spec.refine_cells || active.len() == n {
            return vals;
        }
        tau += bump;
        bump *= 2.0;
    }
}

pub fn minimize_pretend_with(
    f: &MultFn,
    x: u64,
    variant: Variant,
    spec: GridSpec,
) -> Result<PretendSummary> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    let primes = primes_to(x);
    let sum = DistanceSum::new(f, &primes, variant);
    // rounding noise in D(t) is a few ulps of the constant term
    let tol = 1e-13 * sum.constant.max(1.0);
    let grid = Coarse::new(&spec);
    let vals = coarse_values(f, &primes, variant, &grid, &spec);
    let points: Vec<(f64, f64)> = grid.ts.iter().copied().zip(vals.iter().copied()).collect();

    let mut best = (0.0, f64::INFINITY);
    for &p in &points {
        if p.1.is_finite() && better(p, best, tol) {
            best = p;
        }
    }
    for &i in local_minima(&grid.ts, &vals).iter().take(spec.refine_cells) {
        let lo = if i == 0 { points[i].0 } else { points[i - 1].0 };
        let hi = if i + 1 == points.len() { points[i].0 } else { points[i + 1].0 };
        if hi <= lo {
            continue;
        }
        let (t, v) = golden_min(|t| sum.at(t), lo, hi, spec.refine_tol);
        if better((t, v), best, tol) {
            best = (t, v);
        }
    }
    let t_star = best.0.clamp(-spec.range, spec.range);
    Ok(PretendSummary { variant, t_star, m_value: best.1.max(0.0), grid_spec: spec })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub x: u64,
    pub mean_factor: f64,
    pub square_factor: f64,
    pub h_value: f64,
    /// `∏_{p≤X, f(p)=0}(1 − 1/p)` when `|f(p)| ∈ {0, 1}` for all `p ≤ X`.
    pub set_density: Option<f64>,
}

/// Mertens-type products of `f` over `p ≤ X`.
pub fn euler_products(f: &MultFn, x: u64) -> Result<ProductReport> {
    if x < 2 {
        return domain(format!("X must be at least 2, got {x}"));
    }
    Ok(euler_products_over(f, &primes_to(x), x))
}

pub(crate) fn euler_products_over(f: &MultFn, primes: &[u64], x: u64) -> ProductReport {
    let (mut lm, mut ls, mut lh, mut ld) = (KahanSum::new(), KahanSum::new(), KahanSum::new(), KahanSum::new());
    let mut indicator = true;
    for &p in primes {
        let a = f.value(p, 1).norm();
        let pf = p as f64;
        lm.add_re(((a - 1.0) / pf).ln_1p());
        ls.add_re(((a * a - 1.0) / pf).ln_1p());
        lh.add_re(((a - 1.0) * (a - 1.0) / pf).ln_1p());
        if a.abs() < 1e-15 {
            ld.add_re((-1.0 / pf).ln_1p());
        } else if (a - 1.0).abs() > 1e-15 {
            indicator = false;
        }
    }
    ProductReport {
        x,
        mean_factor: lm.value().re.exp(),
        square_factor: ls.value().re.exp(),
        h_value: lh.value().re.exp(),
        set_density: indicator.then(|| ld.value().re.exp()),
    }
}

/// `∏_{p≤X}(1 + (|f(p)| − 1)/p)`.
pub fn mean_factor(f: &MultFn, x: u64) -> f64 {
    euler_products_over(f, &primes_to(x), x).mean_factor
}

/// `|(1/y)Σ_{X<n≤X+y} f(n)n^{-it} − (1/X)Σ_{X<n≤2X} f(n)n^{-it}|`, normalised by the mean factor.
pub fn lipschitz_discrepancy(f: &MultFn, x: u64, y: u64, t: f64) -> Result<f64> {
    if x < 3 {
        return domain(format!("X must be at least 3, got {x}"));
    }
    let lower = x as f64 / (x as f64).ln();
    if (y as f64) < lower || y > x {
        return domain(format!("y = {y} outside [X/log X, X] = [{lower:.3}, {x}]"));
    }
    let aux = table_for(2 * x + 1);
    let (mut short, mut long) = (KahanSum::new(), KahanSum::new());
    for_each_window(x + 1, x, SCAN_SEGMENT, &aux, |fw| {
        for (v, (n, _)) in window_eval(f, fw).into_iter().zip(fw.iter()) {
            if v.is_zero() {
                continue;
            }
            let w = if t == 0.0 { v } else { v * Complex64::from_polar(1.0, -t * (n as f64).ln()) };
            long.add(w);
            if n <= x + y {
                short.add(w);
            }
        }
    })?;
    let diff = short.value() / y as f64 - long.value() / x as f64;
    Ok(diff.norm() / mean_factor(f, x))
}

fn check_rearrangement_shape(n_alpha: usize, n_b: usize, n0: usize) -> Result<()> {
    if n_alpha != n_b {
        return domain(format!("{n_alpha} weights but {n_b} values"));
    }
    if n0 == 0 || n_b < n0 {
        return domain(format!("need 1 ≤ N0 ≤ N, got N0 = {n0}, N = {n_b}"));
    }
    Ok(())
}

/// `(Σ α_i b_i, sum of the N0 smallest b_i)`.
pub fn rearrangement_check(alphas: &[f64], bs: &[f64], n0: usize) -> Result<(f64, f64)> {
    check_rearrangement_shape(alphas.len(), bs.len(), n0)?;
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) || bs.iter().any(|b| !(*b >= 0.0)) {
        return domain("weights must lie in [0, 1] and values must be non-negative");
    }
    if alphas.iter().sum::<f64>() < n0 as f64 {
        return precondition(format!("Σα_i < N0 = {n0}"));
    }
    let lhs = alphas.iter().zip(bs).map(|(a, b)| a * b).sum();
    let mut sorted = bs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((lhs, sorted[..n0].iter().sum()))
}

/// Exact form of [`rearrangement_check`].
pub fn rearrangement_check_exact(alphas: &[Rat], bs: &[Rat], n0: usize) -> Result<(Rat, Rat)> {
    check_rearrangement_shape(alphas.len(), bs.len(), n0)?;
    let zero = Rat::zero();
    let one = Rat::from_integer(1);
    if alphas.iter().any(|a| *a < zero || *a > one) || bs.iter().any(|b| *b < zero) {
        return domain("weights must lie in [0, 1] and values must be non-negative");
    }
    if alphas.iter().copied().sum::<Rat>() < Rat::from_integer(n0 as i128) {
        return precondition(format!("Σα_i < N0 = {n0}"));
    }
    let lhs = alphas.iter().zip(bs).map(|(a, b)| a * b).sum();
    let mut sorted = bs.to_vec();
    sorted.sort();
    Ok((lhs, sorted[..n0].iter().copied().sum()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosCheck {
    pub lhs: f64,
    pub rhs_main: f64,
    pub y: f64,
}

/// Both sides of the cosine lower bound over `Y < p ≤ X^θ`.
pub fn appendix_cos_check(
    f: &MultFn,
    t: f64,
    x: u64,
    theta: f64,
    eps: f64,
    alpha: f64,
) -> Result<CosCheck> {
    if x < 3 || !(theta > 0.0 && theta <= 1.0) || !(eps > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return domain("need X ≥ 3, θ ∈ (0, 1], ε > 0 and α ∈ (0, 1]");
    }
    let lx = (x as f64).ln();
    let at = t.abs();
    if at < 2.0 / (theta * lx) || at > 2.0 * x as f64 {
        return domain(format!("|t| = {at} outside [2/(θ log X), 2X]"));
    }
    let log_y = lx.powf(2.0 / 3.0 + eps).max(1.0 / at);
    let top = theta * lx;
    if log_y >= top {
        return domain(format!("Y = e^{log_y:.3} is not below X^θ = e^{top:.3}"));
    }
    let hi = top.exp().floor() as u64;
    let y = log_y.exp();
    let mut acc = KahanSum::new();
    for &p in sieve_primes(hi.max(2))?.primes() {
        if (p as f64) <= y {
            continue;
        }
        let u = t * (p as f64).ln() / (2.0 * PI);
        let dist = (u - u.round()).abs();
        acc.add_re(f.value(p, 1).norm() / p as f64 * (1.0 - (PI * dist).cos().abs()));
    }
    Ok(CosCheck { lhs: acc.value().re, rhs_main: cos_integral(alpha) * (top / log_y).ln(), y })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_closed_forms() {
        assert!((rho_alpha(1.0).unwrap() - (1.0 / 3.0 - 2.0 / (3.0 * PI))).abs() < 1e-15);
        let half = 1.0 / 6.0 - 2f64.sqrt() / (3.0 * PI);
        assert!((rho_alpha(0.5).unwrap() - half).abs() < 1e-15);
        assert!(rho_alpha(0.0).is_err());
        assert!(rho_alpha(1.5).is_err());
    }

    #[test]
    fn rearrangement_examples() {
        assert_eq!(rearrangement_check(&[1.0, 1.0], &[3.0, 1.0], 2).unwrap(), (4.0, 4.0));
        assert_eq!(rearrangement_check(&[0.5, 0.5], &[3.0, 1.0], 1).unwrap(), (2.0, 1.0));
        assert!(matches!(
            rearrangement_check(&[0.5, 0.4], &[3.0, 1.0], 1),
            Err(crate::Error::Precondition(_))
        ));
    }
}
