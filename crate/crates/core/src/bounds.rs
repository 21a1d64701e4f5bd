//! The integer majorant triangle `M`, Bessel numbers, and truncation
//! certificates for the alternating transient series.
//!
//! `M` obeys `M(i+1, k) = M(i, k-1) + (1+k) M(i, k) + M(i, k+1)` with unit
//! diagonal and zero outside `0 ≤ k ≤ i`. Its first column is the sequence
//! of Bessel numbers. With `γ = max(1, μ/λ)` every series coefficient obeys
//! `L(i, k) ≤ M(i, k) γ^(2(i-k))`, so the terms
//! `t(i, k) = τ^i / i! · M(i, k) · γ^(2(i-k)) / k!`
//! majorize the `k`-th transient series term by term.

use std::f64::consts::{E, PI};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::triangle::{LTriangle, MTriangle, TriangleKind};

/// Consecutive majorant terms that must be non-increasing at a truncation point.
pub const WINDOW: usize = 5;

/// Largest depth the truncation planner will explore.
pub const MAX_CERTIFIED_DEPTH: usize = 20_000;

/// Band asserted on the normalized `i`-th root of the Bessel numbers.
pub const ASYMPTOTIC_BAND: (f64, f64) = (0.5, 2.0);

fn next_m_row(prev: &[BigUint]) -> Vec<BigUint> {
    let n = prev.len();
    (0..=n)
        .map(|k| {
            let mut v = BigUint::zero();
            if k >= 1 {
                v += &prev[k - 1];
            }
            if k < n {
                v += &prev[k] * BigUint::from(k + 1);
            }
            if k + 1 < n {
                v += &prev[k + 1];
            }
            v
        })
        .collect()
}

pub fn build_m_triangle(depth: usize) -> MTriangle {
    let mut rows = Vec::with_capacity(depth + 1);
    rows.push(vec![BigUint::one()]);
    for i in 0..depth {
        let next = next_m_row(&rows[i]);
        assert!(next[i + 1].is_one(), "diagonal must emerge as 1");
        rows.push(next);
    }
    MTriangle {
        kind: TriangleKind::M,
        alpha_sq: None,
        rows,
        b: Vec::new(),
    }
}

/// Bessel numbers `B*_0, …, B*_depth`, the first column of `M`.
pub fn bessel_numbers(depth: usize) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    let mut out = Vec::with_capacity(depth + 1);
    out.push(BigUint::one());
    for _ in 0..depth {
        row = next_m_row(&row);
        out.push(row[0].clone());
    }
    out
}

/// Natural logarithm of a big integer (`-inf` for zero).
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 1000 {
        return n.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    (n >> shift).to_f64().expect("64 bits fit").ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub checked: usize,
    /// First `(i, k)` where `L(i, k) > M(i, k) γ^(2(i-k))`.
    pub first_violation: Option<(usize, usize)>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks `L(i, k) ≤ M(i, k) γ^(2(i-k))` exactly for every stored entry.
pub fn verify_bound(l: &LTriangle, m: &MTriangle, params: &ModelParams) -> Result<BoundReport> {
    if l.depth() != m.depth() {
        return Err(Error::DepthMismatch(l.depth(), m.depth()));
    }
    let depth = l.depth();
    let (gn, gd) = (params.gamma().numer().clone(), params.gamma().denom().clone());
    let mut pow_n = vec![BigInt::one()];
    let mut pow_d = vec![BigInt::one()];
    for j in 1..=2 * depth {
        pow_n.push(&pow_n[j - 1] * &gn);
        pow_d.push(&pow_d[j - 1] * &gd);
    }
    let mut checked = 0;
    for i in 0..=depth {
        for k in 0..=i {
            let lv = &l.rows[i][k];
            let mv = BigInt::from(m.rows[i][k].clone());
            let e = 2 * (i - k);
            // n/d <= M gn^e / gd^e  <=>  n gd^e <= d M gn^e
            let lhs = lv.numer() * &pow_d[e];
            let rhs = lv.denom() * mv * &pow_n[e];
            checked += 1;
            if lhs > rhs {
                return Ok(BoundReport {
                    checked,
                    first_violation: Some((i, k)),
                });
            }
        }
    }
    Ok(BoundReport {
        checked,
        first_violation: None,
    })
}

/// The positive root of `i + 2 = 2 w ln w`, bisected on `[1, i]` down to
/// the resolution of `f64`.
pub fn solve_w_root(i: usize) -> f64 {
    let target = i as f64 + 2.0;
    let f = |w: f64| 2.0 * w * w.ln() - target;
    let (mut lo, mut hi) = (1.0_f64, (i as f64).max(3.0));
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticEstimate {
    pub i: usize,
    pub w_root: f64,
    /// `|i + 2 - 2 w ln w|`.
    pub root_residual: f64,
    pub ln_bessel: f64,
    /// `ln( w^(i+3) / (sqrt(2πi) (w!)²) )`.
    pub ln_estimate: f64,
    pub estimate: f64,
    /// `ln( (i / (2e ln i))^i )`.
    pub ln_crude: f64,
    pub crude: f64,
    /// `(B*_i)^(1/i) · 2e ln i / i`.
    pub normalized_root: f64,
    /// `B*_i / estimate`.
    pub refined_ratio: f64,
}

impl AsymptoticEstimate {
    pub fn in_band(&self) -> bool {
        (ASYMPTOTIC_BAND.0..=ASYMPTOTIC_BAND.1).contains(&self.normalized_root)
    }

    pub fn root_converged(&self) -> bool {
        self.root_residual <= 1e-12 * (self.i as f64 + 2.0)
    }
}

pub fn asymptotic_check(i_values: &[usize]) -> Result<Vec<AsymptoticEstimate>> {
    if let Some(&bad) = i_values.iter().find(|&&i| i < 3) {
        return Err(Error::Domain(format!("asymptotic check needs i >= 3, got {bad}")));
    }
    let top = i_values.iter().copied().max().unwrap_or(0);
    let bessel = bessel_numbers(top);
    Ok(i_values
        .iter()
        .map(|&i| {
            let fi = i as f64;
            let w = solve_w_root(i);
            let ln_bessel = ln_biguint(&bessel[i]);
            let ln_estimate = -0.5 * (2.0 * PI * fi).ln() + (fi + 3.0) * w.ln() - 2.0 * ln_gamma(w + 1.0);
            let ln_crude = fi * (fi / (2.0 * E * fi.ln())).ln();
            AsymptoticEstimate {
                i,
                w_root: w,
                root_residual: (fi + 2.0 - 2.0 * w * w.ln()).abs(),
                ln_bessel,
                ln_estimate,
                estimate: ln_estimate.exp(),
                ln_crude,
                crude: ln_crude.exp(),
                normalized_root: (ln_bessel / fi).exp() * 2.0 * E * fi.ln() / fi,
                refined_ratio: (ln_bessel - ln_estimate).exp(),
            }
        })
        .collect())
}

fn ln_power(ln_x: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * ln_x
    }
}

fn window_non_increasing(terms: &[f64]) -> bool {
    terms.windows(2).all(|w| w[0] >= w[1])
}

/// Smallest `N` within the triangle with `τ^N/N! · B*_N · γ^(2N) < ε` and
/// the majorant non-increasing over `WINDOW` terms from `N`.
pub fn convergence_certificate(
    m: &MTriangle,
    tau: f64,
    epsilon: f64,
    params: &ModelParams,
) -> Result<usize> {
    if !(tau >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::Domain(format!("need tau >= 0 and epsilon > 0, got {tau}, {epsilon}")));
    }
    if tau == 0.0 {
        return Ok(1);
    }
    let (ln_tau, ln_g) = (tau.ln(), params.gamma_f64().ln());
    let depth = m.depth();
    let terms: Vec<f64> = (0..=depth)
        .map(|i| ln_power(ln_tau, i) - ln_gamma(i as f64 + 1.0) + ln_biguint(&m.rows[i][0]) + 2.0 * ln_power(ln_g, i))
        .collect();
    let ln_eps = epsilon.ln();
    for n in 1..=depth.saturating_sub(WINDOW - 1) {
        if terms[n] < ln_eps && window_non_increasing(&terms[n..n + WINDOW]) {
            return Ok(n);
        }
    }
    let recommended = match terms.get(depth.wrapping_sub(1)..) {
        Some([a, b]) if b < a => {
            let extra = ((ln_eps - b) / (b - a)).ceil().max(0.0) as usize;
            depth + extra + WINDOW
        }
        _ => 2 * depth.max(8),
    };
    Err(Error::InsufficientDepth {
        depth,
        tolerance: epsilon,
        recommended,
    })
}

fn ln_sum3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// `ln M(i, k)` for the first few columns, extendable to any depth.
///
/// Built either from an exact triangle or by running the `M` recursion in
/// log space, which reaches depths where exact integers are impractical.
#[derive(Clone, Debug)]
pub struct LogMajorant {
    columns: Vec<Vec<f64>>,
    last_row: Vec<f64>,
    ln_k1: Vec<f64>,
}

impl LogMajorant {
    /// Starts at depth 0, tracking columns `0..=k_cols`.
    pub fn new(k_cols: usize) -> Self {
        let mut columns = vec![Vec::new(); k_cols + 1];
        columns[0].push(0.0);
        for c in columns.iter_mut().skip(1) {
            c.push(f64::NEG_INFINITY);
        }
        Self {
            columns,
            last_row: vec![0.0],
            ln_k1: vec![0.0],
        }
    }

    /// Exact logarithms of a computed `M` triangle.
    pub fn from_m_triangle(m: &MTriangle, k_cols: usize) -> Self {
        let columns = (0..=k_cols)
            .map(|k| (0..=m.depth()).map(|i| m.get(i, k as i64).map_or(f64::NEG_INFINITY, ln_biguint)).collect())
            .collect();
        Self {
            columns,
            last_row: m.rows[m.depth()].iter().map(ln_biguint).collect(),
            ln_k1: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.last_row.len() - 1
    }

    pub fn k_cols(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn ln_m(&self, i: usize, k: usize) -> f64 {
        self.columns[k][i]
    }

    pub fn extend_to(&mut self, depth: usize) {
        while self.depth() < depth {
            let prev = &self.last_row;
            let n = prev.len();
            while self.ln_k1.len() <= n {
                self.ln_k1.push((self.ln_k1.len() as f64 + 1.0).ln());
            }
            let at = |k: usize| prev.get(k).copied().unwrap_or(f64::NEG_INFINITY);
            let next: Vec<f64> = (0..=n)
                .map(|k| {
                    let down = if k >= 1 { at(k - 1) } else { f64::NEG_INFINITY };
                    ln_sum3(down, self.ln_k1[k] + at(k), at(k + 1))
                })
                .collect();
            for (k, col) in self.columns.iter_mut().enumerate() {
                col.push(next.get(k).copied().unwrap_or(f64::NEG_INFINITY));
            }
            self.last_row = next;
        }
    }
}

/// Per-state truncation orders certified by the majorant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationPlan {
    pub tau: f64,
    pub tolerance: f64,
    /// `orders[k]`: the series for state `k` is summed over `k ≤ i < orders[k]`.
    pub orders: Vec<usize>,
    /// Majorant value at the first omitted index.
    pub tail_bounds: Vec<f64>,
    /// Majorant sum over the retained terms.
    pub majorant_sums: Vec<f64>,
    /// Triangle depth needed to sum and certify every state.
    pub depth: usize,
    /// Working precision for big-float summation.
    pub precision_bits: u32,
}

impl TruncationPlan {
    pub fn k_max(&self) -> usize {
        self.orders.len() - 1
    }

    pub fn max_order(&self) -> usize {
        self.orders.iter().copied().max().unwrap_or(0)
    }
}

/// `64 + ceil(log2(Σ|term| / ε)) + ceil(log2(8 (depth + 1)))`, the last part
/// covering rounding accumulated along the coefficient recursion.
pub fn required_bits(majorant_sum: f64, epsilon: f64, depth: usize) -> u32 {
    let cancel = (majorant_sum / epsilon).log2().ceil().max(0.0);
    let steps = (8.0 * (depth as f64 + 1.0)).log2().ceil();
    64 + cancel as u32 + steps as u32
}

/// Plans truncation for states `0..=k_max` from the majorant columns held
/// by `lm`; `None` when its depth is not enough.
pub fn plan_truncation(
    lm: &LogMajorant,
    tau: f64,
    params: &ModelParams,
    k_max: usize,
    epsilon: f64,
) -> Option<TruncationPlan> {
    assert!(k_max <= lm.k_cols(), "majorant tracks too few columns");
    let ln_tau = if tau == 0.0 { f64::NEG_INFINITY } else { tau.ln() };
    let ln_g2 = 2.0 * params.gamma_f64().ln();
    let ln_eps = epsilon.ln();
    let depth = lm.depth();
    let ln_fact: Vec<f64> = (0..=depth).map(|i| ln_gamma(i as f64 + 1.0)).collect();

    let mut orders = Vec::with_capacity(k_max + 1);
    let mut tail_bounds = Vec::with_capacity(k_max + 1);
    let mut majorant_sums = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k + WINDOW - 1 > depth {
            return None;
        }
        let term = |i: usize| {
            ln_power(ln_tau, i) - ln_fact[i] + lm.ln_m(i, k) + ln_power(ln_g2, i - k) - ln_fact[k]
        };
        let terms: Vec<f64> = (k..=depth).map(term).collect();
        let n = (0..=terms.len() - WINDOW)
            .find(|&j| terms[j] < ln_eps && window_non_increasing(&terms[j..j + WINDOW]))?;
        let kept = &terms[..n];
        let top = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum = if top == f64::NEG_INFINITY {
            0.0
        } else {
            top.exp() * kept.iter().map(|t| (t - top).exp()).sum::<f64>()
        };
        orders.push(k + n);
        tail_bounds.push(terms[n].exp());
        majorant_sums.push(sum);
    }
    let max_order = orders.iter().copied().max().unwrap_or(0);
    let depth_needed = orders
        .iter()
        .map(|&n| n + WINDOW - 1)
        .max()
        .unwrap_or(0);
    let precision_bits = majorant_sums
        .iter()
        .map(|&s| required_bits(s, epsilon, max_order))
        .max()
        .unwrap_or(64);
    Some(TruncationPlan {
        tau,
        tolerance: epsilon,
        orders,
        tail_bounds,
        majorant_sums,
        depth: depth_needed,
        precision_bits,
    })
}

/// Grows a log-space majorant until every state `0..=k_max` has a certified
/// truncation order below `epsilon`.
pub fn recommend_truncation(
    params: &ModelParams,
    tau: f64,
    k_max: usize,
    epsilon: f64,
) -> Result<TruncationPlan> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be nonnegative, got {tau}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut lm = LogMajorant::new(k_max);
    let mut depth = (k_max + 2 * WINDOW).max(32);
    loop {
        lm.extend_to(depth);
        if let Some(plan) = plan_truncation(&lm, tau, params, k_max, epsilon) {
            return Ok(plan);
        }
        if depth >= MAX_CERTIFIED_DEPTH {
            return Err(Error::Uncertifiable {
                limit: MAX_CERTIFIED_DEPTH,
            });
        }
        depth = (depth + depth / 2).min(MAX_CERTIFIED_DEPTH);
    }
}

/// Recommends a depth for callers whose triangle turned out too shallow.
pub(crate) fn recommended_depth(params: &ModelParams, tau: f64, k_max: usize, epsilon: f64) -> usize {
    recommend_truncation(params, tau, k_max, epsilon)
        .map(|p| p.depth)
        .unwrap_or(MAX_CERTIFIED_DEPTH)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::build_l_triangle;

    fn u(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn m_triangle_hand_values() {
        let m = build_m_triangle(5);
        let col0: Vec<_> = (0..=4).map(|i| m.entry(i, 0)).collect();
        assert_eq!(col0, [1, 1, 2, 5, 14].map(u));
        let col1: Vec<_> = (1..=3).map(|i| m.entry(i, 1)).collect();
        assert_eq!(col1, [1, 3, 9].map(u));
        assert_eq!(m.entry(4, 1), u(29));
        for i in 0..=5 {
            assert!(m.entry(i, i as i64).is_one());
        }
    }

    #[test]
    fn bessel_numbers_known_prefix() {
        // OEIS A006789, computed independently
        let known = [1u64, 1, 2, 5, 14, 43, 143, 509, 1922, 7651, 31965, 139685];
        assert_eq!(bessel_numbers(11), known.map(u));
        assert_eq!(bessel_numbers(0), vec![u(1)]);
        let m = build_m_triangle(30);
        let b = bessel_numbers(30);
        for i in 0..=30 {
            assert_eq!(m.entry(i, 0), b[i]);
        }
    }

    #[test]
    fn bessel_numbers_exceed_u64_without_overflow() {
        let b = bessel_numbers(60);
        assert!(b[60].bits() > 64);
        for i in 0..60 {
            assert!(b[i + 1] > b[i] || i == 0);
        }
    }

    #[test]
    fn column_zero_recurrence() {
        let m = build_m_triangle(80);
        for i in 0..80 {
            assert_eq!(m.entry(i + 1, 0), m.entry(i, 0) + m.entry(i, 1));
        }
    }

    #[test]
    fn bound_holds_and_rejects_mismatch() {
        for (l, mu) in [("2", "1"), ("1", "1"), ("1", "2")] {
            let p = ModelParams::parse(l, mu).unwrap();
            let lt = build_l_triangle(&p, 30);
            let mt = build_m_triangle(30);
            let r = verify_bound(&lt, &mt, &p).unwrap();
            assert!(r.passed(), "{l}/{mu}: {r:?}");
            assert_eq!(r.checked, 31 * 32 / 2);
        }
        let p = ModelParams::parse("1", "1").unwrap();
        assert_eq!(
            verify_bound(&build_l_triangle(&p, 3), &build_m_triangle(4), &p),
            Err(Error::DepthMismatch(3, 4))
        );
    }

    #[test]
    fn bound_detects_violation() {
        let p = ModelParams::parse("1", "1").unwrap();
        let mut lt = build_l_triangle(&p, 4);
        lt.rows[3][0] = crate::model::parse_rational("100").unwrap();
        let r = verify_bound(&lt, &build_m_triangle(4), &p).unwrap();
        assert_eq!(r.first_violation, Some((3, 0)));
    }

    #[test]
    fn root_solver_residual() {
        for i in [3usize, 10, 100, 200, 500, 5000] {
            let w = solve_w_root(i);
            let res = (i as f64 + 2.0 - 2.0 * w * w.ln()).abs();
            assert!(res <= 1e-12 * (i as f64 + 2.0), "i={i} res={res}");
        }
    }

    #[test]
    fn asymptotic_diagnostics() {
        let est = asymptotic_check(&[3, 100, 200, 500]).unwrap();
        assert!(est[0].crude.is_finite() && est[0].crude > 0.0);
        assert!(est.iter().all(|e| e.root_converged()));
        // the normalized root drifts down towards 1 only logarithmically
        assert!(est[1].normalized_root > est[2].normalized_root);
        assert!(est[2].normalized_root > est[3].normalized_root);
        assert!(est[3].in_band());
        // the refined form tracks B*_i to within a bounded factor
        for e in &est[1..] {
            assert!((1.0..10.0).contains(&e.refined_ratio), "{e:?}");
        }
        assert!(asymptotic_check(&[2]).is_err());
    }

    #[test]
    fn certificate_examples() {
        let m = build_m_triangle(60);
        let p = ModelParams::parse("1", "1").unwrap();
        assert_eq!(convergence_certificate(&m, 0.0, 1e-3, &p).unwrap(), 1);
        let n = convergence_certificate(&m, 1.0, 1e-10, &p).unwrap();
        assert_eq!(n, 26);
        let m_short = build_m_triangle(40);
        match convergence_certificate(&m_short, 5.0, 1e-10, &p) {
            Err(Error::InsufficientDepth { recommended, .. }) => assert!(recommended > 40),
            other => panic!("{other:?}"),
        }
        let m_long = build_m_triangle(300);
        let n5 = convergence_certificate(&m_long, 5.0, 1e-10, &p).unwrap();
        assert!(n5 > 200 && n5 < 300, "{n5}");
    }

    #[test]
    fn log_majorant_matches_exact() {
        let m = build_m_triangle(120);
        let exact = LogMajorant::from_m_triangle(&m, 4);
        let mut grown = LogMajorant::new(4);
        grown.extend_to(120);
        for i in 0..=120 {
            for k in 0..=4.min(i) {
                let (a, b) = (exact.ln_m(i, k), grown.ln_m(i, k));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "({i},{k}) {a} {b}");
            }
        }
    }

    #[test]
    fn plan_uses_first_certified_order() {
        let p = ModelParams::parse("1", "1").unwrap();
        let plan = recommend_truncation(&p, 1.0, 3, 1e-10).unwrap();
        assert_eq!(plan.orders[0], 26);
        assert!(plan.tail_bounds.iter().all(|&t| t < 1e-10));
        assert_eq!(plan.depth, plan.max_order() + WINDOW - 1);
        assert!(plan.precision_bits >= 64);

        let zero = recommend_truncation(&p, 0.0, 3, 1e-10).unwrap();
        assert_eq!(zero.orders, vec![1, 1, 2, 3]);
        assert!(zero.tail_bounds.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn larger_gamma_needs_deeper_plans() {
        let a = recommend_truncation(&ModelParams::parse("1", "1").unwrap(), 1.0, 2, 1e-10).unwrap();
        let b = recommend_truncation(&ModelParams::parse("1", "2").unwrap(), 1.0, 2, 1e-10).unwrap();
        assert!(b.depth > a.depth);
    }

    #[test]
    fn majorant_windows_decrease_eventually() {
        // (tau, gamma^2) pairs whose decreasing regime starts within reach;
        // it begins near i ~ exp(c tau gamma^2)
        let mut lm = LogMajorant::new(0);
        lm.extend_to(5200);
        for (tau, g2) in [(1.0f64, 1.0f64), (5.0, 1.0), (10.0, 1.0), (1.0, 4.0)] {
            let t = |i: usize| i as f64 * (tau * g2).ln() - ln_gamma(i as f64 + 1.0) + lm.ln_m(i, 0);
            let last: Vec<f64> = (5196..=5200).map(t).collect();
            assert!(window_non_increasing(&last), "tau={tau} g2={g2}");
            assert!(last[4] < -10.0, "tau={tau} g2={g2}: {}", last[4]);
        }
    }
}
