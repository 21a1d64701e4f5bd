//! Power-series coefficients of the transient distribution.
//!
//! In rescaled time the state probabilities are
//!
//! ```text
//! p(k, τ) = 1/k! · Σ_{i ≥ k} (-1)^(i-k) · τ^i / i! · L(i, k)
//! ```
//!
//! where the nonnegative triangle `L` satisfies
//! `L(i+1, k) = L(i, k-1) + b_k L(i, k) + α² L(i, k+1)` with
//! `b_k = 1/(k+1) + kα²`, `L(i, i) = 1` and zeros outside `0 ≤ k ≤ i`.
//! The signed coefficients `S(i, k) = (-1)^(i-k) (α²)^k L(i, k)` are derived
//! views, and `r_i = S(i, 0)` are the Taylor coefficients of `p(0, ·)`.

mod deep;
mod eval;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::triangle::{LTriangle, TriangleKind};

pub use deep::evaluate_transient_deep;
pub use eval::{
    evaluate_transient, solve_transient, tail_bound, SolveOptions, TransientResult,
    EXACT_DEPTH_LIMIT,
};

fn int(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `b_k = 1/(k+1) + kα²`.
pub fn b_coefficient(alpha_sq: &BigRational, k: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(k + 1)) + alpha_sq * int(k)
}

pub(crate) fn b_coefficients(alpha_sq: &BigRational, n: usize) -> Vec<BigRational> {
    (0..n).map(|k| b_coefficient(alpha_sq, k)).collect()
}

/// Builds `L` rows `0..=depth` in exact arithmetic, each row from the previous one.
///
/// Rows are carried as integer numerators over a shared denominator and
/// reduced once per row, which avoids a gcd per arithmetic operation.
pub fn build_l_triangle(params: &ModelParams, depth: usize) -> LTriangle {
    let a2 = params.alpha_sq();
    let (a, q) = (a2.numer().clone(), a2.denom().clone());
    let b = b_coefficients(a2, depth + 1);
    let mut rows: Vec<Vec<BigRational>> = Vec::with_capacity(depth + 1);
    rows.push(vec![BigRational::one()]);
    let mut den = BigInt::one();
    let mut num = vec![BigInt::one()];
    let mut lcm = BigInt::one();
    for i in 0..depth {
        lcm = lcm.lcm(&BigInt::from(i + 1));
        // common factor clearing 1/(k+1) for k ≤ i and the denominator of α²
        let f = &lcm * &q;
        let f_over_q = &lcm;
        let next: Vec<BigInt> = (0..=i + 1)
            .map(|k| {
                let mut v = BigInt::zero();
                if k >= 1 {
                    v += &f * &num[k - 1];
                }
                if k <= i {
                    let c = &f / BigInt::from(k + 1) + f_over_q * &a * BigInt::from(k);
                    v += c * &num[k];
                }
                if k < i {
                    v += f_over_q * &a * &num[k + 1];
                }
                assert!(!v.is_negative(), "L({}, {k}) < 0", i + 1);
                v
            })
            .collect();
        let mut new_den = den * &f;
        let g = next.iter().fold(new_den.clone(), |g, v| g.gcd(v));
        num = next.into_iter().map(|v| v / &g).collect();
        new_den /= &g;
        den = new_den;
        assert!(num[i + 1] == den, "diagonal must emerge as 1");
        rows.push(
            num.iter()
                .map(|v| BigRational::new(v.clone(), den.clone()))
                .collect(),
        );
    }
    LTriangle {
        kind: TriangleKind::L,
        alpha_sq: Some(a2.clone()),
        rows,
        b,
    }
}

fn check_params(triangle: &LTriangle, params: &ModelParams) -> Result<()> {
    if triangle.kind != TriangleKind::L || triangle.alpha_sq.as_ref() != Some(params.alpha_sq()) {
        return Err(Error::Domain(
            "triangle was not built for these parameters".into(),
        ));
    }
    Ok(())
}

/// Signed coefficients `S(i, k)` for one state `k`, `i = 0..=depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesCoefficients {
    pub k: usize,
    pub terms: Vec<BigRational>,
}

impl SeriesCoefficients {
    /// The `r_i`, available for the `k = 0` row.
    pub fn r(&self) -> Option<&[BigRational]> {
        (self.k == 0).then_some(&self.terms[..])
    }
}

pub fn s_coefficients(
    triangle: &LTriangle,
    params: &ModelParams,
    k: usize,
) -> Result<SeriesCoefficients> {
    check_params(triangle, params)?;
    if k > triangle.depth() {
        return Err(Error::Index(format!(
            "state {k} beyond triangle depth {}",
            triangle.depth()
        )));
    }
    let scale = num_traits::pow(params.alpha_sq().clone(), k);
    let terms = (0..=triangle.depth())
        .map(|i| {
            if i < k {
                return BigRational::zero();
            }
            let v = &scale * &triangle.rows[i][k];
            if (i - k) % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect();
    Ok(SeriesCoefficients { k, terms })
}

/// `S(i, k)` for `k + i ≤ order`, built from the forward-in-`k` recursion
/// `S(i, k+1) = S(i+1, k) + b_k S(i, k) - α² S(i, k-1)` with `S(·, -1) = 0`.
/// Each unknown `r_m` is fixed by the boundary `S(0, m) = 0`.
#[derive(Clone, Debug)]
pub struct ZeroBoundaryTable {
    order: usize,
    /// `by_state[k][i]`, defined for `k + i ≤ order`.
    by_state: Vec<Vec<BigRational>>,
}

impl ZeroBoundaryTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn r(&self) -> &[BigRational] {
        &self.by_state[0]
    }

    /// `S(i, k)`, `None` when `k + i > order`.
    pub fn get(&self, i: usize, k: usize) -> Option<&BigRational> {
        self.by_state.get(k).and_then(|row| row.get(i))
    }
}

pub fn zero_boundary_s(params: &ModelParams, order: usize) -> ZeroBoundaryTable {
    let a2 = params.alpha_sq();
    let b = b_coefficients(a2, order + 1);
    let mut s: Vec<Vec<BigRational>> = vec![Vec::new(); order + 1];
    s[0].push(BigRational::one());
    for m in 1..=order {
        // anti-diagonal k + i = m, computed with r_m = 0; every entry then
        // carries r_m with coefficient one
        let mut diag = Vec::with_capacity(m + 1);
        diag.push(BigRational::zero());
        for k in 1..=m {
            let i = m - k;
            let mut v = diag[k - 1].clone();
            v += &b[k - 1] * &s[k - 1][i];
            if k >= 2 {
                v -= a2 * &s[k - 2][i];
            }
            diag.push(v);
        }
        let r_m = -diag[m].clone();
        for (k, v) in diag.into_iter().enumerate() {
            s[k].push(v + &r_m);
        }
    }
    ZeroBoundaryTable { order, by_state: s }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RecursionRoute {
    /// Forward-in-`k` construction with zero boundary.
    ZeroBoundary,
    /// `S(k+h+1, k) = α² S(k+h, k-1) - b_k S(k+h, k) + S(k+h, k+1)`.
    Stepwise,
    /// `S(k+h+1, k) = Σ_{j ≤ k} (α²)^(k-j) [S(j+h, j+1) - b_j S(j+h, j)]`.
    Summed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discrepancy {
    pub route: RecursionRoute,
    pub i: usize,
    pub k: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualRecursionReport {
    pub max_i: usize,
    pub checked: usize,
    pub discrepancy: Option<Discrepancy>,
}

impl DualRecursionReport {
    pub fn passed(&self) -> bool {
        self.discrepancy.is_none()
    }
}

/// Verifies exactly, for `0 ≤ k ≤ i ≤ max_i`, that the zero-boundary
/// construction, the stepwise recursion and the summed recursion all
/// reproduce the `S` values derived from `triangle`.
pub fn check_dual_recursion(
    triangle: &LTriangle,
    params: &ModelParams,
    max_i: usize,
) -> Result<DualRecursionReport> {
    check_params(triangle, params)?;
    if max_i > triangle.depth() {
        return Err(Error::Index(format!(
            "max_i {max_i} beyond triangle depth {}",
            triangle.depth()
        )));
    }
    let a2 = params.alpha_sq();
    let b = triangle.b();
    let scale: Vec<BigRational> = (0..=max_i + 1)
        .scan(BigRational::one(), |acc, j| {
            let v = acc.clone();
            if j <= max_i {
                *acc *= a2;
            }
            Some(v)
        })
        .collect();
    // S(i, k) from L, with S(·, -1) = 0 and S(i, k) = 0 for k > i
    let s = |i: usize, k: i64| -> BigRational {
        if k < 0 || k as usize > i {
            return BigRational::zero();
        }
        let k = k as usize;
        let v = &scale[k] * &triangle.rows[i][k];
        if (i - k) % 2 == 1 {
            -v
        } else {
            v
        }
    };

    let mut checked = 0;
    let mismatch = |route, i, k, expected: &BigRational, found: &BigRational| {
        Some(Discrepancy {
            route,
            i,
            k,
            expected: crate::model::format_rational(expected),
            found: crate::model::format_rational(found),
        })
    };
    let report = |checked, discrepancy| DualRecursionReport {
        max_i,
        checked,
        discrepancy,
    };

    let zb = zero_boundary_s(params, 2 * max_i);
    for i in 0..=max_i {
        for k in 0..=max_i {
            let Some(found) = zb.get(i, k) else { continue };
            let expected = s(i, k as i64);
            checked += 1;
            if *found != expected {
                return Ok(report(
                    checked,
                    mismatch(RecursionRoute::ZeroBoundary, i, k, &expected, found),
                ));
            }
        }
    }

    for i in 1..=max_i {
        for k in 0..i {
            let prev = i - 1;
            let kk = k as i64;
            let found = a2 * s(prev, kk - 1) - &b[k] * s(prev, kk) + s(prev, kk + 1);
            let expected = s(i, kk);
            checked += 1;
            if found != expected {
                return Ok(report(
                    checked,
                    mismatch(RecursionRoute::Stepwise, i, k, &expected, &found),
                ));
            }
        }
    }

    for i in 1..=max_i {
        for k in 0..i {
            let h = i - k - 1;
            let mut found = BigRational::zero();
            for j in 0..=k {
                let jj = j as i64;
                let inner = s(j + h, jj + 1) - &b[j] * s(j + h, jj);
                found += &scale[k - j] * inner;
            }
            let expected = s(i, k as i64);
            checked += 1;
            if found != expected {
                return Ok(report(
                    checked,
                    mismatch(RecursionRoute::Summed, i, k, &expected, &found),
                ));
            }
        }
    }
    Ok(report(checked, None))
}
