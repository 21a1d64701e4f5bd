//! Transient law `p(n, k) = P(X_n = k)` of the embedded jump chain started
//! at state 0.
//!
//! With up-probabilities `α_k = λ_k/(λ_k + μ_k)` (`α_0 = 1`) the chain obeys
//! `p(n+1, k) = α_{k-1} p(n, k-1) + (1 - α_{k+1}) p(n, k+1)`. The closed form
//! `p(k+2h, k) = d_k T(h, k)` uses `d_k = α_0 ⋯ α_{k-1}` and
//! `T(h, k) = Σ_{l ≤ k} α_l (1 - α_{l+1}) T(h-1, l+1)`, `T(0, k) = 1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{format_rational, rational_to_f64, BirthDeathRates, ModelParams};

/// `p(n, k)` for `0 ≤ k ≤ n ≤ n_max`, exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddedTable {
    pub n_max: usize,
    /// `rows[n][k]`.
    pub rows: Vec<Vec<BigRational>>,
    /// `α_0, …, α_{n_max}`.
    pub up: Vec<BigRational>,
}

impl EmbeddedTable {
    /// `p(n, k)`, zero outside the table.
    pub fn p(&self, n: usize, k: usize) -> BigRational {
        self.rows
            .get(n)
            .and_then(|r| r.get(k))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Flattened rows in `(n, k)` order.
    pub fn entries(&self) -> Vec<EmbeddedEntry> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(n, row)| {
                row.iter().enumerate().map(move |(k, p)| EmbeddedEntry {
                    n,
                    k,
                    p_num: p.numer().to_string(),
                    p_den: p.denom().to_string(),
                    p_float: rational_to_f64(p),
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,k,p_num,p_den,p_float\n");
        for e in self.entries() {
            out.push_str(&format!("{},{},{},{},{:e}\n", e.n, e.k, e.p_num, e.p_den, e.p_float));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddedEntry {
    pub n: usize,
    pub k: usize,
    pub p_num: String,
    pub p_den: String,
    pub p_float: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedFormTables {
    /// `d_0, …, d_{n_max}`.
    pub d: Vec<BigRational>,
    /// `t[h][k]` for `k + 2h ≤ n_max`.
    pub t: Vec<Vec<BigRational>>,
}

fn up_probabilities(rates: &BirthDeathRates, n_max: usize) -> Result<Vec<BigRational>> {
    (0..=n_max)
        .map(|k| {
            rates.up_probability(k).map_err(|_| {
                Error::Rates(format!(
                    "a horizon of {n_max} steps needs rates for states 0..={n_max}"
                ))
            })
        })
        .collect()
}

/// Steps the defining recursion from `p(0, 0) = 1`.
pub fn embedded_recursion(rates: &BirthDeathRates, n_max: usize) -> Result<EmbeddedTable> {
    let up = up_probabilities(rates, n_max)?;
    Ok(recursion_from_up(up, n_max))
}

fn recursion_from_up(up: Vec<BigRational>, n_max: usize) -> EmbeddedTable {
    let one = BigRational::one();
    let mut rows = vec![vec![BigRational::one()]];
    for n in 0..n_max {
        let prev = &rows[n];
        let next = (0..=n + 1)
            .map(|k| {
                let mut v = BigRational::zero();
                if k >= 1 && !prev[k - 1].is_zero() {
                    v += &up[k - 1] * &prev[k - 1];
                }
                if k < n && !prev[k + 1].is_zero() {
                    v += (&one - &up[k + 1]) * &prev[k + 1];
                }
                v
            })
            .collect();
        rows.push(next);
    }
    EmbeddedTable { n_max, rows, up }
}

/// Builds `d` and `T` and assembles `p(n, k) = d_k T((n-k)/2, k)`.
pub fn closed_form(
    rates: &BirthDeathRates,
    n_max: usize,
) -> Result<(ClosedFormTables, EmbeddedTable)> {
    let up = up_probabilities(rates, n_max)?;
    Ok(closed_form_from_up(up, n_max))
}

fn closed_form_from_up(up: Vec<BigRational>, n_max: usize) -> (ClosedFormTables, EmbeddedTable) {
    let one = BigRational::one();
    let mut d = Vec::with_capacity(n_max + 1);
    d.push(BigRational::one());
    for k in 1..=n_max {
        let next = &d[k - 1] * &up[k - 1];
        d.push(next);
    }
    // weight of the down-then-up excursion through l + 1
    let w: Vec<BigRational> = (0..n_max).map(|l| &up[l] * (&one - &up[l + 1])).collect();
    let mut t = vec![vec![BigRational::one(); n_max + 1]];
    for h in 1..=n_max / 2 {
        let prev = &t[h - 1];
        let len = n_max - 2 * h + 1;
        let mut row = Vec::with_capacity(len);
        let mut acc = BigRational::zero();
        for k in 0..len {
            acc += &w[k] * &prev[k + 1];
            row.push(acc.clone());
        }
        t.push(row);
    }
    let rows = (0..=n_max)
        .map(|n| {
            (0..=n)
                .map(|k| {
                    if (n + k) % 2 == 1 {
                        BigRational::zero()
                    } else {
                        &d[k] * &t[(n - k) / 2][k]
                    }
                })
                .collect()
        })
        .collect();
    (ClosedFormTables { d, t }, EmbeddedTable { n_max, rows, up })
}

/// Closed form for the discouragement queue, with the product-form `d_k`
/// checked against `Π_{i=0}^{k} 1/(1 + i(i-1)α²)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscouragementEmbedded {
    pub tables: ClosedFormTables,
    pub table: EmbeddedTable,
    pub corollary_d: Vec<BigRational>,
}

impl DiscouragementEmbedded {
    pub fn corollary_matches(&self) -> bool {
        self.corollary_d == self.tables.d
    }
}

/// `α_k = 1/(1 + k(k+1)α²)`.
pub fn discouragement_up(alpha_sq: &BigRational, k: usize) -> BigRational {
    let kk = BigRational::from_integer(BigInt::from(k * (k + 1)));
    (BigRational::one() + kk * alpha_sq).recip()
}

pub fn discouragement_embedded(params: &ModelParams, n_max: usize) -> DiscouragementEmbedded {
    let a2 = params.alpha_sq();
    let up: Vec<BigRational> = (0..=n_max).map(|k| discouragement_up(a2, k)).collect();
    let mut corollary_d = Vec::with_capacity(n_max + 1);
    let mut prod = BigRational::one();
    for k in 0..=n_max {
        let f = BigRational::from_integer(BigInt::from(k * k.saturating_sub(1)));
        prod /= BigRational::one() + f * a2;
        corollary_d.push(prod.clone());
    }
    let (tables, table) = closed_form_from_up(up, n_max);
    DiscouragementEmbedded {
        tables,
        table,
        corollary_d,
    }
}

/// True iff `p(n, k) = 0` whenever `n + k` is odd.
pub fn parity_check(table: &EmbeddedTable) -> bool {
    table.rows.iter().enumerate().all(|(n, row)| {
        row.iter()
            .enumerate()
            .all(|(k, p)| (n + k) % 2 == 0 || p.is_zero())
    })
}

/// True iff every row sums to exactly 1.
pub fn normalization_check(table: &EmbeddedTable) -> bool {
    table
        .rows
        .iter()
        .all(|row| row.iter().fold(BigRational::zero(), |a, p| a + p).is_one())
}

/// First `(n, k)` where two tables differ.
pub fn first_difference(a: &EmbeddedTable, b: &EmbeddedTable) -> Option<(usize, usize)> {
    let n = a.n_max.max(b.n_max);
    (0..=n)
        .flat_map(|n| (0..=n).map(move |k| (n, k)))
        .find(|&(n, k)| a.p(n, k) != b.p(n, k))
}

/// Renders `p` as `num/den`.
pub fn render(p: &BigRational) -> String {
    format_rational(p)
}
