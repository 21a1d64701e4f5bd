//! Lower-triangular coefficient tables indexed by series order `i` and
//! state `k`, `0 ≤ k ≤ i ≤ depth`, stored row-major by `i`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{format_rational, parse_rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriangleKind {
    /// Sign-normalized series coefficients.
    L,
    /// Integer majorant triangle whose first column is the Bessel numbers.
    M,
}

/// Entry types a triangle can hold.
pub trait TriangleEntry: Clone + Zero + One + PartialEq + PartialOrd {
    fn render(&self) -> String;
    fn parse(s: &str) -> Result<Self>;
    fn is_nonnegative(&self) -> bool;
}

impl TriangleEntry for BigRational {
    fn render(&self) -> String {
        format_rational(self)
    }
    fn parse(s: &str) -> Result<Self> {
        parse_rational(s)
    }
    fn is_nonnegative(&self) -> bool {
        !self.is_negative()
    }
}

impl TriangleEntry for BigUint {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse(s: &str) -> Result<Self> {
        s.trim()
            .parse()
            .map_err(|_| Error::Cache(format!("`{s}` is not a nonnegative integer")))
    }
    fn is_nonnegative(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTriangle<T> {
    pub(crate) kind: TriangleKind,
    pub(crate) alpha_sq: Option<BigRational>,
    pub(crate) rows: Vec<Vec<T>>,
    pub(crate) b: Vec<BigRational>,
}

pub type LTriangle = CoefficientTriangle<BigRational>;
pub type MTriangle = CoefficientTriangle<BigUint>;

impl<T: TriangleEntry> CoefficientTriangle<T> {
    pub fn kind(&self) -> TriangleKind {
        self.kind
    }

    /// Largest row index held.
    pub fn depth(&self) -> usize {
        self.rows.len() - 1
    }

    /// `μ/λ` the triangle was built for (L triangles only).
    pub fn alpha_sq(&self) -> Option<&BigRational> {
        self.alpha_sq.as_ref()
    }

    /// `b_k = 1/(k+1) + kα²` for `k = 0..=depth` (empty for M triangles).
    pub fn b(&self) -> &[BigRational] {
        &self.b
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Entry `(i, k)`; `None` outside `0 ≤ k ≤ i ≤ depth`.
    pub fn get(&self, i: usize, k: i64) -> Option<&T> {
        if k < 0 {
            return None;
        }
        self.rows.get(i).and_then(|r| r.get(k as usize))
    }

    /// Entry `(i, k)`, zero outside the stored triangle.
    pub fn entry(&self, i: usize, k: i64) -> T {
        self.get(i, k).cloned().unwrap_or_else(T::zero)
    }

    pub fn to_cache_json(&self) -> String {
        let cache = TriangleCache {
            kind: Some(self.kind),
            alpha_sq: self.alpha_sq.as_ref().map(format_rational),
            depth: self.depth(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(T::render).collect())
                .collect(),
        };
        serde_json::to_string(&cache).expect("cache serializes")
    }

    /// Loads a cached triangle and revalidates its shape, unit diagonal and
    /// nonnegativity.
    pub fn from_cache_json(text: &str, kind: TriangleKind) -> Result<Self> {
        let cache: TriangleCache =
            serde_json::from_str(text).map_err(|e| Error::Cache(e.to_string()))?;
        let found = cache.kind.unwrap_or(TriangleKind::L);
        if found != kind {
            return Err(Error::Cache(format!("expected {kind:?} triangle, found {found:?}")));
        }
        if cache.rows.len() != cache.depth + 1 {
            return Err(Error::Cache(format!(
                "depth {} but {} rows",
                cache.depth,
                cache.rows.len()
            )));
        }
        let mut rows = Vec::with_capacity(cache.rows.len());
        for (i, row) in cache.rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::Cache(format!("row {i} has {} entries", row.len())));
            }
            let parsed = row
                .iter()
                .map(|s| T::parse(s))
                .collect::<Result<Vec<T>>>()
                .map_err(|e| Error::Cache(format!("row {i}: {e}")))?;
            if !parsed[i].is_one() {
                return Err(Error::Cache(format!("diagonal entry ({i}, {i}) is not 1")));
            }
            if let Some(k) = parsed.iter().position(|v| !v.is_nonnegative()) {
                return Err(Error::Cache(format!("entry ({i}, {k}) is negative")));
            }
            rows.push(parsed);
        }
        let (alpha_sq, b) = match kind {
            TriangleKind::L => {
                let a = cache
                    .alpha_sq
                    .ok_or_else(|| Error::Cache("L triangle requires alpha_sq".into()))
                    .and_then(|s| parse_rational(&s).map_err(|e| Error::Cache(e.to_string())))?;
                if !a.is_positive() {
                    return Err(Error::Cache("alpha_sq must be positive".into()));
                }
                let b = crate::series::b_coefficients(&a, cache.depth + 1);
                (Some(a), b)
            }
            TriangleKind::M => (None, Vec::new()),
        };
        Ok(Self {
            kind,
            alpha_sq,
            rows,
            b,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TriangleCache {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<TriangleKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_sq: Option<String>,
    depth: usize,
    rows: Vec<Vec<String>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::build_m_triangle;
    use crate::model::ModelParams;
    use crate::series::build_l_triangle;

    #[test]
    fn cache_roundtrip() {
        let p = ModelParams::parse("2", "3").unwrap();
        let l = build_l_triangle(&p, 8);
        let back = LTriangle::from_cache_json(&l.to_cache_json(), TriangleKind::L).unwrap();
        assert_eq!(back, l);
        let m = build_m_triangle(8);
        let back = MTriangle::from_cache_json(&m.to_cache_json(), TriangleKind::M).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn documented_layout_loads() {
        let text = r#"{"alpha_sq": "1", "depth": 2, "rows": [["1"], ["1","1"], ["2","5/2","1"]]}"#;
        let l = LTriangle::from_cache_json(text, TriangleKind::L).unwrap();
        assert_eq!(l.entry(2, 1), parse_rational("5/2").unwrap());
        assert_eq!(l.entry(2, 3), BigRational::zero());
        assert_eq!(l.entry(2, -1), BigRational::zero());
    }

    #[test]
    fn loader_rejects_broken_invariants() {
        let bad_diag = r#"{"alpha_sq": "1", "depth": 1, "rows": [["1"], ["1","2"]]}"#;
        assert!(LTriangle::from_cache_json(bad_diag, TriangleKind::L).is_err());
        let negative = r#"{"alpha_sq": "1", "depth": 1, "rows": [["1"], ["-1","1"]]}"#;
        assert!(LTriangle::from_cache_json(negative, TriangleKind::L).is_err());
        let short = r#"{"alpha_sq": "1", "depth": 2, "rows": [["1"], ["1","1"]]}"#;
        assert!(LTriangle::from_cache_json(short, TriangleKind::L).is_err());
        let no_alpha = r#"{"depth": 0, "rows": [["1"]]}"#;
        assert!(LTriangle::from_cache_json(no_alpha, TriangleKind::L).is_err());
        let wrong_kind = r#"{"kind": "M", "depth": 0, "rows": [["1"]]}"#;
        assert!(LTriangle::from_cache_json(wrong_kind, TriangleKind::L).is_err());
        assert!(MTriangle::from_cache_json(wrong_kind, TriangleKind::M).is_ok());
    }
}
