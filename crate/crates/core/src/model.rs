//! Queue parameters, state-dependent rate sequences and the rescalings
//! linking the physical-time, rescaled-time and `w` forms of the system.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::Value;

use crate::error::{Error, Result};

/// Parses an exact rational from an integer, `n/d`, or a finite decimal
/// (optionally with an exponent, e.g. `2.5e-3`).
pub fn parse_rational(input: &str) -> Result<BigRational> {
    let fail = |reason: &str| Error::ParseRational {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(fail("empty"));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| fail("bad numerator"))?;
        let d: BigInt = d.trim().parse().map_err(|_| fail("bad denominator"))?;
        if d.is_zero() {
            return Err(fail("zero denominator"));
        }
        return Ok(BigRational::new(n, d));
    }

    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..].parse().map_err(|_| fail("bad exponent"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first() {
        Some(b'-') => (true, &mantissa[1..]),
        Some(b'+') => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(fail("no digits"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(fail("not a number"));
    }
    if exponent.unsigned_abs() > 10_000 {
        return Err(fail("exponent too large"));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(all_digits.parse::<BigInt>().map_err(|_| fail("not a number"))?);
    let shift = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let scale = num_traits::pow(ten, shift.unsigned_abs() as usize);
    if shift >= 0 {
        value *= BigRational::from_integer(scale);
    } else {
        value /= BigRational::from_integer(scale);
    }
    Ok(if negative { -value } else { value })
}

/// Renders a rational as `num/den`, or just `num` for integers.
pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Nearest `f64` to an exact rational, robust to numerators and
/// denominators far outside the `f64` range.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    // keep ~60 significant bits of each before dividing
    let ns = (nb - 60).max(0);
    let ds = (db - 60).max(0);
    let n = (q.numer() >> ns as usize).to_f64().unwrap_or(0.0);
    let d = (q.denom() >> ds as usize).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi((ns - ds) as i32)
}

/// Exact rational value of a finite `f64`.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} is not finite")))
}

fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}

/// Parameters of the discouragement queue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelParams {
    lambda: BigRational,
    mu: BigRational,
    alpha_sq: BigRational,
    gamma: BigRational,
}

impl ModelParams {
    pub fn new(lambda: BigRational, mu: BigRational) -> Result<Self> {
        if !lambda.is_positive() {
            return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
        }
        if !mu.is_positive() {
            return Err(Error::Domain(format!("mu must be positive, got {mu}")));
        }
        let alpha_sq = &mu / &lambda;
        let gamma = if alpha_sq > BigRational::one() {
            alpha_sq.clone()
        } else {
            BigRational::one()
        };
        Ok(Self {
            lambda,
            mu,
            alpha_sq,
            gamma,
        })
    }

    /// Convenience constructor from rational strings.
    pub fn parse(lambda: &str, mu: &str) -> Result<Self> {
        Self::new(parse_rational(lambda)?, parse_rational(mu)?)
    }

    pub fn lambda(&self) -> &BigRational {
        &self.lambda
    }

    pub fn mu(&self) -> &BigRational {
        &self.mu
    }

    /// `μ/λ`.
    pub fn alpha_sq(&self) -> &BigRational {
        &self.alpha_sq
    }

    /// `max(1, μ/λ)`.
    pub fn gamma(&self) -> &BigRational {
        &self.gamma
    }

    pub fn lambda_f64(&self) -> f64 {
        rational_to_f64(&self.lambda)
    }

    pub fn mu_f64(&self) -> f64 {
        rational_to_f64(&self.mu)
    }

    pub fn alpha_sq_f64(&self) -> f64 {
        rational_to_f64(&self.alpha_sq)
    }

    pub fn gamma_f64(&self) -> f64 {
        rational_to_f64(&self.gamma)
    }

    /// Rescaled time `τ = λt`.
    pub fn rescale_time(&self, t: &BigRational) -> Result<BigRational> {
        if t.is_negative() {
            return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
        }
        Ok(&self.lambda * t)
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lambda={} mu={}",
            format_rational(&self.lambda),
            format_rational(&self.mu)
        )
    }
}

pub fn make_params(lambda: BigRational, mu: BigRational) -> Result<ModelParams> {
    ModelParams::new(lambda, mu)
}

pub fn rescale_time(params: &ModelParams, t: &BigRational) -> Result<BigRational> {
    params.rescale_time(t)
}

/// `p = w / (α^k k!)` in floating point.
pub fn w_to_p(k: usize, w: f64, params: &ModelParams) -> f64 {
    let alpha = params.alpha_sq_f64().sqrt();
    let mut denom = 1.0;
    for j in 1..=k {
        denom *= alpha * j as f64;
    }
    w / denom
}

/// Exact `p = w / (α^k k!)`; only defined when `α²` is the square of a rational.
pub fn w_to_p_exact(k: usize, w: &BigRational, params: &ModelParams) -> Result<BigRational> {
    let alpha = rational_sqrt(params.alpha_sq()).ok_or_else(|| {
        Error::Domain(format!(
            "alpha_sq = {} is not a rational square",
            format_rational(params.alpha_sq())
        ))
    })?;
    let mut denom = BigRational::one();
    for j in 1..=k {
        denom *= &alpha * BigRational::from_integer(BigInt::from(j));
    }
    Ok(w / denom)
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum RateSource {
    Discouragement { lambda: BigRational, mu: BigRational },
    Table { birth: Vec<BigRational>, death: Vec<BigRational> },
}

/// State-dependent birth and death rates `λ_k`, `μ_k` on `{0, 1, 2, …}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BirthDeathRates {
    source: RateSource,
}

impl BirthDeathRates {
    /// `λ_k = λ/(1+k)`, `μ_k = μk`.
    pub fn discouragement(params: &ModelParams) -> Self {
        Self {
            source: RateSource::Discouragement {
                lambda: params.lambda().clone(),
                mu: params.mu().clone(),
            },
        }
    }

    /// Finite rate tables; states beyond the table are not available.
    pub fn from_table(birth: Vec<BigRational>, death: Vec<BigRational>) -> Result<Self> {
        if let Some((k, b)) = birth.iter().enumerate().find(|(_, b)| !b.is_positive()) {
            return Err(Error::Rates(format!("birth[{k}] = {b} must be positive")));
        }
        match death.first() {
            Some(d) if !d.is_zero() => {
                return Err(Error::Rates(format!("death[0] = {d} must be 0")));
            }
            _ => {}
        }
        if let Some((k, d)) = death.iter().enumerate().skip(1).find(|(_, d)| !d.is_positive()) {
            return Err(Error::Rates(format!("death[{k}] = {d} must be positive")));
        }
        Ok(Self {
            source: RateSource::Table { birth, death },
        })
    }

    /// Parses the rates-file JSON: either
    /// `{"birth": ["1", "1/2", …], "death": ["0", "1", …]}` or
    /// `{"preset": "discouragement", "lambda": "1", "mu": "1"}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            Error::Rates(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Rates("top level must be an object".into()))?;
        let field_str = |v: &Value, what: &str| -> Result<BigRational> {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => return Err(Error::Rates(format!("{what}: expected a rational string"))),
            };
            parse_rational(&s).map_err(|e| Error::Rates(format!("{what}: {e}")))
        };
        if let Some(preset) = obj.get("preset") {
            if preset.as_str() != Some("discouragement") {
                return Err(Error::Rates(format!("unknown preset {preset}")));
            }
            let lambda = field_str(obj.get("lambda").unwrap_or(&Value::Null), "lambda")?;
            let mu = field_str(obj.get("mu").unwrap_or(&Value::Null), "mu")?;
            return Ok(Self::discouragement(&ModelParams::new(lambda, mu)?));
        }
        let list = |name: &str| -> Result<Vec<BigRational>> {
            let arr = obj
                .get(name)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Rates(format!("missing array `{name}`")))?;
            arr.iter()
                .enumerate()
                .map(|(k, v)| field_str(v, &format!("{name}[{k}]")))
                .collect()
        };
        Self::from_table(list("birth")?, list("death")?)
    }

    pub fn to_json(&self) -> String {
        let v = match &self.source {
            RateSource::Discouragement { lambda, mu } => serde_json::json!({
                "preset": "discouragement",
                "lambda": format_rational(lambda),
                "mu": format_rational(mu),
            }),
            RateSource::Table { birth, death } => serde_json::json!({
                "birth": birth.iter().map(format_rational).collect::<Vec<_>>(),
                "death": death.iter().map(format_rational).collect::<Vec<_>>(),
            }),
        };
        serde_json::to_string_pretty(&v).expect("json values serialize")
    }

    pub fn is_discouragement(&self) -> bool {
        matches!(self.source, RateSource::Discouragement { .. })
    }

    /// Number of states with both rates defined, `None` when unbounded.
    pub fn capacity(&self) -> Option<usize> {
        match &self.source {
            RateSource::Discouragement { .. } => None,
            RateSource::Table { birth, death } => Some(birth.len().min(death.len())),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        match self.capacity() {
            Some(cap) if k >= cap => Err(Error::Rates(format!(
                "state {k} is beyond the rate table ({cap} states)"
            ))),
            _ => Ok(()),
        }
    }

    pub fn birth(&self, k: usize) -> Result<BigRational> {
        self.check(k)?;
        Ok(match &self.source {
            RateSource::Discouragement { lambda, .. } => {
                lambda / BigRational::from_integer(BigInt::from(k + 1))
            }
            RateSource::Table { birth, .. } => birth[k].clone(),
        })
    }

    pub fn death(&self, k: usize) -> Result<BigRational> {
        self.check(k)?;
        Ok(match &self.source {
            RateSource::Discouragement { mu, .. } => mu * BigRational::from_integer(BigInt::from(k)),
            RateSource::Table { death, .. } => death[k].clone(),
        })
    }

    /// Jump-chain probability of moving up from `k`: `λ_k/(λ_k+μ_k)`.
    pub fn up_probability(&self, k: usize) -> Result<BigRational> {
        let b = self.birth(k)?;
        let d = self.death(k)?;
        if k == 0 {
            return Ok(BigRational::one());
        }
        Ok(&b / (&b + d))
    }

    pub fn birth_f64(&self, k: usize) -> Result<f64> {
        self.birth(k).map(|q| rational_to_f64(&q))
    }

    pub fn death_f64(&self, k: usize) -> Result<f64> {
        self.death(k).map(|q| rational_to_f64(&q))
    }
}

/// How coefficient arithmetic and series summation are carried out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionMode {
    ExactRational,
    BigFloat,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrecisionPolicy {
    pub mode: PrecisionMode,
    pub float_precision_bits: u32,
    pub target_tolerance: f64,
}

impl PrecisionPolicy {
    pub const MIN_FLOAT_BITS: u32 = 64;

    pub fn exact(target_tolerance: f64) -> Result<Self> {
        Self::validated(PrecisionMode::ExactRational, 0, target_tolerance)
    }

    pub fn big_float(bits: u32, target_tolerance: f64) -> Result<Self> {
        Self::validated(PrecisionMode::BigFloat, bits, target_tolerance)
    }

    fn validated(mode: PrecisionMode, bits: u32, target_tolerance: f64) -> Result<Self> {
        if !(target_tolerance > 0.0 && target_tolerance.is_finite()) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {target_tolerance}"
            )));
        }
        if mode == PrecisionMode::BigFloat && bits < Self::MIN_FLOAT_BITS {
            return Err(Error::Domain(format!(
                "big-float precision must be at least {} bits, got {bits}",
                Self::MIN_FLOAT_BITS
            )));
        }
        Ok(Self {
            mode,
            float_precision_bits: bits,
            target_tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parses_all_rational_forms() {
        assert_eq!(q("3"), BigRational::from_integer(3.into()));
        assert_eq!(q("6/4"), BigRational::new(3.into(), 2.into()));
        assert_eq!(q("0.125"), BigRational::new(1.into(), 8.into()));
        assert_eq!(q("-2.5e-1"), BigRational::new((-1).into(), 4.into()));
        assert_eq!(q("1e3"), BigRational::from_integer(1000.into()));
        assert_eq!(q(".5"), BigRational::new(1.into(), 2.into()));
        for bad in ["", "1/0", "a", "1.2.3", "e5", "--1"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn make_params_examples() {
        let p = ModelParams::parse("1", "1").unwrap();
        assert_eq!(p.alpha_sq(), &q("1"));
        assert_eq!(p.gamma(), &q("1"));
        let p = ModelParams::parse("1", "2").unwrap();
        assert_eq!(p.alpha_sq(), &q("2"));
        assert_eq!(p.gamma(), &q("2"));
        let p = ModelParams::parse("2", "1").unwrap();
        assert_eq!(p.alpha_sq(), &q("1/2"));
        assert_eq!(p.gamma(), &q("1"));
    }

    #[test]
    fn nonpositive_rates_rejected() {
        assert!(matches!(ModelParams::parse("0", "1"), Err(Error::Domain(_))));
        assert!(matches!(ModelParams::parse("1", "-1"), Err(Error::Domain(_))));
    }

    #[test]
    fn rescale_time_examples() {
        let p = ModelParams::parse("2", "1").unwrap();
        assert_eq!(p.rescale_time(&q("3")).unwrap(), q("6"));
        let p = ModelParams::parse("1", "1").unwrap();
        assert_eq!(p.rescale_time(&q("7/3")).unwrap(), q("7/3"));
        let p = ModelParams::parse("1/2", "1").unwrap();
        assert_eq!(p.rescale_time(&q("4")).unwrap(), q("2"));
        assert!(p.rescale_time(&q("-1")).is_err());
    }

    #[test]
    fn w_to_p_examples() {
        let p = ModelParams::parse("1", "1").unwrap();
        assert_eq!(w_to_p(0, 1.0, &p), 1.0);
        assert_eq!(w_to_p(1, 1.0, &p), 1.0);
        assert_eq!(w_to_p(2, 2.0, &p), 1.0);
        assert_eq!(w_to_p_exact(2, &q("2"), &p).unwrap(), q("1"));
        let p = ModelParams::parse("1", "4").unwrap();
        assert_eq!(w_to_p_exact(1, &q("2"), &p).unwrap(), q("1"));
        let p = ModelParams::parse("1", "2").unwrap();
        assert!(w_to_p_exact(1, &q("1"), &p).is_err());
        assert!((w_to_p(1, 2f64.sqrt(), &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn discouragement_preset_rates() {
        let p = ModelParams::parse("3/2", "5").unwrap();
        let r = BirthDeathRates::discouragement(&p);
        for k in 0..10_000usize {
            let kk = BigRational::from_integer(BigInt::from(k + 1));
            assert_eq!(r.birth(k).unwrap() * kk, q("3/2"));
        }
        assert_eq!(r.death(0).unwrap(), q("0"));
        assert_eq!(r.death(3).unwrap(), q("15"));
        assert_eq!(r.capacity(), None);
    }

    #[test]
    fn rates_json_roundtrip_and_errors() {
        let r = BirthDeathRates::from_json(r#"{"birth": ["1", "1/2", 3], "death": ["0", "1", "0.5"]}"#)
            .unwrap();
        assert_eq!(r.capacity(), Some(3));
        assert_eq!(r.birth(1).unwrap(), q("1/2"));
        assert_eq!(BirthDeathRates::from_json(&r.to_json()).unwrap(), r);
        assert!(r.birth(3).is_err());

        let pre = BirthDeathRates::from_json(r#"{"preset": "discouragement", "lambda": "2", "mu": "1"}"#)
            .unwrap();
        assert!(pre.is_discouragement());
        assert_eq!(BirthDeathRates::from_json(&pre.to_json()).unwrap(), pre);

        let err = BirthDeathRates::from_json("{\n  \"birth\": [1,\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let err = BirthDeathRates::from_json(r#"{"birth": ["1", "x"], "death": ["0", "1"]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("birth[1]"), "{err}");
        assert!(BirthDeathRates::from_json(r#"{"birth": ["1"], "death": ["1"]}"#).is_err());
        assert!(BirthDeathRates::from_json(r#"{"birth": ["1", "1"], "death": ["0", "0"]}"#).is_err());
    }

    #[test]
    fn up_probability_state_zero_is_one() {
        let r = BirthDeathRates::discouragement(&ModelParams::parse("1", "1").unwrap());
        assert_eq!(r.up_probability(0).unwrap(), q("1"));
        assert_eq!(r.up_probability(1).unwrap(), q("1/3"));
        assert_eq!(r.up_probability(2).unwrap(), q("1/7"));
    }

    #[test]
    fn precision_policy_validation() {
        assert!(PrecisionPolicy::big_float(63, 1e-10).is_err());
        assert!(PrecisionPolicy::big_float(64, 1e-10).is_ok());
        assert!(PrecisionPolicy::exact(0.0).is_err());
        assert!(PrecisionPolicy::exact(f64::NAN).is_err());
    }

    #[test]
    fn huge_rationals_convert_to_f64() {
        let big = BigRational::new(
            num_traits::pow(BigInt::from(10), 400) * 3,
            num_traits::pow(BigInt::from(10), 400),
        );
        assert_eq!(rational_to_f64(&big), 3.0);
        let tiny = BigRational::new(1.into(), num_traits::pow(BigInt::from(2), 1100));
        assert_eq!(rational_to_f64(&tiny), 0.0);
    }
}
