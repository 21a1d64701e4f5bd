//! Conversions between exact values and `astro_float::BigFloat`.

use astro_float::{BigFloat, RoundingMode, Sign};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Signed;

pub(crate) const RM: RoundingMode = RoundingMode::ToEven;

/// Working precision in bits, rounded up to whole 64-bit words.
pub(crate) fn word_precision(bits: u32) -> usize {
    (bits as usize).div_ceil(64) * 64
}

pub(crate) fn from_biguint(n: &BigUint) -> BigFloat {
    let words = n.to_u64_digits();
    if words.is_empty() {
        return BigFloat::from_u64(0, 64);
    }
    BigFloat::from_words(&words, Sign::Pos, (64 * words.len()) as i32)
}

pub(crate) fn from_rational(q: &BigRational, p: usize) -> BigFloat {
    let n = from_biguint(q.numer().magnitude());
    let d = from_biguint(q.denom().magnitude());
    let v = n.div(&d, p, RM);
    if q.is_negative() {
        v.neg()
    } else {
        v
    }
}

pub(crate) fn to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    x.to_string().parse().unwrap_or(f64::NAN)
}
