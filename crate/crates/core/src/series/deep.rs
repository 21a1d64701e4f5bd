//! Streaming big-float evaluation for plans too deep for exact coefficients.
//!
//! Works directly with the scaled terms `v(i, k) = τ^i/i! · L(i, k)`, which obey
//! `v(i+1, k) = τ/(i+1) · (v(i, k-1) + b_k v(i, k) + α² v(i, k+1))`. The
//! recursion only adds nonnegative quantities, so rounding stays relative;
//! cancellation happens once, in the final alternating sums, which are kept
//! as separate positive and negative accumulators.

use astro_float::BigFloat;
use num_rational::BigRational;

use super::b_coefficient;
use super::eval::TransientResult;
use crate::bigfloat::{self, RM};
use crate::bounds::TruncationPlan;
use crate::error::{Error, Result};
use crate::model::{ModelParams, PrecisionMode, PrecisionPolicy};
use crate::par::{self, Execution};

/// Sums `p(k, τ)` for `k = 0..=plan.k_max()` to the plan's orders using
/// `policy.float_precision_bits` throughout.
pub fn evaluate_transient_deep(
    params: &ModelParams,
    tau: &BigRational,
    plan: &TruncationPlan,
    policy: PrecisionPolicy,
    exec: Execution,
) -> Result<TransientResult> {
    if policy.mode != PrecisionMode::BigFloat {
        return Err(Error::Domain("streaming evaluation needs big-float mode".into()));
    }
    if policy.float_precision_bits < plan.precision_bits {
        return Err(Error::InsufficientPrecision {
            available: policy.float_precision_bits,
            recommended: plan.precision_bits,
        });
    }
    let p = bigfloat::word_precision(policy.float_precision_bits);
    let k_max = plan.k_max();
    let order = plan.max_order();
    let tau_b = bigfloat::from_rational(tau, p);
    let a2 = bigfloat::from_rational(params.alpha_sq(), p);
    // highest column whose values still reach a tracked state before `order`
    let reach = |i: usize| (k_max + order.saturating_sub(i + 1)).min(i);
    let b: Vec<BigFloat> = (0..=k_max + order)
        .map(|k| bigfloat::from_rational(&b_coefficient(params.alpha_sq(), k), p))
        .collect();

    let zero = BigFloat::from_u64(0, p);
    let mut pos = vec![zero.clone(); k_max + 1];
    let mut neg = vec![zero.clone(); k_max + 1];
    let mut row = vec![BigFloat::from_u64(1, p)];
    for i in 0..order {
        for k in 0..=k_max.min(i) {
            if i < plan.orders[k] {
                let acc = if (i - k) % 2 == 0 { &mut pos[k] } else { &mut neg[k] };
                *acc = acc.add(&row[k], p, RM);
            }
        }
        if i + 1 == order {
            break;
        }
        let scale = tau_b.div(&BigFloat::from_u64(i as u64 + 1, p), p, RM);
        let width = reach(i + 1) + 1;
        let prev = &row;
        let at = |k: usize| prev.get(k);
        row = par::map_indices(exec, width, |k| {
            let mut v = zero.clone();
            if k >= 1 {
                if let Some(x) = at(k - 1) {
                    v = v.add(x, p, RM);
                }
            }
            if let Some(x) = at(k) {
                v = v.add(&b[k].mul(x, p, RM), p, RM);
            }
            if let Some(x) = at(k + 1) {
                v = v.add(&a2.mul(x, p, RM), p, RM);
            }
            v.mul(&scale, p, RM)
        });
    }

    let mut fact = BigFloat::from_u64(1, p);
    let mut probabilities = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k >= 2 {
            fact = fact.mul(&BigFloat::from_u64(k as u64, p), p, RM);
        }
        let v = pos[k].sub(&neg[k], p, RM).div(&fact, p, RM);
        probabilities.push(bigfloat::to_f64(&v));
    }
    Ok(TransientResult::from_plan(plan, probabilities, policy, false))
}
