use astro_float::BigFloat;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::{build_l_triangle, check_params, deep::evaluate_transient_deep};
use crate::bigfloat::{self, RM};
use crate::bounds::{self, LogMajorant, TruncationPlan, WINDOW};
use crate::error::{Error, Result};
use crate::model::{rational_to_f64, ModelParams, PrecisionMode, PrecisionPolicy};
use crate::par::{self, Execution};
use crate::triangle::{LTriangle, MTriangle};

/// Plans deeper than this are evaluated by the streaming big-float path
/// instead of building the exact triangle.
pub const EXACT_DEPTH_LIMIT: usize = 120;

/// Transient distribution `p(k, τ)` for `k = 0..=k_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransientResult {
    pub tau: f64,
    pub probabilities: Vec<f64>,
    /// Certified truncation error per state.
    pub tail_bounds: Vec<f64>,
    /// Largest entry of `tail_bounds`.
    pub tail_bound: f64,
    /// First omitted series index per state.
    pub truncation_orders: Vec<usize>,
    /// Largest entry of `truncation_orders`.
    pub truncation_order: usize,
    /// Coefficient depth the evaluation relied on.
    pub depth: usize,
    pub precision: PrecisionPolicy,
    /// Bits used for summation; `None` when summed exactly.
    pub working_bits: Option<u32>,
    /// Whether the coefficients were exact rationals.
    pub exact_coefficients: bool,
}

impl TransientResult {
    pub(crate) fn from_plan(
        plan: &TruncationPlan,
        probabilities: Vec<f64>,
        policy: PrecisionPolicy,
        exact_coefficients: bool,
    ) -> Self {
        let working_bits =
            (policy.mode == PrecisionMode::BigFloat).then_some(policy.float_precision_bits);
        Self {
            tau: plan.tau,
            probabilities,
            tail_bounds: plan.tail_bounds.clone(),
            tail_bound: plan.tail_bounds.iter().copied().fold(0.0, f64::max),
            truncation_orders: plan.orders.clone(),
            truncation_order: plan.max_order(),
            depth: plan.depth,
            precision: policy,
            working_bits,
            exact_coefficients,
        }
    }

    fn initial(k_max: usize, policy: PrecisionPolicy) -> Self {
        let mut probabilities = vec![0.0; k_max + 1];
        probabilities[0] = 1.0;
        Self {
            tau: 0.0,
            probabilities,
            tail_bounds: vec![0.0; k_max + 1],
            tail_bound: 0.0,
            truncation_orders: vec![0; k_max + 1],
            truncation_order: 0,
            depth: 0,
            precision: policy,
            working_bits: None,
            exact_coefficients: true,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

fn check_tau(tau: &BigRational) -> Result<f64> {
    if tau.is_negative() {
        return Err(Error::Domain(format!("tau must be nonnegative, got {tau}")));
    }
    Ok(rational_to_f64(tau))
}

fn too_shallow(depth: usize, params: &ModelParams, tau: f64, k_max: usize, eps: f64) -> Error {
    Error::InsufficientDepth {
        depth,
        tolerance: eps,
        recommended: bounds::recommended_depth(params, tau, k_max, eps),
    }
}

/// Sums the series for `k = 0..=k_max` from the exact triangle.
///
/// Truncation orders come from the majorant; the summation is exact in
/// exact-rational mode and uses `policy.float_precision_bits` otherwise.
pub fn evaluate_transient(
    triangle: &LTriangle,
    params: &ModelParams,
    tau: &BigRational,
    k_max: usize,
    policy: PrecisionPolicy,
) -> Result<TransientResult> {
    check_params(triangle, params)?;
    let tau_f = check_tau(tau)?;
    if tau.is_zero() {
        return Ok(TransientResult::initial(k_max, policy));
    }
    let eps = policy.target_tolerance;
    let mut lm = LogMajorant::new(k_max);
    lm.extend_to(triangle.depth());
    let plan = bounds::plan_truncation(&lm, tau_f, params, k_max, eps)
        .ok_or_else(|| too_shallow(triangle.depth(), params, tau_f, k_max, eps))?;
    sum_exact_coefficients(triangle, tau, &plan, policy, Execution::default())
}

fn sum_exact_coefficients(
    triangle: &LTriangle,
    tau: &BigRational,
    plan: &TruncationPlan,
    policy: PrecisionPolicy,
    exec: Execution,
) -> Result<TransientResult> {
    let probabilities = match policy.mode {
        PrecisionMode::ExactRational => {
            par::map_indices(exec, plan.k_max() + 1, |k| {
                rational_to_f64(&exact_sum(triangle, tau, k, plan.orders[k]))
            })
        }
        PrecisionMode::BigFloat => {
            if policy.float_precision_bits < plan.precision_bits {
                return Err(Error::InsufficientPrecision {
                    available: policy.float_precision_bits,
                    recommended: plan.precision_bits,
                });
            }
            let p = bigfloat::word_precision(policy.float_precision_bits);
            let tau_b = bigfloat::from_rational(tau, p);
            par::map_indices(exec, plan.k_max() + 1, |k| {
                float_sum(triangle, &tau_b, k, plan.orders[k], p)
            })
        }
    };
    Ok(TransientResult::from_plan(plan, probabilities, policy, true))
}

fn exact_sum(triangle: &LTriangle, tau: &BigRational, k: usize, order: usize) -> BigRational {
    let mut coeff = BigRational::one();
    let mut sum = BigRational::zero();
    for i in 0..order {
        if i > 0 {
            coeff = coeff * tau / BigRational::from_integer(BigInt::from(i));
        }
        if i >= k {
            let term = &coeff * &triangle.rows[i][k];
            if (i - k) % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
    }
    let fact: BigInt = (1..=k).map(BigInt::from).product();
    sum / BigRational::from_integer(fact)
}

fn float_sum(triangle: &LTriangle, tau: &BigFloat, k: usize, order: usize, p: usize) -> f64 {
    let mut coeff = BigFloat::from_u64(1, p);
    let mut pos = BigFloat::from_u64(0, p);
    let mut neg = BigFloat::from_u64(0, p);
    for i in 0..order {
        if i > 0 {
            coeff = coeff.mul(tau, p, RM).div(&BigFloat::from_u64(i as u64, p), p, RM);
        }
        if i >= k {
            let term = coeff.mul(&bigfloat::from_rational(&triangle.rows[i][k], p), p, RM);
            if (i - k) % 2 == 0 {
                pos = pos.add(&term, p, RM);
            } else {
                neg = neg.add(&term, p, RM);
            }
        }
    }
    let mut fact = BigFloat::from_u64(1, p);
    for j in 2..=k as u64 {
        fact = fact.mul(&BigFloat::from_u64(j, p), p, RM);
    }
    bigfloat::to_f64(&pos.sub(&neg, p, RM).div(&fact, p, RM))
}

/// `(1/k!) · τ^n/n! · M(n, k) · γ^(2(n-k))`, the alternating-series remainder
/// bound for truncating the state-`k` series before index `n`.
///
/// Requires the majorant to be non-increasing over the `WINDOW` terms
/// starting at `n`, all of which must lie inside `m`.
pub fn tail_bound(
    k: usize,
    tau: f64,
    from_index: usize,
    m: &MTriangle,
    params: &ModelParams,
) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be nonnegative, got {tau}")));
    }
    if tau == 0.0 && from_index > 0 {
        return Ok(0.0);
    }
    if from_index < k {
        return Err(Error::Index(format!(
            "from_index {from_index} precedes the first term of state {k}"
        )));
    }
    let last = from_index + WINDOW - 1;
    if last > m.depth() {
        return Err(Error::InsufficientDepth {
            depth: m.depth(),
            tolerance: f64::NAN,
            recommended: last,
        });
    }
    let ln_tau = tau.ln();
    let ln_g2 = 2.0 * params.gamma_f64().ln();
    let ln_kf = ln_gamma(k as f64 + 1.0);
    let ln_term = |i: usize| {
        let ln_m = bounds::ln_biguint(&m.rows[i][k]);
        let pow = if i == 0 { 0.0 } else { i as f64 * ln_tau };
        pow - ln_gamma(i as f64 + 1.0) + ln_m + (i - k) as f64 * ln_g2 - ln_kf
    };
    let terms: Vec<f64> = (from_index..=m.depth()).map(ln_term).collect();
    let monotone_at = |j: usize| terms[j..j + WINDOW].windows(2).all(|w| w[0] >= w[1]);
    if !monotone_at(0) {
        let recommended = (1..=terms.len() - WINDOW)
            .find(|&j| monotone_at(j))
            .map(|j| from_index + j);
        return Err(Error::NotMonotone {
            from_index,
            recommended,
        });
    }
    Ok(terms[0].exp())
}

/// Caller overrides for [`solve_transient`]; `None` fields are chosen
/// automatically from the majorant.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    pub depth: Option<usize>,
    pub precision_bits: Option<u32>,
    /// Sum exactly instead of in big-float; only for plans within
    /// [`EXACT_DEPTH_LIMIT`].
    pub exact_summation: bool,
    pub exec: Execution,
}

/// Plans, builds and sums the series for `p(k, τ)`, `k = 0..=k_max`, to
/// tolerance `epsilon`.
///
/// A fixed `depth` or `precision_bits` that cannot certify `epsilon` yields
/// an error carrying the recommended value.
pub fn solve_transient(
    params: &ModelParams,
    tau: &BigRational,
    k_max: usize,
    epsilon: f64,
    options: SolveOptions,
) -> Result<TransientResult> {
    let tau_f = check_tau(tau)?;
    let eps_policy = PrecisionPolicy::exact(epsilon)?;
    if tau.is_zero() {
        return Ok(TransientResult::initial(k_max, eps_policy));
    }
    let plan = match options.depth {
        None => bounds::recommend_truncation(params, tau_f, k_max, epsilon)?,
        Some(depth) => {
            let mut lm = LogMajorant::new(k_max);
            lm.extend_to(depth);
            bounds::plan_truncation(&lm, tau_f, params, k_max, epsilon)
                .ok_or_else(|| too_shallow(depth, params, tau_f, k_max, epsilon))?
        }
    };
    if options.exact_summation {
        if plan.depth > EXACT_DEPTH_LIMIT {
            return Err(Error::Domain(format!(
                "exact summation needs depth {} which exceeds {EXACT_DEPTH_LIMIT}",
                plan.depth
            )));
        }
        let triangle = build_l_triangle(params, plan.depth);
        return sum_exact_coefficients(&triangle, tau, &plan, eps_policy, options.exec);
    }
    let bits = options.precision_bits.unwrap_or(plan.precision_bits);
    let policy = PrecisionPolicy::big_float(bits, epsilon)?;
    if bits < plan.precision_bits {
        return Err(Error::InsufficientPrecision {
            available: bits,
            recommended: plan.precision_bits,
        });
    }
    if plan.depth <= EXACT_DEPTH_LIMIT {
        let triangle = build_l_triangle(params, plan.depth);
        sum_exact_coefficients(&triangle, tau, &plan, policy, options.exec)
    } else {
        evaluate_transient_deep(params, tau, &plan, policy, options.exec)
    }
}
