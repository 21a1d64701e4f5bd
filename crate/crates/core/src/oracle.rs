//! Reference engines that do not use the series coefficients: uniformization
//! of a truncated generator, seeded Monte Carlo, and the stationary law.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{format_rational, rational_to_f64, BirthDeathRates, ModelParams};
use crate::par::{self, Execution};
use crate::series::{solve_transient, SolveOptions, TransientResult};

/// Generator restricted to `{0, …, K}`, with the up-rate at `K` set to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedGenerator {
    up: Vec<f64>,
    down: Vec<f64>,
}

impl TruncatedGenerator {
    /// `up[k]` for `k < K` and `down[k]` for `1 ≤ k ≤ K`; `up` has `K` entries.
    pub fn new(up: Vec<f64>, down: Vec<f64>) -> Result<Self> {
        let size = up.len() + 1;
        if down.len() != size {
            return Err(Error::Rates(format!(
                "{} up rates need {size} down rates, got {}",
                up.len(),
                down.len()
            )));
        }
        if up.iter().chain(&down).any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Rates("rates must be finite and nonnegative".into()));
        }
        if down[0] != 0.0 {
            return Err(Error::Rates("down rate at state 0 must be 0".into()));
        }
        Ok(Self { up, down })
    }

    pub fn from_rates(rates: &BirthDeathRates, k_top: usize) -> Result<Self> {
        let up = (0..k_top).map(|k| rates.birth_f64(k)).collect::<Result<_>>()?;
        let down = (0..=k_top).map(|k| rates.death_f64(k)).collect::<Result<_>>()?;
        Self::new(up, down)
    }

    pub fn discouragement(params: &ModelParams, k_top: usize) -> Self {
        Self::from_rates(&BirthDeathRates::discouragement(params), k_top)
            .expect("discouragement rates are valid")
    }

    /// Number of states, `K + 1`.
    pub fn size(&self) -> usize {
        self.down.len()
    }

    pub fn up_rate(&self, k: usize) -> f64 {
        self.up.get(k).copied().unwrap_or(0.0)
    }

    pub fn down_rate(&self, k: usize) -> f64 {
        self.down[k]
    }

    pub fn exit_rate(&self, k: usize) -> f64 {
        self.up_rate(k) + self.down_rate(k)
    }

    /// Dense row `k` of the generator.
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.size()];
        r[k] = -self.exit_rate(k);
        if k + 1 < self.size() {
            r[k + 1] = self.up_rate(k);
        }
        if k >= 1 {
            r[k - 1] = self.down_rate(k);
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Uniformized {
    pub probabilities: Vec<f64>,
    /// Probability at the truncation state `K`.
    pub boundary_mass: f64,
    /// Poisson weight left out of the mixture, at most `epsilon`.
    pub omitted_weight: f64,
    pub rate: f64,
    pub terms: usize,
}

/// Poisson(`q`) weights covering all but `epsilon` of the mass, as
/// `(first index, weights)`. Starts at the mode and walks outward.
pub(crate) fn poisson_weights(q: f64, epsilon: f64) -> (usize, Vec<f64>, f64) {
    if q == 0.0 {
        return (0, vec![1.0], 0.0);
    }
    let mode = q.floor() as usize;
    let half = epsilon / 2.0;
    let w_mode = (-q + mode as f64 * q.ln() - ln_gamma(mode as f64 + 1.0)).exp();

    let mut left = vec![w_mode];
    let mut n = mode;
    let mut left_tail = 0.0;
    while n > 0 {
        let w = *left.last().unwrap();
        let r = n as f64 / q;
        let bound = w * r / (1.0 - r);
        if r < 1.0 && bound < half {
            left_tail = bound;
            break;
        }
        left.push(w * r);
        n -= 1;
    }
    left.reverse();

    let mut weights = left;
    let mut m = mode;
    let right_tail = loop {
        let w = *weights.last().unwrap();
        let next = w * q / (m as f64 + 1.0);
        let ratio = q / (m as f64 + 2.0);
        if ratio < 1.0 {
            let bound = next / (1.0 - ratio);
            if bound < half {
                break bound;
            }
        }
        weights.push(next);
        m += 1;
    };
    (n, weights, left_tail + right_tail)
}

/// `p(·, t)` from state 0 by uniformization with rate `Λ = max exit rate`.
pub fn transient_uniformization(
    gen: &TruncatedGenerator,
    t: f64,
    epsilon: f64,
) -> Result<Uniformized> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let size = gen.size();
    let rate = (0..size).map(|k| gen.exit_rate(k)).fold(0.0, f64::max);
    let mut v = vec![0.0; size];
    v[0] = 1.0;
    if t == 0.0 || rate == 0.0 {
        let boundary_mass = v[size - 1];
        return Ok(Uniformized {
            probabilities: v,
            boundary_mass,
            omitted_weight: 0.0,
            rate,
            terms: 1,
        });
    }
    let (first, weights, omitted_weight) = poisson_weights(rate * t, epsilon);
    let stay: Vec<f64> = (0..size).map(|k| 1.0 - gen.exit_rate(k) / rate).collect();
    let up: Vec<f64> = (0..size).map(|k| gen.up_rate(k) / rate).collect();
    let down: Vec<f64> = (0..size).map(|k| gen.down_rate(k) / rate).collect();
    let mut out = vec![0.0; size];
    let mut next = vec![0.0; size];
    let last = first + weights.len() - 1;
    for n in 0..=last {
        if n >= first {
            let w = weights[n - first];
            out.iter_mut().zip(&v).for_each(|(o, x)| *o += w * x);
        }
        if n == last {
            break;
        }
        for k in 0..size {
            let mut x = stay[k] * v[k];
            if k >= 1 {
                x += up[k - 1] * v[k - 1];
            }
            if k + 1 < size {
                x += down[k + 1] * v[k + 1];
            }
            next[k] = x;
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(Uniformized {
        boundary_mass: out[size - 1],
        probabilities: out,
        omitted_weight,
        rate,
        terms: last + 1,
    })
}

/// Smallest `K` whose boundary mass at time `t` is below `epsilon / 10`,
/// bracketed by doubling and then narrowed by bisection.
pub fn choose_truncation(params: &ModelParams, t: f64, epsilon: f64) -> Result<usize> {
    let ok = |k: usize| -> Result<bool> {
        let gen = TruncatedGenerator::discouragement(params, k);
        Ok(transient_uniformization(&gen, t, epsilon)?.boundary_mass < epsilon / 10.0)
    };
    let mut hi = 1;
    while !ok(hi)? {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // invariant: lo fails (or is 0), hi passes
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Dropped-tail threshold for [`stationary_distribution`].
pub const STATIONARY_TAIL: f64 = 1e-15;

fn stationary_weights(rho: f64, k_max: usize) -> Vec<f64> {
    // π_k / π_mode in log space so large ρ cannot overflow
    let ln_rho = rho.ln();
    let ln: Vec<f64> = (0..=k_max)
        .map(|k| k as f64 * ln_rho - 2.0 * ln_gamma(k as f64 + 1.0))
        .collect();
    let top = ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ln.iter().map(|x| (x - top).exp()).collect()
}

fn stationary_tail(rho: f64, k_max: usize) -> f64 {
    let w = stationary_weights(rho, k_max + 1);
    let total: f64 = w.iter().sum();
    let r = rho / ((k_max + 2) as f64).powi(2);
    if r >= 1.0 {
        return f64::INFINITY;
    }
    w[k_max + 1] / (1.0 - r) / total
}

/// `π_k ∝ (λ/μ)^k / (k!)²` on `{0, …, k_max}`.
pub fn stationary_distribution(params: &ModelParams, k_max: usize) -> Result<Vec<f64>> {
    let rho = params.lambda_f64() / params.mu_f64();
    if stationary_tail(rho, k_max) >= STATIONARY_TAIL {
        let recommended = (k_max + 1..)
            .find(|&k| stationary_tail(rho, k) < STATIONARY_TAIL)
            .expect("tail vanishes");
        return Err(Error::InsufficientStates {
            k_max,
            recommended,
        });
    }
    let w = stationary_weights(rho, k_max);
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub paths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SimMode {
    /// State of the continuous-time process at `t_end`.
    Continuous { t_end: f64 },
    /// State of the jump chain after `steps` jumps.
    Embedded { steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Empirical {
    pub paths: usize,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    /// `sqrt(p̂(1 - p̂) / paths)` per state.
    pub std_errors: Vec<f64>,
}

impl Empirical {
    fn from_counts(counts: Vec<u64>, paths: usize) -> Self {
        let n = paths as f64;
        let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let std_errors = probabilities
            .iter()
            .map(|p| (p * (1.0 - p) / n).sqrt())
            .collect();
        Self {
            paths,
            counts,
            probabilities,
            std_errors,
        }
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.std_errors.get(k).copied().unwrap_or(0.0)
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Simulates independent paths from state 0, each on its own ChaCha
/// stream of the master seed, so results do not depend on `exec`.
pub fn simulate_paths(
    params: &ModelParams,
    cfg: SimConfig,
    mode: SimMode,
    exec: Execution,
) -> Result<Empirical> {
    if cfg.paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let (lambda, mu) = (params.lambda_f64(), params.mu_f64());
    let birth = |k: usize| lambda / (k as f64 + 1.0);
    let death = |k: usize| mu * k as f64;
    let counts = match mode {
        SimMode::Continuous { t_end } => {
            if !(t_end >= 0.0 && t_end.is_finite()) {
                return Err(Error::Domain(format!("t_end must be nonnegative, got {t_end}")));
            }
            let finals = par::map_indices(exec, cfg.paths, |path| {
                let mut rng = path_rng(cfg.seed, path);
                let (mut k, mut t) = (0usize, 0.0);
                loop {
                    let (b, d) = (birth(k), death(k));
                    let rate = b + d;
                    let e: f64 = rng.sample(Exp1);
                    t += e / rate;
                    if t > t_end {
                        break k;
                    }
                    if rng.gen::<f64>() * rate < b {
                        k += 1;
                    } else {
                        k -= 1;
                    }
                }
            });
            let top = finals.iter().copied().max().unwrap_or(0);
            let mut counts = vec![0u64; top + 1];
            for k in finals {
                counts[k] += 1;
            }
            counts
        }
        SimMode::Embedded { steps } => par::histogram(exec, cfg.paths, steps + 1, |path| {
            let mut rng = path_rng(cfg.seed, path);
            let mut k = 0usize;
            for _ in 0..steps {
                let (b, d) = (birth(k), death(k));
                if k == 0 || rng.gen::<f64>() * (b + d) < b {
                    k += 1;
                } else {
                    k -= 1;
                }
            }
            k
        }),
    };
    Ok(Empirical::from_counts(counts, cfg.paths))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationRow {
    pub k: usize,
    pub series: f64,
    pub oracle: f64,
    pub abs_diff: f64,
    pub tail_bound: f64,
    pub boundary_mass: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub lambda: String,
    pub mu: String,
    pub tau: String,
    pub t: f64,
    pub k_max: usize,
    pub tolerance: f64,
    pub series_epsilon: f64,
    pub oracle_epsilon: f64,
    pub oracle_states: usize,
    pub truncation_order: usize,
    pub depth: usize,
    pub working_bits: Option<u32>,
    pub rows: Vec<ValidationRow>,
    pub passed: bool,
}

/// Compares the series against uniformization for `k = 0..=k_max`. Both
/// sides run at `tolerance / 100`; a state passes when they agree to
/// `tolerance`.
pub fn validate(
    params: &ModelParams,
    tau: &BigRational,
    k_max: usize,
    tolerance: f64,
    options: SolveOptions,
) -> Result<ValidationReport> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Error::Domain(format!("tolerance must lie in (0, 1), got {tolerance}")));
    }
    let eps = tolerance / 100.0;
    let series: TransientResult = solve_transient(params, tau, k_max, eps, options)?;
    let t = rational_to_f64(tau) / params.lambda_f64();
    let states = choose_truncation(params, t, eps)?.max(k_max + 1);
    let oracle = transient_uniformization(&TruncatedGenerator::discouragement(params, states), t, eps)?;
    let rows: Vec<ValidationRow> = (0..=k_max)
        .map(|k| {
            let (s, o) = (series.probabilities[k], oracle.probabilities[k]);
            let abs_diff = (s - o).abs();
            ValidationRow {
                k,
                series: s,
                oracle: o,
                abs_diff,
                tail_bound: series.tail_bounds[k],
                boundary_mass: oracle.boundary_mass,
                pass: abs_diff <= tolerance,
            }
        })
        .collect();
    Ok(ValidationReport {
        lambda: format_rational(params.lambda()),
        mu: format_rational(params.mu()),
        tau: format_rational(tau),
        t,
        k_max,
        tolerance,
        series_epsilon: eps,
        oracle_epsilon: eps,
        oracle_states: states,
        truncation_order: series.truncation_order,
        depth: series.depth,
        working_bits: series.working_bits,
        passed: rows.iter().all(|r| r.pass),
        rows,
    })
}
