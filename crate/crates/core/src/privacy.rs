//! Noise calibration, theorem-prescribed DP-SGD parameters and the
//! excess-risk bounds under restricted Lipschitz continuity.
//!
//! Logarithms inside `√(log(1/δ))` are natural; the subspace count `S`
//! uses base 2. Bounds are reported without their hidden constants.

use alloc::format;

use crate::error::{Error, Result};

/// Default multiplier in `T = c₁ (n² + d log₂² d)`.
pub const DEFAULT_C1: f64 = 1.0;
/// Default multiplier in `σ = c₂ √(T ln(1/δ)) / (ε n)`. Large enough that
/// `η α ≤ 1/2` holds for `n ≤ 10⁶`, `d ≤ 10⁶` and every admissible `(ε, δ)`.
pub const DEFAULT_C2: f64 = 32.0;

/// An `(ε, δ)` pair with `ε ∈ (0, 10]` and `δ ∈ (0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 10.0) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: epsilon,
                constraint: "0 < epsilon <= 10",
            });
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::OutOfRange {
                name: "delta",
                value: delta,
                constraint: "0 < delta <= 1/2",
            });
        }
        Ok(Self { epsilon, delta })
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `ln(1/δ)`
    #[inline]
    pub fn log_inv_delta(&self) -> f64 {
        -libm::log(self.delta)
    }
}

/// `σ = c₂ √(T ln(1/δ)) / (ε n)`, the noise multiplier making `T` steps of
/// DP-SGD `(ε, δ)`-DP.
pub fn calibrate_sigma(steps: usize, n: usize, budget: &PrivacyBudget, c2: f64) -> Result<f64> {
    if steps == 0 {
        return Err(Error::OutOfRange {
            name: "T",
            value: 0.0,
            constraint: "T >= 1",
        });
    }
    if n < 10 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            constraint: "n >= 10",
        });
    }
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(Error::OutOfRange {
            name: "c2",
            value: c2,
            constraint: "c2 > 0",
        });
    }
    Ok(c2 * libm::sqrt(steps as f64 * budget.log_inv_delta()) / (budget.epsilon * n as f64))
}

/// Parameters prescribed for a subspace split `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremParams {
    pub k: usize,
    /// `S = ⌊log₂(d/k)⌋ + 1`
    pub s_count: usize,
    /// `T`
    pub steps: usize,
    pub sigma: f64,
    pub eta: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TheoremParams {
    pub fn eta_alpha(&self) -> f64 {
        self.eta * self.alpha
    }
}

/// `⌊log₂(d/k)⌋ + 1` for `1 ≤ k ≤ d`, in integer arithmetic.
pub fn subspace_count(d: usize, k: usize) -> usize {
    // Count s >= 0 with 2^s k <= d.
    let mut s = 0;
    let mut v = k;
    while v <= d {
        s += 1;
        match v.checked_mul(2) {
            Some(next) => v = next,
            None => break,
        }
    }
    s
}

fn validate_split(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
            constraint: "1 <= k <= d",
        });
    }
    Ok(())
}

fn validate_coeffs(coeffs: &[f64], d: usize) -> Result<()> {
    let ok = coeffs.len() == d + 1
        && coeffs.iter().all(|g| g.is_finite() && *g >= 0.0)
        && coeffs.windows(2).all(|w| w[0] >= w[1])
        && coeffs[d] == 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidCoefficients)
    }
}

fn validate_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            constraint: "must be positive and finite",
        })
    }
}

/// `Σ_{s=1}^{S} s² 2^s G²_{2^{s−1}k}` with the coefficient index clamped to `d`.
pub fn tail_sum(coeffs: &[f64], k: usize, d: usize) -> f64 {
    let s_count = subspace_count(d, k);
    (1..=s_count)
        .map(|s| {
            let idx = k.saturating_mul(1usize << (s - 1)).min(d);
            let g = coeffs[idx];
            let s = s as f64;
            s * s * libm::pow(2.0, s) * g * g
        })
        .sum()
}

/// Theorem-prescribed `T`, `σ`, `η`, `α` for split `k`.
///
/// Fails when the resulting `η α` exceeds 1/2; the error suggests a `c₂`
/// that would satisfy it.
#[allow(clippy::too_many_arguments)]
pub fn theorem_params(
    k: usize,
    d: usize,
    n: usize,
    diameter: f64,
    coeffs: &[f64],
    budget: &PrivacyBudget,
    c1: f64,
    c2: f64,
) -> Result<TheoremParams> {
    validate_split(k, d)?;
    validate_coeffs(coeffs, d)?;
    validate_positive("D", diameter)?;
    validate_positive("c1", c1)?;
    validate_positive("c2", c2)?;
    let g0 = coeffs[0];
    if g0 <= 0.0 {
        return Err(Error::InvalidCoefficients);
    }

    let log_d = libm::log2(d as f64);
    let steps_f = libm::ceil(c1 * ((n as f64) * (n as f64) + d as f64 * log_d * log_d));
    if !(steps_f >= 1.0 && steps_f < usize::MAX as f64) {
        return Err(Error::OutOfRange {
            name: "T",
            value: steps_f,
            constraint: "1 <= T < usize::MAX",
        });
    }
    let steps = steps_f as usize;
    let sigma = calibrate_sigma(steps, n, budget, c2)?;
    let eta = diameter / (g0 * sigma * libm::sqrt(steps_f * k as f64));
    let alpha = libm::sqrt(tail_sum(coeffs, k, d)) / diameter;

    let product = eta * alpha;
    if product > 0.5 {
        // η α scales as 1/c₂.
        let suggested_c2 = libm::ceil(c2 * product / 0.5 * 1.0001);
        return Err(Error::StepRegularizerProduct {
            product,
            c2,
            suggested_c2,
        });
    }

    Ok(TheoremParams {
        k,
        s_count: subspace_count(d, k),
        steps,
        sigma,
        eta,
        alpha,
        c1,
        c2,
    })
}

/// The three additive pieces of the excess-risk bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `G₀ D / √n`
    pub generalization: f64,
    /// `G₀ D √(k ln(1/δ)) / (ε n)`
    pub privacy: f64,
    /// `D √(Σ_s s² 2^s G²_{2^{s−1}k})`
    pub tail: f64,
}

impl BoundTerms {
    /// Evaluates the terms for raw `(ε, δ)`; `ε = ∞` is allowed for limits.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        k: usize,
        d: usize,
        n: usize,
        diameter: f64,
        coeffs: &[f64],
        epsilon: f64,
        delta: f64,
        g0: f64,
    ) -> Result<Self> {
        validate_split(k, d)?;
        validate_coeffs(coeffs, d)?;
        validate_positive("D", diameter)?;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = n as f64;
        let log_inv_delta = -libm::log(delta);
        Ok(Self {
            generalization: g0 * diameter / libm::sqrt(n),
            privacy: g0 * diameter * libm::sqrt(k as f64 * log_inv_delta) / (epsilon * n),
            tail: diameter * libm::sqrt(tail_sum(coeffs, k, d)),
        })
    }

    pub fn erm(&self) -> f64 {
        self.privacy + self.tail
    }

    pub fn sco(&self) -> f64 {
        self.generalization + self.privacy + self.tail
    }
}

/// Excess empirical risk bound (up to constants).
pub fn erm_bound(
    k: usize,
    d: usize,
    n: usize,
    diameter: f64,
    coeffs: &[f64],
    budget: &PrivacyBudget,
    g0: f64,
) -> Result<f64> {
    BoundTerms::compute(k, d, n, diameter, coeffs, budget.epsilon, budget.delta, g0)
        .map(|t| t.erm())
}

/// Excess population risk bound (up to constants).
pub fn sco_bound(
    k: usize,
    d: usize,
    n: usize,
    diameter: f64,
    coeffs: &[f64],
    budget: &PrivacyBudget,
    g0: f64,
) -> Result<f64> {
    BoundTerms::compute(k, d, n, diameter, coeffs, budget.epsilon, budget.delta, g0)
        .map(|t| t.sco())
}

fn check_decay(c: f64) -> Result<()> {
    if c > 0.5 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "c",
            value: c,
            constraint: "c > 1/2",
        })
    }
}

/// Ceiling that ignores round-off just above an integer.
fn ceil_tolerant(v: f64) -> f64 {
    let r = libm::round(v);
    if libm::fabs(v - r) <= 1e-12 * v.max(1.0) {
        r
    } else {
        libm::ceil(v)
    }
}

/// `k = min{d, ⌈(ε n / √ln(1/δ))^{2/(1+2c)}⌉}` for coefficients decaying as
/// `G_k ≤ G₀ k^{−c}`.
pub fn optimal_k(d: usize, n: usize, budget: &PrivacyBudget, c: f64) -> Result<usize> {
    check_decay(c)?;
    if d == 0 {
        return Err(Error::OutOfRange {
            name: "d",
            value: 0.0,
            constraint: "d >= 1",
        });
    }
    let root = libm::sqrt(budget.log_inv_delta());
    let ratio = budget.epsilon * n as f64 / root;
    if ratio < 1.0 {
        return Err(Error::Hypothesis(format!(
            "n >= sqrt(ln(1/delta)) / epsilon fails: n = {n} < {}",
            root / budget.epsilon
        )));
    }
    let k = ceil_tolerant(libm::pow(ratio, 2.0 / (1.0 + 2.0 * c)));
    Ok(if k >= d as f64 { d } else { (k as usize).max(1) })
}

/// `G₀ D (√ln(1/δ) / (ε n))^{2c/(1+2c)}`
pub fn decay_rate_bound(
    c: f64,
    n: usize,
    budget: &PrivacyBudget,
    g0: f64,
    diameter: f64,
) -> Result<f64> {
    check_decay(c)?;
    let base = libm::sqrt(budget.log_inv_delta()) / (budget.epsilon * n as f64);
    Ok(g0 * diameter * libm::pow(base, 2.0 * c / (1.0 + 2.0 * c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(2.0, 1e-6).unwrap()
    }

    fn linear_style(d: usize) -> Vec<f64> {
        let mut g: Vec<f64> = (0..d).map(|j| 1.0 / libm::sqrt((j + 1) as f64)).collect();
        g.push(0.0);
        g
    }

    /// Independent loop over s with float log2, used as an oracle.
    fn tail_oracle(coeffs: &[f64], k: usize, d: usize) -> f64 {
        let s_max = libm::floor(libm::log2(d as f64 / k as f64)) as i32 + 1;
        let mut total = 0.0;
        let mut s = 1;
        while s <= s_max {
            let idx = core::cmp::min(k * 2usize.pow((s - 1) as u32), d);
            total += (s * s) as f64 * 2f64.powi(s) * coeffs[idx] * coeffs[idx];
            s += 1;
        }
        total
    }

    #[test]
    fn budget_ranges() {
        assert!(PrivacyBudget::new(0.0, 0.1).is_err());
        assert!(PrivacyBudget::new(10.5, 0.1).is_err());
        assert!(PrivacyBudget::new(10.0, 0.5).is_ok());
        assert!(PrivacyBudget::new(1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 0.6).is_err());
    }

    #[test]
    fn sigma_examples() {
        let s = calibrate_sigma(100_000_000, 10_000, &budget(), 1.0).unwrap();
        assert!((s - 1.858_461_094_424_919).abs() < 1e-12);
        let s2 = calibrate_sigma(100_000_000, 10_000, &PrivacyBudget::new(4.0, 1e-6).unwrap(), 1.0)
            .unwrap();
        assert!((s2 - s / 2.0).abs() < 1e-15);
        let s4 = calibrate_sigma(400_000_000, 10_000, &budget(), 1.0).unwrap();
        assert!((s4 - 2.0 * s).abs() < 1e-12);
        assert!(calibrate_sigma(10, 9, &budget(), 1.0).is_err());
        assert!(calibrate_sigma(0, 10, &budget(), 1.0).is_err());
        assert!(calibrate_sigma(10, 10, &budget(), 0.0).is_err());
    }

    #[test]
    fn sigma_monotonicity() {
        let b = budget();
        let base = calibrate_sigma(1000, 100, &b, 4.0).unwrap();
        assert!(calibrate_sigma(1001, 100, &b, 4.0).unwrap() > base);
        assert!(calibrate_sigma(1000, 101, &b, 4.0).unwrap() < base);
        assert!(calibrate_sigma(1000, 100, &PrivacyBudget::new(2.1, 1e-6).unwrap(), 4.0).unwrap() < base);
        assert!(calibrate_sigma(1000, 100, &PrivacyBudget::new(2.0, 1e-7).unwrap(), 4.0).unwrap() > base);
    }

    #[test]
    fn subspace_count_matches_float_formula() {
        for d in 1..300 {
            for k in 1..=d {
                let expect = libm::floor(libm::log2(d as f64 / k as f64)) as usize + 1;
                assert_eq!(subspace_count(d, k), expect, "d={d} k={k}");
            }
        }
    }

    #[test]
    fn theorem_params_worked_example() {
        let coeffs = linear_style(8);
        let p = theorem_params(2, 8, 100, 1.0, &coeffs, &budget(), 1.0, 1.0).unwrap();
        let alpha = libm::sqrt(tail_oracle(&coeffs, 2, 8));
        assert!((alpha - 1.966_384_160_500_35).abs() < 1e-12);
        assert_eq!(p.s_count, 3);
        assert!((p.alpha - alpha).abs() < 1e-12);
        // T = ceil(100² + 8·3²)
        assert_eq!(p.steps, 10_072);
        let sigma = calibrate_sigma(10_072, 100, &budget(), 1.0).unwrap();
        assert_eq!(p.sigma, sigma);
        assert!((p.eta - 1.0 / (sigma * libm::sqrt(10_072.0 * 2.0))).abs() < 1e-15);
    }

    #[test]
    fn theorem_params_rank_cases_have_zero_alpha() {
        // G_j = 0 for j >= k
        let mut coeffs = alloc::vec![1.0, 0.8, 0.5];
        coeffs.extend(core::iter::repeat(0.0).take(14));
        let p = theorem_params(3, 16, 50, 2.0, &coeffs, &budget(), 1.0, DEFAULT_C2).unwrap();
        assert_eq!(p.alpha, 0.0);
        // k = d
        let p = theorem_params(8, 8, 50, 2.0, &linear_style(8), &budget(), 1.0, DEFAULT_C2).unwrap();
        assert_eq!(p.s_count, 1);
        assert_eq!(p.alpha, 0.0);
    }

    #[test]
    fn theorem_params_errors() {
        let c = linear_style(4);
        let b = budget();
        assert!(theorem_params(0, 4, 50, 1.0, &c, &b, 1.0, 4.0).is_err());
        assert!(theorem_params(5, 4, 50, 1.0, &c, &b, 1.0, 4.0).is_err());
        assert_eq!(
            theorem_params(1, 4, 50, 1.0, &[1.0, 0.5, 0.7, 0.1, 0.0], &b, 1.0, 4.0),
            Err(Error::InvalidCoefficients)
        );
        assert_eq!(
            theorem_params(1, 4, 50, 1.0, &[1.0, 0.5, 0.0], &b, 1.0, 4.0),
            Err(Error::InvalidCoefficients)
        );
        assert!(theorem_params(1, 4, 50, 0.0, &c, &b, 1.0, 4.0).is_err());
    }

    #[test]
    fn eta_alpha_guard_raises_with_a_working_suggestion() {
        // Worst case: coeffs ≡ G₀ with small n and large ε.
        let d = 8;
        let mut coeffs = alloc::vec![1.0; d];
        coeffs.push(0.0);
        let b = PrivacyBudget::new(10.0, 0.5).unwrap();
        match theorem_params(1, d, 10, 1.0, &coeffs, &b, 1.0, 4.0) {
            Err(Error::StepRegularizerProduct { suggested_c2, product, .. }) => {
                assert!(product > 0.5);
                let p = theorem_params(1, d, 10, 1.0, &coeffs, &b, 1.0, suggested_c2).unwrap();
                assert!(p.eta_alpha() <= 0.5);
            }
            other => panic!("expected guard, got {other:?}"),
        }
        let p = theorem_params(1, d, 10, 1.0, &coeffs, &b, 1.0, DEFAULT_C2).unwrap();
        assert!(p.eta_alpha() <= 0.5);
    }

    #[test]
    fn bound_examples() {
        let b = budget();
        let coeffs = linear_style(8);
        let erm = erm_bound(2, 8, 100, 1.0, &coeffs, &b, 1.0).unwrap();
        assert!((erm - (0.026_282_608_848_784_66 + 1.966_384_160_500_35)).abs() < 1e-12);
        let sco = sco_bound(2, 8, 100, 1.0, &coeffs, &b, 1.0).unwrap();
        assert!((sco - erm - 0.1).abs() < 1e-12);

        // rank-2 coefficients: only the privacy term survives
        let mut rank2 = alloc::vec![1.0, 0.5];
        rank2.extend(core::iter::repeat(0.0).take(7));
        let erm = erm_bound(2, 8, 10_000, 3.0, &rank2, &b, 1.0).unwrap();
        let expect = 3.0 * libm::sqrt(2.0 * b.log_inv_delta()) / (2.0 * 10_000.0);
        assert!((erm - expect).abs() <= 1e-15 * expect);
        let sco = sco_bound(2, 8, 10_000, 3.0, &rank2, &b, 1.0).unwrap();
        assert!((sco - erm - 3.0 / 100.0).abs() < 1e-15);

        // k = d
        let erm = erm_bound(8, 8, 100, 1.0, &coeffs, &b, 1.0).unwrap();
        assert!((erm - libm::sqrt(8.0 * b.log_inv_delta()) / 200.0).abs() < 1e-15);

        // ε → ∞
        let t = BoundTerms::compute(2, 8, 10_000, 1.0, &rank2, f64::INFINITY, 1e-6, 1.0).unwrap();
        assert_eq!(t.sco(), 1.0 / 100.0);
    }

    #[test]
    fn optimal_k_examples() {
        let b = budget();
        // εn/√ln(1/δ) = 1 exactly: ε = 0.1, n = 10, δ = e^{-1}
        let edge = PrivacyBudget::new(0.1, libm::exp(-1.0)).unwrap();
        assert_eq!(optimal_k(1000, 10, &edge, 1.0).unwrap(), 1);
        assert_eq!(optimal_k(5, 10_000, &b, 1.0).unwrap(), 5);
        // εn/√ln(1/δ) = 100 with c ≈ 1/2
        let n = libm::ceil(100.0 * libm::sqrt(b.log_inv_delta()) / 2.0);
        let ratio = 2.0 * n / libm::sqrt(b.log_inv_delta());
        let direct = libm::ceil(libm::pow(ratio, 2.0 / (1.0 + 2.0 * 0.5001)));
        assert_eq!(optimal_k(1_000_000, n as usize, &b, 0.5001).unwrap(), direct as usize);
        assert!((99..=101).contains(&(direct as usize)));
        assert!(optimal_k(10, 100, &b, 0.5).is_err());
        let tight = PrivacyBudget::new(0.01, 1e-6).unwrap();
        assert!(matches!(optimal_k(10, 100, &tight, 1.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn decay_rate_examples() {
        let b = budget();
        let v = decay_rate_bound(1.0, 10_000, &b, 1.0, 1.0).unwrap();
        let oracle = libm::exp(2.0 / 3.0 * libm::log(libm::sqrt(b.log_inv_delta()) / 2e4));
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 3.256_634e-3).abs() < 1e-8);
        let big = decay_rate_bound(1e9, 10_000, &b, 1.0, 1.0).unwrap();
        assert!((big - libm::sqrt(b.log_inv_delta()) / 2e4).abs() < 1e-12);
        assert!(decay_rate_bound(0.5, 10_000, &b, 1.0, 1.0).is_err());
    }

    #[test]
    fn rank_r_bound_minimized_at_r() {
        let b = budget();
        for r in 1..=12 {
            let d = 12;
            let mut coeffs: Vec<f64> = (0..r).map(|j| 1.0 / (1.0 + j as f64)).collect();
            coeffs.resize(d + 1, 0.0);
            let scan: Vec<f64> = (1..=d)
                .map(|k| erm_bound(k, d, 500, 1.0, &coeffs, &b, 1.0).unwrap())
                .collect();
            let best = (1..=d).min_by(|&a, &c| scan[a - 1].total_cmp(&scan[c - 1])).unwrap();
            assert_eq!(best, r);
        }
    }

    proptest! {
        #[test]
        fn erm_never_exceeds_sco(
            d in 1usize..64,
            kf in 0.0f64..1.0,
            n in 10usize..100_000,
            raw in proptest::collection::vec(0.0f64..1.0, 64),
        ) {
            let k = 1 + ((d - 1) as f64 * kf) as usize;
            let mut coeffs: Vec<f64> = raw[..d].to_vec();
            coeffs.sort_by(|a, b| b.total_cmp(a));
            coeffs.push(0.0);
            let b = budget();
            let e = erm_bound(k, d, n, 1.0, &coeffs, &b, 1.0).unwrap();
            let s = sco_bound(k, d, n, 1.0, &coeffs, &b, 1.0).unwrap();
            prop_assert!(e <= s);
        }
    }
}
