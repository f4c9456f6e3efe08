//! Log-domain special functions: log-sum-exp, `ln erfc`, and χ² survival
//! functions for even and odd degrees of freedom.
//!
//! Everything is computed on the natural-log scale. Ellipsoid radii in
//! feature space routinely exceed `R² = 1000`, where the linear-scale survival
//! function is far below the smallest positive double.

use crate::scalar::Real;

/// `ln Σ exp(v)` over the iterator. Returns `-∞` for an empty input or when
/// every term is `-∞`.
pub fn log_sum_exp<T: Real, I>(values: I) -> T
where
    I: IntoIterator<Item = T>,
    I::IntoIter: Clone,
{
    let iter = values.into_iter();
    let max = iter.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let sum = iter.fold(T::zero(), |acc, v| acc + (v - max).exp());
    max + sum.ln()
}

/// Same as [`log_sum_exp`] over a slice.
#[inline]
pub fn log_sum_exp_slice<T: Real>(values: &[T]) -> T {
    log_sum_exp(values.iter().copied())
}

/// `ln erfc(z)` for `z ≥ 0`, finite for arbitrarily large `z`.
///
/// Uses the library `erfc` while it stays comfortably above the subnormal
/// range and switches to the asymptotic expansion
/// `erfc(z) ≈ e^{-z²}/(z√π) · (1 − 1/(2z²) + 3/(4z⁴) − 15/(8z⁶) + 105/(16z⁸))`
/// beyond that.
pub fn ln_erfc<T: Real>(z: T) -> T {
    if z <= T::zero() {
        return z.erfc().ln();
    }
    let direct = z.erfc();
    // 1e6 · MIN_POSITIVE keeps the direct path out of the subnormal range.
    if direct > T::min_positive_value() * T::lit(1e6) {
        return direct.ln();
    }
    let inv2 = (z * z).recip();
    let series = T::one() - inv2 * T::lit(0.5) + inv2 * inv2 * T::lit(0.75)
        - inv2 * inv2 * inv2 * T::lit(1.875)
        + inv2 * inv2 * inv2 * inv2 * T::lit(6.5625);
    -(z * z) - (z * T::lit(std::f64::consts::PI).sqrt()).ln() + series.ln()
}

/// `ln SF_{χ²_{2m}}(x)`, the even-degree survival function
/// `Σ_{j<m} (x/2)^j e^{−x/2} / j!` evaluated by log-sum-exp.
pub fn ln_chi2_sf_even<T: Real>(m: usize, x: T) -> T {
    assert!(m >= 1, "even chi-square needs m >= 1");
    if x <= T::zero() {
        return T::zero();
    }
    let half = x * T::lit(0.5);
    let ln_half = half.ln();
    let mut ln_fact = T::zero();
    let mut max = T::neg_infinity();
    let mut terms = Vec::with_capacity(m);
    for j in 0..m {
        if j > 0 {
            ln_fact = ln_fact + T::from_usize_lossy(j).ln();
        }
        let t = T::from_usize_lossy(j) * ln_half - ln_fact;
        max = max.max(t);
        terms.push(t);
    }
    let sum = terms
        .iter()
        .fold(T::zero(), |acc, &t| acc + (t - max).exp());
    (max + sum.ln() - half).min(T::zero())
}

/// `ln SF_{χ²_{2m+1}}(x)`, the odd-degree survival function
/// `erfc(√(x/2)) + Σ_{j<m} (x/2)^{j+½} e^{−x/2} / Γ(j+3/2)`.
pub fn ln_chi2_sf_odd<T: Real>(m: usize, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let half = x * T::lit(0.5);
    let ln_half = half.ln();
    let mut terms = Vec::with_capacity(m + 1);
    terms.push(ln_erfc(half.sqrt()));
    // lnΓ(3/2) = ln(√π / 2)
    let mut ln_gamma = T::lit(-0.120_782_237_635_245_22);
    for j in 0..m {
        if j > 0 {
            ln_gamma = ln_gamma + (T::from_usize_lossy(j) + T::lit(0.5)).ln();
        }
        let t = (T::from_usize_lossy(j) + T::lit(0.5)) * ln_half - half - ln_gamma;
        terms.push(t);
    }
    log_sum_exp_slice(&terms).min(T::zero())
}

/// `ln SF_{χ²_d}(x)` dispatching on the parity of `d`.
#[inline]
pub fn ln_chi2_sf<T: Real>(d: usize, x: T) -> T {
    assert!(d >= 1, "chi-square needs d >= 1");
    if d % 2 == 0 {
        ln_chi2_sf_even(d / 2, x)
    } else {
        ln_chi2_sf_odd(d / 2, x)
    }
}

/// Survival function of χ² with `2m` degrees of freedom.
#[inline]
pub fn chi2_sf_even<T: Real>(m: usize, x: T) -> T {
    ln_chi2_sf_even(m, x).exp()
}

/// Survival function of χ² with `2m + 1` degrees of freedom.
#[inline]
pub fn chi2_sf_odd<T: Real>(m: usize, x: T) -> T {
    ln_chi2_sf_odd(m, x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_closed_forms() {
        assert_eq!(chi2_sf_even(1, 0.0_f64), 1.0);
        assert!((chi2_sf_even(1, 2.0_f64) - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((chi2_sf_even(2, 2.0_f64) - 2.0 * (-1.0_f64).exp()).abs() < 1e-15);
        assert!((chi2_sf_even(2, 2.0_f64) - 0.735_758_882_342_884_6).abs() < 1e-12);
    }

    #[test]
    fn odd_closed_forms() {
        assert_eq!(chi2_sf_odd(0, 0.0_f64), 1.0);
        // 2(1 − Φ(1)) = erfc(1/√2)
        assert!((chi2_sf_odd(0, 1.0_f64) - 0.317_310_507_862_914_1).abs() < 1e-13);
        // d = 3: erfc(√(x/2)) + √(2x/π) e^{−x/2}
        let x = 2.0_f64;
        let want = libm::erfc(1.0) + (2.0 * x / std::f64::consts::PI).sqrt() * (-1.0_f64).exp();
        assert!((chi2_sf_odd(1, x) - want).abs() < 1e-14);
    }

    #[test]
    fn log_domain_survives_huge_radii() {
        let v = ln_chi2_sf(32, 5000.0_f64);
        assert!(v.is_finite() && v < -2000.0);
        let v = ln_chi2_sf(1, 5000.0_f64);
        assert!(v.is_finite());
        // ln erfc(50) ≈ −2500 − ln(50√π)
        assert!((ln_erfc(50.0_f64) - (-2500.0 - (50.0 * std::f64::consts::PI.sqrt()).ln())).abs() < 1e-3);
    }

    #[test]
    fn ln_erfc_is_continuous_at_switch() {
        for z in [20.0_f64, 25.0, 26.0, 26.5, 27.0] {
            let a = ln_erfc(z);
            let b = ln_erfc(z + 1e-6);
            assert!((a - b).abs() < 1e-3, "jump at {z}: {a} vs {b}");
        }
        // Switch point for f64 sits near z ≈ 26.5; compare both sides of it.
        let z = 26.0_f64;
        let direct = libm::erfc(z).ln();
        let inv2 = 1.0 / (z * z);
        let series = 1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2.powi(3) + 6.5625 * inv2.powi(4);
        let asym = -(z * z) - (z * std::f64::consts::PI.sqrt()).ln() + series.ln();
        assert!((direct - asym).abs() < 1e-9);
    }

    #[test]
    fn single_precision_agrees_with_double() {
        for d in 1..=6 {
            for x in [0.5, 2.0, 10.0] {
                let a = ln_chi2_sf(d, x as f32) as f64;
                let b = ln_chi2_sf(d, x);
                assert!((a - b).abs() < 1e-5, "d={d} x={x}");
            }
        }
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp_slice::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp_slice(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp_slice(&[0.0_f64, 0.0]);
        assert!((v - 2.0_f64.ln()).abs() < 1e-15);
        let v = log_sum_exp_slice(&[-1000.0_f64, -1000.0]);
        assert!((v - (-1000.0 + 2.0_f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sf_non_increasing_in_x(d in 1usize..40, x in 0.0f64..400.0, dx in 0.0f64..50.0) {
            prop_assert!(ln_chi2_sf(d, x + dx) <= ln_chi2_sf(d, x) + 1e-12);
        }

        #[test]
        fn sf_non_decreasing_in_dof(m in 1usize..30, x in 0.0f64..400.0) {
            prop_assert!(ln_chi2_sf_even(m + 1, x) >= ln_chi2_sf_even(m, x) - 1e-12);
            prop_assert!(ln_chi2_sf_odd(m, x) >= ln_chi2_sf_odd(m - 1, x) - 1e-12);
        }

        #[test]
        fn sf_in_unit_interval(d in 1usize..64, x in 0.0f64..1e4) {
            let v = ln_chi2_sf(d, x);
            prop_assert!(v <= 0.0 && !v.is_nan());
        }

        #[test]
        fn log_sum_exp_dominates_max(v in proptest::collection::vec(-800.0f64..800.0, 1..20)) {
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(log_sum_exp_slice(&v) >= max);
        }
    }
}
