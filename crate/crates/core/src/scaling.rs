//! Linear scaling of individuals against the current target, and the two
//! fitness functions (residual variance and MSE).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ExprTree;

/// Denominator threshold below which the semantics are treated as constant
/// and the best constant model (b = 0, a = mean target) is returned.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Least-squares affine correction `a + b * output`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCoeffs {
    /// Intercept.
    pub a: f64,
    /// Slope.
    pub b: f64,
}

/// An individual frozen with the scaling coefficients computed on the
/// training target that was active at (ext_iter, int_iter). The
/// coefficients are never recomputed afterwards.
#[derive(Clone, Debug)]
pub struct ScaledModel {
    pub tree: ExprTree,
    pub coeffs: ScalingCoeffs,
    pub ext_iter: usize,
    pub int_iter: usize,
    pub train_fitness: f64,
}

fn check_lengths(raw: &[f64], target: &[f64]) -> Result<()> {
    if raw.len() != target.len() {
        return Err(Error::contract(format!(
            "length mismatch: semantics {} vs target {}",
            raw.len(),
            target.len()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares slope and intercept of `a + b * raw` against `target`.
pub fn fit_scaling(raw: &[f64], target: &[f64]) -> Result<ScalingCoeffs> {
    check_lengths(raw, target)?;
    if raw.len() < 2 {
        return Err(Error::contract("scaling needs at least 2 cases"));
    }
    let raw_mean = mean(raw);
    let target_mean = mean(target);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&r, &t) in raw.iter().zip(target) {
        num += (t - target_mean) * (r - raw_mean);
        den += (r - raw_mean) * (r - raw_mean);
    }
    if den < DEGENERATE_EPS {
        return Ok(ScalingCoeffs {
            a: target_mean,
            b: 0.0,
        });
    }
    let b = num / den;
    let a = target_mean - b * raw_mean;
    if !(a.is_finite() && b.is_finite()) {
        // Pathological semantics (huge clamped values); fall back to the
        // best constant model to keep the coefficients finite.
        return Ok(ScalingCoeffs {
            a: target_mean,
            b: 0.0,
        });
    }
    Ok(ScalingCoeffs { a, b })
}

/// Elementwise `a + b * raw`.
pub fn apply_scaling(raw: &[f64], coeffs: ScalingCoeffs) -> Vec<f64> {
    raw.iter().map(|&r| coeffs.a + coeffs.b * r).collect()
}

/// Population variance (divisor m) of the residual `scaled - target`.
pub fn fitness_variance(scaled: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(scaled, target)?;
    if scaled.len() < 2 {
        return Err(Error::contract("variance fitness needs at least 2 cases"));
    }
    let m = scaled.len() as f64;
    let mut sum = 0.0;
    for (&s, &t) in scaled.iter().zip(target) {
        sum += s - t;
    }
    let residual_mean = sum / m;
    let mut var = 0.0;
    for (&s, &t) in scaled.iter().zip(target) {
        let d = (s - t) - residual_mean;
        var += d * d;
    }
    Ok(var / m)
}

/// Mean of squared residuals.
pub fn fitness_mse(scaled: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(scaled, target)?;
    let m = scaled.len() as f64;
    let mut sum = 0.0;
    for (&s, &t) in scaled.iter().zip(target) {
        let d = s - t;
        sum += d * d;
    }
    Ok(sum / m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent least-squares oracle: solves the 2x2 normal equations
    /// [m, Σr; Σr, Σr²] [a; b] = [Σt; Σrt] by Cramer's rule.
    fn normal_equations(raw: &[f64], target: &[f64]) -> (f64, f64) {
        let m = raw.len() as f64;
        let sr: f64 = raw.iter().sum();
        let srr: f64 = raw.iter().map(|r| r * r).sum();
        let st: f64 = target.iter().sum();
        let srt: f64 = raw.iter().zip(target).map(|(r, t)| r * t).sum();
        let det = m * srr - sr * sr;
        let a = (st * srr - sr * srt) / det;
        let b = (m * srt - sr * st) / det;
        (a, b)
    }

    #[test]
    fn fit_exact_line() {
        let c = fit_scaling(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((c.b - 2.0).abs() < 1e-12);
        assert!(c.a.abs() < 1e-12);
    }

    #[test]
    fn fit_constant_semantics() {
        let c = fit_scaling(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.b, 0.0);
        assert!((c.a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_zero_covariance() {
        let c = fit_scaling(&[1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(c.b, 0.0);
        assert!((c.a - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = rng.gen_range(2..50);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let target: Vec<f64> = (0..m).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let c = fit_scaling(&raw, &target).unwrap();
            let den: f64 = {
                let rm = raw.iter().sum::<f64>() / m as f64;
                raw.iter().map(|r| (r - rm) * (r - rm)).sum()
            };
            if den < DEGENERATE_EPS {
                continue;
            }
            let (a, b) = normal_equations(&raw, &target);
            assert!((c.a - a).abs() < 1e-8 * (1.0 + a.abs()), "{} vs {}", c.a, a);
            assert!((c.b - b).abs() < 1e-8 * (1.0 + b.abs()), "{} vs {}", c.b, b);
        }
    }

    #[test]
    fn apply_examples() {
        assert_eq!(
            apply_scaling(&[1.0, 2.0, 3.0], ScalingCoeffs { a: 0.0, b: 2.0 }),
            vec![2.0, 4.0, 6.0]
        );
        assert_eq!(
            apply_scaling(&[7.0, 9.0], ScalingCoeffs { a: 0.0, b: 1.0 }),
            vec![7.0, 9.0]
        );
        assert_eq!(
            apply_scaling(&[1.0, 1.0], ScalingCoeffs { a: -1.0, b: 0.0 }),
            vec![-1.0, -1.0]
        );
    }

    #[test]
    fn variance_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(fitness_variance(&t, &t).unwrap(), 0.0);
        // Constant residual: variance ignores the mean shift.
        let shifted: Vec<f64> = t.iter().map(|v| v + 4.2).collect();
        assert!(fitness_variance(&shifted, &t).unwrap().abs() < 1e-12);
        // residual [0, -2]: mean -1, variance ((1)^2 + (-1)^2)/2 = 1.
        assert!((fitness_variance(&[0.0, 0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let t = [1.0, 2.0];
        assert_eq!(fitness_mse(&t, &t).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 3.0).collect();
        assert!((fitness_mse(&shifted, &t).unwrap() - 9.0).abs() < 1e-12);
        assert!((fitness_mse(&[0.0, 0.0], &[0.0, 2.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_contract_violation() {
        assert!(fit_scaling(&[1.0, 2.0], &[1.0]).is_err());
        assert!(fitness_variance(&[1.0, 2.0], &[1.0]).is_err());
        assert!(fitness_mse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn variance_never_exceeds_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let m = rng.gen_range(2..40);
            let s: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let t: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let var = fitness_variance(&s, &t).unwrap();
            let mse = fitness_mse(&s, &t).unwrap();
            assert!(var <= mse + 1e-12 * mse.max(1.0));
        }
    }

    #[test]
    fn post_scaling_fitness_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.gen_range(3..60);
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let t: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let d: f64 = rng.gen_range(0.1..10.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let c: f64 = rng.gen_range(-10.0..10.0);
            let transformed: Vec<f64> = raw.iter().map(|&r| c + d * r).collect();
            let f1 = {
                let s = apply_scaling(&raw, fit_scaling(&raw, &t).unwrap());
                fitness_variance(&s, &t).unwrap()
            };
            let f2 = {
                let s = apply_scaling(&transformed, fit_scaling(&transformed, &t).unwrap());
                fitness_variance(&s, &t).unwrap()
            };
            let scale = f1.abs().max(f2.abs()).max(1e-30);
            assert!((f1 - f2).abs() <= 1e-9 * scale.max(1.0), "{f1} vs {f2}");
        }
    }
}
