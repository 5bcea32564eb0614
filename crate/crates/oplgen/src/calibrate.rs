//! Data-driven calibration of `Γ` and `P(S=1)` from one shared covariate.
//!
//! Given draws of a single covariate from the training data and from the
//! target population, a one-dimensional logistic discriminator separates the
//! two samples. Its posterior is prior-corrected so the estimate no longer
//! depends on the n:m sampling ratio:
//!
//! ```text
//! odds_r(x) = (m/n) · odds_q(x)  =  p_train(x) / p_target(x),
//! ```
//!
//! which is the density ratio of the two samples and a monotone proxy for
//! `P(S=1 | x)` up to the unidentified global scale. The corrected posterior
//! `r(x) = odds_r / (1 + odds_r)` is taken as the per-sample selection
//! probability, `P̂(S=1)` as its training-sample mean, and `Γ̂` as the largest
//! two-sided odds ratio between `P̂(S=1)` and the per-sample values. All
//! probabilities are clipped to `[η, 1-η]` first.
//!
//! The covariate is standardized on the pooled sample before fitting, so the
//! result is invariant to affine rescaling of the column.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nuisance::logistic_fit;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least {min} samples on each side, got {n} train and {m} target")]
    TooFewSamples { min: usize, n: usize, m: usize },
    #[error("covariate column is degenerate (zero variance in the pooled sample)")]
    DegenerateCovariate,
    #[error("discriminator fit failed: {0}")]
    Fit(#[from] crate::nuisance::FitError),
    #[error("column contains a non-finite value at position {0}")]
    NonFinite(usize),
}

/// Options for the calibration fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Positivity clip applied to all probabilities.
    pub eta: f64,
    /// L2 strength of the logistic discriminator.
    pub l2: f64,
    /// Minimum sample count per side for a stable one-dimensional fit.
    pub min_samples: usize,
    pub max_newton_iters: usize,
    pub newton_tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            eta: 0.01,
            l2: 1e-3,
            min_samples: 30,
            max_newton_iters: 100,
            newton_tol: 1e-8,
        }
    }
}

/// Calibrated uncertainty-set parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Estimated population selection probability `P̂(S=1)`.
    pub p_sel: f64,
    /// Estimated odds-ratio bound `Γ̂ ≥ 1`.
    pub gamma: f64,
    /// Estimated `P̂(S=1 | x_i)` for every training sample.
    pub per_sample_sel_probs: Vec<f64>,
}

fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Calibrates `(Γ, P(S=1))` from one training column and one target column.
pub fn calibrate(
    train_col: &[f64],
    target_col: &[f64],
    opts: &CalibrationOptions,
) -> Result<CalibrationResult, CalibrationError> {
    let n = train_col.len();
    let m = target_col.len();
    if n < opts.min_samples || m < opts.min_samples {
        return Err(CalibrationError::TooFewSamples {
            min: opts.min_samples,
            n,
            m,
        });
    }
    for (i, v) in train_col.iter().chain(target_col.iter()).enumerate() {
        if !v.is_finite() {
            return Err(CalibrationError::NonFinite(i));
        }
    }

    let total = (n + m) as f64;
    let pooled_mean =
        (train_col.iter().sum::<f64>() + target_col.iter().sum::<f64>()) / total;
    let pooled_var = (train_col
        .iter()
        .chain(target_col.iter())
        .map(|v| (v - pooled_mean).powi(2))
        .sum::<f64>())
        / total;
    if pooled_var <= 0.0 {
        return Err(CalibrationError::DegenerateCovariate);
    }
    let pooled_sd = pooled_var.sqrt();

    let standardized: Vec<Vec<f64>> = train_col
        .iter()
        .chain(target_col.iter())
        .map(|v| vec![(v - pooled_mean) / pooled_sd])
        .collect();
    let rows: Vec<&[f64]> = standardized.iter().map(|v| v.as_slice()).collect();
    let mut labels = vec![1u8; n];
    labels.extend(vec![0u8; m]);

    let model = logistic_fit(
        &rows,
        &labels,
        opts.l2,
        opts.max_newton_iters,
        opts.newton_tol,
    )?;

    let ratio = m as f64 / n as f64;
    let per_sample_sel_probs: Vec<f64> = rows[..n]
        .iter()
        .map(|row| {
            let q = model.predict_prob(row).clamp(opts.eta, 1.0 - opts.eta);
            // Remove the n:m prior: odds_r = (m/n) * odds_q.
            let odds_r = ratio * odds(q);
            (odds_r / (1.0 + odds_r)).clamp(opts.eta, 1.0 - opts.eta)
        })
        .collect();

    let p_sel = (per_sample_sel_probs.iter().sum::<f64>() / n as f64)
        .clamp(opts.eta, 1.0 - opts.eta);

    let odds_p = odds(p_sel);
    let mut gamma = 1.0f64;
    for &p in &per_sample_sel_probs {
        let or = odds_p / odds(p);
        gamma = gamma.max(or).max(1.0 / or);
    }

    Ok(CalibrationResult {
        p_sel,
        gamma,
        per_sample_sel_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worstcase::bounds;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn normal_draws(rng: &mut StdRng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            })
            .collect()
    }

    #[test]
    fn same_distribution_gives_gamma_near_one() {
        let mut rng = StdRng::seed_from_u64(3);
        let train = normal_draws(&mut rng, 5000, 0.0, 1.0);
        let target = normal_draws(&mut rng, 5000, 0.0, 1.0);
        let result = calibrate(&train, &target, &CalibrationOptions::default()).unwrap();
        assert!(
            result.gamma < 1.5,
            "no selection signal should give gamma near 1, got {}",
            result.gamma
        );
        // The corrected posterior is centered at 1/2 when the samples match.
        assert!((result.p_sel - 0.5).abs() < 0.1, "p_sel = {}", result.p_sel);
        let spread = result
            .per_sample_sel_probs
            .iter()
            .fold(0.0f64, |acc, &p| acc.max((p - result.p_sel).abs()));
        assert!(spread < 0.12, "per-sample spread {spread}");
    }

    #[test]
    fn separable_columns_hit_the_clipping_cap() {
        let mut rng = StdRng::seed_from_u64(5);
        let train = normal_draws(&mut rng, 500, 10.0, 0.1);
        let target = normal_draws(&mut rng, 500, -10.0, 0.1);
        let opts = CalibrationOptions::default();
        let result = calibrate(&train, &target, &opts).unwrap();
        // With perfect separation every training probability clips at 1-eta;
        // the mean then also sits at the clip and gamma stays at the bound
        // implied by the clipped odds ratio.
        assert!(result
            .per_sample_sel_probs
            .iter()
            .all(|&p| (p - (1.0 - opts.eta)).abs() < 1e-12));
        assert!((result.p_sel - (1.0 - opts.eta)).abs() < 1e-12);
        let cap = odds(1.0 - opts.eta) / odds(opts.eta);
        assert!(result.gamma <= cap + 1e-9);
        assert!((result.gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn partial_separation_is_capped_by_clipped_odds() {
        let mut rng = StdRng::seed_from_u64(6);
        // Strong but imperfect separation: some training samples clip while
        // the rest stay interior, so the spread (and gamma) is positive.
        let train = normal_draws(&mut rng, 2000, 2.5, 1.0);
        let target = normal_draws(&mut rng, 2000, -2.5, 1.0);
        let opts = CalibrationOptions::default();
        let result = calibrate(&train, &target, &opts).unwrap();
        assert!(result.gamma > 1.0);
        let cap = (odds(result.p_sel) / odds(opts.eta))
            .max(odds(1.0 - opts.eta) / odds(result.p_sel));
        assert!(
            result.gamma <= cap + 1e-9,
            "gamma {} exceeds clipping cap {cap}",
            result.gamma
        );
    }

    #[test]
    fn gamma_is_affine_invariant() {
        let mut rng = StdRng::seed_from_u64(7);
        let train = normal_draws(&mut rng, 800, 1.0, 2.0);
        let target = normal_draws(&mut rng, 900, 0.0, 1.5);
        let opts = CalibrationOptions::default();
        let base = calibrate(&train, &target, &opts).unwrap();
        for (a, b) in [(2.5, -7.0), (-0.3, 4.0)] {
            let train_t: Vec<f64> = train.iter().map(|v| a * v + b).collect();
            let target_t: Vec<f64> = target.iter().map(|v| a * v + b).collect();
            let t = calibrate(&train_t, &target_t, &opts).unwrap();
            assert!(
                (t.gamma - base.gamma).abs() < 1e-9,
                "gamma changed under affine map ({a}, {b}): {} vs {}",
                t.gamma,
                base.gamma
            );
            assert!((t.p_sel - base.p_sel).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds_from_calibration_contain_one() {
        let mut rng = StdRng::seed_from_u64(11);
        let train = normal_draws(&mut rng, 400, -0.8, 1.0);
        let target = normal_draws(&mut rng, 600, 0.4, 1.0);
        let result = calibrate(&train, &target, &CalibrationOptions::default()).unwrap();
        assert!(result.gamma >= 1.0);
        let set = bounds(result.gamma, result.p_sel).unwrap();
        assert!(set.l <= 1.0 + 1e-12 && set.u >= 1.0 - 1e-12);
    }

    #[test]
    fn too_few_samples_rejected() {
        let result = calibrate(&[1.0; 10], &[0.0; 100], &CalibrationOptions::default());
        assert!(matches!(
            result,
            Err(CalibrationError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn degenerate_column_rejected() {
        let result = calibrate(&[2.0; 50], &[2.0; 50], &CalibrationOptions::default());
        assert!(matches!(
            result,
            Err(CalibrationError::DegenerateCovariate)
        ));
    }
}
