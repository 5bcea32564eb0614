//! Nuisance estimation and per-sample policy scores.
//!
//! Outcome models `μ0`, `μ1` are fit by ridge regression on each treatment
//! arm; the behavior policy is either taken as known (randomized trials) or
//! fit by L2-regularized logistic regression solved with Newton steps.
//! Inverse-propensity weights are `W_i = 1/π^b(X_i)` on the treated arm and
//! `1/(1-π^b(X_i))` on the control arm, with probabilities clipped to
//! `[η, 1-η]`.
//!
//! Every per-sample score is affine in the policy probability, so a score
//! vector is stored as coefficient pairs with `ψ_i(θ) = α_i·π(X_i, θ) + β_i`:
//!
//! ```text
//! DM:    α_i = μ1(X_i) - μ0(X_i)                      β_i = μ0(X_i)
//! NIPW:  w̃_i = 2·W_i / mean(W)
//!        T=1: α_i =  w̃_i·Y_i                          β_i = 0
//!        T=0: α_i = -w̃_i·Y_i                          β_i = w̃_i·Y_i
//! DR:    DM plus, with ν_i = (1-2T_i)(Y_i - μ_{T_i}):
//!        α_i += -W_i·ν_i                              β_i += W_i·(1-T_i)·ν_i
//! ```

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TrialDataset;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("treatment arm {arm} has no samples; both arms are required")]
    SingleArm { arm: u8 },
    #[error("behavior mode is `known` but the dataset has no behavior probabilities")]
    MissingBehaviorProbs,
    #[error("normal equations are singular (ridge strength {ridge})")]
    SingularSystem { ridge: f64 },
    #[error(
        "logistic Newton solver did not converge after {iters} iterations \
         (gradient norm {grad_norm:.3e}, tolerance {tol:.3e})"
    )]
    NewtonDiverged {
        iters: usize,
        grad_norm: f64,
        tol: f64,
    },
}

/// How the behavior policy is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorMode {
    /// Use the dataset's recorded probabilities (randomized-trial path).
    Known,
    /// Fit a regularized logistic regression of `T` on `X`.
    Fit,
}

impl std::str::FromStr for BehaviorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "known" => Ok(BehaviorMode::Known),
            "fit" => Ok(BehaviorMode::Fit),
            other => Err(format!("unknown behavior mode `{other}` (known|fit)")),
        }
    }
}

/// Options for nuisance fitting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceOptions {
    /// Ridge strength for the outcome regressions.
    pub ridge: f64,
    /// Positivity clip: probabilities are forced into `[eta, 1-eta]`.
    pub eta: f64,
    pub behavior: BehaviorMode,
    /// L2 strength for the behavior-policy logistic regression.
    pub logistic_l2: f64,
    pub max_newton_iters: usize,
    pub newton_tol: f64,
}

impl Default for NuisanceOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-3,
            eta: 0.01,
            behavior: BehaviorMode::Known,
            logistic_l2: 1e-3,
            max_newton_iters: 100,
            newton_tol: 1e-8,
        }
    }
}

/// Linear model with intercept: `f(x) = w·x + b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + crate::policy::dot(&self.weights, x)
    }
}

/// Logistic model with intercept: `p(x) = σ(w·x + b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn predict_prob(&self, x: &[f64]) -> f64 {
        let z = self.intercept + crate::policy::dot(&self.weights, x);
        1.0 / (1.0 + (-z).exp())
    }
}

/// Source of the behavior probabilities used for weighting.
#[derive(Debug, Clone)]
pub enum BehaviorModel {
    Known,
    Fitted(LogisticModel),
}

/// Fitted nuisance components for one dataset.
#[derive(Debug, Clone)]
pub struct NuisanceModels {
    pub mu0: LinearModel,
    pub mu1: LinearModel,
    pub behavior: BehaviorModel,
    /// Per-sample behavior probabilities after clipping.
    pub behavior_probs: Vec<f64>,
    /// Per-sample inverse-propensity weights `W_i`.
    pub ipw: Vec<f64>,
    /// Cached outcome predictions `μ0(X_i)`, `μ1(X_i)` at the training rows.
    pub mu0_hat: Vec<f64>,
    pub mu1_hat: Vec<f64>,
}

/// Ridge regression with intercept via the normal equations. The intercept
/// is penalized like every other coefficient, which at the default strength
/// is negligible relative to sampling noise.
pub fn ridge_fit(rows: &[&[f64]], ys: &[f64], ridge: f64) -> Result<LinearModel, FitError> {
    assert_eq!(rows.len(), ys.len());
    assert!(!rows.is_empty());
    let d = rows[0].len();
    let p = d + 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut aty = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; p];
    for (row, &y) in rows.iter().zip(ys) {
        z[0] = 1.0;
        z[1..].copy_from_slice(row);
        for i in 0..p {
            aty[i] += z[i] * y;
            for j in i..p {
                ata[(i, j)] += z[i] * z[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
        ata[(i, i)] += ridge;
    }
    let chol = Cholesky::new(ata).ok_or(FitError::SingularSystem { ridge })?;
    let sol = chol.solve(&aty);
    Ok(LinearModel {
        intercept: sol[0],
        weights: sol.as_slice()[1..].to_vec(),
    })
}

/// L2-regularized logistic regression solved by damped Newton iterations.
/// The intercept is not penalized.
pub fn logistic_fit(
    rows: &[&[f64]],
    labels: &[u8],
    l2: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LogisticModel, FitError> {
    assert_eq!(rows.len(), labels.len());
    assert!(!rows.is_empty());
    let n = rows.len();
    let d = rows[0].len();
    let p = d + 1;
    let mut beta = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; p];
    let mut grad_norm = f64::INFINITY;

    for _ in 0..max_iters {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (row, &label) in rows.iter().zip(labels) {
            z[0] = 1.0;
            z[1..].copy_from_slice(row);
            let eta: f64 = (0..p).map(|i| beta[i] * z[i]).sum();
            let prob = 1.0 / (1.0 + (-eta).exp());
            let resid = prob - label as f64;
            let w = (prob * (1.0 - prob)).max(1e-10);
            for i in 0..p {
                grad[i] += resid * z[i];
                for j in i..p {
                    hess[(i, j)] += w * z[i] * z[j];
                }
            }
        }
        for i in 1..p {
            grad[i] += l2 * n as f64 * beta[i];
        }
        for i in 0..p {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
            if i > 0 {
                hess[(i, i)] += l2 * n as f64;
            } else {
                hess[(i, i)] += 1e-10;
            }
        }
        grad_norm = grad.amax();
        if grad_norm < tol * n as f64 {
            return Ok(LogisticModel {
                intercept: beta[0],
                weights: beta.as_slice()[1..].to_vec(),
            });
        }
        let chol = Cholesky::new(hess).ok_or(FitError::SingularSystem { ridge: l2 })?;
        let step = chol.solve(&grad);
        beta -= step;
    }
    Err(FitError::NewtonDiverged {
        iters: max_iters,
        grad_norm,
        tol: tol * n as f64,
    })
}

/// Fits outcome models and the behavior policy, and assembles IPW weights.
pub fn fit_nuisance(
    data: &TrialDataset,
    opts: &NuisanceOptions,
) -> Result<NuisanceModels, FitError> {
    let n = data.n();
    let treatments = data.treatments();

    for arm in [0u8, 1u8] {
        if !treatments.iter().any(|&t| t == arm) {
            return Err(FitError::SingleArm { arm });
        }
    }

    let mut mu_models = Vec::with_capacity(2);
    for arm in [0u8, 1u8] {
        let rows: Vec<&[f64]> = (0..n)
            .filter(|&i| treatments[i] == arm)
            .map(|i| data.row(i))
            .collect();
        let ys: Vec<f64> = (0..n)
            .filter(|&i| treatments[i] == arm)
            .map(|i| data.outcomes()[i])
            .collect();
        mu_models.push(ridge_fit(&rows, &ys, opts.ridge)?);
    }
    let mu1 = mu_models.pop().expect("two arms fitted");
    let mu0 = mu_models.pop().expect("two arms fitted");

    let (behavior, raw_probs): (BehaviorModel, Vec<f64>) = match opts.behavior {
        BehaviorMode::Known => {
            let probs = data
                .behavior_probs()
                .ok_or(FitError::MissingBehaviorProbs)?
                .to_vec();
            (BehaviorModel::Known, probs)
        }
        BehaviorMode::Fit => {
            let rows: Vec<&[f64]> = (0..n).map(|i| data.row(i)).collect();
            let model = logistic_fit(
                &rows,
                treatments,
                opts.logistic_l2,
                opts.max_newton_iters,
                opts.newton_tol,
            )?;
            let probs = (0..n).map(|i| model.predict_prob(data.row(i))).collect();
            (BehaviorModel::Fitted(model), probs)
        }
    };

    let behavior_probs: Vec<f64> = raw_probs
        .iter()
        .map(|&p| p.clamp(opts.eta, 1.0 - opts.eta))
        .collect();

    let ipw: Vec<f64> = (0..n)
        .map(|i| {
            if treatments[i] == 1 {
                1.0 / behavior_probs[i]
            } else {
                1.0 / (1.0 - behavior_probs[i])
            }
        })
        .collect();

    let mu0_hat = (0..n).map(|i| mu0.predict(data.row(i))).collect();
    let mu1_hat = (0..n).map(|i| mu1.predict(data.row(i))).collect();

    Ok(NuisanceModels {
        mu0,
        mu1,
        behavior,
        behavior_probs,
        ipw,
        mu0_hat,
        mu1_hat,
    })
}

/// Score estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Dm,
    Nipw,
    Dr,
}

impl std::fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreMethod::Dm => write!(f, "dm"),
            ScoreMethod::Nipw => write!(f, "nipw"),
            ScoreMethod::Dr => write!(f, "dr"),
        }
    }
}

impl std::str::FromStr for ScoreMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(ScoreMethod::Dm),
            "nipw" => Ok(ScoreMethod::Nipw),
            "dr" => Ok(ScoreMethod::Dr),
            other => Err(format!("unknown score method `{other}` (dm|nipw|dr)")),
        }
    }
}

/// Per-sample scores in affine-in-π form: `ψ_i(θ) = alpha_i·π(X_i, θ) + beta_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreVector {
    pub method: ScoreMethod,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Score of sample `i` at policy probability `pi_i`.
    pub fn psi_i(&self, i: usize, pi_i: f64) -> f64 {
        self.alpha[i] * pi_i + self.beta[i]
    }

    /// All scores at the given per-sample policy probabilities.
    pub fn psi(&self, pi: &[f64]) -> Vec<f64> {
        assert_eq!(pi.len(), self.alpha.len());
        pi.iter()
            .enumerate()
            .map(|(i, &p)| self.psi_i(i, p))
            .collect()
    }
}

/// Builds the affine score coefficients for one estimator.
pub fn build_scores(
    method: ScoreMethod,
    data: &TrialDataset,
    models: &NuisanceModels,
) -> ScoreVector {
    let n = data.n();
    let treatments = data.treatments();
    let outcomes = data.outcomes();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];

    match method {
        ScoreMethod::Dm => {
            for i in 0..n {
                alpha[i] = models.mu1_hat[i] - models.mu0_hat[i];
                beta[i] = models.mu0_hat[i];
            }
        }
        ScoreMethod::Nipw => {
            let mean_w: f64 = models.ipw.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                let scaled = 2.0 * models.ipw[i] / mean_w * outcomes[i];
                if treatments[i] == 1 {
                    alpha[i] = scaled;
                } else {
                    alpha[i] = -scaled;
                    beta[i] = scaled;
                }
            }
        }
        ScoreMethod::Dr => {
            for i in 0..n {
                alpha[i] = models.mu1_hat[i] - models.mu0_hat[i];
                beta[i] = models.mu0_hat[i];
                let mu_t = if treatments[i] == 1 {
                    models.mu1_hat[i]
                } else {
                    models.mu0_hat[i]
                };
                let nu = (1.0 - 2.0 * treatments[i] as f64) * (outcomes[i] - mu_t);
                alpha[i] -= models.ipw[i] * nu;
                beta[i] += models.ipw[i] * (1.0 - treatments[i] as f64) * nu;
            }
        }
    }

    ScoreVector {
        method,
        alpha,
        beta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TrialDataset;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_dataset() -> TrialDataset {
        // Four samples, one covariate, behavior probability 1/2 everywhere.
        TrialDataset::new(
            vec![0.0, 1.0, 2.0, 3.0],
            1,
            vec![0, 1, 0, 1],
            vec![1.0, 2.0, 3.0, 4.0],
            Some(vec![0.5; 4]),
        )
        .unwrap()
    }

    #[test]
    fn known_half_probs_give_weight_two() {
        let data = toy_dataset();
        let models = fit_nuisance(&data, &NuisanceOptions::default()).unwrap();
        for &w in &models.ipw {
            assert!((w - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_arm_is_rejected() {
        let data = TrialDataset::new(
            vec![0.0, 1.0],
            1,
            vec![1, 1],
            vec![0.0, 1.0],
            Some(vec![0.5, 0.5]),
        )
        .unwrap();
        assert!(matches!(
            fit_nuisance(&data, &NuisanceOptions::default()),
            Err(FitError::SingleArm { arm: 0 })
        ));
    }

    #[test]
    fn missing_behavior_probs_rejected_in_known_mode() {
        let data =
            TrialDataset::new(vec![0.0, 1.0], 1, vec![0, 1], vec![0.0, 1.0], None).unwrap();
        assert!(matches!(
            fit_nuisance(&data, &NuisanceOptions::default()),
            Err(FitError::MissingBehaviorProbs)
        ));
    }

    #[test]
    fn probabilities_are_clipped() {
        let data = TrialDataset::new(
            vec![0.0, 1.0],
            1,
            vec![0, 1],
            vec![0.0, 1.0],
            Some(vec![0.004, 0.999]),
        )
        .unwrap();
        let models = fit_nuisance(&data, &NuisanceOptions::default()).unwrap();
        assert!((models.behavior_probs[0] - 0.01).abs() < 1e-15);
        assert!((models.behavior_probs[1] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn ridge_recovers_linear_outcomes() {
        let mut rng = StdRng::seed_from_u64(5);
        let n = 1000;
        let d = 3;
        let true_w = [1.5, -2.0, 0.25];
        let true_b = 0.7;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = true_b + crate::policy::dot(&true_w, &x);
            xs.push(x);
            ys.push(y);
        }
        let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let model = ridge_fit(&rows, &ys, 1e-3).unwrap();
        assert!((model.intercept - true_b).abs() < 1e-2);
        for (w, t) in model.weights.iter().zip(true_w) {
            assert!((w - t).abs() < 1e-2, "weight {w} vs {t}");
        }
    }

    #[test]
    fn logistic_fit_recovers_separating_direction() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 2000;
        let mut xs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(-3.0..3.0);
            let p = 1.0 / (1.0 + (-(1.2 * x - 0.3)).exp());
            labels.push(u8::from(rng.gen_bool(p)));
            xs.push(vec![x]);
        }
        let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let model = logistic_fit(&rows, &labels, 1e-4, 100, 1e-8).unwrap();
        assert!(model.weights[0] > 0.8 && model.weights[0] < 1.6);
        assert!(model.intercept.abs() < 0.5);
    }

    #[test]
    fn dm_scores_with_equal_arms_are_constant_in_pi() {
        let data = toy_dataset();
        let mut models = fit_nuisance(&data, &NuisanceOptions::default()).unwrap();
        models.mu1_hat = models.mu0_hat.clone();
        let scores = build_scores(ScoreMethod::Dm, &data, &models);
        for (i, &a) in scores.alpha.iter().enumerate() {
            assert_eq!(a, 0.0);
            assert!((scores.psi_i(i, 0.3) - scores.psi_i(i, 0.9)).abs() < 1e-15);
        }
    }

    #[test]
    fn nipw_single_sample_example() {
        let data = TrialDataset::new(
            vec![1.0, 0.5],
            1,
            vec![1, 0],
            vec![3.0, 1.0],
            Some(vec![0.5, 0.5]),
        )
        .unwrap();
        let models = fit_nuisance(&data, &NuisanceOptions::default()).unwrap();
        let scores = build_scores(ScoreMethod::Nipw, &data, &models);
        // W = 2 everywhere, mean W = 2, scaled weight = 2. Treated sample with
        // Y = 3 contributes psi(theta) = 2*3*pi.
        assert!((scores.alpha[0] - 6.0).abs() < 1e-12);
        assert_eq!(scores.beta[0], 0.0);
        assert!((scores.psi_i(0, 0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dr_reduces_to_dm_when_models_are_exact() {
        let data = toy_dataset();
        let mut models = fit_nuisance(&data, &NuisanceOptions::default()).unwrap();
        // Force exact outcome models: residuals vanish.
        for i in 0..data.n() {
            if data.treatments()[i] == 1 {
                models.mu1_hat[i] = data.outcomes()[i];
            } else {
                models.mu0_hat[i] = data.outcomes()[i];
            }
        }
        let dm = build_scores(ScoreMethod::Dm, &data, &models);
        let dr = build_scores(ScoreMethod::Dr, &data, &models);
        for i in 0..data.n() {
            assert!((dm.alpha[i] - dr.alpha[i]).abs() < 1e-12);
            assert!((dm.beta[i] - dr.beta[i]).abs() < 1e-12);
        }
    }
}
