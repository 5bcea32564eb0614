//! Parameterized policy classes and their difference-of-convex splits.
//!
//! A policy maps covariates to a treatment probability through the index
//! `z = θᵀx`. Two classes are supported:
//!
//! - logistic: `π = σ(z) = 1 / (1 + e^{-z})`
//! - linear:   `π = min(1, max(z, 0))`
//!
//! Each link is written as a difference `π = g̃(z) - h̃(z)` of convex pieces.
//! For the logistic link:
//!
//! ```text
//! g̃(z) = z/4 + 1/2              (z ≥ 0)        h̃(z) = z/4 - tanh(z/2)/2   (z ≥ 0)
//!      = tanh(z/2)/2 + 1/2      (z < 0)             = 0                    (z < 0)
//! ```
//!
//! For the linear link `g̃(z) = max(z, 0)` and `h̃(z) = max(max(z, 0) - 1, 0)`,
//! with right derivatives taken at the kinks. Both pieces are augmented by
//! `(λ/2)·z²`, which cancels in the difference but makes the pieces strongly
//! convex along the index, the hypothesis under which the convex-concave
//! procedure converges to a stationary point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default half-width of the parameter box `Θ = [-B, B]^d`.
pub const DEFAULT_BOX_BOUND: f64 = 10_000.0;

/// Default strong-convexity augmentation added to both DC pieces.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Default margin for the restricted parameter set of the linear class.
pub const DEFAULT_LINEAR_EPS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("parameter vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("parameter {index} is {value}, outside the box [-{bound}, {bound}]")]
    OutsideBox { index: usize, value: f64, bound: f64 },
}

/// Policy class selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Logistic,
    Linear,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::Logistic => write!(f, "logistic"),
            PolicyKind::Linear => write!(f, "linear"),
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(PolicyKind::Logistic),
            "linear" => Ok(PolicyKind::Linear),
            other => Err(format!("unknown policy kind `{other}` (logistic|linear)")),
        }
    }
}

/// Policy class with its parameter box and DC augmentation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Covariate dimension d.
    pub dim: usize,
    /// Half-width B of the parameter box `Θ = [-B, B]^d`.
    pub box_bound: f64,
    /// Strong-convexity augmentation λ; must be positive for the convergence
    /// guarantee of the outer loop to apply.
    pub lambda: f64,
    /// Margin ε of the restricted set `Θ^ε` for the linear class.
    pub linear_eps: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            box_bound: DEFAULT_BOX_BOUND,
            lambda: DEFAULT_LAMBDA,
            linear_eps: DEFAULT_LINEAR_EPS,
        }
    }

    pub fn logistic(dim: usize) -> Self {
        Self::new(PolicyKind::Logistic, dim)
    }

    pub fn linear(dim: usize) -> Self {
        Self::new(PolicyKind::Linear, dim)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_box_bound(mut self, box_bound: f64) -> Self {
        self.box_bound = box_bound;
        self
    }

    /// Clamps every coordinate into the parameter box.
    pub fn project(&self, theta: &mut [f64]) {
        for t in theta.iter_mut() {
            *t = t.clamp(-self.box_bound, self.box_bound);
        }
    }

    /// Checks that `theta` lies in the restricted set `Θ^ε`, i.e. that every
    /// index `θᵀx_i` stays inside `[ε, 1-ε]`. Only meaningful for the linear
    /// class, where it keeps the indices away from the kinks of the clamp.
    pub fn linear_eps_feasible(&self, theta: &[f64], rows: &[&[f64]]) -> bool {
        rows.iter().all(|x| {
            let z = dot(theta, x);
            z >= self.linear_eps && z <= 1.0 - self.linear_eps
        })
    }
}

/// Parameter vector of a concrete policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    /// Validates dimension and box membership against a spec.
    pub fn validate(&self, spec: &PolicySpec) -> Result<(), PolicyError> {
        if self.theta.len() != spec.dim {
            return Err(PolicyError::DimensionMismatch {
                got: self.theta.len(),
                expected: spec.dim,
            });
        }
        for (index, &value) in self.theta.iter().enumerate() {
            if value.abs() > spec.box_bound {
                return Err(PolicyError::OutsideBox {
                    index,
                    value,
                    bound: spec.box_bound,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Treatment probability of the policy at covariates `x`.
///
/// Panics if `theta` and `x` lengths disagree with the spec dimension.
pub fn policy_prob(spec: &PolicySpec, theta: &[f64], x: &[f64]) -> f64 {
    assert_eq!(theta.len(), spec.dim, "theta dimension mismatch");
    assert_eq!(x.len(), spec.dim, "covariate dimension mismatch");
    link_prob(spec.kind, dot(theta, x))
}

/// Link function value at index `z`.
pub fn link_prob(kind: PolicyKind, z: f64) -> f64 {
    match kind {
        PolicyKind::Logistic => sigma(z),
        PolicyKind::Linear => z.clamp(0.0, 1.0),
    }
}

/// Derivative of the link at `z` (right derivative at the linear kinks).
pub fn link_deriv(kind: PolicyKind, z: f64) -> f64 {
    match kind {
        PolicyKind::Logistic => {
            let s = sigma(z);
            s * (1.0 - s)
        }
        PolicyKind::Linear => {
            if (0.0..1.0).contains(&z) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Scalar DC pieces of the link at `z`: `(g̃, h̃, g̃', h̃')`, each augmented by
/// `(λ/2)·z²` (and `λ·z` in the derivatives). The difference `g̃ - h̃` equals
/// the link value exactly; the augmentation cancels.
pub fn scalar_pieces(kind: PolicyKind, z: f64, lambda: f64) -> (f64, f64, f64, f64) {
    let aug = 0.5 * lambda * z * z;
    let daug = lambda * z;
    match kind {
        PolicyKind::Logistic => {
            let th = (0.5 * z).tanh();
            let sech2 = 1.0 - th * th;
            if z >= 0.0 {
                let g = 0.25 * z + 0.5;
                let h = 0.25 * z - 0.5 * th;
                (g + aug, h + aug, 0.25 + daug, 0.25 - 0.25 * sech2 + daug)
            } else {
                let g = 0.5 * th + 0.5;
                (g + aug, aug, 0.25 * sech2 + daug, daug)
            }
        }
        PolicyKind::Linear => {
            let g = z.max(0.0);
            let h = (g - 1.0).max(0.0);
            let dg = if z >= 0.0 { 1.0 } else { 0.0 };
            let dh = if z >= 1.0 { 1.0 } else { 0.0 };
            (g + aug, h + aug, dg + daug, dh + daug)
        }
    }
}

/// DC pieces of the policy probability as functions of θ at one sample.
#[derive(Debug, Clone)]
pub struct DcPieces {
    pub g: f64,
    pub h: f64,
    pub grad_g: Vec<f64>,
    pub grad_h: Vec<f64>,
}

/// Evaluates the convex pieces `g̃`, `h̃` and their θ-gradients at `x`.
///
/// `π(x, θ) = g - h` holds exactly; gradients follow the chain rule through
/// `z = θᵀx` with right derivatives at the linear kinks.
pub fn dc_pieces(spec: &PolicySpec, theta: &[f64], x: &[f64]) -> DcPieces {
    assert_eq!(theta.len(), spec.dim, "theta dimension mismatch");
    assert_eq!(x.len(), spec.dim, "covariate dimension mismatch");
    let z = dot(theta, x);
    let (g, h, dg, dh) = scalar_pieces(spec.kind, z, spec.lambda);
    DcPieces {
        g,
        h,
        grad_g: x.iter().map(|&xi| dg * xi).collect(),
        grad_h: x.iter().map(|&xi| dh * xi).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn logistic_prob_values() {
        let spec = PolicySpec::logistic(1);
        assert!((policy_prob(&spec, &[0.0], &[1.0]) - 0.5).abs() < 1e-15);
        let p = policy_prob(&spec, &[2.0], &[1.0]);
        assert!((p - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn linear_prob_clamps() {
        let spec = PolicySpec::linear(1);
        assert_eq!(policy_prob(&spec, &[-3.0], &[1.0]), 0.0);
        assert_eq!(policy_prob(&spec, &[0.4], &[1.0]), 0.4);
        assert_eq!(policy_prob(&spec, &[7.0], &[1.0]), 1.0);
    }

    #[test]
    fn logistic_pieces_at_zero() {
        let (g, h, _, _) = scalar_pieces(PolicyKind::Logistic, 0.0, 0.0);
        assert!((g - 0.5).abs() < 1e-15);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn logistic_pieces_at_two() {
        let (g, h, _, _) = scalar_pieces(PolicyKind::Logistic, 2.0, 0.0);
        assert!((g - 1.0).abs() < 1e-15);
        assert!((h - (0.5 - 0.5 * 1.0f64.tanh())).abs() < 1e-15);
        assert!((h - 0.119202922).abs() < 1e-8);
        assert!(((g - h) - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn linear_pieces_interior() {
        let (g, h, dg, dh) = scalar_pieces(PolicyKind::Linear, 0.4, 0.0);
        assert_eq!(g, 0.4);
        assert_eq!(h, 0.0);
        assert_eq!(dg, 1.0);
        assert_eq!(dh, 0.0);
    }

    #[test]
    fn pieces_difference_matches_prob() {
        let mut rng = StdRng::seed_from_u64(7);
        for kind in [PolicyKind::Logistic, PolicyKind::Linear] {
            for _ in 0..1000 {
                let z: f64 = rng.gen_range(-8.0..8.0);
                let lambda: f64 = rng.gen_range(0.0..0.1);
                let (g, h, _, _) = scalar_pieces(kind, z, lambda);
                let diff = (g - h) - link_prob(kind, z);
                assert!(diff.abs() <= 1e-12, "kind={kind} z={z} diff={diff}");
            }
        }
    }

    #[test]
    fn pieces_are_convex() {
        let mut rng = StdRng::seed_from_u64(11);
        for kind in [PolicyKind::Logistic, PolicyKind::Linear] {
            for _ in 0..1000 {
                let z1: f64 = rng.gen_range(-6.0..6.0);
                let z2: f64 = rng.gen_range(-6.0..6.0);
                let t: f64 = rng.gen_range(0.0..1.0);
                for lambda in [0.0, 1e-3] {
                    let zm = t * z1 + (1.0 - t) * z2;
                    let (g1, h1, _, _) = scalar_pieces(kind, z1, lambda);
                    let (g2, h2, _, _) = scalar_pieces(kind, z2, lambda);
                    let (gm, hm, _, _) = scalar_pieces(kind, zm, lambda);
                    assert!(gm <= t * g1 + (1.0 - t) * g2 + 1e-12);
                    assert!(hm <= t * h1 + (1.0 - t) * h2 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn piece_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(13);
        let step = 1e-6;
        for kind in [PolicyKind::Logistic, PolicyKind::Linear] {
            let mut checked = 0;
            while checked < 300 {
                let z: f64 = rng.gen_range(-5.0..5.0);
                // Stay away from the linear kinks at {0, 1}.
                if kind == PolicyKind::Linear && (z.abs() < 1e-3 || (z - 1.0).abs() < 1e-3) {
                    continue;
                }
                let lambda = 1e-3;
                let (_, _, dg, dh) = scalar_pieces(kind, z, lambda);
                let (gp, hp, _, _) = scalar_pieces(kind, z + step, lambda);
                let (gm, hm, _, _) = scalar_pieces(kind, z - step, lambda);
                let fd_g = (gp - gm) / (2.0 * step);
                let fd_h = (hp - hm) / (2.0 * step);
                let scale_g = dg.abs().max(1e-3);
                let scale_h = dh.abs().max(1e-3);
                assert!(
                    (fd_g - dg).abs() / scale_g < 1e-5,
                    "kind={kind} z={z} dg={dg} fd={fd_g}"
                );
                assert!(
                    (fd_h - dh).abs() / scale_h < 1e-5,
                    "kind={kind} z={z} dh={dh} fd={fd_h}"
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn theta_gradients_follow_chain_rule() {
        let spec = PolicySpec::logistic(3).with_lambda(1e-3);
        let theta = [0.3, -0.2, 0.9];
        let x = [1.0, 2.0, -0.5];
        let pieces = dc_pieces(&spec, &theta, &x);
        let step = 1e-6;
        for j in 0..3 {
            let mut tp = theta;
            tp[j] += step;
            let mut tm = theta;
            tm[j] -= step;
            let up = dc_pieces(&spec, &tp, &x);
            let dn = dc_pieces(&spec, &tm, &x);
            let fd_g = (up.g - dn.g) / (2.0 * step);
            let fd_h = (up.h - dn.h) / (2.0 * step);
            assert!((fd_g - pieces.grad_g[j]).abs() < 1e-5);
            assert!((fd_h - pieces.grad_h[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn augmentation_cancels_exactly_in_difference() {
        let spec_plain = PolicySpec::logistic(2).with_lambda(0.0);
        let spec_aug = PolicySpec::logistic(2).with_lambda(0.05);
        let theta = [1.2, -0.7];
        let x = [0.4, 1.1];
        let plain = dc_pieces(&spec_plain, &theta, &x);
        let aug = dc_pieces(&spec_aug, &theta, &x);
        assert!(((plain.g - plain.h) - (aug.g - aug.h)).abs() < 1e-12);
    }

    #[test]
    fn params_validate_against_spec() {
        let spec = PolicySpec::logistic(2).with_box_bound(5.0);
        assert!(PolicyParams::new(vec![1.0, -4.9]).validate(&spec).is_ok());
        assert!(matches!(
            PolicyParams::new(vec![1.0]).validate(&spec),
            Err(PolicyError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            PolicyParams::new(vec![1.0, 5.1]).validate(&spec),
            Err(PolicyError::OutsideBox { index: 1, .. })
        ));
    }

    #[test]
    fn linear_eps_feasibility() {
        let spec = PolicySpec::linear(1);
        let rows: Vec<&[f64]> = vec![&[0.5], &[1.0]];
        assert!(spec.linear_eps_feasible(&[0.5], &rows));
        assert!(!spec.linear_eps_feasible(&[2.5], &rows));
    }

    #[test]
    fn policy_json_round_trip() {
        let params = PolicyParams::new(vec![0.25, -1.5]);
        let json = serde_json::to_string(&params).unwrap();
        let back: PolicyParams = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);
        let kind_json = serde_json::to_string(&PolicyKind::Logistic).unwrap();
        assert_eq!(kind_json, "\"logistic\"");
    }
}
