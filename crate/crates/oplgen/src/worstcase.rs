//! Worst-case policy value over a bounded-odds-ratio uncertainty set.
//!
//! The selection odds ratio between the population rate `P(S=1)` and the
//! conditional rate `P(S=1 | X, T, Y)` is assumed bounded by `Γ ≥ 1`. This
//! confines the density ratio `R = P(S=1) / P(S=1 | X, T, Y)` to a box:
//!
//! ```text
//! l = (1 - p + Γ·p) / Γ,    u = Γ·(1 - p) + p,    p = P(S=1),
//! ```
//!
//! with `0 < l ≤ 1 ≤ u` and `l = u = 1` at `Γ = 1`. The worst-case policy
//! value is the maximum of the Hajek estimate `Σ R_i ψ_i / Σ R_i` over all
//! `R ∈ [l, u]^n`. Sorting the scores ascending, the maximizer assigns `l` to
//! the `k*` smallest scores and `u` to the rest, where `k*` is the first
//! `k ∈ {0, …, n}` with
//!
//! ```text
//! λ(k) = (l·Σ_{i≤k} ψ_(i) + u·Σ_{i>k} ψ_(i)) / (l·k + u·(n-k)) ≤ ψ_(k+1)
//! ```
//!
//! (`ψ_(n+1) = +∞`). The scan costs `O(n log n)` via prefix sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorstCaseError {
    #[error("gamma must be a finite value >= 1, got {0}")]
    InvalidGamma(f64),
    #[error("selection probability must lie strictly inside (0, 1), got {0}")]
    InvalidSelectionProb(f64),
    #[error("score and weight vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weights must sum to a positive value, got {0}")]
    NonPositiveWeightSum(f64),
}

/// Box bounds `[l, u]` on the density ratio induced by an odds-ratio bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    /// Odds-ratio bound, `Γ ≥ 1`.
    pub gamma: f64,
    /// Population selection probability `P(S=1)`.
    pub p_sel: f64,
    /// Lower bound on the density ratio.
    pub l: f64,
    /// Upper bound on the density ratio.
    pub u: f64,
}

/// Builds the uncertainty set for a given odds-ratio bound and selection rate.
pub fn bounds(gamma: f64, p_sel: f64) -> Result<UncertaintySet, WorstCaseError> {
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(WorstCaseError::InvalidGamma(gamma));
    }
    if !p_sel.is_finite() || p_sel <= 0.0 || p_sel >= 1.0 {
        return Err(WorstCaseError::InvalidSelectionProb(p_sel));
    }
    let l = (1.0 - p_sel + gamma * p_sel) / gamma;
    let u = gamma * (1.0 - p_sel) + p_sel;
    Ok(UncertaintySet { gamma, p_sel, l, u })
}

/// Self-normalized weighted mean `Σ rn_i ψ_i / Σ rn_i`.
pub fn hajek_value(psi: &[f64], rn: &[f64]) -> Result<f64, WorstCaseError> {
    if psi.len() != rn.len() {
        return Err(WorstCaseError::LengthMismatch(psi.len(), rn.len()));
    }
    let weight_sum: f64 = rn.iter().sum();
    if !(weight_sum > 0.0) {
        return Err(WorstCaseError::NonPositiveWeightSum(weight_sum));
    }
    let weighted: f64 = psi.iter().zip(rn).map(|(p, r)| p * r).sum();
    Ok(weighted / weight_sum)
}

/// Maximizer of the Hajek estimate over the density-ratio box.
#[derive(Debug, Clone)]
pub struct WorstCaseSolution {
    /// The worst-case policy value.
    pub value: f64,
    /// Number of sorted scores assigned the lower bound `l`.
    pub k_star: usize,
    /// Maximizing density ratio, in original sample order.
    pub rn_at_opt: Vec<f64>,
    /// Indices that sort the scores ascending (stable, ties by index).
    pub sort_permutation: Vec<usize>,
}

/// Closed-form maximum of the Hajek estimate over `R ∈ [l, u]^n`.
///
/// Panics if `psi` is empty or `set.l > set.u`.
pub fn worst_case_value(psi: &[f64], set: &UncertaintySet) -> WorstCaseSolution {
    let n = psi.len();
    assert!(n >= 1, "worst_case_value requires at least one score");
    let (l, u) = (set.l, set.u);
    assert!(l <= u, "uncertainty set has l > u: {l} > {u}");

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps tied scores in original-index order, making k_star
    // and the returned ratio vector deterministic under ties.
    order.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]));

    if l == u {
        let value = psi.iter().sum::<f64>() / n as f64;
        return WorstCaseSolution {
            value,
            k_star: 0,
            rn_at_opt: vec![u; n],
            sort_permutation: order,
        };
    }

    // prefix[k] = sum of the k smallest scores.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut running = 0.0;
    for &idx in &order {
        running += psi[idx];
        prefix.push(running);
    }
    let total = running;

    let mut k_star = n;
    let mut value = 0.0;
    for k in 0..=n {
        let lam = (l * prefix[k] + u * (total - prefix[k]))
            / (l * k as f64 + u * (n - k) as f64);
        let next = if k < n { psi[order[k]] } else { f64::INFINITY };
        if lam <= next {
            k_star = k;
            value = lam;
            break;
        }
    }

    let mut rn_at_opt = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        rn_at_opt[idx] = if rank < k_star { l } else { u };
    }

    WorstCaseSolution {
        value,
        k_star,
        rn_at_opt,
        sort_permutation: order,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_collapse_at_gamma_one() {
        let set = bounds(1.0, 0.3).unwrap();
        assert_eq!(set.l, 1.0);
        assert_eq!(set.u, 1.0);
    }

    #[test]
    fn bounds_match_hand_values() {
        let set = bounds(2.0, 0.5).unwrap();
        assert!((set.l - 0.75).abs() < 1e-15);
        assert!((set.u - 1.5).abs() < 1e-15);

        let set = bounds(8.0, 0.5).unwrap();
        assert!((set.l - 0.5625).abs() < 1e-15);
        assert!((set.u - 4.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_bracket_one() {
        for &gamma in &[1.0, 1.5, 3.0, 10.0, 50.0] {
            for &p in &[0.01, 0.2, 0.5, 0.9, 0.99] {
                let set = bounds(gamma, p).unwrap();
                assert!(set.l > 0.0, "l must be positive");
                assert!(set.l <= 1.0 + 1e-15, "l <= 1 failed at gamma={gamma} p={p}");
                assert!(set.u >= 1.0 - 1e-15, "u >= 1 failed at gamma={gamma} p={p}");
            }
        }
    }

    #[test]
    fn bounds_reject_bad_domain() {
        assert!(matches!(
            bounds(0.5, 0.3),
            Err(WorstCaseError::InvalidGamma(_))
        ));
        assert!(matches!(
            bounds(2.0, 0.0),
            Err(WorstCaseError::InvalidSelectionProb(_))
        ));
        assert!(matches!(
            bounds(2.0, 1.0),
            Err(WorstCaseError::InvalidSelectionProb(_))
        ));
        assert!(bounds(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn hajek_uniform_weights_is_mean() {
        let psi = [1.0, 2.0, 6.0];
        let rn = [1.0, 1.0, 1.0];
        assert!((hajek_value(&psi, &rn).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn hajek_hand_value() {
        let v = hajek_value(&[0.0, 1.0], &[0.5, 2.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hajek_concentrates_on_dominant_weight() {
        let v = hajek_value(&[5.0, -3.0, 7.0], &[2.0, 1e-9, 1e-9]).unwrap();
        assert!((v - 5.0).abs() < 1e-7);
    }

    #[test]
    fn hajek_rejects_mismatch_and_zero_weights() {
        assert!(matches!(
            hajek_value(&[1.0], &[1.0, 2.0]),
            Err(WorstCaseError::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            hajek_value(&[1.0], &[0.0]),
            Err(WorstCaseError::NonPositiveWeightSum(_))
        ));
    }

    #[test]
    fn worst_case_two_point_example() {
        let set = UncertaintySet {
            gamma: f64::NAN,
            p_sel: f64::NAN,
            l: 0.5,
            u: 2.0,
        };
        let sol = worst_case_value(&[0.0, 1.0], &set);
        assert_eq!(sol.k_star, 1);
        assert!((sol.value - 0.8).abs() < 1e-15);
        assert_eq!(sol.rn_at_opt, vec![0.5, 2.0]);
    }

    #[test]
    fn worst_case_constant_scores() {
        let set = bounds(5.0, 0.4).unwrap();
        let sol = worst_case_value(&[3.25; 7], &set);
        assert!((sol.value - 3.25).abs() < 1e-12);
        assert_eq!(sol.k_star, 0);
    }

    #[test]
    fn worst_case_singleton_set_is_mean() {
        let set = bounds(1.0, 0.7).unwrap();
        let sol = worst_case_value(&[0.0, 1.0, 5.0], &set);
        assert!((sol.value - 2.0).abs() < 1e-15);
        assert_eq!(sol.k_star, 0);
        assert_eq!(sol.rn_at_opt, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn worst_case_value_consistent_with_hajek_at_optimum() {
        let set = bounds(3.0, 0.35).unwrap();
        let psi = [0.3, -2.0, 4.1, 0.3, -0.7];
        let sol = worst_case_value(&psi, &set);
        let recomputed = hajek_value(&psi, &sol.rn_at_opt).unwrap();
        assert!((sol.value - recomputed).abs() < 1e-12);
    }

    #[test]
    fn worst_case_ties_are_deterministic() {
        let set = bounds(2.0, 0.5).unwrap();
        let psi = [1.0, 0.0, 1.0, 0.0];
        let a = worst_case_value(&psi, &set);
        let b = worst_case_value(&psi, &set);
        assert_eq!(a.sort_permutation, vec![1, 3, 0, 2]);
        assert_eq!(a.sort_permutation, b.sort_permutation);
        assert_eq!(a.rn_at_opt, b.rn_at_opt);
    }

    #[test]
    fn worst_case_upper_weight_on_large_scores() {
        let set = bounds(4.0, 0.25).unwrap();
        let psi = [-3.0, 9.0, 0.5, 2.0];
        let sol = worst_case_value(&psi, &set);
        // Scores above the threshold must carry u, below it l.
        for (rank, &idx) in sol.sort_permutation.iter().enumerate() {
            let expected = if rank < sol.k_star { set.l } else { set.u };
            assert_eq!(sol.rn_at_opt[idx], expected);
        }
        assert!(sol.value >= psi.iter().sum::<f64>() / 4.0);
        assert!(sol.value <= 9.0);
    }
}
